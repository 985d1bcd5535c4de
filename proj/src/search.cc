#include "pagg/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unordered_set>

namespace pagg {
namespace {

void CheckUniqueIds(std::span<const uint64_t> ids) {
  std::unordered_set<uint64_t> seen;
  seen.reserve(ids.size());
  for (uint64_t id : ids) {
    if (!seen.insert(id).second) {
      throw std::invalid_argument("duplicate item id " + std::to_string(id));
    }
  }
}

// (squared distance, id) ordering used everywhere for tie-breaking.
bool Better(double d2, uint64_t id, double best_d2, uint64_t best_id) {
  return d2 < best_d2 || (d2 == best_d2 && id < best_id);
}

}  // namespace

ExactEuclideanIndex::ExactEuclideanIndex(Eigen::MatrixXd items,
                                         std::vector<uint64_t> ids)
    : items_(std::move(items)), ids_(std::move(ids)) {
  if (static_cast<size_t>(items_.cols()) != ids_.size()) {
    throw std::invalid_argument("item count does not match id count");
  }
  CheckUniqueIds(ids_);
}

Neighbor ExactEuclideanIndex::Nearest(
    const Eigen::Ref<const Eigen::VectorXd>& query) const {
  if (ids_.empty()) throw std::invalid_argument("nearest neighbour in an empty index");
  if (query.size() != items_.rows()) {
    throw std::invalid_argument("query dimension " + std::to_string(query.size()) +
                                " != index dimension " +
                                std::to_string(items_.rows()));
  }
  double best_d2 = std::numeric_limits<double>::infinity();
  uint64_t best_id = std::numeric_limits<uint64_t>::max();
  for (Eigen::Index i = 0; i < items_.cols(); ++i) {
    const double d2 = (items_.col(i) - query).squaredNorm();
    if (Better(d2, ids_[i], best_d2, best_id)) {
      best_d2 = d2;
      best_id = ids_[i];
    }
  }
  return {best_id, std::sqrt(best_d2)};
}

ExactHammingIndex::ExactHammingIndex(std::vector<BinaryDescriptor> items,
                                     std::vector<uint64_t> ids)
    : ids_(std::move(ids)) {
  if (items.size() != ids_.size()) {
    throw std::invalid_argument("item count does not match id count");
  }
  CheckUniqueIds(ids_);
  if (items.empty()) return;
  bits_ = items.front().bits();
  words_ = bits_ / 64;
  packed_.reserve(items.size() * size_t(words_));
  for (const auto& d : items) {
    if (d.bits() != bits_) throw std::invalid_argument("mixed descriptor widths");
    packed_.insert(packed_.end(), d.words().begin(), d.words().end());
  }
}

Neighbor ExactHammingIndex::Nearest(const BinaryDescriptor& query) const {
  if (ids_.empty()) throw std::invalid_argument("nearest neighbour in an empty index");
  if (query.bits() != bits_) {
    throw std::invalid_argument("query width " + std::to_string(query.bits()) +
                                " != index width " + std::to_string(bits_));
  }
  const auto q = query.words();
  int best = std::numeric_limits<int>::max();
  uint64_t best_id = std::numeric_limits<uint64_t>::max();
  for (size_t i = 0; i < ids_.size(); ++i) {
    const uint64_t* item = packed_.data() + i * size_t(words_);
    int d = 0;
    for (int w = 0; w < words_; ++w) d += std::popcount(item[w] ^ q[w]);
    if (d < best || (d == best && ids_[i] < best_id)) {
      best = d;
      best_id = ids_[i];
    }
  }
  return {best_id, double(best)};
}

Neighbor NearestEuclidean(const Eigen::VectorXd& query,
                          const Eigen::MatrixXd& items,
                          std::span<const uint64_t> ids) {
  return ExactEuclideanIndex(items, {ids.begin(), ids.end()}).Nearest(query);
}

Neighbor NearestHamming(const BinaryDescriptor& query,
                        std::span<const BinaryDescriptor> items,
                        std::span<const uint64_t> ids) {
  return ExactHammingIndex({items.begin(), items.end()}, {ids.begin(), ids.end()})
      .Nearest(query);
}

ApproxEuclideanIndex::ApproxEuclideanIndex(Eigen::MatrixXd items,
                                           std::vector<uint64_t> ids,
                                           const AnnParams& params)
    : exact_(std::move(items), std::move(ids)), params_(params) {
  if (params_.num_trees < 1 || params_.leaf_size < 1 || params_.checked_leaves < 1) {
    throw std::invalid_argument("ANN parameters must be positive");
  }
  if (exact_.size() == 0) throw std::invalid_argument("cannot index zero items");
  Rng rng(params_.seed);
  const int n = static_cast<int>(exact_.size());
  trees_.resize(static_cast<size_t>(params_.num_trees));
  for (auto& tree : trees_) {
    tree.order.resize(static_cast<size_t>(n));
    std::iota(tree.order.begin(), tree.order.end(), 0);
    Build(tree, 0, n, rng);
    tree.leaf_items.resize(exact_.dim(), n);
    for (int i = 0; i < n; ++i) {
      tree.leaf_items.col(i) = exact_.items().col(tree.order[size_t(i)]);
    }
  }
}

int ApproxEuclideanIndex::Build(Tree& tree, int begin, int end, Rng& rng) {
  const int node_id = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back(Node{-1, 0.0, -1, -1, begin, end});
  if (end - begin <= params_.leaf_size) return node_id;

  // Mean and variance from (at most) the first 100 items of the range.
  const Eigen::MatrixXd& items = exact_.items();
  const int dim = exact_.dim();
  const int sample = std::min(end - begin, 100);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
  for (int i = 0; i < sample; ++i) mean += items.col(tree.order[size_t(begin + i)]);
  mean /= double(sample);
  Eigen::VectorXd var = Eigen::VectorXd::Zero(dim);
  for (int i = 0; i < sample; ++i) {
    var += (items.col(tree.order[size_t(begin + i)]) - mean).cwiseAbs2();
  }

  constexpr int kTopDims = 5;
  std::vector<int> dims(static_cast<size_t>(dim));
  std::iota(dims.begin(), dims.end(), 0);
  const int top = std::min(kTopDims, dim);
  std::partial_sort(dims.begin(), dims.begin() + top, dims.end(),
                    [&](int a, int b) { return var[a] > var[b] || (var[a] == var[b] && a < b); });
  int candidates = 0;
  while (candidates < top && var[dims[size_t(candidates)]] > 0.0) ++candidates;
  if (candidates == 0) return node_id;  // identical sample: keep as a leaf
  const int split_dim =
      dims[std::uniform_int_distribution<size_t>(0, size_t(candidates) - 1)(rng)];
  const double split_value = mean[split_dim];

  auto first = tree.order.begin() + begin;
  auto last = tree.order.begin() + end;
  auto mid = std::stable_partition(first, last, [&](int pos) {
    return items(split_dim, pos) < split_value;
  });
  if (mid == first || mid == last) return node_id;

  const int split = static_cast<int>(mid - tree.order.begin());
  const int left = Build(tree, begin, split, rng);
  const int right = Build(tree, split, end, rng);
  Node& node = tree.nodes[size_t(node_id)];
  node.split_dim = split_dim;
  node.split_value = split_value;
  node.left = left;
  node.right = right;
  return node_id;
}

Neighbor ApproxEuclideanIndex::Nearest(
    const Eigen::Ref<const Eigen::VectorXd>& query) const {
  return Nearest(query, params_.checked_leaves);
}

Neighbor ApproxEuclideanIndex::Nearest(
    const Eigen::Ref<const Eigen::VectorXd>& query, int checked_leaves) const {
  if (query.size() != exact_.dim()) {
    throw std::invalid_argument("query dimension " + std::to_string(query.size()) +
                                " != index dimension " + std::to_string(exact_.dim()));
  }
  if (checked_leaves >= static_cast<int>(exact_.size())) return exact_.Nearest(query);

  // Best-bin-first over all trees. A branch's bound is the squared distance
  // from the query to its cell, kept incrementally from the per-dimension
  // offsets along the path (`offsets`, dim values per entry).
  struct Branch {
    double bound;
    uint32_t tree_node;  // tree in the top 8 bits, node below
    uint32_t slot;
    bool operator>(const Branch& o) const { return bound > o.bound; }
  };
  struct Scratch {
    std::vector<Branch> heap;
    std::vector<float> offsets;
  };
  thread_local Scratch scratch;
  const int dim = exact_.dim();
  auto& heap = scratch.heap;
  auto& offsets = scratch.offsets;
  heap.clear();
  offsets.clear();
  const std::greater<> later;
  for (uint32_t t = 0; t < trees_.size(); ++t) {
    heap.push_back({0.0, t << 24, static_cast<uint32_t>(offsets.size())});
    offsets.resize(offsets.size() + size_t(dim), 0.0f);
  }
  std::make_heap(heap.begin(), heap.end(), later);

  const double* q = query.data();
  const auto& ids = exact_.ids();
  double best_d2 = std::numeric_limits<double>::infinity();
  uint64_t best_id = std::numeric_limits<uint64_t>::max();
  int checked = 0;
  while (!heap.empty() && checked < checked_leaves) {
    std::pop_heap(heap.begin(), heap.end(), later);
    const Branch top = heap.back();
    heap.pop_back();
    if (top.bound > best_d2) break;  // every remaining cell is at least as far
    const uint32_t t = top.tree_node >> 24;
    const Tree& tree = trees_[t];
    const Node* node = &tree.nodes[top.tree_node & 0xffffff];
    while (node->split_dim >= 0) {
      const int d = node->split_dim;
      const double diff = q[d] - node->split_value;
      const int near = diff < 0.0 ? node->left : node->right;
      const int far = diff < 0.0 ? node->right : node->left;
      const double old = offsets[top.slot + size_t(d)];
      const double far_bound = top.bound - old * old + diff * diff;
      if (far_bound <= best_d2) {
        const size_t slot = offsets.size();
        offsets.resize(slot + size_t(dim));
        std::copy_n(offsets.begin() + std::ptrdiff_t(top.slot), dim,
                    offsets.begin() + std::ptrdiff_t(slot));
        offsets[slot + size_t(d)] = static_cast<float>(std::abs(diff));
        heap.push_back({far_bound, t << 24 | uint32_t(far), uint32_t(slot)});
        std::push_heap(heap.begin(), heap.end(), later);
      }
      node = &tree.nodes[size_t(near)];
    }
    ++checked;
    // Items are stored in leaf order, so a leaf is one contiguous block.
    // Rescoring an item seen in another tree is harmless: it cannot beat itself.
    for (int i = node->begin; i < node->end; ++i) {
      const double d2 = (tree.leaf_items.col(i) - query).squaredNorm();
      if (d2 <= best_d2) {
        const uint64_t id = ids[size_t(tree.order[size_t(i)])];
        if (Better(d2, id, best_d2, best_id)) {
          best_d2 = d2;
          best_id = id;
        }
      }
    }
  }
  return {best_id, std::sqrt(best_d2)};
}

}  // namespace pagg
