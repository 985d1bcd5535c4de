#ifndef PAGG_SEARCH_HPP
#define PAGG_SEARCH_HPP

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "pagg/descriptor.hpp"
#include "pagg/rng.hpp"

namespace pagg {

struct Neighbor {
  uint64_t id = 0;
  double distance = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

// Full-scan Euclidean nearest neighbour over id-labelled vectors. Ties are
// broken by the smallest id. Immutable after construction, so concurrent
// queries are safe.
class ExactEuclideanIndex {
 public:
  // items: dim x n, one item per column. Throws std::invalid_argument on
  // duplicate ids or a size mismatch.
  ExactEuclideanIndex(Eigen::MatrixXd items, std::vector<uint64_t> ids);

  size_t size() const { return ids_.size(); }
  int dim() const { return static_cast<int>(items_.rows()); }
  const Eigen::MatrixXd& items() const { return items_; }
  const std::vector<uint64_t>& ids() const { return ids_; }

  // Throws std::invalid_argument on a dimension mismatch or an empty index.
  Neighbor Nearest(const Eigen::Ref<const Eigen::VectorXd>& query) const;

 private:
  Eigen::MatrixXd items_;
  std::vector<uint64_t> ids_;
};

class ExactHammingIndex {
 public:
  ExactHammingIndex(std::vector<BinaryDescriptor> items,
                    std::vector<uint64_t> ids);

  size_t size() const { return ids_.size(); }
  int bits() const { return bits_; }

  Neighbor Nearest(const BinaryDescriptor& query) const;

 private:
  int bits_ = 0;
  int words_ = 0;
  std::vector<uint64_t> packed_;  // item-major words
  std::vector<uint64_t> ids_;
};

Neighbor NearestEuclidean(const Eigen::VectorXd& query,
                          const Eigen::MatrixXd& items,
                          std::span<const uint64_t> ids);
Neighbor NearestHamming(const BinaryDescriptor& query,
                        std::span<const BinaryDescriptor> items,
                        std::span<const uint64_t> ids);

struct AnnParams {
  int num_trees = 4;
  int leaf_size = 16;
  // Leaves examined per query across all trees.
  int checked_leaves = 64;
  uint64_t seed = 0x5eed;
};

// Forest of randomized kd-trees searched best-bin-first through one priority
// queue shared by all trees. Each split uses a dimension drawn at random from
// the highest-variance ones and splits at the mean. A query examines up to
// `checked_leaves` leaves; a budget at least as large as the item count
// falls back to the exact scan.
class ApproxEuclideanIndex {
 public:
  ApproxEuclideanIndex(Eigen::MatrixXd items, std::vector<uint64_t> ids,
                       const AnnParams& params = {});

  size_t size() const { return exact_.size(); }
  int dim() const { return exact_.dim(); }
  const AnnParams& params() const { return params_; }

  Neighbor Nearest(const Eigen::Ref<const Eigen::VectorXd>& query) const;
  // Same search with a per-call leaf budget.
  Neighbor Nearest(const Eigen::Ref<const Eigen::VectorXd>& query,
                   int checked_leaves) const;

 private:
  struct Node {
    int split_dim = -1;  // -1 for a leaf
    double split_value = 0.0;
    int left = -1;
    int right = -1;
    int begin = 0;  // leaf item range into the tree's order
    int end = 0;
  };
  struct Tree {
    std::vector<Node> nodes;
    std::vector<int> order;       // item positions in leaf order
    Eigen::MatrixXd leaf_items;   // items permuted into leaf order
  };

  int Build(Tree& tree, int begin, int end, Rng& rng);

  ExactEuclideanIndex exact_;
  AnnParams params_;
  std::vector<Tree> trees_;
};

}  // namespace pagg

#endif  // PAGG_SEARCH_HPP
