#include "pagg/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "json.hpp"

#include "pagg/error.hpp"

namespace pagg {
namespace {

Eigen::MatrixXd GatherColumns(const LabelledDataset& dataset,
                              std::span<const size_t> indices) {
  Eigen::MatrixXd x(dataset.bits(), static_cast<Eigen::Index>(indices.size()));
  for (size_t c = 0; c < indices.size(); ++c) {
    const auto words = dataset[indices[c]].descriptor.words();
    double* col = x.col(static_cast<Eigen::Index>(c)).data();
    for (size_t w = 0; w < words.size(); ++w) {
      for (int b = 0; b < 64; ++b) col[w * 64 + b] = double((words[w] >> b) & 1u);
    }
  }
  return x;
}

std::vector<uint64_t> LandmarksWithAtLeast(const LabelledDataset& dataset,
                                           size_t n) {
  std::vector<uint64_t> out;
  for (const auto& [id, records] : dataset.by_landmark()) {
    if (records.size() >= n) out.push_back(id);
  }
  return out;
}

size_t UniformIndex(Rng& rng, size_t n) {
  return std::uniform_int_distribution<size_t>(0, n - 1)(rng);
}

// Column layout of an episode batch: class by class, support then query.
std::vector<size_t> EpisodeColumns(const Episode& ep) {
  std::vector<size_t> cols;
  for (size_t c = 0; c < ep.classes.size(); ++c) {
    cols.insert(cols.end(), ep.support[c].begin(), ep.support[c].end());
    cols.insert(cols.end(), ep.query[c].begin(), ep.query[c].end());
  }
  return cols;
}

EpisodeEmbeddings SliceEpisode(const Episode& ep, const Eigen::MatrixXd& e) {
  EpisodeEmbeddings out;
  Eigen::Index col = 0;
  for (size_t c = 0; c < ep.classes.size(); ++c) {
    const auto s = static_cast<Eigen::Index>(ep.support[c].size());
    const auto q = static_cast<Eigen::Index>(ep.query[c].size());
    out.support.push_back(e.middleCols(col, s));
    out.query.push_back(e.middleCols(col + s, q));
    col += s + q;
  }
  return out;
}

Eigen::MatrixXd StackEpisode(const EpisodeEmbeddings& parts, Eigen::Index rows,
                             Eigen::Index cols) {
  Eigen::MatrixXd out(rows, cols);
  Eigen::Index col = 0;
  for (size_t c = 0; c < parts.support.size(); ++c) {
    out.middleCols(col, parts.support[c].cols()) = parts.support[c];
    col += parts.support[c].cols();
    out.middleCols(col, parts.query[c].cols()) = parts.query[c];
    col += parts.query[c].cols();
  }
  return out;
}

}  // namespace

std::vector<Triplet> SampleTriplets(const LabelledDataset& dataset,
                                    size_t count, Rng& rng) {
  const auto eligible = LandmarksWithAtLeast(dataset, 2);
  if (eligible.size() < 2) {
    throw std::invalid_argument(
        "triplet sampling needs at least 2 landmarks with >= 2 observations, "
        "found " + std::to_string(eligible.size()));
  }
  std::vector<uint64_t> all;
  all.reserve(dataset.num_landmarks());
  for (const auto& [id, _] : dataset.by_landmark()) all.push_back(id);

  std::vector<Triplet> out;
  out.reserve(count);
  for (size_t t = 0; t < count; ++t) {
    const uint64_t lm = eligible[UniformIndex(rng, eligible.size())];
    const auto& obs = dataset.by_landmark().at(lm);
    const size_t a = UniformIndex(rng, obs.size());
    size_t p = UniformIndex(rng, obs.size() - 1);
    if (p >= a) ++p;
    // Uniform over the other landmarks: draw from all but one slot.
    const size_t lm_pos =
        std::lower_bound(all.begin(), all.end(), lm) - all.begin();
    size_t neg_pos = UniformIndex(rng, all.size() - 1);
    if (neg_pos >= lm_pos) ++neg_pos;
    const auto& neg_obs = dataset.by_landmark().at(all[neg_pos]);
    out.push_back({obs[a], obs[p], neg_obs[UniformIndex(rng, neg_obs.size())]});
  }
  return out;
}

double TripletLoss(const Eigen::VectorXd& ea, const Eigen::VectorXd& ep,
                   const Eigen::VectorXd& en, double margin) {
  if (ea.size() != ep.size() || ea.size() != en.size()) {
    throw std::invalid_argument("triplet loss: embedding dimension mismatch");
  }
  return std::max((ea - ep).norm() - (ea - en).norm() + margin, 0.0);
}

BatchLoss TripletBatchLoss(const Eigen::MatrixXd& embeddings, double margin) {
  if (embeddings.cols() == 0 || embeddings.cols() % 3 != 0) {
    throw std::invalid_argument(
        "triplet batch must have 3N columns [anchors | positives | negatives]");
  }
  const Eigen::Index n = embeddings.cols() / 3;
  BatchLoss out;
  out.grad = Eigen::MatrixXd::Zero(embeddings.rows(), embeddings.cols());
  const double inv_n = 1.0 / double(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto a = embeddings.col(i);
    const Eigen::VectorXd to_pos = a - embeddings.col(n + i);
    const Eigen::VectorXd to_neg = a - embeddings.col(2 * n + i);
    const double dp = to_pos.norm();
    const double dn = to_neg.norm();
    const double violation = dp - dn + margin;
    if (violation <= 0.0) continue;
    out.loss += violation;
    // The norm is not differentiable at 0; use the zero subgradient there.
    const Eigen::VectorXd up = dp > 0.0 ? Eigen::VectorXd(to_pos / dp)
                                        : Eigen::VectorXd::Zero(a.size());
    const Eigen::VectorXd un = dn > 0.0 ? Eigen::VectorXd(to_neg / dn)
                                        : Eigen::VectorXd::Zero(a.size());
    out.grad.col(i) += inv_n * (up - un);
    out.grad.col(n + i) -= inv_n * up;
    out.grad.col(2 * n + i) += inv_n * un;
  }
  out.loss *= inv_n;
  return out;
}

Episode SampleEpisode(const LabelledDataset& dataset, int classes_per_episode,
                      int support_per_class, int query_per_class, Rng& rng) {
  if (classes_per_episode < 1 || support_per_class < 1 || query_per_class < 1) {
    throw std::invalid_argument("episode shape parameters must be >= 1");
  }
  auto eligible = LandmarksWithAtLeast(dataset, 2);
  if (eligible.empty()) {
    throw std::invalid_argument(
        "episode sampling needs a landmark with >= 2 observations");
  }
  const size_t n_classes =
      std::min(eligible.size(), static_cast<size_t>(classes_per_episode));
  for (size_t i = 0; i < n_classes; ++i) {
    std::swap(eligible[i], eligible[i + UniformIndex(rng, eligible.size() - i)]);
  }
  Episode ep;
  for (size_t c = 0; c < n_classes; ++c) {
    auto obs = dataset.by_landmark().at(eligible[c]);
    std::shuffle(obs.begin(), obs.end(), rng);
    const size_t m = std::min(obs.size(), size_t(support_per_class + query_per_class));
    const size_t s = std::min(size_t(support_per_class), m - 1);
    const size_t q = std::min(size_t(query_per_class), m - s);
    ep.classes.push_back(eligible[c]);
    ep.support.emplace_back(obs.begin(), obs.begin() + s);
    ep.query.emplace_back(obs.begin() + s, obs.begin() + s + q);
  }
  return ep;
}

EpisodeLoss PrototypicalLoss(const EpisodeEmbeddings& e, DistanceKind distance) {
  const size_t n_classes = e.support.size();
  if (n_classes == 0 || e.query.size() != n_classes) {
    throw std::invalid_argument("episode must have matching support/query classes");
  }
  const Eigen::Index dim = e.support.front().rows();
  Eigen::MatrixXd centroids(dim, static_cast<Eigen::Index>(n_classes));
  Eigen::Index total_queries = 0;
  for (size_t c = 0; c < n_classes; ++c) {
    if (e.support[c].cols() == 0) {
      throw std::invalid_argument("class " + std::to_string(c) +
                                  " has an empty support set");
    }
    if (e.support[c].rows() != dim || e.query[c].rows() != dim) {
      throw std::invalid_argument("episode embedding dimension mismatch");
    }
    centroids.col(static_cast<Eigen::Index>(c)) = e.support[c].rowwise().mean();
    total_queries += e.query[c].cols();
  }
  if (total_queries == 0) {
    throw std::invalid_argument("episode has no query points");
  }

  EpisodeLoss out;
  Eigen::MatrixXd centroid_grad = Eigen::MatrixXd::Zero(dim, centroids.cols());
  const double inv_q = 1.0 / double(total_queries);
  Eigen::VectorXd logits(static_cast<Eigen::Index>(n_classes));
  Eigen::MatrixXd diff(dim, centroids.cols());
  Eigen::VectorXd dist(static_cast<Eigen::Index>(n_classes));
  for (size_t y = 0; y < n_classes; ++y) {
    out.grad.query.push_back(Eigen::MatrixXd::Zero(dim, e.query[y].cols()));
    for (Eigen::Index qi = 0; qi < e.query[y].cols(); ++qi) {
      const auto q = e.query[y].col(qi);
      diff = (-centroids).colwise() + q;  // q - c_k
      for (Eigen::Index k = 0; k < centroids.cols(); ++k) {
        const double sq = diff.col(k).squaredNorm();
        dist[k] = distance == DistanceKind::kSquaredEuclidean ? sq : std::sqrt(sq);
      }
      logits = -dist;
      const double max_logit = logits.maxCoeff();
      const Eigen::VectorXd shifted = (logits.array() - max_logit).exp().matrix();
      const double z = shifted.sum();
      out.loss += -(logits[Eigen::Index(y)] - max_logit - std::log(z));

      // dL/dlogit_k = (p_k - [k == y]) / Q, and dlogit_k/dq = -dd_k/dq.
      Eigen::VectorXd g = shifted / z;
      g[Eigen::Index(y)] -= 1.0;
      g *= inv_q;
      for (Eigen::Index k = 0; k < centroids.cols(); ++k) {
        Eigen::VectorXd dd_dq;
        if (distance == DistanceKind::kSquaredEuclidean) {
          dd_dq = 2.0 * diff.col(k);
        } else {
          dd_dq = dist[k] > 0.0 ? Eigen::VectorXd(diff.col(k) / dist[k])
                                : Eigen::VectorXd::Zero(dim);
        }
        out.grad.query[y].col(qi) -= g[k] * dd_dq;
        centroid_grad.col(k) += g[k] * dd_dq;
      }
    }
  }
  out.loss *= inv_q;
  for (size_t c = 0; c < n_classes; ++c) {
    const auto s = e.support[c].cols();
    out.grad.support.push_back(
        (centroid_grad.col(static_cast<Eigen::Index>(c)) / double(s)).replicate(1, s));
  }
  return out;
}

double PrototypicalEpisodeLoss(const EmbeddingNetwork& net,
                               const LabelledDataset& dataset,
                               const Episode& episode, DistanceKind distance) {
  const auto cols = EpisodeColumns(episode);
  const Eigen::MatrixXd emb = net.ForwardBatch(GatherColumns(dataset, cols));
  return PrototypicalLoss(SliceEpisode(episode, emb), distance).loss;
}

std::string_view ToString(LossKind kind) {
  return kind == LossKind::kTriplet ? "triplet" : "prototypical";
}

LossKind ParseLossKind(std::string_view name) {
  if (name == "triplet") return LossKind::kTriplet;
  if (name == "prototypical") return LossKind::kPrototypical;
  throw std::invalid_argument("unknown loss '" + std::string(name) + "'");
}

void TrainConfig::Validate() const {
  if (!(margin > 0.0)) throw ConfigError("margin must be > 0");
  if (!(lr_factor > 0.0 && lr_factor < 1.0)) {
    throw ConfigError("lr_factor must lie in (0, 1)");
  }
  if (!(initial_lr > 0.0)) throw ConfigError("initial_lr must be > 0");
  if (!(min_lr >= 0.0)) throw ConfigError("min_lr must be >= 0");
  if (classes_per_episode < 1) throw ConfigError("classes_per_episode must be >= 1");
  if (support_per_class < 1) throw ConfigError("support_per_class must be >= 1");
  if (query_per_class < 1) throw ConfigError("query_per_class must be >= 1");
  if (plateau_patience < 1) throw ConfigError("plateau_patience must be >= 1");
  if (max_epochs < 0) throw ConfigError("max_epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (steps_per_epoch < 0) throw ConfigError("steps_per_epoch must be >= 0");
  if (validation_triplets < 1) throw ConfigError("validation_triplets must be >= 1");
  if (validation_episodes < 1) throw ConfigError("validation_episodes must be >= 1");
}

TrainResult Train(const LabelledDataset& train, const LabelledDataset& val,
                  const MlpArchitecture& arch, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.Validate();
  arch.Validate();
  if (train.empty()) throw std::invalid_argument("training dataset is empty");
  if (arch.input_dim != train.bits() || arch.input_dim != val.bits()) {
    throw std::invalid_argument("network input width " +
                                std::to_string(arch.input_dim) +
                                " does not match descriptor width");
  }

  Rng sample_rng(DeriveSeed(cfg.seed, "train-sampling"));
  Rng val_rng(DeriveSeed(cfg.seed, "validation"));
  EmbeddingNetwork net = InitNetwork(arch, DeriveSeed(cfg.seed, "init"));

  // Validation items are sampled once so losses are comparable across epochs.
  std::vector<Triplet> val_triplets;
  std::vector<Episode> val_episodes;
  if (cfg.loss == LossKind::kTriplet) {
    val_triplets = SampleTriplets(val, size_t(cfg.validation_triplets), val_rng);
  } else {
    for (int i = 0; i < cfg.validation_episodes; ++i) {
      val_episodes.push_back(SampleEpisode(val, cfg.classes_per_episode,
                                           cfg.support_per_class,
                                           cfg.query_per_class, val_rng));
    }
  }
  auto validation_loss = [&](const EmbeddingNetwork& model) {
    if (cfg.loss == LossKind::kTriplet) {
      constexpr size_t kChunk = 512;
      double total = 0.0;
      for (size_t begin = 0; begin < val_triplets.size(); begin += kChunk) {
        const size_t end = std::min(val_triplets.size(), begin + kChunk);
        std::vector<size_t> cols;
        for (int role = 0; role < 3; ++role) {
          for (size_t t = begin; t < end; ++t) {
            const auto& tr = val_triplets[t];
            cols.push_back(role == 0 ? tr.anchor
                                     : role == 1 ? tr.positive : tr.negative);
          }
        }
        const auto emb = model.ForwardBatch(GatherColumns(val, cols));
        total += TripletBatchLoss(emb, cfg.margin).loss * double(end - begin);
      }
      return total / double(val_triplets.size());
    }
    double total = 0.0;
    for (const auto& ep : val_episodes) {
      total += PrototypicalEpisodeLoss(model, val, ep, cfg.distance);
    }
    return total / double(val_episodes.size());
  };

  TrainResult result;
  result.initial_val_loss = validation_loss(net);
  result.best_val_loss = result.initial_val_loss;
  result.network = net;
  if (!std::isfinite(result.initial_val_loss)) {
    throw NumericError("validation loss of the initial network is not finite");
  }

  const int steps = cfg.steps_per_epoch > 0
                        ? cfg.steps_per_epoch
                        : std::max<int>(1, int(train.size() / size_t(cfg.batch_size)));
  AdamState adam = AdamState::For(net.layers(), cfg.initial_lr);
  int reductions = 0;
  int since_best = 0;
  ForwardTrace trace;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const double lr = cfg.initial_lr * std::pow(cfg.lr_factor, reductions);
    adam.lr = lr;
    double loss_sum = 0.0;
    for (int step = 0; step < steps; ++step) {
      double loss = 0.0;
      LayerParams grads;
      if (cfg.loss == LossKind::kTriplet) {
        const auto triplets = SampleTriplets(train, size_t(cfg.batch_size), sample_rng);
        std::vector<size_t> cols;
        cols.reserve(triplets.size() * 3);
        for (const auto& t : triplets) cols.push_back(t.anchor);
        for (const auto& t : triplets) cols.push_back(t.positive);
        for (const auto& t : triplets) cols.push_back(t.negative);
        const auto emb = net.ForwardBatch(GatherColumns(train, cols), &trace);
        const BatchLoss bl = TripletBatchLoss(emb, cfg.margin);
        loss = bl.loss;
        grads = net.Backward(trace, bl.grad);
      } else {
        const Episode ep =
            SampleEpisode(train, cfg.classes_per_episode, cfg.support_per_class,
                          cfg.query_per_class, sample_rng);
        const auto cols = EpisodeColumns(ep);
        const auto emb = net.ForwardBatch(GatherColumns(train, cols), &trace);
        const EpisodeLoss el = PrototypicalLoss(SliceEpisode(ep, emb), cfg.distance);
        loss = el.loss;
        grads = net.Backward(trace, StackEpisode(el.grad, emb.rows(), emb.cols()));
      }
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite training loss at epoch " +
                           std::to_string(epoch) + ", step " +
                           std::to_string(step) + " (lr " + std::to_string(lr) + ")");
      }
      AdamStep(net.mutable_layers(), grads, adam);
      if (!net.AllFinite()) {
        throw NumericError("non-finite network parameters after epoch " +
                           std::to_string(epoch) + ", step " + std::to_string(step));
      }
      loss_sum += loss;
    }

    EpochRecord record{epoch, loss_sum / steps, validation_loss(net), lr};
    if (!std::isfinite(record.val_loss)) {
      throw NumericError("non-finite validation loss at epoch " +
                         std::to_string(epoch));
    }
    result.log.push_back(record);
    if (on_epoch) on_epoch(record);

    if (record.val_loss < result.best_val_loss) {
      result.best_val_loss = record.val_loss;
      result.best_epoch = epoch;
      result.network = net;
      since_best = 0;
    } else if (++since_best >= cfg.plateau_patience) {
      ++reductions;
      since_best = 0;
      if (cfg.initial_lr * std::pow(cfg.lr_factor, reductions) < cfg.min_lr) break;
    }
  }
  return result;
}

std::string FormatEpochRecord(const EpochRecord& record) {
  nlohmann::ordered_json j;
  j["epoch"] = record.epoch;
  j["train_loss"] = record.train_loss;
  j["val_loss"] = record.val_loss;
  j["lr"] = record.lr;
  return j.dump();
}

}  // namespace pagg
