#ifndef PAGG_TRAINING_HPP
#define PAGG_TRAINING_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "pagg/dataset.hpp"
#include "pagg/network.hpp"
#include "pagg/rng.hpp"

namespace pagg {

// Record indices into a LabelledDataset. anchor and positive share a landmark
// and are distinct records; negative belongs to a different landmark.
struct Triplet {
  size_t anchor = 0;
  size_t positive = 0;
  size_t negative = 0;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

// Anchors are drawn uniformly over landmarks with >= 2 observations, then
// uniformly over that landmark's observations. Throws std::invalid_argument
// when fewer than two such landmarks exist.
std::vector<Triplet> SampleTriplets(const LabelledDataset& dataset,
                                    size_t count, Rng& rng);

// max(|ea - ep| - |ea - en| + margin, 0).
double TripletLoss(const Eigen::VectorXd& ea, const Eigen::VectorXd& ep,
                   const Eigen::VectorXd& en, double margin);

struct BatchLoss {
  double loss = 0.0;
  Eigen::MatrixXd grad;  // d loss / d embeddings, same shape as the input
};

// Mean triplet loss over a batch laid out as [anchors | positives | negatives]
// (3N columns), with its gradient.
BatchLoss TripletBatchLoss(const Eigen::MatrixXd& embeddings, double margin);

enum class DistanceKind { kSquaredEuclidean, kEuclidean };

struct Episode {
  std::vector<uint64_t> classes;
  std::vector<std::vector<size_t>> support;  // per class, record indices
  std::vector<std::vector<size_t>> query;
};

// Chooses min(classes_per_episode, eligible) landmarks with >= 2
// observations. Per class the support/query sizes are truncated to what the
// landmark holds while keeping at least one of each.
Episode SampleEpisode(const LabelledDataset& dataset, int classes_per_episode,
                      int support_per_class, int query_per_class, Rng& rng);

struct EpisodeEmbeddings {
  std::vector<Eigen::MatrixXd> support;  // per class, k x |S_c|
  std::vector<Eigen::MatrixXd> query;    // per class, k x |Q_c|
};

struct EpisodeLoss {
  double loss = 0.0;
  EpisodeEmbeddings grad;
};

// Mean negative log-probability of the true class over all query points, with
// class probabilities given by a softmax over negative distances to the
// per-class support means.
EpisodeLoss PrototypicalLoss(const EpisodeEmbeddings& embeddings,
                             DistanceKind distance);

double PrototypicalEpisodeLoss(const EmbeddingNetwork& net,
                               const LabelledDataset& dataset,
                               const Episode& episode, DistanceKind distance);

enum class LossKind { kTriplet, kPrototypical };

std::string_view ToString(LossKind kind);
LossKind ParseLossKind(std::string_view name);

struct TrainConfig {
  LossKind loss = LossKind::kTriplet;
  double margin = 0.5;
  int classes_per_episode = 32;
  int support_per_class = 5;
  int query_per_class = 5;
  DistanceKind distance = DistanceKind::kSquaredEuclidean;

  double initial_lr = 1e-3;
  double lr_factor = 0.1;
  double min_lr = 1e-6;
  int plateau_patience = 10;
  int max_epochs = 100;
  int batch_size = 256;
  // Optimizer steps per epoch; 0 means max(1, dataset size / batch size).
  int steps_per_epoch = 0;
  int validation_triplets = 1024;
  int validation_episodes = 8;
  uint64_t seed = 1;

  // Throws ConfigError naming the offending field.
  void Validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  EmbeddingNetwork network;  // best validation loss seen
  std::vector<EpochRecord> log;
  int best_epoch = 0;        // 0 = the initial network
  double best_val_loss = 0.0;
  double initial_val_loss = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mini-batch Adam training with reduce-on-plateau learning rate: after
// `plateau_patience` epochs without a new best validation loss the rate is
// multiplied by `lr_factor`; training stops after `max_epochs` or once the
// rate drops below `min_lr`. Throws NumericError on a non-finite loss.
TrainResult Train(const LabelledDataset& train, const LabelledDataset& val,
                  const MlpArchitecture& arch, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

// One JSON object per line.
std::string FormatEpochRecord(const EpochRecord& record);

}  // namespace pagg

#endif  // PAGG_TRAINING_HPP
