#ifndef PAGG_EVAL_HPP
#define PAGG_EVAL_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pagg/dataset.hpp"
#include "pagg/network.hpp"
#include "pagg/search.hpp"
#include "pagg/training.hpp"

namespace pagg {

enum class MethodKind {
  kUnaggregated,         // every raw support descriptor, Hamming
  kEmbeddingPrototypes,  // mean embedding per landmark, Euclidean
  kQuantizedMean,        // per-bit majority per landmark, Hamming
  kPcaMean,              // mean PCA projection per landmark, Euclidean
  kRandomSample,         // one random descriptor per landmark, Hamming
};

struct Method {
  MethodKind kind = MethodKind::kUnaggregated;
  std::string name;
  const EmbeddingNetwork* network = nullptr;  // kEmbeddingPrototypes only
  int pca_dim = 16;

  static Method Unaggregated();
  static Method Prototypes(const EmbeddingNetwork& network);
  static Method QuantizedMean();
  static Method PcaMean(int dim = 16);
  static Method RandomSample();
};

struct EvalConfig {
  double support_fraction = 0.9;
  size_t num_query_samples = 10000;
  uint64_t seed = 1;
  // Approximate index for the real-valued methods instead of the exact scan.
  bool use_ann = false;
  AnnParams ann;
  // PCA is fit on at most this many support descriptors.
  size_t pca_fit_samples = 100000;
  int threads = 1;

  // Throws ConfigError naming the offending field.
  void Validate() const;

  uint64_t split_seed() const;
  uint64_t sample_seed() const;
};

struct MethodResult {
  std::string method;
  double precision = 0.0;
  size_t correct = 0;
  size_t attempted = 0;
  size_t units = 0;  // matching units built from the support set
  double bytes_per_landmark = 0.0;
  double build_ms = 0.0;
  double query_us = 0.0;  // mean per query
};

struct EvalReport {
  std::vector<MethodResult> rows;
  uint64_t eval_seed = 0;
  uint64_t split_seed = 0;
  uint64_t sample_seed = 0;
  size_t support_records = 0;
  size_t query_records = 0;
  size_t support_landmarks = 0;
  size_t eligible_queries = 0;
  bool ann = false;
};

// Query records whose landmark has at least one support observation.
std::vector<size_t> EligibleQueries(const LabelledDataset& support,
                                    const LabelledDataset& query);

// Up to `count` eligible query records drawn uniformly without replacement
// (all of them when fewer are eligible), in increasing index order. Throws
// std::invalid_argument when nothing is eligible.
std::vector<size_t> SampleQueries(const LabelledDataset& support,
                                  const LabelledDataset& query, size_t count,
                                  uint64_t seed);

// Builds one matching unit per support landmark (one per support descriptor
// for the unaggregated reference) and counts the sampled queries whose
// nearest unit belongs to their own landmark.
MethodResult EvaluateMethod(const Method& method, const LabelledDataset& support,
                            const LabelledDataset& query,
                            std::span<const size_t> sample,
                            const EvalConfig& cfg);
MethodResult EvaluateMethod(const Method& method, const LabelledDataset& support,
                            const LabelledDataset& query, const EvalConfig& cfg);

// Unaggregated, one prototype row per network (largest output first),
// quantized mean, PCA-16 mean and random sample, all on one shared query
// sample.
EvalReport BenchmarkTable(const LabelledDataset& support,
                          const LabelledDataset& query,
                          std::span<const EmbeddingNetwork* const> networks,
                          const EvalConfig& cfg);

// Splits `dataset` by keyframe with cfg.split_seed() and runs BenchmarkTable.
EvalReport RunBenchmark(const LabelledDataset& dataset,
                        std::span<const EmbeddingNetwork* const> networks,
                        const EvalConfig& cfg);

struct SweepPoint {
  ArchFamily family = ArchFamily::kFunnel;
  int num_layers = 0;
  int output_dim = 0;
  LossKind loss = LossKind::kTriplet;
  double precision = 0.0;
  double best_val_loss = 0.0;
  int epochs = 0;
};

// One triplet-trained funnel network per output dimension, each evaluated
// with the prototype method on (support, query).
std::vector<SweepPoint> DimensionSweep(const LabelledDataset& train,
                                       const LabelledDataset& val,
                                       const LabelledDataset& support,
                                       const LabelledDataset& query,
                                       std::span<const int> dims,
                                       const MlpArchitecture& arch,
                                       const TrainConfig& train_cfg,
                                       const EvalConfig& cfg);

// Every combination of family x depth x loss at the architecture's output
// dimension.
std::vector<SweepPoint> ArchitectureSweep(const LabelledDataset& train,
                                          const LabelledDataset& val,
                                          const LabelledDataset& support,
                                          const LabelledDataset& query,
                                          std::span<const ArchFamily> families,
                                          std::span<const int> depths,
                                          std::span<const LossKind> losses,
                                          const MlpArchitecture& arch,
                                          const TrainConfig& train_cfg,
                                          const EvalConfig& cfg);

nlohmann::ordered_json ReportToJson(const EvalReport& report,
                                    bool include_timings);
std::string ReportToText(const EvalReport& report, bool include_timings);
nlohmann::ordered_json SweepToJson(std::span<const SweepPoint> points);
std::string SweepToText(std::span<const SweepPoint> points);

}  // namespace pagg

#endif  // PAGG_EVAL_HPP
