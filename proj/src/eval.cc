#include "pagg/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "pagg/baselines.hpp"
#include "pagg/error.hpp"
#include "pagg/prototype_store.hpp"
#include "pagg/rng.hpp"

namespace pagg {
namespace {

using Clock = std::chrono::steady_clock;

double MillisecondsSince(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
// handled exactly once, so per-index outputs are deterministic.
template <typename Fn>
void ParallelFor(size_t n, int threads, Fn fn) {
  const size_t workers =
      std::min(n, static_cast<size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  const size_t chunk = (n + workers - 1) / workers;
  for (size_t w = 0; w < workers; ++w) {
    const size_t begin = w * chunk;
    const size_t end = std::min(n, begin + chunk);
    pool.emplace_back([=, &fn] {
      for (size_t i = begin; i < end; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

// Real-valued matching units: exact scan or the approximate forest.
class RealIndex {
 public:
  RealIndex(Eigen::MatrixXd items, std::vector<uint64_t> ids,
            const EvalConfig& cfg) {
    if (cfg.use_ann) {
      ann_.emplace(std::move(items), std::move(ids), cfg.ann);
    } else {
      exact_.emplace(std::move(items), std::move(ids));
    }
  }
  Neighbor Nearest(const Eigen::Ref<const Eigen::VectorXd>& q) const {
    return ann_ ? ann_->Nearest(q) : exact_->Nearest(q);
  }

 private:
  std::optional<ExactEuclideanIndex> exact_;
  std::optional<ApproxEuclideanIndex> ann_;
};

Eigen::MatrixXd EmbedAll(const EmbeddingNetwork& net,
                         std::span<const BinaryDescriptor> descriptors) {
  constexpr size_t kChunk = 2048;
  Eigen::MatrixXd out(net.output_dim(), static_cast<Eigen::Index>(descriptors.size()));
  for (size_t begin = 0; begin < descriptors.size(); begin += kChunk) {
    const size_t len = std::min(kChunk, descriptors.size() - begin);
    out.middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(len)) =
        net.ForwardBatch(ToRealColumns(descriptors.subspan(begin, len)));
  }
  return out;
}

std::vector<BinaryDescriptor> Gather(const LabelledDataset& d,
                                     std::span<const size_t> indices) {
  std::vector<BinaryDescriptor> out;
  out.reserve(indices.size());
  for (size_t i : indices) out.push_back(d[i].descriptor);
  return out;
}

}  // namespace

Method Method::Unaggregated() {
  return {MethodKind::kUnaggregated, "unaggregated", nullptr, 0};
}

Method Method::Prototypes(const EmbeddingNetwork& network) {
  return {MethodKind::kEmbeddingPrototypes,
          "proto-" + std::to_string(network.output_dim()), &network, 0};
}

Method Method::QuantizedMean() {
  return {MethodKind::kQuantizedMean, "quantized-mean", nullptr, 0};
}

Method Method::PcaMean(int dim) {
  return {MethodKind::kPcaMean, "pca-" + std::to_string(dim) + "-mean", nullptr, dim};
}

Method Method::RandomSample() {
  return {MethodKind::kRandomSample, "random-sample", nullptr, 0};
}

void EvalConfig::Validate() const {
  if (!(support_fraction > 0.0 && support_fraction < 1.0)) {
    throw ConfigError("support_fraction must lie in (0, 1)");
  }
  if (num_query_samples < 1) throw ConfigError("num_query_samples must be >= 1");
  if (pca_fit_samples < 2) throw ConfigError("pca_fit_samples must be >= 2");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (ann.num_trees < 1 || ann.leaf_size < 1 || ann.checked_leaves < 1) {
    throw ConfigError("ANN parameters must be positive");
  }
}

uint64_t EvalConfig::split_seed() const { return DeriveSeed(seed, "split"); }
uint64_t EvalConfig::sample_seed() const { return DeriveSeed(seed, "query-sample"); }

std::vector<size_t> EligibleQueries(const LabelledDataset& support,
                                    const LabelledDataset& query) {
  std::vector<size_t> out;
  for (size_t i = 0; i < query.size(); ++i) {
    if (support.by_landmark().contains(query[i].landmark_id)) out.push_back(i);
  }
  return out;
}

std::vector<size_t> SampleQueries(const LabelledDataset& support,
                                  const LabelledDataset& query, size_t count,
                                  uint64_t seed) {
  auto eligible = EligibleQueries(support, query);
  if (eligible.empty()) {
    throw std::invalid_argument(
        "no query descriptor has a landmark observed in the support set");
  }
  if (eligible.size() > count) {
    Rng rng(seed);
    for (size_t i = 0; i < count; ++i) {
      std::uniform_int_distribution<size_t> pick(i, eligible.size() - 1);
      std::swap(eligible[i], eligible[pick(rng)]);
    }
    eligible.resize(count);
    std::sort(eligible.begin(), eligible.end());
  }
  return eligible;
}

MethodResult EvaluateMethod(const Method& method, const LabelledDataset& support,
                            const LabelledDataset& query,
                            std::span<const size_t> sample,
                            const EvalConfig& cfg) {
  cfg.Validate();
  if (sample.empty()) throw std::invalid_argument("empty query sample");
  if (support.bits() != query.bits()) {
    throw std::invalid_argument("support and query descriptor widths differ");
  }
  for (size_t i : sample) {
    if (i >= query.size() || !support.by_landmark().contains(query[i].landmark_id)) {
      throw std::invalid_argument("query sample contains an ineligible record");
    }
  }
  const double descriptor_bytes = support.bits() / 8.0;
  const size_t n_landmarks = support.num_landmarks();

  MethodResult result;
  result.method = method.name;
  result.attempted = sample.size();
  std::vector<uint8_t> correct(sample.size(), 0);

  auto tally = [&](auto&& nearest_landmark) {
    const auto start = Clock::now();
    ParallelFor(sample.size(), cfg.threads, [&](size_t i) {
      correct[i] = nearest_landmark(i) == query[sample[i]].landmark_id;
    });
    result.query_us = MillisecondsSince(start) * 1000.0 / double(sample.size());
  };

  const auto build_start = Clock::now();
  switch (method.kind) {
    case MethodKind::kUnaggregated: {
      std::vector<BinaryDescriptor> items;
      std::vector<uint64_t> ids;
      items.reserve(support.size());
      for (size_t i = 0; i < support.size(); ++i) {
        items.push_back(support[i].descriptor);
        ids.push_back(i);
      }
      const ExactHammingIndex index(std::move(items), std::move(ids));
      result.build_ms = MillisecondsSince(build_start);
      result.units = support.size();
      result.bytes_per_landmark =
          double(support.size()) / double(n_landmarks) * descriptor_bytes;
      tally([&](size_t i) {
        return support[index.Nearest(query[sample[i]].descriptor).id].landmark_id;
      });
      break;
    }
    case MethodKind::kQuantizedMean:
    case MethodKind::kRandomSample: {
      Rng rng(DeriveSeed(cfg.seed, "random-sample"));
      std::vector<BinaryDescriptor> items;
      std::vector<uint64_t> ids;
      for (const auto& [lm, _] : support.by_landmark()) {
        const auto descriptors = support.DescriptorsOf(lm);
        items.push_back(method.kind == MethodKind::kQuantizedMean
                            ? pagg::QuantizedMean(descriptors)
                            : RandomSamplePrototype(descriptors, rng));
        ids.push_back(lm);
      }
      const ExactHammingIndex index(std::move(items), std::move(ids));
      result.build_ms = MillisecondsSince(build_start);
      result.units = n_landmarks;
      result.bytes_per_landmark = descriptor_bytes;
      tally([&](size_t i) { return index.Nearest(query[sample[i]].descriptor).id; });
      break;
    }
    case MethodKind::kEmbeddingPrototypes: {
      if (method.network == nullptr) {
        throw std::invalid_argument("method '" + method.name + "' has no network");
      }
      const EmbeddingNetwork& net = *method.network;
      if (net.input_dim() != support.bits()) {
        throw std::invalid_argument("network input width does not match descriptors");
      }
      std::vector<BinaryDescriptor> all;
      all.reserve(support.size());
      for (const auto& r : support.records()) all.push_back(r.descriptor);
      const Eigen::MatrixXd emb = EmbedAll(net, all);
      PrototypeStore store(net.output_dim());
      for (const auto& [lm, records] : support.by_landmark()) {
        std::vector<Eigen::VectorXd> vectors;
        vectors.reserve(records.size());
        for (size_t r : records) vectors.push_back(emb.col(static_cast<Eigen::Index>(r)));
        store.Add(lm, vectors);
      }
      Eigen::MatrixXd items(net.output_dim(), static_cast<Eigen::Index>(store.size()));
      std::vector<uint64_t> ids;
      for (const auto& [lm, p] : store.prototypes()) {
        items.col(static_cast<Eigen::Index>(ids.size())) = p.vector;
        ids.push_back(lm);
      }
      const RealIndex index(std::move(items), std::move(ids), cfg);
      result.build_ms = MillisecondsSince(build_start);
      result.units = store.size();
      result.bytes_per_landmark = double(store.Report(support.bits()).bytes_per_prototype);
      const auto queries = Gather(query, sample);
      const auto start = Clock::now();
      const Eigen::MatrixXd q = EmbedAll(net, queries);
      const double embed_ms = MillisecondsSince(start);
      tally([&](size_t i) { return index.Nearest(q.col(static_cast<Eigen::Index>(i))).id; });
      result.query_us += embed_ms * 1000.0 / double(sample.size());
      break;
    }
    case MethodKind::kPcaMean: {
      std::vector<size_t> fit_idx(support.size());
      for (size_t i = 0; i < fit_idx.size(); ++i) fit_idx[i] = i;
      if (fit_idx.size() > cfg.pca_fit_samples) {
        Rng rng(DeriveSeed(cfg.seed, "pca-subsample"));
        std::shuffle(fit_idx.begin(), fit_idx.end(), rng);
        fit_idx.resize(cfg.pca_fit_samples);
        std::sort(fit_idx.begin(), fit_idx.end());
      }
      const PcaModel model =
          PcaFit(Gather(support, fit_idx), method.pca_dim, DeriveSeed(cfg.seed, "pca"));
      Eigen::MatrixXd items(method.pca_dim, static_cast<Eigen::Index>(n_landmarks));
      std::vector<uint64_t> ids;
      for (const auto& [lm, _] : support.by_landmark()) {
        items.col(static_cast<Eigen::Index>(ids.size())) =
            PcaPrototype(model, support.DescriptorsOf(lm));
        ids.push_back(lm);
      }
      const RealIndex index(std::move(items), std::move(ids), cfg);
      result.build_ms = MillisecondsSince(build_start);
      result.units = n_landmarks;
      result.bytes_per_landmark = method.pca_dim * 4.0 + 1.0;
      tally([&](size_t i) {
        return index.Nearest(model.Project(query[sample[i]].descriptor)).id;
      });
      break;
    }
  }
  for (uint8_t c : correct) result.correct += c;
  result.precision = double(result.correct) / double(result.attempted);
  return result;
}

MethodResult EvaluateMethod(const Method& method, const LabelledDataset& support,
                            const LabelledDataset& query, const EvalConfig& cfg) {
  const auto sample =
      SampleQueries(support, query, cfg.num_query_samples, cfg.sample_seed());
  return EvaluateMethod(method, support, query, sample, cfg);
}

EvalReport BenchmarkTable(const LabelledDataset& support,
                          const LabelledDataset& query,
                          std::span<const EmbeddingNetwork* const> networks,
                          const EvalConfig& cfg) {
  cfg.Validate();
  std::vector<const EmbeddingNetwork*> nets(networks.begin(), networks.end());
  for (const auto* net : nets) {
    if (net == nullptr) throw std::invalid_argument("null network");
  }
  std::stable_sort(nets.begin(), nets.end(), [](const auto* a, const auto* b) {
    return a->output_dim() > b->output_dim();
  });

  std::vector<Method> methods{Method::Unaggregated()};
  for (const auto* net : nets) methods.push_back(Method::Prototypes(*net));
  methods.push_back(Method::QuantizedMean());
  methods.push_back(Method::PcaMean(16));
  methods.push_back(Method::RandomSample());

  EvalReport report;
  report.eval_seed = cfg.seed;
  report.sample_seed = cfg.sample_seed();
  report.ann = cfg.use_ann;
  report.support_records = support.size();
  report.query_records = query.size();
  report.support_landmarks = support.num_landmarks();
  report.eligible_queries = EligibleQueries(support, query).size();
  const auto sample =
      SampleQueries(support, query, cfg.num_query_samples, cfg.sample_seed());
  for (const auto& method : methods) {
    report.rows.push_back(EvaluateMethod(method, support, query, sample, cfg));
  }
  return report;
}

EvalReport RunBenchmark(const LabelledDataset& dataset,
                        std::span<const EmbeddingNetwork* const> networks,
                        const EvalConfig& cfg) {
  cfg.Validate();
  const auto split = SplitByKeyframe(dataset, cfg.support_fraction, cfg.split_seed());
  EvalReport report = BenchmarkTable(split.support, split.query, networks, cfg);
  report.split_seed = cfg.split_seed();
  return report;
}

std::vector<SweepPoint> DimensionSweep(const LabelledDataset& train,
                                       const LabelledDataset& val,
                                       const LabelledDataset& support,
                                       const LabelledDataset& query,
                                       std::span<const int> dims,
                                       const MlpArchitecture& arch,
                                       const TrainConfig& train_cfg,
                                       const EvalConfig& cfg) {
  if (dims.empty()) throw std::invalid_argument("dimension sweep needs at least one dim");
  TrainConfig tc = train_cfg;
  tc.loss = LossKind::kTriplet;
  const auto sample =
      SampleQueries(support, query, cfg.num_query_samples, cfg.sample_seed());
  std::vector<SweepPoint> out;
  for (int dim : dims) {
    MlpArchitecture a = arch;
    a.family = ArchFamily::kFunnel;
    a.output_dim = dim;
    const TrainResult trained = Train(train, val, a, tc);
    const auto r = EvaluateMethod(Method::Prototypes(trained.network), support,
                                  query, sample, cfg);
    out.push_back({a.family, a.num_layers, dim, tc.loss, r.precision,
                   trained.best_val_loss, static_cast<int>(trained.log.size())});
  }
  return out;
}

std::vector<SweepPoint> ArchitectureSweep(const LabelledDataset& train,
                                          const LabelledDataset& val,
                                          const LabelledDataset& support,
                                          const LabelledDataset& query,
                                          std::span<const ArchFamily> families,
                                          std::span<const int> depths,
                                          std::span<const LossKind> losses,
                                          const MlpArchitecture& arch,
                                          const TrainConfig& train_cfg,
                                          const EvalConfig& cfg) {
  if (families.empty() || depths.empty() || losses.empty()) {
    throw std::invalid_argument("architecture sweep needs families, depths and losses");
  }
  const auto sample =
      SampleQueries(support, query, cfg.num_query_samples, cfg.sample_seed());
  std::vector<SweepPoint> out;
  for (LossKind loss : losses) {
    for (ArchFamily family : families) {
      for (int depth : depths) {
        MlpArchitecture a = arch;
        a.family = family;
        a.num_layers = depth;
        TrainConfig tc = train_cfg;
        tc.loss = loss;
        const TrainResult trained = Train(train, val, a, tc);
        const auto r = EvaluateMethod(Method::Prototypes(trained.network), support,
                                      query, sample, cfg);
        out.push_back({family, depth, a.output_dim, loss, r.precision,
                       trained.best_val_loss, static_cast<int>(trained.log.size())});
      }
    }
  }
  return out;
}

nlohmann::ordered_json ReportToJson(const EvalReport& report,
                                    bool include_timings) {
  nlohmann::ordered_json j;
  j["eval_seed"] = report.eval_seed;
  j["split_seed"] = report.split_seed;
  j["sample_seed"] = report.sample_seed;
  j["ann"] = report.ann;
  j["support_records"] = report.support_records;
  j["query_records"] = report.query_records;
  j["support_landmarks"] = report.support_landmarks;
  j["eligible_queries"] = report.eligible_queries;
  auto& rows = j["methods"] = nlohmann::ordered_json::array();
  for (const auto& r : report.rows) {
    nlohmann::ordered_json row;
    row["method"] = r.method;
    row["precision"] = r.precision;
    row["correct"] = r.correct;
    row["samples"] = r.attempted;
    row["units"] = r.units;
    row["bytes_per_landmark"] = r.bytes_per_landmark;
    if (include_timings) {
      row["build_ms"] = r.build_ms;
      row["query_us"] = r.query_us;
    }
    rows.push_back(std::move(row));
  }
  return j;
}

std::string ReportToText(const EvalReport& report, bool include_timings) {
  std::ostringstream out;
  out << std::left << std::setw(18) << "method" << std::right << std::setw(10)
      << "precision" << std::setw(10) << "samples" << std::setw(12) << "bytes/lm";
  if (include_timings) out << std::setw(12) << "build ms" << std::setw(12) << "query us";
  out << "\n";
  for (const auto& r : report.rows) {
    out << std::left << std::setw(18) << r.method << std::right << std::fixed
        << std::setprecision(4) << std::setw(10) << r.precision << std::setw(10)
        << r.attempted << std::setprecision(1) << std::setw(12)
        << r.bytes_per_landmark;
    if (include_timings) {
      out << std::setprecision(2) << std::setw(12) << r.build_ms << std::setw(12)
          << r.query_us;
    }
    out << "\n";
  }
  return out.str();
}

nlohmann::ordered_json SweepToJson(std::span<const SweepPoint> points) {
  auto j = nlohmann::ordered_json::array();
  for (const auto& p : points) {
    nlohmann::ordered_json row;
    row["family"] = std::string(ToString(p.family));
    row["num_layers"] = p.num_layers;
    row["output_dim"] = p.output_dim;
    row["loss"] = std::string(ToString(p.loss));
    row["precision"] = p.precision;
    row["best_val_loss"] = p.best_val_loss;
    row["epochs"] = p.epochs;
    j.push_back(std::move(row));
  }
  return j;
}

std::string SweepToText(std::span<const SweepPoint> points) {
  std::ostringstream out;
  out << std::left << std::setw(14) << "loss" << std::setw(8) << "family"
      << std::right << std::setw(8) << "layers" << std::setw(6) << "dim"
      << std::setw(11) << "precision" << "\n";
  for (const auto& p : points) {
    out << std::left << std::setw(14) << ToString(p.loss) << std::setw(8)
        << ToString(p.family) << std::right << std::setw(8) << p.num_layers
        << std::setw(6) << p.output_dim << std::fixed << std::setprecision(4)
        << std::setw(11) << p.precision << "\n";
  }
  return out.str();
}

}  // namespace pagg
