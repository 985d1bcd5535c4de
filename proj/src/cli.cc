#include "pagg/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>

#include "CLI11.hpp"
#include "binary_io.hpp"
#include "pagg/error.hpp"
#include "pagg/eval.hpp"
#include "pagg/prototype_store.hpp"

namespace pagg {
namespace {

namespace fs = std::filesystem;

struct GlobalFlags {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<int> threads;
  bool ann = false;
  std::string out_dir = "runs";
};

// Precedence, lowest first: defaults, config file, environment, flags.
RunConfig LoadConfig(const GlobalFlags& flags, const EnvLookup& env) {
  RunConfig cfg;
  if (!flags.config_path.empty()) ApplyConfigFile(cfg, flags.config_path);
  ApplyEnvironment(cfg, env);
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.threads) cfg.threads = *flags.threads;
  if (flags.ann) cfg.eval.use_ann = true;
  cfg.Resolve();
  return cfg;
}

void WriteText(const fs::path& path, const std::string& text) {
  io::WriteFile(path, std::vector<uint8_t>(text.begin(), text.end()));
}

std::string FileHash(const fs::path& path) {
  const auto bytes = io::ReadFile(path);
  return HashHex(std::string_view(reinterpret_cast<const char*>(bytes.data()),
                                  bytes.size()));
}

// Run directories are named by a hash of the command, the resolved config
// and the contents of every input file; a rerun lands in the same place.
fs::path MakeRunDir(const GlobalFlags& flags, const std::string& command,
                    const RunConfig& cfg, const std::vector<std::string>& inputs) {
  std::string key = command + "\n" + cfg.ToText();
  for (const auto& in : inputs) key += FileHash(in) + "\n";
  const fs::path dir = fs::path(flags.out_dir) / (command + "-" + HashHex(key));
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  WriteText(dir / "config.txt", cfg.ToText());
  return dir;
}

void PrintSummary(std::ostream& out, const LabelledDataset& d) {
  out << "landmarks " << d.num_landmarks() << "\n"
      << "keyframes " << d.num_keyframes() << "\n"
      << "records " << d.size() << "\n"
      << "bits " << d.bits() << "\n";
}

MlpArchitecture ArchFor(const RunConfig& cfg, const LabelledDataset& train) {
  MlpArchitecture arch = cfg.arch;
  arch.input_dim = train.bits();
  try {
    arch.Validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("arch: ") + e.what());
  }
  return arch;
}

int CmdGen(const RunConfig& cfg, const std::string& output, std::ostream& out) {
  const LabelledDataset d = GenerateSynthetic(cfg.synth);
  SaveDataset(d, output);
  out << "wrote " << output << "\n";
  PrintSummary(out, d);
  return kExitOk;
}

int CmdImport(const std::string& input, const std::string& output,
              std::ostream& out) {
  const LabelledDataset d = ImportTextDataset(input);
  SaveDataset(d, output);
  out << "wrote " << output << "\n";
  PrintSummary(out, d);
  return kExitOk;
}

int CmdTrain(const RunConfig& cfg, const std::string& train_path,
             const std::string& val_path, const std::string& model_path,
             std::string log_path, std::ostream& out) {
  const LabelledDataset train = LoadDataset(train_path);
  const LabelledDataset val = LoadDataset(val_path);
  if (log_path.empty()) log_path = model_path + ".log.jsonl";
  std::string log;
  const TrainResult result =
      Train(train, val, ArchFor(cfg, train), cfg.train, [&](const EpochRecord& r) {
        const std::string line = FormatEpochRecord(r);
        log += line + "\n";
        out << line << "\n";
      });
  result.network.Save(model_path);
  WriteText(log_path, log);
  out << "wrote " << model_path << " (best epoch " << result.best_epoch
      << ", val loss " << result.best_val_loss << ")\n";
  return kExitOk;
}

std::vector<EmbeddingNetwork> LoadModels(const std::vector<std::string>& paths) {
  std::vector<EmbeddingNetwork> nets;
  for (const auto& p : paths) nets.push_back(EmbeddingNetwork::Load(p));
  return nets;
}

int CmdEval(const RunConfig& cfg, const GlobalFlags& flags,
            const std::string& dataset_path, const std::vector<std::string>& models,
            std::ostream& out) {
  const LabelledDataset dataset = LoadDataset(dataset_path);
  const auto nets = LoadModels(models);
  std::vector<const EmbeddingNetwork*> ptrs;
  for (const auto& n : nets) ptrs.push_back(&n);
  const EvalReport report = RunBenchmark(dataset, ptrs, cfg.eval);

  std::vector<std::string> inputs{dataset_path};
  inputs.insert(inputs.end(), models.begin(), models.end());
  const fs::path dir = MakeRunDir(flags, "eval", cfg, inputs);
  WriteText(dir / "report.json", ReportToJson(report, false).dump(2) + "\n");
  WriteText(dir / "report.txt", ReportToText(report, false));
  WriteText(dir / "timings.json", ReportToJson(report, true).dump(2) + "\n");
  out << ReportToText(report, true) << "wrote " << dir.string() << "\n";
  return kExitOk;
}

int CmdCompress(const std::string& model_path, const std::string& dataset_path,
                const std::string& store_path, std::ostream& out) {
  const EmbeddingNetwork net = EmbeddingNetwork::Load(model_path);
  const LabelledDataset dataset = LoadDataset(dataset_path);
  if (net.input_dim() != dataset.bits()) {
    throw std::invalid_argument("model input width " + std::to_string(net.input_dim()) +
                                " does not match dataset width " +
                                std::to_string(dataset.bits()));
  }
  PrototypeStore store(net.output_dim());
  for (const auto& [lm, records] : dataset.by_landmark()) {
    std::vector<BinaryDescriptor> descriptors;
    for (size_t r : records) descriptors.push_back(dataset[r].descriptor);
    const Eigen::MatrixXd emb = net.ForwardBatch(ToRealColumns(descriptors));
    std::vector<Eigen::VectorXd> cols;
    for (Eigen::Index c = 0; c < emb.cols(); ++c) cols.emplace_back(emb.col(c));
    store.Add(lm, cols);
  }
  store.Save(store_path);
  const MemoryReport r = store.Report(dataset.bits());
  out << "wrote " << store_path << "\n"
      << "landmarks " << r.landmarks << "\n"
      << "embedding_dim " << r.embedding_dim << "\n"
      << "bytes_per_prototype " << r.bytes_per_prototype << "\n"
      << "prototype_bytes " << r.prototype_bytes << "\n"
      << "raw_descriptors " << r.raw_descriptors << "\n"
      << "raw_bytes " << r.raw_bytes << "\n"
      << "avg_descriptors_per_landmark " << r.avg_descriptors_per_landmark << "\n"
      << "compression_ratio " << r.compression_ratio << "\n";
  return kExitOk;
}

int CmdSweep(const RunConfig& cfg, const GlobalFlags& flags, const std::string& name,
             const std::string& train_path, const std::string& val_path,
             const std::string& dataset_path, std::ostream& out) {
  const LabelledDataset train = LoadDataset(train_path);
  const LabelledDataset val = LoadDataset(val_path);
  const LabelledDataset dataset = LoadDataset(dataset_path);
  const auto split =
      SplitByKeyframe(dataset, cfg.eval.support_fraction, cfg.eval.split_seed());
  const MlpArchitecture arch = ArchFor(cfg, train);
  std::vector<SweepPoint> points;
  if (name == "sweep-dim") {
    points = DimensionSweep(train, val, split.support, split.query, cfg.sweep_dims,
                            arch, cfg.train, cfg.eval);
  } else {
    points = ArchitectureSweep(train, val, split.support, split.query,
                               cfg.sweep_families, cfg.sweep_depths,
                               cfg.sweep_losses, arch, cfg.train, cfg.eval);
  }
  const fs::path dir =
      MakeRunDir(flags, name, cfg, {train_path, val_path, dataset_path});
  WriteText(dir / "sweep.json", SweepToJson(points).dump(2) + "\n");
  WriteText(dir / "sweep.txt", SweepToText(points));
  out << SweepToText(points) << "wrote " << dir.string() << "\n";
  return kExitOk;
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err, const EnvLookup& env) {
  CLI::App app{"Landmark descriptor aggregation: generate, train, evaluate, compress",
               "pagg"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags flags;
  app.add_option("--config", flags.config_path, "key = value config file")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", flags.seed, "global seed (overrides config)");
  app.add_option("--threads", flags.threads, "worker threads")
      ->check(CLI::PositiveNumber);
  app.add_flag("--ann", flags.ann, "approximate search for real-valued methods");
  app.add_option("--out", flags.out_dir, "base directory for run directories")
      ->capture_default_str();

  std::string a, b, c, d;
  std::vector<std::string> models;

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  gen->add_option("output", a, "dataset file to write")->required();

  auto* imp = app.add_subcommand("import", "convert a text dataset to binary");
  imp->add_option("input", a, "text file")->required()->check(CLI::ExistingFile);
  imp->add_option("output", b, "dataset file to write")->required();

  auto* train = app.add_subcommand("train", "train an embedding network");
  train->add_option("train", a, "training dataset")->required();
  train->add_option("val", b, "validation dataset")->required();
  train->add_option("-m,--model", c, "model file to write")->required();
  train->add_option("--log", d, "epoch log (default MODEL.log.jsonl)");

  auto* eval = app.add_subcommand("eval", "benchmark all methods on a dataset");
  eval->add_option("dataset", a, "evaluation dataset")->required();
  eval->add_option("models", models, "trained models, one prototype row each");

  auto* compress = app.add_subcommand("compress", "build a prototype store");
  compress->add_option("model", a, "trained model")->required();
  compress->add_option("dataset", b, "dataset to compress")->required();
  compress->add_option("-o,--output", c, "store file to write")->required();

  auto* sweep_dim = app.add_subcommand("sweep-dim", "precision per embedding size");
  auto* sweep_arch = app.add_subcommand("sweep-arch", "precision per family, depth, loss");
  for (auto* s : {sweep_dim, sweep_arch}) {
    s->add_option("train", a, "training dataset")->required();
    s->add_option("val", b, "validation dataset")->required();
    s->add_option("dataset", c, "evaluation dataset")->required();
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (*imp) return CmdImport(a, b, out);
    const RunConfig cfg = LoadConfig(flags, env);
    if (*gen) return CmdGen(cfg, a, out);
    if (*train) return CmdTrain(cfg, a, b, c, d, out);
    if (*eval) return CmdEval(cfg, flags, a, models, out);
    if (*compress) return CmdCompress(a, b, c, out);
    if (*sweep_dim) return CmdSweep(cfg, flags, "sweep-dim", a, b, c, out);
    if (*sweep_arch) return CmdSweep(cfg, flags, "sweep-arch", a, b, c, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace pagg
