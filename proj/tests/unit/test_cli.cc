#include "doctest.h"

#include <fstream>
#include <map>
#include <sstream>

#include "pagg/cli.hpp"
#include "pagg/error.hpp"
#include "pagg/prototype_store.hpp"
#include "test_util.hpp"

using namespace pagg;
using pagg::testing::TempDir;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run Cli(std::vector<std::string> args, const std::map<std::string, std::string>& env = {}) {
  std::ostringstream out, err;
  const int code = RunCli(args, out, err, [&](const char* name) -> const char* {
    const auto it = env.find(name);
    return it == env.end() ? nullptr : it->second.c_str();
  });
  return {code, out.str(), err.str()};
}

std::string Slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void Write(const std::string& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

const char* kSmall =
    "synth.num_landmarks = 40\n"
    "synth.num_keyframes = 30\n"
    "synth.min_observations = 3\n"
    "synth.max_observations = 6\n"
    "synth.bits = 64\n"
    "train.max_epochs = 2\n"
    "train.batch_size = 32\n"
    "train.validation_triplets = 64\n"
    "eval.num_query_samples = 200\n"
    "sweep.dims = 8\n"
    "sweep.depths = 2\n"
    "sweep.families = funnel\n"
    "sweep.losses = triplet\n";

std::string OnlyDir(const std::filesystem::path& base) {
  std::vector<std::string> dirs;
  for (const auto& e : std::filesystem::directory_iterator(base)) dirs.push_back(e.path());
  REQUIRE(dirs.size() == 1);
  return dirs.front();
}

}  // namespace

TEST_CASE("config text round trips through the canonical form") {
  RunConfig c;
  ApplyConfigText(c, "seed = 9  # comment\n\narch.family = fat\nsweep.dims = 4, 8\n");
  CHECK(c.seed == 9);
  CHECK(c.arch.family == ArchFamily::kFat);
  CHECK(c.sweep_dims == std::vector<int>{4, 8});
  RunConfig d;
  ApplyConfigText(d, c.ToText());
  CHECK(d.ToText() == c.ToText());
  CHECK(RunConfigKeys().size() > 30);
}

TEST_CASE("config errors name the key") {
  RunConfig c;
  CHECK_THROWS_WITH_AS(c.Set("synth.bogus", "1"), doctest::Contains("synth.bogus"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(c.Set("synth.bits", "many"), doctest::Contains("synth.bits"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(c.Set("eval.ann", "maybe"), doctest::Contains("eval.ann"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(ApplyConfigText(c, "seed 4\n", "f"), doctest::Contains("f:1"),
                       ConfigError);
  c.synth.bit_flip_prob = 0.7;
  CHECK_THROWS_WITH_AS(c.Resolve(), doctest::Contains("bit_flip_prob"), ConfigError);
}

TEST_CASE("environment overrides use the PAGG_ prefix") {
  CHECK(EnvVarName("synth.bit_flip_prob") == "PAGG_SYNTH_BIT_FLIP_PROB");
  RunConfig c;
  ApplyEnvironment(c, [](const char* name) -> const char* {
    return std::string(name) == "PAGG_SYNTH_BIT_FLIP_PROB" ? "0.2" : nullptr;
  });
  CHECK(c.synth.bit_flip_prob == 0.2);
}

TEST_CASE("resolve derives component seeds from the global seed") {
  RunConfig a, b;
  a.seed = 5;
  b.seed = 6;
  a.Resolve();
  b.Resolve();
  CHECK(a.synth.seed != b.synth.seed);
  CHECK(a.synth.seed != a.train.seed);
  CHECK(a.train.seed != a.eval.seed);
}

TEST_CASE("gen writes a loadable, reproducible dataset") {
  TempDir dir("gen");
  Write(dir / "c.txt", kSmall);
  const Run r = Cli({"--config", dir / "c.txt", "gen", dir / "a.pdsc"});
  REQUIRE(r.code == kExitOk);
  const LabelledDataset d = LoadDataset(dir / "a.pdsc");
  CHECK(r.out.find("landmarks " + std::to_string(d.num_landmarks())) != std::string::npos);
  CHECK(r.out.find("records " + std::to_string(d.size())) != std::string::npos);
  CHECK(Cli({"--config", dir / "c.txt", "gen", dir / "b.pdsc"}).code == kExitOk);
  CHECK(Slurp(dir / "a.pdsc") == Slurp(dir / "b.pdsc"));
  CHECK(Cli({"--config", dir / "c.txt", "--seed", "2", "gen", dir / "c.pdsc"}).code == 0);
  CHECK(Slurp(dir / "a.pdsc") != Slurp(dir / "c.pdsc"));
}

TEST_CASE("the default config generates the documented corpus") {
  TempDir dir("gendef");
  const Run r = Cli({"gen", dir / "d.pdsc"});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("landmarks 500") != std::string::npos);
  CHECK(LoadDataset(dir / "d.pdsc").bits() == 512);
}

TEST_CASE("exit codes distinguish config, I/O and usage errors") {
  TempDir dir("codes");
  Run r = Cli({"gen", dir / "x.pdsc"}, {{"PAGG_SYNTH_BIT_FLIP_PROB", "0.7"}});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("bit_flip_prob") != std::string::npos);

  Write(dir / "bad.txt", "synth.wobble = 3\n");
  r = Cli({"--config", dir / "bad.txt", "gen", dir / "x.pdsc"});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("synth.wobble") != std::string::npos);

  r = Cli({"eval", dir / "missing.pdsc"});
  CHECK(r.code == kExitIo);
  CHECK(r.err.find("missing.pdsc") != std::string::npos);

  Write(dir / "junk.pdsc", "not a dataset");
  CHECK(Cli({"eval", dir / "junk.pdsc"}).code == kExitIo);
  CHECK(Cli({"frobnicate"}).code == kExitConfig);
  CHECK(Cli({}).code == kExitConfig);
  CHECK(Cli({"--help"}).code == kExitOk);
}

TEST_CASE("train, eval and compress end to end") {
  TempDir dir("e2e");
  Write(dir / "c.txt", kSmall);
  const std::string cfg = dir / "c.txt";
  REQUIRE(Cli({"--config", cfg, "--seed", "1", "gen", dir / "eval.pdsc"}).code == 0);
  REQUIRE(Cli({"--config", cfg, "--seed", "2", "gen", dir / "train.pdsc"}).code == 0);
  REQUIRE(Cli({"--config", cfg, "--seed", "3", "gen", dir / "val.pdsc"}).code == 0);

  SUBCASE("train is deterministic and writes a log") {
    Run r = Cli({"--config", cfg, "train", dir / "train.pdsc", dir / "val.pdsc", "-m",
                 dir / "a.pagg"});
    REQUIRE(r.code == 0);
    CHECK(Slurp(dir / "a.pagg.log.jsonl").find("\"epoch\":2") != std::string::npos);
    REQUIRE(Cli({"--config", cfg, "train", dir / "train.pdsc", dir / "val.pdsc", "-m",
                 dir / "b.pagg"}).code == 0);
    CHECK(Slurp(dir / "a.pagg") == Slurp(dir / "b.pagg"));
  }

  SUBCASE("zero epochs saves the initialized model") {
    REQUIRE(Cli({"--config", cfg, "train", dir / "train.pdsc", dir / "val.pdsc", "-m",
                 dir / "z.pagg"},
                {{"PAGG_TRAIN_MAX_EPOCHS", "0"}})
                .code == 0);
    RunConfig rc;
    ApplyConfigText(rc, kSmall);
    rc.Resolve();
    MlpArchitecture arch = rc.arch;
    arch.input_dim = 64;
    CHECK(EmbeddingNetwork::Load(dir / "z.pagg") ==
          InitNetwork(arch, DeriveSeed(rc.train.seed, "init")));
  }

  SUBCASE("eval emits six rows and identical reports on rerun") {
    for (const char* k : {"16", "32"}) {
      REQUIRE(Cli({"--config", cfg, "train", dir / "train.pdsc", dir / "val.pdsc", "-m",
                   dir / ("m" + std::string(k) + ".pagg")},
                  {{"PAGG_ARCH_OUTPUT_DIM", k}})
                  .code == 0);
    }
    const std::vector<std::string> args{"--config", cfg, "--out", dir / "runs1", "eval",
                                        dir / "eval.pdsc", dir / "m16.pagg",
                                        dir / "m32.pagg"};
    const Run r = Cli(args);
    REQUIRE(r.code == 0);
    const std::string run1 = OnlyDir(dir.path() / "runs1");
    const std::string text = Slurp(run1 + "/report.txt");
    CHECK(std::count(text.begin(), text.end(), '\n') == 7);
    for (const char* name : {"unaggregated", "proto-32", "proto-16", "quantized-mean",
                             "pca-16-mean", "random-sample"}) {
      CHECK(text.find(name) != std::string::npos);
    }
    auto again = args;
    again[3] = dir / "runs2";
    REQUIRE(Cli(again).code == 0);
    const std::string run2 = OnlyDir(dir.path() / "runs2");
    CHECK(std::filesystem::path(run1).filename() == std::filesystem::path(run2).filename());
    CHECK(Slurp(run1 + "/report.json") == Slurp(run2 + "/report.json"));
    CHECK(Slurp(run1 + "/report.txt") == Slurp(run2 + "/report.txt"));
    CHECK(std::filesystem::exists(run1 + "/timings.json"));

    const Run missing = Cli({"eval", dir / "eval.pdsc", dir / "nope.pagg"});
    CHECK(missing.code == kExitIo);
    CHECK(missing.err.find("nope.pagg") != std::string::npos);
  }

  SUBCASE("compress stores one prototype per landmark") {
    REQUIRE(Cli({"--config", cfg, "train", dir / "train.pdsc", dir / "val.pdsc", "-m",
                 dir / "m.pagg"}).code == 0);
    const Run r = Cli({"compress", dir / "m.pagg", dir / "eval.pdsc", "-o", dir / "s.psto"});
    REQUIRE(r.code == 0);
    const PrototypeStore store = PrototypeStore::Load(dir / "s.psto");
    const LabelledDataset d = LoadDataset(dir / "eval.pdsc");
    CHECK(store.size() == d.num_landmarks());
    CHECK(r.out.find("compression_ratio") != std::string::npos);
  }

  SUBCASE("sweeps write a run directory") {
    const Run r = Cli({"--config", cfg, "--out", dir / "sw", "sweep-dim", dir / "train.pdsc",
                       dir / "val.pdsc", dir / "eval.pdsc"});
    REQUIRE(r.code == 0);
    CHECK(std::filesystem::exists(OnlyDir(dir.path() / "sw") + "/sweep.json"));
    CHECK(Cli({"--config", cfg, "--out", dir / "sa", "sweep-arch", dir / "train.pdsc",
               dir / "val.pdsc", dir / "eval.pdsc"})
              .code == 0);
  }
}

TEST_CASE("compressing noiseless data reproduces every embedding") {
  TempDir dir("noiseless");
  Write(dir / "c.txt", std::string(kSmall) + "synth.bit_flip_prob = 0\n");
  REQUIRE(Cli({"--config", dir / "c.txt", "gen", dir / "d.pdsc"}).code == 0);
  REQUIRE(Cli({"--config", dir / "c.txt", "train", dir / "d.pdsc", dir / "d.pdsc", "-m",
               dir / "m.pagg"}, {{"PAGG_TRAIN_MAX_EPOCHS", "0"}}).code == 0);
  REQUIRE(Cli({"compress", dir / "m.pagg", dir / "d.pdsc", "-o", dir / "s.psto"}).code == 0);
  const auto net = EmbeddingNetwork::Load(dir / "m.pagg");
  const auto store = PrototypeStore::Load(dir / "s.psto");
  const auto d = LoadDataset(dir / "d.pdsc");
  for (const auto& r : d.records()) {
    const Eigen::VectorXd e = net.Forward(ToReal(r.descriptor));
    const Eigen::VectorXd p = store.Get(r.landmark_id).vector;
    // Stored as float32.
    CHECK((e - p).cwiseAbs().maxCoeff() <= 1e-6 * std::max(1.0, e.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("text import command") {
  TempDir dir("imp");
  Write(dir / "t.txt", "0 0 ffffffffffffffff\n0 1 fffffffffffffff0\n1 0 0000000000000000\n");
  const Run r = Cli({"import", dir / "t.txt", dir / "t.pdsc"});
  REQUIRE(r.code == 0);
  CHECK(LoadDataset(dir / "t.pdsc").size() == 3);
  Write(dir / "bad.txt", "0 0 xyz\n");
  CHECK(Cli({"import", dir / "bad.txt", dir / "b.pdsc"}).code == kExitIo);
}
