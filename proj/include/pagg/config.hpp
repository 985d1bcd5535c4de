#ifndef PAGG_CONFIG_HPP
#define PAGG_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "pagg/dataset.hpp"
#include "pagg/eval.hpp"
#include "pagg/network.hpp"
#include "pagg/training.hpp"

namespace pagg {

// Everything a CLI run depends on. The component seeds inside synth, train
// and eval are not keys of their own; they are derived from `seed` by
// Resolve() so that one number pins a whole run.
struct RunConfig {
  uint64_t seed = 1;
  int threads = 1;
  SynthConfig synth;
  MlpArchitecture arch{ArchFamily::kFunnel, 3, kDefaultDescriptorBits, 16};
  TrainConfig train;
  EvalConfig eval;
  std::vector<int> sweep_dims{8, 16, 32, 64};
  std::vector<ArchFamily> sweep_families{ArchFamily::kFat, ArchFamily::kFunnel};
  std::vector<int> sweep_depths{2, 3, 4};
  std::vector<LossKind> sweep_losses{LossKind::kTriplet, LossKind::kPrototypical};

  // Sets one key from its text value. Throws ConfigError naming the key if
  // it is unknown or the value does not parse.
  void Set(std::string_view key, std::string_view value);

  // Copies the global seed and thread count into the component configs and
  // validates them all. Throws ConfigError.
  void Resolve();

  // Canonical "key = value" document listing every key, in a fixed order.
  std::string ToText() const;
};

std::vector<std::string> RunConfigKeys();

// "key = value" lines; '#' starts a comment; blank lines are ignored.
void ApplyConfigText(RunConfig& cfg, std::string_view text,
                     const std::string& name = "config");
void ApplyConfigFile(RunConfig& cfg, const std::filesystem::path& path);

// For each key, an environment variable PAGG_<KEY> (upper case, '.' -> '_'),
// e.g. PAGG_SYNTH_BIT_FLIP_PROB, overrides the current value.
using EnvLookup = std::function<const char*(const char*)>;
std::string EnvVarName(std::string_view key);
void ApplyEnvironment(RunConfig& cfg, const EnvLookup& lookup);

// 16 hex digits of a 64-bit FNV-1a hash.
std::string HashHex(std::string_view text);

}  // namespace pagg

#endif  // PAGG_CONFIG_HPP
