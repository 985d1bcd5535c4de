#include "pagg/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <sstream>

#include "binary_io.hpp"
#include "pagg/error.hpp"
#include "pagg/rng.hpp"

namespace pagg {
namespace {

std::string_view Trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

[[noreturn]] void BadValue(std::string_view key, std::string_view value,
                           std::string_view expected) {
  throw ConfigError("invalid value '" + std::string(value) + "' for key '" +
                    std::string(key) + "' (expected " + std::string(expected) +
                    ")");
}

template <typename T>
T ParseNumber(std::string_view key, std::string_view value, std::string_view what) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) BadValue(key, value, what);
  return out;
}

int ParseInt(std::string_view k, std::string_view v) {
  return ParseNumber<int>(k, v, "an integer");
}
double ParseDouble(std::string_view k, std::string_view v) {
  return ParseNumber<double>(k, v, "a number");
}
size_t ParseSize(std::string_view k, std::string_view v) {
  return ParseNumber<size_t>(k, v, "a non-negative integer");
}

bool ParseBool(std::string_view k, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  BadValue(k, v, "true or false");
}

template <typename T, typename Fn>
std::vector<T> ParseList(std::string_view key, std::string_view value, Fn parse) {
  std::vector<T> out;
  while (true) {
    const size_t comma = value.find(',');
    const std::string_view item = Trim(value.substr(0, comma));
    if (item.empty()) BadValue(key, value, "a non-empty comma-separated list");
    out.push_back(parse(item));
    if (comma == std::string_view::npos) break;
    value.remove_prefix(comma + 1);
  }
  return out;
}

template <typename T, typename Fn>
std::string JoinList(const std::vector<T>& items, Fn format) {
  std::string out;
  for (const auto& item : items) {
    if (!out.empty()) out += ",";
    out += format(item);
  }
  return out;
}

std::string FormatDouble(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string_view DistanceName(DistanceKind d) {
  return d == DistanceKind::kEuclidean ? "euclidean" : "squared";
}

struct Key {
  std::string_view name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view, std::string_view)> set;
};

#define PAGG_INT_KEY(NAME, FIELD)                                          \
  Key{NAME, [](const RunConfig& c) { return std::to_string(c.FIELD); },    \
      [](RunConfig& c, std::string_view k, std::string_view v) {           \
        c.FIELD = ParseInt(k, v);                                          \
      }}
#define PAGG_SIZE_KEY(NAME, FIELD)                                         \
  Key{NAME, [](const RunConfig& c) { return std::to_string(c.FIELD); },    \
      [](RunConfig& c, std::string_view k, std::string_view v) {           \
        c.FIELD = ParseSize(k, v);                                         \
      }}
#define PAGG_DOUBLE_KEY(NAME, FIELD)                                       \
  Key{NAME, [](const RunConfig& c) { return FormatDouble(c.FIELD); },      \
      [](RunConfig& c, std::string_view k, std::string_view v) {           \
        c.FIELD = ParseDouble(k, v);                                       \
      }}

const std::vector<Key>& Keys() {
  static const std::vector<Key> keys{
      Key{"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
          [](RunConfig& c, std::string_view k, std::string_view v) {
            c.seed = ParseNumber<uint64_t>(k, v, "an unsigned 64-bit integer");
          }},
      PAGG_INT_KEY("threads", threads),

      PAGG_INT_KEY("synth.num_landmarks", synth.num_landmarks),
      PAGG_INT_KEY("synth.num_keyframes", synth.num_keyframes),
      PAGG_INT_KEY("synth.min_observations", synth.min_observations),
      PAGG_INT_KEY("synth.max_observations", synth.max_observations),
      PAGG_DOUBLE_KEY("synth.bit_flip_prob", synth.bit_flip_prob),
      PAGG_INT_KEY("synth.bits", synth.bits),

      Key{"arch.family",
          [](const RunConfig& c) { return std::string(ToString(c.arch.family)); },
          [](RunConfig& c, std::string_view k, std::string_view v) {
            try {
              c.arch.family = ParseArchFamily(v);
            } catch (const std::invalid_argument&) {
              BadValue(k, v, "fat or funnel");
            }
          }},
      PAGG_INT_KEY("arch.num_layers", arch.num_layers),
      PAGG_INT_KEY("arch.output_dim", arch.output_dim),

      Key{"train.loss",
          [](const RunConfig& c) { return std::string(ToString(c.train.loss)); },
          [](RunConfig& c, std::string_view k, std::string_view v) {
            try {
              c.train.loss = ParseLossKind(v);
            } catch (const std::invalid_argument&) {
              BadValue(k, v, "triplet or prototypical");
            }
          }},
      PAGG_DOUBLE_KEY("train.margin", train.margin),
      PAGG_INT_KEY("train.classes_per_episode", train.classes_per_episode),
      PAGG_INT_KEY("train.support_per_class", train.support_per_class),
      PAGG_INT_KEY("train.query_per_class", train.query_per_class),
      Key{"train.distance",
          [](const RunConfig& c) { return std::string(DistanceName(c.train.distance)); },
          [](RunConfig& c, std::string_view k, std::string_view v) {
            if (v == "squared") {
              c.train.distance = DistanceKind::kSquaredEuclidean;
            } else if (v == "euclidean") {
              c.train.distance = DistanceKind::kEuclidean;
            } else {
              BadValue(k, v, "squared or euclidean");
            }
          }},
      PAGG_DOUBLE_KEY("train.initial_lr", train.initial_lr),
      PAGG_DOUBLE_KEY("train.lr_factor", train.lr_factor),
      PAGG_DOUBLE_KEY("train.min_lr", train.min_lr),
      PAGG_INT_KEY("train.plateau_patience", train.plateau_patience),
      PAGG_INT_KEY("train.max_epochs", train.max_epochs),
      PAGG_INT_KEY("train.batch_size", train.batch_size),
      PAGG_INT_KEY("train.steps_per_epoch", train.steps_per_epoch),
      PAGG_INT_KEY("train.validation_triplets", train.validation_triplets),
      PAGG_INT_KEY("train.validation_episodes", train.validation_episodes),

      PAGG_DOUBLE_KEY("eval.support_fraction", eval.support_fraction),
      PAGG_SIZE_KEY("eval.num_query_samples", eval.num_query_samples),
      PAGG_SIZE_KEY("eval.pca_fit_samples", eval.pca_fit_samples),
      Key{"eval.ann",
          [](const RunConfig& c) { return std::string(c.eval.use_ann ? "true" : "false"); },
          [](RunConfig& c, std::string_view k, std::string_view v) {
            c.eval.use_ann = ParseBool(k, v);
          }},
      PAGG_INT_KEY("eval.ann_trees", eval.ann.num_trees),
      PAGG_INT_KEY("eval.ann_leaf_size", eval.ann.leaf_size),
      PAGG_INT_KEY("eval.ann_checked_leaves", eval.ann.checked_leaves),

      Key{"sweep.dims",
          [](const RunConfig& c) {
            return JoinList(c.sweep_dims, [](int d) { return std::to_string(d); });
          },
          [](RunConfig& c, std::string_view k, std::string_view v) {
            c.sweep_dims = ParseList<int>(k, v, [&](std::string_view s) {
              return ParseInt(k, s);
            });
          }},
      Key{"sweep.families",
          [](const RunConfig& c) {
            return JoinList(c.sweep_families,
                            [](ArchFamily f) { return std::string(ToString(f)); });
          },
          [](RunConfig& c, std::string_view k, std::string_view v) {
            c.sweep_families = ParseList<ArchFamily>(k, v, [&](std::string_view s) {
              try {
                return ParseArchFamily(s);
              } catch (const std::invalid_argument&) {
                BadValue(k, s, "fat or funnel");
              }
            });
          }},
      Key{"sweep.depths",
          [](const RunConfig& c) {
            return JoinList(c.sweep_depths, [](int d) { return std::to_string(d); });
          },
          [](RunConfig& c, std::string_view k, std::string_view v) {
            c.sweep_depths = ParseList<int>(k, v, [&](std::string_view s) {
              return ParseInt(k, s);
            });
          }},
      Key{"sweep.losses",
          [](const RunConfig& c) {
            return JoinList(c.sweep_losses,
                            [](LossKind l) { return std::string(ToString(l)); });
          },
          [](RunConfig& c, std::string_view k, std::string_view v) {
            c.sweep_losses = ParseList<LossKind>(k, v, [&](std::string_view s) {
              try {
                return ParseLossKind(s);
              } catch (const std::invalid_argument&) {
                BadValue(k, s, "triplet or prototypical");
              }
            });
          }},
  };
  return keys;
}

#undef PAGG_INT_KEY
#undef PAGG_SIZE_KEY
#undef PAGG_DOUBLE_KEY

}  // namespace

void RunConfig::Set(std::string_view key, std::string_view value) {
  for (const auto& k : Keys()) {
    if (k.name == key) {
      k.set(*this, key, Trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void RunConfig::Resolve() {
  if (threads < 1) throw ConfigError("threads must be >= 1");
  synth.seed = DeriveSeed(seed, "synth");
  train.seed = DeriveSeed(seed, "train");
  eval.seed = DeriveSeed(seed, "eval");
  eval.threads = threads;
  arch.input_dim = synth.bits;
  synth.Validate();
  train.Validate();
  eval.Validate();
  try {
    arch.Validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("arch: ") + e.what());
  }
  for (int d : sweep_dims) {
    if (d < 1) throw ConfigError("sweep.dims entries must be >= 1");
  }
  for (int d : sweep_depths) {
    if (d < 1) throw ConfigError("sweep.depths entries must be >= 1");
  }
}

std::string RunConfig::ToText() const {
  std::string out;
  for (const auto& k : Keys()) {
    out += std::string(k.name) + " = " + k.get(*this) + "\n";
  }
  return out;
}

std::vector<std::string> RunConfigKeys() {
  std::vector<std::string> out;
  for (const auto& k : Keys()) out.emplace_back(k.name);
  return out;
}

void ApplyConfigText(RunConfig& cfg, std::string_view text, const std::string& name) {
  int line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    if (const size_t hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = Trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(name + ":" + std::to_string(line_no) +
                        ": expected 'key = value'");
    }
    const std::string_view key = Trim(line.substr(0, eq));
    try {
      cfg.Set(key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(name + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void ApplyConfigFile(RunConfig& cfg, const std::filesystem::path& path) {
  const auto bytes = io::ReadFile(path);
  ApplyConfigText(cfg, std::string_view(reinterpret_cast<const char*>(bytes.data()),
                                        bytes.size()),
                  path.string());
}

std::string EnvVarName(std::string_view key) {
  std::string out = "PAGG_";
  for (char c : key) {
    out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return out;
}

void ApplyEnvironment(RunConfig& cfg, const EnvLookup& lookup) {
  for (const auto& k : Keys()) {
    const std::string var = EnvVarName(k.name);
    if (const char* value = lookup(var.c_str())) {
      try {
        k.set(cfg, k.name, Trim(value));
      } catch (const ConfigError& e) {
        throw ConfigError(var + ": " + e.what());
      }
    }
  }
}

std::string HashHex(std::string_view text) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace pagg
