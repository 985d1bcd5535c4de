#include "pagg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "binary_io.hpp"
#include "pagg/error.hpp"
#include "pagg/rng.hpp"

namespace pagg {
namespace {

constexpr std::string_view kDatasetMagic = "PDSC";
constexpr uint16_t kDatasetVersion = 1;

}  // namespace

LabelledDataset::LabelledDataset(int bits) : bits_(bits) {
  ValidateDescriptorBits(bits);
}

LabelledDataset::LabelledDataset(int bits,
                                 std::vector<LabelledDescriptor> records)
    : bits_(bits), records_(std::move(records)) {
  ValidateDescriptorBits(bits);
  std::set<std::pair<uint64_t, uint64_t>> seen;
  for (size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.descriptor.bits() != bits_) {
      throw std::invalid_argument("record " + std::to_string(i) + " has width " +
                                  std::to_string(r.descriptor.bits()) +
                                  ", dataset width is " + std::to_string(bits_));
    }
    if (!seen.emplace(r.landmark_id, r.keyframe_id).second) {
      throw std::invalid_argument(
          "duplicate (landmark " + std::to_string(r.landmark_id) +
          ", keyframe " + std::to_string(r.keyframe_id) + ") record");
    }
    by_landmark_[r.landmark_id].push_back(i);
    by_keyframe_[r.keyframe_id].push_back(i);
  }
}

std::vector<BinaryDescriptor> LabelledDataset::DescriptorsOf(
    uint64_t landmark_id) const {
  std::vector<BinaryDescriptor> out;
  auto it = by_landmark_.find(landmark_id);
  if (it == by_landmark_.end()) return out;
  out.reserve(it->second.size());
  for (size_t i : it->second) out.push_back(records_[i].descriptor);
  return out;
}

LabelledDataset LabelledDataset::SubsetByKeyframes(
    std::span<const uint64_t> keyframes) const {
  const std::set<uint64_t> keep(keyframes.begin(), keyframes.end());
  std::vector<LabelledDescriptor> out;
  for (const auto& r : records_) {
    if (keep.contains(r.keyframe_id)) out.push_back(r);
  }
  return LabelledDataset(bits_, std::move(out));
}

void SynthConfig::Validate() const {
  if (num_landmarks < 0) {
    throw ConfigError("num_landmarks must be non-negative");
  }
  if (num_keyframes < 1) throw ConfigError("num_keyframes must be >= 1");
  if (min_observations < 1 || max_observations < min_observations) {
    throw ConfigError(
        "observations range [min_observations, max_observations] is empty or "
        "starts below 1");
  }
  if (!(bit_flip_prob >= 0.0 && bit_flip_prob < 0.5)) {
    throw ConfigError("bit_flip_prob must lie in [0, 0.5), got " +
                      std::to_string(bit_flip_prob));
  }
  if (bits <= 0 || bits % 64 != 0) {
    throw ConfigError("bits must be a positive multiple of 64");
  }
  if (max_observations > num_keyframes) {
    throw ConfigError("max_observations (" + std::to_string(max_observations) +
                      ") exceeds num_keyframes (" +
                      std::to_string(num_keyframes) + ")");
  }
}

LabelledDataset GenerateSynthetic(const SynthConfig& cfg) {
  cfg.Validate();
  Rng rng(cfg.seed);
  std::uniform_int_distribution<int> obs_count(cfg.min_observations,
                                               cfg.max_observations);
  std::bernoulli_distribution coin(0.5);
  std::bernoulli_distribution flip(cfg.bit_flip_prob);

  std::vector<uint64_t> keyframes(cfg.num_keyframes);
  std::iota(keyframes.begin(), keyframes.end(), uint64_t{0});

  std::vector<LabelledDescriptor> records;
  for (int lm = 0; lm < cfg.num_landmarks; ++lm) {
    BinaryDescriptor canonical(cfg.bits);
    for (int j = 0; j < cfg.bits; ++j) canonical.Set(j, coin(rng));
    const int n = obs_count(rng);
    // Partial Fisher-Yates: first n entries become a uniform n-subset.
    for (int i = 0; i < n; ++i) {
      std::uniform_int_distribution<int> pick(i, cfg.num_keyframes - 1);
      std::swap(keyframes[i], keyframes[pick(rng)]);
    }
    for (int i = 0; i < n; ++i) {
      BinaryDescriptor obs = canonical;
      if (cfg.bit_flip_prob > 0.0) {
        for (int j = 0; j < cfg.bits; ++j) {
          if (flip(rng)) obs.Flip(j);
        }
      }
      records.push_back({std::move(obs), static_cast<uint64_t>(lm), keyframes[i]});
    }
  }
  return LabelledDataset(cfg.bits, std::move(records));
}

std::vector<uint8_t> SerializeDataset(const LabelledDataset& dataset) {
  io::ByteWriter w;
  w.Magic(kDatasetMagic);
  w.U16(kDatasetVersion);
  w.U32(static_cast<uint32_t>(dataset.bits()));
  w.U64(dataset.size());
  for (const auto& r : dataset.records()) {
    w.U64(r.landmark_id);
    w.U64(r.keyframe_id);
    w.Bytes(r.descriptor.ToBytes());
  }
  return w.bytes();
}

LabelledDataset DeserializeDataset(std::span<const uint8_t> bytes,
                                   const std::string& name) {
  io::ByteReader r(bytes, name);
  r.ExpectMagic(kDatasetMagic);
  r.ExpectVersion(kDatasetVersion);
  const uint32_t bits = r.U32();
  if (bits == 0 || bits % 64 != 0 || bits > (1u << 24)) {
    throw FormatError(FormatError::Kind::kBadWidth,
                      name + ": descriptor width " + std::to_string(bits) +
                          " is not a positive multiple of 64");
  }
  const uint64_t count = r.U64();
  const uint64_t record_bytes = 16 + bits / 8;
  if (count > r.remaining() / record_bytes) {
    throw FormatError(FormatError::Kind::kTruncated,
                      name + ": truncated file (header declares " +
                          std::to_string(count) + " records)");
  }
  r.ExpectRemaining(count * record_bytes);
  std::vector<LabelledDescriptor> records;
  records.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    LabelledDescriptor rec;
    rec.landmark_id = r.U64();
    rec.keyframe_id = r.U64();
    rec.descriptor = BinaryDescriptor::FromBytes(r.Bytes(bits / 8));
    records.push_back(std::move(rec));
  }
  try {
    return LabelledDataset(static_cast<int>(bits), std::move(records));
  } catch (const std::invalid_argument& e) {
    throw FormatError(FormatError::Kind::kBadValue, name + ": " + e.what());
  }
}

void SaveDataset(const LabelledDataset& dataset,
                 const std::filesystem::path& path) {
  io::WriteFile(path, SerializeDataset(dataset));
}

LabelledDataset LoadDataset(const std::filesystem::path& path) {
  return DeserializeDataset(io::ReadFile(path), path.string());
}

std::string ToHex(const BinaryDescriptor& d) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  for (uint8_t b : d.ToBytes()) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 15]);
  }
  return out;
}

LabelledDataset ParseTextDataset(std::string_view text,
                                 const std::string& name) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  std::vector<LabelledDescriptor> records;
  int bits = 0;
  size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    std::string lm, kf, hex, extra;
    if (!(fields >> lm)) continue;
    const std::string where = name + ":" + std::to_string(line_no) + ": ";
    if (!(fields >> kf >> hex) || (fields >> extra)) {
      throw FormatError(FormatError::Kind::kBadValue,
                        where + "expected 'landmark_id keyframe_id hex'");
    }
    LabelledDescriptor rec;
    try {
      size_t used = 0;
      rec.landmark_id = std::stoull(lm, &used);
      if (used != lm.size()) throw std::invalid_argument(lm);
      rec.keyframe_id = std::stoull(kf, &used);
      if (used != kf.size()) throw std::invalid_argument(kf);
    } catch (const std::logic_error&) {
      throw FormatError(FormatError::Kind::kBadValue, where + "bad id");
    }
    const int width = static_cast<int>(hex.size() * 4);
    if (hex.size() % 2 != 0 || width == 0 || width % 64 != 0) {
      throw FormatError(FormatError::Kind::kBadWidth,
                        where + "descriptor width " + std::to_string(width) +
                            " is not a positive multiple of 64");
    }
    if (bits == 0) bits = width;
    if (width != bits) {
      throw FormatError(FormatError::Kind::kBadWidth,
                        where + "descriptor width differs from earlier lines");
    }
    std::vector<uint8_t> bytes(hex.size() / 2);
    for (size_t i = 0; i < bytes.size(); ++i) {
      const int hi = nibble(hex[2 * i]);
      const int lo = nibble(hex[2 * i + 1]);
      if (hi < 0 || lo < 0) {
        throw FormatError(FormatError::Kind::kBadValue,
                          where + "invalid hex digit");
      }
      bytes[i] = static_cast<uint8_t>(hi << 4 | lo);
    }
    rec.descriptor = BinaryDescriptor::FromBytes(bytes);
    records.push_back(std::move(rec));
  }
  try {
    return LabelledDataset(bits == 0 ? kDefaultDescriptorBits : bits,
                           std::move(records));
  } catch (const std::invalid_argument& e) {
    throw FormatError(FormatError::Kind::kBadValue, name + ": " + e.what());
  }
}

LabelledDataset ImportTextDataset(const std::filesystem::path& path) {
  const auto bytes = io::ReadFile(path);
  return ParseTextDataset(
      std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
      path.string());
}

KeyframeSplit SplitByKeyframe(const LabelledDataset& dataset,
                              double support_fraction, uint64_t seed) {
  if (!(support_fraction > 0.0 && support_fraction < 1.0)) {
    throw std::invalid_argument("support_fraction must lie in (0, 1)");
  }
  if (dataset.num_keyframes() < 2) {
    throw std::invalid_argument("cannot split a dataset with fewer than 2 keyframes");
  }
  std::vector<uint64_t> keyframes;
  keyframes.reserve(dataset.num_keyframes());
  for (const auto& [kf, _] : dataset.by_keyframe()) keyframes.push_back(kf);
  Rng rng(seed);
  std::shuffle(keyframes.begin(), keyframes.end(), rng);
  const auto n = static_cast<long>(keyframes.size());
  const long n_support =
      std::clamp(std::lround(support_fraction * double(n)), 1L, n - 1);
  std::span<const uint64_t> all(keyframes);
  return {dataset.SubsetByKeyframes(all.first(n_support)),
          dataset.SubsetByKeyframes(all.subspan(n_support))};
}

}  // namespace pagg
