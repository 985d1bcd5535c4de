#ifndef PAGG_DATASET_HPP
#define PAGG_DATASET_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pagg/descriptor.hpp"

namespace pagg {

struct LabelledDescriptor {
  BinaryDescriptor descriptor;
  uint64_t landmark_id = 0;
  uint64_t keyframe_id = 0;

  friend bool operator==(const LabelledDescriptor&,
                         const LabelledDescriptor&) = default;
};

// Immutable collection of labelled descriptors of one width, indexed by
// landmark and by keyframe. Index maps are ordered so iteration is
// deterministic.
class LabelledDataset {
 public:
  explicit LabelledDataset(int bits = kDefaultDescriptorBits);
  // Validates width uniformity and (landmark, keyframe) uniqueness; throws
  // std::invalid_argument otherwise.
  LabelledDataset(int bits, std::vector<LabelledDescriptor> records);

  int bits() const { return bits_; }
  size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const std::vector<LabelledDescriptor>& records() const { return records_; }
  const LabelledDescriptor& operator[](size_t i) const { return records_[i]; }

  // landmark id -> record indices (in record order).
  const std::map<uint64_t, std::vector<size_t>>& by_landmark() const {
    return by_landmark_;
  }
  const std::map<uint64_t, std::vector<size_t>>& by_keyframe() const {
    return by_keyframe_;
  }
  size_t num_landmarks() const { return by_landmark_.size(); }
  size_t num_keyframes() const { return by_keyframe_.size(); }

  std::vector<BinaryDescriptor> DescriptorsOf(uint64_t landmark_id) const;

  // Records whose keyframe is in `keyframes`, in original order.
  LabelledDataset SubsetByKeyframes(std::span<const uint64_t> keyframes) const;

  friend bool operator==(const LabelledDataset& a, const LabelledDataset& b) {
    return a.bits_ == b.bits_ && a.records_ == b.records_;
  }

 private:
  int bits_;
  std::vector<LabelledDescriptor> records_;
  std::map<uint64_t, std::vector<size_t>> by_landmark_;
  std::map<uint64_t, std::vector<size_t>> by_keyframe_;
};

struct SynthConfig {
  int num_landmarks = 500;
  int num_keyframes = 200;
  int min_observations = 3;
  int max_observations = 15;
  double bit_flip_prob = 0.05;
  int bits = kDefaultDescriptorBits;
  uint64_t seed = 1;

  // Throws ConfigError naming the offending field.
  void Validate() const;
};

// Each landmark gets a uniformly random canonical descriptor; each of its
// observations is that descriptor with bits flipped i.i.d. with probability
// bit_flip_prob, seen in a distinct uniformly chosen keyframe.
LabelledDataset GenerateSynthetic(const SynthConfig& cfg);

// "PDSC" binary format: magic, u16 version, u32 width, u64 record count, then
// (u64 landmark, u64 keyframe, width/8 descriptor bytes) per record, all
// little-endian.
std::vector<uint8_t> SerializeDataset(const LabelledDataset& dataset);
LabelledDataset DeserializeDataset(std::span<const uint8_t> bytes,
                                   const std::string& name = "dataset");
void SaveDataset(const LabelledDataset& dataset,
                 const std::filesystem::path& path);
LabelledDataset LoadDataset(const std::filesystem::path& path);

// Plain-text import: one record per line, "landmark_id keyframe_id hex"
// (whitespace or comma separated, '#' comments). The hex string is the
// descriptor's little-endian byte image, two digits per byte.
LabelledDataset ParseTextDataset(std::string_view text,
                                 const std::string& name = "text");
LabelledDataset ImportTextDataset(const std::filesystem::path& path);
std::string ToHex(const BinaryDescriptor& d);

struct KeyframeSplit {
  LabelledDataset support;
  LabelledDataset query;
};

// Partitions keyframes: round(fraction * num_keyframes) uniformly chosen
// keyframes (clamped to leave both sides non-empty) form the support set.
KeyframeSplit SplitByKeyframe(const LabelledDataset& dataset,
                              double support_fraction, uint64_t seed);

}  // namespace pagg

#endif  // PAGG_DATASET_HPP
