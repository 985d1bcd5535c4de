#include "doctest.h"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "pagg/dataset.hpp"
#include "pagg/error.hpp"
#include "test_util.hpp"

using namespace pagg;
using pagg::testing::TempDir;

namespace {

SynthConfig Small(uint64_t seed = 1) {
  SynthConfig c;
  c.num_landmarks = 60;
  c.num_keyframes = 40;
  c.min_observations = 3;
  c.max_observations = 9;
  c.bits = 256;
  c.seed = seed;
  return c;
}

int FormatKind(const std::vector<uint8_t>& bytes) {
  try {
    DeserializeDataset(bytes);
  } catch (const FormatError& e) {
    return int(e.kind());
  }
  return -1;
}

}  // namespace

TEST_CASE("synthetic corpus has the configured shape") {
  const SynthConfig cfg = Small();
  const LabelledDataset d = GenerateSynthetic(cfg);
  CHECK(d.bits() == 256);
  CHECK(d.num_landmarks() == 60);
  for (const auto& [lm, recs] : d.by_landmark()) {
    CHECK(lm < 60);
    CHECK(recs.size() >= 3);
    CHECK(recs.size() <= 9);
    std::set<uint64_t> frames;
    for (size_t r : recs) frames.insert(d[r].keyframe_id);
    CHECK(frames.size() == recs.size());
  }
  for (const auto& r : d.records()) CHECK(r.keyframe_id < 40);
}

TEST_CASE("zero flip probability repeats the canonical descriptor") {
  SynthConfig cfg = Small();
  cfg.bit_flip_prob = 0.0;
  const LabelledDataset d = GenerateSynthetic(cfg);
  for (const auto& [lm, recs] : d.by_landmark()) {
    for (size_t r : recs) CHECK(d[r].descriptor == d[recs.front()].descriptor);
  }
}

TEST_CASE("observation noise has the expected pairwise distance") {
  SynthConfig cfg = Small();
  cfg.bits = 512;
  cfg.bit_flip_prob = 0.05;
  cfg.num_landmarks = 200;
  const LabelledDataset d = GenerateSynthetic(cfg);
  double sum = 0.0;
  int pairs = 0;
  for (const auto& [lm, recs] : d.by_landmark()) {
    for (size_t i = 1; i < recs.size(); ++i) {
      sum += Hamming(d[recs[0]].descriptor, d[recs[i]].descriptor);
      ++pairs;
    }
  }
  // Two independent flips differ with probability 2p(1-p).
  const double expected = 512 * 2 * 0.05 * 0.95;
  const double sd = std::sqrt(512 * 0.095 * 0.905 / pairs);
  CHECK(std::abs(sum / pairs - expected) < 5 * sd);
}

TEST_CASE("generation is deterministic per seed") {
  CHECK(GenerateSynthetic(Small(4)) == GenerateSynthetic(Small(4)));
  CHECK_FALSE(GenerateSynthetic(Small(4)) == GenerateSynthetic(Small(5)));
}

TEST_CASE("invalid synthetic configs name the field") {
  SynthConfig c;
  c.bit_flip_prob = 0.7;
  CHECK_THROWS_WITH_AS(c.Validate(), doctest::Contains("bit_flip_prob"), ConfigError);
  c = {};
  c.max_observations = 2;
  CHECK_THROWS_WITH_AS(c.Validate(), doctest::Contains("max_observations"), ConfigError);
  c = {};
  c.max_observations = 500;
  CHECK_THROWS_AS(c.Validate(), ConfigError);  // more than num_keyframes
  c = {};
  c.bits = 100;
  CHECK_THROWS_WITH_AS(c.Validate(), doctest::Contains("bits"), ConfigError);
}

TEST_CASE("dataset construction validates records") {
  CHECK_THROWS_AS(LabelledDataset(64, {{BinaryDescriptor(128), 0, 0}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(LabelledDataset(64, {{BinaryDescriptor(64), 1, 2},
                                       {BinaryDescriptor(64), 1, 2}}),
                  std::invalid_argument);
  const LabelledDataset d(64, {{BinaryDescriptor(64), 3, 0},
                               {BinaryDescriptor::Ones(64), 3, 1},
                               {BinaryDescriptor(64), 5, 1}});
  CHECK(d.DescriptorsOf(3).size() == 2);
  CHECK(d.DescriptorsOf(4).empty());
  CHECK(d.num_keyframes() == 2);
  const std::vector<uint64_t> kf{1};
  const LabelledDataset sub = d.SubsetByKeyframes(kf);
  CHECK(sub.size() == 2);
  CHECK(sub[0].descriptor == BinaryDescriptor::Ones(64));
}

TEST_CASE("dataset file round trip") {
  const LabelledDataset d = GenerateSynthetic(Small());
  const auto bytes = SerializeDataset(d);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "PDSC");
  CHECK(bytes.size() == 4 + 2 + 4 + 8 + d.size() * (16 + 32));
  CHECK(DeserializeDataset(bytes) == d);
  TempDir dir("ds");
  SaveDataset(d, dir / "d.pdsc");
  CHECK(LoadDataset(dir / "d.pdsc") == d);
  CHECK_THROWS_AS(LoadDataset(dir / "nope.pdsc"), IoError);
}

TEST_CASE("malformed dataset files") {
  const auto bytes = SerializeDataset(GenerateSynthetic(Small()));
  auto b = bytes;
  b[3] = 'X';
  CHECK(FormatKind(b) == int(FormatError::Kind::kBadMagic));
  b = bytes;
  b[4] = 2;
  CHECK(FormatKind(b) == int(FormatError::Kind::kBadVersion));
  b = bytes;
  b[6] = 65;  // width 65
  CHECK(FormatKind(b) == int(FormatError::Kind::kBadWidth));
  CHECK(FormatKind({bytes.begin(), bytes.end() - 1}) == int(FormatError::Kind::kTruncated));
  b = bytes;
  b.push_back(0);
  CHECK(FormatKind(b) == int(FormatError::Kind::kTrailingBytes));
  b = bytes;
  b[17] = 0xff;  // absurd record count
  CHECK(FormatKind(b) == int(FormatError::Kind::kTruncated));
  // Duplicate (landmark, keyframe): copy record 0's ids over record 1.
  b = bytes;
  std::copy(b.begin() + 18, b.begin() + 34, b.begin() + 18 + 48);
  CHECK(FormatKind(b) == int(FormatError::Kind::kBadValue));
}

TEST_CASE("header corruption of dataset files only raises FormatError") {
  const auto bytes = SerializeDataset(GenerateSynthetic(Small()));
  Rng rng(3);
  for (int t = 0; t < 2000; ++t) {
    auto b = bytes;
    b[rng() % 18] = static_cast<uint8_t>(rng());
    try {
      DeserializeDataset(b);
    } catch (const FormatError&) {
    }
  }
}

TEST_CASE("text import") {
  const std::string text =
      "# landmark keyframe descriptor\n"
      "7 0 0100000000000080\n"
      "\n"
      "7, 1, ffffffffffffffff  # trailing comment\n"
      "2 1 0000000000000000\n";
  const LabelledDataset d = ParseTextDataset(text);
  REQUIRE(d.size() == 3);
  CHECK(d.bits() == 64);
  CHECK(d[0].descriptor.Test(0));
  CHECK(d[0].descriptor.Test(63));
  CHECK(d[0].descriptor.PopCount() == 2);
  CHECK(d[1].keyframe_id == 1);
  CHECK(ToHex(d[0].descriptor) == "0100000000000080");

  auto kind = [](const std::string& t) {
    try {
      ParseTextDataset(t);
    } catch (const FormatError& e) {
      return int(e.kind());
    }
    return -1;
  };
  CHECK(kind("1 2\n") == int(FormatError::Kind::kBadValue));
  CHECK(kind("x 2 0000000000000000\n") == int(FormatError::Kind::kBadValue));
  CHECK(kind("1 2 00\n") == int(FormatError::Kind::kBadWidth));
  CHECK(kind("1 2 000000000000000g\n") == int(FormatError::Kind::kBadValue));
  CHECK(kind("1 2 0000000000000000\n1 3 00000000000000000000000000000000\n") ==
        int(FormatError::Kind::kBadWidth));
  CHECK(kind("1 2 0000000000000000\n1 2 0000000000000000\n") ==
        int(FormatError::Kind::kBadValue));
}

TEST_CASE("keyframe split partitions the frames") {
  const LabelledDataset d = GenerateSynthetic(Small());
  const KeyframeSplit s = SplitByKeyframe(d, 0.9, 12);
  CHECK(s.support.size() + s.query.size() == d.size());
  std::set<uint64_t> sk, qk;
  for (const auto& r : s.support.records()) sk.insert(r.keyframe_id);
  for (const auto& r : s.query.records()) qk.insert(r.keyframe_id);
  for (uint64_t k : qk) CHECK_FALSE(sk.contains(k));
  CHECK(sk.size() + qk.size() == d.num_keyframes());
  CHECK(sk.size() == size_t(std::lround(0.9 * double(d.num_keyframes()))));

  const KeyframeSplit again = SplitByKeyframe(d, 0.9, 12);
  CHECK(again.support == s.support);
  CHECK_FALSE(SplitByKeyframe(d, 0.9, 13).support == s.support);

  // Extreme fractions still leave both sides non-empty.
  CHECK(SplitByKeyframe(d, 0.001, 1).support.num_keyframes() == 1);
  CHECK(SplitByKeyframe(d, 0.999, 1).query.num_keyframes() == 1);
  CHECK_THROWS_AS(SplitByKeyframe(d, 1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(SplitByKeyframe(d, 0.0, 1), std::invalid_argument);
  const LabelledDataset one(64, {{BinaryDescriptor(64), 0, 0}});
  CHECK_THROWS_AS(SplitByKeyframe(one, 0.5, 1), std::invalid_argument);
}
