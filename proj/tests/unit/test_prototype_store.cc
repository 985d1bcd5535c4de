#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

#include "pagg/error.hpp"
#include "pagg/prototype_store.hpp"
#include "test_util.hpp"

using namespace pagg;
using pagg::testing::TempDir;

namespace {

std::vector<Eigen::VectorXd> RandomVectors(int n, int k, Rng& rng) {
  std::normal_distribution<double> normal(0, 1);
  std::vector<Eigen::VectorXd> out;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd v(k);
    for (int j = 0; j < k; ++j) v[j] = normal(rng);
    out.push_back(v);
  }
  return out;
}

}  // namespace

TEST_CASE("init is the mean and counts saturate at 255") {
  Rng rng(1);
  const auto vs = RandomVectors(7, 4, rng);
  const Prototype p = InitPrototype(vs);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(4);
  for (const auto& v : vs) mean += v;
  mean /= 7.0;
  CHECK((p.vector - mean).norm() < 1e-14);
  CHECK(p.count == 7);
  CHECK(InitPrototype(RandomVectors(300, 2, rng)).count == 255);
  CHECK_THROWS_AS(InitPrototype({}), std::invalid_argument);
  std::vector<Eigen::VectorXd> mixed{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(3)};
  CHECK_THROWS_AS(InitPrototype(mixed), std::invalid_argument);
}

TEST_CASE("incremental update equals the batch mean") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + int(rng() % 200);
    const auto vs = RandomVectors(n, 16, rng);
    Prototype p = InitPrototype(std::span(vs).first(1));
    for (int i = 1; i < n; ++i) p = UpdatePrototype(p, vs[size_t(i)]);
    const Prototype batch = InitPrototype(vs);
    CHECK((p.vector - batch.vector).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(p.count == batch.count);
  }
}

TEST_CASE("past 255 the update weight stays 1/256") {
  Prototype p{Eigen::VectorXd::Constant(2, 1.0), 255};
  const Eigen::VectorXd e = Eigen::VectorXd::Constant(2, 257.0);
  const Prototype q = UpdatePrototype(p, e);
  CHECK(q.count == 255);
  CHECK(q.vector[0] == doctest::Approx(255.0 / 256.0 + 257.0 / 256.0));
  Prototype fresh{Eigen::VectorXd::Zero(2), 0};
  CHECK_THROWS_AS(UpdatePrototype(fresh, e), std::invalid_argument);
  CHECK_THROWS_AS(UpdatePrototype(p, Eigen::VectorXd::Zero(3)), std::invalid_argument);
}

TEST_CASE("store operations") {
  PrototypeStore store(3);
  std::vector<Eigen::VectorXd> one{Eigen::Vector3d(1, 2, 3)};
  store.Add(7, one);
  CHECK(store.contains(7));
  CHECK(store.size() == 1);
  CHECK_THROWS_AS(store.Add(7, one), std::invalid_argument);
  CHECK_THROWS_AS(store.Get(8), std::out_of_range);
  CHECK_THROWS_AS(store.Update(8, one[0]), std::out_of_range);
  CHECK_THROWS_AS(store.Remove(8), std::out_of_range);
  const Prototype& p = store.Update(7, Eigen::Vector3d(3, 2, 1));
  CHECK(p.count == 2);
  CHECK(p.vector.isApprox(Eigen::Vector3d(2, 2, 2)));
  std::vector<Eigen::VectorXd> wrong{Eigen::VectorXd::Zero(2)};
  CHECK_THROWS_AS(store.Add(9, wrong), std::invalid_argument);
  store.Remove(7);
  CHECK(store.empty());
  CHECK_THROWS_AS(PrototypeStore(0), std::invalid_argument);
}

TEST_CASE("memory report arithmetic") {
  PrototypeStore store(16);
  Rng rng(3);
  for (uint64_t lm = 0; lm < 10; ++lm) store.Add(lm, RandomVectors(8, 16, rng));
  const MemoryReport r = store.Report(512);
  CHECK(r.landmarks == 10);
  CHECK(r.bytes_per_prototype == 65);
  CHECK(r.prototype_bytes == 650);
  CHECK(r.raw_descriptors == 80);
  CHECK(r.raw_bytes == 80 * 64);
  CHECK(r.avg_descriptors_per_landmark == 8.0);
  CHECK(r.compression_ratio == doctest::Approx(512.0 / 65.0));
  CHECK(PrototypeStore(16).Report(512).compression_ratio == 0.0);
}

TEST_CASE("store file round trip keeps float32 values and counts") {
  PrototypeStore store(4);
  Rng rng(4);
  for (uint64_t lm : {3u, 1u, 99u}) store.Add(lm, RandomVectors(int(lm % 5) + 1, 4, rng));
  const auto bytes = store.Serialize();
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "PSTO");
  const PrototypeStore back = PrototypeStore::Deserialize(bytes);
  REQUIRE(back.size() == 3);
  for (const auto& [id, p] : store.prototypes()) {
    const Prototype& q = back.Get(id);
    CHECK(q.count == p.count);
    for (int j = 0; j < 4; ++j) CHECK(q.vector[j] == double(float(p.vector[j])));
  }
  TempDir dir("store");
  store.Save(dir / "s.psto");
  CHECK(PrototypeStore::Load(dir / "s.psto").size() == 3);
  CHECK_THROWS_AS(PrototypeStore::Load(dir / "none.psto"), IoError);
}

TEST_CASE("malformed store files") {
  PrototypeStore store(2);
  std::vector<Eigen::VectorXd> v{Eigen::Vector2d(1, 1)};
  store.Add(1, v);
  const auto bytes = store.Serialize();
  auto kind_of = [](const std::vector<uint8_t>& b) {
    try {
      PrototypeStore::Deserialize(b);
    } catch (const FormatError& e) {
      return int(e.kind());
    }
    return -1;
  };
  auto bad = bytes;
  bad[1] = 'X';
  CHECK(kind_of(bad) == int(FormatError::Kind::kBadMagic));
  CHECK(kind_of({bytes.begin(), bytes.end() - 2}) == int(FormatError::Kind::kTruncated));
  auto longer = bytes;
  longer.push_back(1);
  CHECK(kind_of(longer) == int(FormatError::Kind::kTrailingBytes));

  // Last 4 bytes are the final float32 component; make it NaN.
  auto nan = bytes;
  const float q = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(nan.data() + nan.size() - 4, &q, 4);
  CHECK(kind_of(nan) == int(FormatError::Kind::kBadValue));
  // A stored count of zero is not a prototype.
  auto zero = bytes;
  zero[zero.size() - 9] = 0;
  CHECK(kind_of(zero) == int(FormatError::Kind::kBadValue));
}
