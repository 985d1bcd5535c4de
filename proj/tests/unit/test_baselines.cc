#include "doctest.h"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

#include "pagg/baselines.hpp"
#include "pagg/error.hpp"
#include "test_util.hpp"

using namespace pagg;
using pagg::testing::RandomDescriptor;
using pagg::testing::TempDir;

namespace {

BinaryDescriptor FirstBit(bool set) {
  BinaryDescriptor d(64);
  d.Set(0, set);
  return d;
}

// Descriptors whose {0,1} covariance has a clear spectral structure: a few
// "prototype" patterns with noise.
std::vector<BinaryDescriptor> Clustered(int n, int bits, Rng& rng) {
  std::vector<BinaryDescriptor> centers;
  for (int c = 0; c < 6; ++c) centers.push_back(RandomDescriptor(bits, rng));
  std::bernoulli_distribution flip(0.1);
  std::vector<BinaryDescriptor> out;
  for (int i = 0; i < n; ++i) {
    BinaryDescriptor d = centers[size_t(i) % centers.size()];
    for (int j = 0; j < bits; ++j) {
      if (flip(rng)) d.Flip(j);
    }
    out.push_back(d);
  }
  return out;
}

}  // namespace

TEST_CASE("quantized mean is the per-bit majority, ties round up") {
  Rng rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 1 + int(rng() % 9);
    std::vector<BinaryDescriptor> ds;
    for (int i = 0; i < n; ++i) ds.push_back(RandomDescriptor(128, rng));
    const BinaryDescriptor q = QuantizedMean(ds);
    for (int j = 0; j < 128; ++j) {
      int ones = 0;
      for (const auto& d : ds) ones += d.Test(j);
      CHECK(q.Test(j) == (ones * 2 >= n));
    }
  }
  CHECK(QuantizedMean(std::vector{FirstBit(true), FirstBit(false)}).Test(0));
  CHECK_THROWS_AS(QuantizedMean({}), std::invalid_argument);
}

TEST_CASE("quantized mean cannot be updated incrementally") {
  // Same size, same quantized mean; appending the same descriptor gives
  // different quantized means, so no update rule on (mean, count) exists.
  const std::vector<BinaryDescriptor> a{FirstBit(true), FirstBit(true), FirstBit(true),
                                        FirstBit(false)};
  const std::vector<BinaryDescriptor> b{FirstBit(true), FirstBit(true), FirstBit(false),
                                        FirstBit(false)};
  REQUIRE(a.size() == b.size());
  REQUIRE(QuantizedMean(a) == QuantizedMean(b));
  auto a2 = a, b2 = b;
  a2.push_back(FirstBit(false));
  b2.push_back(FirstBit(false));
  CHECK_FALSE(QuantizedMean(a2) == QuantizedMean(b2));
}

TEST_CASE("random sample picks uniformly from the list") {
  std::vector<BinaryDescriptor> ds;
  for (int i = 0; i < 4; ++i) {
    BinaryDescriptor d(64);
    d.Set(i);
    ds.push_back(d);
  }
  Rng rng(2);
  std::vector<int> counts(4, 0);
  const int n = 8000;
  for (int t = 0; t < n; ++t) {
    const auto& d = RandomSamplePrototype(ds, rng);
    for (int i = 0; i < 4; ++i) counts[size_t(i)] += d.Test(i);
  }
  const double sigma = std::sqrt(n * 0.25 * 0.75);
  for (int c : counts) CHECK(std::abs(c - n / 4.0) <= 3 * sigma);
  CHECK_THROWS_AS(RandomSamplePrototype({}, rng), std::invalid_argument);
}

TEST_CASE("jacobi eigen-decomposition matches a dense solver") {
  Rng rng(3);
  for (int n : {1, 2, 5, 20}) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Random(n, n);
    a = (a + a.transpose()).eval();
    const SymmetricEigen mine = JacobiEigen(a);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> oracle(a);
    for (int i = 0; i < n; ++i) {
      CHECK(mine.values[i] == doctest::Approx(oracle.eigenvalues()[n - 1 - i]).epsilon(1e-10));
      if (i > 0) CHECK(mine.values[i] <= mine.values[i - 1]);
    }
    const Eigen::MatrixXd back =
        mine.vectors * mine.values.asDiagonal() * mine.vectors.transpose();
    CHECK((back - a).norm() < 1e-10 * std::max(1.0, a.norm()));
    CHECK((mine.vectors.transpose() * mine.vectors -
           Eigen::MatrixXd::Identity(n, n)).norm() < 1e-12);
  }
}

TEST_CASE("pca matches the dense eigen-decomposition of the covariance") {
  Rng rng(4);
  const auto sample = Clustered(600, 128, rng);
  const int m = 5;
  const PcaModel model = PcaFit(sample, m, 9);
  CHECK(model.converged);
  REQUIRE(model.output_dim() == m);
  REQUIRE(model.input_dim() == 128);

  const Eigen::MatrixXd x = ToRealColumns(sample);
  const Eigen::VectorXd mean = x.rowwise().mean();
  CHECK((model.mean - mean).norm() < 1e-12);
  const Eigen::MatrixXd c = x.colwise() - mean;
  const Eigen::MatrixXd cov = c * c.transpose() / double(sample.size() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> oracle(cov);
  const Eigen::MatrixXd top = oracle.eigenvectors().rightCols(m);
  // Same subspace: the projectors agree.
  const Eigen::MatrixXd p_mine = model.projection.transpose() * model.projection;
  CHECK((p_mine - top * top.transpose()).norm() < 1e-6);
  for (int i = 0; i < m; ++i) {
    CHECK(model.explained_variance[size_t(i)] ==
          doctest::Approx(oracle.eigenvalues()[127 - i]).epsilon(1e-8));
  }
  CHECK((model.projection * model.projection.transpose() -
         Eigen::MatrixXd::Identity(m, m)).norm() < 1e-10);
  for (int r = 0; r < m; ++r) {
    Eigen::Index arg = 0;
    model.projection.row(r).cwiseAbs().maxCoeff(&arg);
    CHECK(model.projection(r, arg) > 0.0);
  }
}

TEST_CASE("pca on a dense matrix and determinism") {
  Rng rng(5);
  Eigen::MatrixXd data = Eigen::MatrixXd::Random(10, 200);
  data.row(3) *= 10.0;
  const PcaModel a = PcaFitDense(data, 2, 1);
  const PcaModel b = PcaFitDense(data, 2, 1);
  CHECK(a.projection == b.projection);
  CHECK(std::abs(a.projection(0, 3)) > 0.99);
}

TEST_CASE("pca argument errors") {
  Rng rng(6);
  std::vector<BinaryDescriptor> few{RandomDescriptor(64, rng), RandomDescriptor(64, rng)};
  CHECK_THROWS_AS(PcaFit(few, 2, 1), std::invalid_argument);
  CHECK_THROWS_AS(PcaFit(few, 0, 1), std::invalid_argument);
  std::vector<BinaryDescriptor> many(10, BinaryDescriptor(64));
  CHECK_THROWS_AS(PcaFit(many, 65, 1), std::invalid_argument);
  CHECK_THROWS_AS(PcaFit(many, 2, 1), std::invalid_argument);  // zero variance
}

TEST_CASE("pca prototype is the mean projection") {
  Rng rng(7);
  const auto sample = Clustered(100, 64, rng);
  const PcaModel model = PcaFit(sample, 3, 2);
  const std::span<const BinaryDescriptor> few(sample.data(), 5);
  Eigen::VectorXd want = Eigen::VectorXd::Zero(3);
  for (const auto& d : few) want += model.projection * (ToReal(d) - model.mean);
  want /= 5.0;
  CHECK((PcaPrototype(model, few) - want).norm() < 1e-12);
  CHECK_THROWS_AS(model.Project(BinaryDescriptor(128)), std::invalid_argument);
}

TEST_CASE("pca model file round trip and errors") {
  Rng rng(8);
  const PcaModel model = PcaFit(Clustered(80, 64, rng), 2, 3);
  const auto bytes = model.Serialize();
  const PcaModel back = PcaModel::Deserialize(bytes);
  CHECK(back.mean == model.mean);
  CHECK(back.projection == model.projection);
  TempDir dir("pca");
  model.Save(dir / "p.ppca");
  CHECK(PcaModel::Load(dir / "p.ppca").projection == model.projection);
  auto bad = bytes;
  bad[0] = 'Q';
  CHECK_THROWS_AS(PcaModel::Deserialize(bad), FormatError);
  CHECK_THROWS_AS(PcaModel::Deserialize({bytes.begin(), bytes.end() - 8}), FormatError);
}
