#include "pagg/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include <Eigen/QR>

#include "binary_io.hpp"
#include "pagg/error.hpp"

namespace pagg {
namespace {

constexpr std::string_view kPcaMagic = "PPCA";
constexpr uint16_t kPcaVersion = 1;

Eigen::MatrixXd Orthonormalize(const Eigen::MatrixXd& z) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(z);
  return qr.householderQ() * Eigen::MatrixXd::Identity(z.rows(), z.cols());
}

PcaModel FitFromCovariance(Eigen::VectorXd mean, const Eigen::MatrixXd& cov,
                           int m, uint64_t seed, const PcaOptions& options) {
  const auto b = static_cast<int>(cov.rows());
  if (!(cov.trace() > 0.0)) {
    throw std::invalid_argument("PCA sample has zero variance (all descriptors identical)");
  }
  const int p = std::min(b, m + std::max(0, options.oversample));

  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd q(b, p);
  for (int c = 0; c < p; ++c) {
    for (int r = 0; r < b; ++r) q(r, c) = normal(rng);
  }
  q = Orthonormalize(q);
  Eigen::MatrixXd w = cov * q;

  PcaModel model;
  model.mean = std::move(mean);
  Eigen::MatrixXd previous;
  SymmetricEigen ritz;
  for (int sweep = 1; sweep <= options.max_sweeps; ++sweep) {
    // Rayleigh-Ritz: rotate the block onto the eigenvectors of Q^T C Q.
    Eigen::MatrixXd t = q.transpose() * w;
    t = 0.5 * (t + t.transpose()).eval();
    ritz = JacobiEigen(t);
    q = q * ritz.vectors;
    w = w * ritz.vectors;
    model.sweeps = sweep;

    const auto leading = q.leftCols(m);
    if (previous.size() != 0) {
      const double change =
          (leading - previous * (previous.transpose() * leading)).norm();
      if (change <= options.tolerance) {
        model.converged = true;
        break;
      }
    }
    previous = leading;
    q = Orthonormalize(w);
    w = cov * q;
  }

  Eigen::MatrixXd components = q.leftCols(m);
  // Sign convention: the largest-magnitude entry of each component is positive.
  for (int c = 0; c < m; ++c) {
    Eigen::Index arg = 0;
    components.col(c).cwiseAbs().maxCoeff(&arg);
    if (components(arg, c) < 0.0) components.col(c) *= -1.0;
  }
  model.projection = components.transpose();
  model.explained_variance.assign(ritz.values.data(), ritz.values.data() + m);
  return model;
}

void CheckPcaShape(size_t n, int b, int m) {
  if (m < 1 || m > b) {
    throw std::invalid_argument("PCA output dimension must lie in [1, " +
                                std::to_string(b) + "]");
  }
  if (n <= static_cast<size_t>(m)) {
    throw std::invalid_argument("PCA needs more samples (" + std::to_string(n) +
                                ") than components (" + std::to_string(m) + ")");
  }
}

}  // namespace

BinaryDescriptor QuantizedMean(std::span<const BinaryDescriptor> descriptors) {
  if (descriptors.empty()) {
    throw std::invalid_argument("quantized mean of an empty list");
  }
  const int bits = descriptors.front().bits();
  std::vector<int> counts(static_cast<size_t>(bits), 0);
  for (const auto& d : descriptors) {
    if (d.bits() != bits) throw std::invalid_argument("mixed descriptor widths");
    for (int j = 0; j < bits; ++j) counts[size_t(j)] += d.Test(j);
  }
  BinaryDescriptor out(bits);
  const auto n = static_cast<int>(descriptors.size());
  for (int j = 0; j < bits; ++j) out.Set(j, 2 * counts[size_t(j)] >= n);
  return out;
}

const BinaryDescriptor& RandomSamplePrototype(
    std::span<const BinaryDescriptor> descriptors, Rng& rng) {
  if (descriptors.empty()) {
    throw std::invalid_argument("random sample of an empty list");
  }
  std::uniform_int_distribution<size_t> pick(0, descriptors.size() - 1);
  return descriptors[pick(rng)];
}

Eigen::VectorXd PcaModel::Project(const BinaryDescriptor& d) const {
  if (d.bits() != input_dim()) {
    throw std::invalid_argument("descriptor width does not match PCA model");
  }
  return projection * (ToReal(d) - mean);
}

PcaModel PcaFitDense(const Eigen::MatrixXd& data, int m, uint64_t seed,
                     const PcaOptions& options) {
  CheckPcaShape(static_cast<size_t>(data.cols()), static_cast<int>(data.rows()), m);
  Eigen::VectorXd mean = data.rowwise().mean();
  const Eigen::MatrixXd centered = data.colwise() - mean;
  const Eigen::MatrixXd cov =
      centered * centered.transpose() / double(data.cols() - 1);
  return FitFromCovariance(std::move(mean), cov, m, seed, options);
}

PcaModel PcaFit(std::span<const BinaryDescriptor> sample, int m, uint64_t seed,
                const PcaOptions& options) {
  if (sample.empty()) throw std::invalid_argument("PCA of an empty sample");
  const int b = sample.front().bits();
  CheckPcaShape(sample.size(), b, m);

  // Two passes over bounded chunks keep memory at O(b^2) for large samples.
  constexpr size_t kChunk = 4096;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(b);
  for (const auto& d : sample) {
    if (d.bits() != b) throw std::invalid_argument("mixed descriptor widths");
    for (int j = 0; j < b; ++j) sum[j] += d.Test(j);
  }
  Eigen::VectorXd mean = sum / double(sample.size());
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(b, b);
  for (size_t begin = 0; begin < sample.size(); begin += kChunk) {
    const size_t len = std::min(kChunk, sample.size() - begin);
    const Eigen::MatrixXd centered =
        ToRealColumns(sample.subspan(begin, len)).colwise() - mean;
    cov.selfadjointView<Eigen::Lower>().rankUpdate(centered);
  }
  cov = cov.selfadjointView<Eigen::Lower>();
  cov /= double(sample.size() - 1);
  return FitFromCovariance(std::move(mean), cov, m, seed, options);
}

Eigen::VectorXd PcaPrototype(const PcaModel& model,
                             std::span<const BinaryDescriptor> descriptors) {
  if (descriptors.empty()) {
    throw std::invalid_argument("PCA prototype of an empty list");
  }
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(model.output_dim());
  for (const auto& d : descriptors) sum += model.Project(d);
  return sum / double(descriptors.size());
}

SymmetricEigen JacobiEigen(const Eigen::MatrixXd& symmetric) {
  const Eigen::Index n = symmetric.rows();
  if (symmetric.cols() != n) throw std::invalid_argument("matrix is not square");
  Eigen::MatrixXd a = symmetric;
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  const double scale = std::max(a.norm(), std::numeric_limits<double>::min());
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    }
    if (std::sqrt(off) <= 1e-15 * scale) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<Eigen::Index> order(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[size_t(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) {
    return a(x, x) > a(y, y);
  });
  SymmetricEigen out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values[i] = a(order[size_t(i)], order[size_t(i)]);
    out.vectors.col(i) = v.col(order[size_t(i)]);
  }
  return out;
}

std::vector<uint8_t> PcaModel::Serialize() const {
  io::ByteWriter w;
  w.Magic(kPcaMagic);
  w.U16(kPcaVersion);
  w.U32(static_cast<uint32_t>(input_dim()));
  w.U32(static_cast<uint32_t>(output_dim()));
  for (Eigen::Index i = 0; i < mean.size(); ++i) w.F64(mean[i]);
  for (Eigen::Index r = 0; r < projection.rows(); ++r) {
    for (Eigen::Index c = 0; c < projection.cols(); ++c) w.F64(projection(r, c));
  }
  return w.bytes();
}

PcaModel PcaModel::Deserialize(std::span<const uint8_t> bytes,
                               const std::string& name) {
  io::ByteReader r(bytes, name);
  r.ExpectMagic(kPcaMagic);
  r.ExpectVersion(kPcaVersion);
  const uint32_t b = r.U32();
  const uint32_t m = r.U32();
  if (b == 0 || b > (1u << 20) || m == 0 || m > b) {
    throw FormatError(FormatError::Kind::kBadWidth,
                      name + ": invalid PCA dimensions " + std::to_string(b) +
                          " x " + std::to_string(m));
  }
  r.ExpectRemaining((uint64_t{b} + uint64_t{m} * b) * 8);
  PcaModel model;
  model.mean.resize(b);
  for (uint32_t i = 0; i < b; ++i) model.mean[i] = r.F64();
  model.projection.resize(m, b);
  for (uint32_t row = 0; row < m; ++row) {
    for (uint32_t col = 0; col < b; ++col) model.projection(row, col) = r.F64();
  }
  model.converged = true;
  return model;
}

void PcaModel::Save(const std::filesystem::path& path) const {
  io::WriteFile(path, Serialize());
}

PcaModel PcaModel::Load(const std::filesystem::path& path) {
  return Deserialize(io::ReadFile(path), path.string());
}

}  // namespace pagg
