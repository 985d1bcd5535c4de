#ifndef PAGG_BASELINES_HPP
#define PAGG_BASELINES_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pagg/descriptor.hpp"
#include "pagg/rng.hpp"

namespace pagg {

// Per-bit majority: bit j is set iff at least half the descriptors have it
// set (an exact 0.5 tie rounds to 1).
BinaryDescriptor QuantizedMean(std::span<const BinaryDescriptor> descriptors);

// One descriptor chosen uniformly at random.
const BinaryDescriptor& RandomSamplePrototype(
    std::span<const BinaryDescriptor> descriptors, Rng& rng);

struct PcaModel {
  Eigen::VectorXd mean;                  // b
  Eigen::MatrixXd projection;            // m x b, orthonormal rows
  std::vector<double> explained_variance;  // non-increasing
  int sweeps = 0;
  bool converged = false;

  int input_dim() const { return static_cast<int>(mean.size()); }
  int output_dim() const { return static_cast<int>(projection.rows()); }

  Eigen::VectorXd Project(const BinaryDescriptor& d) const;

  // "PPCA" format: magic, u16 version, u32 b, u32 m, mean (b float64),
  // row-major projection (m x b float64), little-endian.
  std::vector<uint8_t> Serialize() const;
  static PcaModel Deserialize(std::span<const uint8_t> bytes,
                              const std::string& name = "pca");
  void Save(const std::filesystem::path& path) const;
  static PcaModel Load(const std::filesystem::path& path);
};

struct PcaOptions {
  // Stop once the leading m-dimensional subspace moves by at most this much
  // (Frobenius norm of the component orthogonal to the previous subspace).
  double tolerance = 1e-8;
  int max_sweeps = 5000;
  // Extra block columns beyond m; they speed up convergence of the leading m.
  int oversample = 16;
};

// Top-m principal components of the {0,1}-encoded descriptors by orthogonal
// iteration on the covariance, with Rayleigh-Ritz rotation each sweep.
// Throws std::invalid_argument if the sample is not larger than m, m exceeds
// the width, or the sample has zero variance.
PcaModel PcaFit(std::span<const BinaryDescriptor> sample, int m, uint64_t seed,
                const PcaOptions& options = {});

// Same, from a dense b x n data matrix (one sample per column).
PcaModel PcaFitDense(const Eigen::MatrixXd& data, int m, uint64_t seed,
                     const PcaOptions& options = {});

// Mean of the projections P (x - mu) over `descriptors`.
Eigen::VectorXd PcaPrototype(const PcaModel& model,
                             std::span<const BinaryDescriptor> descriptors);

// Eigen-decomposition of a small symmetric matrix by cyclic Jacobi rotations.
// Eigenvalues are returned in decreasing order with matching columns.
struct SymmetricEigen {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};
SymmetricEigen JacobiEigen(const Eigen::MatrixXd& symmetric);

}  // namespace pagg

#endif  // PAGG_BASELINES_HPP
