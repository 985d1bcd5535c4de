#ifndef PAGG_NETWORK_HPP
#define PAGG_NETWORK_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace pagg {

// SeLU constants.
inline constexpr double kSeluLambda = 1.0507009873554805;
inline constexpr double kSeluAlpha = 1.6732632423543772;

double Selu(double t);
double SeluDerivative(double t);

enum class ArchFamily : uint8_t { kFat = 0, kFunnel = 1 };

std::string_view ToString(ArchFamily family);
ArchFamily ParseArchFamily(std::string_view name);

// Fully-connected embedding architecture.
//
//   fat:    hidden layers all have `input_dim` units.
//   funnel: hidden layer l (1-based) has input_dim / 2^(l-1) units.
//
// In both families the last layer has `output_dim` units, so a 3 layer funnel
// on 512-bit input with 16 outputs is (512, 256, 16).
struct MlpArchitecture {
  ArchFamily family = ArchFamily::kFunnel;
  int num_layers = 3;
  int input_dim = 512;
  int output_dim = 16;

  // Output width of every layer, last entry == output_dim. Throws
  // std::invalid_argument for an invalid architecture.
  std::vector<int> LayerWidths() const;
  void Validate() const;
};

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;     // out
};

// Parameter-shaped container; also used for gradients and Adam moments.
using LayerParams = std::vector<DenseLayer>;

// Intermediates of a batched forward pass needed by Backward().
struct ForwardTrace {
  // inputs[l] is the input to layer l (inputs[0] is the batch itself).
  std::vector<Eigen::MatrixXd> inputs;
  // pre_activations[l] = W_l * inputs[l] + b_l.
  std::vector<Eigen::MatrixXd> pre_activations;

  bool empty() const { return inputs.empty(); }
};

// The embedding function: linear + SeLU for every layer but the last, which is
// linear only. Batches are column-major, one sample per column.
class EmbeddingNetwork {
 public:
  EmbeddingNetwork() = default;
  EmbeddingNetwork(MlpArchitecture arch, LayerParams layers);

  const MlpArchitecture& architecture() const { return arch_; }
  int input_dim() const { return arch_.input_dim; }
  int output_dim() const { return arch_.output_dim; }
  const LayerParams& layers() const { return layers_; }
  LayerParams& mutable_layers() { return layers_; }
  size_t NumParameters() const;
  bool AllFinite() const;

  Eigen::VectorXd Forward(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd ForwardBatch(const Eigen::MatrixXd& x) const;
  // As ForwardBatch, additionally recording intermediates into `trace`.
  Eigen::MatrixXd ForwardBatch(const Eigen::MatrixXd& x,
                               ForwardTrace* trace) const;

  // Reverse pass for a loss L whose gradient with respect to the batch
  // output is `output_grad` (output_dim x batch). Throws std::logic_error if
  // `trace` holds no recorded forward pass.
  LayerParams Backward(const ForwardTrace& trace,
                       const Eigen::MatrixXd& output_grad) const;

  void Save(const std::filesystem::path& path) const;
  static EmbeddingNetwork Load(const std::filesystem::path& path);
  std::vector<uint8_t> Serialize() const;
  static EmbeddingNetwork Deserialize(std::span<const uint8_t> bytes,
                                      const std::string& name = "model");

  friend bool operator==(const EmbeddingNetwork& a, const EmbeddingNetwork& b);

 private:
  MlpArchitecture arch_;
  LayerParams layers_;
};

// LeCun normal weights (stddev 1 / sqrt(fan_in)) and zero biases.
EmbeddingNetwork InitNetwork(const MlpArchitecture& arch, uint64_t seed);

LayerParams ZerosLike(const LayerParams& params);

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int64_t step = 0;
  LayerParams first_moment;
  LayerParams second_moment;

  static AdamState For(const LayerParams& params, double lr);
};

// One bias-corrected Adam update. Throws std::invalid_argument on any shape
// mismatch between params, grads and the moment accumulators.
void AdamStep(LayerParams& params, const LayerParams& grads, AdamState& state);

}  // namespace pagg

#endif  // PAGG_NETWORK_HPP
