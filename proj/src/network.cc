#include "pagg/network.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "binary_io.hpp"
#include "pagg/error.hpp"
#include "pagg/rng.hpp"

namespace pagg {
namespace {

constexpr std::string_view kModelMagic = "PAGG";
constexpr uint16_t kModelVersion = 1;

void CheckSameShape(const DenseLayer& a, const DenseLayer& b,
                    const char* what) {
  if (a.weights.rows() != b.weights.rows() ||
      a.weights.cols() != b.weights.cols() || a.bias.size() != b.bias.size()) {
    throw std::invalid_argument(std::string(what) + ": parameter shape mismatch");
  }
}

}  // namespace

double Selu(double t) {
  return t > 0.0 ? kSeluLambda * t : kSeluLambda * kSeluAlpha * std::expm1(t);
}

double SeluDerivative(double t) {
  return t > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(t);
}

std::string_view ToString(ArchFamily family) {
  return family == ArchFamily::kFat ? "fat" : "funnel";
}

ArchFamily ParseArchFamily(std::string_view name) {
  if (name == "fat") return ArchFamily::kFat;
  if (name == "funnel") return ArchFamily::kFunnel;
  throw std::invalid_argument("unknown architecture family '" +
                              std::string(name) + "'");
}

std::vector<int> MlpArchitecture::LayerWidths() const {
  if (num_layers < 1) throw std::invalid_argument("num_layers must be >= 1");
  if (input_dim < 1 || output_dim < 1) {
    throw std::invalid_argument("layer dimensions must be positive");
  }
  std::vector<int> widths;
  widths.reserve(num_layers);
  for (int l = 1; l < num_layers; ++l) {
    int w = input_dim;
    if (family == ArchFamily::kFunnel) {
      if (l - 1 >= 31 || (input_dim >> (l - 1)) == 0) {
        throw std::invalid_argument("funnel is too deep for its input width");
      }
      w = input_dim >> (l - 1);
    }
    if (w < output_dim) {
      throw std::invalid_argument(
          "hidden layer " + std::to_string(l) + " would have " +
          std::to_string(w) + " units, fewer than the output dimension " +
          std::to_string(output_dim));
    }
    widths.push_back(w);
  }
  widths.push_back(output_dim);
  return widths;
}

void MlpArchitecture::Validate() const { (void)LayerWidths(); }

EmbeddingNetwork::EmbeddingNetwork(MlpArchitecture arch, LayerParams layers)
    : arch_(arch), layers_(std::move(layers)) {
  const auto widths = arch_.LayerWidths();
  if (layers_.size() != widths.size()) {
    throw std::invalid_argument("layer count does not match architecture");
  }
  int fan_in = arch_.input_dim;
  for (size_t l = 0; l < widths.size(); ++l) {
    if (layers_[l].weights.rows() != widths[l] ||
        layers_[l].weights.cols() != fan_in ||
        layers_[l].bias.size() != widths[l]) {
      throw std::invalid_argument("layer " + std::to_string(l) +
                                  " shape does not match architecture");
    }
    fan_in = widths[l];
  }
}

size_t EmbeddingNetwork::NumParameters() const {
  size_t n = 0;
  for (const auto& layer : layers_) {
    n += static_cast<size_t>(layer.weights.size() + layer.bias.size());
  }
  return n;
}

bool EmbeddingNetwork::AllFinite() const {
  for (const auto& layer : layers_) {
    if (!layer.weights.allFinite() || !layer.bias.allFinite()) return false;
  }
  return true;
}

Eigen::VectorXd EmbeddingNetwork::Forward(const Eigen::VectorXd& x) const {
  Eigen::MatrixXd batch = x;
  return ForwardBatch(batch).col(0);
}

Eigen::MatrixXd EmbeddingNetwork::ForwardBatch(const Eigen::MatrixXd& x) const {
  return ForwardBatch(x, nullptr);
}

Eigen::MatrixXd EmbeddingNetwork::ForwardBatch(const Eigen::MatrixXd& x,
                                               ForwardTrace* trace) const {
  if (x.rows() != arch_.input_dim) {
    throw std::invalid_argument("forward: input has " +
                                std::to_string(x.rows()) + " rows, expected " +
                                std::to_string(arch_.input_dim));
  }
  if (trace != nullptr) {
    trace->inputs.clear();
    trace->pre_activations.clear();
  }
  Eigen::MatrixXd a = x;
  for (size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = layers_[l].weights * a;
    z.colwise() += layers_[l].bias;
    const bool last = l + 1 == layers_.size();
    if (trace != nullptr) {
      trace->inputs.push_back(std::move(a));
      trace->pre_activations.push_back(z);
    }
    if (last) {
      a = std::move(z);
    } else {
      a = z.unaryExpr([](double t) { return Selu(t); });
    }
  }
  return a;
}

LayerParams EmbeddingNetwork::Backward(const ForwardTrace& trace,
                                       const Eigen::MatrixXd& output_grad) const {
  if (trace.empty() || trace.inputs.size() != layers_.size()) {
    throw std::logic_error("backward called without a recorded forward pass");
  }
  const Eigen::Index batch = trace.inputs.front().cols();
  if (output_grad.rows() != arch_.output_dim || output_grad.cols() != batch) {
    throw std::invalid_argument("backward: output gradient shape mismatch");
  }
  LayerParams grads(layers_.size());
  Eigen::MatrixXd upstream = output_grad;
  for (size_t i = layers_.size(); i-- > 0;) {
    const bool last = i + 1 == layers_.size();
    Eigen::MatrixXd dz;
    if (last) {
      dz = std::move(upstream);
    } else {
      dz = upstream.cwiseProduct(trace.pre_activations[i].unaryExpr(
          [](double t) { return SeluDerivative(t); }));
    }
    grads[i].weights = dz * trace.inputs[i].transpose();
    grads[i].bias = dz.rowwise().sum();
    if (i > 0) upstream = layers_[i].weights.transpose() * dz;
  }
  return grads;
}

std::vector<uint8_t> EmbeddingNetwork::Serialize() const {
  io::ByteWriter w;
  w.Magic(kModelMagic);
  w.U16(kModelVersion);
  w.U8(static_cast<uint8_t>(arch_.family));
  w.U32(static_cast<uint32_t>(arch_.num_layers));
  w.U32(static_cast<uint32_t>(arch_.input_dim));
  for (const auto& layer : layers_) {
    w.U32(static_cast<uint32_t>(layer.weights.rows()));
  }
  for (const auto& layer : layers_) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        w.F64(layer.weights(r, c));
      }
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) w.F64(layer.bias[r]);
  }
  return w.bytes();
}

EmbeddingNetwork EmbeddingNetwork::Deserialize(std::span<const uint8_t> bytes,
                                               const std::string& name) {
  io::ByteReader r(bytes, name);
  r.ExpectMagic(kModelMagic);
  r.ExpectVersion(kModelVersion);
  const uint8_t family = r.U8();
  if (family > 1) {
    throw FormatError(FormatError::Kind::kBadValue,
                      name + ": unknown architecture family " +
                          std::to_string(family));
  }
  MlpArchitecture arch;
  arch.family = static_cast<ArchFamily>(family);
  const uint32_t num_layers = r.U32();
  const uint32_t input_dim = r.U32();
  if (num_layers == 0 || num_layers > 64 || input_dim == 0 ||
      input_dim > (1u << 20)) {
    throw FormatError(FormatError::Kind::kBadValue,
                      name + ": implausible architecture header");
  }
  arch.num_layers = static_cast<int>(num_layers);
  arch.input_dim = static_cast<int>(input_dim);
  std::vector<int> widths(num_layers);
  for (auto& width : widths) {
    width = static_cast<int>(r.U32());
    if (width <= 0 || width > (1 << 20)) {
      throw FormatError(FormatError::Kind::kBadValue,
                        name + ": implausible layer width");
    }
  }
  arch.output_dim = widths.back();
  std::vector<int> expected;
  try {
    expected = arch.LayerWidths();
  } catch (const std::invalid_argument& e) {
    throw FormatError(FormatError::Kind::kBadValue, name + ": " + e.what());
  }
  if (expected != widths) {
    throw FormatError(FormatError::Kind::kBadValue,
                      name + ": layer widths do not match the " +
                          std::string(ToString(arch.family)) + " family");
  }
  uint64_t payload = 0;
  int fan_in = arch.input_dim;
  for (int width : widths) {
    payload += (uint64_t(width) * fan_in + width) * 8;
    fan_in = width;
  }
  r.ExpectRemaining(payload);

  LayerParams layers(widths.size());
  fan_in = arch.input_dim;
  for (size_t l = 0; l < widths.size(); ++l) {
    layers[l].weights.resize(widths[l], fan_in);
    layers[l].bias.resize(widths[l]);
    for (int row = 0; row < widths[l]; ++row) {
      for (int col = 0; col < fan_in; ++col) layers[l].weights(row, col) = r.F64();
    }
    for (int row = 0; row < widths[l]; ++row) layers[l].bias[row] = r.F64();
    fan_in = widths[l];
  }
  return EmbeddingNetwork(arch, std::move(layers));
}

void EmbeddingNetwork::Save(const std::filesystem::path& path) const {
  io::WriteFile(path, Serialize());
}

EmbeddingNetwork EmbeddingNetwork::Load(const std::filesystem::path& path) {
  return Deserialize(io::ReadFile(path), path.string());
}

bool operator==(const EmbeddingNetwork& a, const EmbeddingNetwork& b) {
  if (a.arch_.family != b.arch_.family ||
      a.arch_.num_layers != b.arch_.num_layers ||
      a.arch_.input_dim != b.arch_.input_dim ||
      a.arch_.output_dim != b.arch_.output_dim ||
      a.layers_.size() != b.layers_.size()) {
    return false;
  }
  for (size_t l = 0; l < a.layers_.size(); ++l) {
    if (a.layers_[l].weights != b.layers_[l].weights ||
        a.layers_[l].bias != b.layers_[l].bias) {
      return false;
    }
  }
  return true;
}

EmbeddingNetwork InitNetwork(const MlpArchitecture& arch, uint64_t seed) {
  const auto widths = arch.LayerWidths();
  Rng rng(seed);
  LayerParams layers(widths.size());
  int fan_in = arch.input_dim;
  for (size_t l = 0; l < widths.size(); ++l) {
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(double(fan_in)));
    layers[l].weights.resize(widths[l], fan_in);
    // Row-major fill so the draw order matches the file layout.
    for (int row = 0; row < widths[l]; ++row) {
      for (int col = 0; col < fan_in; ++col) layers[l].weights(row, col) = normal(rng);
    }
    layers[l].bias = Eigen::VectorXd::Zero(widths[l]);
    fan_in = widths[l];
  }
  return EmbeddingNetwork(arch, std::move(layers));
}

LayerParams ZerosLike(const LayerParams& params) {
  LayerParams zeros(params.size());
  for (size_t l = 0; l < params.size(); ++l) {
    zeros[l].weights = Eigen::MatrixXd::Zero(params[l].weights.rows(),
                                             params[l].weights.cols());
    zeros[l].bias = Eigen::VectorXd::Zero(params[l].bias.size());
  }
  return zeros;
}

AdamState AdamState::For(const LayerParams& params, double lr) {
  AdamState state;
  state.lr = lr;
  state.first_moment = ZerosLike(params);
  state.second_moment = ZerosLike(params);
  return state;
}

void AdamStep(LayerParams& params, const LayerParams& grads, AdamState& state) {
  if (grads.size() != params.size() ||
      state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw std::invalid_argument("adam: layer count mismatch");
  }
  for (size_t l = 0; l < params.size(); ++l) {
    CheckSameShape(params[l], grads[l], "adam");
    CheckSameShape(params[l], state.first_moment[l], "adam");
    CheckSameShape(params[l], state.second_moment[l], "adam");
  }
  ++state.step;
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  const double correction1 = 1.0 - std::pow(b1, double(state.step));
  const double correction2 = 1.0 - std::pow(b2, double(state.step));
  const double step_size = state.lr / correction1;
  const double eps = state.epsilon;

  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    p.array() -= step_size * m.array() /
                 ((v.array() / correction2).sqrt() + eps);
  };
  for (size_t l = 0; l < params.size(); ++l) {
    update(params[l].weights, grads[l].weights, state.first_moment[l].weights,
           state.second_moment[l].weights);
    update(params[l].bias, grads[l].bias, state.first_moment[l].bias,
           state.second_moment[l].bias);
  }
}

}  // namespace pagg
