#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lam/graph.hpp"

namespace lam {

enum class NetworkKind : std::uint8_t { plain_cnn = 0, residual_net = 1, linear_upsampler = 2 };

const char* to_string(NetworkKind kind);

/// Layer opcodes as stored in weight files.
enum class LayerOp : std::uint8_t {
  conv = 1,           // hyper = {c_in, c_out, k, padding}; weights: kernel, bias
  relu = 2,           // no weights
  prelu = 3,          // hyper[0] = slope count (1); weights: slope
  pixel_shuffle = 4,  // hyper[0] = scale
  skip_push = 5,      // remember the current activation
  skip_add = 6,       // add the most recently remembered activation
};

struct LayerSpec {
  LayerOp op = LayerOp::conv;
  std::array<std::uint16_t, 4> hyper{};

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// A super-resolution network: an ordered layer program plus its weights, in
/// layer order. Maps (c, h, w) to (c, s*h, s*w).
class SRNetwork {
 public:
  SRNetwork(NetworkKind kind, int scale, std::vector<LayerSpec> layers, std::vector<NamedTensor> weights);

  NetworkKind kind() const noexcept { return kind_; }
  int scale() const noexcept { return scale_; }
  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  const std::vector<NamedTensor>& weights() const noexcept { return weights_; }
  std::vector<NamedTensor>& weights() noexcept { return weights_; }
  std::size_t parameter_count() const;
  int input_channels() const;

  /// Number of weight tensors a layer owns.
  static int weight_count(LayerOp op);

  /// Puts every weight tensor into `graph`; trainable weights receive gradients.
  template <typename Scalar>
  std::vector<Var<Scalar>> bind(Graph<Scalar>& graph, bool trainable) const;

  template <typename Scalar>
  Var<Scalar> forward(Graph<Scalar>& graph, Var<Scalar> input, std::span<const Var<Scalar>> params) const;

  /// Forward with the weights as constants.
  template <typename Scalar>
  Var<Scalar> forward(Graph<Scalar>& graph, Var<Scalar> input) const;

  /// Plain inference on a (c, h, w) image.
  Tensor infer(const Tensor& lr) const;

  /// Checks layer/weight consistency, shapes and finiteness.
  void validate() const;

 private:
  NetworkKind kind_;
  int scale_;
  std::vector<LayerSpec> layers_;
  std::vector<NamedTensor> weights_;
};

/// `depth` 3x3 convolutions (PReLU between them) followed by pixel shuffle.
SRNetwork build_plain_cnn(int depth, int width, int scale, std::uint64_t seed, int channels = 3);

/// Head conv, `blocks` conv-PReLU-conv residual blocks with identity skips, a
/// global skip around the blocks, then a tail conv and pixel shuffle.
SRNetwork build_residual_net(int blocks, int width, int scale, std::uint64_t seed, int channels = 3);

/// Fixed bicubic (a = -0.5) interpolation as a 5x5 conv followed by pixel shuffle.
SRNetwork build_linear_upsampler(int scale, int channels = 3);

/// Cubic convolution kernel with a = -0.5.
double bicubic_weight(double t);

/// Side length, in LR pixels, of the input window that can influence one
/// output pixel.
int receptive_field(const SRNetwork& net);

/// Measures the receptive field by backpropagating impulses from every output
/// pixel of one LR cell at the centre of a zero input and taking the extent
/// of the non-zero gradient support.
int probe_receptive_field(const SRNetwork& net);

void save_weights(const SRNetwork& net, const std::filesystem::path& path);
SRNetwork load_weights(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_weights(const SRNetwork& net);
SRNetwork deserialize_weights(std::span<const std::uint8_t> bytes);

}  // namespace lam
