#include "lam/network.hpp"

#include <cmath>

#include "lam/rng.hpp"

namespace lam {

const char* to_string(NetworkKind kind) {
  switch (kind) {
    case NetworkKind::plain_cnn: return "plain_cnn";
    case NetworkKind::residual_net: return "residual_net";
    case NetworkKind::linear_upsampler: return "linear_upsampler";
  }
  return "unknown";
}

int SRNetwork::weight_count(LayerOp op) {
  switch (op) {
    case LayerOp::conv: return 2;
    case LayerOp::prelu: return 1;
    default: return 0;
  }
}

SRNetwork::SRNetwork(NetworkKind kind, int scale, std::vector<LayerSpec> layers, std::vector<NamedTensor> weights)
    : kind_(kind), scale_(scale), layers_(std::move(layers)), weights_(std::move(weights)) {
  validate();
}

void SRNetwork::validate() const {
  if (scale_ < 1 || scale_ > 4) raise(ErrorKind::config, "scale must be in 1..4, got " + std::to_string(scale_));
  std::size_t w = 0;
  int depth = 0;
  bool shuffled = false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& layer = layers_[i];
    const auto& h = layer.hyper;
    const int count = weight_count(layer.op);
    if (w + static_cast<std::size_t>(count) > weights_.size())
      raise(ErrorKind::shape, "layer " + std::to_string(i) + " is missing weights");
    auto expect = [&](const NamedTensor& t, const Shape& shape) {
      if (t.tensor.shape() != shape)
        raise(ErrorKind::shape, "tensor " + t.name + " has shape " + shape_string(t.tensor.shape()) + ", expected " +
                                    shape_string(shape));
    };
    switch (layer.op) {
      case LayerOp::conv:
        if (h[2] % 2 == 0 || h[0] == 0 || h[1] == 0)
          raise(ErrorKind::shape, "layer " + std::to_string(i) + ": invalid conv hyperparameters");
        expect(weights_[w], {h[1], h[0], h[2], h[2]});
        expect(weights_[w + 1], {h[1]});
        break;
      case LayerOp::prelu:
        if (h[0] != 1) raise(ErrorKind::shape, "layer " + std::to_string(i) + ": prelu supports one slope");
        expect(weights_[w], {1});
        break;
      case LayerOp::pixel_shuffle:
        if (h[0] == 0) raise(ErrorKind::shape, "layer " + std::to_string(i) + ": pixel_shuffle scale is zero");
        shuffled = true;
        break;
      case LayerOp::skip_push:
        ++depth;
        break;
      case LayerOp::skip_add:
        if (--depth < 0) raise(ErrorKind::format, "unbalanced skip_add at layer " + std::to_string(i));
        break;
      case LayerOp::relu:
        break;
      default:
        raise(ErrorKind::format, "unknown layer op " + std::to_string(static_cast<int>(layer.op)));
    }
    for (int k = 0; k < count; ++k, ++w)
      if (!weights_[w].tensor.all_finite()) raise(ErrorKind::numeric, "tensor " + weights_[w].name + " contains NaN/Inf");
  }
  if (depth != 0) raise(ErrorKind::format, "unbalanced skip connections");
  if (w != weights_.size()) raise(ErrorKind::shape, "network has unused weight tensors");
  if (!shuffled && scale_ != 1) raise(ErrorKind::format, "network with scale > 1 has no pixel_shuffle layer");
}

std::size_t SRNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const auto& w : weights_) n += static_cast<std::size_t>(w.tensor.size());
  return n;
}

int SRNetwork::input_channels() const {
  for (const auto& l : layers_)
    if (l.op == LayerOp::conv) return l.hyper[0];
  return 0;
}

template <typename Scalar>
std::vector<Var<Scalar>> SRNetwork::bind(Graph<Scalar>& graph, bool trainable) const {
  std::vector<Var<Scalar>> params;
  params.reserve(weights_.size());
  for (const auto& w : weights_) {
    BasicTensor<Scalar> t = w.tensor.template cast<Scalar>();
    t.set_requires_grad(trainable);
    params.push_back(graph.leaf(std::move(t)));
  }
  return params;
}

template <typename Scalar>
Var<Scalar> SRNetwork::forward(Graph<Scalar>& /*graph*/, Var<Scalar> input, std::span<const Var<Scalar>> params) const {
  if (params.size() != weights_.size()) raise(ErrorKind::contract, "parameter binding does not match network");
  require_image(input.value(), "network input");
  if (input.value().dim(0) != input_channels())
    raise(ErrorKind::dimension, "network expects " + std::to_string(input_channels()) + " channels, got " +
                                    std::to_string(input.value().dim(0)));
  std::vector<Var<Scalar>> skips;
  std::size_t w = 0;
  Var<Scalar> x = input;
  for (const LayerSpec& layer : layers_) {
    switch (layer.op) {
      case LayerOp::conv:
        x = conv2d(x, params[w], params[w + 1], layer.hyper[3]);
        break;
      case LayerOp::relu:
        x = relu(x);
        break;
      case LayerOp::prelu:
        x = prelu(x, params[w]);
        break;
      case LayerOp::pixel_shuffle:
        x = pixel_shuffle(x, layer.hyper[0]);
        break;
      case LayerOp::skip_push:
        skips.push_back(x);
        break;
      case LayerOp::skip_add:
        x = add(x, skips.back());
        skips.pop_back();
        break;
    }
    w += static_cast<std::size_t>(weight_count(layer.op));
  }
  return x;
}

template <typename Scalar>
Var<Scalar> SRNetwork::forward(Graph<Scalar>& graph, Var<Scalar> input) const {
  const auto params = bind(graph, false);
  return forward(graph, input, std::span<const Var<Scalar>>(params));
}

Tensor SRNetwork::infer(const Tensor& lr) const {
  Graph<float> graph;
  auto x = graph.constant(lr);
  return forward(graph, x).value();
}

template std::vector<Var<float>> SRNetwork::bind(Graph<float>&, bool) const;
template std::vector<Var<double>> SRNetwork::bind(Graph<double>&, bool) const;
template Var<float> SRNetwork::forward(Graph<float>&, Var<float>, std::span<const Var<float>>) const;
template Var<double> SRNetwork::forward(Graph<double>&, Var<double>, std::span<const Var<double>>) const;
template Var<float> SRNetwork::forward(Graph<float>&, Var<float>) const;
template Var<double> SRNetwork::forward(Graph<double>&, Var<double>) const;

// ---------------------------------------------------------------------------
// Builders

namespace {

class Builder {
 public:
  Builder(std::uint64_t seed) : rng_(seed) {}

  void conv(int c_in, int c_out, int k, double gain = 1.0) {
    const int index = static_cast<int>(layers_.size());
    layers_.push_back({LayerOp::conv, {u16(c_in), u16(c_out), u16(k), u16(k / 2)}});
    Tensor kernel({c_out, c_in, k, k});
    const double stddev = gain * std::sqrt(2.0 / (c_in * k * k));
    for (Eigen::Index i = 0; i < kernel.size(); ++i) kernel[i] = static_cast<float>(stddev * rng_.normal());
    weights_.push_back({"layer" + std::to_string(index) + ".kernel", std::move(kernel)});
    weights_.push_back({"layer" + std::to_string(index) + ".bias", Tensor({c_out})});
  }

  void prelu() {
    const int index = static_cast<int>(layers_.size());
    layers_.push_back({LayerOp::prelu, {1, 0, 0, 0}});
    weights_.push_back({"layer" + std::to_string(index) + ".slope", Tensor({1}, {0.25f})});
  }

  void op(LayerOp op, int h0 = 0) { layers_.push_back({op, {u16(h0), 0, 0, 0}}); }

  SRNetwork finish(NetworkKind kind, int scale) { return SRNetwork(kind, scale, std::move(layers_), std::move(weights_)); }

  std::vector<NamedTensor>& weights() { return weights_; }

 private:
  static std::uint16_t u16(int v) { return static_cast<std::uint16_t>(v); }

  Rng rng_;
  std::vector<LayerSpec> layers_;
  std::vector<NamedTensor> weights_;
};

void check_common(int width, int scale, int channels) {
  if (scale < 1 || scale > 4) raise(ErrorKind::config, "scale must be one of 1,2,3,4; got " + std::to_string(scale));
  if (width < 4) raise(ErrorKind::config, "width must be >= 4");
  if (channels < 1) raise(ErrorKind::config, "channels must be >= 1");
}

}  // namespace

SRNetwork build_plain_cnn(int depth, int width, int scale, std::uint64_t seed, int channels) {
  check_common(width, scale, channels);
  if (depth < 2) raise(ErrorKind::config, "plain CNN depth must be >= 2");
  Builder b(seed);
  b.conv(channels, width, 3);
  b.prelu();
  for (int i = 0; i < depth - 2; ++i) {
    b.conv(width, width, 3);
    b.prelu();
  }
  b.conv(width, channels * scale * scale, 3);
  b.op(LayerOp::pixel_shuffle, scale);
  return b.finish(NetworkKind::plain_cnn, scale);
}

SRNetwork build_residual_net(int blocks, int width, int scale, std::uint64_t seed, int channels) {
  check_common(width, scale, channels);
  if (blocks < 1) raise(ErrorKind::config, "residual net needs at least one block");
  Builder b(seed);
  b.conv(channels, width, 3);
  b.op(LayerOp::skip_push);
  for (int i = 0; i < blocks; ++i) {
    b.op(LayerOp::skip_push);
    b.conv(width, width, 3);
    b.prelu();
    b.conv(width, width, 3, 0.1);  // small residual branch at init keeps deep stacks stable
    b.op(LayerOp::skip_add);
  }
  b.op(LayerOp::skip_add);
  b.conv(width, channels * scale * scale, 3);
  b.op(LayerOp::pixel_shuffle, scale);
  return b.finish(NetworkKind::residual_net, scale);
}

double bicubic_weight(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

SRNetwork build_linear_upsampler(int scale, int channels) {
  if (scale < 2 || scale > 4) raise(ErrorKind::config, "linear upsampler scale must be 2, 3 or 4");
  if (channels < 1) raise(ErrorKind::config, "channels must be >= 1");
  constexpr int k = 5;
  const int s2 = scale * scale;
  Tensor kernel({channels * s2, channels, k, k});
  for (int c = 0; c < channels; ++c)
    for (int i = 0; i < scale; ++i)
      for (int j = 0; j < scale; ++j) {
        // HR row y*s+i samples LR coordinate y + (i + 0.5)/s - 0.5.
        const double ty = (i + 0.5) / scale - 0.5;
        const double tx = (j + 0.5) / scale - 0.5;
        const int oc = c * s2 + i * scale + j;
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            const Eigen::Index idx = ((static_cast<Eigen::Index>(oc) * channels + c) * k + ky) * k + kx;
            kernel[idx] = static_cast<float>(bicubic_weight(ty - (ky - 2)) * bicubic_weight(tx - (kx - 2)));
          }
      }
  std::vector<LayerSpec> layers{
      {LayerOp::conv,
       {static_cast<std::uint16_t>(channels), static_cast<std::uint16_t>(channels * s2), k, 2}},
      {LayerOp::pixel_shuffle, {static_cast<std::uint16_t>(scale), 0, 0, 0}},
  };
  std::vector<NamedTensor> weights{{"layer0.kernel", std::move(kernel)},
                                   {"layer0.bias", Tensor({channels * s2})}};
  return SRNetwork(NetworkKind::linear_upsampler, scale, std::move(layers), std::move(weights));
}

// ---------------------------------------------------------------------------
// Receptive field

int receptive_field(const SRNetwork& net) {
  int growth = 0;
  bool shuffled = false;
  std::vector<int> stack;
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    const LayerSpec& layer = net.layers()[i];
    switch (layer.op) {
      case LayerOp::conv:
        if (shuffled) raise(ErrorKind::analysis, "convolution after pixel_shuffle is not supported (layer " +
                                                     std::to_string(i) + ")");
        growth += layer.hyper[2] - 1;
        break;
      case LayerOp::pixel_shuffle:
        shuffled = true;
        break;
      case LayerOp::skip_push:
        stack.push_back(growth);
        break;
      case LayerOp::skip_add:
        if (stack.empty()) raise(ErrorKind::analysis, "unbalanced skip connection");
        growth = std::max(growth, stack.back());
        stack.pop_back();
        break;
      case LayerOp::relu:
      case LayerOp::prelu:
        break;
      default:
        raise(ErrorKind::analysis, "unsupported layer op in receptive-field analysis");
    }
  }
  return growth + 1;
}

int probe_receptive_field(const SRNetwork& net) {
  const int analytic = receptive_field(net);
  const int n = 2 * analytic + 5;
  const int centre = n / 2;
  const int s = net.scale();
  const int channels = net.input_channels();
  int ymin = n, ymax = -1, xmin = n, xmax = -1;
  for (int c = 0; c < channels; ++c)
    for (int i = 0; i < s; ++i)
      for (int j = 0; j < s; ++j) {
        Graph<double> graph;
        auto x = graph.leaf(BasicTensor<double>({channels, n, n}).set_requires_grad(true));
        auto y = net.forward(graph, x);
        BasicTensor<double> pick(y.shape());
        pick(c, centre * s + i, centre * s + j) = 1.0;
        graph.backward(sum(mul(y, graph.constant(std::move(pick)))));
        const BasicTensor<double> g({channels, n, n}, graph.grad(x));
        for (int ch = 0; ch < channels; ++ch)
          for (int yy = 0; yy < n; ++yy)
            for (int xx = 0; xx < n; ++xx)
              if (g(ch, yy, xx) != 0.0) {
                ymin = std::min(ymin, yy);
                ymax = std::max(ymax, yy);
                xmin = std::min(xmin, xx);
                xmax = std::max(xmax, xx);
              }
      }
  if (ymax < 0) return 0;
  return std::max(ymax - ymin + 1, xmax - xmin + 1);
}

}  // namespace lam
