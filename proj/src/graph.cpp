#include "lam/graph.hpp"

#include <cmath>

namespace lam {

namespace {

using RowMatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowMatS = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
void require_same_graph(Var<Scalar> a, Var<Scalar> b) {
  if (a.graph == nullptr || a.graph != b.graph) raise(ErrorKind::contract, "operands belong to different graphs");
}

template <typename Scalar>
void require_same_shape(Var<Scalar> a, Var<Scalar> b, const char* op) {
  require_same_graph(a, b);
  if (a.shape() != b.shape())
    raise(ErrorKind::dimension, std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                    shape_string(b.shape()));
}

struct ConvGeometry {
  int c_in, h, w, c_out, k, pad, ho, wo;
};

template <typename Scalar>
ConvGeometry conv_geometry(const BasicTensor<Scalar>& input, const BasicTensor<Scalar>& kernel,
                           const BasicTensor<Scalar>& bias, int padding) {
  require_image(input, "conv2d input");
  if (kernel.rank() != 4) raise(ErrorKind::dimension, "conv2d kernel must be (c_out,c_in,k,k)");
  const int k = kernel.dim(2);
  if (kernel.dim(3) != k) raise(ErrorKind::dimension, "conv2d kernel must be square");
  if (k % 2 == 0) raise(ErrorKind::dimension, "conv2d kernel size must be odd");
  if (padding < 0) raise(ErrorKind::dimension, "conv2d padding must be non-negative");
  if (kernel.dim(1) != input.dim(0))
    raise(ErrorKind::dimension, "conv2d kernel expects " + std::to_string(kernel.dim(1)) + " input channels, got " +
                                    std::to_string(input.dim(0)));
  if (bias.rank() != 1 || bias.dim(0) != kernel.dim(0))
    raise(ErrorKind::dimension, "conv2d bias must have shape (c_out)");
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), kernel.dim(0), k, padding, 0, 0};
  g.ho = g.h + 2 * padding - k + 1;
  g.wo = g.w + 2 * padding - k + 1;
  if (g.ho <= 0 || g.wo <= 0) raise(ErrorKind::dimension, "conv2d input smaller than kernel");
  return g;
}

template <typename Scalar>
RowMatD im2col(const BasicTensor<Scalar>& input, const ConvGeometry& g) {
  RowMatD cols(static_cast<Eigen::Index>(g.c_in) * g.k * g.k, static_cast<Eigen::Index>(g.ho) * g.wo);
  for (int c = 0; c < g.c_in; ++c)
    for (int ky = 0; ky < g.k; ++ky)
      for (int kx = 0; kx < g.k; ++kx) {
        double* row = cols.row((c * g.k + ky) * g.k + kx).data();
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy + ky - g.pad;
          double* out = row + static_cast<std::ptrdiff_t>(oy) * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(out, out + g.wo, 0.0);
            continue;
          }
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox + kx - g.pad;
            out[ox] = (ix < 0 || ix >= g.w) ? 0.0 : static_cast<double>(input(c, iy, ix));
          }
        }
      }
  return cols;
}

template <typename Scalar>
RowMatD kernel_matrix(const BasicTensor<Scalar>& kernel, const ConvGeometry& g) {
  return Eigen::Map<const RowMatS<Scalar>>(kernel.data().data(), g.c_out, static_cast<Eigen::Index>(g.c_in) * g.k * g.k)
      .template cast<double>();
}

template <typename Scalar>
typename BasicTensor<Scalar>::Storage to_storage(const RowMatD& m) {
  return Eigen::Map<const Eigen::ArrayXd>(m.data(), m.size()).cast<Scalar>();
}

}  // namespace

// ---------------------------------------------------------------------------
// Graph

template <typename Scalar>
Var<Scalar> Graph<Scalar>::push(Node node) {
  if (backward_done_) raise(ErrorKind::contract, "graph already consumed by backward");
  nodes_.push_back(std::move(node));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

template <typename Scalar>
Var<Scalar> Graph<Scalar>::leaf(TensorT value) {
  Node n;
  n.op = "leaf";
  n.needs_grad = value.requires_grad();
  n.is_leaf = true;
  value.clear_grad();
  n.value = std::move(value);
  return push(std::move(n));
}

template <typename Scalar>
Var<Scalar> Graph<Scalar>::constant(TensorT value) {
  value.set_requires_grad(false);
  return leaf(std::move(value));
}

template <typename Scalar>
Var<Scalar> Graph<Scalar>::record(const char* op, std::vector<int> inputs, TensorT value, BackwardFn backward) {
  Node n;
  n.op = op;
  const int next = static_cast<int>(nodes_.size());
  for (int id : inputs) {
    if (id < 0 || id >= next) raise(ErrorKind::contract, std::string(op) + ": input node out of order");
    n.needs_grad = n.needs_grad || nodes_[static_cast<std::size_t>(id)].needs_grad;
  }
  n.inputs = std::move(inputs);
  n.value = std::move(value);
  if (!n.value.all_finite()) raise(ErrorKind::numeric, std::string(op) + ": non-finite forward value");
  n.backward = std::move(backward);
  return push(std::move(n));
}

template <typename Scalar>
const typename Graph<Scalar>::Storage& Graph<Scalar>::grad_of(int id) const {
  return nodes_.at(static_cast<std::size_t>(id)).grad;
}

template <typename Scalar>
void Graph<Scalar>::accumulate(int id, const Storage& delta) {
  Node& n = nodes_.at(static_cast<std::size_t>(id));
  if (!n.needs_grad) return;
  if (n.grad.size() == 0)
    n.grad = delta;
  else
    n.grad += delta;
}

template <typename Scalar>
void Graph<Scalar>::backward(Var<Scalar> output, Scalar seed) {
  if (output.graph != this) raise(ErrorKind::contract, "backward: output belongs to another graph");
  if (backward_done_) raise(ErrorKind::contract, "backward already ran on this graph");
  Node& out = nodes_.at(static_cast<std::size_t>(output.id));
  if (out.value.size() != 1)
    raise(ErrorKind::contract, "backward requires a scalar output, got shape " + shape_string(out.value.shape()));
  backward_done_ = true;
  backward_visits_ = 0;
  if (!out.needs_grad) return;
  out.grad = Storage::Constant(1, seed);
  for (int id = output.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad || n.grad.size() == 0 || !n.backward) continue;
    n.backward(*this, id);
    ++backward_visits_;
  }
  for (auto& n : nodes_) {
    if (!n.needs_grad) continue;
    if (n.grad.size() == 0) n.grad = Storage::Zero(n.value.size());
    if (!n.grad.isFinite().all()) raise(ErrorKind::numeric, std::string("non-finite gradient at node ") + n.op);
    if (n.is_leaf) n.value.set_grad(n.grad);
  }
}

template <typename Scalar>
const typename Graph<Scalar>::Storage& Graph<Scalar>::grad(Var<Scalar> v) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(v.id));
  if (!n.needs_grad) raise(ErrorKind::contract, "node does not require a gradient");
  if (!backward_done_) raise(ErrorKind::contract, "gradient requested before backward");
  return n.grad;
}

// ---------------------------------------------------------------------------
// Kernels

namespace kernels {

template <typename Scalar>
BasicTensor<Scalar> conv2d(const BasicTensor<Scalar>& input, const BasicTensor<Scalar>& kernel,
                           const BasicTensor<Scalar>& bias, int padding) {
  const ConvGeometry g = conv_geometry(input, kernel, bias, padding);
  RowMatD out = kernel_matrix(kernel, g) * im2col(input, g);
  out.colwise() += bias.data().template cast<double>().matrix();
  return BasicTensor<Scalar>({g.c_out, g.ho, g.wo}, to_storage<Scalar>(out));
}

template <typename Scalar>
BasicTensor<Scalar> pixel_shuffle(const BasicTensor<Scalar>& input, int scale) {
  require_image(input, "pixel_shuffle input");
  if (scale < 1) raise(ErrorKind::dimension, "pixel_shuffle scale must be >= 1");
  const int s2 = scale * scale;
  if (input.dim(0) % s2 != 0)
    raise(ErrorKind::dimension, "pixel_shuffle: " + std::to_string(input.dim(0)) +
                                    " channels not divisible by " + std::to_string(s2));
  const int c = input.dim(0) / s2, h = input.dim(1), w = input.dim(2);
  BasicTensor<Scalar> out({c, h * scale, w * scale});
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < scale; ++i)
      for (int j = 0; j < scale; ++j)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) out(ch, y * scale + i, x * scale + j) = input(ch * s2 + i * scale + j, y, x);
  return out;
}

template <typename Scalar>
BasicTensor<Scalar> pixel_unshuffle(const BasicTensor<Scalar>& input, int scale) {
  require_image(input, "pixel_unshuffle input");
  if (scale < 1 || input.dim(1) % scale != 0 || input.dim(2) % scale != 0)
    raise(ErrorKind::dimension, "pixel_unshuffle: spatial size not divisible by scale");
  const int s2 = scale * scale;
  const int c = input.dim(0), h = input.dim(1) / scale, w = input.dim(2) / scale;
  BasicTensor<Scalar> out({c * s2, h, w});
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < scale; ++i)
      for (int j = 0; j < scale; ++j)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) out(ch * s2 + i * scale + j, y, x) = input(ch, y * scale + i, x * scale + j);
  return out;
}

}  // namespace kernels

// ---------------------------------------------------------------------------
// Operators

template <typename Scalar>
Var<Scalar> conv2d(Var<Scalar> input, Var<Scalar> kernel, Var<Scalar> bias, int padding) {
  require_same_graph(input, kernel);
  require_same_graph(input, bias);
  Graph<Scalar>& graph = *input.graph;
  auto out = kernels::conv2d(input.value(), kernel.value(), bias.value(), padding);
  return graph.record("conv2d", {input.id, kernel.id, bias.id}, std::move(out), [padding](Graph<Scalar>& gr, int self) {
    using Storage = typename BasicTensor<Scalar>::Storage;
    const auto& in = gr.inputs(self);
    const auto& x = gr.value(in[0]);
    const auto& w = gr.value(in[1]);
    const ConvGeometry g = conv_geometry(x, w, gr.value(in[2]), padding);
    const auto& gout = gr.grad_of(self);
    const RowMatD dy =
        Eigen::Map<const RowMatS<Scalar>>(gout.data(), g.c_out, static_cast<Eigen::Index>(g.ho) * g.wo)
            .template cast<double>();
    if (gr.needs_grad(in[1])) {
      const RowMatD dw = dy * im2col(x, g).transpose();
      gr.accumulate(in[1], to_storage<Scalar>(dw));
    }
    if (gr.needs_grad(in[2])) {
      const Eigen::VectorXd db = dy.rowwise().sum();
      gr.accumulate(in[2], db.cast<Scalar>().array());
    }
    if (gr.needs_grad(in[0])) {
      const RowMatD dcols = kernel_matrix(w, g).transpose() * dy;
      Eigen::ArrayXd dx = Eigen::ArrayXd::Zero(x.size());
      for (int c = 0; c < g.c_in; ++c)
        for (int ky = 0; ky < g.k; ++ky)
          for (int kx = 0; kx < g.k; ++kx) {
            const double* row = dcols.row((c * g.k + ky) * g.k + kx).data();
            for (int oy = 0; oy < g.ho; ++oy) {
              const int iy = oy + ky - g.pad;
              if (iy < 0 || iy >= g.h) continue;
              double* dst = dx.data() + (static_cast<Eigen::Index>(c) * g.h + iy) * g.w;
              const double* src = row + static_cast<std::ptrdiff_t>(oy) * g.wo;
              for (int ox = 0; ox < g.wo; ++ox) {
                const int ix = ox + kx - g.pad;
                if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
              }
            }
          }
      gr.accumulate(in[0], Storage(dx.cast<Scalar>()));
    }
  });
}

template <typename Scalar>
Var<Scalar> pixel_shuffle(Var<Scalar> input, int scale) {
  auto out = kernels::pixel_shuffle(input.value(), scale);
  return input.graph->record("pixel_shuffle", {input.id}, std::move(out), [scale](Graph<Scalar>& gr, int self) {
    const auto& v = gr.value(self);
    BasicTensor<Scalar> g(v.shape(), gr.grad_of(self));
    gr.accumulate(gr.inputs(self)[0], kernels::pixel_unshuffle(g, scale).data());
  });
}

template <typename Scalar>
Var<Scalar> relu(Var<Scalar> input) {
  const auto& x = input.value();
  BasicTensor<Scalar> out(x.shape(), x.data().max(Scalar(0)).eval());
  return input.graph->record("relu", {input.id}, std::move(out), [](Graph<Scalar>& gr, int self) {
    const int in = gr.inputs(self)[0];
    const auto& xv = gr.value(in).data();
    gr.accumulate(in, (xv > Scalar(0)).select(gr.grad_of(self), Scalar(0)));
  });
}

template <typename Scalar>
Var<Scalar> prelu(Var<Scalar> input, Var<Scalar> slope) {
  require_same_graph(input, slope);
  if (slope.value().size() != 1) raise(ErrorKind::dimension, "prelu slope must hold a single value");
  const auto& x = input.value();
  const Scalar a = slope.value()[0];
  BasicTensor<Scalar> out(x.shape(), (x.data() > Scalar(0)).select(x.data(), a * x.data()).eval());
  return input.graph->record("prelu", {input.id, slope.id}, std::move(out), [](Graph<Scalar>& gr, int self) {
    using Storage = typename BasicTensor<Scalar>::Storage;
    const auto& in = gr.inputs(self);
    const auto& xv = gr.value(in[0]).data();
    const Scalar a = gr.value(in[1])[0];
    const auto& g = gr.grad_of(self);
    if (gr.needs_grad(in[0])) gr.accumulate(in[0], (xv > Scalar(0)).select(g, a * g));
    if (gr.needs_grad(in[1])) {
      const double da = (xv > Scalar(0)).select(Scalar(0), xv * g).template cast<double>().sum();
      gr.accumulate(in[1], Storage::Constant(1, static_cast<Scalar>(da)));
    }
  });
}

template <typename Scalar>
Var<Scalar> activation(Var<Scalar> input, Activation act) {
  switch (act.kind) {
    case ActivationKind::identity:
      return input;
    case ActivationKind::relu:
      return relu(input);
    case ActivationKind::prelu: {
      if (!std::isfinite(act.slope)) raise(ErrorKind::config, "prelu slope must be finite");
      auto slope = input.graph->constant(BasicTensor<Scalar>({1}, {static_cast<Scalar>(act.slope)}));
      return prelu(input, slope);
    }
  }
  return input;
}

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  require_same_shape(a, b, "add");
  BasicTensor<Scalar> out(a.shape(), (a.value().data() + b.value().data()).eval());
  return a.graph->record("add", {a.id, b.id}, std::move(out), [](Graph<Scalar>& gr, int self) {
    const auto& in = gr.inputs(self);
    gr.accumulate(in[0], gr.grad_of(self));
    gr.accumulate(in[1], gr.grad_of(self));
  });
}

template <typename Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b) {
  require_same_shape(a, b, "sub");
  BasicTensor<Scalar> out(a.shape(), (a.value().data() - b.value().data()).eval());
  return a.graph->record("sub", {a.id, b.id}, std::move(out), [](Graph<Scalar>& gr, int self) {
    const auto& in = gr.inputs(self);
    gr.accumulate(in[0], gr.grad_of(self));
    gr.accumulate(in[1], -gr.grad_of(self));
  });
}

template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b) {
  require_same_shape(a, b, "mul");
  BasicTensor<Scalar> out(a.shape(), (a.value().data() * b.value().data()).eval());
  return a.graph->record("mul", {a.id, b.id}, std::move(out), [](Graph<Scalar>& gr, int self) {
    const auto& in = gr.inputs(self);
    const auto& g = gr.grad_of(self);
    if (gr.needs_grad(in[0])) gr.accumulate(in[0], g * gr.value(in[1]).data());
    if (gr.needs_grad(in[1])) gr.accumulate(in[1], g * gr.value(in[0]).data());
  });
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, double factor) {
  const auto f = static_cast<Scalar>(factor);
  BasicTensor<Scalar> out(a.shape(), (a.value().data() * f).eval());
  return a.graph->record("scale", {a.id}, std::move(out), [f](Graph<Scalar>& gr, int self) {
    gr.accumulate(gr.inputs(self)[0], gr.grad_of(self) * f);
  });
}

template <typename Scalar>
Var<Scalar> abs(Var<Scalar> a) {
  BasicTensor<Scalar> out(a.shape(), a.value().data().abs().eval());
  return a.graph->record("abs", {a.id}, std::move(out), [](Graph<Scalar>& gr, int self) {
    const int in = gr.inputs(self)[0];
    const auto& x = gr.value(in).data();
    const auto& g = gr.grad_of(self);
    gr.accumulate(in, (x > Scalar(0)).select(g, (x < Scalar(0)).select(-g, Scalar(0))));
  });
}

template <typename Scalar>
Var<Scalar> sum(Var<Scalar> a) {
  const double total = a.value().data().template cast<double>().sum();
  BasicTensor<Scalar> out({1}, {static_cast<Scalar>(total)});
  return a.graph->record("sum", {a.id}, std::move(out), [](Graph<Scalar>& gr, int self) {
    using Storage = typename BasicTensor<Scalar>::Storage;
    const int in = gr.inputs(self)[0];
    gr.accumulate(in, Storage::Constant(gr.value(in).size(), gr.grad_of(self)[0]));
  });
}

template <typename Scalar>
Var<Scalar> mean(Var<Scalar> a) {
  const double n = static_cast<double>(a.value().size());
  const double total = a.value().data().template cast<double>().sum();
  BasicTensor<Scalar> out({1}, {static_cast<Scalar>(total / n)});
  return a.graph->record("mean", {a.id}, std::move(out), [n](Graph<Scalar>& gr, int self) {
    using Storage = typename BasicTensor<Scalar>::Storage;
    const int in = gr.inputs(self)[0];
    gr.accumulate(in, Storage::Constant(gr.value(in).size(), static_cast<Scalar>(gr.grad_of(self)[0] / n)));
  });
}

template <typename Scalar>
Var<Scalar> crop(Var<Scalar> a, int y, int x, int h, int w) {
  const auto& v = a.value();
  require_image(v, "crop input");
  if (h <= 0 || w <= 0 || y < 0 || x < 0 || y + h > v.dim(1) || x + w > v.dim(2))
    raise(ErrorKind::range, "crop window outside " + shape_string(v.shape()));
  const int c = v.dim(0);
  BasicTensor<Scalar> out({c, h, w});
  for (int ch = 0; ch < c; ++ch) out.channel(ch) = v.channel(ch).block(y, x, h, w);
  return a.graph->record("crop", {a.id}, std::move(out), [y, x, h, w](Graph<Scalar>& gr, int self) {
    const int in = gr.inputs(self)[0];
    const auto& src = gr.value(in);
    BasicTensor<Scalar> full(src.shape());
    BasicTensor<Scalar> g(gr.value(self).shape(), gr.grad_of(self));
    for (int ch = 0; ch < src.dim(0); ++ch) full.channel(ch).block(y, x, h, w) = g.channel(ch);
    gr.accumulate(in, full.data());
  });
}

#define LAM_INSTANTIATE_OPS(S)                                                                      \
  template class Graph<S>;                                                                          \
  template Var<S> conv2d(Var<S>, Var<S>, Var<S>, int);                                              \
  template Var<S> pixel_shuffle(Var<S>, int);                                                       \
  template Var<S> relu(Var<S>);                                                                     \
  template Var<S> prelu(Var<S>, Var<S>);                                                            \
  template Var<S> activation(Var<S>, Activation);                                                   \
  template Var<S> add(Var<S>, Var<S>);                                                              \
  template Var<S> sub(Var<S>, Var<S>);                                                              \
  template Var<S> mul(Var<S>, Var<S>);                                                              \
  template Var<S> scale(Var<S>, double);                                                            \
  template Var<S> abs(Var<S>);                                                                      \
  template Var<S> sum(Var<S>);                                                                      \
  template Var<S> mean(Var<S>);                                                                     \
  template Var<S> crop(Var<S>, int, int, int, int);                                                 \
  template BasicTensor<S> kernels::conv2d(const BasicTensor<S>&, const BasicTensor<S>&,             \
                                          const BasicTensor<S>&, int);                              \
  template BasicTensor<S> kernels::pixel_shuffle(const BasicTensor<S>&, int);                       \
  template BasicTensor<S> kernels::pixel_unshuffle(const BasicTensor<S>&, int);

LAM_INSTANTIATE_OPS(float)
LAM_INSTANTIATE_OPS(double)

#undef LAM_INSTANTIATE_OPS

}  // namespace lam
