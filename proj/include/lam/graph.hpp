#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lam/tensor.hpp"

namespace lam {

template <typename Scalar>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <typename Scalar>
struct Var {
  Graph<Scalar>* graph = nullptr;
  int id = -1;

  const BasicTensor<Scalar>& value() const { return graph->value(id); }
  const Shape& shape() const { return value().shape(); }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so the node list
/// is already topologically sorted; backward walks it once in reverse.
/// One backward per forward: the tape is single-use.
template <typename Scalar>
class Graph {
 public:
  using TensorT = BasicTensor<Scalar>;
  using Storage = typename TensorT::Storage;
  using BackwardFn = std::function<void(Graph&, int self)>;

  /// Input node; receives a gradient iff value.requires_grad().
  Var<Scalar> leaf(TensorT value);
  /// Input node that never receives a gradient.
  Var<Scalar> constant(TensorT value);
  /// Appends an operator node. `backward` reads grad(self) and accumulates into
  /// its inputs through accumulate(); it is skipped when no input needs a gradient.
  Var<Scalar> record(const char* op, std::vector<int> inputs, TensorT value, BackwardFn backward);

  const TensorT& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
  const TensorT& value(Var<Scalar> v) const { return value(v.id); }
  const std::vector<int>& inputs(int id) const { return nodes_.at(static_cast<std::size_t>(id)).inputs; }
  const char* op(int id) const { return nodes_.at(static_cast<std::size_t>(id)).op; }
  bool needs_grad(int id) const { return nodes_.at(static_cast<std::size_t>(id)).needs_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient buffer of a node during backward (zero-initialised on first use).
  const Storage& grad_of(int id) const;
  void accumulate(int id, const Storage& delta);

  /// Seeds d(output) = seed and propagates to every leaf that requires a
  /// gradient. The output must hold exactly one value.
  void backward(Var<Scalar> output, Scalar seed = Scalar(1));

  /// Gradient of a node after backward. Leaves with requires_grad also carry
  /// it on their tensor (value(v).grad()).
  const Storage& grad(Var<Scalar> v) const;

  /// Number of nodes whose backward closure ran in the last backward pass.
  int backward_visits() const noexcept { return backward_visits_; }

 private:
  struct Node {
    const char* op = "";
    std::vector<int> inputs;
    TensorT value;
    Storage grad;
    bool needs_grad = false;
    bool is_leaf = false;
    BackwardFn backward;
  };

  Var<Scalar> push(Node node);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
  int backward_visits_ = 0;
};

enum class ActivationKind { identity, relu, prelu };

struct Activation {
  ActivationKind kind = ActivationKind::identity;
  double slope = 0.25;  // prelu only
};

// Operators. All inputs must belong to the same graph.

/// Stride-1 2-D convolution (cross-correlation) with zero padding.
/// input (c_in,h,w), kernel (c_out,c_in,k,k), bias (c_out), k odd.
template <typename Scalar>
Var<Scalar> conv2d(Var<Scalar> input, Var<Scalar> kernel, Var<Scalar> bias, int padding);

/// Depth-to-space: (c*s*s,h,w) -> (c,s*h,s*w); output (c, y*s+i, x*s+j) reads
/// input channel c*s*s + i*s + j at (y, x).
template <typename Scalar>
Var<Scalar> pixel_shuffle(Var<Scalar> input, int scale);

/// ReLU with subgradient 0 at 0.
template <typename Scalar>
Var<Scalar> relu(Var<Scalar> input);

/// PReLU with a single learnable slope stored as a shape-(1) tensor.
template <typename Scalar>
Var<Scalar> prelu(Var<Scalar> input, Var<Scalar> slope);

template <typename Scalar>
Var<Scalar> activation(Var<Scalar> input, Activation act);

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b);

template <typename Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b);

template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b);

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, double factor);

/// |x| with subgradient 0 at 0.
template <typename Scalar>
Var<Scalar> abs(Var<Scalar> a);

/// Sum of all entries; result has shape (1).
template <typename Scalar>
Var<Scalar> sum(Var<Scalar> a);

template <typename Scalar>
Var<Scalar> mean(Var<Scalar> a);

/// Spatial crop of a rank-3 tensor: rows [y, y+h), columns [x, x+w), all channels.
template <typename Scalar>
Var<Scalar> crop(Var<Scalar> a, int y, int x, int h, int w);

template <typename Scalar>
Var<Scalar> operator+(Var<Scalar> a, Var<Scalar> b) { return add(a, b); }
template <typename Scalar>
Var<Scalar> operator-(Var<Scalar> a, Var<Scalar> b) { return sub(a, b); }
template <typename Scalar>
Var<Scalar> operator*(Var<Scalar> a, Var<Scalar> b) { return mul(a, b); }

// Graph-free forward kernels shared with the operators above.
namespace kernels {

template <typename Scalar>
BasicTensor<Scalar> conv2d(const BasicTensor<Scalar>& input, const BasicTensor<Scalar>& kernel,
                           const BasicTensor<Scalar>& bias, int padding);

template <typename Scalar>
BasicTensor<Scalar> pixel_shuffle(const BasicTensor<Scalar>& input, int scale);

/// Inverse rearrangement of pixel_shuffle.
template <typename Scalar>
BasicTensor<Scalar> pixel_unshuffle(const BasicTensor<Scalar>& input, int scale);

}  // namespace kernels

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace lam
