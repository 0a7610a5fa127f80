#pragma once

// Tape-based reverse-mode differentiation over Tensor values.
//
// A Graph owns every node created while building an expression. Nodes are
// appended in evaluation order, so the tape is already topological and
// backward() is a single reverse sweep. Gradients accumulate additively when a
// node feeds several consumers.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "pbgan/tensor.hpp"

namespace pbgan {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor& grad_out)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Differentiable input.
  Var leaf(Tensor value);
  /// Input that never receives a gradient.
  Var constant(Tensor value);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  /// Runs the reverse sweep from a single-element loss node. Gradients of any
  /// previous backward() are discarded first.
  void backward(Var loss);

  /// True when the last backward() delivered a gradient to `v`.
  bool has_grad(Var v) const { return !nodes_.at(v.id).grad.empty(); }
  /// Gradient from the last backward(); zeros when none reached `v`.
  Tensor grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

  /// Appends an operation node. `fn` is only kept when some parent needs a
  /// gradient. The value must be finite.
  Var record(const char* op, Tensor value, std::initializer_list<Var> parents, BackwardFn fn);
  Var record(const char* op, Tensor value, std::span<const Var> parents, BackwardFn fn);

  /// Adds `g` into the gradient of `v` (no-op for constants).
  void accumulate(Var v, const Tensor& g);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
};

// Convolutions. Filters are (k0, k1, c_in, c_out); see kernels.hpp.
Var conv2d(Var input, Var filters, Var bias, int stride, int pad);
Var deconv2d(Var input, Var filters, Var bias, int stride, int pad);

Var matmul(Var a, Var b);

enum class Elementwise { relu, leaky_relu, tanh, add, mul, sub };

inline constexpr double kLeakySlope = 0.2;

Var relu(Var x);
Var leaky_relu(Var x);
Var tanh(Var x);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var abs(Var x);
Var square(Var x);
Var scale(Var x, double factor);
Var add_scalar(Var x, double offset);

/// Dispatches unary kinds on args[0] and binary kinds on args[0], args[1].
Var elementwise(Elementwise kind, std::span<const Var> args);

Var concat_last_axis(std::span<const Var> parts);
Var slice_last_axis(Var x, int begin, int count);
Var reshape(Var x, Shape shape);

/// Per-channel normalization over the spatial axes of [h, w, c], no affine.
Var instance_norm(Var x, double eps = 1e-5);

Var sum(Var x);
Var mean(Var x);

}  // namespace pbgan
