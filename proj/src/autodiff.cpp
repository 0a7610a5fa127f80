#include "pbgan/autodiff.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "pbgan/kernels.hpp"

namespace pbgan {

const Tensor& Var::value() const { return graph->value(*this); }

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Graph::leaf(Tensor value) {
  value.require_finite("leaf");
  return push(Node{std::move(value), Tensor{}, true, nullptr});
}

Var Graph::constant(Tensor value) {
  value.require_finite("constant");
  return push(Node{std::move(value), Tensor{}, false, nullptr});
}

Var Graph::record(const char* op, Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
  return record(op, std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(fn));
}

Var Graph::record(const char* op, Tensor value, std::span<const Var> parents, BackwardFn fn) {
  value.require_finite(op);
  bool needs = false;
  for (Var p : parents) {
    if (p.graph != this) throw std::logic_error(std::string(op) + ": operand belongs to another graph");
    needs = needs || nodes_.at(p.id).requires_grad;
  }
  return push(Node{std::move(value), Tensor{}, needs, needs ? std::move(fn) : nullptr});
}

void Graph::accumulate(Var v, const Tensor& g) {
  Node& n = nodes_.at(v.id);
  if (!n.requires_grad) return;
  if (g.shape() != n.value.shape()) {
    throw ShapeError("gradient shape " + shape_str(g.shape()) + " does not match value " + shape_str(n.value.shape()));
  }
  if (n.grad.empty()) {
    n.grad = g;
    return;
  }
  auto dst = n.grad.data();
  const auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Graph::backward(Var loss) {
  if (loss.graph != this) throw std::logic_error("backward: loss belongs to another graph");
  const Tensor& lv = value(loss);
  if (lv.size() != 1) throw ShapeError("backward: loss must be scalar, got " + shape_str(lv.shape()));
  for (Node& n : nodes_) n.grad = Tensor{};
  if (!nodes_[loss.id].requires_grad) return;
  nodes_[loss.id].grad = Tensor::full(lv.shape(), 1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty() || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.grad.empty() ? Tensor::zeros(n.value.shape()) : n.grad;
}

// ---------------------------------------------------------------------------
// Convolutions and matmul

Var conv2d(Var input, Var filters, Var bias, int stride, int pad) {
  Graph& g = *input.graph;
  const kernels::Conv2dGeometry geo{stride, pad};
  Tensor out = kernels::conv2d(input.value(), filters.value(), bias.value(), geo);
  return g.record("conv2d", std::move(out), {input, filters, bias}, [=](Graph& gr, const Tensor& go) {
    if (gr.requires_grad(input)) {
      gr.accumulate(input, kernels::conv2d_grad_input(go, filters.value(), input.shape(), geo));
    }
    if (gr.requires_grad(filters)) {
      gr.accumulate(filters, kernels::conv2d_grad_filters(input.value(), go, filters.shape(), geo));
    }
    if (gr.requires_grad(bias)) gr.accumulate(bias, kernels::channel_sums(go));
  });
}

Var deconv2d(Var input, Var filters, Var bias, int stride, int pad) {
  Graph& g = *input.graph;
  const kernels::Conv2dGeometry geo{stride, pad};
  Tensor out = kernels::deconv2d(input.value(), filters.value(), bias.value(), geo);
  return g.record("deconv2d", std::move(out), {input, filters, bias}, [=](Graph& gr, const Tensor& go) {
    if (gr.requires_grad(input)) {
      gr.accumulate(input, kernels::deconv2d_grad_input(go, filters.value(), input.shape(), geo));
    }
    if (gr.requires_grad(filters)) {
      gr.accumulate(filters, kernels::deconv2d_grad_filters(input.value(), go, filters.shape(), geo));
    }
    if (gr.requires_grad(bias)) gr.accumulate(bias, kernels::channel_sums(go));
  });
}

Var matmul(Var a, Var b) {
  Tensor out = kernels::matmul(a.value(), b.value());
  return a.graph->record("matmul", std::move(out), {a, b}, [=](Graph& gr, const Tensor& go) {
    if (gr.requires_grad(a)) gr.accumulate(a, kernels::matmul_nt(go, b.value()));
    if (gr.requires_grad(b)) gr.accumulate(b, kernels::matmul_tn(a.value(), go));
  });
}

// ---------------------------------------------------------------------------
// Pointwise

namespace {

template <typename F, typename D>
Var unary(const char* op, Var x, F f, D dfdx) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return x.graph->record(op, std::move(out), {x}, [=](Graph& gr, const Tensor& go) {
    const Tensor& in = x.value();
    Tensor gx(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i) gx[i] = go[i] * dfdx(in[i]);
    gr.accumulate(x, gx);
  });
}

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

}  // namespace

Var relu(Var x) {
  return unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var x) {
  return unary("leaky_relu", x, [](double v) { return v > 0.0 ? v : kLeakySlope * v; },
               [](double v) { return v > 0.0 ? 1.0 : kLeakySlope; });
}

Var tanh(Var x) {
  return unary("tanh", x, [](double v) { return std::tanh(v); },
               [](double v) {
                 const double t = std::tanh(v);
                 return 1.0 - t * t;
               });
}

Var abs(Var x) {
  return unary("abs", x, [](double v) { return std::abs(v); },
               [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Var square(Var x) {
  return unary("square", x, [](double v) { return v * v; }, [](double v) { return 2.0 * v; });
}

Var scale(Var x, double factor) {
  return unary("scale", x, [factor](double v) { return factor * v; }, [factor](double) { return factor; });
}

Var add_scalar(Var x, double offset) {
  return unary("add_scalar", x, [offset](double v) { return v + offset; }, [](double) { return 1.0; });
}

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return a.graph->record("add", std::move(out), {a, b}, [=](Graph& gr, const Tensor& go) {
    gr.accumulate(a, go);
    gr.accumulate(b, go);
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return a.graph->record("sub", std::move(out), {a, b}, [=](Graph& gr, const Tensor& go) {
    gr.accumulate(a, go);
    if (gr.requires_grad(b)) {
      Tensor neg(go.shape());
      for (std::size_t i = 0; i < go.size(); ++i) neg[i] = -go[i];
      gr.accumulate(b, neg);
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return a.graph->record("mul", std::move(out), {a, b}, [=](Graph& gr, const Tensor& go) {
    if (gr.requires_grad(a)) {
      Tensor ga(go.shape());
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] = go[i] * b.value()[i];
      gr.accumulate(a, ga);
    }
    if (gr.requires_grad(b)) {
      Tensor gb(go.shape());
      for (std::size_t i = 0; i < go.size(); ++i) gb[i] = go[i] * a.value()[i];
      gr.accumulate(b, gb);
    }
  });
}

Var elementwise(Elementwise kind, std::span<const Var> args) {
  const std::size_t arity =
      (kind == Elementwise::add || kind == Elementwise::mul || kind == Elementwise::sub) ? 2 : 1;
  if (args.size() != arity) throw ShapeError("elementwise: wrong operand count");
  switch (kind) {
    case Elementwise::relu: return relu(args[0]);
    case Elementwise::leaky_relu: return leaky_relu(args[0]);
    case Elementwise::tanh: return tanh(args[0]);
    case Elementwise::add: return add(args[0], args[1]);
    case Elementwise::mul: return mul(args[0], args[1]);
    case Elementwise::sub: return sub(args[0], args[1]);
  }
  throw std::logic_error("elementwise: unknown kind");
}

// ---------------------------------------------------------------------------
// Structural

Var concat_last_axis(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_last_axis: empty part list");
  const Shape& first = parts[0].shape();
  const int rank = static_cast<int>(first.size());
  Shape out_shape = first;
  out_shape.back() = 0;
  std::vector<int> widths;
  for (Var p : parts) {
    const Shape& s = p.shape();
    if (static_cast<int>(s.size()) != rank || !std::equal(s.begin(), s.end() - 1, first.begin())) {
      throw ShapeError("concat_last_axis: incompatible shapes " + shape_str(first) + " and " + shape_str(s));
    }
    widths.push_back(s.back());
    out_shape.back() += s.back();
  }
  const std::size_t outer = shape_numel(first) / static_cast<std::size_t>(first.back());
  const std::size_t total = static_cast<std::size_t>(out_shape.back());

  Tensor out(out_shape);
  std::size_t col = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].value().data();
    const std::size_t w = static_cast<std::size_t>(widths[k]);
    for (std::size_t r = 0; r < outer; ++r) {
      for (std::size_t c = 0; c < w; ++c) out[r * total + col + c] = src[r * w + c];
    }
    col += w;
  }

  std::vector<Var> saved(parts.begin(), parts.end());
  Graph& g = *parts[0].graph;
  return g.record("concat_last_axis", std::move(out), parts, [saved, widths, outer, total](Graph& gr, const Tensor& go) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < saved.size(); ++k) {
      const std::size_t w = static_cast<std::size_t>(widths[k]);
      if (gr.requires_grad(saved[k])) {
        Tensor gp(saved[k].shape());
        for (std::size_t r = 0; r < outer; ++r) {
          for (std::size_t c = 0; c < w; ++c) gp[r * w + c] = go[r * total + offset + c];
        }
        gr.accumulate(saved[k], gp);
      }
      offset += w;
    }
  });
}

Var slice_last_axis(Var x, int begin, int count) {
  const Shape& in_shape = x.shape();
  const int last = in_shape.back();
  if (begin < 0 || count <= 0 || begin + count > last) {
    throw ShapeError("slice_last_axis: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") outside extent " + std::to_string(last));
  }
  Shape out_shape = in_shape;
  out_shape.back() = count;
  const std::size_t outer = shape_numel(in_shape) / static_cast<std::size_t>(last);
  const std::size_t w = static_cast<std::size_t>(count);
  const std::size_t total = static_cast<std::size_t>(last);
  const std::size_t b0 = static_cast<std::size_t>(begin);

  Tensor out(out_shape);
  for (std::size_t r = 0; r < outer; ++r) {
    for (std::size_t c = 0; c < w; ++c) out[r * w + c] = x.value()[r * total + b0 + c];
  }
  return x.graph->record("slice_last_axis", std::move(out), {x}, [=](Graph& gr, const Tensor& go) {
    Tensor gx(x.shape());
    for (std::size_t r = 0; r < outer; ++r) {
      for (std::size_t c = 0; c < w; ++c) gx[r * total + b0 + c] = go[r * w + c];
    }
    gr.accumulate(x, gx);
  });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.graph->record("reshape", std::move(out), {x}, [=](Graph& gr, const Tensor& go) {
    gr.accumulate(x, go.reshaped(x.shape()));
  });
}

Var instance_norm(Var x, double eps) {
  const Tensor& xv = x.value();
  if (xv.rank() != 3) throw ShapeError("instance_norm: expected [h,w,c], got " + shape_str(xv.shape()));
  const std::size_t c = static_cast<std::size_t>(xv.dim(2));
  const std::size_t n = xv.size() / c;
  auto inv_std = std::make_shared<std::vector<double>>(c);
  std::vector<double> mu(c, 0.0), var(c, 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t k = 0; k < c; ++k) mu[k] += xv[p * c + k];
  }
  for (std::size_t k = 0; k < c; ++k) mu[k] /= static_cast<double>(n);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t k = 0; k < c; ++k) {
      const double d = xv[p * c + k] - mu[k];
      var[k] += d * d;
    }
  }
  for (std::size_t k = 0; k < c; ++k) (*inv_std)[k] = 1.0 / std::sqrt(var[k] / static_cast<double>(n) + eps);

  Tensor out(xv.shape());
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t k = 0; k < c; ++k) out[p * c + k] = (xv[p * c + k] - mu[k]) * (*inv_std)[k];
  }
  auto normalized = std::make_shared<const Tensor>(out);
  return x.graph->record("instance_norm", std::move(out), {x}, [=](Graph& gr, const Tensor& go) {
    const Tensor& yv = *normalized;
    std::vector<double> mean_go(c, 0.0), mean_goy(c, 0.0);
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t k = 0; k < c; ++k) {
        mean_go[k] += go[p * c + k];
        mean_goy[k] += go[p * c + k] * yv[p * c + k];
      }
    }
    for (std::size_t k = 0; k < c; ++k) {
      mean_go[k] /= static_cast<double>(n);
      mean_goy[k] /= static_cast<double>(n);
    }
    Tensor gx(yv.shape());
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t k = 0; k < c; ++k) {
        gx[p * c + k] = (*inv_std)[k] * (go[p * c + k] - mean_go[k] - yv[p * c + k] * mean_goy[k]);
      }
    }
    gr.accumulate(x, gx);
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.graph->record("sum", Tensor::scalar(s), {x}, [=](Graph& gr, const Tensor& go) {
    gr.accumulate(x, Tensor::full(x.shape(), go[0]));
  });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.graph->record("mean", Tensor::scalar(s / n), {x}, [=](Graph& gr, const Tensor& go) {
    gr.accumulate(x, Tensor::full(x.shape(), go[0] / n));
  });
}

}  // namespace pbgan
