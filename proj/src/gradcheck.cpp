#include "pbgan/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "pbgan/gan_models.hpp"
#include "pbgan/model_spec.hpp"
#include "pbgan/piggyback.hpp"
#include "pbgan/rng.hpp"
#include "pbgan/trainer.hpp"

namespace pbgan {

namespace {

double evaluate(const LossBuilder& loss, const std::vector<Tensor>& inputs) {
  Graph g;
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(g.constant(t));
  return loss(g, vars).value().item();
}

}  // namespace

GradCheck check_gradients(const LossBuilder& loss, std::vector<Tensor> inputs, double step, double tol) {
  Graph g;
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(g.leaf(t));
  g.backward(loss(g, vars));

  GradCheck result;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor analytic = g.grad(vars[i]);
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double saved = inputs[i][j];
      inputs[i][j] = saved + step;
      const double up = evaluate(loss, inputs);
      inputs[i][j] = saved - step;
      const double down = evaluate(loss, inputs);
      inputs[i][j] = saved;
      const double numeric = (up - down) / (2.0 * step);
      diff2 += (analytic[j] - numeric) * (analytic[j] - numeric);
      a2 += analytic[j] * analytic[j];
      n2 += numeric * numeric;
    }
    const double scale = std::sqrt(std::max(a2, n2));
    const double err = scale < kGradZeroNorm ? std::sqrt(diff2) : std::sqrt(diff2) / scale;
    result.worst_error = std::max(result.worst_error, err);
  }
  result.pass = result.worst_error <= tol;
  return result;
}

namespace {

Tensor uniform(RngStream& rng, const Shape& shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Values in [-1, -0.1] U [0.1, 1], clear of the kinks in relu and abs.
Tensor off_zero(RngStream& rng, const Shape& shape) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double m = rng.uniform(0.1, 1.0);
    t[i] = rng.uniform() < 0.5 ? -m : m;
  }
  return t;
}

int pick(RngStream& rng, int lo, int hi) { return static_cast<int>(rng.uniform_int(lo, hi)); }

// Contracting an op's output with fixed random weights gives a scalar whose
// gradient exercises every output element differently.
Var contract(Graph& g, Var y, const Tensor& weights) { return sum(mul(y, g.constant(weights))); }

struct Instance {
  LossBuilder loss;
  std::vector<Tensor> inputs;
};

using InstanceMaker = std::function<Instance(RngStream&)>;

Instance unary(RngStream& rng, Var (*op)(Var), bool kinked) {
  const Shape shape{pick(rng, 1, 4), pick(rng, 1, 4), pick(rng, 1, 3)};
  Tensor x = kinked ? off_zero(rng, shape) : uniform(rng, shape, -2.0, 2.0);
  const Tensor w = uniform(rng, shape);
  return {[op, w](Graph& g, std::span<const Var> v) { return contract(g, op(v[0]), w); }, {std::move(x)}};
}

Instance binary(RngStream& rng, Var (*op)(Var, Var)) {
  const Shape shape{pick(rng, 1, 4), pick(rng, 1, 5)};
  const Tensor w = uniform(rng, shape);
  return {[op, w](Graph& g, std::span<const Var> v) { return contract(g, op(v[0], v[1]), w); },
          {uniform(rng, shape), uniform(rng, shape)}};
}

Instance conv_instance(RngStream& rng, bool transposed) {
  for (;;) {
    const int k0 = pick(rng, 1, 4), k1 = pick(rng, 1, 4);
    const int stride = pick(rng, 1, 2), pad = pick(rng, 0, std::min(k0, k1) - 1);
    const int c_in = pick(rng, 1, 3), c_out = pick(rng, 1, 3);
    int h, w, oh, ow;
    if (transposed) {
      h = pick(rng, 1, 4);
      w = pick(rng, 1, 4);
      oh = (h - 1) * stride - 2 * pad + k0;
      ow = (w - 1) * stride - 2 * pad + k1;
    } else {
      oh = pick(rng, 1, 3);
      ow = pick(rng, 1, 3);
      h = (oh - 1) * stride + k0 - 2 * pad;
      w = (ow - 1) * stride + k1 - 2 * pad;
    }
    if (h < 1 || w < 1 || oh < 1 || ow < 1) continue;
    const Tensor weights = uniform(rng, {oh, ow, c_out});
    LossBuilder loss = [=](Graph& g, std::span<const Var> v) {
      const Var y = transposed ? deconv2d(v[0], v[1], v[2], stride, pad) : conv2d(v[0], v[1], v[2], stride, pad);
      return contract(g, y, weights);
    };
    return {loss, {uniform(rng, {h, w, c_in}), uniform(rng, {k0, k1, c_in, c_out}), uniform(rng, {c_out})}};
  }
}

Instance compose_instance(RngStream& rng) {
  const FilterGeometry geo{pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 3)};
  const int n_u = pick(rng, 0, 2);
  const int n_p = n_u == 0 ? pick(rng, 1, 3) : pick(rng, 0, 3);
  const int width = pick(rng, 1, 5);
  const Tensor bank = uniform(rng, {geo.rows(), width});
  const Tensor weights = uniform(rng, {geo.kw, geo.kh, geo.c_in, n_u + n_p});
  std::vector<Tensor> inputs;
  if (n_u > 0) inputs.push_back(uniform(rng, {geo.kw, geo.kh, geo.c_in, n_u}));
  if (n_p > 0) inputs.push_back(uniform(rng, {width, n_p}));
  LossBuilder loss = [=](Graph& g, std::span<const Var> v) {
    std::optional<Var> u, b, w;
    std::size_t next = 0;
    if (n_u > 0) u = v[next++];
    if (n_p > 0) {
      b = g.constant(bank);
      w = v[next++];
    }
    return contract(g, compose_filters(geo, u, b, w), weights);
  };
  return {loss, std::move(inputs)};
}

// 4x4 encoder/decoder with instance norm and every activation kind, scored
// by a two-layer patch discriminator.
ModelSpec tiny_spec() {
  ModelSpec s;
  s.height = s.width = 4;
  s.channels = 2;
  auto layer = [](LayerKind kind, int k, int c_in, int c_out, int stride, int pad, Activation act, Normalization norm) {
    LayerSpec l;
    l.kind = kind;
    l.kw = l.kh = k;
    l.c_in = c_in;
    l.c_out = c_out;
    l.stride = stride;
    l.pad = pad;
    l.activation = act;
    l.normalization = norm;
    return l;
  };
  s.generator.push_back(layer(LayerKind::conv, 4, 2, 3, 2, 1, Activation::leaky_relu, Normalization::instance));
  s.generator.push_back(layer(LayerKind::deconv, 4, 3, 2, 2, 1, Activation::relu, Normalization::instance));
  LayerSpec head = layer(LayerKind::conv, 3, 2, 2, 1, 1, Activation::tanh, Normalization::none);
  head.task_specific = true;
  s.generator.push_back(head);
  s.discriminator.push_back(layer(LayerKind::conv, 4, 4, 2, 2, 1, Activation::leaky_relu, Normalization::none));
  s.discriminator.push_back(layer(LayerKind::conv, 3, 2, 1, 1, 1, Activation::none, Normalization::none));
  return s;
}

Instance network_instance(RngStream& rng) {
  ModelSpec spec = tiny_spec();
  const Shape img{spec.height, spec.width, spec.channels};
  const Tensor cond = uniform(rng, img);
  const Tensor target = uniform(rng, img);
  std::vector<Tensor> inputs;
  for (const LayerSpec& l : spec.generator) {
    inputs.push_back(uniform(rng, l.filter_shape(), -0.5, 0.5));
    inputs.push_back(uniform(rng, {l.c_out}, -0.1, 0.1));
  }
  for (const LayerSpec& l : spec.discriminator) {
    inputs.push_back(uniform(rng, l.filter_shape(), -0.5, 0.5));
    inputs.push_back(uniform(rng, {l.c_out}, -0.1, 0.1));
  }
  LossBuilder loss = [spec, cond, target](Graph& g, std::span<const Var> v) {
    const std::size_t ng = spec.generator.size();
    std::vector<LayerVars> gen, disc;
    for (std::size_t i = 0; i < ng; ++i) gen.push_back({v[2 * i], v[2 * i + 1]});
    for (std::size_t i = 0; i < spec.discriminator.size(); ++i) disc.push_back({v[2 * (ng + i)], v[2 * (ng + i) + 1]});
    const Var c = g.constant(cond), t = g.constant(target);
    const Var fake = generator_forward(spec, gen, c);
    const Var d_fake = discriminator_forward(spec, disc, c, fake);
    const Var d_real = discriminator_forward(spec, disc, c, t);
    return add(generator_loss(d_fake, fake, t, 1.0), discriminator_loss(d_real, d_fake));
  };
  return {loss, std::move(inputs)};
}

Instance skip_instance(RngStream& rng) {
  ModelSpec spec;
  spec.height = spec.width = 4;
  spec.channels = 2;
  LayerSpec a;
  a.kind = LayerKind::conv;
  a.kw = a.kh = 3;
  a.c_in = 2;
  a.c_out = 2;
  a.pad = 1;
  a.activation = Activation::leaky_relu;
  a.normalization = Normalization::instance;
  LayerSpec b = a;
  b.activation = Activation::tanh;
  b.normalization = Normalization::none;
  b.c_in = 4;
  b.skip_from = 0;
  b.task_specific = true;
  LayerSpec mid = a;
  spec.generator = {a, mid, b};
  const Tensor cond = uniform(rng, {4, 4, 2});
  const Tensor weights = uniform(rng, {4, 4, 2});
  std::vector<Tensor> inputs;
  for (const LayerSpec& l : spec.generator) {
    inputs.push_back(uniform(rng, l.filter_shape(), -0.5, 0.5));
    inputs.push_back(uniform(rng, {l.c_out}, -0.1, 0.1));
  }
  LossBuilder loss = [spec, cond, weights](Graph& g, std::span<const Var> v) {
    std::vector<LayerVars> gen;
    for (std::size_t i = 0; i < spec.generator.size(); ++i) gen.push_back({v[2 * i], v[2 * i + 1]});
    return contract(g, generator_forward(spec, gen, g.constant(cond)), weights);
  };
  return {loss, std::move(inputs)};
}

}  // namespace

std::vector<OpGradReport> run_gradient_suite(std::uint64_t seed, int instances) {
  const std::vector<std::pair<std::string, InstanceMaker>> ops = {
      {"conv2d", [](RngStream& r) { return conv_instance(r, false); }},
      {"deconv2d", [](RngStream& r) { return conv_instance(r, true); }},
      {"matmul",
       [](RngStream& r) {
         const int m = pick(r, 1, 4), k = pick(r, 1, 4), n = pick(r, 1, 4);
         const Tensor w = uniform(r, {m, n});
         return Instance{[w](Graph& g, std::span<const Var> v) { return contract(g, matmul(v[0], v[1]), w); },
                         {uniform(r, {m, k}), uniform(r, {k, n})}};
       }},
      {"relu", [](RngStream& r) { return unary(r, relu, true); }},
      {"leaky_relu", [](RngStream& r) { return unary(r, leaky_relu, true); }},
      {"abs", [](RngStream& r) { return unary(r, abs, true); }},
      {"tanh", [](RngStream& r) { return unary(r, tanh, false); }},
      {"square", [](RngStream& r) { return unary(r, square, false); }},
      {"scale",
       [](RngStream& r) {
         const double f = r.uniform(-3.0, 3.0);
         const Tensor x = uniform(r, {3, 2}), w = uniform(r, {3, 2});
         return Instance{[f, w](Graph& g, std::span<const Var> v) { return contract(g, scale(v[0], f), w); }, {x}};
       }},
      {"add_scalar",
       [](RngStream& r) {
         const double c = r.uniform(-3.0, 3.0);
         const Tensor x = uniform(r, {2, 3}), w = uniform(r, {2, 3});
         return Instance{[c, w](Graph& g, std::span<const Var> v) { return contract(g, add_scalar(v[0], c), w); },
                         {x}};
       }},
      {"add", [](RngStream& r) { return binary(r, add); }},
      {"sub", [](RngStream& r) { return binary(r, sub); }},
      {"mul", [](RngStream& r) { return binary(r, mul); }},
      {"concat_last_axis",
       [](RngStream& r) {
         const int rows = pick(r, 1, 3), parts = pick(r, 1, 3);
         std::vector<Tensor> in;
         int total = 0;
         for (int p = 0; p < parts; ++p) {
           const int c = pick(r, 1, 3);
           total += c;
           in.push_back(uniform(r, {rows, 2, c}));
         }
         const Tensor w = uniform(r, {rows, 2, total});
         return Instance{[w](Graph& g, std::span<const Var> v) { return contract(g, concat_last_axis(v), w); },
                         std::move(in)};
       }},
      {"slice_last_axis",
       [](RngStream& r) {
         const int c = pick(r, 1, 5), begin = pick(r, 0, c - 1), count = pick(r, 1, c - begin);
         const Tensor w = uniform(r, {3, count});
         return Instance{[=](Graph& g, std::span<const Var> v) {
                           return contract(g, slice_last_axis(v[0], begin, count), w);
                         },
                         {uniform(r, {3, c})}};
       }},
      {"reshape",
       [](RngStream& r) {
         const int a = pick(r, 1, 3), b = pick(r, 1, 3), c = pick(r, 1, 3);
         const Tensor w = uniform(r, {a * b, c});
         return Instance{[=](Graph& g, std::span<const Var> v) { return contract(g, reshape(v[0], {a * b, c}), w); },
                         {uniform(r, {a, b, c})}};
       }},
      {"instance_norm",
       [](RngStream& r) {
         // Two-pixel instances normalize to +-1 up to eps, leaving an O(eps)
         // gradient that rounding swamps; use at least 2x2.
         const Shape s{pick(r, 2, 4), pick(r, 2, 4), pick(r, 1, 3)};
         const Tensor w = uniform(r, s);
         return Instance{[w](Graph& g, std::span<const Var> v) { return contract(g, instance_norm(v[0]), w); },
                         {uniform(r, s, -2.0, 2.0)}};
       }},
      {"sum",
       [](RngStream& r) {
         return Instance{[](Graph&, std::span<const Var> v) { return sum(square(v[0])); },
                         {uniform(r, {pick(r, 1, 4), pick(r, 1, 4)})}};
       }},
      {"mean",
       [](RngStream& r) {
         return Instance{[](Graph&, std::span<const Var> v) { return mean(square(v[0])); },
                         {uniform(r, {pick(r, 1, 4), pick(r, 1, 4)})}};
       }},
      {"compose_filters", compose_instance},
      {"generator_skip", skip_instance},
      {"gan_losses_network", network_instance},
  };

  std::vector<OpGradReport> reports;
  for (std::size_t op = 0; op < ops.size(); ++op) {
    OpGradReport rep;
    rep.op = ops[op].first;
    for (int i = 0; i < instances; ++i) {
      RngStream rng(seed, RngPurpose::test, {static_cast<std::uint64_t>(op), static_cast<std::uint64_t>(i)});
      Instance inst = ops[op].second(rng);
      const GradCheck c = check_gradients(inst.loss, std::move(inst.inputs));
      rep.worst_error = std::max(rep.worst_error, c.worst_error);
      rep.pass = rep.pass && c.pass;
      ++rep.instances;
    }
    reports.push_back(rep);
  }
  return reports;
}

}  // namespace pbgan
