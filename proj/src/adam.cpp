#include "pbgan/adam.hpp"

#include <cmath>

namespace pbgan {

AdamResult adam_step(const Tensor& param, const Tensor& grad, const AdamState& state, const AdamConfig& cfg) {
  if (grad.shape() != param.shape() || state.m.shape() != param.shape() || state.v.shape() != param.shape()) {
    throw ShapeError("adam_step: param/grad/state shapes disagree for " + shape_str(param.shape()));
  }
  AdamResult r{param, state};
  r.state.step = state.step + 1;
  const double t = static_cast<double>(r.state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double m = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    const double v = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    r.state.m[i] = m;
    r.state.v[i] = v;
    r.param[i] = param[i] - cfg.lr * (m / c1) / (std::sqrt(v / c2) + cfg.eps);
  }
  return r;
}

}  // namespace pbgan
