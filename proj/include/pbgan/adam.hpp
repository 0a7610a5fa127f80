#pragma once

#include <cstdint>

#include "pbgan/tensor.hpp"

namespace pbgan {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates for one parameter tensor.
struct AdamState {
  Tensor m;
  Tensor v;
  std::uint64_t step = 0;

  static AdamState zeros_like(const Tensor& param) { return {Tensor::zeros(param.shape()), Tensor::zeros(param.shape()), 0}; }
};

struct AdamResult {
  Tensor param;
  AdamState state;
};

/// Bias-corrected Adam update: eps is added to sqrt(v_hat).
AdamResult adam_step(const Tensor& param, const Tensor& grad, const AdamState& state, const AdamConfig& cfg);

}  // namespace pbgan
