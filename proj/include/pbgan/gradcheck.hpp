#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pbgan/autodiff.hpp"

namespace pbgan {

inline constexpr double kGradStep = 1e-5;
inline constexpr double kGradRelTol = 1e-6;
// Below this norm both gradients count as zero and the absolute gap is used.
inline constexpr double kGradZeroNorm = 1e-8;

/// Builds a scalar loss from leaves created for each input tensor.
using LossBuilder = std::function<Var(Graph&, std::span<const Var>)>;

struct GradCheck {
  double worst_error = 0.0;  // max over inputs of the norm-wise relative error
  bool pass = true;
};

/// Compares reverse-mode gradients with central differences for every input:
///   err = |analytic - numeric| / max(|analytic|, |numeric|)
/// using the absolute gap instead when both norms are below kGradZeroNorm.
GradCheck check_gradients(const LossBuilder& loss, std::vector<Tensor> inputs, double step = kGradStep,
                          double tol = kGradRelTol);

struct OpGradReport {
  std::string op;
  int instances = 0;
  double worst_error = 0.0;
  bool pass = true;
};

/// Random-instance finite-difference checks for every differentiable op,
/// compose_filters, the GAN losses and a small generator/discriminator stack.
std::vector<OpGradReport> run_gradient_suite(std::uint64_t seed, int instances = 20);

}  // namespace pbgan
