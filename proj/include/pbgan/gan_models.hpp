#pragma once

#include <span>
#include <vector>

#include "pbgan/autodiff.hpp"
#include "pbgan/model_spec.hpp"
#include "pbgan/run_state.hpp"

namespace pbgan {

/// Graph handles for one layer's resolved filters and bias.
struct LayerVars {
  Var filters;
  Var bias;
};

/// Runs the generator stack on a graph. `layers` holds one entry per
/// generator layer, already resolved (composed or task-specific).
Var generator_forward(const ModelSpec& spec, std::span<const LayerVars> layers, Var image);

/// Scores a (condition, image) pair; returns the [8, 8, 1] patch grid for the
/// reference spec.
Var discriminator_forward(const ModelSpec& spec, std::span<const LayerVars> layers, Var condition, Var image);

/// A task's generator with every filter resolved. Immutable once built.
struct GeneratorInstance {
  ModelSpec spec;
  int task_index = 0;
  std::vector<DenseLayer> layers;
};

struct DiscriminatorInstance {
  ModelSpec spec;
  std::vector<DenseLayer> layers;
};

/// Resolves shared layers through compose_filters against the bank prefix
/// each task trained on, and loads task-specific layers directly.
GeneratorInstance build_generator(const RunState& run, int task_index);
DiscriminatorInstance build_discriminator(const RunState& run, int task_index);

/// Deterministic inference; output lies in [-1, 1] for a tanh head.
Tensor generate(const GeneratorInstance& g, const Tensor& image);
Tensor discriminate(const DiscriminatorInstance& d, const Tensor& condition, const Tensor& image);

}  // namespace pbgan
