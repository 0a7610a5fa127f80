#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pbgan/run_state.hpp"

namespace pbgan {

enum class ParamRole : std::uint8_t {
  unconstrained = 0,  // also the full filters of task 1, full-mode and fine-tune layers
  piggyback_weight = 1,
  shared_bias = 2,
  task_specific_filters = 3,
  task_specific_bias = 4,
  discriminator_filters = 5,
  discriminator_bias = 6,
};

struct ParamRef {
  ParamRole role;
  int layer;  // generator or discriminator layer index
  Tensor* tensor;

  bool in_generator() const { return role < ParamRole::discriminator_filters; }
};

/// Exactly the tensors the optimizer may touch while task `task_index` trains:
/// the task's own shared-layer parameters, its task-specific layers and its
/// discriminator. Bank blocks and earlier tasks never appear.
/// Throws std::invalid_argument unless `task_index` is the latest task.
std::vector<ParamRef> trainable_set(RunState& run, int task_index);

struct ParamCount {
  std::size_t trainable = 0;          // generator parameters learned for this task
  std::size_t stored_cumulative = 0;  // generator parameters stored after tasks 1..n
};

/// Closed-form generator parameter counts. `full` counts n independent
/// models; `pure_factorization` composes every filter from the task-1 bank.
/// Throws std::invalid_argument for sequential_finetune or task_index < 1.
ParamCount param_count(const ModelSpec& spec, int task_index, Rational lambda, TrainMode mode);

}  // namespace pbgan
