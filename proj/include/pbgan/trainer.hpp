#pragma once

#include <utility>

#include "pbgan/autodiff.hpp"
#include "pbgan/data_tasks.hpp"
#include "pbgan/run_state.hpp"

namespace pbgan {

struct GanLossValues {
  double g_loss = 0.0;
  double d_loss = 0.0;
};

/// Least-squares adversarial losses:
///   d_loss = 1/2 mean((d_real - 1)^2) + 1/2 mean(d_fake^2)
///   g_loss = 1/2 mean((d_fake - 1)^2) + l1_weight * mean|fake - target|
GanLossValues gan_losses(const Tensor& d_real, const Tensor& d_fake, const Tensor& fake, const Tensor& target,
                         double l1_weight);
Var discriminator_loss(Var d_real, Var d_fake);
Var generator_loss(Var d_fake, Var fake, Var target, double l1_weight);

/// Throws std::invalid_argument if a task in `mode` cannot follow the run's
/// history. Task 1 is a plain full model in every mode, so piggyback,
/// pure_factorization and full runs may share it; later tasks must all use
/// one mode, and fine-tuning never mixes with the others.
void check_mode_compatible(const RunState& run, TrainMode mode);

/// Appends task n = task_count() + 1 with freshly initialized parameters.
/// Initial values depend only on (run seed, task, layer, role), never on the
/// mode, so lambda = 1 and full runs start from identical weights.
TaskRecord& begin_task(RunState& run, const DataRecipe& recipe, const TrainConfig& cfg);

/// Appends the latest task's unconstrained blocks to the banks where the mode
/// calls for it.
void finish_task(RunState& run);

/// Trains one task end to end: begin_task, adversarial optimization of
/// exactly trainable_set(run, n), finish_task and a sweep asserting every
/// frozen tensor is bitwise unchanged.
std::pair<RunState, TrainLog> train_task(RunState run, const PairedDataset& task, const TrainConfig& cfg);

}  // namespace pbgan
