#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "pbgan/data_tasks.hpp"
#include "pbgan/model_spec.hpp"
#include "pbgan/piggyback.hpp"

namespace pbgan {

enum class TrainMode : std::uint8_t {
  piggyback = 0,
  full = 1,
  pure_factorization = 2,
  sequential_finetune = 3,
};

std::string_view train_mode_name(TrainMode mode);
/// Accepts the long names and the short forms "pf" and "sft".
TrainMode parse_train_mode(std::string_view name);

struct TrainConfig {
  TrainMode mode = TrainMode::piggyback;
  int epochs = 5;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double l1_weight = 100.0;
  int batch_size = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochLog {
  double g_loss = 0.0;
  double d_loss = 0.0;
  double val_l1 = 0.0;

  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  /// Measured in memory only; never persisted so checkpoints stay reproducible.
  double wall_clock_seconds = 0.0;
  std::uint64_t seed = 0;

  double final_val_l1() const { return epochs.empty() ? 0.0 : epochs.back().val_l1; }
  /// Equality of everything except wall-clock time.
  bool same_trajectory(const TrainLog& other) const { return epochs == other.epochs && seed == other.seed; }
};

/// Where a task's data came from, so it can be regenerated exactly.
struct DataRecipe {
  TaskKind kind = TaskKind::invert;
  std::uint64_t seed = 0;
  int count = 0;
  int size = 32;
};

struct TaskRecord {
  int index = 0;  // 1-based
  TrainMode mode = TrainMode::piggyback;
  DataRecipe data;
  TrainConfig config;
  /// One entry per shared generator layer. Empty for a sequential fine-tune
  /// task whose weights have since been carried forward, as is task_specific.
  std::vector<TaskLayerParams> shared;
  std::vector<DenseLayer> task_specific;
  std::vector<DenseLayer> discriminator;
  TrainLog log;
};

struct RunState {
  Rational lambda{1, 4};
  std::uint64_t seed = 0;
  ModelSpec spec;
  /// One bank per shared generator layer, in shared_layers() order.
  std::vector<FilterBank> banks;
  std::vector<TaskRecord> tasks;

  static RunState create(ModelSpec spec, Rational lambda, std::uint64_t seed);

  int task_count() const { return static_cast<int>(tasks.size()); }
  /// Throws std::out_of_range when task `index` (1-based) does not exist.
  const TaskRecord& task(int index) const;
  TaskRecord& task(int index);

  /// Shared-layer parameters that resolve task `index`'s generator. For a
  /// sequential fine-tune run these are the evolving model's current weights.
  const std::vector<TaskLayerParams>& shared_params_for(int index) const;
  /// Same for the task-specific generator layers.
  const std::vector<DenseLayer>& task_specific_for(int index) const;
};

}  // namespace pbgan
