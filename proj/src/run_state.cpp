#include "pbgan/run_state.hpp"

#include <stdexcept>
#include <string>

namespace pbgan {

std::string_view train_mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::piggyback: return "piggyback";
    case TrainMode::full: return "full";
    case TrainMode::pure_factorization: return "pure_factorization";
    case TrainMode::sequential_finetune: return "sequential_finetune";
  }
  throw std::invalid_argument("unknown train mode");
}

TrainMode parse_train_mode(std::string_view name) {
  if (name == "piggyback") return TrainMode::piggyback;
  if (name == "full") return TrainMode::full;
  if (name == "pure_factorization" || name == "pf") return TrainMode::pure_factorization;
  if (name == "sequential_finetune" || name == "sft") return TrainMode::sequential_finetune;
  throw std::invalid_argument("unknown mode '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (epochs <= 0) throw std::invalid_argument("epochs must be positive");
  if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(l1_weight >= 0.0)) throw std::invalid_argument("l1_weight must be non-negative");
}

RunState RunState::create(ModelSpec spec, Rational lambda, std::uint64_t seed) {
  if (lambda.den == 0 || lambda.num > lambda.den) throw std::invalid_argument("lambda outside [0, 1]");
  spec.validate();
  RunState run;
  run.lambda = lambda;
  run.seed = seed;
  for (int l : spec.shared_layers()) {
    run.banks.emplace_back(l, spec.generator[static_cast<std::size_t>(l)].geometry());
  }
  run.spec = std::move(spec);
  return run;
}

const TaskRecord& RunState::task(int index) const {
  if (index < 1 || index > task_count()) {
    throw std::out_of_range("task " + std::to_string(index) + " does not exist (run has " +
                            std::to_string(task_count()) + ")");
  }
  return tasks[static_cast<std::size_t>(index - 1)];
}

TaskRecord& RunState::task(int index) {
  return const_cast<TaskRecord&>(static_cast<const RunState&>(*this).task(index));
}

const std::vector<TaskLayerParams>& RunState::shared_params_for(int index) const {
  const TaskRecord& rec = task(index);
  if (rec.mode == TrainMode::sequential_finetune) {
    const TaskRecord& latest = tasks.back();
    if (latest.shared.empty()) throw std::logic_error("sequential fine-tune run has no current shared weights");
    return latest.shared;
  }
  if (rec.shared.empty()) throw std::logic_error("task " + std::to_string(index) + " has no shared-layer parameters");
  return rec.shared;
}

const std::vector<DenseLayer>& RunState::task_specific_for(int index) const {
  const TaskRecord& rec = task(index);
  return rec.mode == TrainMode::sequential_finetune ? tasks.back().task_specific : rec.task_specific;
}

}  // namespace pbgan
