#include "pbgan/accounting.hpp"

#include <stdexcept>
#include <string>

namespace pbgan {

std::vector<ParamRef> trainable_set(RunState& run, int task_index) {
  if (task_index != run.task_count()) {
    throw std::invalid_argument("trainable_set: task " + std::to_string(task_index) + " is not the current task " +
                                std::to_string(run.task_count()));
  }
  TaskRecord& rec = run.task(task_index);
  const std::vector<int> shared_ids = run.spec.shared_layers();
  const std::vector<int> specific_ids = run.spec.task_specific_layers();

  std::vector<ParamRef> refs;
  for (std::size_t s = 0; s < rec.shared.size(); ++s) {
    TaskLayerParams& p = rec.shared[s];
    const int l = shared_ids[s];
    if (p.unconstrained) refs.push_back({ParamRole::unconstrained, l, &p.unconstrained->tensor()});
    if (p.piggyback_weight) refs.push_back({ParamRole::piggyback_weight, l, &*p.piggyback_weight});
    refs.push_back({ParamRole::shared_bias, l, &p.bias});
  }
  for (std::size_t s = 0; s < rec.task_specific.size(); ++s) {
    refs.push_back({ParamRole::task_specific_filters, specific_ids[s], &rec.task_specific[s].filters});
    refs.push_back({ParamRole::task_specific_bias, specific_ids[s], &rec.task_specific[s].bias});
  }
  for (std::size_t d = 0; d < rec.discriminator.size(); ++d) {
    refs.push_back({ParamRole::discriminator_filters, static_cast<int>(d), &rec.discriminator[d].filters});
    refs.push_back({ParamRole::discriminator_bias, static_cast<int>(d), &rec.discriminator[d].bias});
  }
  return refs;
}

namespace {

// Generator parameters learned for task t (t >= 1) under a factorizing mode.
std::size_t factorized_task_params(const ModelSpec& spec, int t, Rational lambda) {
  std::size_t n = 0;
  for (const LayerSpec& l : spec.generator) {
    if (l.task_specific || t == 1) {
      n += l.param_count();
      continue;
    }
    const Partition part = partition_channels(l.c_out, lambda);
    const std::size_t rows = static_cast<std::size_t>(l.kw) * l.kh * l.c_in;
    // Bank width while task t trains: task 1's c_out plus n_u per later task.
    const std::size_t bank = static_cast<std::size_t>(l.c_out) + static_cast<std::size_t>(t - 2) * part.n_u;
    n += rows * part.n_u + bank * part.n_p + static_cast<std::size_t>(l.c_out);
  }
  return n;
}

}  // namespace

ParamCount param_count(const ModelSpec& spec, int task_index, Rational lambda, TrainMode mode) {
  if (task_index < 1) throw std::invalid_argument("param_count: task index must be >= 1");
  ParamCount c;
  switch (mode) {
    case TrainMode::full:
      c.trainable = spec.generator_param_count();
      c.stored_cumulative = c.trainable * static_cast<std::size_t>(task_index);
      return c;
    case TrainMode::piggyback:
    case TrainMode::pure_factorization: {
      const Rational lam = mode == TrainMode::pure_factorization ? Rational{0, 1} : lambda;
      for (int t = 1; t <= task_index; ++t) c.stored_cumulative += factorized_task_params(spec, t, lam);
      c.trainable = factorized_task_params(spec, task_index, lam);
      return c;
    }
    case TrainMode::sequential_finetune: break;
  }
  throw std::invalid_argument("param_count: unsupported mode " + std::string(train_mode_name(mode)));
}

}  // namespace pbgan
