#include "pbgan/trainer.hpp"

#include <chrono>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "pbgan/accounting.hpp"
#include "pbgan/adam.hpp"
#include "pbgan/eval.hpp"
#include "pbgan/gan_models.hpp"
#include "pbgan/rng.hpp"

namespace pbgan {

// ---------------------------------------------------------------------------
// Losses

Var discriminator_loss(Var d_real, Var d_fake) {
  Var real_term = mean(square(add_scalar(d_real, -1.0)));
  Var fake_term = mean(square(d_fake));
  return scale(add(real_term, fake_term), 0.5);
}

Var generator_loss(Var d_fake, Var fake, Var target, double l1_weight) {
  Var adv = scale(mean(square(add_scalar(d_fake, -1.0))), 0.5);
  Var l1 = scale(mean(abs(sub(fake, target))), l1_weight);
  return add(adv, l1);
}

GanLossValues gan_losses(const Tensor& d_real, const Tensor& d_fake, const Tensor& fake, const Tensor& target,
                         double l1_weight) {
  Graph g;
  const Var dr = g.constant(d_real), df = g.constant(d_fake);
  const Var f = g.constant(fake), t = g.constant(target);
  return {generator_loss(df, f, t, l1_weight).value().item(), discriminator_loss(dr, df).value().item()};
}

// ---------------------------------------------------------------------------
// Task lifecycle

namespace {

enum class InitRole : std::uint64_t { filters = 0, piggyback_weight = 1, discriminator = 2 };

Tensor he_normal(const Shape& shape, int fan_in, std::uint64_t seed, int task, int layer, InitRole role) {
  RngStream rng(seed, RngPurpose::init,
                {static_cast<std::uint64_t>(task), static_cast<std::uint64_t>(layer), static_cast<std::uint64_t>(role)});
  const double std = std::sqrt(2.0 / fan_in);
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, std);
  return t;
}

Tensor piggyback_init(int bank_width, int n_p, std::uint64_t seed, int task, int layer) {
  RngStream rng(seed, RngPurpose::init,
                {static_cast<std::uint64_t>(task), static_cast<std::uint64_t>(layer),
                 static_cast<std::uint64_t>(InitRole::piggyback_weight)});
  const double std = 1.0 / std::sqrt(static_cast<double>(bank_width));
  Tensor t({bank_width, n_p});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, std);
  return t;
}

DenseLayer fresh_dense(const LayerSpec& l, std::uint64_t seed, int task, int layer, InitRole role) {
  return {he_normal(l.filter_shape(), l.kw * l.kh * l.c_in, seed, task, layer, role), Tensor({l.c_out})};
}

bool same_tensor_list(const TaskRecord& a, const TaskRecord& b) {
  if (a.shared.size() != b.shared.size() || a.task_specific.size() != b.task_specific.size() ||
      a.discriminator.size() != b.discriminator.size()) {
    return false;
  }
  for (std::size_t s = 0; s < a.shared.size(); ++s) {
    const TaskLayerParams &x = a.shared[s], &y = b.shared[s];
    if (x.unconstrained.has_value() != y.unconstrained.has_value()) return false;
    if (x.unconstrained && !x.unconstrained->bitwise_equal(*y.unconstrained)) return false;
    if (x.piggyback_weight.has_value() != y.piggyback_weight.has_value()) return false;
    if (x.piggyback_weight && !x.piggyback_weight->bitwise_equal(*y.piggyback_weight)) return false;
    if (!x.bias.bitwise_equal(y.bias) || x.trained_bank_width != y.trained_bank_width) return false;
  }
  auto same_dense = [](const std::vector<DenseLayer>& p, const std::vector<DenseLayer>& q) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!p[i].filters.bitwise_equal(q[i].filters) || !p[i].bias.bitwise_equal(q[i].bias)) return false;
    }
    return true;
  };
  return same_dense(a.task_specific, b.task_specific) && same_dense(a.discriminator, b.discriminator);
}

bool same_bank(const FilterBank& a, const FilterBank& b) {
  if (a.width() != b.width() || a.blocks().size() != b.blocks().size() || a.block_tasks() != b.block_tasks()) {
    return false;
  }
  for (std::size_t i = 0; i < a.blocks().size(); ++i) {
    if (!a.blocks()[i].bitwise_equal(b.blocks()[i])) return false;
  }
  return true;
}

}  // namespace

void check_mode_compatible(const RunState& run, TrainMode mode) {
  for (const TaskRecord& t : run.tasks) {
    const bool t_sft = t.mode == TrainMode::sequential_finetune;
    const bool new_sft = mode == TrainMode::sequential_finetune;
    if (t_sft != new_sft) {
      throw std::invalid_argument("mode " + std::string(train_mode_name(mode)) + " cannot follow task " +
                                  std::to_string(t.index) + " trained in mode " +
                                  std::string(train_mode_name(t.mode)));
    }
    if (t.index >= 2 && t.mode != mode) {
      throw std::invalid_argument("mode " + std::string(train_mode_name(mode)) + " cannot follow task " +
                                  std::to_string(t.index) + " trained in mode " +
                                  std::string(train_mode_name(t.mode)));
    }
  }
}

TaskRecord& begin_task(RunState& run, const DataRecipe& recipe, const TrainConfig& cfg) {
  cfg.validate();
  check_mode_compatible(run, cfg.mode);
  const int n = run.task_count() + 1;
  const std::vector<int> shared_ids = run.spec.shared_layers();
  const std::vector<int> specific_ids = run.spec.task_specific_layers();

  TaskRecord rec;
  rec.index = n;
  rec.mode = cfg.mode;
  rec.data = recipe;
  rec.config = cfg;
  rec.log.seed = cfg.seed;
  TaskRecord* prev = n > 1 ? &run.tasks.back() : nullptr;
  const bool carry = cfg.mode == TrainMode::sequential_finetune && prev != nullptr;

  if (carry) {
    rec.shared = std::move(prev->shared);
    prev->shared.clear();
    rec.task_specific = std::move(prev->task_specific);
    prev->task_specific.clear();
  } else {
    for (std::size_t s = 0; s < shared_ids.size(); ++s) {
      const int l = shared_ids[s];
      const LayerSpec& ls = run.spec.generator[static_cast<std::size_t>(l)];
      const int fan_in = ls.kw * ls.kh * ls.c_in;
      TaskLayerParams p;
      p.task_index = n;
      p.bias = Tensor({ls.c_out});
      Partition part{run.lambda, ls.c_out, 0};
      if (n > 1 && cfg.mode == TrainMode::piggyback) part = partition_channels(ls.c_out, run.lambda);
      if (n > 1 && cfg.mode == TrainMode::pure_factorization) part = partition_channels(ls.c_out, Rational{0, 1});
      if (part.n_u > 0) {
        p.unconstrained = FilterTensor(he_normal({ls.kw, ls.kh, ls.c_in, part.n_u}, fan_in, run.seed, n, l,
                                                 InitRole::filters));
      }
      if (n > 1 && cfg.mode != TrainMode::full) {
        p.trained_bank_width = run.banks[s].width();
        if (part.n_p > 0) p.piggyback_weight = piggyback_init(p.trained_bank_width, part.n_p, run.seed, n, l);
      }
      rec.shared.push_back(std::move(p));
    }
    for (int l : specific_ids) {
      rec.task_specific.push_back(
          fresh_dense(run.spec.generator[static_cast<std::size_t>(l)], run.seed, n, l, InitRole::filters));
    }
  }
  for (std::size_t d = 0; d < run.spec.discriminator.size(); ++d) {
    rec.discriminator.push_back(
        fresh_dense(run.spec.discriminator[d], run.seed, n, static_cast<int>(d), InitRole::discriminator));
  }
  run.tasks.push_back(std::move(rec));
  return run.tasks.back();
}

void finish_task(RunState& run) {
  if (run.tasks.empty()) throw std::logic_error("finish_task: no task in progress");
  const TaskRecord& rec = run.tasks.back();
  const bool grows = rec.mode == TrainMode::piggyback || (rec.index == 1 && rec.mode != TrainMode::sequential_finetune);
  if (!grows) return;
  for (std::size_t s = 0; s < rec.shared.size(); ++s) {
    if (rec.shared[s].unconstrained) run.banks[s] = expand_bank(run.banks[s], *rec.shared[s].unconstrained, rec.index);
  }
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

// Graph leaves for the current task's generator. Any tensor outside the
// trainable set enters the graph as a constant.
struct GeneratorGraph {
  std::unique_ptr<Graph> graph = std::make_unique<Graph>();
  std::unordered_map<const Tensor*, Var> leaves;
  Var condition;
  Var target;
  Var fake;
};

class Trainer {
 public:
  Trainer(RunState& run, const PairedDataset& data, const TrainConfig& cfg)
      : run_(run), data_(data), cfg_(cfg), n_(run.task_count()) {
    for (const ParamRef& r : trainable_set(run_, n_)) {
      (r.in_generator() ? gen_params_ : disc_params_).push_back(r);
    }
    for (const ParamRef& r : gen_params_) gen_state_.push_back(AdamState::zeros_like(*r.tensor));
    for (const ParamRef& r : disc_params_) disc_state_.push_back(AdamState::zeros_like(*r.tensor));
    adam_ = AdamConfig{cfg.lr, cfg.beta1, cfg.beta2, 1e-8};

    const TaskRecord& rec = run_.task(n_);
    for (std::size_t s = 0; s < rec.shared.size(); ++s) {
      bank_matrices_.push_back(rec.shared[s].piggyback_weight
                                   ? run_.banks[s].prefix_matrix(rec.shared[s].trained_bank_width)
                                   : Tensor{});
    }
  }

  TrainLog run() {
    const auto t0 = std::chrono::steady_clock::now();
    TrainLog log;
    log.seed = cfg_.seed;
    const std::vector<std::size_t> train_idx = data_.indices(Split::train);
    if (train_idx.empty()) throw std::invalid_argument("train_task: training split is empty");
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
      std::vector<std::size_t> order = train_idx;
      RngStream rng(cfg_.seed, RngPurpose::shuffle, {static_cast<std::uint64_t>(n_), static_cast<std::uint64_t>(epoch)});
      rng.shuffle(order.begin(), order.end());

      double g_sum = 0.0, d_sum = 0.0;
      for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg_.batch_size)) {
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg_.batch_size));
        const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                             order.begin() + static_cast<std::ptrdiff_t>(end));
        step(batch, epoch, g_sum, d_sum);
      }
      EpochLog e;
      e.g_loss = g_sum / static_cast<double>(order.size());
      e.d_loss = d_sum / static_cast<double>(order.size());
      e.val_l1 = mean_l1(build_generator(run_, n_), data_, Split::val);
      log.epochs.push_back(e);
    }
    log.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return log;
  }

 private:
  Var param_var(Graph& g, std::unordered_map<const Tensor*, Var>& leaves, const Tensor& t) {
    auto it = leaves.find(&t);
    if (it != leaves.end()) return it->second;
    const bool trainable = std::any_of(gen_params_.begin(), gen_params_.end(),
                                       [&](const ParamRef& r) { return r.tensor == &t; });
    Var v = trainable ? g.leaf(t) : g.constant(t);
    leaves.emplace(&t, v);
    return v;
  }

  GeneratorGraph forward_generator(std::size_t sample) {
    GeneratorGraph gg;
    Graph& g = *gg.graph;
    const TaskRecord& rec = run_.task(n_);
    const std::vector<TaskLayerParams>& shared = run_.shared_params_for(n_);
    const std::vector<int> shared_ids = run_.spec.shared_layers();
    const std::vector<int> specific_ids = run_.spec.task_specific_layers();
    std::vector<LayerVars> layers(run_.spec.generator.size(), LayerVars{});
    for (std::size_t s = 0; s < shared_ids.size(); ++s) {
      const TaskLayerParams& p = shared[s];
      std::optional<Var> u, bank, w;
      if (p.unconstrained) u = param_var(g, gg.leaves, p.unconstrained->tensor());
      if (p.piggyback_weight) {
        bank = g.constant(bank_matrices_[s]);
        w = param_var(g, gg.leaves, *p.piggyback_weight);
      }
      const std::size_t l = static_cast<std::size_t>(shared_ids[s]);
      layers[l] = {compose_filters(run_.spec.generator[l].geometry(), u, bank, w), param_var(g, gg.leaves, p.bias)};
    }
    for (std::size_t s = 0; s < specific_ids.size(); ++s) {
      layers[static_cast<std::size_t>(specific_ids[s])] = {param_var(g, gg.leaves, rec.task_specific[s].filters),
                                                           param_var(g, gg.leaves, rec.task_specific[s].bias)};
    }
    gg.condition = g.constant(data_.pairs[sample].condition);
    gg.target = g.constant(data_.pairs[sample].target);
    gg.fake = generator_forward(run_.spec, layers, gg.condition);
    return gg;
  }

  std::vector<LayerVars> discriminator_vars(Graph& g, bool trainable) {
    std::vector<LayerVars> v;
    for (const DenseLayer& d : run_.task(n_).discriminator) {
      v.push_back(trainable ? LayerVars{g.leaf(d.filters), g.leaf(d.bias)}
                            : LayerVars{g.constant(d.filters), g.constant(d.bias)});
    }
    return v;
  }

  void apply_adam(std::vector<ParamRef>& params, std::vector<AdamState>& states, const std::vector<Tensor>& grads) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      AdamResult r = adam_step(*params[i].tensor, grads[i], states[i], adam_);
      *params[i].tensor = std::move(r.param);
      states[i] = std::move(r.state);
    }
  }

  static void add_into(Tensor& acc, const Tensor& g) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
  }

  void require_finite(double loss, const char* which, int epoch) const {
    if (!std::isfinite(loss)) {
      throw NumericError(std::string(which) + " loss became non-finite in task " + std::to_string(n_) + ", epoch " +
                         std::to_string(epoch));
    }
  }

  void step(const std::vector<std::size_t>& batch, int epoch, double& g_sum, double& d_sum) {
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    std::vector<GeneratorGraph> fakes;
    fakes.reserve(batch.size());
    for (std::size_t i : batch) fakes.push_back(forward_generator(i));

    // Discriminator update on real pairs and detached fakes.
    std::vector<Tensor> d_grads;
    for (const ParamRef& r : disc_params_) d_grads.push_back(Tensor::zeros(r.tensor->shape()));
    for (std::size_t b = 0; b < batch.size(); ++b) {
      Graph g;
      const std::vector<LayerVars> dv = discriminator_vars(g, true);
      const Var cond = g.constant(data_.pairs[batch[b]].condition);
      const Var real = g.constant(data_.pairs[batch[b]].target);
      const Var fake = g.constant(fakes[b].fake.value());
      const Var loss = discriminator_loss(discriminator_forward(run_.spec, dv, cond, real),
                                          discriminator_forward(run_.spec, dv, cond, fake));
      require_finite(loss.value().item(), "discriminator", epoch);
      d_sum += loss.value().item();
      g.backward(scale(loss, inv_b));
      for (std::size_t k = 0; k < dv.size(); ++k) {
        add_into(d_grads[2 * k], g.grad(dv[k].filters));
        add_into(d_grads[2 * k + 1], g.grad(dv[k].bias));
      }
    }
    apply_adam(disc_params_, disc_state_, d_grads);

    // Generator update against the refreshed discriminator.
    std::vector<Tensor> g_grads;
    for (const ParamRef& r : gen_params_) g_grads.push_back(Tensor::zeros(r.tensor->shape()));
    for (GeneratorGraph& gg : fakes) {
      Graph& g = *gg.graph;
      const std::vector<LayerVars> dv = discriminator_vars(g, false);
      const Var loss = generator_loss(discriminator_forward(run_.spec, dv, gg.condition, gg.fake), gg.fake, gg.target,
                                      cfg_.l1_weight);
      require_finite(loss.value().item(), "generator", epoch);
      g_sum += loss.value().item();
      g.backward(scale(loss, inv_b));
      for (std::size_t k = 0; k < gen_params_.size(); ++k) {
        add_into(g_grads[k], g.grad(gg.leaves.at(gen_params_[k].tensor)));
      }
    }
    apply_adam(gen_params_, gen_state_, g_grads);
  }

  RunState& run_;
  const PairedDataset& data_;
  TrainConfig cfg_;
  int n_;
  AdamConfig adam_;
  std::vector<ParamRef> gen_params_, disc_params_;
  std::vector<AdamState> gen_state_, disc_state_;
  std::vector<Tensor> bank_matrices_;
};

}  // namespace

std::pair<RunState, TrainLog> train_task(RunState run, const PairedDataset& task, const TrainConfig& cfg) {
  if (task.pairs.empty()) throw std::invalid_argument("train_task: dataset is empty");
  const Shape expected{run.spec.height, run.spec.width, run.spec.channels};
  for (const ImagePair& p : task.pairs) {
    if (p.condition.shape() != expected || p.target.shape() != expected) {
      throw ShapeError("train_task: dataset images " + shape_str(p.condition.shape()) + " do not match model input " +
                       shape_str(expected));
    }
  }

  const DataRecipe recipe{task.kind, task.seed, static_cast<int>(task.pairs.size()), task.size};
  begin_task(run, recipe, cfg);
  const int n = run.task_count();

  // Everything outside the current task is frozen; keep a copy to prove it.
  const std::vector<FilterBank> banks_before = run.banks;
  const std::vector<TaskRecord> earlier(run.tasks.begin(), run.tasks.end() - 1);

  TrainLog log = Trainer(run, task, cfg).run();

  for (std::size_t s = 0; s < banks_before.size(); ++s) {
    if (!same_bank(banks_before[s], run.banks[s])) throw std::logic_error("freeze violated: filter bank changed");
  }
  for (std::size_t t = 0; t < earlier.size(); ++t) {
    if (!same_tensor_list(earlier[t], run.tasks[t])) {
      throw std::logic_error("freeze violated: parameters of task " + std::to_string(t + 1) + " changed");
    }
  }

  finish_task(run);
  run.task(n).log = log;
  return {std::move(run), std::move(log)};
}

}  // namespace pbgan
