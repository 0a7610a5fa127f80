// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails. Progress goes to stderr; the lines are
// also written to acceptance_report.txt in the working directory.

#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pbgan/accounting.hpp"
#include "pbgan/checkpoint.hpp"
#include "pbgan/cli.hpp"
#include "pbgan/eval.hpp"
#include "pbgan/gradcheck.hpp"
#include "pbgan/rng.hpp"
#include "pbgan/trainer.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

extern char** environ;

namespace pbgan::acceptance {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

void note(const std::string& msg) { std::cerr << "[acceptance] " << msg << std::endl; }

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

constexpr int kEpochs = 5;
constexpr int kCount = 320;

TrainConfig config(TrainMode mode, std::uint64_t seed, int epochs = kEpochs) {
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.epochs = epochs;
  cfg.seed = seed;
  return cfg;
}

PairedDataset val_only(const PairedDataset& d) {
  PairedDataset v = d;
  v.pairs.clear();
  for (std::size_t i : d.indices(Split::val)) v.pairs.push_back(d.pairs[i]);
  v.splits.assign(v.pairs.size(), Split::val);
  return v;
}

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const std::vector<OpGradReport> reports = run_gradient_suite(1234, 20);
  const double elapsed = seconds_since(t0);
  double worst = 0.0;
  bool pass = true;
  std::string failed;
  for (const OpGradReport& r : reports) {
    worst = std::max(worst, r.worst_error);
    if (!r.pass || r.instances < 20) {
      pass = false;
      failed += " " + r.op;
    }
  }
  return {pass && elapsed < 60.0, std::to_string(reports.size()) + " ops x 20 instances, worst rel error " +
                                      fmt("%.2e", worst) + " (tol 1e-06), " + fmt("%.1f", elapsed) + " s" +
                                      (failed.empty() ? "" : ", failing:" + failed)};
}

// ---------------------------------------------------------------------------

Outcome zero_forgetting() {
  const auto t0 = Clock::now();
  const std::uint64_t seed = 1;
  const TaskKind kinds[3] = {TaskKind::invert, TaskKind::blur_sharpen, TaskKind::edge_fill};
  std::vector<PairedDataset> data;
  for (int t = 0; t < 3; ++t) data.push_back(synth_task(kinds[t], static_cast<std::uint64_t>(t + 1), kCount));

  std::vector<RunState> pig, sft;
  RunState p = RunState::create(reference_spec(32), {1, 4}, seed);
  RunState s = p;
  for (int t = 0; t < 3; ++t) {
    note("zero-forgetting: piggyback task " + std::to_string(t + 1));
    p = train_task(std::move(p), data[static_cast<std::size_t>(t)], config(TrainMode::piggyback, seed)).first;
    pig.push_back(p);
    note("zero-forgetting: fine-tune task " + std::to_string(t + 1));
    s = train_task(std::move(s), data[static_cast<std::size_t>(t)], config(TrainMode::sequential_finetune, seed)).first;
    sft.push_back(s);
  }

  const double pig_d1 = verify_forgetting(pig[0], pig[2], val_only(data[0]), 1).entries[0].max_abs_diff;
  const double pig_d2 = verify_forgetting(pig[1], pig[2], val_only(data[1]), 2).entries[0].max_abs_diff;
  const double sft_d1 = verify_forgetting(sft[0], sft[2], val_only(data[0]), 1).entries[0].max_abs_diff;
  const double sft_d2 = verify_forgetting(sft[1], sft[2], val_only(data[1]), 2).entries[0].max_abs_diff;
  const double l1_before = sft[0].task(1).log.final_val_l1();
  const double l1_after = mean_l1(build_generator(sft[2], 1), data[0], Split::val);
  const double ratio = l1_after / l1_before;
  const double elapsed = seconds_since(t0);

  const bool pass = pig_d1 == 0.0 && pig_d2 == 0.0 && sft_d1 > 0.0 && ratio >= 2.0 && elapsed < 30 * 60;
  return {pass, "piggyback max abs diff task1 " + fmt("%.3g", pig_d1) + ", task2 " + fmt("%.3g", pig_d2) +
                    "; fine-tune diff task1 " + fmt("%.3g", sft_d1) + ", task2 " + fmt("%.3g", sft_d2) +
                    "; fine-tune task-1 val L1 " + fmt("%.4f", l1_before) + " -> " + fmt("%.4f", l1_after) + " (" +
                    fmt("%.2f", ratio) + "x, need >= 2x); " + fmt("%.0f", elapsed) + " s"};
}

// ---------------------------------------------------------------------------

const Rational kLambdas[] = {{0, 1}, {1, 8}, {1, 4}, {1, 2}, {1, 1}};

Outcome shape_closure() {
  const ModelSpec spec = reference_spec(32);
  std::size_t checks = 0;
  for (Rational lam : kLambdas) {
    RunState run = RunState::create(spec, lam, 7);
    std::vector<int> prev(run.banks.size(), 0);
    for (int n = 1; n <= 5; ++n) {
      begin_task(run, DataRecipe{}, config(TrainMode::piggyback, 7));
      finish_task(run);
      const std::vector<int> shared = spec.shared_layers();
      for (std::size_t s = 0; s < shared.size(); ++s) {
        const LayerSpec& l = spec.generator[static_cast<std::size_t>(shared[s])];
        const FilterTensor f = compose_filters(run.banks[s], run.task(n).shared[s]);
        if (f.tensor().shape() != l.filter_shape()) {
          return {false, "layer " + std::to_string(shared[s]) + " task " + std::to_string(n) + " lambda " +
                             lam.str() + ": composed extents differ"};
        }
        const int expected = n == 1 ? l.c_out : prev[s] + partition_channels(l.c_out, lam).n_u;
        if (run.banks[s].width() != expected) {
          return {false, "layer " + std::to_string(shared[s]) + " task " + std::to_string(n) + " lambda " +
                             lam.str() + ": bank width " + std::to_string(run.banks[s].width()) + " expected " +
                             std::to_string(expected)};
        }
        prev[s] = expected;
        checks += 2;
      }
    }
  }
  return {true, std::to_string(checks) + " extent and bank-width checks over n=1..5, 5 lambdas"};
}

// ---------------------------------------------------------------------------

Outcome parameter_accounting() {
  std::size_t configs = 0;
  for (const ModelSpec& spec : {testing::single_layer_spec(), reference_spec(32)}) {
    for (Rational lam : kLambdas) {
      for (TrainMode mode : {TrainMode::piggyback, TrainMode::pure_factorization, TrainMode::full}) {
        for (int n = 1; n <= 5; ++n) {
          RunState run = testing::grow_run(spec, lam, mode, n);
          const ParamCount c = param_count(spec, n, lam, mode);
          if (c.trainable != testing::enumerate_trainable(run) || c.stored_cumulative != testing::enumerate_stored(run)) {
            return {false, "mismatch at lambda " + lam.str() + ", mode " + std::string(train_mode_name(mode)) +
                               ", n " + std::to_string(n)};
          }
          ++configs;
        }
      }
    }
  }
  RunState small = testing::grow_run(testing::single_layer_spec(), {1, 4}, TrainMode::piggyback, 2);
  const std::size_t small_t2 = testing::enumerate_trainable_layer(small, 0);
  const std::size_t small_full = testing::single_layer_spec().generator[0].param_count();

  const ModelSpec ref = reference_spec(32);
  RunState run = testing::grow_run(ref, {1, 4}, TrainMode::piggyback, 2);
  bool closed_form = true;
  for (int l : ref.shared_layers()) {
    const LayerSpec& ls = ref.generator[static_cast<std::size_t>(l)];
    const Partition p = partition_channels(ls.c_out, {1, 4});
    const std::size_t expect = static_cast<std::size_t>(p.n_u) * ls.kw * ls.kh * ls.c_in +
                               static_cast<std::size_t>(ls.c_out) * p.n_p + ls.c_out;
    closed_form = closed_form && testing::enumerate_trainable_layer(run, l) == expect;
  }
  const bool pass = small_t2 == 128 && small_full == 296 && closed_form;
  return {pass, std::to_string(configs) + " configurations match enumeration; (3,3,4,8) layer task-2 trainables " +
                    std::to_string(small_t2) + " vs " + std::to_string(small_full) +
                    " full; reference shared layers match closed form: " + (closed_form ? "yes" : "no")};
}

// ---------------------------------------------------------------------------

Outcome lambda_one_degeneracy() {
  const std::uint64_t seed = 5;
  const PairedDataset t1 = synth_task(TaskKind::invert, 11, 60);
  const PairedDataset t2 = synth_task(TaskKind::checker_colorize, 12, 60);
  RunState pig = RunState::create(reference_spec(32), {1, 1}, seed);
  RunState full = RunState::create(reference_spec(32), {1, 1}, seed);
  bool logs = true, params = true;
  for (const PairedDataset* d : {&t1, &t2}) {
    auto a = train_task(std::move(pig), *d, config(TrainMode::piggyback, seed, 2));
    auto b = train_task(std::move(full), *d, config(TrainMode::full, seed, 2));
    pig = std::move(a.first);
    full = std::move(b.first);
    logs = logs && a.second.same_trajectory(b.second);
  }
  std::size_t tensors = 0;
  for (int t = 1; t <= 2; ++t) {
    const GeneratorInstance ga = build_generator(pig, t), gb = build_generator(full, t);
    for (std::size_t l = 0; l < ga.layers.size(); ++l) {
      params = params && ga.layers[l].filters.bitwise_equal(gb.layers[l].filters) &&
               ga.layers[l].bias.bitwise_equal(gb.layers[l].bias);
      tensors += 2;
    }
    const DiscriminatorInstance da = build_discriminator(pig, t), db = build_discriminator(full, t);
    for (std::size_t l = 0; l < da.layers.size(); ++l) {
      params = params && da.layers[l].filters.bitwise_equal(db.layers[l].filters) &&
               da.layers[l].bias.bitwise_equal(db.layers[l].bias);
      tensors += 2;
    }
  }
  return {logs && params, "2 tasks x 2 epochs: train logs identical " + std::string(logs ? "yes" : "no") + ", " +
                              std::to_string(tensors) + " resolved parameter tensors bitwise equal " +
                              (params ? "yes" : "no")};
}

// ---------------------------------------------------------------------------

struct SeedResult {
  double l1[5] = {};  // full, piggyback 1/4, pure factorization, piggyback 0, piggyback 1
  double rp[5] = {};
};

struct BaselineRuns {
  std::vector<SeedResult> seeds;
  double seconds = 0.0;
};

enum Variant { kFull = 0, kPiggy = 1, kPf = 2, kLam0 = 3, kLam1 = 4 };

const BaselineRuns& baseline_runs() {
  static const BaselineRuns runs = [] {
    BaselineRuns r;
    const auto t0 = Clock::now();
    for (std::uint64_t seed : {1, 2, 3}) {
      const PairedDataset t1 = synth_task(TaskKind::invert, seed, kCount);
      const PairedDataset t2 = synth_task(TaskKind::blur_sharpen, seed + 100, kCount);
      note("baselines: seed " + std::to_string(seed) + " task 1");
      const RunState base =
          train_task(RunState::create(reference_spec(32), {1, 4}, seed), t1, config(TrainMode::piggyback, seed)).first;
      SeedResult s;
      const std::pair<Variant, TrainMode> variants[] = {{kFull, TrainMode::full},
                                                        {kPiggy, TrainMode::piggyback},
                                                        {kPf, TrainMode::pure_factorization},
                                                        {kLam0, TrainMode::piggyback},
                                                        {kLam1, TrainMode::piggyback}};
      for (const auto& [v, mode] : variants) {
        RunState run = base;
        if (v == kLam0) run.lambda = {0, 1};
        if (v == kLam1) run.lambda = {1, 1};
        note("baselines: seed " + std::to_string(seed) + " task 2 variant " + std::to_string(v));
        run = train_task(std::move(run), t2, config(mode, seed)).first;
        const TaskMetrics m = evaluate_task(run, 2, t2);
        s.l1[v] = m.l1;
        s.rp[v] = m.rp_frechet;
      }
      r.seeds.push_back(s);
    }
    r.seconds = seconds_since(t0);
    return r;
  }();
  return runs;
}

double median_of(const BaselineRuns& r, Variant v, bool rp) {
  std::vector<double> xs;
  for (const SeedResult& s : r.seeds) xs.push_back(rp ? s.rp[v] : s.l1[v]);
  return median3(xs);
}

Outcome baseline_ordering() {
  const BaselineRuns& r = baseline_runs();
  const double full = median_of(r, kFull, false), pig = median_of(r, kPiggy, false), pf = median_of(r, kPf, false);
  const double full_rp = median_of(r, kFull, true), pig_rp = median_of(r, kPiggy, true),
               pf_rp = median_of(r, kPf, true);
  const double best = std::min({full, pig, pf});
  const bool l1_ok = full <= 1.1 * best && pig <= 1.5 * full && pf > pig && pf > full;
  const bool rp_ok = std::isfinite(pf_rp) && pf_rp > pig_rp && pf_rp > full_rp;
  return {l1_ok && rp_ok && r.seconds < 45 * 60,
          "median task-2 val L1 full " + fmt("%.4f", full) + ", piggyback " + fmt("%.4f", pig) + " (" +
              fmt("%.2f", pig / full) + "x full, limit 1.5x), pure_factorization " + fmt("%.4f", pf) +
              "; rp_frechet full " + fmt("%.3f", full_rp) + ", piggyback " + fmt("%.3f", pig_rp) +
              ", pure_factorization " + fmt("%.3f", pf_rp) + "; 3 seeds, " + fmt("%.0f", r.seconds) + " s"};
}

Outcome lambda_trend() {
  const BaselineRuns& r = baseline_runs();
  const double l0 = median_of(r, kLam0, false), lq = median_of(r, kPiggy, false), l1 = median_of(r, kLam1, false);
  const ModelSpec spec = reference_spec(32);
  const std::size_t c0 = param_count(spec, 2, {0, 1}, TrainMode::piggyback).trainable;
  const std::size_t cq = param_count(spec, 2, {1, 4}, TrainMode::piggyback).trainable;
  const std::size_t c1 = param_count(spec, 2, {1, 1}, TrainMode::piggyback).trainable;
  const bool l1_ok = lq <= 1.05 * l0 && l1 <= 1.05 * lq;
  const bool counts_ok = c0 < cq && cq < c1;
  return {l1_ok && counts_ok, "median task-2 val L1 at lambda 0, 1/4, 1: " + fmt("%.4f", l0) + ", " +
                                  fmt("%.4f", lq) + ", " + fmt("%.4f", l1) + "; trainables " + std::to_string(c0) +
                                  " < " + std::to_string(cq) + " < " + std::to_string(c1)};
}

// ---------------------------------------------------------------------------

std::vector<Tensor> gaussian_set(std::uint64_t stream, int n, double offset) {
  RngStream rng(99, RngPurpose::test, {stream});
  std::vector<Tensor> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Tensor t({kFeatureDim});
    for (std::size_t d = 0; d < t.size(); ++d) t[d] = rng.normal() + (d == 0 ? offset : 0.0);
    out.push_back(std::move(t));
  }
  return out;
}

Outcome frechet_checks() {
  const std::vector<Tensor> a = gaussian_set(1, 10000, 0.0);
  const std::vector<Tensor> b = gaussian_set(2, 10000, 3.0);
  const double same = frechet_distance(a, a);
  const double shifted = frechet_distance(a, b);
  return {std::abs(same) <= 1e-8 && std::abs(shifted - 9.0) <= 0.3,
          "identical sets " + fmt("%.2e", same) + " (tol 1e-08); offset-3 unit Gaussians " + fmt("%.4f", shifted) +
              " (9 +- 0.3, N=10000, dim " + std::to_string(kFeatureDim) + ")"};
}

// ---------------------------------------------------------------------------

RunState random_run(std::mt19937_64& rng) {
  const ModelSpec spec = rng() % 2 ? reference_spec(32) : testing::single_layer_spec();
  const std::uint32_t den = 1 + static_cast<std::uint32_t>(rng() % 8);
  const Rational lam{static_cast<std::uint32_t>(rng() % (den + 1)), den};
  const TrainMode modes[] = {TrainMode::piggyback, TrainMode::full, TrainMode::pure_factorization,
                             TrainMode::sequential_finetune};
  const TrainMode mode = modes[rng() % 4];
  RunState run = RunState::create(spec, lam, rng());
  const int tasks = static_cast<int>(rng() % 5);
  for (int t = 0; t < tasks; ++t) {
    TrainConfig cfg = config(mode, run.seed, 1 + static_cast<int>(rng() % 9));
    cfg.lr = std::ldexp(1.0, -static_cast<int>(rng() % 20));
    DataRecipe recipe{static_cast<TaskKind>(rng() % 4), rng(), 10 + static_cast<int>(rng() % 500), 32};
    begin_task(run, recipe, cfg);
    TaskRecord& rec = run.task(run.task_count());
    for (int e = 0; e < cfg.epochs; ++e) {
      rec.log.epochs.push_back({std::ldexp(static_cast<double>(rng() >> 11), -40), -1.0 / (1 + e), 0.1 * e});
    }
    rec.log.seed = run.seed;
    finish_task(run);
  }
  return run;
}

bool same_outputs(const RunState& a, const RunState& b, const Tensor& probe) {
  if (a.task_count() != b.task_count()) return false;
  for (int t = 1; t <= a.task_count(); ++t) {
    if (!generate(build_generator(a, t), probe).bitwise_equal(generate(build_generator(b, t), probe))) return false;
  }
  return true;
}

int spawn_train(const std::string& run_dir) {
  const std::vector<std::string> args = {PBGAN_CLI_PATH, "train", "--run", run_dir, "--task", "invert", "--epochs",
                                         "1",            "--count", "10", "--data-seed", "1"};
  std::vector<char*> argv;
  for (const std::string& s : args) argv.push_back(const_cast<char*>(s.c_str()));
  argv.push_back(nullptr);
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, "/dev/null", O_WRONLY, 0);
  pid_t pid = 0;
  const int rc = posix_spawn(&pid, argv[0], &actions, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  if (rc != 0) throw std::runtime_error("posix_spawn failed for " + args[0]);
  return pid;
}

int cli_quiet(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  return run_cli(args, out, err);
}

Outcome checkpoint_trials() {
  testing::TempDir dir("acceptance_ckpt");
  std::mt19937_64 rng(20260101);
  const Tensor probe32 = testing::random_tensor({32, 32, 3}, 3);
  const Tensor probe4 = testing::random_tensor({4, 4, 4}, 4);

  // Reference for the killed-process trials: an uninterrupted child run.
  const fs::path init_dir = dir.path() / "init";
  if (cli_quiet({"init", "--seed", "9", "--out", init_dir.string()}) != kExitOk) return {false, "init failed"};
  const Bytes init_bytes = read_file(init_dir / kCheckpointFile);
  const fs::path ref_dir = dir.path() / "reference";
  fs::create_directories(ref_dir);
  fs::copy_file(init_dir / kCheckpointFile, ref_dir / kCheckpointFile);
  const auto t_child = Clock::now();
  int status = 0;
  waitpid(spawn_train(ref_dir.string()), &status, 0);
  const double child_seconds = seconds_since(t_child);
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) return {false, "reference child train failed"};
  const Bytes trained_bytes = read_file(ref_dir / kCheckpointFile);

  int round_trips = 0, probe_crashes = 0, kills = 0, killed_mid = 0, killed_after = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::string tag = "trial " + std::to_string(trial);

    // Every trial: random run, byte-identical round trip through memory and disk.
    const RunState run = random_run(rng);
    const Bytes bytes = serialize_run(run);
    const RunState back = deserialize_run(bytes);
    const Tensor& probe = run.spec.height == 32 ? probe32 : probe4;
    if (serialize_run(back) != bytes || !same_outputs(run, back, probe)) return {false, tag + ": round trip differs"};
    const fs::path tdir = dir.path() / ("t" + std::to_string(trial));
    fs::create_directories(tdir);
    save_checkpoint(run, tdir / kCheckpointFile);
    if (read_file(tdir / kCheckpointFile) != bytes) return {false, tag + ": file bytes differ"};
    ++round_trips;

    if (trial % 2 == 0) {
      // In-process crash part way through replacing the file.
      const RunState next = random_run(rng);
      const Bytes next_bytes = serialize_run(next);
      const std::size_t crash_at = 1 + rng() % next_bytes.size();
      bool crashed = false;
      try {
        save_checkpoint(next, tdir / kCheckpointFile, [crash_at](std::size_t n) {
          if (n >= crash_at) throw std::runtime_error("simulated crash");
        });
      } catch (const std::runtime_error&) {
        crashed = true;
      }
      if (!crashed) return {false, tag + ": probe did not fire"};
      if (read_file(tdir / kCheckpointFile) != bytes) return {false, tag + ": old checkpoint damaged by crash"};
      if (serialize_run(load_checkpoint(tdir / kCheckpointFile)) != bytes) return {false, tag + ": reload differs"};
      save_checkpoint(next, tdir / kCheckpointFile);
      if (read_file(tdir / kCheckpointFile) != next_bytes) return {false, tag + ": retry save differs"};
      ++probe_crashes;
    } else {
      // SIGKILL a child training process at a random moment.
      const fs::path kdir = tdir / "killed";
      fs::create_directories(kdir);
      fs::copy_file(init_dir / kCheckpointFile, kdir / kCheckpointFile);
      const auto delay_us = static_cast<useconds_t>(std::uniform_real_distribution<double>(0.0, 1.2)(rng) *
                                                    child_seconds * 1e6);
      const pid_t pid = spawn_train(kdir.string());
      usleep(delay_us);
      kill(pid, SIGKILL);
      waitpid(pid, &status, 0);
      const Bytes after = read_file(kdir / kCheckpointFile);
      if (after != init_bytes && after != trained_bytes) return {false, tag + ": checkpoint is neither old nor new"};
      try {
        RunLock lock(kdir);
      } catch (const IoError&) {
        return {false, tag + ": lock left held after kill"};
      }
      if (after == init_bytes) {
        ++killed_mid;
        if (cli_quiet({"train", "--run", kdir.string(), "--task", "invert", "--epochs", "1", "--count", "10",
                       "--data-seed", "1"}) != kExitOk) {
          return {false, tag + ": resumed train failed"};
        }
        if (read_file(kdir / kCheckpointFile) != trained_bytes) return {false, tag + ": resumed train differs"};
      } else {
        ++killed_after;
      }
      ++kills;
    }
    fs::remove_all(tdir);
  }
  return {round_trips == 100,
          std::to_string(round_trips) + " byte-identical round trips; " + std::to_string(probe_crashes) +
              " interrupted saves kept the old file; " + std::to_string(kills) + " killed train processes (" +
              std::to_string(killed_mid) + " before commit then resumed bit-identically, " +
              std::to_string(killed_after) + " after commit), no torn files or stale locks"};
}

// ---------------------------------------------------------------------------

struct Criterion {
  int number;
  const char* title;
  std::function<Outcome()> run;
};

int run_all(const std::optional<int>& only) {
  const std::vector<Criterion> criteria = {
      {1, "gradient suite", gradient_suite},
      {2, "zero forgetting", zero_forgetting},
      {3, "shape and size closure", shape_closure},
      {4, "parameter accounting", parameter_accounting},
      {5, "lambda=1 degeneracy", lambda_one_degeneracy},
      {6, "baseline ordering", baseline_ordering},
      {7, "lambda trend", lambda_trend},
      {8, "frechet distance", frechet_checks},
      {9, "checkpoint safety", checkpoint_trials},
  };
  int failures = 0;
  std::ofstream report("acceptance_report.txt");
  for (const Criterion& c : criteria) {
    if (only && *only != c.number) continue;
    note("criterion " + std::to_string(c.number) + ": " + c.title);
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::ostringstream line;
    line << "criterion " << c.number << " " << (o.pass ? "PASS" : "FAIL") << " [" << c.title << "] " << o.detail
         << " (" << fmt("%.1f", seconds_since(t0)) << " s)";
    std::cout << line.str() << std::endl;
    report << line.str() << std::endl;
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace
}  // namespace pbgan::acceptance

int main(int argc, char** argv) {
  std::optional<int> only;
  if (argc > 1) only = std::stoi(argv[1]);
  return pbgan::acceptance::run_all(only);
}
