#include "pbgan/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "pbgan/checkpoint.hpp"
#include "pbgan/eval.hpp"
#include "pbgan/gradcheck.hpp"
#include "pbgan/ppm.hpp"
#include "pbgan/trainer.hpp"

namespace fs = std::filesystem;

namespace pbgan {

namespace {

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

ModelSpec arch_spec(const std::string& arch) {
  if (arch == "small-unet") return reference_spec(32);
  throw UsageError("unknown --arch '" + arch + "' (available: small-unet)");
}

// Accepts either a checkpoint file or a run directory holding run.ckpt.
fs::path checkpoint_path(const fs::path& p) { return fs::is_directory(p) ? p / kCheckpointFile : p; }

int thread_budget() {
  const char* env = std::getenv("PBGAN_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1 || v > 256) throw UsageError("PBGAN_THREADS must be an integer in [1, 256]");
  return static_cast<int>(v);
}

PairedDataset regenerate(const TaskRecord& rec) {
  return synth_task(rec.data.kind, rec.data.seed, rec.data.count, rec.data.size);
}

struct InitArgs {
  std::string arch = "small-unet";
  std::string lambda = "1/4";
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_init(const InitArgs& a, std::ostream& out) {
  const Rational lambda = Rational::parse(a.lambda);
  RunState run = RunState::create(arch_spec(a.arch), lambda, a.seed);
  const fs::path dir(a.out);
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw UsageError("--out " + a.out + " exists and is not a directory");
    if (!fs::is_empty(dir)) throw UsageError("--out " + a.out + " is not empty");
  } else {
    fs::create_directories(dir);
  }
  RunLock lock(dir);
  save_checkpoint(run, dir / kCheckpointFile);

  out << "initialized " << (dir / kCheckpointFile).string() << " (lambda " << lambda.str() << ", seed " << a.seed
      << ")\n";
  out << "layer,kind,c_out,n_u,n_p,task_specific\n";
  for (std::size_t l = 0; l < run.spec.generator.size(); ++l) {
    const LayerSpec& ls = run.spec.generator[l];
    const Partition p = ls.task_specific ? Partition{lambda, ls.c_out, 0} : partition_channels(ls.c_out, lambda);
    out << l << "," << (ls.kind == LayerKind::conv ? "conv" : "deconv") << "," << ls.c_out << "," << p.n_u << ","
        << p.n_p << "," << (ls.task_specific ? 1 : 0) << "\n";
  }
  return kExitOk;
}

struct TrainArgs {
  std::string run;
  std::string task;
  std::string mode = "piggyback";
  int epochs = 5;
  int count = 200;
  std::uint64_t data_seed = 0;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const TaskKind kind = parse_task_kind(a.task);
  TrainConfig cfg;
  cfg.mode = parse_train_mode(a.mode);
  cfg.epochs = a.epochs;
  cfg.validate();

  const fs::path dir(a.run);
  const fs::path ckpt = dir / kCheckpointFile;
  RunLock lock(dir);
  RunState run = load_checkpoint(ckpt);
  check_mode_compatible(run, cfg.mode);
  cfg.seed = run.seed;

  const PairedDataset data = synth_task(kind, a.data_seed, a.count, run.spec.height);
  auto [next, log] = train_task(std::move(run), data, cfg);
  save_checkpoint(next, ckpt);

  const int n = next.task_count();
  out << "task " << n << " (" << task_kind_name(kind) << ", " << train_mode_name(cfg.mode) << ")\n";
  out << "epoch,g_loss,d_loss,val_l1\n";
  for (std::size_t e = 0; e < log.epochs.size(); ++e) {
    out << e + 1 << "," << fmt("%.17g", log.epochs[e].g_loss) << "," << fmt("%.17g", log.epochs[e].d_loss) << ","
        << fmt("%.17g", log.epochs[e].val_l1) << "\n";
  }
  out << "final_val_l1 " << fmt("%.17g", log.final_val_l1()) << "\n";
  out << "wall_clock_seconds " << fmt("%.3f", log.wall_clock_seconds) << "\n";
  return kExitOk;
}

inline constexpr std::size_t kSampleTriplets = 8;

int cmd_eval(const std::string& run_path, int task_index, const std::string& out_dir, std::ostream& out) {
  const RunState run = load_checkpoint(checkpoint_path(run_path));
  const PairedDataset data = regenerate(run.task(task_index));
  const TaskMetrics m = evaluate_task(run, task_index, data, Split::val, thread_budget());
  const std::string csv = metrics_csv(summarize({m}));

  const fs::path dir(out_dir);
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "metrics.csv", std::ios::binary);
    f << csv;
    if (!f) throw IoError("cannot write " + (dir / "metrics.csv").string());
  }
  const GeneratorInstance g = build_generator(run, task_index);
  const std::vector<std::size_t> idx = data.indices(Split::val);
  for (std::size_t j = 0; j < std::min(kSampleTriplets, idx.size()); ++j) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "%02zu_", j);
    const ImagePair& p = data.pairs[idx[j]];
    write_ppm(p.condition, dir / (std::string(stem) + "condition.ppm"));
    write_ppm(generate(g, p.condition), dir / (std::string(stem) + "fake.ppm"));
    write_ppm(p.target, dir / (std::string(stem) + "target.ppm"));
  }
  out << "task " << task_index << ": l1 " << fmt("%.6f", m.l1) << ", psnr " << fmt("%.3f", m.psnr)
      << " dB, rp_frechet " << fmt("%.6g", m.rp_frechet) << " over " << m.samples << " validation samples\n";
  out << csv;
  return kExitOk;
}

int cmd_verify(const std::string& before_path, const std::string& after_path, int task_index, std::ostream& out) {
  const RunState before = load_checkpoint(checkpoint_path(before_path));
  const RunState after = load_checkpoint(checkpoint_path(after_path));
  after.task(task_index);
  PairedDataset probes = regenerate(before.task(task_index));
  const std::vector<std::size_t> idx = probes.indices(Split::val);
  std::vector<ImagePair> kept;
  for (std::size_t i : idx) kept.push_back(probes.pairs[i]);
  probes.pairs = std::move(kept);
  probes.splits.assign(probes.pairs.size(), Split::val);

  const ForgettingReport r = verify_forgetting(before, after, probes, task_index);
  for (const ForgettingReport::Entry& e : r.entries) {
    out << "task " << e.task_index << ": max abs output difference " << fmt("%.17g", e.max_abs_diff) << " over "
        << probes.pairs.size() << " probes -> " << (e.max_abs_diff == 0.0 ? "PASS" : "FAIL") << "\n";
  }
  out << "task_index,max_abs_diff,pass\n";
  for (const ForgettingReport::Entry& e : r.entries) {
    out << e.task_index << "," << fmt("%.17g", e.max_abs_diff) << "," << (e.max_abs_diff == 0.0 ? 1 : 0) << "\n";
  }
  return r.pass ? kExitOk : kExitFail;
}

int cmd_report_params(const std::string& run_path, int tasks, std::ostream& out) {
  const RunState run = load_checkpoint(checkpoint_path(run_path));
  const int n = tasks > 0 ? tasks : std::max(1, run.task_count());
  const std::vector<ParamRow> rows = param_report(run, n);
  out << "lambda " << run.lambda.str() << ", tasks 1.." << n << "\n";
  out << param_table_text(rows) << "\n" << param_table_csv(rows);
  return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, int instances, std::ostream& out) {
  if (instances < 1) throw UsageError("--instances must be >= 1");
  const std::vector<OpGradReport> reports = run_gradient_suite(seed, instances);
  double worst = 0.0;
  bool pass = true;
  out << "op,instances,worst_rel_error,pass\n";
  for (const OpGradReport& r : reports) {
    out << r.op << "," << r.instances << "," << fmt("%.3e", r.worst_error) << "," << (r.pass ? 1 : 0) << "\n";
    worst = std::max(worst, r.worst_error);
    pass = pass && r.pass;
  }
  out << "worst_rel_error " << fmt("%.3e", worst) << " (tolerance " << fmt("%.0e", kGradRelTol) << ") -> "
      << (pass ? "PASS" : "FAIL") << "\n";
  return pass ? kExitOk : kExitFail;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Continual image-to-image GAN training with piggyback filter factorization", "pbgan"};
  app.require_subcommand(1);

  InitArgs init;
  CLI::App* sc_init = app.add_subcommand("init", "Create a new run directory with an empty filter bank");
  sc_init->add_option("--arch", init.arch, "Generator architecture")->capture_default_str();
  sc_init->add_option("--lambda", init.lambda, "Unconstrained fraction as N/D")->capture_default_str();
  sc_init->add_option("--seed", init.seed, "Global run seed")->capture_default_str();
  sc_init->add_option("--out", init.out, "Run directory (absent or empty)")->required();

  TrainArgs train;
  CLI::App* sc_train = app.add_subcommand("train", "Train the next task and append it to the run");
  sc_train->add_option("--run", train.run, "Run directory")->required();
  sc_train->add_option("--task", train.task, "invert | edge_fill | checker_colorize | blur_sharpen")->required();
  sc_train->add_option("--mode", train.mode, "piggyback | full | pf | sft")->capture_default_str();
  sc_train->add_option("--epochs", train.epochs, "Training epochs")->capture_default_str();
  sc_train->add_option("--count", train.count, "Synthetic pairs (10% held out)")->capture_default_str();
  sc_train->add_option("--data-seed", train.data_seed, "Dataset seed")->capture_default_str();

  std::string eval_run, eval_out;
  int eval_task = 0;
  CLI::App* sc_eval = app.add_subcommand("eval", "Metrics and sample images for one task");
  sc_eval->add_option("--run", eval_run, "Run directory or checkpoint")->required();
  sc_eval->add_option("--task-index", eval_task, "1-based task index")->required();
  sc_eval->add_option("--out", eval_out, "Output directory")->required();

  std::string before, after;
  int verify_task = 0;
  CLI::App* sc_verify = app.add_subcommand("verify-forgetting", "Compare a task's outputs across two checkpoints");
  sc_verify->add_option("--before", before, "Earlier run directory or checkpoint")->required();
  sc_verify->add_option("--after", after, "Later run directory or checkpoint")->required();
  sc_verify->add_option("--task-index", verify_task, "1-based task index")->required();

  std::string params_run;
  int params_tasks = 0;
  CLI::App* sc_params = app.add_subcommand("report-params", "Parameter accounting per strategy and task");
  sc_params->add_option("--run", params_run, "Run directory or checkpoint")->required();
  sc_params->add_option("--tasks", params_tasks, "Tasks to tabulate (default: tasks in the run, at least 1)");

  std::uint64_t gc_seed = 1234;
  int gc_instances = 20;
  CLI::App* sc_grad = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  sc_grad->add_option("--seed", gc_seed, "Instance seed")->capture_default_str();
  sc_grad->add_option("--instances", gc_instances, "Random instances per op")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    thread_budget();
    if (*sc_init) return cmd_init(init, out);
    if (*sc_train) return cmd_train(train, out);
    if (*sc_eval) return cmd_eval(eval_run, eval_task, eval_out, out);
    if (*sc_verify) return cmd_verify(before, after, verify_task, out);
    if (*sc_params) return cmd_report_params(params_run, params_tasks, out);
    if (*sc_grad) return cmd_gradcheck(gc_seed, gc_instances, out);
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "error: corrupt checkpoint: " << e.what() << "\n";
    return kExitIo;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const PpmError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::out_of_range& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFail;
  }
}

}  // namespace pbgan
