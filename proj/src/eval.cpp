#include "pbgan/eval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <exception>
#include <stdexcept>
#include <thread>

#include "pbgan/accounting.hpp"
#include "pbgan/rng.hpp"

namespace pbgan {

ImageMetrics l1_psnr(const Tensor& fake, const Tensor& target) {
  if (fake.shape() != target.shape()) {
    throw ShapeError("l1_psnr: extents differ " + shape_str(fake.shape()) + " vs " + shape_str(target.shape()));
  }
  double abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i = 0; i < fake.size(); ++i) {
    const double d = fake[i] - target[i];
    abs_sum += std::abs(d);
    sq_sum += d * d;
  }
  const double n = static_cast<double>(fake.size());
  const double mse = sq_sum / n;
  ImageMetrics m;
  m.l1 = abs_sum / n;
  m.psnr = mse == 0.0 ? kPsnrCap : std::min(kPsnrCap, 10.0 * std::log10(4.0 / mse));
  return m;
}

RandomProjection::RandomProjection(int input_size, std::uint64_t seed)
    : input_size_(input_size), matrix_({kFeatureDim, input_size}) {
  RngStream rng(seed, RngPurpose::projection, {static_cast<std::uint64_t>(input_size)});
  const double scale = 1.0 / std::sqrt(static_cast<double>(input_size));
  for (std::size_t i = 0; i < matrix_.size(); ++i) matrix_[i] = rng.normal() * scale;
}

Tensor RandomProjection::features(const Tensor& image) const {
  if (static_cast<int>(image.size()) != input_size_) {
    throw ShapeError("rp_features: image has " + std::to_string(image.size()) + " values, projection expects " +
                     std::to_string(input_size_));
  }
  Tensor f({kFeatureDim});
  const auto x = image.data();
  for (int r = 0; r < kFeatureDim; ++r) {
    const double* row = &matrix_.data()[static_cast<std::size_t>(r) * input_size_];
    double acc = 0.0;
    for (int c = 0; c < input_size_; ++c) acc += row[c] * x[static_cast<std::size_t>(c)];
    f[static_cast<std::size_t>(r)] = acc > 0.0 ? acc : 0.0;
  }
  return f;
}

Tensor rp_features(const Tensor& image, std::uint64_t seed) {
  return RandomProjection(static_cast<int>(image.size()), seed).features(image);
}

namespace {

struct Gaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

Gaussian fit(std::span<const Tensor> feats) {
  const Eigen::Index n = static_cast<Eigen::Index>(feats.size());
  const Eigen::Index d = static_cast<Eigen::Index>(feats[0].size());
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Tensor& f = feats[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(f.size()) != d) throw ShapeError("frechet_distance: feature lengths differ");
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = f[static_cast<std::size_t>(j)];
  }
  Gaussian g;
  g.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - g.mean.transpose();
  g.cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  return g;
}

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(std::span<const Tensor> feats_a, std::span<const Tensor> feats_b) {
  if (feats_a.size() < kMinFrechetSamples || feats_b.size() < kMinFrechetSamples) {
    throw std::invalid_argument("frechet_distance: need at least " + std::to_string(kMinFrechetSamples) +
                                " samples per side, got " + std::to_string(feats_a.size()) + " and " +
                                std::to_string(feats_b.size()));
  }
  const Gaussian a = fit(feats_a);
  const Gaussian b = fit(feats_b);
  if (a.mean.size() != b.mean.size()) throw ShapeError("frechet_distance: feature dimensions differ");

  // Tr((A^1/2 B A^1/2)^1/2) is symmetric in A and B; evaluate both orders and
  // average so swapping the arguments gives the same bits.
  auto cross_trace = [](const Eigen::MatrixXd& p, const Eigen::MatrixXd& q) {
    const Eigen::MatrixXd rp = sqrt_psd(p);
    return sqrt_psd(rp * q * rp).trace();
  };
  const double cross = 0.5 * (cross_trace(a.cov, b.cov) + cross_trace(b.cov, a.cov));
  const double mean_term = (a.mean - b.mean).squaredNorm();
  const double d = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * cross;
  return std::max(0.0, d);
}

double mean_l1(const GeneratorInstance& g, const PairedDataset& data, Split split) {
  const std::vector<std::size_t> idx = data.indices(split);
  if (idx.empty()) throw std::invalid_argument("mean_l1: split is empty");
  double total = 0.0;
  for (std::size_t i : idx) total += l1_psnr(generate(g, data.pairs[i].condition), data.pairs[i].target).l1;
  return total / static_cast<double>(idx.size());
}

TaskMetrics evaluate_task(const RunState& run, int task_index, const PairedDataset& data, Split split, int threads) {
  if (threads < 1) throw std::invalid_argument("evaluate_task: thread count must be >= 1");
  const GeneratorInstance g = build_generator(run, task_index);
  const std::vector<std::size_t> idx = data.indices(split);
  if (idx.empty()) throw std::invalid_argument("evaluate_task: split is empty");

  std::vector<Tensor> fakes(idx.size());
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), idx.size());
  if (workers <= 1) {
    for (std::size_t j = 0; j < idx.size(); ++j) fakes[j] = generate(g, data.pairs[idx[j]].condition);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t j = w; j < idx.size(); j += workers) fakes[j] = generate(g, data.pairs[idx[j]].condition);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (std::thread& t : pool) t.join();
    for (const std::exception_ptr& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  TaskMetrics m;
  m.task_index = task_index;
  m.samples = idx.size();
  const RandomProjection proj(static_cast<int>(data.pairs[idx[0]].target.size()));
  std::vector<Tensor> fake_feats, real_feats;
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const std::size_t i = idx[j];
    const Tensor& fake = fakes[j];
    const ImageMetrics im = l1_psnr(fake, data.pairs[i].target);
    m.l1 += im.l1;
    m.psnr += im.psnr;
    fake_feats.push_back(proj.features(fake));
    real_feats.push_back(proj.features(data.pairs[i].target));
  }
  m.l1 /= static_cast<double>(idx.size());
  m.psnr /= static_cast<double>(idx.size());
  m.rp_frechet = idx.size() >= kMinFrechetSamples ? frechet_distance(fake_feats, real_feats)
                                                  : std::numeric_limits<double>::quiet_NaN();
  return m;
}

MetricReport summarize(std::vector<TaskMetrics> tasks) {
  MetricReport r;
  r.tasks = std::move(tasks);
  for (const TaskMetrics& t : r.tasks) {
    r.mean_l1 += t.l1;
    r.mean_psnr += t.psnr;
    r.mean_rp_frechet += t.rp_frechet;
    r.samples += t.samples;
  }
  if (!r.tasks.empty()) {
    const double n = static_cast<double>(r.tasks.size());
    r.mean_l1 /= n;
    r.mean_psnr /= n;
    r.mean_rp_frechet /= n;
  }
  return r;
}

namespace {

std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string metrics_csv(const MetricReport& report) {
  std::string out = "task_index,samples,l1,psnr,rp_frechet\n";
  for (const TaskMetrics& t : report.tasks) {
    out += std::to_string(t.task_index) + "," + std::to_string(t.samples) + "," + fmt_double(t.l1) + "," +
           fmt_double(t.psnr) + "," + fmt_double(t.rp_frechet) + "\n";
  }
  out += "mean," + std::to_string(report.samples) + "," + fmt_double(report.mean_l1) + "," +
         fmt_double(report.mean_psnr) + "," + fmt_double(report.mean_rp_frechet) + "\n";
  return out;
}

ForgettingReport verify_forgetting(const RunState& before, const RunState& after, const PairedDataset& probes,
                                   int task_index) {
  if (!(before.spec == after.spec)) throw std::invalid_argument("verify_forgetting: runs have different model specs");
  const GeneratorInstance g0 = build_generator(before, task_index);
  const GeneratorInstance g1 = build_generator(after, task_index);
  ForgettingReport r;
  ForgettingReport::Entry e{task_index, 0.0};
  for (const ImagePair& p : probes.pairs) {
    e.max_abs_diff = std::max(e.max_abs_diff, max_abs_diff(generate(g0, p.condition), generate(g1, p.condition)));
  }
  r.entries.push_back(e);
  r.pass = e.max_abs_diff == 0.0;
  return r;
}

std::vector<ParamRow> param_report(const ModelSpec& spec, Rational lambda, int n_tasks) {
  if (n_tasks < 1) throw std::invalid_argument("param_report: need at least one task");
  std::vector<ParamRow> rows;
  const std::pair<const char*, TrainMode> strategies[] = {
      {"full_per_task", TrainMode::full},
      {"piggyback", TrainMode::piggyback},
      {"pure_factorization", TrainMode::pure_factorization},
  };
  for (const auto& [name, mode] : strategies) {
    for (int t = 1; t <= n_tasks; ++t) {
      const ParamCount full = param_count(spec, t, lambda, TrainMode::full);
      const ParamCount c = param_count(spec, t, lambda, mode);
      rows.push_back({name, t, c.trainable, c.stored_cumulative,
                      static_cast<double>(c.trainable) / static_cast<double>(full.trainable),
                      static_cast<double>(c.stored_cumulative) / static_cast<double>(full.stored_cumulative)});
    }
  }
  return rows;
}

std::vector<ParamRow> param_report(const RunState& run, int n_tasks) {
  return param_report(run.spec, run.lambda, n_tasks);
}

std::string param_table_text(const std::vector<ParamRow>& rows) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-20s %5s %12s %14s %10s %10s\n", "strategy", "task", "trainable", "stored_total",
                "train/full", "store/full");
  out += line;
  for (const ParamRow& r : rows) {
    std::snprintf(line, sizeof line, "%-20s %5d %12zu %14zu %10.4f %10.4f\n", r.strategy.c_str(), r.task, r.trainable,
                  r.stored_cumulative, r.trainable_ratio, r.stored_ratio);
    out += line;
  }
  return out;
}

std::string param_table_csv(const std::vector<ParamRow>& rows) {
  std::string out = "strategy,task,trainable,stored_cumulative,trainable_ratio,stored_ratio\n";
  for (const ParamRow& r : rows) {
    out += r.strategy + "," + std::to_string(r.task) + "," + std::to_string(r.trainable) + "," +
           std::to_string(r.stored_cumulative) + "," + fmt_double(r.trainable_ratio) + "," +
           fmt_double(r.stored_ratio) + "\n";
  }
  return out;
}

}  // namespace pbgan
