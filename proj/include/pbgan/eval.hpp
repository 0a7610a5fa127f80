#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pbgan/data_tasks.hpp"
#include "pbgan/gan_models.hpp"
#include "pbgan/run_state.hpp"

namespace pbgan {

struct ImageMetrics {
  double l1 = 0.0;
  double psnr = 0.0;  // dB, peak-to-peak 2, capped at kPsnrCap
};

inline constexpr double kPsnrCap = 99.0;

ImageMetrics l1_psnr(const Tensor& fake, const Tensor& target);

inline constexpr std::uint64_t kFeatureSeed = 7777;
inline constexpr int kFeatureDim = 16;
inline constexpr std::size_t kMinFrechetSamples = 32;

/// Fixed Gaussian projection of flattened images to kFeatureDim values
/// followed by relu. Stands in for a pretrained embedding.
class RandomProjection {
 public:
  RandomProjection(int input_size, std::uint64_t seed = kFeatureSeed);

  Tensor features(const Tensor& image) const;
  const Tensor& matrix() const { return matrix_; }  // [kFeatureDim, input_size]

 private:
  int input_size_;
  Tensor matrix_;
};

Tensor rp_features(const Tensor& image, std::uint64_t seed = kFeatureSeed);

/// Frechet distance between Gaussian fits of two feature sets, using
/// 1/(N-1) covariances and eigendecomposition square roots with negative
/// eigenvalues floored at 0. Needs kMinFrechetSamples per side.
double frechet_distance(std::span<const Tensor> feats_a, std::span<const Tensor> feats_b);

struct TaskMetrics {
  int task_index = 0;
  std::size_t samples = 0;
  double l1 = 0.0;
  double psnr = 0.0;
  double rp_frechet = 0.0;  // NaN when the split is too small
};

struct MetricReport {
  std::vector<TaskMetrics> tasks;
  double mean_l1 = 0.0;
  double mean_psnr = 0.0;
  double mean_rp_frechet = 0.0;
  std::size_t samples = 0;
};

/// Mean per-image L1 of the generator over one split, in index order.
double mean_l1(const GeneratorInstance& g, const PairedDataset& data, Split split);

/// Generation may fan out over `threads` workers; metrics are reduced in
/// index order so the result does not depend on the thread count.
TaskMetrics evaluate_task(const RunState& run, int task_index, const PairedDataset& data, Split split = Split::val,
                          int threads = 1);
MetricReport summarize(std::vector<TaskMetrics> tasks);
std::string metrics_csv(const MetricReport& report);

struct ForgettingReport {
  struct Entry {
    int task_index = 0;
    double max_abs_diff = 0.0;
  };
  std::vector<Entry> entries;
  bool pass = true;  // every difference is exactly zero
};

/// Rebuilds task k's generator from both runs and compares outputs on every
/// probe condition.
ForgettingReport verify_forgetting(const RunState& before, const RunState& after, const PairedDataset& probes,
                                   int task_index);

struct ParamRow {
  std::string strategy;
  int task = 0;
  std::size_t trainable = 0;
  std::size_t stored_cumulative = 0;
  double trainable_ratio = 0.0;  // vs full-per-task
  double stored_ratio = 0.0;
};

/// Rows for full-per-task, piggyback and pure_factorization at tasks 1..n.
std::vector<ParamRow> param_report(const ModelSpec& spec, Rational lambda, int n_tasks);
std::vector<ParamRow> param_report(const RunState& run, int n_tasks);
std::string param_table_text(const std::vector<ParamRow>& rows);
std::string param_table_csv(const std::vector<ParamRow>& rows);

}  // namespace pbgan
