#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "pbgan/tensor.hpp"

namespace pbgan {

/// Procedural paired tasks. Each condition is a deterministic degradation of
/// a random scene of colored rectangles and ellipses.
enum class TaskKind : std::uint8_t {
  invert = 0,            // target = -condition
  edge_fill = 1,         // binary edge map -> scene
  checker_colorize = 2,  // grayscale outside checker cells -> scene
  blur_sharpen = 3,      // 5x5 box blur -> scene
};

std::string_view task_kind_name(TaskKind kind);
/// Throws std::invalid_argument for unknown names.
TaskKind parse_task_kind(std::string_view name);

enum class Split : std::uint8_t { train = 0, val = 1 };

struct ImagePair {
  Tensor condition;  // [size, size, 3] in [-1, 1]
  Tensor target;
};

struct PairedDataset {
  std::string name;
  TaskKind kind = TaskKind::invert;
  std::uint64_t seed = 0;
  int size = 32;
  std::vector<ImagePair> pairs;
  std::vector<Split> splits;

  std::vector<std::size_t> indices(Split split) const;
};

/// Validation takes max(1, count / 10) pairs chosen by seed; the rest train.
PairedDataset synth_task(TaskKind kind, std::uint64_t seed, int count, int size = 32);

/// Writes `<root>/<task>/<split>/<index>_{cond|target}.ppm`, 4-digit indices.
void write_dataset(const PairedDataset& data, const std::filesystem::path& root);

}  // namespace pbgan
