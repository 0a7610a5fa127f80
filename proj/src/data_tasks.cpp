#include "pbgan/data_tasks.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "pbgan/ppm.hpp"
#include "pbgan/rng.hpp"

namespace pbgan {

std::string_view task_kind_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::invert: return "invert";
    case TaskKind::edge_fill: return "edge_fill";
    case TaskKind::checker_colorize: return "checker_colorize";
    case TaskKind::blur_sharpen: return "blur_sharpen";
  }
  throw std::invalid_argument("unknown task kind");
}

TaskKind parse_task_kind(std::string_view name) {
  for (TaskKind k : {TaskKind::invert, TaskKind::edge_fill, TaskKind::checker_colorize, TaskKind::blur_sharpen}) {
    if (task_kind_name(k) == name) return k;
  }
  throw std::invalid_argument("unknown task kind '" + std::string(name) + "'");
}

std::vector<std::size_t> PairedDataset::indices(Split split) const {
  std::vector<std::size_t> r;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == split) r.push_back(i);
  }
  return r;
}

namespace {

struct Scene {
  Tensor image;            // [n, n, 3]
  std::vector<int> label;  // topmost shape id per pixel, 0 = background
};

Scene draw_scene(RngStream& rng, int n) {
  Scene s{Tensor({n, n, 3}), std::vector<int>(static_cast<std::size_t>(n) * n, 0)};
  std::array<double, 3> bg{};
  for (double& c : bg) c = rng.uniform(-1.0, 1.0);
  for (std::size_t p = 0; p < s.label.size(); ++p) {
    for (int c = 0; c < 3; ++c) s.image[p * 3 + c] = bg[static_cast<std::size_t>(c)];
  }

  const int shapes = rng.uniform_int(3, 6);
  for (int id = 1; id <= shapes; ++id) {
    const bool ellipse = rng.uniform() < 0.5;
    const double cy = rng.uniform(0.0, n), cx = rng.uniform(0.0, n);
    const double ry = rng.uniform(3.0, n / 3.0), rx = rng.uniform(3.0, n / 3.0);
    std::array<double, 3> color{};
    for (double& c : color) c = rng.uniform(-1.0, 1.0);
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const double dy = (y + 0.5 - cy) / ry, dx = (x + 0.5 - cx) / rx;
        const bool inside = ellipse ? dy * dy + dx * dx <= 1.0 : (std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0);
        if (!inside) continue;
        const std::size_t p = static_cast<std::size_t>(y) * n + x;
        s.label[p] = id;
        for (int c = 0; c < 3; ++c) s.image[p * 3 + c] = color[static_cast<std::size_t>(c)];
      }
    }
  }
  return s;
}

Tensor edge_map(const Scene& s, int n) {
  Tensor out({n, n, 3});
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * n + x;
      const int l = s.label[p];
      const bool edge = (x + 1 < n && s.label[p + 1] != l) || (y + 1 < n && s.label[p + static_cast<std::size_t>(n)] != l);
      for (int c = 0; c < 3; ++c) out[p * 3 + c] = edge ? 1.0 : -1.0;
    }
  }
  return out;
}

double luma(const Tensor& img, std::size_t p) {
  return 0.299 * img[p * 3] + 0.587 * img[p * 3 + 1] + 0.114 * img[p * 3 + 2];
}

Tensor checker_gray(const Tensor& img, int n) {
  constexpr int cell = 8;
  Tensor out = img;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      if ((y / cell + x / cell) % 2 == 0) continue;  // color hint cell
      const std::size_t p = static_cast<std::size_t>(y) * n + x;
      const double g = luma(img, p);
      for (int c = 0; c < 3; ++c) out[p * 3 + c] = g;
    }
  }
  return out;
}

Tensor box_blur(const Tensor& img, int n) {
  constexpr int r = 2;
  Tensor out({n, n, 3});
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int dy = -r; dy <= r; ++dy) {
          for (int dx = -r; dx <= r; ++dx) {
            const int yy = std::clamp(y + dy, 0, n - 1), xx = std::clamp(x + dx, 0, n - 1);
            acc += img[(static_cast<std::size_t>(yy) * n + xx) * 3 + static_cast<std::size_t>(c)];
          }
        }
        out[(static_cast<std::size_t>(y) * n + x) * 3 + static_cast<std::size_t>(c)] = acc / ((2 * r + 1) * (2 * r + 1));
      }
    }
  }
  return out;
}

Tensor negate(const Tensor& img) {
  Tensor out(img.shape());
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = -img[i];
  return out;
}

}  // namespace

PairedDataset synth_task(TaskKind kind, std::uint64_t seed, int count, int size) {
  if (count < 10) throw std::invalid_argument("synth_task: count must be >= 10, got " + std::to_string(count));
  if (size != 32) throw std::invalid_argument("synth_task: unsupported size " + std::to_string(size));

  PairedDataset d;
  d.name = std::string(task_kind_name(kind));
  d.kind = kind;
  d.seed = seed;
  d.size = size;
  d.pairs.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    RngStream rng(seed, RngPurpose::data_scene, {static_cast<std::uint64_t>(kind), static_cast<std::uint64_t>(i)});
    Scene s = draw_scene(rng, size);
    switch (kind) {
      case TaskKind::invert: d.pairs.push_back({s.image, negate(s.image)}); break;
      case TaskKind::edge_fill: d.pairs.push_back({edge_map(s, size), s.image}); break;
      case TaskKind::checker_colorize: d.pairs.push_back({checker_gray(s.image, size), s.image}); break;
      case TaskKind::blur_sharpen: d.pairs.push_back({box_blur(s.image, size), s.image}); break;
    }
  }

  std::vector<std::size_t> order(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  RngStream split_rng(seed, RngPurpose::data_split, {static_cast<std::uint64_t>(kind)});
  split_rng.shuffle(order.begin(), order.end());
  const std::size_t val = std::max<std::size_t>(1, static_cast<std::size_t>(count) / 10);
  d.splits.assign(static_cast<std::size_t>(count), Split::train);
  for (std::size_t i = 0; i < val; ++i) d.splits[order[i]] = Split::val;
  return d;
}

void write_dataset(const PairedDataset& data, const std::filesystem::path& root) {
  for (std::size_t i = 0; i < data.pairs.size(); ++i) {
    const auto dir = root / data.name / (data.splits[i] == Split::train ? "train" : "val");
    std::filesystem::create_directories(dir);
    char stem[16];
    std::snprintf(stem, sizeof stem, "%04zu", i);
    write_ppm(data.pairs[i].condition, dir / (std::string(stem) + "_cond.ppm"));
    write_ppm(data.pairs[i].target, dir / (std::string(stem) + "_target.ppm"));
  }
}

}  // namespace pbgan
