#include "pbgan/piggyback.hpp"

#include <algorithm>
#include <charconv>
#include <stdexcept>

namespace pbgan {

Rational Rational::parse(const std::string& text) {
  auto parse_u32 = [&](std::string_view part) {
    std::uint32_t v = 0;
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (part.empty() || ec != std::errc{} || ptr != part.data() + part.size()) {
      throw std::invalid_argument("malformed fraction '" + text + "'");
    }
    return v;
  };
  const std::string_view sv(text);
  const auto slash = sv.find('/');
  Rational r;
  if (slash == std::string_view::npos) {
    r.num = parse_u32(sv);
    r.den = 1;
  } else {
    r.num = parse_u32(sv.substr(0, slash));
    r.den = parse_u32(sv.substr(slash + 1));
  }
  if (r.den == 0) throw std::invalid_argument("fraction '" + text + "' has zero denominator");
  if (r.num > r.den) throw std::invalid_argument("lambda " + text + " is outside [0, 1]");
  return r;
}

Partition partition_channels(int c_out, Rational lambda) {
  if (c_out < 1) throw std::invalid_argument("partition_channels: c_out must be >= 1");
  if (lambda.den == 0 || lambda.num > lambda.den) {
    throw std::invalid_argument("partition_channels: lambda " + lambda.str() + " is outside [0, 1]");
  }
  Partition p{lambda, 0, 0};
  if (lambda.is_zero()) {
    p.n_u = 0;
  } else if (lambda.is_one()) {
    p.n_u = c_out;
  } else {
    // floor(lambda * c_out + 1/2) in exact integer arithmetic.
    const std::uint64_t twice = 2ULL * lambda.num * static_cast<std::uint64_t>(c_out) + lambda.den;
    int rounded = static_cast<int>(twice / (2ULL * lambda.den));
    p.n_u = c_out == 1 ? 1 : std::clamp(rounded, 1, c_out - 1);
  }
  p.n_p = c_out - p.n_u;
  return p;
}

FilterTensor::FilterTensor(Tensor t) : t_(std::move(t)) {
  if (t_.rank() != 4) throw ShapeError("filter tensor must be rank 4, got " + shape_str(t_.shape()));
}

Tensor reshape_R(const FilterTensor& f) {
  return f.tensor().reshaped({f.kw() * f.kh() * f.c_in(), f.c_out()});
}

FilterTensor reshape_R_inv(const Tensor& matrix, FilterGeometry geo) {
  if (matrix.rank() != 2 || matrix.dim(0) != geo.rows()) {
    throw ShapeError("reshape_R_inv: matrix " + shape_str(matrix.shape()) + " does not have " +
                     std::to_string(geo.rows()) + " rows");
  }
  return FilterTensor(matrix.reshaped({geo.kw, geo.kh, geo.c_in, matrix.dim(1)}));
}

Tensor FilterBank::prefix_matrix(int width) const {
  if (width <= 0 || width > width_) {
    throw ShapeError("filter bank of layer " + std::to_string(layer_index_) + " has width " + std::to_string(width_) +
                     ", cannot take a prefix of " + std::to_string(width));
  }
  const std::size_t rows = static_cast<std::size_t>(geo_.rows());
  const std::size_t w = static_cast<std::size_t>(width);
  Tensor m({geo_.rows(), width});
  std::size_t col = 0;
  for (const FilterTensor& block : blocks_) {
    if (col >= w) break;
    const std::size_t bw = static_cast<std::size_t>(block.c_out());
    const std::size_t take = std::min(bw, w - col);
    const auto src = block.tensor().data();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < take; ++c) m[r * w + col + c] = src[r * bw + c];
    }
    col += take;
  }
  return m;
}

FilterBank FilterBank::expanded(FilterTensor block, int task_index) const {
  if (!(block.geometry() == geo_)) {
    throw ShapeError("expand_bank: block " + shape_str(block.tensor().shape()) + " does not match layer " +
                     std::to_string(layer_index_) + " geometry");
  }
  if (std::find(block_tasks_.begin(), block_tasks_.end(), task_index) != block_tasks_.end()) {
    throw std::logic_error("expand_bank: task " + std::to_string(task_index) + " already contributed to layer " +
                           std::to_string(layer_index_));
  }
  if (!block_tasks_.empty() && task_index < block_tasks_.back()) {
    throw std::logic_error("expand_bank: blocks must be appended in task order");
  }
  FilterBank next = *this;
  next.width_ += block.c_out();
  next.blocks_.push_back(std::move(block));
  next.block_tasks_.push_back(task_index);
  return next;
}

FilterBank expand_bank(const FilterBank& bank, FilterTensor new_unconstrained, int task_index) {
  return bank.expanded(std::move(new_unconstrained), task_index);
}

Var compose_filters(FilterGeometry geo, std::optional<Var> unconstrained, std::optional<Var> bank_matrix,
                    std::optional<Var> piggyback_weight) {
  if (bank_matrix.has_value() != piggyback_weight.has_value()) {
    throw std::invalid_argument("compose_filters: bank matrix and piggyback weight must be given together");
  }
  std::vector<Var> parts;
  if (unconstrained) {
    const Shape s = unconstrained->shape();
    if (s.size() != 4 || s[0] != geo.kw || s[1] != geo.kh || s[2] != geo.c_in) {
      throw ShapeError("compose_filters: unconstrained block " + shape_str(s) + " does not match layer geometry");
    }
    parts.push_back(*unconstrained);
  }
  if (piggyback_weight) {
    const Shape bs = bank_matrix->shape();
    const Shape ws = piggyback_weight->shape();
    if (bs.size() != 2 || bs[0] != geo.rows()) {
      throw ShapeError("compose_filters: bank matrix " + shape_str(bs) + " does not match layer geometry");
    }
    if (ws.size() != 2 || ws[0] != bs[1]) {
      throw ShapeError("compose_filters: piggyback weight " + shape_str(ws) + " does not match bank width " +
                       std::to_string(bs[1]));
    }
    Var mixed = matmul(*bank_matrix, *piggyback_weight);
    parts.push_back(reshape(mixed, {geo.kw, geo.kh, geo.c_in, ws[1]}));
  }
  if (parts.empty()) throw std::invalid_argument("compose_filters: layer has neither unconstrained nor piggyback filters");
  if (parts.size() == 1) return parts[0];
  return concat_last_axis(parts);
}

FilterTensor compose_filters(const FilterBank& bank, const TaskLayerParams& params) {
  const FilterGeometry geo = bank.geometry();
  if (params.piggyback_weight) {
    if (bank.width() < params.trained_bank_width) {
      throw ShapeError("compose_filters: bank width " + std::to_string(bank.width()) + " is narrower than trained width " +
                       std::to_string(params.trained_bank_width));
    }
    if (params.piggyback_weight->rank() != 2 || params.piggyback_weight->dim(0) != params.trained_bank_width) {
      throw ShapeError("compose_filters: piggyback weight rows do not equal trained bank width");
    }
  }
  if (!params.piggyback_weight && params.unconstrained) return *params.unconstrained;

  Graph g;
  std::optional<Var> u, b, w;
  if (params.unconstrained) u = g.constant(params.unconstrained->tensor());
  if (params.piggyback_weight) {
    b = g.constant(bank.prefix_matrix(params.trained_bank_width));
    w = g.constant(*params.piggyback_weight);
  }
  return FilterTensor(compose_filters(geo, u, b, w).value());
}

}  // namespace pbgan
