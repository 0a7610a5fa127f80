#pragma once

// Piggyback filter factorization.
//
// Every shared generator layer keeps a frozen bank of filter blocks. Task 1's
// filters are the first block. A later task n composes its c_out filters as
//
//   [ unconstrained (n_u filters) , R^-1( R(bank prefix) x W ) (n_p filters) ]
//
// where R flattens (kw, kh, c_in, c) filters into a (kw*kh*c_in, c) matrix
// and W is the task's piggyback weight matrix. Once task n finishes, its
// unconstrained block is appended to the bank. Bank blocks never change.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pbgan/autodiff.hpp"
#include "pbgan/tensor.hpp"

namespace pbgan {

/// Exact non-negative fraction num/den.
struct Rational {
  std::uint32_t num = 0;
  std::uint32_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }
  bool is_zero() const { return num == 0; }
  bool is_one() const { return num == den; }

  /// Parses "N/D" or "N". Throws std::invalid_argument on malformed input,
  /// zero denominator or a value outside [0, 1].
  static Rational parse(const std::string& text);

  friend bool operator==(const Rational& a, const Rational& b) {
    return static_cast<std::uint64_t>(a.num) * b.den == static_cast<std::uint64_t>(b.num) * a.den;
  }
};

/// Split of a layer's output channels into unconstrained and piggyback filters.
struct Partition {
  Rational lambda;
  int n_u = 0;
  int n_p = 0;
};

/// n_u = round(lambda * c_out), ties up, clamped to [1, c_out - 1] when
/// 0 < lambda < 1. A single-channel layer cannot be split and stays
/// unconstrained.
Partition partition_channels(int c_out, Rational lambda);

struct FilterGeometry {
  int kw = 0;
  int kh = 0;
  int c_in = 0;

  int rows() const { return kw * kh * c_in; }
  friend bool operator==(const FilterGeometry&, const FilterGeometry&) = default;
};

/// (kw, kh, c_in, c_out) filter block.
class FilterTensor {
 public:
  FilterTensor() = default;
  explicit FilterTensor(Tensor t);
  FilterTensor(FilterGeometry geo, int c_out) : FilterTensor(Tensor({geo.kw, geo.kh, geo.c_in, c_out})) {}

  int kw() const { return t_.dim(0); }
  int kh() const { return t_.dim(1); }
  int c_in() const { return t_.dim(2); }
  int c_out() const { return t_.dim(3); }
  FilterGeometry geometry() const { return {kw(), kh(), c_in()}; }

  const Tensor& tensor() const { return t_; }
  Tensor& tensor() { return t_; }

  bool bitwise_equal(const FilterTensor& o) const { return t_.bitwise_equal(o.t_); }

 private:
  Tensor t_;
};

/// R: column j is filter j flattened row-major over (kw, kh, c_in).
Tensor reshape_R(const FilterTensor& f);
/// Inverse of reshape_R for the given filter geometry.
FilterTensor reshape_R_inv(const Tensor& matrix, FilterGeometry geo);

/// Ordered, append-only collection of frozen unconstrained filter blocks for
/// one shared layer.
class FilterBank {
 public:
  FilterBank() = default;
  FilterBank(int layer_index, FilterGeometry geo) : layer_index_(layer_index), geo_(geo) {}

  int layer_index() const { return layer_index_; }
  FilterGeometry geometry() const { return geo_; }
  int width() const { return width_; }
  const std::vector<FilterTensor>& blocks() const { return blocks_; }
  const std::vector<int>& block_tasks() const { return block_tasks_; }

  /// R-image of the first `width` bank columns, a (kw*kh*c_in, width) matrix.
  Tensor prefix_matrix(int width) const;

  /// Returns a new bank with `block` appended as task `task_index`'s
  /// contribution. Earlier blocks are copied unchanged.
  FilterBank expanded(FilterTensor block, int task_index) const;

 private:
  int layer_index_ = 0;
  FilterGeometry geo_;
  int width_ = 0;
  std::vector<FilterTensor> blocks_;
  std::vector<int> block_tasks_;
};

FilterBank expand_bank(const FilterBank& bank, FilterTensor new_unconstrained, int task_index);

/// Per-task trainables of one shared layer.
struct TaskLayerParams {
  int task_index = 0;
  std::optional<FilterTensor> unconstrained;  // absent when n_u = 0
  std::optional<Tensor> piggyback_weight;     // (trained_bank_width, n_p); absent when n_p = 0
  Tensor bias;                                // [c_out]
  int trained_bank_width = 0;

  int n_u() const { return unconstrained ? unconstrained->c_out() : 0; }
  int n_p() const { return piggyback_weight ? piggyback_weight->dim(1) : 0; }
  int c_out() const { return n_u() + n_p(); }
};

/// Resolves a task's full filter block from the bank prefix it trained on.
FilterTensor compose_filters(const FilterBank& bank, const TaskLayerParams& params);

/// Differentiable composition. `bank_matrix` is the (kw*kh*c_in, width) R-image
/// of the bank prefix and should be a graph constant so no gradient reaches
/// the bank. Either operand group may be absent, but not both.
Var compose_filters(FilterGeometry geo, std::optional<Var> unconstrained, std::optional<Var> bank_matrix,
                    std::optional<Var> piggyback_weight);

}  // namespace pbgan
