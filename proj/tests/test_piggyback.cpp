#include <gtest/gtest.h>

#include "pbgan/accounting.hpp"
#include "pbgan/gan_models.hpp"
#include "pbgan/piggyback.hpp"
#include "pbgan/trainer.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace pbgan {
namespace {

using testing::column_space_residual;
using testing::enumerate_stored;
using testing::enumerate_trainable;
using testing::enumerate_trainable_layer;
using testing::grow_run;
using testing::random_tensor;
using testing::single_layer_spec;

TEST(Rational, Parse) {
  EXPECT_EQ(Rational::parse("1/4"), (Rational{1, 4}));
  EXPECT_EQ(Rational::parse("2/8"), (Rational{1, 4}));
  EXPECT_EQ(Rational::parse("1"), (Rational{1, 1}));
  EXPECT_EQ(Rational::parse("0/3"), (Rational{0, 1}));
  EXPECT_THROW(Rational::parse("5/4"), std::invalid_argument);
  EXPECT_THROW(Rational::parse("1/0"), std::invalid_argument);
  EXPECT_THROW(Rational::parse("a/4"), std::invalid_argument);
  EXPECT_THROW(Rational::parse("-1/4"), std::invalid_argument);
  EXPECT_THROW(Rational::parse(""), std::invalid_argument);
}

TEST(Partition, Examples) {
  Partition p = partition_channels(8, {1, 4});
  EXPECT_EQ(p.n_u, 2);
  EXPECT_EQ(p.n_p, 6);
  p = partition_channels(8, {1, 1});
  EXPECT_EQ(p.n_u, 8);
  EXPECT_EQ(p.n_p, 0);
  p = partition_channels(6, {1, 4});  // 1.5 rounds up
  EXPECT_EQ(p.n_u, 2);
  EXPECT_EQ(p.n_p, 4);
  p = partition_channels(8, {0, 1});
  EXPECT_EQ(p.n_u, 0);
  EXPECT_EQ(p.n_p, 8);
}

TEST(Partition, ClampsToKeepBothSidesNonEmpty) {
  EXPECT_EQ(partition_channels(3, {1, 8}).n_u, 1);   // 0.375 rounds to 0, clamped to 1
  EXPECT_EQ(partition_channels(3, {7, 8}).n_u, 2);   // 2.625 rounds to 3, clamped to 2
  EXPECT_EQ(partition_channels(1, {1, 2}).n_u, 1);   // no room for both sides
  EXPECT_THROW(partition_channels(0, {1, 4}), std::invalid_argument);
  EXPECT_THROW(partition_channels(4, {5, 4}), std::invalid_argument);
}

TEST(Partition, MatchesRoundingOracleExhaustively) {
  for (int c = 2; c <= 64; ++c)
    for (std::uint32_t den = 1; den <= 16; ++den)
      for (std::uint32_t num = 0; num <= den; ++num) {
        const Partition p = partition_channels(c, {num, den});
        const double exact = static_cast<double>(num) * c / den;
        int expect = static_cast<int>(std::floor(exact + 0.5));
        if (num > 0 && num < den) expect = std::clamp(expect, 1, c - 1);
        EXPECT_EQ(p.n_u, expect) << c << " " << num << "/" << den;
        EXPECT_EQ(p.n_u + p.n_p, c);
      }
}

TEST(ReshapeR, ExtentsAndRoundTrip) {
  const FilterTensor f(random_tensor({3, 3, 4, 8}, 1));
  EXPECT_EQ(reshape_R(f).shape(), (Shape{36, 8}));
  const FilterTensor one(Tensor({1, 1, 1, 1}, {0.7}));
  EXPECT_EQ(reshape_R(one).values(), std::vector<double>{0.7});
  const FilterTensor g(random_tensor({2, 2, 3, 5}, 2));
  EXPECT_TRUE(reshape_R_inv(reshape_R(g), g.geometry()).bitwise_equal(g));
}

TEST(ReshapeR, ColumnIsFlattenedFilter) {
  const FilterTensor f(random_tensor({2, 3, 2, 4}, 3));
  const Tensor r = reshape_R(f);
  for (int j = 0; j < 4; ++j)
    for (int row = 0; row < 12; ++row) {
      const int a = row / 6, b = (row / 2) % 3, c = row % 2;
      EXPECT_EQ(r[static_cast<std::size_t>(row) * 4 + j], f.tensor()[((static_cast<std::size_t>(a) * 3 + b) * 2 + c) * 4 + j]);
    }
}

FilterBank bank_with_width(FilterGeometry geo, int width, std::uint64_t seed) {
  FilterBank b(0, geo);
  return b.expanded(FilterTensor(random_tensor({geo.kw, geo.kh, geo.c_in, width}, seed)), 1);
}

TEST(ComposeFilters, Extents) {
  const FilterGeometry geo{3, 3, 4};
  FilterBank bank = bank_with_width(geo, 8, 1);
  bank = bank.expanded(FilterTensor(random_tensor({3, 3, 4, 2}, 2)), 2);
  TaskLayerParams p;
  p.unconstrained = FilterTensor(random_tensor({3, 3, 4, 2}, 3));
  p.piggyback_weight = random_tensor({10, 6}, 4);
  p.trained_bank_width = 10;
  p.bias = Tensor({8});
  EXPECT_EQ(compose_filters(bank, p).tensor().shape(), (Shape{3, 3, 4, 8}));
}

TEST(ComposeFilters, TaskOneIsUnconstrainedBlock) {
  TaskLayerParams p;
  p.unconstrained = FilterTensor(random_tensor({3, 3, 4, 8}, 5));
  p.bias = Tensor({8});
  EXPECT_TRUE(compose_filters(FilterBank(0, {3, 3, 4}), p).bitwise_equal(*p.unconstrained));
}

TEST(ComposeFilters, OneHotWeightsSelectBankFilters) {
  const FilterGeometry geo{2, 2, 3};
  const FilterBank bank = bank_with_width(geo, 5, 6);
  const std::vector<int> pick = {4, 0, 2};
  Tensor w({5, 3});
  for (int j = 0; j < 3; ++j) w[static_cast<std::size_t>(pick[static_cast<std::size_t>(j)]) * 3 + j] = 1.0;
  TaskLayerParams p;
  p.piggyback_weight = w;
  p.trained_bank_width = 5;
  p.bias = Tensor({3});
  const Tensor composed = reshape_R(compose_filters(bank, p));
  const Tensor r = bank.prefix_matrix(5);
  for (int row = 0; row < geo.rows(); ++row)
    for (int j = 0; j < 3; ++j) {
      EXPECT_EQ(composed[static_cast<std::size_t>(row) * 3 + j],
                r[static_cast<std::size_t>(row) * 5 + pick[static_cast<std::size_t>(j)]]);
    }
}

TEST(ComposeFilters, UsesOnlyTrainedPrefix) {
  const FilterGeometry geo{2, 2, 2};
  FilterBank bank = bank_with_width(geo, 4, 7);
  TaskLayerParams p;
  p.unconstrained = FilterTensor(random_tensor({2, 2, 2, 1}, 8));
  p.piggyback_weight = random_tensor({4, 3}, 9);
  p.trained_bank_width = 4;
  p.bias = Tensor({4});
  const FilterTensor before = compose_filters(bank, p);
  bank = bank.expanded(FilterTensor(random_tensor({2, 2, 2, 1}, 10)), 2);
  EXPECT_TRUE(compose_filters(bank, p).bitwise_equal(before));
}

TEST(ComposeFilters, Errors) {
  const FilterBank bank = bank_with_width({2, 2, 2}, 4, 11);
  TaskLayerParams p;
  p.piggyback_weight = random_tensor({6, 3}, 12);
  p.trained_bank_width = 6;
  p.bias = Tensor({3});
  EXPECT_THROW(compose_filters(bank, p), ShapeError);  // bank narrower than trained width
  p.trained_bank_width = 4;
  EXPECT_THROW(compose_filters(bank, p), ShapeError);  // W rows disagree with recorded width
  TaskLayerParams q;
  q.unconstrained = FilterTensor(random_tensor({3, 3, 2, 2}, 13));
  q.piggyback_weight = random_tensor({4, 1}, 14);
  q.trained_bank_width = 4;
  q.bias = Tensor({3});
  EXPECT_THROW(compose_filters(bank, q), ShapeError);  // geometry mismatch
}

TEST(ComposeFilters, BankReceivesNoGradient) {
  const FilterGeometry geo{2, 2, 2};
  const FilterBank bank = bank_with_width(geo, 4, 15);
  Graph g;
  const Var u = g.leaf(random_tensor({2, 2, 2, 1}, 16));
  const Var b = g.constant(bank.prefix_matrix(4));
  const Var w = g.leaf(random_tensor({4, 3}, 17));
  g.backward(sum(square(compose_filters(geo, u, b, w))));
  EXPECT_FALSE(g.has_grad(b));
  EXPECT_EQ(max_abs_diff(g.grad(b), Tensor({8, 4})), 0.0);
  EXPECT_GT(max_abs_diff(g.grad(w), Tensor({4, 3})), 0.0);
}

TEST(ComposeFilters, LambdaZeroStaysInBankColumnSpace) {
  const FilterGeometry geo{3, 3, 4};
  const FilterBank bank = bank_with_width(geo, 8, 18);
  TaskLayerParams p;
  p.piggyback_weight = random_tensor({8, 8}, 19);
  p.trained_bank_width = 8;
  p.bias = Tensor({8});
  const Tensor composed = reshape_R(compose_filters(bank, p));
  EXPECT_LE(column_space_residual(bank.prefix_matrix(8), composed), 1e-10);
  // Control: a random matrix is far from the 8-dimensional column space.
  EXPECT_GT(column_space_residual(bank.prefix_matrix(8), random_tensor({36, 2}, 20)), 1e-2);
}

TEST(ExpandBank, WidthAndImmutability) {
  const FilterGeometry geo{3, 3, 4};
  const FilterBank b1 = bank_with_width(geo, 8, 21);
  const FilterBank b2 = expand_bank(b1, FilterTensor(random_tensor({3, 3, 4, 2}, 22)), 2);
  EXPECT_EQ(b1.width(), 8);
  EXPECT_EQ(b2.width(), 10);
  EXPECT_TRUE(b2.blocks()[0].bitwise_equal(b1.blocks()[0]));
  EXPECT_EQ(b2.block_tasks(), (std::vector<int>{1, 2}));
}

TEST(ExpandBank, Errors) {
  const FilterBank b = bank_with_width({3, 3, 4}, 8, 23);
  EXPECT_THROW(expand_bank(b, FilterTensor(random_tensor({3, 3, 2, 2}, 24)), 2), ShapeError);
  EXPECT_THROW(expand_bank(b, FilterTensor(random_tensor({3, 3, 4, 2}, 25)), 1), std::logic_error);
}

TEST(ExpandBank, WidthFormulaWhenIntegral) {
  // c_out = 8, lambda = 1/4: (1 + (n - 1) / 4) * 8 = 8 + 2 (n - 1).
  RunState run = grow_run(single_layer_spec(), {1, 4}, TrainMode::piggyback, 5);
  EXPECT_EQ(run.banks[0].width(), 16);
  EXPECT_EQ(run.banks[0].blocks().size(), 5u);
}

TEST(TrainableSet, TaskOneIsFullModel) {
  RunState run = grow_run(single_layer_spec(), {1, 4}, TrainMode::piggyback, 1);
  EXPECT_EQ(enumerate_trainable(run), run.spec.generator_param_count());
  std::size_t disc = 0;
  for (const ParamRef& r : trainable_set(run, 1)) {
    if (!r.in_generator()) disc += r.tensor->size();
  }
  EXPECT_EQ(disc, run.spec.discriminator_param_count());
}

TEST(TrainableSet, SingleLayerCounts) {
  RunState run = grow_run(single_layer_spec(), {1, 4}, TrainMode::piggyback, 2);
  EXPECT_EQ(enumerate_trainable_layer(run, 0), 128u);  // 72 + 48 + 8
  EXPECT_EQ(run.spec.generator[0].param_count(), 296u);
  RunState run3 = grow_run(single_layer_spec(), {1, 4}, TrainMode::piggyback, 3);
  EXPECT_EQ(enumerate_trainable_layer(run3, 0), 140u);  // 72 + 60 + 8
  RunState pf = grow_run(single_layer_spec(), {1, 4}, TrainMode::pure_factorization, 4);
  EXPECT_EQ(enumerate_trainable_layer(pf, 0), 8u * 8u + 8u);
}

TEST(TrainableSet, ExcludesBankAndEarlierTasks) {
  RunState run = grow_run(reference_spec(32), {1, 4}, TrainMode::piggyback, 3);
  std::vector<const Tensor*> frozen;
  for (const FilterBank& b : run.banks)
    for (const FilterTensor& f : b.blocks()) frozen.push_back(&f.tensor());
  for (int t = 1; t <= 2; ++t) {
    const TaskRecord& rec = run.task(t);
    for (const TaskLayerParams& p : rec.shared) {
      if (p.unconstrained) frozen.push_back(&p.unconstrained->tensor());
      if (p.piggyback_weight) frozen.push_back(&*p.piggyback_weight);
      frozen.push_back(&p.bias);
    }
    for (const DenseLayer& d : rec.task_specific) frozen.push_back(&d.filters);
  }
  for (const ParamRef& r : trainable_set(run, 3)) {
    EXPECT_EQ(std::find(frozen.begin(), frozen.end(), r.tensor), frozen.end());
  }
  EXPECT_THROW(trainable_set(run, 2), std::invalid_argument);
}

TEST(ParamCount, MatchesEnumeration) {
  for (const ModelSpec& spec : {single_layer_spec(), reference_spec(32)}) {
    for (Rational lam : {Rational{0, 1}, Rational{1, 8}, Rational{1, 4}, Rational{1, 2}, Rational{1, 1}}) {
      for (TrainMode mode : {TrainMode::piggyback, TrainMode::pure_factorization, TrainMode::full}) {
        for (int n = 1; n <= 5; ++n) {
          RunState run = grow_run(spec, lam, mode, n);
          const ParamCount c = param_count(spec, n, lam, mode);
          EXPECT_EQ(c.trainable, enumerate_trainable(run)) << lam.str() << " " << n;
          EXPECT_EQ(c.stored_cumulative, enumerate_stored(run)) << lam.str() << " " << n;
        }
      }
    }
  }
}

TEST(ParamCount, Errors) {
  EXPECT_THROW(param_count(reference_spec(32), 0, {1, 4}, TrainMode::piggyback), std::invalid_argument);
  EXPECT_THROW(param_count(reference_spec(32), 2, {1, 4}, TrainMode::sequential_finetune), std::invalid_argument);
}

TEST(ShapeClosure, ComposedFiltersMatchTaskOneForAllLambdas) {
  const ModelSpec spec = reference_spec(32);
  for (Rational lam : {Rational{0, 1}, Rational{1, 8}, Rational{1, 4}, Rational{1, 2}, Rational{1, 1}}) {
    RunState run = RunState::create(spec, lam, 3);
    TrainConfig cfg;
    std::vector<int> prev_width(run.banks.size(), 0);
    for (int n = 1; n <= 5; ++n) {
      begin_task(run, DataRecipe{}, cfg);
      finish_task(run);
      const std::vector<int> shared = spec.shared_layers();
      for (std::size_t s = 0; s < shared.size(); ++s) {
        const LayerSpec& l = spec.generator[static_cast<std::size_t>(shared[s])];
        const FilterTensor f = compose_filters(run.banks[s], run.task(n).shared[s]);
        EXPECT_EQ(f.tensor().shape(), l.filter_shape());
        const int expected = n == 1 ? l.c_out : prev_width[s] + partition_channels(l.c_out, lam).n_u;
        EXPECT_EQ(run.banks[s].width(), expected) << "lambda " << lam.str() << " task " << n;
        prev_width[s] = run.banks[s].width();
      }
      const GeneratorInstance g = build_generator(run, n);
      EXPECT_EQ(generate(g, Tensor({32, 32, 3})).shape(), (Shape{32, 32, 3}));
    }
  }
}

}  // namespace
}  // namespace pbgan
