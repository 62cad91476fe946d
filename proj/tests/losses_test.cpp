#include "sgts/losses.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "sgts/errors.hpp"
#include "test_util.hpp"

namespace sgts {
namespace {

using test::random_tensor;

Tensor uniform_probs(int classes, int h, int w) {
  return Tensor({classes, h, w}, 1.0 / classes);
}

Tensor random_probs(Rng& rng, int classes, int h, int w) {
  return kernels::softmax_channels(random_tensor({classes, h, w}, rng, -3.0, 3.0));
}

LabelMask random_mask(Rng& rng, int h, int w, int classes, double labeled) {
  LabelMask m(h, w);
  for (auto& v : m.labels) {
    v = rng.bernoulli(labeled) ? static_cast<std::uint8_t>(rng.uniform_int(0, classes - 1))
                               : kUnlabeled;
  }
  return m;
}

TEST(SparseSupervisionTest, SelectsLabeledPixels) {
  LabelMask m(1, 3);
  m.labels = {2, kUnlabeled, 0};
  const FusedSupervision s = sparse_supervision(m, 4);
  EXPECT_EQ(s.selection.count(), 2u);
  EXPECT_EQ(s.targets.at(2, 0, 0), 1.0);
  EXPECT_EQ(s.targets.at(0, 0, 2), 1.0);
  for (int c = 0; c < 4; ++c) EXPECT_EQ(s.targets.at(c, 0, 1), 0.0);
  m.labels[1] = 4;
  EXPECT_THROW(sparse_supervision(m, 4), DataError);
}

TEST(DiceLossTest, PerfectOverlapIsZero) {
  Rng rng(1);
  const LabelMask m = random_mask(rng, 4, 4, 4, 1.0);
  const FusedSupervision s = sparse_supervision(m, 4);
  EXPECT_EQ(dice_loss(s.targets, s.targets, s.selection), 0.0);
}

TEST(DiceLossTest, DisjointClassIsOne) {
  LabelMask m(1, 2, 1);
  const FusedSupervision s = sparse_supervision(m, 2);
  Tensor probs({2, 1, 2}, 0.0);
  probs.at(0, 0, 0) = probs.at(0, 0, 1) = 1.0;
  // class 1: 1 - 0 / (2 + 0) = 1; class 0: 1 - 0 / (0 + 2) = 1.
  EXPECT_EQ(dice_loss(probs, s.targets, s.selection), 1.0);
}

// Target of 4 pixels, prediction of 4 pixels, 2 shared: each class term is
// 1 - 2*2 / (4 + 4) = 0.5.
TEST(DiceLossTest, HalfOverlap) {
  LabelMask m(2, 4, 0);
  for (int j = 0; j < 4; ++j) m.labels[j] = 1;
  const FusedSupervision s = sparse_supervision(m, 2);
  Tensor probs({2, 2, 4}, 0.0);
  probs.at(1, 0, 0) = probs.at(1, 0, 1) = probs.at(1, 1, 0) = probs.at(1, 1, 1) = 1.0;
  probs.at(0, 0, 2) = probs.at(0, 0, 3) = probs.at(0, 1, 2) = probs.at(0, 1, 3) = 1.0;
  EXPECT_NEAR(dice_loss(probs, s.targets, s.selection), 0.5, 1e-12);
}

// Probability 1 on the target class at 2 of its 4 pixels and 0 elsewhere:
// 1 - 2*2 / (4 + 2) = 1/3; the other class has a zero denominator and is skipped.
TEST(DiceLossTest, PartialCoverageSkipsEmptyClass) {
  const LabelMask m(2, 2, 0);
  const FusedSupervision s = sparse_supervision(m, 2);
  Tensor probs({2, 2, 2}, 0.0);
  probs.at(0, 0, 0) = probs.at(0, 0, 1) = 1.0;
  EXPECT_NEAR(dice_loss(probs, s.targets, s.selection), 1.0 / 3.0, 1e-12);
}

TEST(DiceLossTest, EmptySelectionIsError) {
  const LabelMask m(2, 2, kUnlabeled);
  const FusedSupervision s = sparse_supervision(m, 4);
  EXPECT_THROW(dice_loss(uniform_probs(4, 2, 2), s.targets, s.selection), DataError);
  EXPECT_THROW(cce_loss(uniform_probs(4, 2, 2), s.targets, s.selection), DataError);
}

TEST(CceLossTest, ClosedForms) {
  Rng rng(2);
  const LabelMask m = random_mask(rng, 4, 4, 4, 0.7);
  const FusedSupervision s = sparse_supervision(m, 4);
  EXPECT_NEAR(cce_loss(uniform_probs(4, 4, 4), s.targets, s.selection), std::log(4.0), 1e-9);
  EXPECT_EQ(cce_loss(s.targets, s.targets, s.selection), 0.0);

  LabelMask one(1, 1, 0);
  const FusedSupervision s1 = sparse_supervision(one, 4);
  Tensor wrong({4, 1, 1}, 0.0);
  wrong[1] = 1.0;
  const double clamped = cce_loss(wrong, s1.targets, s1.selection);
  EXPECT_TRUE(std::isfinite(clamped));
  EXPECT_NEAR(clamped, -std::log(1e-12), 1e-9);
  EXPECT_NEAR(clamped, 27.631021115928547, 1e-9);
}

TEST(SupervisedLossTest, ClosedFormAndDefinition) {
  const LabelMask m(4, 4, 2);
  const FusedSupervision s = sparse_supervision(m, 4);
  const Tensor u = uniform_probs(4, 4, 4);
  // Target class: 1 - 2(N/4) / (N/4 + N) = 0.6. The other three classes have
  // predicted mass N/4 and no target, so each contributes 1.
  const double dice = dice_loss(u, s.targets, s.selection);
  EXPECT_NEAR(dice, (0.6 + 3.0) / 4.0, 1e-12);
  EXPECT_EQ(supervised_loss(u, s.targets, s.selection),
            dice + cce_loss(u, s.targets, s.selection));

  // Same target, mass 1/4 on the target class only: the other classes have a
  // zero denominator, leaving 0.6 + ln 4.
  Tensor p2({4, 4, 4}, 0.0);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) p2.at(2, i, j) = 0.25;
  }
  EXPECT_NEAR(supervised_loss(p2, s.targets, s.selection), 1.9862943611198906, 1e-9);

  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const FusedSupervision r = sparse_supervision(random_mask(rng, 6, 6, 4, 0.5), 4);
    if (r.selection.count() == 0) continue;
    const Tensor p = random_probs(rng, 4, 6, 6);
    EXPECT_EQ(supervised_loss(p, r.targets, r.selection),
              dice_loss(p, r.targets, r.selection) + cce_loss(p, r.targets, r.selection));
  }
}

TEST(ConsistencyLossTest, ClosedForms) {
  LabelMask m(1, 1, 0);
  const FusedSupervision s = sparse_supervision(m, 4);
  Tensor p({4, 1, 1}, 0.0);
  p[0] = p[1] = 0.5;
  EXPECT_NEAR(consistency_loss(p, s), 0.125, 1e-15);
  EXPECT_EQ(consistency_loss(s.targets, s), 0.0);

  const FusedSupervision empty = sparse_supervision(LabelMask(2, 2, kUnlabeled), 4);
  EXPECT_EQ(consistency_loss(uniform_probs(4, 2, 2), empty), 0.0);
  EXPECT_EQ(consistency_loss_grad(uniform_probs(4, 2, 2), empty), Tensor({4, 2, 2}, 0.0));
}

TEST(TotalLossTest, Mixing) {
  EXPECT_EQ(total_loss(2.0, 1.0, 1.0), 2.0);
  EXPECT_EQ(total_loss(2.0, 1.0, 0.0), 1.0);
  EXPECT_NEAR(total_loss(2.0, 1.0, 0.9), 1.9, 1e-15);
}

TEST(LossPropertyTest, RangesAndInvarianceToUnselectedPixels) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const FusedSupervision s = sparse_supervision(random_mask(rng, 6, 6, 4, 0.5), 4);
    if (s.selection.count() == 0) continue;
    Tensor p = random_probs(rng, 4, 6, 6);
    const double d = dice_loss(p, s.targets, s.selection);
    const double ce = cce_loss(p, s.targets, s.selection);
    const double cons = consistency_loss(p, s);
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 1.0);
    EXPECT_GE(ce, 0.0);
    EXPECT_GE(cons, 0.0);

    const Tensor fresh = random_probs(rng, 4, 6, 6);
    for (std::size_t px = 0; px < 36; ++px) {
      if (s.selection.selected(px)) continue;
      for (int c = 0; c < 4; ++c) p[c * 36 + px] = fresh[c * 36 + px];
    }
    EXPECT_EQ(dice_loss(p, s.targets, s.selection), d);
    EXPECT_EQ(cce_loss(p, s.targets, s.selection), ce);
    EXPECT_EQ(consistency_loss(p, s), cons);
  }
}

TEST(LossGradientTest, MatchesFiniteDifferences) {
  Rng rng(5);
  const FusedSupervision s = sparse_supervision(random_mask(rng, 5, 5, 4, 0.6), 4);
  ASSERT_GT(s.selection.count(), 0u);
  const std::vector<Tensor> params = {random_tensor({4, 5, 5}, rng, -2.0, 2.0)};
  const std::vector<std::pair<const char*, LossBuilder>> builders = {
      {"dice", [&](Tape& t, std::span<const Var> p) {
         return dice_loss(t, softmax_channels(t, p[0]), s.targets, s.selection);
       }},
      {"cce", [&](Tape& t, std::span<const Var> p) {
         return cce_loss(t, softmax_channels(t, p[0]), s.targets, s.selection);
       }},
      {"consistency", [&](Tape& t, std::span<const Var> p) {
         return consistency_loss(t, softmax_channels(t, p[0]), s);
       }},
      {"total", [&](Tape& t, std::span<const Var> p) {
         Var probs = softmax_channels(t, p[0]);
         return total_loss(t, supervised_loss(t, probs, s.targets, s.selection),
                           consistency_loss(t, probs, s), 0.3);
       }},
  };
  for (const auto& [name, fn] : builders) {
    const GradCheckReport r = finite_diff_check(fn, params, 1e-5);
    EXPECT_TRUE(r.finite) << name;
    EXPECT_LT(r.max_rel_error, 1e-5) << name;
  }
}

}  // namespace
}  // namespace sgts
