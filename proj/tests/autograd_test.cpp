#include "sgts/autograd.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "sgts/errors.hpp"
#include "test_util.hpp"

namespace sgts {
namespace {

using test::probe;
using test::random_tensor;

TEST(Conv2dTest, OnesKernelWithPadding) {
  Tape tape;
  Var x = tape.constant(Tensor({1, 3, 3}, 1.0));
  Var k = tape.constant(Tensor({1, 1, 3, 3}, 1.0));
  Var b = tape.constant(Tensor({1}, 0.0));
  const Tensor& out = tape.value(conv2d(tape, x, k, b, 1, 1));
  ASSERT_EQ(out.shape(), (Shape{1, 3, 3}));
  EXPECT_DOUBLE_EQ(out.at(0, 1, 1), 9.0);
  EXPECT_DOUBLE_EQ(out.at(0, 0, 0), 4.0);
  EXPECT_DOUBLE_EQ(out.at(0, 2, 2), 4.0);
  EXPECT_DOUBLE_EQ(out.at(0, 0, 1), 6.0);
}

TEST(Conv2dTest, IdentityKernelIsBitwiseIdentity) {
  Rng rng(1);
  const Tensor x = random_tensor({1, 5, 7}, rng, -3.0, 3.0);
  const Tensor out = kernels::conv2d(x, Tensor({1, 1, 1, 1}, 1.0), Tensor({1}, 0.0), 1, 0);
  EXPECT_EQ(out, x);
}

TEST(Conv2dTest, ZeroKernelGivesBias) {
  Rng rng(2);
  const Tensor x = random_tensor({2, 4, 4}, rng);
  const Tensor out = kernels::conv2d(x, Tensor({3, 2, 3, 3}, 0.0),
                                     Tensor({3}, std::vector<double>{0.5, -1.0, 2.0}), 1, 1);
  for (int o = 0; o < 3; ++o) {
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) EXPECT_EQ(out.at(o, i, j), (o == 0 ? 0.5 : o == 1 ? -1.0 : 2.0));
    }
  }
}

TEST(Conv2dTest, StridedOutputShape) {
  const Tensor out = kernels::conv2d(Tensor({8, 64, 64}, 1.0), Tensor({16, 8, 3, 3}, 0.0),
                                     Tensor({16}, 0.0), 2, 1);
  EXPECT_EQ(out.shape(), (Shape{16, 32, 32}));
  const Tensor odd = kernels::conv2d(Tensor({1, 7, 5}, 1.0), Tensor({1, 1, 3, 3}, 0.0),
                                     Tensor({1}, 0.0), 2, 0);
  EXPECT_EQ(odd.shape(), (Shape{1, 3, 2}));
}

TEST(Conv2dTest, MatchesDirectSumOracle) {
  Rng rng(3);
  const Tensor x = random_tensor({2, 5, 6}, rng);
  const Tensor k = random_tensor({3, 2, 3, 3}, rng);
  const Tensor b = random_tensor({3}, rng);
  for (int stride : {1, 2}) {
    for (int pad : {0, 1}) {
      const Tensor out = kernels::conv2d(x, k, b, stride, pad);
      for (int o = 0; o < out.dim(0); ++o) {
        for (int i = 0; i < out.dim(1); ++i) {
          for (int j = 0; j < out.dim(2); ++j) {
            double expected = b[o];
            for (int c = 0; c < 2; ++c) {
              for (int u = 0; u < 3; ++u) {
                for (int v = 0; v < 3; ++v) {
                  const int ii = i * stride + u - pad, jj = j * stride + v - pad;
                  if (ii < 0 || ii >= 5 || jj < 0 || jj >= 6) continue;
                  expected += x.at(c, ii, jj) * k[((o * 2 + c) * 3 + u) * 3 + v];
                }
              }
            }
            EXPECT_NEAR(out.at(o, i, j), expected, 1e-12);
          }
        }
      }
    }
  }
}

TEST(Conv2dTest, ChannelMismatchIsShapeError) {
  EXPECT_THROW(kernels::conv2d(Tensor({2, 4, 4}), Tensor({1, 3, 3, 3}), Tensor({1}), 1, 1),
               ShapeError);
}

TEST(ReluTest, ClampsAndPasses) {
  Tape tape;
  Var x = tape.constant(Tensor({3}, std::vector<double>{-1.5, 2.0, 0.0}));
  const Tensor& y = tape.value(relu(tape, x));
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 2.0);
  EXPECT_EQ(y[2], 0.0);
}

TEST(ReluTest, GradientAtThreeMatchesFiniteDifference) {
  const std::vector<Tensor> params = {Tensor({1}, 3.0)};
  const LossBuilder loss = [](Tape& t, std::span<const Var> p) { return sum(t, relu(t, p[0])); };
  Tape tape;
  Var x = tape.parameter(params[0]);
  tape.backward(loss(tape, std::span<const Var>(&x, 1)));
  EXPECT_EQ(tape.grad(x)[0], 1.0);
  EXPECT_LT(finite_diff_check(loss, params).max_rel_error, 1e-6);
}

TEST(ReluTest, SubgradientAtZeroIsZero) {
  Tape tape;
  Var x = tape.parameter(Tensor({1}, 0.0));
  tape.backward(sum(tape, relu(tape, x)));
  EXPECT_EQ(tape.grad(x)[0], 0.0);
}

TEST(UpsampleTest, ReplicatesSinglePixel) {
  const Tensor out = kernels::nearest_upsample2x(Tensor({1, 1, 1}, 5.0));
  EXPECT_EQ(out, Tensor({1, 2, 2}, 5.0));
}

TEST(UpsampleTest, BlockMeanIsLeftInverse) {
  Rng rng(4);
  const Tensor x = random_tensor({2, 3, 4}, rng);
  const Tensor up = kernels::nearest_upsample2x(x);
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 4; ++j) {
        const double mean = (up.at(c, 2 * i, 2 * j) + up.at(c, 2 * i + 1, 2 * j) +
                             up.at(c, 2 * i, 2 * j + 1) + up.at(c, 2 * i + 1, 2 * j + 1)) / 4.0;
        EXPECT_EQ(mean, x.at(c, i, j));
      }
    }
  }
}

TEST(UpsampleTest, BackwardSumsBlocks) {
  Tape tape;
  Var x = tape.parameter(Tensor({2, 2, 3}, 0.3));
  tape.backward(sum(tape, nearest_upsample2x(tape, x)));
  EXPECT_EQ(tape.grad(x), Tensor({2, 2, 3}, 4.0));
}

TEST(ConcatTest, OrderingAndSlicing) {
  Rng rng(5);
  const Tensor a = random_tensor({2, 3, 3}, rng);
  const Tensor b = random_tensor({3, 3, 3}, rng);
  const Tensor out = kernels::concat_channels(a, b);
  ASSERT_EQ(out.shape(), (Shape{5, 3, 3}));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(out[i], a[i]);
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_EQ(out[a.size() + i], b[i]);

  const Tensor with_zero = kernels::concat_channels(a, Tensor({1, 3, 3}, 0.0));
  EXPECT_EQ(Tensor(a.shape(), std::vector<double>(with_zero.data().begin(),
                                                  with_zero.data().begin() + a.size())),
            a);
}

TEST(ConcatTest, BackwardRoutesChannelThreeToSecondInputChannelOne) {
  Tape tape;
  Var a = tape.parameter(Tensor({2, 2, 2}, 1.0));
  Var b = tape.parameter(Tensor({3, 2, 2}, 1.0));
  Var out = concat_channels(tape, a, b);
  Tensor weights({5, 2, 2}, 0.0);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) weights.at(3, i, j) = 1.0 + i * 2 + j;
  }
  tape.backward(probe(tape, out, weights));
  EXPECT_EQ(tape.grad(a), Tensor({2, 2, 2}, 0.0));
  const Tensor gb = tape.grad(b);
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) EXPECT_EQ(gb.at(c, i, j), c == 1 ? 1.0 + i * 2 + j : 0.0);
    }
  }
}

TEST(ConcatTest, SpatialMismatchIsShapeError) {
  EXPECT_THROW(kernels::concat_channels(Tensor({1, 2, 2}), Tensor({1, 2, 3})), ShapeError);
}

TEST(SoftmaxTest, UniformLogits) {
  const Tensor p = kernels::softmax_channels(Tensor({4, 1, 1}, 0.0));
  for (int c = 0; c < 4; ++c) EXPECT_EQ(p[c], 0.25);
}

TEST(SoftmaxTest, LargeLogitDoesNotOverflow) {
  const Tensor p =
      kernels::softmax_channels(Tensor({4, 1, 1}, std::vector<double>{1000.0, 0.0, 0.0, 0.0}));
  EXPECT_TRUE(p.all_finite());
  EXPECT_NEAR(p[0], 1.0, 1e-12);
  for (int c = 1; c < 4; ++c) EXPECT_NEAR(p[c], 0.0, 1e-12);
}

TEST(SoftmaxTest, MatchesExtendedPrecisionOracle) {
  const Tensor p =
      kernels::softmax_channels(Tensor({4, 1, 1}, std::vector<double>{1.0, 2.0, 3.0, 4.0}));
  long double denom = 0.0L;
  for (int c = 1; c <= 4; ++c) denom += std::exp(static_cast<long double>(c));
  for (int c = 0; c < 4; ++c) {
    const long double expected = std::exp(static_cast<long double>(c + 1)) / denom;
    EXPECT_NEAR(p[c], static_cast<double>(expected), 1e-12);
  }
}

TEST(SoftmaxTest, PixelsLieOnSimplex) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor p = kernels::softmax_channels(random_tensor({5, 4, 3}, rng, -30.0, 30.0));
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int c = 0; c < 5; ++c) {
          EXPECT_GE(p.at(c, i, j), 0.0);
          s += p.at(c, i, j);
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
    }
  }
}

TEST(FiniteDiffTest, Quadratic) {
  const std::vector<Tensor> params = {Tensor({2}, std::vector<double>{1.0, -2.0})};
  const LossBuilder loss = [](Tape& t, std::span<const Var> p) {
    const Tensor& v = t.value(p[0]);
    Tensor g(v.shape());
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      s += v[i] * v[i];
      g[i] = 2.0 * v[i];
    }
    return scalar_function(t, p[0], s, g);
  };
  Tape tape;
  Var x = tape.parameter(params[0]);
  tape.backward(loss(tape, std::span<const Var>(&x, 1)));
  EXPECT_EQ(tape.grad(x), Tensor({2}, std::vector<double>{2.0, -4.0}));
  EXPECT_LT(finite_diff_check(loss, params, 1e-5).max_rel_error, 1e-8);
}

TEST(FiniteDiffTest, ConstantLossHasZeroError) {
  const std::vector<Tensor> params = {Tensor({3}, 1.0)};
  const LossBuilder loss = [](Tape& t, std::span<const Var>) {
    return t.constant(Tensor::scalar(7.0));
  };
  const GradCheckReport r = finite_diff_check(loss, params);
  EXPECT_TRUE(r.finite);
  EXPECT_EQ(r.max_rel_error, 0.0);
}

TEST(FiniteDiffTest, NonFiniteLossReportsFailure) {
  const std::vector<Tensor> params = {Tensor({1}, 1.0)};
  const LossBuilder loss = [](Tape& t, std::span<const Var> p) {
    return scalar_function(t, p[0], std::nan(""), Tensor({1}, 0.0));
  };
  EXPECT_FALSE(finite_diff_check(loss, params).finite);
  EXPECT_THROW(finite_diff_check(loss, params, 0.0), RangeError);
}

// Every differentiable op against central differences on seeded random inputs.
TEST(FiniteDiffTest, EveryOperation) {
  Rng rng(7);
  struct Case {
    const char* name;
    std::vector<Tensor> params;
    std::function<Var(Tape&, std::span<const Var>)> build;
  };
  std::vector<Case> cases;
  for (int stride : {1, 2}) {
    for (int pad : {0, 1}) {
      Tensor w = random_tensor({3, 4, 4}, rng);
      cases.push_back({"conv2d",
                       {random_tensor({2, 6, 6}, rng), random_tensor({3, 2, 3, 3}, rng),
                        random_tensor({3}, rng)},
                       [stride, pad, w](Tape& t, std::span<const Var> p) mutable {
                         Var out = conv2d(t, p[0], p[1], p[2], stride, pad);
                         Tensor ww(t.value(out).shape());
                         for (std::size_t i = 0; i < ww.size(); ++i) ww[i] = w[i % w.size()];
                         return probe(t, out, ww);
                       }});
    }
  }
  {
    Tensor w = random_tensor({2, 3, 3}, rng);
    cases.push_back({"relu", {random_tensor({2, 3, 3}, rng)},
                     [w](Tape& t, std::span<const Var> p) { return probe(t, relu(t, p[0]), w); }});
  }
  {
    Tensor w = random_tensor({2, 4, 6}, rng);
    cases.push_back({"upsample", {random_tensor({2, 2, 3}, rng)},
                     [w](Tape& t, std::span<const Var> p) {
                       return probe(t, nearest_upsample2x(t, p[0]), w);
                     }});
  }
  {
    Tensor w = random_tensor({5, 2, 2}, rng);
    cases.push_back({"concat", {random_tensor({2, 2, 2}, rng), random_tensor({3, 2, 2}, rng)},
                     [w](Tape& t, std::span<const Var> p) {
                       return probe(t, concat_channels(t, p[0], p[1]), w);
                     }});
  }
  {
    Tensor w = random_tensor({4, 3, 3}, rng);
    cases.push_back({"softmax", {random_tensor({4, 3, 3}, rng, -2.0, 2.0)},
                     [w](Tape& t, std::span<const Var> p) {
                       return probe(t, softmax_channels(t, p[0]), w);
                     }});
  }
  for (const Case& c : cases) {
    const GradCheckReport r = finite_diff_check(c.build, c.params, 1e-5);
    EXPECT_TRUE(r.finite) << c.name;
    EXPECT_LT(r.max_rel_error, 1e-4) << c.name;
  }
}

// x feeding two consumers receives the sum of both contributions; compare
// against the same graph built from two independent copies of x.
TEST(TapeTest, GradientAccumulatesAcrossConsumers) {
  Rng rng(8);
  const Tensor x0 = random_tensor({2, 3, 3}, rng);
  const Tensor k = random_tensor({2, 2, 3, 3}, rng);
  const Tensor b = random_tensor({2}, rng);
  const Tensor w = random_tensor({4, 3, 3}, rng);

  Tape shared;
  Var x = shared.parameter(x0);
  Var kv = shared.constant(k), bv = shared.constant(b);
  Var y = concat_channels(shared, relu(shared, conv2d(shared, x, kv, bv, 1, 1)),
                          softmax_channels(shared, x));
  shared.backward(probe(shared, y, w));

  Tape split;
  Var x1 = split.parameter(x0);
  Var x2 = split.parameter(x0);
  Var kv2 = split.constant(k), bv2 = split.constant(b);
  Var y2 = concat_channels(split, relu(split, conv2d(split, x1, kv2, bv2, 1, 1)),
                           softmax_channels(split, x2));
  split.backward(probe(split, y2, w));
  Tensor expected = split.grad(x1);
  expected.axpy(1.0, split.grad(x2));

  const Tensor got = shared.grad(x);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], expected[i], 1e-14);
}

TEST(TapeTest, ConstantsReceiveNoGradient) {
  Tape tape;
  Var c = tape.constant(Tensor({2}, 1.0));
  Var p = tape.parameter(Tensor({2}, 2.0));
  tape.backward(sum(tape, concat_channels(tape, tape.constant(Tensor({1, 1, 1}, 0.0)),
                                          tape.constant(Tensor({1, 1, 1}, 0.0)))));
  EXPECT_EQ(tape.grad(c), Tensor({2}, 0.0));
  EXPECT_EQ(tape.grad(p), Tensor({2}, 0.0));
}

TEST(TensorTest, ShapeValidation) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1.0, 2.0, 3.0}), ShapeError);
  EXPECT_THROW(Tensor({0, 2}), ShapeError);
  EXPECT_EQ(Tensor({2, 3, 4}).size(), 24u);
}

}  // namespace
}  // namespace sgts
