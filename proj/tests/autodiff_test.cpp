#include "uapr/autodiff.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "gradcheck.hpp"

namespace uapr {
namespace {

using testing::gradcheck;
using testing::project;
using testing::uniform_tensor;

constexpr int kProbes = 100;
constexpr double kTol = 1e-3;

TEST(Conv2d, OnesTimesScalarKernel) {
  Tape tape;
  Var x = tape.constant(Tensor(Shape{1, 1, 3, 3}, 1.0));
  Var k = tape.constant(Tensor(Shape{1, 1, 1, 1}, 2.0));
  Var y = conv2d(x, k, 1, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
  for (Index i = 0; i < 9; ++i) EXPECT_EQ(y.value()[i], 2.0);
}

TEST(Conv2d, ZeroKernelGivesZeroOutputAndGradient) {
  std::mt19937_64 rng(1);
  Tape tape;
  Var x = tape.variable(uniform_tensor(Shape{1, 2, 5, 5}, rng));
  Var k = tape.constant(Tensor(Shape{3, 2, 3, 3}));
  Var y = conv2d(x, k, 1, 1);
  EXPECT_EQ(y.value().values().abs().maxCoeff(), 0.0);
  tape.backward(sum(y));
  EXPECT_EQ(tape.grad(x).values().abs().maxCoeff(), 0.0);
}

TEST(Conv2d, ChannelMismatchIsDimensionError) {
  Tape tape;
  Var x = tape.constant(Tensor(Shape{1, 2, 5, 5}));
  Var k = tape.constant(Tensor(Shape{3, 3, 3, 3}));
  EXPECT_THROW(conv2d(x, k, 1, 0), DimensionError);
}

TEST(Conv2d, OutputGeometryWithStrideAndPadding) {
  Tape tape;
  Var x = tape.constant(Tensor(Shape{2, 3, 9, 7}));
  Var k = tape.constant(Tensor(Shape{4, 3, 3, 3}));
  EXPECT_EQ(conv2d(x, k, 2, 1).shape(), (Shape{2, 4, 5, 4}));
}

TEST(Conv2d, GradientMatchesFiniteDifferences) {
  auto r = gradcheck(
      [](Tape&, const std::vector<Var>& v) { return project(conv2d(v[0], v[1], 1, 0)); },
      [](std::mt19937_64& rng) {
        return std::vector<Tensor>{uniform_tensor(Shape{1, 2, 5, 5}, rng),
                                   uniform_tensor(Shape{3, 2, 3, 3}, rng)};
      },
      kProbes, 1e-4);
  EXPECT_EQ(r.failures, 0) << "max error " << r.max_error;
}

TEST(Conv2d, StridedPaddedGradientMatchesFiniteDifferences) {
  auto r = gradcheck(
      [](Tape&, const std::vector<Var>& v) { return project(conv2d(v[0], v[1], 2, 1)); },
      [](std::mt19937_64& rng) {
        return std::vector<Tensor>{uniform_tensor(Shape{2, 3, 7, 6}, rng),
                                   uniform_tensor(Shape{4, 3, 3, 3}, rng)};
      },
      kProbes, kTol);
  EXPECT_EQ(r.failures, 0) << "max error " << r.max_error;
}

TEST(MacPool, PicksMaximum) {
  Tape tape;
  Var x = tape.constant(Tensor(Shape{1, 1, 2, 2}, {1, 3, 2, 4}));
  EXPECT_EQ(mac_pool(x).value()[0], 4.0);
}

TEST(MacPool, TieSendsGradientToFirstPosition) {
  Tape tape;
  Var x = tape.variable(Tensor(Shape{1, 1, 2, 2}, 5.0));
  Var y = mac_pool(x);
  EXPECT_EQ(y.value()[0], 5.0);
  tape.backward(sum(y));
  const Tensor g = tape.grad(x);
  EXPECT_EQ(g[0], 1.0);
  EXPECT_EQ(g.values().sum(), 1.0);
}

TEST(MacPool, GradientMatchesFiniteDifferences) {
  auto r = gradcheck([](Tape&, const std::vector<Var>& v) { return project(mac_pool(v[0])); },
                     [](std::mt19937_64& rng) {
                       // Distinct, well-separated entries keep probes off the argmax kink.
                       Tensor t(Shape{2, 3, 4, 5});
                       for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i % 20) / 20.0;
                       for (Index c = 0; c < 6; ++c) {
                         std::shuffle(t.data() + c * 20, t.data() + (c + 1) * 20, rng);
                       }
                       return std::vector<Tensor>{t};
                     },
                     kProbes, 1e-4);
  EXPECT_EQ(r.failures, 0) << "max error " << r.max_error;
}

TEST(GemPool, UnitExponentIsMean) {
  Tape tape;
  Var x = tape.constant(Tensor(Shape{1, 1, 2, 2}, {1, 3, 2, 4}));
  EXPECT_NEAR(gem_pool(x, 1.0).value()[0], 2.5, 1e-12);
}

TEST(GemPool, QuadraticMeanHandValue) {
  Tape tape;
  Var x = tape.constant(Tensor(Shape{1, 1, 2, 2}, {1, 3, 2, 4}));
  // sqrt((1 + 9 + 4 + 16) / 4)
  EXPECT_NEAR(gem_pool(x, 2.0).value()[0], std::sqrt(30.0 / 4.0), 1e-12);
  EXPECT_NEAR(gem_pool(x, 2.0).value()[0], 2.7386, 1e-4);
}

TEST(GemPool, LargeExponentApproachesMax) {
  std::mt19937_64 rng(3);
  Tape tape;
  Var x = tape.constant(uniform_tensor(Shape{1, 4, 3, 3}, rng, 0.1, 1.0));
  const Tensor gem = gem_pool(x, 64.0).value();
  const Tensor mac = mac_pool(x).value();
  for (Index c = 0; c < 4; ++c) EXPECT_NEAR(gem[c], mac[c], 0.05 * mac[c]);
}

TEST(GemPool, NegativeActivationIsDomainError) {
  Tape tape;
  Var x = tape.constant(Tensor(Shape{1, 1, 1, 2}, {1.0, -0.5}));
  EXPECT_THROW(gem_pool(x, 3.0), DomainError);
}

TEST(GemPool, GradientMatchesFiniteDifferences) {
  auto r = gradcheck(
      [](Tape&, const std::vector<Var>& v) { return project(gem_pool(v[0], 3.0)); },
      [](std::mt19937_64& rng) {
        return std::vector<Tensor>{uniform_tensor(Shape{2, 3, 4, 4}, rng, 0.05, 1.0)};
      },
      kProbes, kTol);
  EXPECT_EQ(r.failures, 0) << "max error " << r.max_error;
}

TEST(GemPool, OrderedBetweenMeanAndMax) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Tape tape;
    Var x = tape.constant(uniform_tensor(Shape{1, 2, 3, 5}, rng));
    const Tensor mac = mac_pool(x).value();
    const Tensor mean = gem_pool(x, 1.0).value();
    for (double p : {1.0, 2.0, 3.0, 7.5}) {
      const Tensor gem = gem_pool(x, p).value();
      for (Index c = 0; c < 2; ++c) {
        EXPECT_LE(gem[c], mac[c] + 1e-12);
        EXPECT_GE(gem[c], mean[c] - 1e-12);
      }
    }
  }
}

TEST(L2Normalize, ThreeFourFive) {
  Tape tape;
  Var y = l2_normalize(tape.constant(Tensor(Shape{2}, {3, 4})));
  EXPECT_NEAR(y.value()[0], 0.6, 1e-15);
  EXPECT_NEAR(y.value()[1], 0.8, 1e-15);
}

TEST(L2Normalize, UnitVectorIsFixedPoint) {
  Tape tape;
  Var y = l2_normalize(tape.constant(Tensor(Shape{3}, {0, 1, 0})));
  EXPECT_EQ(y.value().values()(1), 1.0);
  EXPECT_EQ(y.value().values().abs().sum(), 1.0);
}

TEST(L2Normalize, ZeroVectorIsDegenerate) {
  Tape tape;
  EXPECT_THROW(l2_normalize(tape.constant(Tensor(Shape{4}))), DomainError);
}

TEST(L2Normalize, GradientMatchesFiniteDifferences) {
  auto r = gradcheck([](Tape&, const std::vector<Var>& v) { return project(l2_normalize(v[0])); },
                     [](std::mt19937_64& rng) {
                       return std::vector<Tensor>{uniform_tensor(Shape{8}, rng)};
                     },
                     kProbes, 1e-5);
  EXPECT_EQ(r.failures, 0) << "max error " << r.max_error;
}

TEST(BilinearResize, SameSizeIsIdentity) {
  std::mt19937_64 rng(5);
  Tape tape;
  const Tensor img = uniform_tensor(Shape{3, 7, 9}, rng);
  Var y = bilinear_resize(tape.constant(img), 7, 9);
  EXPECT_TRUE((y.value().values() == img.values()).all());
}

TEST(BilinearResize, ConstantImageStaysConstant) {
  Tape tape;
  Var x = tape.constant(Tensor(Shape{2, 5, 6}, 0.3));
  for (auto [h, w] : {std::pair<Index, Index>{3, 11}, {17, 2}, {1, 1}, {9, 9}}) {
    Var y = bilinear_resize(x, h, w);
    EXPECT_TRUE((y.value().values() == 0.3).all());
    Var back = bilinear_resize(y, 5, 6);
    EXPECT_TRUE((back.value().values() == 0.3).all());
  }
}

TEST(BilinearResize, AlignCornersWidening) {
  Tape tape;
  Var y = bilinear_resize(tape.constant(Tensor(Shape{1, 1, 2}, {0, 2})), 1, 3);
  EXPECT_EQ(y.value()[0], 0.0);
  EXPECT_EQ(y.value()[1], 1.0);
  EXPECT_EQ(y.value()[2], 2.0);
}

TEST(BilinearResize, NonPositiveTargetIsError) {
  Tape tape;
  Var x = tape.constant(Tensor(Shape{1, 2, 2}));
  EXPECT_THROW(bilinear_resize(x, 0, 2), DimensionError);
}

TEST(BilinearResize, GradientMatchesFiniteDifferences) {
  auto r = gradcheck(
      [](Tape&, const std::vector<Var>& v) { return project(bilinear_resize(v[0], 7, 4)); },
      [](std::mt19937_64& rng) {
        return std::vector<Tensor>{uniform_tensor(Shape{2, 5, 6}, rng)};
      },
      kProbes, kTol);
  EXPECT_EQ(r.failures, 0) << "max error " << r.max_error;
}

TEST(EuclideanDistance, Basics) {
  Tape tape;
  Var a = tape.constant(Tensor(Shape{2}, {1, 0}));
  Var b = tape.constant(Tensor(Shape{2}, {0, 1}));
  EXPECT_EQ(euclidean_distance(a, a).value().item(), 0.0);
  EXPECT_NEAR(euclidean_distance(a, b).value().item(), std::sqrt(2.0), 1e-15);
  EXPECT_THROW(euclidean_distance(a, tape.constant(Tensor(Shape{3}))), DimensionError);
}

TEST(EuclideanDistance, GradientMatchesFiniteDifferences) {
  auto r = gradcheck(
      [](Tape&, const std::vector<Var>& v) { return euclidean_distance(v[0], v[1]); },
      [](std::mt19937_64& rng) {
        return std::vector<Tensor>{uniform_tensor(Shape{6}, rng), uniform_tensor(Shape{6}, rng)};
      },
      kProbes, 1e-5);
  EXPECT_EQ(r.failures, 0) << "max error " << r.max_error;
}

TEST(OtherOps, GradientsMatchFiniteDifferences) {
  const std::vector<std::pair<const char*, testing::ScalarFn>> cases = {
      {"relu", [](Tape&, const std::vector<Var>& v) { return project(relu(add_scalar(v[0], -0.5))); }},
      {"clamp", [](Tape&, const std::vector<Var>& v) { return project(clamp(v[0], 0.2, 0.7)); }},
      {"fully_connected",
       [](Tape&, const std::vector<Var>& v) {
         return project(fully_connected(reshape(v[0], Shape{2, 3}), reshape(v[1], Shape{2, 3}),
                                        pick(v[1], 0).tape().constant(Tensor(Shape{2}, {0.1, -0.2}))));
       }},
      {"add_sub_scale",
       [](Tape&, const std::vector<Var>& v) {
         return project(scale(sub(add(v[0], v[1]), scale(v[1], 3.0)), -1.5));
       }},
      {"softmax_cross_entropy",
       [](Tape&, const std::vector<Var>& v) {
         static const int labels[2] = {1, 2};
         return softmax_cross_entropy(reshape(v[0], Shape{2, 3}), labels);
       }},
      {"channel_bias",
       [](Tape&, const std::vector<Var>& v) {
         return project(add_channel_bias(reshape(v[0], Shape{1, 2, 1, 3}), reshape(v[1], Shape{6})
                                                                                 .tape()
                                                                                 .constant(Tensor(Shape{2}, {0.5, -0.5}))));
       }},
  };
  for (const auto& [name, fn] : cases) {
    auto r = gradcheck(fn,
                       [](std::mt19937_64& rng) {
                         // Keep entries 0.01 away from the relu/clamp kinks at 0.2, 0.5, 0.7.
                         auto away = [&rng] {
                           Tensor t = uniform_tensor(Shape{6}, rng);
                           for (Index i = 0; i < t.size(); ++i) {
                             for (double kink : {0.2, 0.5, 0.7}) {
                               if (std::abs(t[i] - kink) < 0.01) t[i] = kink + 0.02;
                             }
                           }
                           return t;
                         };
                         return std::vector<Tensor>{away(), away()};
                       },
                       kProbes, kTol);
    EXPECT_EQ(r.failures, 0) << name << " max error " << r.max_error;
  }
}

TEST(Backward, SumGivesOnes) {
  Tape tape;
  Var x = tape.variable(Tensor(Shape{2, 3}, 0.25));
  tape.backward(sum(x));
  EXPECT_TRUE((tape.grad(x).values() == 1.0).all());
}

TEST(Backward, ZeroTimesXGivesZeroGradient) {
  Tape tape;
  Var x = tape.variable(Tensor(Shape{4}, 2.0));
  tape.backward(sum(scale(x, 0.0)));
  EXPECT_TRUE((tape.grad(x).values() == 0.0).all());
}

TEST(Backward, RepeatedCallsAccumulate) {
  Tape tape;
  Var x = tape.variable(Tensor(Shape{3}, 1.0));
  Var loss = sum(scale(x, 2.0));
  tape.backward(loss);
  tape.backward(loss);
  EXPECT_TRUE((tape.grad(x).values() == 4.0).all());
  tape.zero_grad();
  tape.backward(loss);
  EXPECT_TRUE((tape.grad(x).values() == 2.0).all());
}

TEST(Backward, LossFromOtherTapeIsStructuralError) {
  Tape a, b;
  Var x = b.variable(Tensor(Shape{2}, 1.0));
  EXPECT_THROW(a.backward(sum(x)), StructureError);
  EXPECT_THROW(a.backward(Var{}), StructureError);
}

TEST(Backward, OnlyFlaggedLeavesReceiveGradients) {
  Tape tape;
  Var x = tape.variable(Tensor(Shape{2}, 1.0));
  Var c = tape.constant(Tensor(Shape{2}, 3.0));
  tape.backward(sum(add(x, c)));
  EXPECT_TRUE(tape.has_grad(x));
  EXPECT_FALSE(tape.has_grad(c));
}

TEST(Backward, CompositeChainMatchesFiniteDifferences) {
  // conv -> relu -> gem -> normalize -> distance to a fixed descriptor
  auto r = gradcheck(
      [](Tape& tape, const std::vector<Var>& v) {
        Var feat = relu(conv2d(v[0], v[1], 2, 1));
        Var desc = l2_normalize(gem_pool(feat, 3.0));
        Tensor target(Shape{1, 4}, {0.5, 0.5, 0.5, 0.5});
        return euclidean_distance(desc, tape.constant(target));
      },
      [](std::mt19937_64& rng) {
        return std::vector<Tensor>{uniform_tensor(Shape{1, 3, 8, 8}, rng),
                                   uniform_tensor(Shape{4, 3, 3, 3}, rng, -0.5, 1.0)};
      },
      kProbes, kTol);
  EXPECT_EQ(r.failures, 0) << "max error " << r.max_error;
}

TEST(Forward, BitIdenticalAcrossEvaluations) {
  std::mt19937_64 rng(9);
  const Tensor img = uniform_tensor(Shape{1, 3, 12, 10}, rng);
  const Tensor ker = uniform_tensor(Shape{5, 3, 3, 3}, rng, -1.0, 1.0);
  auto run = [&] {
    Tape tape;
    Var y = gem_pool(relu(conv2d(tape.constant(img), tape.constant(ker), 2, 1)), 3.0);
    return y.value();
  };
  EXPECT_TRUE((run().values() == run().values()).all());
}

}  // namespace
}  // namespace uapr
