#include "lenslab/distrib.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace lenslab;

using V = std::vector<double>;

namespace {

V random_dist(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  V p(n);
  double s = 0.0;
  for (auto& x : p) s += (x = u(rng) + 1e-6);
  for (auto& x : p) x /= s;
  return p;
}

}  // namespace

TEST(Distrib, HandValues) {
  EXPECT_NEAR(forward_kl(V{1.0, 0.0}, V{0.5, 0.5}), std::log(2.0), 1e-12);
  EXPECT_DOUBLE_EQ(total_variation(V{1.0, 0.0}, V{0.0, 1.0}), 1.0);
  EXPECT_NEAR(total_variation(V{0.7, 0.3}, V{0.4, 0.6}), 0.3, 1e-12);
  EXPECT_NEAR(entropy(V{0.5, 0.5}), std::log(2.0), 1e-12);
  EXPECT_DOUBLE_EQ(entropy(V{1.0, 0.0}), 0.0);
  EXPECT_NEAR(cross_entropy(1, V{0.25, 0.75}), -std::log(0.75), 1e-12);
}

TEST(Distrib, Identities) {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 40; ++rep) {
    const V p = random_dist(rng, 2 + rep % 17);
    EXPECT_NEAR(forward_kl(p, p), 0.0, 1e-12);
    EXPECT_DOUBLE_EQ(total_variation(p, p), 0.0);
  }
}

TEST(Distrib, Axioms) {
  std::mt19937_64 rng(13);
  for (int rep = 0; rep < 60; ++rep) {
    const int n = 2 + rep % 23;
    const V p = random_dist(rng, n), q = random_dist(rng, n), r = random_dist(rng, n);
    EXPECT_GE(entropy(p), 0.0);
    EXPECT_LE(entropy(p), std::log(n) + 1e-12);
    EXPECT_GE(forward_kl(p, q), 0.0);
    EXPECT_DOUBLE_EQ(total_variation(p, q), total_variation(q, p));
    EXPECT_LE(total_variation(p, r),
              total_variation(p, q) + total_variation(q, r) + 1e-12);
    EXPECT_GE(total_variation(p, q), 0.0);
    EXPECT_LE(total_variation(p, q), 1.0);
  }
}

TEST(Distrib, KlZeroOnlyWhenEqual) {
  std::mt19937_64 rng(17);
  for (int rep = 0; rep < 40; ++rep) {
    V p = random_dist(rng, 8), q = random_dist(rng, 8);
    if (total_variation(p, q) > 1e-3) EXPECT_GT(forward_kl(p, q), 0.0);
  }
}

TEST(Distrib, UniformMaximizesEntropy) {
  const int n = 37;
  const V u(n, 1.0 / n);
  EXPECT_NEAR(entropy(u), std::log(n), 1e-12);
  std::mt19937_64 rng(19);
  for (int rep = 0; rep < 20; ++rep)
    EXPECT_LE(entropy(random_dist(rng, n)), entropy(u) + 1e-12);
}

TEST(Distrib, SmoothingKeepsZerosFinite) {
  const V spike = {1.0, 0.0, 0.0};
  const V other = {0.0, 1.0, 0.0};
  const double kl = forward_kl(spike, other);
  EXPECT_TRUE(std::isfinite(kl));
  EXPECT_NEAR(kl, -std::log(kProbEps), 1e-6);  // 1 * ln(1/eps)
  EXPECT_TRUE(std::isfinite(cross_entropy(1, spike)));
}

TEST(Distrib, RejectsNonDistributions) {
  const V bad = {0.5, 0.6};
  const V ok = {0.5, 0.5};
  EXPECT_THROW(entropy(bad), std::invalid_argument);
  EXPECT_THROW(forward_kl(bad, ok), std::invalid_argument);
  EXPECT_THROW(forward_kl(ok, bad), std::invalid_argument);
  EXPECT_THROW(total_variation(ok, bad), std::invalid_argument);
  EXPECT_THROW(cross_entropy(0, bad), std::invalid_argument);
  EXPECT_THROW(cross_entropy(7, ok), std::invalid_argument);
  EXPECT_THROW(forward_kl(ok, V{1.0}), std::invalid_argument);
}

TEST(Distrib, FloatSequencesAccepted) {
  const std::vector<float> p = {0.25f, 0.75f};
  EXPECT_NEAR(entropy(p), -(0.25 * std::log(0.25) + 0.75 * std::log(0.75)), 1e-7);
}
