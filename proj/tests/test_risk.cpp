#include "wcpg/risk.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

using namespace wcpg;

namespace {

double tail_mean(std::vector<double> xs, double alpha) {
  std::sort(xs.begin(), xs.end());
  const auto k = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(xs.size())));
  double s = 0;
  for (std::size_t i = 0; i < k; ++i) s += xs[i];
  return s / static_cast<double>(k);
}

}  // namespace

TEST(Normal, PdfValues) {
  EXPECT_NEAR(std_normal_pdf(0.0), 0.3989423, 5e-8);
  EXPECT_EQ(std_normal_pdf(1.3), std_normal_pdf(-1.3));
  EXPECT_LT(std_normal_pdf(10.0), 1e-21);
}

TEST(Normal, CdfValues) {
  EXPECT_EQ(std_normal_cdf(0.0), 0.5);
  EXPECT_NEAR(std_normal_cdf(1.96), 0.9750021, 5e-8);
  EXPECT_NEAR(std_normal_cdf(1.0), 0.8413447, 5e-8);
  for (double x : {0.1, 0.7, 2.5, 6.0}) EXPECT_NEAR(std_normal_cdf(-x), 1.0 - std_normal_cdf(x), 1e-15);
}

TEST(Normal, QuantileInvertsCdf) {
  for (double p : {1e-6, 0.01, 0.05, 0.3, 0.5, 0.77, 0.99, 1 - 1e-6})
    EXPECT_NEAR(std_normal_cdf(std_normal_quantile(p)), p, 1.5e-7 * std::max(1.0, p)) << p;
  EXPECT_EQ(std_normal_quantile(0.0), -HUGE_VAL);
  EXPECT_EQ(std_normal_quantile(1.0), HUGE_VAL);
  EXPECT_THROW(std_normal_quantile(1.5), std::domain_error);
}

TEST(RiskLevelBounds, EnforcedAtConstruction) {
  EXPECT_NO_THROW(RiskLevel(0.01));
  EXPECT_NO_THROW(RiskLevel(1.0));
  EXPECT_THROW(RiskLevel(0.0), std::out_of_range);
  EXPECT_THROW(RiskLevel(1.01), std::out_of_range);
  EXPECT_THROW(RiskLevel(std::nan("")), std::out_of_range);
}

TEST(CvarPaper, Examples) {
  EXPECT_NEAR(cvar_gaussian({0.0, 1.0}, RiskLevel(1.0)), -0.287600, 5e-7);
  EXPECT_NEAR(cvar_gaussian({0.0, 4.0}, RiskLevel(0.5)), -1.018321, 5e-7);
  EXPECT_NEAR(cvar_coefficient(0.02, CvarRule::paper), 0.7852, 5e-5);
  const GaussianReturn flat{5.0, kVarianceFloor};
  EXPECT_NEAR(cvar_gaussian(flat, RiskLevel(0.3)), 5.0, std::sqrt(kVarianceFloor) * 0.8);
}

TEST(CvarPaper, BelowMeanAndIncreasingInAlpha) {
  const GaussianReturn z{1.5, 2.0};
  double prev = -1e300;
  for (int i = 0; i < 1000; ++i) {
    const double a = 0.01 + 0.99 * i / 999.0;
    const double c = cvar_gaussian(z, RiskLevel(a));
    EXPECT_LT(c, z.mean);
    EXPECT_GT(c, prev);
    prev = c;
  }
}

TEST(CvarStandard, Examples) {
  EXPECT_EQ(cvar_gaussian_standard({3.25, 7.0}, RiskLevel(1.0)), 3.25);
  EXPECT_NEAR(cvar_gaussian_standard({0.0, 1.0}, RiskLevel(0.5)), -0.7978846, 5e-7);
  EXPECT_NEAR(cvar_gaussian_standard({0.0, 1.0}, RiskLevel(0.05)), -2.062713, 5e-6);
}

TEST(CvarStandard, MatchesEmpiricalTailMean) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> xs(1'000'000);
  for (double& x : xs) x = n(rng);
  for (double a : {0.05, 0.25, 0.5, 1.0})
    EXPECT_NEAR(cvar_gaussian_standard({0.0, 1.0}, RiskLevel(a)), tail_mean(xs, a), 1e-2) << a;
}

TEST(CvarPartials, ExampleAndFiniteDifferences) {
  const auto p = cvar_partials({0.0, 1.0}, RiskLevel(0.5));
  EXPECT_EQ(p.d_mean, 1.0);
  EXPECT_NEAR(p.d_variance, -0.2545802, 5e-8);
  const double h = 1e-6;
  for (CvarRule rule : {CvarRule::paper, CvarRule::standard}) {
    for (double a : {0.05, 0.3, 0.9}) {
      const GaussianReturn z{0.4, 2.5};
      const auto g = cvar_partials(z, RiskLevel(a), rule);
      const double dv = (cvar({z.mean, z.variance + h}, RiskLevel(a), rule) -
                         cvar({z.mean, z.variance - h}, RiskLevel(a), rule)) /
                        (2 * h);
      const double dm = (cvar({z.mean + h, z.variance}, RiskLevel(a), rule) -
                         cvar({z.mean - h, z.variance}, RiskLevel(a), rule)) /
                        (2 * h);
      const double da = (cvar(z, RiskLevel(a + h), rule) - cvar(z, RiskLevel(a - h), rule)) / (2 * h);
      EXPECT_NEAR(g.d_variance, dv, 1e-8);
      EXPECT_NEAR(g.d_mean, dm, 1e-8);
      EXPECT_NEAR(g.d_alpha, da, 1e-6 * std::max(1.0, std::abs(da)));
    }
  }
}

TEST(W2, Examples) {
  EXPECT_EQ(w2_gaussian({1.0, 2.0}, {1.0, 2.0}), 0.0);
  EXPECT_NEAR(w2_gaussian({0.0, 1.0}, {3.0, 1.0}), 9.0, 1e-15);
  EXPECT_NEAR(w2_gaussian({0.0, 1.0}, {0.0, 4.0}), 1.0, 1e-15);
}

TEST(W2, SymmetricNonNegativeZeroOnlyWhenEqual) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-5, 5), v(0.01, 9);
  for (int i = 0; i < 1000; ++i) {
    const GaussianReturn a{u(rng), v(rng)}, b{u(rng), v(rng)};
    EXPECT_GT(w2_gaussian(a, b), 0.0);
    EXPECT_NEAR(w2_gaussian(a, b), w2_gaussian(b, a), 1e-14 * w2_gaussian(a, b));
    EXPECT_EQ(w2_gaussian(a, a), 0.0);
  }
}

TEST(Rule, ParsesNames) {
  EXPECT_EQ(cvar_rule_from_string("paper"), CvarRule::paper);
  EXPECT_EQ(cvar_rule_from_string("standard"), CvarRule::standard);
  EXPECT_THROW(cvar_rule_from_string("other"), std::invalid_argument);
}
