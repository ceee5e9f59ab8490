// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "aies/metropolis.hpp"
#include "aies/targets.hpp"

using namespace aies;

TEST(Metropolis, LogAcceptExamples) {
  EXPECT_EQ(mh_log_accept(-1.3, -1.3), 0.0);
  EXPECT_DOUBLE_EQ(std::exp(mh_log_accept(0.0, -2.0)), std::exp(-2.0));
  EXPECT_EQ(mh_log_accept(-5.0, -1.0), 0.0);
  EXPECT_EQ(mh_log_accept(0.0, NAN), -std::numeric_limits<double>::infinity());
}

TEST(Metropolis, StepWithGivenProposal) {
  const StdGaussian g{1};
  const std::vector<double> x{0.0};
  const MhStep same = mh_step_with(x, 0.0, {0.0}, 0.999999, g);
  EXPECT_TRUE(same.accepted);
  // 1-D Gaussian from 0 to 2: acceptance probability exp(-2)
  EXPECT_TRUE(mh_step_with(x, 0.0, {2.0}, std::exp(-2.0) - 1e-12, g).accepted);
  const MhStep rej = mh_step_with(x, 0.0, {2.0}, std::exp(-2.0) + 1e-12, g);
  EXPECT_FALSE(rej.accepted);
  EXPECT_EQ(rej.x, x);
}

TEST(Metropolis, SeededRunIsReproducible) {
  MetropolisParams p;
  p.seed = 3;
  const Rosenbrock r(2);
  const MetropolisRun a = run_metropolis(r, {0.0, 0.0}, p, 5000), b = run_metropolis(r, {0.0, 0.0}, p, 5000);
  EXPECT_EQ(a.trace, b.trace);
  EXPECT_EQ(a.accepted, b.accepted);
  EXPECT_EQ(a.likelihood_evaluations, 5001u);
  const MetropolisRun c = run_metropolis(r, {0.0, 0.0}, p, 5000, 0, 1);
  EXPECT_NE(a.trace, c.trace);
}

TEST(Metropolis, DetailedBalanceOnDiscretizedGaussian) {
  // states: round(x) clipped to {-2..2}
  MetropolisParams p;
  p.scales = {1.0};
  p.weights = {1.0};
  p.seed = 11;
  const std::size_t steps = 1000000;
  const MetropolisRun run = run_metropolis(StdGaussian{1}, {0.0}, p, steps);
  auto state = [](double x) { return static_cast<int>(std::clamp(std::lround(x), -2L, 2L)); };
  std::map<std::pair<int, int>, double> count;
  for (std::size_t t = 1; t < run.trace.size(); ++t) count[{state(run.trace[t - 1]), state(run.trace[t])}] += 1.0;
  for (int a = -2; a <= 2; ++a)
    for (int b = a + 1; b <= 2; ++b) {
      const double nab = count[{a, b}], nba = count[{b, a}];
      if (nab + nba < 100) continue;
      // flows a->b and b->a are equal under detailed balance
      const double se = std::sqrt(nab + nba);
      EXPECT_LT(std::abs(nab - nba), 3.0 * se + 0.0) << a << "->" << b;
    }
}

TEST(Metropolis, RosenbrockAcceptanceSanityBand) {
  MetropolisParams p;
  p.seed = 2;
  const Rosenbrock r(100);
  const MetropolisRun run = run_metropolis(r, std::vector<double>(100, 1.0), p, 50000);
  EXPECT_GT(run.acceptance_rate(), 0.05);
  EXPECT_LT(run.acceptance_rate(), 0.7);
}

TEST(Metropolis, ParameterErrors) {
  MetropolisParams p;
  p.weights = {1.0};
  EXPECT_THROW(p.validate(), InvalidParameter);
  p = MetropolisParams{};
  p.scales[1] = -0.1;
  EXPECT_THROW(p.validate(), InvalidParameter);
  p = MetropolisParams{};
  p.weights = {0.0, 0.0, 0.0};
  EXPECT_THROW(p.validate(), InvalidParameter);
  EXPECT_THROW(run_metropolis(StdGaussian{2}, {0.0}, MetropolisParams{}, 10), InvalidInput);
  const TargetDensity box(1, [](std::span<const double> x) {
    return std::abs(x[0]) < 1.0 ? 0.0 : -std::numeric_limits<double>::infinity();
  });
  EXPECT_THROW(run_metropolis(box, {3.0}, MetropolisParams{}, 10), NumericalFailure);
}

TEST(Autocorrelation, MatchesDirectSum) {
  Engine rng(5);
  std::normal_distribution<double> normal;
  std::vector<double> x(257);
  for (auto& v : x) v = normal(rng);
  const auto rho = autocorrelation(x, 10);
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= x.size();
  double c0 = 0.0;
  for (double v : x) c0 += (v - mean) * (v - mean);
  for (std::size_t k = 0; k <= 10; ++k) {
    double ck = 0.0;
    for (std::size_t t = 0; t + k < x.size(); ++t) ck += (x[t] - mean) * (x[t + k] - mean);
    EXPECT_NEAR(rho[k], ck / c0, 1e-12);
  }
}

TEST(Ess, WhiteNoise) {
  Engine rng(6);
  std::normal_distribution<double> normal;
  std::vector<double> x(10000);
  for (auto& v : x) v = normal(rng);
  const double ess = effective_sample_size(x);
  EXPECT_GE(ess, 8000.0);
  EXPECT_LE(ess, 12000.0);
}

TEST(Ess, Ar1Series) {
  const double rho = 0.9;
  const double expect = 10000.0 * (1.0 - rho) / (1.0 + rho);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Engine rng(7 + seed);
    std::normal_distribution<double> normal;
    std::vector<double> x(10000);
    x[0] = normal(rng);
    for (std::size_t t = 1; t < x.size(); ++t) x[t] = rho * x[t - 1] + std::sqrt(1 - rho * rho) * normal(rng);
    const double ess = effective_sample_size(x);
    EXPECT_GT(ess, expect / 1.5);
    EXPECT_LT(ess, expect * 1.5);
  }
}

TEST(Ess, AlternatingSeriesExceedsLength) {
  std::vector<double> x(1000);
  for (std::size_t t = 0; t < x.size(); ++t) x[t] = (t % 2) ? 1.0 : -1.0;
  const double ess = effective_sample_size(x);
  EXPECT_GT(ess, 1000.0);
  EXPECT_LE(ess, 1000.0 * std::log10(1000.0));
}

TEST(Ess, InputErrors) {
  EXPECT_THROW(effective_sample_size(std::vector<double>(5, 1.0)), InvalidInput);
  EXPECT_THROW(effective_sample_size(std::vector<double>(50, 1.0)), InvalidInput);
}
