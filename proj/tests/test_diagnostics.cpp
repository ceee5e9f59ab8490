// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "aies/chain.hpp"
#include "aies/diagnostics.hpp"
#include "aies/rng.hpp"

using namespace aies;

namespace {

ChainRecord random_chain(std::size_t T, std::size_t L, std::size_t n, std::uint64_t seed) {
  ChainRecord rec;
  rec.header = ChainHeader{L, n, T, 1, seed, {}};
  Engine rng(seed);
  std::normal_distribution<double> normal;
  rec.positions.resize(T * L * n);
  for (auto& v : rec.positions) v = 2.0 + 3.0 * normal(rng);
  return rec;
}

SummarySeries noise_series(std::size_t T, std::size_t n, std::uint64_t seed, double shift = 0.0) {
  Engine rng(seed);
  std::normal_distribution<double> normal;
  SummarySeries s;
  s.values.resize(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(n));
  for (Eigen::Index t = 0; t < s.values.rows(); ++t)
    for (Eigen::Index i = 0; i < s.values.cols(); ++i) s.values(t, i) = normal(rng) + shift;
  return s;
}

std::vector<double> white(std::size_t T, std::uint64_t seed, double mean = 0.0, double sd = 1.0) {
  Engine rng(seed);
  std::normal_distribution<double> normal(mean, sd);
  std::vector<double> x(T);
  for (auto& v : x) v = normal(rng);
  return x;
}

// Textbook MPSRF: W and B around each chain's own mean and the grand mean,
// largest eigenvalue of W^{-1} B / T from a general eigensolver.
double reference_mpsrf(const std::vector<SummarySeries>& runs) {
  const auto M = static_cast<double>(runs.size());
  const auto T = static_cast<double>(runs[0].length());
  const Eigen::Index n = runs[0].values.cols();
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(n, n), B = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd grand = Eigen::VectorXd::Zero(n);
  std::vector<Eigen::VectorXd> means;
  for (const auto& r : runs) {
    means.push_back(r.values.colwise().mean().transpose());
    grand += means.back() / M;
  }
  for (std::size_t j = 0; j < runs.size(); ++j) {
    for (Eigen::Index t = 0; t < runs[j].values.rows(); ++t) {
      const Eigen::VectorXd d = runs[j].values.row(t).transpose() - means[j];
      W += d * d.transpose();
    }
    B += (means[j] - grand) * (means[j] - grand).transpose();
  }
  W /= M * (T - 1.0);
  B /= (M - 1.0);
  Eigen::EigenSolver<Eigen::MatrixXd> es(W.inverse() * B);
  const double lambda = es.eigenvalues().real().maxCoeff();
  return (T - 1.0) / T + (M + 1.0) / M * lambda;
}

}  // namespace

TEST(SummarySeries, ConstantAndTwoPointExamples) {
  ChainRecord rec;
  rec.header = ChainHeader{2, 1, 3, 1, 0, {}};
  rec.positions = {0.0, 2.0, 0.0, 2.0, 0.0, 2.0};
  const SummarySeries m = ensemble_mean_series(rec), v = ensemble_variance_series(rec);
  for (Eigen::Index t = 0; t < 3; ++t) {
    EXPECT_EQ(m.values(t, 0), 1.0);
    EXPECT_EQ(v.values(t, 0), 1.0);
  }
  rec.positions.assign(6, 4.25);
  EXPECT_EQ(ensemble_mean_series(rec).values(1, 0), 4.25);
  EXPECT_EQ(ensemble_variance_series(rec).values(1, 0), 0.0);
}

TEST(SummarySeries, MatchesBruteForce) {
  const ChainRecord rec = random_chain(7, 5, 3, 42);
  const SummarySeries m = ensemble_mean_series(rec), v = ensemble_variance_series(rec);
  for (std::size_t t = 0; t < 7; ++t)
    for (std::size_t i = 0; i < 3; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 5; ++j) s += rec.at(t, j, i);
      const double mean = s / 5.0;
      double ss = 0.0;
      for (std::size_t j = 0; j < 5; ++j) ss += (rec.at(t, j, i) - mean) * (rec.at(t, j, i) - mean);
      const auto ti = static_cast<Eigen::Index>(t), ii = static_cast<Eigen::Index>(i);
      EXPECT_NEAR(m.values(ti, ii), mean, 1e-12);
      EXPECT_NEAR(v.values(ti, ii), ss / 5.0, 1e-12);
    }
}

TEST(SummarySeries, SingleWalkerVarianceIsDegenerate) {
  const ChainRecord rec = random_chain(4, 1, 2, 1);
  const SummarySeries v = ensemble_variance_series(rec);
  EXPECT_TRUE(v.degenerate);
  EXPECT_EQ(v.values.cwiseAbs().maxCoeff(), 0.0);
}

TEST(SummarySeries, TailKeepsLastFraction) {
  SummarySeries s;
  s.values.resize(5, 1);
  s.values << 1, 2, 3, 4, 5;
  const SummarySeries h = s.tail(0.5);
  ASSERT_EQ(h.length(), 3u);
  EXPECT_EQ(h.values(0, 0), 3.0);
  EXPECT_EQ(s.tail(1.0).length(), 5u);
}

TEST(RunningStats, LastHalfWindow) {
  const RunningStats r = running_last_half({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(r.mean[3], 3.5);
  EXPECT_DOUBLE_EQ(r.sd[3], 0.5);
  EXPECT_DOUBLE_EQ(r.mean[0], 1.0);
  EXPECT_DOUBLE_EQ(r.mean[2], 2.5);  // floor(3/2)+1 = 2 .. 3
  const RunningStats c = running_last_half(std::vector<double>(9, 2.5));
  for (std::size_t p = 0; p < 9; ++p) {
    EXPECT_DOUBLE_EQ(c.mean[p], 2.5);
    EXPECT_DOUBLE_EQ(c.sd[p], 0.0);
  }
}

TEST(RunningStats, MatchesDirectWindow) {
  const std::vector<double> x = white(301, 7, 1e3, 1.0);
  const RunningStats r = running_last_half(x);
  for (std::size_t p = 1; p <= x.size(); p += 17) {
    double s = 0.0;
    for (std::size_t q = p / 2; q < p; ++q) s += x[q];
    const double m = s / static_cast<double>(p - p / 2);
    double ss = 0.0;
    for (std::size_t q = p / 2; q < p; ++q) ss += (x[q] - m) * (x[q] - m);
    EXPECT_NEAR(r.mean[p - 1], m, 1e-9);
    EXPECT_NEAR(r.sd[p - 1], std::sqrt(ss / static_cast<double>(p - p / 2)), 1e-7);
  }
}

TEST(RunningStats, FlattenOrder) {
  ChainRecord rec;
  rec.header = ChainHeader{2, 2, 2, 1, 0, {}};
  // [t][walker][coord]
  rec.positions = {10, 0, 20, 0, 11, 0, 21, 0};
  const RunningStats r = flatten_and_running_stats(rec, 0);
  EXPECT_EQ(r.flat, (std::vector<double>{10, 20, 11, 21}));
}

TEST(Mpsrf, IdenticalRunsGiveExactFloor) {
  const SummarySeries a = noise_series(500, 3, 1);
  const std::vector<SummarySeries> runs{a, a};
  const PsrfReport r = mpsrf(runs);
  ASSERT_TRUE(r.r_hat);
  EXPECT_EQ(r.lambda_max, 0.0);
  EXPECT_EQ(*r.r_hat, 499.0 / 500.0);
  EXPECT_EQ(r.between_over_t.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Mpsrf, MatchesTextbookComputation) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::vector<SummarySeries> runs;
    for (std::uint64_t m = 0; m < 4; ++m) runs.push_back(noise_series(200, 3, 100 * seed + m, 0.3 * m));
    const PsrfReport r = mpsrf(runs);
    ASSERT_TRUE(r.r_hat);
    EXPECT_NEAR(*r.r_hat, reference_mpsrf(runs), 1e-9 * *r.r_hat);
  }
}

TEST(Mpsrf, ConvergedAndShiftedRuns) {
  std::vector<SummarySeries> iid, shifted;
  for (std::uint64_t m = 0; m < 4; ++m) {
    iid.push_back(noise_series(5000, 3, 10 + m));
    shifted.push_back(noise_series(5000, 3, 20 + m, 2.0 * m));
  }
  const PsrfReport a = mpsrf(iid);
  EXPECT_GE(*a.r_hat, 1.0 - 1.0 / 5000.0);
  EXPECT_LT(*a.r_hat, 1.1);
  EXPECT_GT(*mpsrf(shifted).r_hat, 2.0);
}

TEST(Mpsrf, AffineInvariance) {
  std::vector<SummarySeries> runs;
  for (std::uint64_t m = 0; m < 4; ++m) runs.push_back(noise_series(300, 3, 50 + m, 0.2 * m));
  Eigen::Matrix3d A;
  A << 2.0, 0.5, 0.0, -1.0, 3.0, 0.2, 0.3, 0.0, 0.7;
  const Eigen::RowVector3d b(5.0, -2.0, 1.0);
  std::vector<SummarySeries> mapped = runs;
  for (auto& s : mapped) s.values = (s.values * A.transpose()).rowwise() + b;
  EXPECT_NEAR(mpsrf(runs).lambda_max, mpsrf(mapped).lambda_max, 1e-8);
}

TEST(Mpsrf, FloorHoldsOnRandomInputs) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::vector<SummarySeries> runs;
    for (std::uint64_t m = 0; m < 3; ++m) runs.push_back(noise_series(50, 2, 1000 * seed + m));
    EXPECT_GE(*mpsrf(runs).r_hat, 49.0 / 50.0);
  }
}

TEST(Mpsrf, SingularWithinCovariance) {
  std::vector<SummarySeries> runs(3);
  for (auto& s : runs) s.values = Eigen::MatrixXd::Constant(100, 2, 1.5);
  const PsrfReport r = mpsrf(runs);
  EXPECT_TRUE(r.w_singular);
  EXPECT_FALSE(r.r_hat);

  // collinear coordinates: second column is twice the first
  std::vector<SummarySeries> col;
  for (std::uint64_t m = 0; m < 3; ++m) {
    SummarySeries s = noise_series(100, 2, m);
    s.values.col(1) = 2.0 * s.values.col(0);
    col.push_back(s);
  }
  EXPECT_TRUE(mpsrf(col).w_singular);
}

TEST(Mpsrf, InputErrors) {
  const SummarySeries a = noise_series(10, 2, 1), b = noise_series(11, 2, 2);
  EXPECT_THROW(mpsrf(std::vector<SummarySeries>{a}), InvalidInput);
  EXPECT_THROW(mpsrf(std::vector<SummarySeries>{a, b}), InvalidInput);
  SummarySeries nan = a;
  nan.values(0, 0) = NAN;
  EXPECT_THROW(mpsrf(std::vector<SummarySeries>{a, nan}), InvalidInput);
}

TEST(Spectrum0, WhiteNoiseNearVariance) {
  EXPECT_NEAR(spectrum0(white(10000, 3, 0.0, 2.0)), 4.0, 0.8);
}

TEST(Spectrum0, Ar1NearLongRunVariance) {
  // long-run variance of a unit-variance AR(1) with rho = 0.5 is (1+rho)/(1-rho) = 3
  Engine rng(4);
  std::normal_distribution<double> normal;
  std::vector<double> x(40000);
  x[0] = normal(rng);
  for (std::size_t t = 1; t < x.size(); ++t) x[t] = 0.5 * x[t - 1] + std::sqrt(0.75) * normal(rng);
  EXPECT_NEAR(spectrum0(x), 3.0, 0.45);
}

TEST(CramerVonMises, KnownQuantiles) {
  // asymptotic quantiles of the Cramer-von Mises statistic
  EXPECT_NEAR(cramer_von_mises_cdf(0.347), 0.90, 2e-3);
  EXPECT_NEAR(cramer_von_mises_cdf(0.461), 0.95, 2e-3);
  EXPECT_NEAR(cramer_von_mises_cdf(0.743), 0.99, 2e-3);
  EXPECT_NEAR(cramer_von_mises_cdf(1.168), 0.999, 5e-4);
  EXPECT_EQ(cramer_von_mises_cdf(0.0), 0.0);
}

TEST(CramerVonMises, MonotoneUpToOne) {
  double prev = 0.0;
  for (double q = 0.01; q < 200.0; q *= 1.1) {
    const double c = cramer_von_mises_cdf(q);
    EXPECT_GE(c, prev - 1e-9) << q;
    EXPECT_LE(c, 1.0);
    prev = c;
  }
  EXPECT_GT(cramer_von_mises_cdf(5.0), 0.99999);
}

TEST(HeidelbergerWelch, NullPassRate) {
  int pass0 = 0;
  for (std::uint64_t s = 0; s < 100; ++s)
    if (heidelberger_welch(white(10000, 500 + s)).passed_stage0()) ++pass0;
  EXPECT_GE(pass0, 90);
}

TEST(HeidelbergerWelch, TrendDetected) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    std::vector<double> x = white(10000, 900 + s);
    for (std::size_t t = 0; t < x.size(); ++t) x[t] += 5.0 * static_cast<double>(t) / 9999.0;
    const HwReport h = heidelberger_welch(x);
    EXPECT_FALSE(h.passed_stage0());
  }
}

TEST(HeidelbergerWelch, EarlyTransientDiscarded) {
  std::vector<double> x = white(5000, 77);
  for (std::size_t t = 0; t < 600; ++t) x[t] += 8.0 * (1.0 - static_cast<double>(t) / 600.0);
  const HwReport h = heidelberger_welch(x);
  EXPECT_TRUE(h.passed);
  EXPECT_GT(h.fraction_discarded, 0.0);
  EXPECT_LE(h.fraction_discarded, 0.5);
}

TEST(HeidelbergerWelch, HalfwidthOnLargeMean) {
  const HwReport h = heidelberger_welch(white(2000, 8, 100.0, 1e-3), 0.05, 0.1);
  ASSERT_TRUE(h.passed);
  ASSERT_TRUE(h.halfwidth_passed);
  EXPECT_TRUE(*h.halfwidth_passed);
  EXPECT_NEAR(h.mean, 100.0, 1e-3);
}

TEST(HeidelbergerWelch, HalfwidthFailsNearZeroMean) {
  const HwReport h = heidelberger_welch(white(2000, 9, 0.0, 1.0), 0.05, 0.1);
  if (h.passed) {
    ASSERT_TRUE(h.halfwidth_passed);
    EXPECT_FALSE(*h.halfwidth_passed);
  }
}

TEST(HeidelbergerWelch, InputErrors) {
  EXPECT_THROW(heidelberger_welch(std::vector<double>(40, 1.0)), InvalidInput);
  EXPECT_THROW(heidelberger_welch(std::vector<double>(100, 1.0)), InvalidInput);
  EXPECT_THROW(heidelberger_welch(white(100, 1), 1.5), InvalidParameter);
}
