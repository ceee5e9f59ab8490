// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aies/chain.hpp"
#include "aies/error.hpp"

namespace aies {

enum class SummaryKind { EnsembleMean, EnsembleVariance };

/// Per stored iteration, the n-vector of an ensemble summary (rows = t).
struct SummarySeries {
  Eigen::MatrixXd values;
  SummaryKind kind = SummaryKind::EnsembleMean;
  int run_id = 0;
  /// Set for a variance series over a single walker (all zeros).
  bool degenerate = false;

  std::size_t length() const noexcept { return static_cast<std::size_t>(values.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(values.cols()); }

  /// Last ceil(fraction * T) rows.
  SummarySeries tail(double fraction) const {
    const auto T = values.rows();
    const auto keep = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::ceil(fraction * static_cast<double>(T))), 0, T);
    SummarySeries out = *this;
    out.values = values.bottomRows(keep);
    return out;
  }

  std::vector<double> coordinate(std::size_t i) const {
    std::vector<double> out(length());
    for (std::size_t t = 0; t < length(); ++t) out[t] = values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i));
    return out;
  }
};

/// Builds mean/variance series (and optionally one flattened coordinate)
/// one stored slice at a time, so chains can be summarized while streaming.
class SummaryAccumulator {
 public:
  SummaryAccumulator(std::size_t walkers, std::size_t dim, std::optional<std::size_t> flat_coord = std::nullopt)
      : walkers_(walkers), dim_(dim), flat_coord_(flat_coord) {
    if (walkers == 0 || dim == 0) throw InvalidInput("summary: empty ensemble");
    if (flat_coord && *flat_coord >= dim) throw InvalidInput("summary: coordinate out of range");
  }

  void add(std::span<const double> slice) {
    if (slice.size() != walkers_ * dim_) throw InvalidInput("summary: slice has the wrong size");
    const auto L = static_cast<double>(walkers_);
    std::vector<double> mu(dim_, 0.0), var(dim_, 0.0);
    for (std::size_t j = 0; j < walkers_; ++j)
      for (std::size_t i = 0; i < dim_; ++i) mu[i] += slice[j * dim_ + i];
    for (auto& m : mu) m /= L;
    for (std::size_t j = 0; j < walkers_; ++j)
      for (std::size_t i = 0; i < dim_; ++i) {
        const double d = slice[j * dim_ + i] - mu[i];
        var[i] += d * d;
      }
    for (auto& v : var) v /= L;
    means_.insert(means_.end(), mu.begin(), mu.end());
    vars_.insert(vars_.end(), var.begin(), var.end());
    if (flat_coord_)
      for (std::size_t j = 0; j < walkers_; ++j) flat_.push_back(slice[j * dim_ + *flat_coord_]);
    ++count_;
  }

  void add(const WalkerEnsemble& s) {
    add(std::span<const double>(s.positions().data(), static_cast<std::size_t>(s.positions().size())));
  }

  std::size_t count() const noexcept { return count_; }

  SummarySeries mean_series(int run_id = 0) const { return build(means_, SummaryKind::EnsembleMean, run_id); }
  SummarySeries variance_series(int run_id = 0) const {
    SummarySeries s = build(vars_, SummaryKind::EnsembleVariance, run_id);
    s.degenerate = walkers_ < 2;
    return s;
  }
  /// X_c^{1..L}(t=0), X_c^{1..L}(t=1), ...
  const std::vector<double>& flat() const noexcept { return flat_; }

 private:
  SummarySeries build(const std::vector<double>& data, SummaryKind kind, int run_id) const {
    SummarySeries s;
    s.kind = kind;
    s.run_id = run_id;
    s.values.resize(static_cast<Eigen::Index>(count_), static_cast<Eigen::Index>(dim_));
    for (std::size_t t = 0; t < count_; ++t)
      for (std::size_t i = 0; i < dim_; ++i)
        s.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = data[t * dim_ + i];
    return s;
  }

  std::size_t walkers_, dim_;
  std::optional<std::size_t> flat_coord_;
  std::vector<double> means_, vars_, flat_;
  std::size_t count_ = 0;
};

inline SummaryAccumulator summarize(const ChainRecord& chain, std::optional<std::size_t> flat_coord = std::nullopt) {
  if (chain.stored() == 0) throw InvalidInput("summary: empty chain");
  SummaryAccumulator acc(chain.num_walkers(), chain.dim(), flat_coord);
  for (std::size_t t = 0; t < chain.stored(); ++t) acc.add(chain.slice(t));
  return acc;
}

inline SummarySeries ensemble_mean_series(const ChainRecord& chain, int run_id = 0) {
  return summarize(chain).mean_series(run_id);
}

/// Population variance over walkers (divisor L). A single-walker chain
/// yields zeros with `degenerate` set.
inline SummarySeries ensemble_variance_series(const ChainRecord& chain, int run_id = 0) {
  return summarize(chain).variance_series(run_id);
}

// ---------------------------------------------------------------------------
// Running statistics over the most recent half

struct RunningStats {
  std::vector<double> flat;
  std::vector<double> mean;
  std::vector<double> sd;
};

/// At 1-based position p the window is positions floor(p/2)+1 .. p.
/// Population standard deviation.
inline RunningStats running_last_half(std::vector<double> flat) {
  RunningStats out;
  const std::size_t N = flat.size();
  out.mean.resize(N);
  out.sd.resize(N);
  if (N == 0) {
    out.flat = std::move(flat);
    return out;
  }
  double center = 0.0;
  for (double v : flat) center += v;
  center /= static_cast<double>(N);
  std::vector<double> s1(N + 1, 0.0), s2(N + 1, 0.0);
  for (std::size_t p = 0; p < N; ++p) {
    const double d = flat[p] - center;
    s1[p + 1] = s1[p] + d;
    s2[p + 1] = s2[p] + d * d;
  }
  for (std::size_t p = 1; p <= N; ++p) {
    const std::size_t lo = p / 2;  // prefix index of the first excluded position
    const auto cnt = static_cast<double>(p - lo);
    const double m = (s1[p] - s1[lo]) / cnt;
    const double v = std::max(0.0, (s2[p] - s2[lo]) / cnt - m * m);
    out.mean[p - 1] = center + m;
    out.sd[p - 1] = std::sqrt(v);
  }
  out.flat = std::move(flat);
  return out;
}

inline RunningStats flatten_and_running_stats(const ChainRecord& chain, std::size_t coord) {
  return running_last_half(summarize(chain, coord).flat());
}

// ---------------------------------------------------------------------------
// Multivariate potential scale reduction factor

struct PsrfReport {
  /// Absent when W is singular.
  std::optional<double> r_hat;
  double lambda_max = 0.0;
  bool w_singular = false;
  std::size_t m_runs = 0;
  std::size_t t_len = 0;
  Eigen::MatrixXd between_over_t;  // B / T
  Eigen::MatrixXd within;          // W
  Eigen::MatrixXd v_hat;           // posterior covariance estimate
};

inline PsrfReport mpsrf(std::span<const SummarySeries> runs) {
  const std::size_t M = runs.size();
  if (M < 2) throw InvalidInput("mpsrf needs at least two runs");
  const std::size_t T = runs[0].length();
  const std::size_t n = runs[0].dim();
  if (T < 2 || n == 0) throw InvalidInput("mpsrf needs series of length >= 2");
  for (const auto& r : runs)
    if (r.length() != T || r.dim() != n) throw InvalidInput("mpsrf: run shapes differ");
  if (!std::all_of(runs.begin(), runs.end(), [](const SummarySeries& r) { return r.values.allFinite(); }))
    throw InvalidInput("mpsrf: non-finite series values");

  const auto Md = static_cast<double>(M);
  const auto Td = static_cast<double>(T);
  const auto ni = static_cast<Eigen::Index>(n);

  std::vector<Eigen::VectorXd> chain_means(M);
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(ni, ni);
  for (std::size_t j = 0; j < M; ++j) {
    chain_means[j] = runs[j].values.colwise().mean().transpose();
    const Eigen::MatrixXd centered = runs[j].values.rowwise() - chain_means[j].transpose();
    W.noalias() += centered.transpose() * centered;
  }
  W /= Md * (Td - 1.0);

  // Deviations are taken from the first run's mean so identical runs give B = 0 exactly.
  Eigen::MatrixXd D(ni, static_cast<Eigen::Index>(M));
  for (std::size_t j = 0; j < M; ++j) D.col(static_cast<Eigen::Index>(j)) = chain_means[j] - chain_means[0];
  const Eigen::VectorXd dbar = D.rowwise().mean();
  Eigen::MatrixXd B = (D * D.transpose() - Md * dbar * dbar.transpose()) / (Md - 1.0);
  B = 0.5 * (B + B.transpose());

  PsrfReport rep;
  rep.m_runs = M;
  rep.t_len = T;
  rep.between_over_t = B;
  rep.within = W;
  rep.v_hat = (Td - 1.0) / Td * W + (Md + 1.0) / Md * B;

  const double mean_diag = W.diagonal().mean();
  Eigen::LLT<Eigen::MatrixXd> llt(W);
  bool singular = !(mean_diag > 0.0) || llt.info() != Eigen::Success;
  if (!singular) {
    const Eigen::MatrixXd C = llt.matrixL();
    const double min_pivot = C.diagonal().array().square().minCoeff();
    singular = !(min_pivot >= 1e-12 * mean_diag);
  }
  if (singular) {
    rep.w_singular = true;
    rep.lambda_max = std::numeric_limits<double>::quiet_NaN();
    return rep;
  }

  // Largest eigenvalue of W^{-1} B/T via the symmetric C^{-1} (B/T) C^{-T}.
  const auto Lc = llt.matrixL();
  const Eigen::MatrixXd X = Lc.solve(B);
  Eigen::MatrixXd S = Lc.solve(X.transpose());
  S = 0.5 * (S + S.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S, Eigen::EigenvaluesOnly);
  rep.lambda_max = std::max(0.0, eig.eigenvalues().maxCoeff());
  rep.r_hat = (Td - 1.0) / Td + (Md + 1.0) / Md * rep.lambda_max;
  return rep;
}

// ---------------------------------------------------------------------------
// Heidelberger-Welch

/// Spectral density at frequency zero (variance-of-the-mean scale: for
/// white noise it equals the variance). Mean of the periodogram over the
/// lowest ceil(sqrt(N)) nonzero Fourier frequencies.
inline double spectrum0(std::span<const double> x) {
  const std::size_t N = x.size();
  if (N < 4) throw InvalidInput("spectrum0: series too short");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(N);
  const std::size_t K = std::min(static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(N)))), N / 2);
  double acc = 0.0;
  for (std::size_t k = 1; k <= K; ++k) {
    const double omega = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(N);
    const std::complex<double> step = std::polar(1.0, -omega);
    std::complex<double> phase = 1.0;
    std::complex<double> sum = 0.0;
    for (std::size_t t = 0; t < N; ++t) {
      sum += (x[t] - mean) * phase;
      phase *= step;
      if ((t & 1023u) == 1023u) phase = std::polar(1.0, -omega * static_cast<double>(t + 1));
    }
    acc += std::norm(sum) / static_cast<double>(N);
  }
  return acc / static_cast<double>(K);
}

/// Asymptotic CDF of the Cramer-von Mises (Brownian bridge) statistic,
/// series in K_{1/4} Bessel functions. Terms are summed until the exponent
/// cuts them below relative size 1e-5; the number of terms needed grows like
/// sqrt(q), so a fixed short truncation understates the CDF for large q.
inline double cramer_von_mises_cdf(double q) {
  if (!(q > 0.0)) return 0.0;
  if (q >= 50.0) return 1.0;
  const double log_eps = std::log(1e-5);
  double total = 0.0;
  for (int k = 0;; ++k) {
    const double u = (4.0 * k + 1.0) * (4.0 * k + 1.0) / (16.0 * q);
    if (u > -log_eps) break;
    const double z = std::exp(std::lgamma(k + 0.5) - std::lgamma(k + 1.0)) * std::sqrt(4.0 * k + 1.0) /
                     (std::pow(std::numbers::pi, 1.5) * std::sqrt(q));
    total += z * std::exp(-u) * std::cyl_bessel_k(0.25, u);
  }
  return std::min(1.0, total);
}

struct HwReport {
  bool passed = false;
  double fraction_discarded = 0.0;
  double cvm_statistic = 0.0;
  double p_value = 0.0;
  std::optional<bool> halfwidth_passed;
  double eps = 0.1;
  double mean = 0.0;
  double halfwidth = 0.0;

  /// Passed without discarding anything.
  bool passed_stage0() const noexcept { return passed && fraction_discarded == 0.0; }
};

namespace detail {

inline double cvm_stage_statistic(std::span<const double> y, double s0) {
  const std::size_t n = y.size();
  double ybar = 0.0;
  for (double v : y) ybar += v;
  ybar /= static_cast<double>(n);
  double cum = 0.0, total = 0.0;
  const double scale = static_cast<double>(n) * s0;
  for (std::size_t k = 0; k < n; ++k) {
    cum += y[k] - ybar;
    total += cum * cum / scale;
  }
  return total / static_cast<double>(n);
}

}  // namespace detail

/// Stationarity test on the whole series, then after discarding 10%, 20%,
/// ... up to 50% from the front until it passes. The spectral density is
/// estimated once from the last half of the full series. On a pass the
/// half-width test is run on the retained segment.
inline HwReport heidelberger_welch(std::span<const double> series, double alpha_level = 0.05, double eps = 0.1) {
  const std::size_t N = series.size();
  if (N < 50) throw InvalidInput("heidelberger_welch needs at least 50 values");
  if (!(alpha_level > 0.0 && alpha_level < 1.0)) throw InvalidParameter("alpha_level must lie in (0, 1)");
  const auto [lo, hi] = std::minmax_element(series.begin(), series.end());
  if (*lo == *hi) throw InvalidInput("heidelberger_welch: zero-variance series");

  const double s0 = spectrum0(series.subspan(N / 2));
  if (!(s0 > 0.0)) throw InvalidInput("heidelberger_welch: zero spectral density");

  HwReport rep;
  rep.eps = eps;
  for (int stage = 0; stage <= 5; ++stage) {
    const std::size_t start = static_cast<std::size_t>(stage) * N / 10;
    const auto y = series.subspan(start);
    rep.fraction_discarded = stage / 10.0;
    rep.cvm_statistic = detail::cvm_stage_statistic(y, s0);
    rep.p_value = 1.0 - cramer_von_mises_cdf(rep.cvm_statistic);
    if (cramer_von_mises_cdf(rep.cvm_statistic) < 1.0 - alpha_level) {
      rep.passed = true;
      double m = 0.0;
      for (double v : y) m += v;
      m /= static_cast<double>(y.size());
      rep.mean = m;
      rep.halfwidth = 1.96 * std::sqrt(spectrum0(y) / static_cast<double>(y.size()));
      rep.halfwidth_passed = std::abs(rep.halfwidth / m) < eps;
      return rep;
    }
  }
  return rep;
}

}  // namespace aies
