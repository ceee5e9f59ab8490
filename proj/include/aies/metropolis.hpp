// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "aies/error.hpp"
#include "aies/rng.hpp"
#include "aies/targets.hpp"

namespace aies {

/// Proposal x' = x + s eps, eps ~ N(0, I), s drawn from a discrete scale mixture.
struct MetropolisParams {
  std::vector<double> scales{0.01, 0.1, 1.0};
  std::vector<double> weights{1.0, 1.0, 1.0};
  std::uint64_t seed = 0;

  void validate() const {
    if (scales.empty()) throw InvalidParameter("metropolis: at least one proposal scale required");
    if (weights.size() != scales.size()) throw InvalidParameter("metropolis: one weight per scale");
    for (double s : scales)
      if (!(s > 0.0) || !std::isfinite(s)) throw InvalidParameter("metropolis: scales must be positive");
    for (double w : weights)
      if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidParameter("metropolis: weights must be nonnegative");
    if (std::accumulate(weights.begin(), weights.end(), 0.0) <= 0.0)
      throw InvalidParameter("metropolis: weights must not all be zero");
  }
};

struct MhStep {
  std::vector<double> x;
  double log_prob;
  bool accepted;
};

/// min(0, log pi(x') - log pi(x)), NaN treated as rejection.
inline double mh_log_accept(double log_pi_x, double log_pi_proposal) noexcept {
  const double d = log_pi_proposal - log_pi_x;
  if (std::isnan(d)) return -std::numeric_limits<double>::infinity();
  return std::min(0.0, d);
}

/// Deterministic core: given the proposal and acceptance uniform.
template <LogDensity T>
MhStep mh_step_with(std::span<const double> x, double log_pi_x, std::vector<double> proposal, double u,
                    const T& target) {
  const double lp = target.log_density(proposal);
  if (u < std::exp(mh_log_accept(log_pi_x, lp))) return MhStep{std::move(proposal), lp, true};
  return MhStep{std::vector<double>(x.begin(), x.end()), log_pi_x, false};
}

template <LogDensity T>
MhStep mh_step(std::span<const double> x, double log_pi_x, const T& target, const MetropolisParams& params,
               Engine& rng) {
  std::discrete_distribution<std::size_t> pick(params.weights.begin(), params.weights.end());
  const double s = params.scales[pick(rng)];
  std::normal_distribution<double> normal;
  std::vector<double> prop(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) prop[i] = x[i] + s * normal(rng);
  const double u = uniform01(rng);
  return mh_step_with(x, log_pi_x, std::move(prop), u, target);
}

struct MetropolisRun {
  std::vector<double> trace;  // one coordinate, every step
  std::vector<double> final_state;
  std::size_t accepted = 0;
  std::size_t steps = 0;
  std::uint64_t likelihood_evaluations = 0;

  double acceptance_rate() const noexcept {
    return steps ? static_cast<double>(accepted) / static_cast<double>(steps) : 0.0;
  }
};

/// Single chain from x0 for `steps` steps, recording coordinate `coord`.
template <LogDensity T>
MetropolisRun run_metropolis(const T& target, std::vector<double> x0, const MetropolisParams& params,
                             std::size_t steps, std::size_t coord = 0, std::uint64_t chain_id = 0) {
  params.validate();
  if (x0.size() != target.dim()) throw InvalidInput("metropolis: start point has the wrong dimension");
  if (coord >= x0.size()) throw InvalidInput("metropolis: coordinate out of range");
  double lp = target.log_density(x0);
  if (!std::isfinite(lp)) throw NumericalFailure("metropolis: start point has zero density");

  Engine rng = substream(params.seed, StreamPurpose::Metropolis, chain_id, 0);
  std::discrete_distribution<std::size_t> pick(params.weights.begin(), params.weights.end());
  std::normal_distribution<double> normal;

  MetropolisRun run;
  run.likelihood_evaluations = 1;
  run.trace.reserve(steps);
  std::vector<double> x = std::move(x0), prop(x.size());
  for (std::size_t it = 0; it < steps; ++it) {
    const double s = params.scales[pick(rng)];
    for (std::size_t i = 0; i < x.size(); ++i) prop[i] = x[i] + s * normal(rng);
    const double lp_new = target.log_density(prop);
    ++run.likelihood_evaluations;
    if (uniform01(rng) < std::exp(mh_log_accept(lp, lp_new))) {
      std::swap(x, prop);
      lp = lp_new;
      ++run.accepted;
    }
    run.trace.push_back(x[coord]);
  }
  run.steps = steps;
  run.final_state = std::move(x);
  return run;
}

// ---------------------------------------------------------------------------
// Autocorrelation and effective sample size

/// Normalized autocorrelation rho(0..max_lag) with the biased (divisor T)
/// autocovariance, computed by FFT.
inline std::vector<double> autocorrelation(std::span<const double> series, std::size_t max_lag) {
  const std::size_t T = series.size();
  if (T < 2) throw InvalidInput("autocorrelation: series too short");
  max_lag = std::min(max_lag, T - 1);
  const double mean = std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(T);
  std::size_t N = 1;
  while (N < 2 * T) N <<= 1;
  std::vector<double> padded(N, 0.0);
  for (std::size_t t = 0; t < T; ++t) padded[t] = series[t] - mean;
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, padded);
  for (auto& c : spec) c = std::norm(c);
  std::vector<double> acov;
  fft.inv(acov, spec);
  const double c0 = acov[0];
  if (!(c0 > 0.0)) throw InvalidInput("autocorrelation: zero-variance series");
  std::vector<double> rho(max_lag + 1);
  for (std::size_t k = 0; k <= max_lag; ++k) rho[k] = acov[k] / c0;
  return rho;
}

/// T / (1 + 2 sum_k rho(k)). The sum runs over the initial positive
/// autocorrelations; when rho(1) is already negative the lag-1 term is the
/// only one included. The result is capped at T log10(T).
inline double effective_sample_size(std::span<const double> series) {
  const std::size_t T = series.size();
  if (T < 10) throw InvalidInput("effective_sample_size needs at least 10 values");
  const auto [lo, hi] = std::minmax_element(series.begin(), series.end());
  if (*lo == *hi) throw InvalidInput("effective_sample_size: constant series");
  const std::vector<double> rho = autocorrelation(series, T - 1);
  double sum = 0.0;
  for (std::size_t k = 1; k < rho.size(); ++k) {
    if (rho[k] < 0.0) {
      if (k == 1) sum = rho[1];
      break;
    }
    sum += rho[k];
  }
  const auto Td = static_cast<double>(T);
  const double cap = Td * std::log10(Td);
  const double tau = 1.0 + 2.0 * sum;
  if (!(tau > Td / cap)) return cap;
  return Td / tau;
}

}  // namespace aies
