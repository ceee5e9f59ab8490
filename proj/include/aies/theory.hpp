// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "aies/ensemble.hpp"
#include "aies/error.hpp"
#include "aies/rng.hpp"
#include "aies/targets.hpp"

namespace aies {

// ---------------------------------------------------------------------------
// Large-n acceptance for a standard Gaussian target

/// log z - sigma^2 z (z - 1): the n -> infinity limit of h / n when walker
/// coordinates are i.i.d. with standard deviation sigma.
inline double f_sigma(double z, double sigma) {
  if (!(z > 0.0)) throw InvalidInput("f_sigma: z must be positive");
  return std::log(std::max(z, 1e-300)) - sigma * sigma * z * (z - 1.0);
}

/// Log acceptance ratio of a stretch move on N(0, I).
inline double h_gaussian(std::span<const double> x, std::span<const double> y, double z) {
  if (!(z > 0.0)) throw InvalidInput("h_gaussian: z must be positive");
  if (x.size() != y.size()) throw InvalidInput("h_gaussian: dimension mismatch");
  double prop = 0.0, cur = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double p = z * x[i] + (1.0 - z) * y[i];
    prop += p * p;
    cur += x[i] * x[i];
  }
  return static_cast<double>(x.size() - 1) * std::log(z) - 0.5 * prop + 0.5 * cur;
}

enum class AsymptoticAccept { AcceptWP1, RejectWP1, Critical };

inline AsymptoticAccept asymptotic_accept(double z, double sigma, double tol = 1e-9) {
  const double f = f_sigma(z, sigma);
  if (std::abs(f) < tol) return AsymptoticAccept::Critical;
  return f > 0.0 ? AsymptoticAccept::AcceptWP1 : AsymptoticAccept::RejectWP1;
}

// ---------------------------------------------------------------------------
// Moments of the stretch variable

struct ZMoments {
  double mean;
  double second;
};

/// E[Z] = (a + 1 + 1/a) / 3 and E[Z^2] = (a^2 + a + 1 + 1/a + 1/a^2) / 5,
/// the cancelled forms of the ratios of a^{k/2} - a^{-k/2}.
inline ZMoments stretch_z_moments(double a) {
  if (!(a > 1.0)) throw InvalidParameter("stretch scale a must be > 1");
  const double ia = 1.0 / a;
  return ZMoments{(a + 1.0 + ia) / 3.0, (a * a + a + 1.0 + ia + ia * ia) / 5.0};
}

/// E[Z (Z - 1)]: the exponential growth rate of the variance under the
/// always-accept dynamics.
inline double expected_z_quadratic(double a) {
  const ZMoments m = stretch_z_moments(a);
  return m.second - m.mean;
}

// ---------------------------------------------------------------------------
// Accepted-Z profiles

struct ZProfile {
  std::vector<double> accepted_z;
  std::vector<double> rejected_z;
  std::size_t n = 0;
  double sigma0 = 0.0;
  std::size_t repetitions = 0;

  double fraction_accepted_above_one() const {
    if (accepted_z.empty()) return 0.0;
    const auto c = std::count_if(accepted_z.begin(), accepted_z.end(), [](double z) { return z > 1.0; });
    return static_cast<double>(c) / static_cast<double>(accepted_z.size());
  }
  double fraction_accepted_below_one() const {
    if (accepted_z.empty()) return 0.0;
    const auto c = std::count_if(accepted_z.begin(), accepted_z.end(), [](double z) { return z < 1.0; });
    return static_cast<double>(c) / static_cast<double>(accepted_z.size());
  }
  /// Sample standard deviation of the accepted values.
  double accepted_sd() const {
    const std::size_t m = accepted_z.size();
    if (m < 2) return 0.0;
    const double mean = std::accumulate(accepted_z.begin(), accepted_z.end(), 0.0) / static_cast<double>(m);
    double ss = 0.0;
    for (double z : accepted_z) ss += (z - mean) * (z - mean);
    return std::sqrt(ss / static_cast<double>(m - 1));
  }
};

/// Repeatedly re-initializes L walkers with i.i.d. N(0, sigma0^2)
/// coordinates and runs one iteration on N(0, I_n), pooling the drawn z
/// values by acceptance.
inline ZProfile z_profile_experiment(std::size_t n, double sigma0, std::size_t repetitions, std::size_t L, double a,
                                     std::uint64_t seed, Scheduler scheduler = Scheduler::SplitHalf) {
  if (n == 0 || L == 0 || repetitions == 0) throw InvalidParameter("z_profile_experiment: sizes must be positive");
  if (!(sigma0 > 0.0)) throw InvalidParameter("z_profile_experiment: sigma0 must be positive");
  StretchParams params;
  params.a = a;
  params.scheduler = scheduler;
  params.validate();
  const StdGaussian target{n};

  ZProfile prof;
  prof.n = n;
  prof.sigma0 = sigma0;
  prof.repetitions = repetitions;
  MoveLog log;
  for (std::size_t r = 0; r < repetitions; ++r) {
    WalkerEnsemble ens = init_ensemble(L, n, InitSpec{0.0, sigma0}, derive_seed(seed, StreamPurpose::Replicate, r));
    log.clear();
    if (scheduler == Scheduler::ContinuousTime)
      run_continuous_time(ens, target, params, 1.0, 2.0, [](double, const WalkerEnsemble&) {}, &log);
    else
      step(ens, target, params, &log);
    for (std::size_t m = 0; m < log.size(); ++m)
      (log.accepted[m] ? prof.accepted_z : prof.rejected_z).push_back(log.z[m]);
  }
  return prof;
}

// ---------------------------------------------------------------------------
// Whitened coordinates of an i.i.d. start

/// Var(q_i) / Var(x_i) for i >= 2 when the x-coordinates are i.i.d.:
/// (1 + alpha^2) / (1 - alpha^2).
inline double initial_q_variance_factor(double alpha) {
  if (!(std::abs(alpha) < 1.0)) throw InvalidParameter("initial_q_variance_factor: |alpha| must be < 1");
  return (1.0 + alpha * alpha) / (1.0 - alpha * alpha);
}

/// Population variance over walkers of one coordinate.
inline double ensemble_coordinate_variance(const WalkerEnsemble& s, std::size_t coord) {
  const std::size_t L = s.num_walkers();
  double m = 0.0;
  for (std::size_t j = 0; j < L; ++j) m += s.walker(j)[coord];
  m /= static_cast<double>(L);
  double v = 0.0;
  for (std::size_t j = 0; j < L; ++j) {
    const double d = s.walker(j)[coord] - m;
    v += d * d;
  }
  return v / static_cast<double>(L);
}

inline double ensemble_coordinate_mean(const WalkerEnsemble& s, std::size_t coord) {
  double m = 0.0;
  for (std::size_t j = 0; j < s.num_walkers(); ++j) m += s.walker(j)[coord];
  return m / static_cast<double>(s.num_walkers());
}

/// Per-coordinate population sd over walkers of the whitened positions,
/// averaged over all n coordinates.
inline double mean_whitened_sd(const WalkerEnsemble& s, const Ar1Spec& spec) {
  const std::size_t L = s.num_walkers(), n = s.dim();
  std::vector<double> sum(n, 0.0);
  std::vector<std::vector<double>> q(L);
  for (std::size_t j = 0; j < L; ++j) {
    q[j] = whiten(s.walker(j), spec);
    for (std::size_t i = 0; i < n; ++i) sum[i] += q[j][i];
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double m = sum[i] / static_cast<double>(L);
    double v = 0.0;
    for (std::size_t j = 0; j < L; ++j) v += (q[j][i] - m) * (q[j][i] - m);
    total += std::sqrt(v / static_cast<double>(L));
  }
  return total / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Always-accept dynamics

struct AlwaysAcceptResult {
  std::vector<double> times;
  std::vector<double> variances;
  std::vector<double> means;
  double fitted_rate = 0.0;
  double initial_sd = 0.0;
  bool truncated = false;
  std::uint64_t events = 0;
};

/// Least-squares slope of log(y) against t.
inline double fit_log_slope(std::span<const double> t, std::span<const double> y) {
  if (t.size() != y.size() || t.size() < 2) throw InvalidInput("fit_log_slope: need matching series of length >= 2");
  const auto n = static_cast<double>(t.size());
  double st = 0.0, sl = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    st += t[i];
    sl += std::log(y[i]);
  }
  const double mt = st / n, ml = sl / n;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    num += (t[i] - mt) * (std::log(y[i]) - ml);
    den += (t[i] - mt) * (t[i] - mt);
  }
  return num / den;
}

/// Continuous-time sampler in one dimension with every proposal accepted,
/// starting from L i.i.d. N(0, 1) walkers. Records the ensemble variance
/// and mean on a grid of spacing dt and fits the exponential rate.
inline AlwaysAcceptResult always_accept_variance_check(std::size_t L, double duration, double a, std::uint64_t seed,
                                                       double dt = 0.05) {
  if (L < 2) throw InvalidParameter("always_accept_variance_check: need at least two walkers");
  if (!(duration > 0.0)) throw InvalidParameter("always_accept_variance_check: duration must be positive");
  StretchParams params;
  params.a = a;
  params.scheduler = Scheduler::ContinuousTime;
  params.accept_mode = AcceptMode::AlwaysAccept;
  params.validate();
  const StdGaussian target{1};

  WalkerEnsemble ens = init_ensemble(L, 1, InitSpec{0.0, 1.0}, seed);
  AlwaysAcceptResult res;
  res.initial_sd = std::sqrt(ensemble_coordinate_variance(ens, 0));
  res.events = run_continuous_time(ens, target, params, duration, dt, [&](double t, const WalkerEnsemble& s) {
    if (res.truncated) return;
    const double v = ensemble_coordinate_variance(s, 0);
    if (!std::isfinite(v) || v > 1e300 || !(v > 0.0)) {
      res.truncated = true;
      return;
    }
    res.times.push_back(t);
    res.variances.push_back(v);
    res.means.push_back(ensemble_coordinate_mean(s, 0));
  });
  if (res.times.size() >= 2) res.fitted_rate = fit_log_slope(res.times, res.variances);
  return res;
}

// ---------------------------------------------------------------------------
// Tangent slope of Var_t(X_1)

struct TangentEstimate {
  double t = 0.0;
  double r = 0.0;       // acceptance frequency
  double ez2mz = 0.0;   // mean of z (z - 1) over accepted moves
  double var_x1 = 0.0;  // Var_t(X_1) of the actual state
  double slope = 0.0;   // r * ez2mz * var_x1
  bool no_accepted = false;
};

inline TangentEstimate tangent_from_moves(const MoveLog& moves, double var_x1, double t) {
  TangentEstimate est;
  est.t = t;
  est.var_x1 = var_x1;
  std::size_t acc = 0;
  double sum = 0.0;
  for (std::size_t m = 0; m < moves.size(); ++m)
    if (moves.accepted[m]) {
      ++acc;
      sum += moves.z[m] * (moves.z[m] - 1.0);
    }
  if (moves.size() == 0 || acc == 0) {
    est.no_accepted = true;
    return est;
  }
  est.r = static_cast<double>(acc) / static_cast<double>(moves.size());
  est.ez2mz = sum / static_cast<double>(acc);
  est.slope = est.r * est.ez2mz * var_x1;
  return est;
}

/// Runs `aux_iters` independent single iterations, each starting from a
/// copy of the current walkers, pools every move and evaluates
/// r * E[Z~(Z~ - 1)] * Var_t(X_1). The state itself is not modified.
template <LogDensity T>
TangentEstimate tangent_slope_estimate(const WalkerEnsemble& state, const T& target, std::size_t aux_iters,
                                       const StretchParams& params) {
  if (aux_iters == 0) throw InvalidParameter("tangent_slope_estimate: aux_iters must be positive");
  MoveLog log;
  for (std::size_t r = 0; r < aux_iters; ++r) {
    WalkerEnsemble clone(state.positions(),
                         derive_seed(state.seed(), StreamPurpose::Auxiliary, r, state.iteration()));
    if (params.scheduler == Scheduler::ContinuousTime)
      run_continuous_time(clone, target, params, 1.0, 2.0, [](double, const WalkerEnsemble&) {}, &log);
    else
      step(clone, target, params, &log);
  }
  return tangent_from_moves(log, ensemble_coordinate_variance(state, 0), state.time());
}

// ---------------------------------------------------------------------------
// Burn-in trajectory on the AR(1) target

struct VarianceTrajectory {
  std::vector<double> t;       // 0..iterations
  std::vector<double> var_x1;  // Var_t(X_1)
  std::vector<double> q_sd;    // mean whitened-coordinate sd
  std::vector<TangentEstimate> tangents;
};

/// Runs the sampler on the AR(1) target from an i.i.d. start, recording
/// Var_t(X_1) and the mean whitened sd after every iteration, and a tangent
/// estimate at each probe time (probes beyond `iterations` are skipped).
inline VarianceTrajectory variance_trajectory(const Ar1Spec& spec, std::size_t L, const InitSpec& init,
                                              std::size_t iterations, std::span<const std::size_t> probes,
                                              std::size_t aux_iters, const StretchParams& params,
                                              std::uint64_t seed) {
  params.validate();
  if (params.scheduler == Scheduler::ContinuousTime)
    throw InvalidParameter("variance_trajectory: use a discrete scheduler");
  const Ar1Target target{spec};
  WalkerEnsemble ens = init_ensemble(L, spec.dim, init, seed);
  VarianceTrajectory out;
  auto record = [&] {
    out.t.push_back(ens.time());
    out.var_x1.push_back(ensemble_coordinate_variance(ens, 0));
    out.q_sd.push_back(mean_whitened_sd(ens, spec));
  };
  auto probe = [&] {
    if (aux_iters == 0) return;
    const auto it = ens.iteration();
    if (std::find(probes.begin(), probes.end(), it) != probes.end())
      out.tangents.push_back(tangent_slope_estimate(ens, target, aux_iters, params));
  };
  ens.ensure_primed(target);
  record();
  probe();
  for (std::size_t i = 0; i < iterations; ++i) {
    step(ens, target, params);
    record();
    probe();
  }
  return out;
}

}  // namespace aies
