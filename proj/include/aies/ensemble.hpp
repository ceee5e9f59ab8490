// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "aies/error.hpp"
#include "aies/rng.hpp"
#include "aies/targets.hpp"

namespace aies {

enum class Scheduler { SerialSweep, SplitHalf, ContinuousTime };

/// Metropolis is the real sampler. The other two modes exist for the
/// always-accept dynamics and for tests that need every move rejected.
enum class AcceptMode { Metropolis, AlwaysAccept, AlwaysReject };

struct StretchParams {
  double a = 2.0;
  Scheduler scheduler = Scheduler::SplitHalf;
  std::size_t thin = 1;
  AcceptMode accept_mode = AcceptMode::Metropolis;
  /// Worker threads for split-half half-iterations. Results do not depend on it.
  unsigned threads = 1;

  void validate() const {
    if (!(a > 1.0)) throw InvalidParameter("stretch scale a must be > 1");
    if (thin == 0) throw InvalidParameter("thin must be positive");
    if (threads == 0) throw InvalidParameter("threads must be positive");
  }
};

struct MoveOutcome {
  bool accepted = false;
  double z = 1.0;
  std::size_t walker_index = 0;
  double log_accept_prob = 0.0;
};

/// Every move, accepted or not, in execution order.
struct MoveLog {
  std::vector<double> z;
  std::vector<std::uint8_t> accepted;

  void record(const MoveOutcome& m) {
    z.push_back(m.z);
    accepted.push_back(m.accepted ? 1 : 0);
  }
  std::size_t size() const noexcept { return z.size(); }
  std::size_t accepted_count() const noexcept {
    return static_cast<std::size_t>(std::count(accepted.begin(), accepted.end(), std::uint8_t{1}));
  }
  double acceptance_rate() const noexcept {
    return z.empty() ? 0.0 : static_cast<double>(accepted_count()) / static_cast<double>(z.size());
  }
  void clear() {
    z.clear();
    accepted.clear();
  }
};

using WalkerMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// L walkers (rows) in n dimensions plus the sampler clock. The master
/// seed lives here so every scheduler can derive per-walker substreams.
class WalkerEnsemble {
 public:
  WalkerEnsemble(WalkerMatrix walkers, std::uint64_t seed)
      : walkers_(std::move(walkers)), seed_(seed) {
    if (walkers_.rows() < 1 || walkers_.cols() < 1) throw InvalidInput("ensemble must be non-empty");
    if (!walkers_.allFinite()) throw InvalidInput("walker coordinates must be finite");
  }

  std::size_t num_walkers() const noexcept { return static_cast<std::size_t>(walkers_.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(walkers_.cols()); }
  std::uint64_t seed() const noexcept { return seed_; }

  std::span<const double> walker(std::size_t k) const noexcept {
    return {walkers_.data() + k * dim(), dim()};
  }
  const WalkerMatrix& positions() const noexcept { return walkers_; }

  /// Iterations for the discrete schedulers, clock time for continuous time.
  double time() const noexcept { return time_; }
  std::uint64_t iteration() const noexcept { return iteration_; }
  std::uint64_t events() const noexcept { return events_; }

  const std::vector<double>& log_probs() const noexcept { return log_probs_; }

  /// Evaluate and cache log pi at every walker.
  template <LogDensity T>
  void prime(const T& target) {
    if (target.dim() != dim()) throw InvalidInput("target dimension does not match the ensemble");
    log_probs_.resize(num_walkers());
    for (std::size_t k = 0; k < num_walkers(); ++k) {
      const double lp = target.log_density(walker(k));
      if (!(lp > -std::numeric_limits<double>::infinity()) || std::isnan(lp))
        throw NumericalFailure("walker " + std::to_string(k) + " starts at zero target density");
      log_probs_[k] = lp;
    }
  }

  /// Must be called before stepping against a different target.
  void invalidate_cache() noexcept { log_probs_.clear(); }

  template <LogDensity T>
  void ensure_primed(const T& target) {
    if (log_probs_.size() != num_walkers()) prime(target);
  }

  void set_walker(std::size_t k, std::span<const double> x, double log_prob) {
    std::copy(x.begin(), x.end(), walkers_.data() + k * dim());
    log_probs_[k] = log_prob;
  }

  void advance_iteration() noexcept {
    ++iteration_;
    time_ = static_cast<double>(iteration_);
  }
  void set_clock(double t) noexcept { time_ = t; }
  void count_event() noexcept { ++events_; }

  double next_event_time() const noexcept { return next_event_time_; }
  void set_next_event_time(double t) noexcept { next_event_time_ = t; }

 private:
  WalkerMatrix walkers_;
  std::uint64_t seed_;
  double time_ = 0.0;
  std::uint64_t iteration_ = 0;
  std::uint64_t events_ = 0;
  double next_event_time_ = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> log_probs_;
};

// ---------------------------------------------------------------------------
// Stretch move primitives

/// Inverse CDF of g(z) ~ 1/sqrt(z) on [1/a, a].
inline double stretch_z_from_uniform(double u, double a) {
  if (!(a > 1.0)) throw InvalidParameter("stretch scale a must be > 1");
  const double ra = std::sqrt(a);
  const double w = (ra - 1.0 / ra) * u + 1.0 / ra;
  return w * w;
}

inline double sample_stretch_z(Engine& rng, double a) {
  return stretch_z_from_uniform(uniform01(rng), a);
}

/// z x + (1 - z) y
inline std::vector<double> stretch_propose(std::span<const double> x, std::span<const double> y, double z) {
  if (x.size() != y.size()) throw InvalidInput("stretch_propose: dimension mismatch");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = z * x[i] + (1.0 - z) * y[i];
  return out;
}

/// min(0, (n-1) log z + log pi(x~) - log pi(x)) from already evaluated densities.
inline double log_accept_from_values(std::size_t n, double z, double log_pi_x, double log_pi_proposal) noexcept {
  const double h = static_cast<double>(n - 1) * std::log(z) + log_pi_proposal - log_pi_x;
  if (std::isnan(h)) return -std::numeric_limits<double>::infinity();
  return std::min(0.0, h);
}

template <LogDensity T>
double log_accept_prob(const T& target, std::span<const double> x, std::span<const double> x_tilde, double z) {
  if (!(z > 0.0)) throw InvalidParameter("log_accept_prob: z must be positive");
  if (x.size() != target.dim() || x_tilde.size() != target.dim())
    throw InvalidInput("log_accept_prob: dimension mismatch");
  const double lx = target.log_density(x);
  if (!(lx > -std::numeric_limits<double>::infinity()) || std::isnan(lx))
    throw NumericalFailure("log_accept_prob: current point has zero density");
  return log_accept_from_values(x.size(), z, lx, target.log_density(x_tilde));
}

/// One stretch move of walker k along y with the stretch and acceptance
/// uniforms already drawn. Overwrites walker k in place on acceptance.
template <LogDensity T>
MoveOutcome stretch_move(WalkerEnsemble& state, std::size_t k, std::span<const double> y, double z,
                         double u_accept, const T& target, const StretchParams& params,
                         std::vector<double>& scratch) {
  const std::size_t n = state.dim();
  const auto x = state.walker(k);
  scratch.resize(n);
  for (std::size_t i = 0; i < n; ++i) scratch[i] = z * x[i] + (1.0 - z) * y[i];

  const double lp_new = target.log_density(scratch);
  const double lap = log_accept_from_values(n, z, state.log_probs()[k], lp_new);

  bool accept = false;
  switch (params.accept_mode) {
    case AcceptMode::Metropolis: accept = u_accept < std::exp(lap); break;
    case AcceptMode::AlwaysAccept: accept = true; break;
    case AcceptMode::AlwaysReject: accept = false; break;
  }
  if (accept) state.set_walker(k, scratch, lp_new);
  return MoveOutcome{accept, z, k, lap};
}

namespace detail {

template <LogDensity T>
MoveOutcome draw_and_move(WalkerEnsemble& state, std::size_t k, std::span<const double> y,
                          const T& target, const StretchParams& params, Engine& rng,
                          std::vector<double>& scratch) {
  const double z = sample_stretch_z(rng, params.a);
  const double u = uniform01(rng);
  return stretch_move(state, k, y, z, u, target, params, scratch);
}

inline void check_scheduler_shape(const WalkerEnsemble& s, Scheduler scheduler) {
  const std::size_t L = s.num_walkers();
  if (scheduler == Scheduler::SplitHalf) {
    if (L < 2 || L % 2 != 0) throw InvalidParameter("split-half scheduler needs an even number of walkers");
  } else if (L < s.dim() + 1) {
    throw InvalidParameter("serial and continuous-time schedulers need L >= n + 1 walkers");
  }
}

}  // namespace detail

/// Update walker k against a complementary walker drawn uniformly from
/// `pool` (current positions). Draw order: index, z, acceptance uniform.
template <LogDensity T>
MoveOutcome update_one_walker(WalkerEnsemble& state, std::size_t k, std::span<const std::size_t> pool,
                              const T& target, const StretchParams& params, Engine& rng) {
  if (pool.empty()) throw InvalidInput("update_one_walker: empty complementary pool");
  if (std::find(pool.begin(), pool.end(), k) != pool.end())
    throw InvalidInput("update_one_walker: main walker inside its complementary pool");
  state.ensure_primed(target);
  const std::size_t j = pool[uniform_index(rng, pool.size())];
  const std::vector<double> y(state.walker(j).begin(), state.walker(j).end());
  std::vector<double> scratch;
  return detail::draw_and_move(state, k, y, target, params, rng, scratch);
}

/// Walkers 1..L in order, each against all others at their current
/// (already updated) positions.
template <LogDensity T>
void step_serial_sweep(WalkerEnsemble& state, const T& target, const StretchParams& params,
                       MoveLog* log = nullptr) {
  params.validate();
  detail::check_scheduler_shape(state, Scheduler::SerialSweep);
  state.ensure_primed(target);
  const std::size_t L = state.num_walkers();
  std::vector<double> y(state.dim());
  std::vector<double> scratch;
  for (std::size_t k = 0; k < L; ++k) {
    Engine rng = substream(state.seed(), StreamPurpose::SerialSweep, k, state.iteration());
    std::size_t j = uniform_index(rng, L - 1);
    if (j >= k) ++j;
    const auto yj = state.walker(j);
    std::copy(yj.begin(), yj.end(), y.begin());
    const MoveOutcome m = detail::draw_and_move(state, k, y, target, params, rng, scratch);
    if (log) log->record(m);
  }
  state.advance_iteration();
}

namespace detail {

template <LogDensity T>
void split_half_phase(WalkerEnsemble& state, std::size_t first, std::size_t count, const WalkerMatrix& snapshot,
                      const T& target, const StretchParams& params, std::vector<MoveOutcome>& out) {
  out.assign(count, MoveOutcome{});
  const std::size_t pool = static_cast<std::size_t>(snapshot.rows());
  const std::size_t n = state.dim();
  const std::uint64_t iter = state.iteration();

  auto work = [&](std::size_t lo, std::size_t hi) {
    std::vector<double> scratch;
    for (std::size_t local = lo; local < hi; ++local) {
      const std::size_t k = first + local;
      Engine rng = substream(state.seed(), StreamPurpose::SplitHalf, k, iter);
      const std::size_t j = uniform_index(rng, pool);
      const std::span<const double> y(snapshot.data() + j * n, n);
      out[local] = draw_and_move(state, k, y, target, params, rng, scratch);
    }
  };

  const std::size_t threads = std::min<std::size_t>(params.threads, count);
  if (threads <= 1) {
    work(0, count);
    return;
  }
  std::vector<std::thread> pool_threads;
  std::vector<std::exception_ptr> errors(threads);
  const std::size_t chunk = (count + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t lo = t * chunk;
    const std::size_t hi = std::min(count, lo + chunk);
    pool_threads.emplace_back([&, lo, hi, t] {
      try {
        work(lo, hi);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool_threads) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// Two half-iterations: S0 = {1..L/2} against a frozen copy of
/// S1 = {L/2+1..L}, then S1 against a frozen copy of the updated S0.
template <LogDensity T>
void step_split_half(WalkerEnsemble& state, const T& target, const StretchParams& params,
                     MoveLog* log = nullptr) {
  params.validate();
  detail::check_scheduler_shape(state, Scheduler::SplitHalf);
  state.ensure_primed(target);
  const auto half = static_cast<Eigen::Index>(state.num_walkers() / 2);
  std::vector<MoveOutcome> outcomes;

  const WalkerMatrix upper = state.positions().bottomRows(half);
  detail::split_half_phase(state, 0, static_cast<std::size_t>(half), upper, target, params, outcomes);
  if (log)
    for (const auto& m : outcomes) log->record(m);

  const WalkerMatrix lower = state.positions().topRows(half);
  detail::split_half_phase(state, static_cast<std::size_t>(half), static_cast<std::size_t>(half), lower,
                           target, params, outcomes);
  if (log)
    for (const auto& m : outcomes) log->record(m);

  state.advance_iteration();
}

/// One full iteration with whichever discrete scheduler params selects.
template <LogDensity T>
void step(WalkerEnsemble& state, const T& target, const StretchParams& params, MoveLog* log = nullptr) {
  switch (params.scheduler) {
    case Scheduler::SerialSweep: step_serial_sweep(state, target, params, log); break;
    case Scheduler::SplitHalf: step_split_half(state, target, params, log); break;
    case Scheduler::ContinuousTime:
      throw InvalidParameter("step(): use run_continuous_time for the continuous-time scheduler");
  }
}

// ---------------------------------------------------------------------------
// Continuous time

struct Snapshot {
  double time;
  WalkerMatrix walkers;
};

/// Moves at the jumps of a rate-L Poisson process for `duration` units of
/// clock time. At each event the main walker is uniform on all L and the
/// complementary walker uniform on the other L-1. `on_snapshot(time, state)`
/// fires at t0, t0 + dt, ... up to t0 + duration. Returns the event count.
template <LogDensity T, class OnSnapshot>
std::uint64_t run_continuous_time(WalkerEnsemble& state, const T& target, const StretchParams& params,
                                  double duration, double snapshot_dt, OnSnapshot&& on_snapshot,
                                  MoveLog* log = nullptr) {
  params.validate();
  if (!(duration >= 0.0)) throw InvalidParameter("duration must be nonnegative");
  if (!(snapshot_dt > 0.0)) throw InvalidParameter("snapshot interval must be positive");
  detail::check_scheduler_shape(state, Scheduler::ContinuousTime);
  state.ensure_primed(target);

  const std::size_t L = state.num_walkers();
  const auto rate = static_cast<double>(L);
  const double t0 = state.time();
  const double t_end = t0 + duration;

  if (std::isnan(state.next_event_time())) {
    Engine clock = substream(state.seed(), StreamPurpose::ContinuousTime, 1, state.events());
    state.set_next_event_time(t0 + exponential(clock, rate));
  }

  std::uint64_t moves = 0;
  std::size_t grid = 0;
  std::vector<double> y(state.dim());
  std::vector<double> scratch;
  auto grid_time = [&](std::size_t g) { return t0 + static_cast<double>(g) * snapshot_dt; };

  while (true) {
    const double next = state.next_event_time();
    while (grid_time(grid) <= t_end && grid_time(grid) < next) {
      state.set_clock(grid_time(grid));
      on_snapshot(grid_time(grid), static_cast<const WalkerEnsemble&>(state));
      ++grid;
    }
    if (next > t_end) break;

    state.set_clock(next);
    Engine rng = substream(state.seed(), StreamPurpose::ContinuousTime, 0, state.events());
    const std::size_t k = uniform_index(rng, L);
    std::size_t j = uniform_index(rng, L - 1);
    if (j >= k) ++j;
    const auto yj = state.walker(j);
    std::copy(yj.begin(), yj.end(), y.begin());
    const MoveOutcome m = detail::draw_and_move(state, k, y, target, params, rng, scratch);
    if (log) log->record(m);
    state.set_next_event_time(next + exponential(rng, rate));
    state.count_event();
    ++moves;
  }
  state.set_clock(t_end);
  return moves;
}

template <LogDensity T>
std::vector<Snapshot> run_continuous_time(WalkerEnsemble& state, const T& target, const StretchParams& params,
                                          double duration, double snapshot_dt = 1.0, MoveLog* log = nullptr) {
  std::vector<Snapshot> out;
  run_continuous_time(
      state, target, params, duration, snapshot_dt,
      [&](double t, const WalkerEnsemble& s) { out.push_back(Snapshot{t, s.positions()}); }, log);
  return out;
}

// ---------------------------------------------------------------------------
// Initialization

struct InitSpec {
  double mean = 0.0;
  double sd = 1.0;
};

/// Every coordinate of every walker i.i.d. N(mean, sd^2), drawn from a
/// stream derived from `seed`; the same seed keys the sampler substreams.
inline WalkerEnsemble init_ensemble(std::size_t L, std::size_t n, const InitSpec& init, std::uint64_t seed) {
  if (L < 1 || n < 1) throw InvalidParameter("init_ensemble: L and n must be positive");
  if (!(init.sd > 0.0) || !std::isfinite(init.sd)) throw InvalidParameter("init_ensemble: sd must be positive");
  if (!std::isfinite(init.mean)) throw InvalidParameter("init_ensemble: mean must be finite");
  Engine rng = substream(seed, StreamPurpose::Init, 0, 0);
  std::normal_distribution<double> normal(init.mean, init.sd);
  WalkerMatrix w(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(n));
  for (Eigen::Index j = 0; j < w.rows(); ++j)
    for (Eigen::Index i = 0; i < w.cols(); ++i) w(j, i) = normal(rng);
  return WalkerEnsemble(std::move(w), seed);
}

inline const char* to_string(Scheduler s) {
  switch (s) {
    case Scheduler::SerialSweep: return "serial";
    case Scheduler::SplitHalf: return "split_half";
    case Scheduler::ContinuousTime: return "continuous";
  }
  return "?";
}

inline Scheduler parse_scheduler(const std::string& s) {
  if (s == "serial" || s == "serial_sweep") return Scheduler::SerialSweep;
  if (s == "split_half" || s == "split") return Scheduler::SplitHalf;
  if (s == "continuous" || s == "continuous_time") return Scheduler::ContinuousTime;
  throw InvalidParameter("unknown scheduler '" + s + "'");
}

}  // namespace aies
