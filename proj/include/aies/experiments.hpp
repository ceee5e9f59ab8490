// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aies/chain.hpp"
#include "aies/config.hpp"
#include "aies/diagnostics.hpp"
#include "aies/ensemble.hpp"
#include "aies/error.hpp"
#include "aies/metropolis.hpp"
#include "aies/targets.hpp"
#include "aies/theory.hpp"

namespace aies {

using json = nlohmann::ordered_json;

namespace detail {

inline std::filesystem::path prepare_out_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec || !std::filesystem::is_directory(p)) throw InvalidInput("cannot create output directory '" + dir + "'");
  return p;
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw InvalidInput("cannot write '" + path.string() + "'");
  os << j.dump(2) << '\n';
  if (!os) throw InvalidInput("write to '" + path.string() + "' failed");
}

inline std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw InvalidInput("cannot write '" + path.string() + "'");
  os << std::setprecision(17);
  return os;
}

inline json metadata_json(const Metadata& m) {
  json j = json::object();
  for (const auto& [k, v] : m) j[k] = v;
  return j;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// One sampler run

struct RunSummary {
  int run = 0;
  InitSpec init;
  std::uint64_t seed = 0;
  double acceptance_rate = 0.0;
  /// x_1 over the last half of the flattened, thinned series
  double mu_x1 = 0.0;
  double sigma_x1 = 0.0;
  std::uint64_t likelihood_evaluations = 0;
  SummarySeries mean;
  SummarySeries variance;
};

inline std::uint64_t run_seed(const ExperimentConfig& c, std::size_t run) {
  return derive_seed(c.seed, StreamPurpose::RunSeed, run);
}

/// Runs init spec `run` of the config against `target`. Stored slices are
/// summarized on the fly and, when `writer` is given, streamed to disk.
template <LogDensity T>
RunSummary execute_run(const ExperimentConfig& c, const T& target, std::size_t run, ChainWriter* writer = nullptr) {
  const EffectiveCounts e = effective_counts(c);
  const StretchParams params = c.stretch_params();
  const InitSpec init = c.inits.at(run);
  const std::uint64_t seed = run_seed(c, run);
  WalkerEnsemble state = init_ensemble(e.walkers, c.dim, init, seed);

  SummaryAccumulator acc(e.walkers, c.dim, std::size_t{0});
  MoveLog log;
  run_chain(
      state, target, params, e.iterations,
      [&](const WalkerEnsemble& s) {
        acc.add(s);
        if (writer) writer->append({s.positions().data(), static_cast<std::size_t>(s.positions().size())});
      },
      &log);
  if (writer) writer->finish(log);

  RunSummary out;
  out.run = static_cast<int>(run);
  out.init = init;
  out.seed = seed;
  out.acceptance_rate = log.acceptance_rate();
  const RunningStats rs = running_last_half(acc.flat());
  out.mu_x1 = rs.mean.back();
  out.sigma_x1 = rs.sd.back();
  out.likelihood_evaluations = e.walkers + log.size();
  out.mean = acc.mean_series(out.run);
  out.variance = acc.variance_series(out.run);
  return out;
}

inline json run_json(const RunSummary& r) {
  return json{{"run", r.run},
              {"init_mean", r.init.mean},
              {"init_sd", r.init.sd},
              {"seed", r.seed},
              {"acceptance_rate", r.acceptance_rate},
              {"mu_x1", r.mu_x1},
              {"sigma_x1", r.sigma_x1},
              {"likelihood_evaluations", r.likelihood_evaluations}};
}

// ---------------------------------------------------------------------------
// Diagnostics over M runs

struct HwEntry {
  std::string series;  // "mean" or "variance"
  int run = 0;
  std::optional<HwReport> report;
  std::string error;
};

struct DiagnosticsReport {
  PsrfReport mean;
  PsrfReport variance;
  std::vector<HwEntry> hw;
  bool hw_mean_passed = false;
  bool hw_variance_passed = false;

  bool w_singular() const noexcept { return mean.w_singular || variance.w_singular; }
};

/// Gelman-Rubin on the post-burn-in window of the mean and variance
/// series, and Heidelberger-Welch on coordinate hw_coord of each. A series
/// kind is PASSED when every run passes without further discarding.
inline DiagnosticsReport diagnose_series(const std::vector<SummarySeries>& means,
                                         const std::vector<SummarySeries>& variances, const ExperimentConfig& c) {
  const double keep = 1.0 - c.burn_fraction;
  std::vector<SummarySeries> m, v;
  for (const auto& s : means) m.push_back(s.tail(keep));
  for (const auto& s : variances) v.push_back(s.tail(keep));

  DiagnosticsReport rep;
  rep.mean = mpsrf(m);
  rep.variance = mpsrf(v);
  rep.hw_mean_passed = rep.hw_variance_passed = true;
  auto hw = [&](const std::vector<SummarySeries>& runs, const char* name, bool& all) {
    for (const auto& s : runs) {
      HwEntry e;
      e.series = name;
      e.run = s.run_id;
      try {
        e.report = heidelberger_welch(s.coordinate(c.hw_coord - 1), c.hw_alpha, c.hw_eps);
        if (!e.report->passed_stage0()) all = false;
      } catch (const InvalidInput& ex) {
        e.error = ex.what();
        all = false;
      }
      rep.hw.push_back(std::move(e));
    }
  };
  hw(m, "mean", rep.hw_mean_passed);
  hw(v, "variance", rep.hw_variance_passed);
  return rep;
}

inline json psrf_json(const PsrfReport& p) {
  json j;
  j["r_hat"] = p.r_hat ? json(*p.r_hat) : json(nullptr);
  j["lambda_max"] = p.lambda_max;
  j["w_singular"] = p.w_singular;
  j["m_runs"] = p.m_runs;
  j["t_len"] = p.t_len;
  return j;
}

inline json diagnostics_json(const DiagnosticsReport& r) {
  json j;
  j["r_hat_mean"] = r.mean.r_hat ? json(*r.mean.r_hat) : json(nullptr);
  j["r_hat_var"] = r.variance.r_hat ? json(*r.variance.r_hat) : json(nullptr);
  j["lambda_max"] = {{"mean", r.mean.lambda_max}, {"var", r.variance.lambda_max}};
  j["w_singular"] = r.w_singular();
  j["psrf_mean"] = psrf_json(r.mean);
  j["psrf_var"] = psrf_json(r.variance);
  j["hw_mean"] = r.hw_mean_passed ? "PASSED" : "FAILED";
  j["hw_var"] = r.hw_variance_passed ? "PASSED" : "FAILED";
  json hw = json::array();
  for (const auto& e : r.hw) {
    json h{{"series", e.series}, {"run", e.run}};
    if (e.report) {
      h["passed"] = e.report->passed;
      h["passed_stage0"] = e.report->passed_stage0();
      h["fraction_discarded"] = e.report->fraction_discarded;
      h["cvm"] = e.report->cvm_statistic;
      h["p"] = e.report->p_value;
      h["halfwidth_passed"] = e.report->halfwidth_passed ? json(*e.report->halfwidth_passed) : json(nullptr);
    } else {
      h["passed"] = false;
      h["error"] = e.error;
    }
    hw.push_back(std::move(h));
  }
  j["hw"] = std::move(hw);
  return j;
}

// ---------------------------------------------------------------------------
// Commands. Each writes its outputs under c.out and returns what it wrote.

inline std::string run_file_name(std::size_t run) { return "run_" + std::to_string(run) + ".aies"; }

struct SampleResult {
  std::vector<RunSummary> runs;
  std::vector<std::string> chain_files;
  json report;
};

inline SampleResult cmd_sample(const ExperimentConfig& c, std::ostream& log) {
  validate_config(c, false);
  const auto dir = detail::prepare_out_dir(c.out);
  const TargetBundle target = make_target(c);
  const EffectiveCounts e = effective_counts(c);
  const StretchParams params = c.stretch_params();

  SampleResult res;
  json runs = json::array();
  for (std::size_t m = 0; m < c.inits.size(); ++m) {
    Metadata meta = config_metadata(c);
    meta.emplace_back("run", std::to_string(m));
    meta.emplace_back("init_mean", detail::fmt(c.inits[m].mean));
    meta.emplace_back("init_sd", detail::fmt(c.inits[m].sd));
    const auto path = dir / run_file_name(m);
    ChainWriter writer(path.string(), ChainHeader{e.walkers, c.dim, stored_count(e.iterations, params.thin),
                                                  params.thin, run_seed(c, m), meta});
    RunSummary r = execute_run(c, target.density, m, &writer);
    log << "run " << m << ": init N(" << r.init.mean << ", " << r.init.sd << "^2)  acceptance "
        << std::fixed << std::setprecision(4) << r.acceptance_rate << "  mu_x1 " << std::setprecision(6) << r.mu_x1
        << "  sigma_x1 " << r.sigma_x1 << std::defaultfloat << '\n';
    if (c.csv) {
      std::ofstream os(dir / ("run_" + std::to_string(m) + ".csv"));
      if (!os) throw InvalidInput("cannot write CSV export");
      export_csv(os, read_chain(path.string()), static_cast<int>(m));
    }
    runs.push_back(run_json(r));
    res.chain_files.push_back(path.string());
    res.runs.push_back(std::move(r));
  }
  res.report = json{{"command", "sample"}, {"config", detail::metadata_json(config_metadata(c))}, {"runs", runs}};
  detail::write_json(dir / "sample_report.json", res.report);
  return res;
}

struct DiagnoseResult {
  DiagnosticsReport diagnostics;
  json report;
};

/// Reads M chain files (streaming) and writes diagnose_report.json.
inline DiagnoseResult cmd_diagnose(const std::vector<std::string>& files, const ExperimentConfig& c) {
  if (files.size() < 2) throw InvalidParameter("diagnose needs at least two chain files");
  if (!(c.burn_fraction >= 0.0 && c.burn_fraction < 1.0)) throw InvalidParameter("burn_fraction must be in [0, 1)");
  std::vector<SummarySeries> means, vars;
  std::optional<ChainHeader> first;
  json inputs = json::array();
  for (std::size_t m = 0; m < files.size(); ++m) {
    ChainReader reader(files[m]);
    const ChainHeader& h = reader.header();
    if (first && (h.walkers != first->walkers || h.dim != first->dim || h.stored != first->stored))
      throw InvalidInput("chain '" + files[m] + "' does not match the shape of the first chain");
    if (!first) first = h;
    if (c.hw_coord == 0 || c.hw_coord > h.dim) throw InvalidParameter("hw_coord out of range");
    SummaryAccumulator acc(h.walkers, h.dim);
    std::vector<double> slice;
    while (reader.next(slice)) acc.add(slice);
    means.push_back(acc.mean_series(static_cast<int>(m)));
    vars.push_back(acc.variance_series(static_cast<int>(m)));
    inputs.push_back(json{{"file", std::filesystem::path(files[m]).filename().string()},
                          {"walkers", h.walkers},
                          {"dim", h.dim},
                          {"stored", h.stored},
                          {"thin", h.thin},
                          {"seed", h.seed},
                          {"metadata", detail::metadata_json(h.metadata)}});
  }
  DiagnoseResult res;
  res.diagnostics = diagnose_series(means, vars, c);
  res.report = diagnostics_json(res.diagnostics);
  res.report["burn_fraction"] = c.burn_fraction;
  res.report["hw_coord"] = c.hw_coord;
  res.report["hw_eps"] = c.hw_eps;
  res.report["inputs"] = std::move(inputs);
  const auto dir = detail::prepare_out_dir(c.out);
  detail::write_json(dir / "diagnose_report.json", res.report);
  return res;
}

struct SuiteResult {
  std::vector<RunSummary> runs;
  DiagnosticsReport diagnostics;
  json report;
};

/// Multi-run protocol on an arbitrary config without persisting chains.
inline SuiteResult run_protocol(const ExperimentConfig& c) {
  validate_config(c, true);
  const TargetBundle target = make_target(c);
  SuiteResult res;
  std::vector<SummarySeries> means, vars;
  for (std::size_t m = 0; m < c.inits.size(); ++m) {
    res.runs.push_back(execute_run(c, target.density, m));
    means.push_back(res.runs.back().mean);
    vars.push_back(res.runs.back().variance);
  }
  res.diagnostics = diagnose_series(means, vars, c);
  return res;
}

/// Rosenbrock with L = 10n (unless walkers is set) over the M init specs:
/// the Gelman-Rubin/H-W table and the per-run x_1 estimates.
inline SuiteResult cmd_rosenbrock_suite(ExperimentConfig c, std::ostream& log) {
  c.target = "rosenbrock";
  if (c.dim % 2 != 0) throw InvalidParameter("rosenbrock needs an even dimension");
  SuiteResult res = run_protocol(c);
  const auto dir = detail::prepare_out_dir(c.out);
  json runs = json::array();
  auto table = detail::open_csv(dir / "rosenbrock_table.csv");
  table << "run,init_mean,init_sd,mu_x1,sigma_x1,acceptance_rate\n";
  for (const auto& r : res.runs) {
    runs.push_back(run_json(r));
    table << r.run << ',' << r.init.mean << ',' << r.init.sd << ',' << r.mu_x1 << ',' << r.sigma_x1 << ','
          << r.acceptance_rate << '\n';
  }
  res.report = json{{"command", "rosenbrock"},
                    {"config", detail::metadata_json(config_metadata(c))},
                    {"true_mu_x1", 1.0},
                    {"true_sigma_x1", 0.7},
                    {"runs", runs},
                    {"diagnostics", diagnostics_json(res.diagnostics)}};
  detail::write_json(dir / "rosenbrock_report.json", res.report);
  const auto fmt_r = [](const PsrfReport& p) { return p.r_hat ? detail::fmt(*p.r_hat) : std::string("singular"); };
  log << "n=" << c.dim << "  R_mu " << fmt_r(res.diagnostics.mean) << "  R_sigma " << fmt_r(res.diagnostics.variance)
      << "  HW " << (res.diagnostics.hw_mean_passed ? "PASSED" : "FAILED") << '/'
      << (res.diagnostics.hw_variance_passed ? "PASSED" : "FAILED") << '\n';
  for (const auto& r : res.runs)
    log << "  run " << r.run << "  mu_x1 " << r.mu_x1 << "  sigma_x1 " << r.sigma_x1 << '\n';
  log << "  true values approx 1.0 and 0.7\n";
  return res;
}

struct ZtraceResult {
  std::vector<ZProfile> profiles;
  json report;
};

/// Accepted-Z profiles for every (n, sigma0) pair with L = 2n walkers
/// unless walkers is set.
inline ZtraceResult cmd_ztrace(const ExperimentConfig& c, std::ostream& log) {
  c.stretch_params().validate();
  const auto dir = detail::prepare_out_dir(c.out);
  auto csv = detail::open_csv(dir / "ztrace.csv");
  csv << "n,sigma0,z,accepted\n";
  ZtraceResult res;
  json rows = json::array();
  std::size_t idx = 0;
  for (std::size_t n : c.dims)
    for (double s0 : c.sigma0) {
      const std::size_t L = c.walkers ? c.walkers : 2 * n;
      ZProfile p = z_profile_experiment(n, s0, c.repetitions, L, c.a,
                                        derive_seed(c.seed, StreamPurpose::Replicate, idx++), c.scheduler);
      for (double z : p.accepted_z) csv << n << ',' << s0 << ',' << z << ",1\n";
      for (double z : p.rejected_z) csv << n << ',' << s0 << ',' << z << ",0\n";
      rows.push_back(json{{"n", n},
                          {"sigma0", s0},
                          {"walkers", L},
                          {"repetitions", p.repetitions},
                          {"accepted", p.accepted_z.size()},
                          {"rejected", p.rejected_z.size()},
                          {"fraction_accepted_above_one", p.fraction_accepted_above_one()},
                          {"fraction_accepted_below_one", p.fraction_accepted_below_one()},
                          {"accepted_sd", p.accepted_sd()}});
      log << "n=" << n << " sigma0=" << s0 << "  accepted " << p.accepted_z.size() << '/'
          << (p.accepted_z.size() + p.rejected_z.size()) << "  above 1: " << p.fraction_accepted_above_one()
          << "  sd " << p.accepted_sd() << '\n';
      res.profiles.push_back(std::move(p));
    }
  res.report = json{{"command", "ztrace"}, {"a", c.a}, {"seed", c.seed}, {"profiles", rows}};
  detail::write_json(dir / "ztrace_report.json", res.report);
  return res;
}

struct PredictResult {
  VarianceTrajectory trajectory;
  json report;
};

/// Burn-in of the AR(1) target from the first init spec: Var_t(X_1) and the
/// whitened sd per iteration plus tangent estimates at the probe times.
/// Runs max(probes) + 10 iterations.
inline PredictResult cmd_predict(const ExperimentConfig& c, std::ostream& log) {
  c.stretch_params().validate();
  if (c.inits.empty()) throw InvalidParameter("predict needs an init spec");
  const Ar1Spec spec = Ar1Spec::make(c.alpha, c.dim);
  const EffectiveCounts e = effective_counts(c);
  std::size_t horizon = 0;
  for (std::size_t p : c.probes) horizon = std::max(horizon, p);
  horizon += 10;

  PredictResult res;
  res.trajectory =
      variance_trajectory(spec, e.walkers, c.inits.front(), horizon, c.probes, c.aux_iters, c.stretch_params(), c.seed);
  const auto dir = detail::prepare_out_dir(c.out);
  auto var = detail::open_csv(dir / "predict_variance.csv");
  var << "t,var_x1,q_sd\n";
  for (std::size_t i = 0; i < res.trajectory.t.size(); ++i)
    var << res.trajectory.t[i] << ',' << res.trajectory.var_x1[i] << ',' << res.trajectory.q_sd[i] << '\n';
  auto tan = detail::open_csv(dir / "predict_tangents.csv");
  tan << "t,r,ez2mz,var_x1,slope,no_accepted\n";
  json probes = json::array();
  for (const auto& t : res.trajectory.tangents) {
    tan << t.t << ',' << t.r << ',' << t.ez2mz << ',' << t.var_x1 << ',' << t.slope << ',' << (t.no_accepted ? 1 : 0)
        << '\n';
    probes.push_back(json{{"t", t.t}, {"r", t.r}, {"ez2mz", t.ez2mz}, {"var_x1", t.var_x1}, {"slope", t.slope},
                          {"no_accepted", t.no_accepted}});
    log << "t=" << t.t << "  slope " << t.slope << "  (r " << t.r << ", E[Z(Z-1)] " << t.ez2mz << ", Var " << t.var_x1
        << ")\n";
  }
  res.report = json{{"command", "predict"},
                    {"alpha", c.alpha},
                    {"dim", c.dim},
                    {"walkers", e.walkers},
                    {"init_mean", c.inits.front().mean},
                    {"init_sd", c.inits.front().sd},
                    {"aux_iters", c.aux_iters},
                    {"iterations", horizon},
                    {"scale", c.scale},
                    {"seed", c.seed},
                    {"tangents", probes}};
  detail::write_json(dir / "predict_report.json", res.report);
  return res;
}

struct MeanfieldResult {
  AlwaysAcceptResult result;
  json report;
};

/// Always-accept variance law on n = 1. Walker count defaults to 10^4.
inline MeanfieldResult cmd_meanfield(const ExperimentConfig& c, std::ostream& log) {
  const std::size_t base = c.walkers ? c.walkers : 10000;
  if (!(c.scale > 0.0)) throw InvalidParameter("scale must be positive");
  const auto L = static_cast<std::size_t>(std::llround(static_cast<double>(base) * c.scale));
  MeanfieldResult res;
  res.result = always_accept_variance_check(L, c.duration, c.a, c.seed, c.dt);
  const auto dir = detail::prepare_out_dir(c.out);
  auto csv = detail::open_csv(dir / "meanfield.csv");
  csv << "t,variance,mean\n";
  for (std::size_t i = 0; i < res.result.times.size(); ++i)
    csv << res.result.times[i] << ',' << res.result.variances[i] << ',' << res.result.means[i] << '\n';
  const double expected = expected_z_quadratic(c.a);
  const double drift = res.result.means.empty() ? 0.0 : res.result.means.back() - res.result.means.front();
  res.report = json{{"command", "meanfield"},
                    {"walkers", L},
                    {"a", c.a},
                    {"duration", c.duration},
                    {"dt", c.dt},
                    {"seed", c.seed},
                    {"scale", c.scale},
                    {"events", res.result.events},
                    {"fitted_rate", res.result.fitted_rate},
                    {"expected_rate", expected},
                    {"relative_error", std::abs(res.result.fitted_rate - expected) / expected},
                    {"ratio_to_twice_expected", res.result.fitted_rate / (2.0 * expected)},
                    {"mean_drift", drift},
                    {"truncated", res.result.truncated}};
  detail::write_json(dir / "meanfield_report.json", res.report);
  log << "fitted rate " << res.result.fitted_rate << "  expected " << expected << "  mean drift " << drift << '\n';
  return res;
}

struct BaselineResult {
  MetropolisRun run;
  json report;
};

/// Single-chain Metropolis from the origin; x_1 statistics over the last
/// (1 - burn_fraction) of the trace. The trace is written thinned.
inline BaselineResult cmd_baseline(const ExperimentConfig& c, std::ostream& log) {
  const TargetBundle target = make_target(c);
  const EffectiveCounts e = effective_counts(c);
  MetropolisParams mp;
  mp.scales = c.mh_scales;
  mp.weights = c.mh_weights;
  mp.seed = c.seed;
  if (c.thin == 0) throw InvalidParameter("thin must be positive");

  BaselineResult res;
  res.run = run_metropolis(target.density, std::vector<double>(c.dim, 0.0), mp, e.steps, 0, 0);
  const auto& tr = res.run.trace;
  const auto start = static_cast<std::size_t>(std::floor(c.burn_fraction * static_cast<double>(tr.size())));
  const std::span<const double> kept(tr.data() + start, tr.size() - start);
  double mean = 0.0, var = 0.0;
  for (double v : kept) mean += v;
  mean /= static_cast<double>(kept.size());
  for (double v : kept) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(kept.size()));
  const double ess = effective_sample_size(kept);

  const auto dir = detail::prepare_out_dir(c.out);
  auto csv = detail::open_csv(dir / "baseline_trace.csv");
  csv << "step,x1\n";
  for (std::size_t i = 0; i < tr.size(); i += c.thin) csv << (i + 1) << ',' << tr[i] << '\n';
  res.report = json{{"command", "baseline"},
                    {"target", c.target},
                    {"dim", c.dim},
                    {"steps", e.steps},
                    {"seed", c.seed},
                    {"scale", c.scale},
                    {"acceptance_rate", res.run.acceptance_rate()},
                    {"likelihood_evaluations", res.run.likelihood_evaluations},
                    {"mu_x1", mean},
                    {"sigma_x1", sd},
                    {"ess_x1", ess}};
  detail::write_json(dir / "baseline_report.json", res.report);
  log << "acceptance " << res.run.acceptance_rate() << "  mu_x1 " << mean << "  sigma_x1 " << sd << "  ESS " << ess
      << "  evaluations " << res.run.likelihood_evaluations << '\n';
  return res;
}

}  // namespace aies
