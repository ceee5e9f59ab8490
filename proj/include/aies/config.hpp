// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "aies/chain.hpp"
#include "aies/ensemble.hpp"
#include "aies/error.hpp"
#include "aies/targets.hpp"

namespace aies {

// Text config: `key = value` lines, `#` comments, and `[run]` sections that
// each add one initialization spec (keys init_mean, init_sd). Lists are
// comma separated.
struct ExperimentConfig {
  std::string target = "ar1";
  double alpha = 0.9;
  std::size_t dim = 10;
  std::string affine_file;

  std::size_t walkers = 0;  // 0 picks 2n, or 10n for Rosenbrock
  double a = 2.0;
  Scheduler scheduler = Scheduler::SplitHalf;
  std::uint64_t iterations = 20000;
  std::size_t thin = 10;
  unsigned threads = 1;
  std::vector<InitSpec> inits{{0.0, 5.0}, {1.0, 5.0}, {-1.0, 5.0}, {0.0, 10.0}};

  std::uint64_t seed = 1;
  std::string out = "out";
  double scale = 1.0;
  bool csv = false;

  double burn_fraction = 0.5;
  double hw_alpha = 0.05;
  double hw_eps = 0.1;
  std::size_t hw_coord = 1;

  std::vector<double> sigma0{0.1, 1.0, 2.0};
  std::vector<std::size_t> dims{10, 100};
  std::size_t repetitions = 1000;
  std::size_t aux_iters = 100;
  std::vector<std::size_t> probes{2, 8, 14, 30, 50};
  double duration = 5.0;
  double dt = 0.05;

  std::uint64_t steps = 1000000;
  std::vector<double> mh_scales{0.01, 0.1, 1.0};
  std::vector<double> mh_weights{1.0, 1.0, 1.0};

  std::size_t default_walkers() const {
    if (walkers != 0) return walkers;
    return target == "rosenbrock" ? 10 * dim : 2 * dim;
  }

  StretchParams stretch_params() const {
    StretchParams p;
    p.a = a;
    p.scheduler = scheduler;
    p.thin = thin;
    p.threads = threads;
    return p;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw InvalidParameter("config: '" + key + "' expects a number, got '" + v + "'");
  }
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    const unsigned long long u = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return u;
  } catch (const std::exception&) {
    throw InvalidParameter("config: '" + key + "' expects a nonnegative integer, got '" + v + "'");
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw InvalidParameter("config: '" + key + "' expects true/false, got '" + v + "'");
}

// shortest form that round-trips
inline std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace detail

/// Sets one key. Returns normally or throws InvalidParameter for unknown
/// keys and malformed values.
inline void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& value) {
  using namespace detail;
  if (key == "target") c.target = value;
  else if (key == "alpha") c.alpha = to_double(key, value);
  else if (key == "dim") c.dim = to_u64(key, value);
  else if (key == "affine_file") c.affine_file = value;
  else if (key == "walkers") c.walkers = to_u64(key, value);
  else if (key == "a") c.a = to_double(key, value);
  else if (key == "scheduler") c.scheduler = parse_scheduler(value);
  else if (key == "iterations") c.iterations = to_u64(key, value);
  else if (key == "thin") c.thin = to_u64(key, value);
  else if (key == "threads") c.threads = static_cast<unsigned>(to_u64(key, value));
  else if (key == "seed") c.seed = to_u64(key, value);
  else if (key == "out") c.out = value;
  else if (key == "scale") c.scale = to_double(key, value);
  else if (key == "csv") c.csv = to_bool(key, value);
  else if (key == "burn_fraction") c.burn_fraction = to_double(key, value);
  else if (key == "hw_alpha") c.hw_alpha = to_double(key, value);
  else if (key == "hw_eps") c.hw_eps = to_double(key, value);
  else if (key == "hw_coord") c.hw_coord = to_u64(key, value);
  else if (key == "repetitions") c.repetitions = to_u64(key, value);
  else if (key == "aux_iters") c.aux_iters = to_u64(key, value);
  else if (key == "duration") c.duration = to_double(key, value);
  else if (key == "dt") c.dt = to_double(key, value);
  else if (key == "steps") c.steps = to_u64(key, value);
  else if (key == "sigma0" || key == "mh_scales" || key == "mh_weights") {
    std::vector<double> v;
    for (const auto& s : split_list(value)) v.push_back(to_double(key, s));
    if (key == "sigma0") c.sigma0 = std::move(v);
    else if (key == "mh_scales") c.mh_scales = std::move(v);
    else c.mh_weights = std::move(v);
  } else if (key == "dims" || key == "probes") {
    std::vector<std::size_t> v;
    for (const auto& s : split_list(value)) v.push_back(to_u64(key, s));
    (key == "dims" ? c.dims : c.probes) = std::move(v);
  } else if (key == "inits") {
    // mean:sd pairs, e.g. "0:5, 1:5, -1:5, 0:10"
    std::vector<InitSpec> v;
    for (const auto& item : split_list(value)) {
      const auto parts = split_list(item, ':');
      if (parts.size() != 2) throw InvalidParameter("config: inits entries are mean:sd, got '" + item + "'");
      v.push_back(InitSpec{to_double(key, parts[0]), to_double(key, parts[1])});
    }
    c.inits = std::move(v);
  } else {
    throw InvalidParameter("config: unknown key '" + key + "'");
  }
}

/// Splits "key=value".
inline std::pair<std::string, std::string> split_assignment(const std::string& line) {
  const auto eq = line.find('=');
  if (eq == std::string::npos) throw InvalidParameter("config: expected key = value, got '" + line + "'");
  std::string key = detail::trim(line.substr(0, eq));
  std::string value = detail::trim(line.substr(eq + 1));
  if (key.empty()) throw InvalidParameter("config: empty key in '" + line + "'");
  return {std::move(key), std::move(value)};
}

inline void parse_config(std::istream& is, ExperimentConfig& c) {
  std::string raw;
  std::vector<InitSpec> runs;
  std::optional<InitSpec> current;
  std::size_t lineno = 0;
  auto close_run = [&] {
    if (current) runs.push_back(*current);
    current.reset();
  };
  while (std::getline(is, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line != "[run]")
        throw InvalidParameter("config line " + std::to_string(lineno) + ": unknown section " + line);
      close_run();
      current = InitSpec{0.0, 1.0};
      continue;
    }
    const auto [key, value] = split_assignment(line);
    if (current) {
      if (key == "init_mean") current->mean = detail::to_double(key, value);
      else if (key == "init_sd") current->sd = detail::to_double(key, value);
      else throw InvalidParameter("config line " + std::to_string(lineno) + ": '" + key + "' not allowed in [run]");
    } else {
      apply_setting(c, key, value);
    }
  }
  close_run();
  if (!runs.empty()) c.inits = std::move(runs);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InvalidParameter("cannot read config file '" + path + "'");
  ExperimentConfig c;
  parse_config(is, c);
  return c;
}

/// Counts after applying the scale factor: iterations, walkers and
/// baseline steps are multiplied by `scale` and rounded. Split-half runs
/// round the walker count up to the next even number.
struct EffectiveCounts {
  std::uint64_t iterations;
  std::size_t walkers;
  std::uint64_t steps;
};

inline EffectiveCounts effective_counts(const ExperimentConfig& c) {
  if (!(c.scale > 0.0) || !std::isfinite(c.scale)) throw InvalidParameter("scale must be positive");
  EffectiveCounts e;
  e.iterations = static_cast<std::uint64_t>(std::llround(static_cast<double>(c.iterations) * c.scale));
  e.walkers = static_cast<std::size_t>(std::llround(static_cast<double>(c.default_walkers()) * c.scale));
  e.steps = static_cast<std::uint64_t>(std::llround(static_cast<double>(c.steps) * c.scale));
  if (c.scheduler == Scheduler::SplitHalf && e.walkers % 2 != 0) ++e.walkers;
  return e;
}

/// Checks shared by every command. `need_runs` asks for M >= 2 and
/// iterations >= 2 thin, which the diagnostics rely on.
inline void validate_config(const ExperimentConfig& c, bool need_runs) {
  c.stretch_params().validate();
  if (c.dim == 0) throw InvalidParameter("dim must be positive");
  if (!(c.burn_fraction >= 0.0 && c.burn_fraction < 1.0)) throw InvalidParameter("burn_fraction must be in [0, 1)");
  for (const auto& in : c.inits)
    if (!(in.sd > 0.0) || !std::isfinite(in.sd) || !std::isfinite(in.mean))
      throw InvalidParameter("init specs need finite mean and positive sd");
  if (c.inits.empty()) throw InvalidParameter("at least one init spec required");
  const EffectiveCounts e = effective_counts(c);
  if (need_runs) {
    if (c.inits.size() < 2) throw InvalidParameter("Gelman-Rubin diagnostics need M >= 2 runs");
    if (e.iterations < 2 * c.thin) throw InvalidParameter("iterations must be at least 2 * thin");
  }
  if (c.hw_coord == 0 || c.hw_coord > c.dim) throw InvalidParameter("hw_coord out of range");
}

// ---------------------------------------------------------------------------
// Target factory

struct TargetBundle {
  TargetDensity density;
  std::optional<Ar1Spec> ar1;
};

/// Matrix A (n rows of n numbers) optionally followed by one row b.
inline AffineMap read_affine_file(const std::string& path, std::size_t n) {
  std::ifstream is(path);
  if (!is) throw InvalidParameter("cannot read affine map file '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    std::vector<double> row;
    double v;
    while (ls >> v) row.push_back(v);
    if (!ls.eof()) throw InvalidParameter("affine map file: malformed number");
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.size() != n && rows.size() != n + 1)
    throw InvalidParameter("affine map file needs " + std::to_string(n) + " matrix rows and an optional offset row");
  Eigen::MatrixXd A(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != n) throw InvalidParameter("affine map file: every row needs " + std::to_string(n) + " entries");
    for (std::size_t k = 0; k < n; ++k) {
      const auto ri = static_cast<Eigen::Index>(r), ki = static_cast<Eigen::Index>(k);
      if (r < n) A(ri, ki) = rows[r][k];
      else b(ki) = rows[r][k];
    }
  }
  return AffineMap(A, b);
}

inline TargetBundle make_target(const std::string& name, const ExperimentConfig& c) {
  const std::string id = detail::trim(name);
  if (id == "std_gaussian") return {TargetDensity(StdGaussian{c.dim}, id), std::nullopt};
  if (id == "ar1") {
    const Ar1Spec spec = Ar1Spec::make(c.alpha, c.dim);
    return {TargetDensity(Ar1Target{spec}, id), spec};
  }
  if (id == "rosenbrock") return {TargetDensity(Rosenbrock(c.dim), id), std::nullopt};
  if (id.starts_with("affine(") && id.ends_with(")")) {
    const std::string inner = id.substr(7, id.size() - 8);
    if (c.affine_file.empty()) throw InvalidParameter("affine targets need affine_file");
    TargetBundle in = make_target(inner, c);
    AffineMap map = read_affine_file(c.affine_file, c.dim);
    return {TargetDensity(affine_wrap(in.density, std::move(map)), id), std::nullopt};
  }
  throw InvalidParameter("unknown target '" + id + "'");
}

inline TargetBundle make_target(const ExperimentConfig& c) { return make_target(c.target, c); }

/// Key/value snapshot of the run configuration for chain headers and reports.
inline Metadata config_metadata(const ExperimentConfig& c) {
  const EffectiveCounts e = effective_counts(c);
  return {
      {"target", c.target},
      {"alpha", detail::fmt(c.alpha)},
      {"dim", std::to_string(c.dim)},
      {"walkers", std::to_string(e.walkers)},
      {"a", detail::fmt(c.a)},
      {"scheduler", to_string(c.scheduler)},
      {"iterations", std::to_string(e.iterations)},
      {"thin", std::to_string(c.thin)},
      {"scale", detail::fmt(c.scale)},
      {"seed", std::to_string(c.seed)},
  };
}

}  // namespace aies
