// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "aies/ensemble.hpp"
#include "aies/error.hpp"

namespace aies {

using Metadata = std::vector<std::pair<std::string, std::string>>;

struct ChainHeader {
  std::uint64_t walkers = 0;
  std::uint64_t dim = 0;
  std::uint64_t stored = 0;
  std::uint64_t thin = 1;
  std::uint64_t seed = 0;
  Metadata metadata;

  std::size_t slice_size() const noexcept { return static_cast<std::size_t>(walkers * dim); }

  const std::string* find(const std::string& key) const {
    for (const auto& [k, v] : metadata)
      if (k == key) return &v;
    return nullptr;
  }
};

/// floor(iterations / thin) + 1: the initial state is always stored.
constexpr std::uint64_t stored_count(std::uint64_t iterations, std::uint64_t thin) noexcept {
  return iterations / thin + 1;
}

/// Thinned walker history, laid out [stored iteration][walker][coordinate],
/// plus the unthinned move log.
struct ChainRecord {
  ChainHeader header;
  std::vector<double> positions;
  MoveLog moves;

  std::size_t stored() const noexcept { return static_cast<std::size_t>(header.stored); }
  std::size_t num_walkers() const noexcept { return static_cast<std::size_t>(header.walkers); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(header.dim); }

  std::span<const double> slice(std::size_t t) const noexcept {
    const std::size_t s = header.slice_size();
    return {positions.data() + t * s, s};
  }
  double at(std::size_t t, std::size_t walker, std::size_t coord) const noexcept {
    return positions[(t * num_walkers() + walker) * dim() + coord];
  }
};

/// Runs `iterations` iterations and calls `store(state)` for the initial
/// state and after every `thin`-th iteration. For the continuous-time
/// scheduler one iteration is one unit of clock time.
template <LogDensity T, class Store>
void run_chain(WalkerEnsemble& state, const T& target, const StretchParams& params, std::uint64_t iterations,
               Store&& store, MoveLog* log = nullptr) {
  params.validate();
  state.ensure_primed(target);
  store(static_cast<const WalkerEnsemble&>(state));
  for (std::uint64_t it = 1; it <= iterations; ++it) {
    if (params.scheduler == Scheduler::ContinuousTime) {
      run_continuous_time(state, target, params, 1.0, 2.0, [](double, const WalkerEnsemble&) {}, log);
    } else {
      step(state, target, params, log);
    }
    if (it % params.thin == 0) store(static_cast<const WalkerEnsemble&>(state));
  }
}

template <LogDensity T>
ChainRecord record_chain(WalkerEnsemble& state, const T& target, const StretchParams& params,
                         std::uint64_t iterations, Metadata metadata = {}) {
  ChainRecord rec;
  rec.header = ChainHeader{state.num_walkers(), state.dim(), stored_count(iterations, params.thin), params.thin,
                           state.seed(), std::move(metadata)};
  rec.positions.reserve(rec.header.stored * rec.header.slice_size());
  run_chain(
      state, target, params, iterations,
      [&](const WalkerEnsemble& s) {
        const auto& p = s.positions();
        rec.positions.insert(rec.positions.end(), p.data(), p.data() + p.size());
      },
      &rec.moves);
  return rec;
}

// ---------------------------------------------------------------------------
// Binary container: "AIES", u32 version, u64 walkers/dim/stored/thin/seed,
// u32 metadata count then (u32 len, bytes) key/value pairs, stored*L*n f64,
// u64 move count, count f64 z values, count u8 acceptance flags.
// Everything little-endian.

inline constexpr std::array<char, 4> kChainMagic = {'A', 'I', 'E', 'S'};
inline constexpr std::uint32_t kChainVersion = 1;

namespace detail {

template <class T>
void put_le(std::ostream& os, T value) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  os.write(bytes.data(), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
  std::array<char, sizeof(T)> bytes;
  if (!is.read(bytes.data(), sizeof(T))) throw InvalidInput("chain file truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

inline void put_string(std::ostream& os, const std::string& s) {
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is) {
  const auto len = get_le<std::uint32_t>(is);
  if (len > (1u << 24)) throw InvalidInput("chain file: metadata entry too long");
  std::string s(len, '\0');
  if (len && !is.read(s.data(), len)) throw InvalidInput("chain file truncated");
  return s;
}

inline void put_doubles(std::ostream& os, std::span<const double> v) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  } else {
    for (double d : v) put_le(os, d);
  }
}

inline void get_doubles(std::istream& is, std::span<double> v) {
  if constexpr (std::endian::native == std::endian::little) {
    if (!is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double))))
      throw InvalidInput("chain file truncated");
  } else {
    for (double& d : v) d = get_le<double>(is);
  }
}

}  // namespace detail

/// Streams a chain to disk slice by slice, so large runs never sit in memory.
class ChainWriter {
 public:
  ChainWriter(const std::string& path, ChainHeader header) : header_(std::move(header)), os_(path, std::ios::binary) {
    if (!os_) throw InvalidInput("cannot open '" + path + "' for writing");
    os_.write(kChainMagic.data(), kChainMagic.size());
    detail::put_le(os_, kChainVersion);
    detail::put_le(os_, header_.walkers);
    detail::put_le(os_, header_.dim);
    detail::put_le(os_, header_.stored);
    detail::put_le(os_, header_.thin);
    detail::put_le(os_, header_.seed);
    detail::put_le<std::uint32_t>(os_, static_cast<std::uint32_t>(header_.metadata.size()));
    for (const auto& [k, v] : header_.metadata) {
      detail::put_string(os_, k);
      detail::put_string(os_, v);
    }
  }

  void append(std::span<const double> slice) {
    if (slice.size() != header_.slice_size()) throw InvalidInput("chain slice has the wrong size");
    if (written_ == header_.stored) throw InvalidInput("more slices than the header declares");
    detail::put_doubles(os_, slice);
    ++written_;
  }

  void finish(const MoveLog& moves) {
    if (written_ != header_.stored) throw InvalidInput("fewer slices than the header declares");
    detail::put_le<std::uint64_t>(os_, moves.size());
    detail::put_doubles(os_, moves.z);
    os_.write(reinterpret_cast<const char*>(moves.accepted.data()),
              static_cast<std::streamsize>(moves.accepted.size()));
    os_.flush();
    if (!os_) throw InvalidInput("write to chain file failed");
  }

 private:
  ChainHeader header_;
  std::ofstream os_;
  std::uint64_t written_ = 0;
};

class ChainReader {
 public:
  explicit ChainReader(const std::string& path) : is_(path, std::ios::binary) {
    if (!is_) throw InvalidInput("cannot open chain file '" + path + "'");
    std::array<char, 4> magic{};
    if (!is_.read(magic.data(), magic.size()) || magic != kChainMagic)
      throw InvalidInput("'" + path + "' is not an AIES chain file");
    const auto version = detail::get_le<std::uint32_t>(is_);
    if (version != kChainVersion) throw InvalidInput("unsupported chain file version");
    header_.walkers = detail::get_le<std::uint64_t>(is_);
    header_.dim = detail::get_le<std::uint64_t>(is_);
    header_.stored = detail::get_le<std::uint64_t>(is_);
    header_.thin = detail::get_le<std::uint64_t>(is_);
    header_.seed = detail::get_le<std::uint64_t>(is_);
    const auto count = detail::get_le<std::uint32_t>(is_);
    for (std::uint32_t i = 0; i < count; ++i) {
      std::string k = detail::get_string(is_);
      std::string v = detail::get_string(is_);
      header_.metadata.emplace_back(std::move(k), std::move(v));
    }
  }

  const ChainHeader& header() const noexcept { return header_; }

  /// Reads the next stored slice; false once all are consumed.
  bool next(std::vector<double>& slice) {
    if (read_ == header_.stored) return false;
    slice.resize(header_.slice_size());
    detail::get_doubles(is_, slice);
    ++read_;
    return true;
  }

  MoveLog moves() {
    std::vector<double> skip;
    while (next(skip)) {
    }
    MoveLog log;
    const auto count = detail::get_le<std::uint64_t>(is_);
    log.z.resize(count);
    detail::get_doubles(is_, log.z);
    log.accepted.resize(count);
    if (count && !is_.read(reinterpret_cast<char*>(log.accepted.data()), static_cast<std::streamsize>(count)))
      throw InvalidInput("chain file truncated");
    return log;
  }

 private:
  std::ifstream is_;
  ChainHeader header_;
  std::uint64_t read_ = 0;
};

inline void write_chain(const std::string& path, const ChainRecord& rec) {
  ChainWriter w(path, rec.header);
  for (std::size_t t = 0; t < rec.stored(); ++t) w.append(rec.slice(t));
  w.finish(rec.moves);
}

inline ChainRecord read_chain(const std::string& path) {
  ChainReader r(path);
  ChainRecord rec;
  rec.header = r.header();
  rec.positions.resize(rec.header.stored * rec.header.slice_size());
  std::vector<double> slice;
  std::size_t t = 0;
  while (r.next(slice)) {
    std::copy(slice.begin(), slice.end(), rec.positions.begin() + static_cast<std::ptrdiff_t>(t * slice.size()));
    ++t;
  }
  rec.moves = r.moves();
  return rec;
}

/// CSV export: run, walker, iter, coord_1..coord_n (1-based walker index,
/// iter is the unthinned iteration number).
inline void export_csv(std::ostream& os, const ChainRecord& rec, int run_id, bool header = true) {
  if (header) {
    os << "run,walker,iter";
    for (std::size_t i = 1; i <= rec.dim(); ++i) os << ",coord_" << i;
    os << '\n';
  }
  os << std::setprecision(17);
  for (std::size_t t = 0; t < rec.stored(); ++t)
    for (std::size_t j = 0; j < rec.num_walkers(); ++j) {
      os << run_id << ',' << (j + 1) << ',' << t * rec.header.thin;
      for (std::size_t i = 0; i < rec.dim(); ++i) os << ',' << rec.at(t, j, i);
      os << '\n';
    }
}

}  // namespace aies
