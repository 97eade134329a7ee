#pragma once

#include "cfmon/baselines.hpp"
#include "cfmon/scenario.hpp"
#include "cfmon/spectral_efficiency.hpp"
#include "cfmon/types.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#ifndef CFMON_GIT_HASH
#define CFMON_GIT_HASH "unknown"
#endif

namespace cfmon {

enum class ExperimentTag { d_sweep, m_sweep, csi_cases, n_sweep, nr_sweep, rhoj_sweep, asymptotics };

inline std::string_view to_string(ExperimentTag t) {
  switch (t) {
    case ExperimentTag::d_sweep: return "D_sweep";
    case ExperimentTag::m_sweep: return "M_sweep";
    case ExperimentTag::csi_cases: return "csi_cases";
    case ExperimentTag::n_sweep: return "N_sweep";
    case ExperimentTag::nr_sweep: return "Nr_sweep";
    case ExperimentTag::rhoj_sweep: return "rhoJ_sweep";
    case ExperimentTag::asymptotics: return "asymptotics";
  }
  return "?";
}

inline ExperimentTag parse_experiment(const std::string& s) {
  for (ExperimentTag t : {ExperimentTag::d_sweep, ExperimentTag::m_sweep, ExperimentTag::csi_cases,
                          ExperimentTag::n_sweep, ExperimentTag::nr_sweep, ExperimentTag::rhoj_sweep,
                          ExperimentTag::asymptotics})
    if (s == to_string(t)) return t;
  throw ConfigError("unknown experiment '" + s + "'");
}

// Total antenna budget M*N held fixed by the M sweep.
inline constexpr int kTotalAntennas = 240;

struct ExperimentSpec {
  ExperimentTag tag = ExperimentTag::d_sweep;
  std::vector<double> grid;
  std::vector<BaselineKind> schemes;
  std::vector<CsiMode> csi_modes;
  std::vector<PrecoderKind> precoders;
  SystemParams base;
  ExpectationPlan plan;
  BaselineOptions baseline;
  std::uint64_t seed = 1;
  int workers = 1;
  bool fast = false;
  std::string out_dir = ".";
  // Asymptotics only.
  int asym_trials = 100;
};

// Figure setups at desk scale; grid, schemes and CSI modes per tag.
inline ExperimentSpec default_spec(ExperimentTag tag, const SystemParams& base) {
  ExperimentSpec s;
  s.tag = tag;
  s.base = base;
  s.precoders = {PrecoderKind::zf, PrecoderKind::mrt};
  s.csi_modes = {CsiMode::case1, CsiMode::case2};
  s.schemes = {BaselineKind::opt};
  switch (tag) {
    case ExperimentTag::d_sweep:
      s.grid = {0.5, 1.0, 1.5, 2.0};
      s.schemes = {BaselineKind::opt, BaselineKind::colocated};
      break;
    case ExperimentTag::m_sweep:
      s.grid = {2, 4, 6, 8, 12, 16, 24};
      s.schemes = {BaselineKind::opt, BaselineKind::rma_opa, BaselineKind::rma_epa};
      s.csi_modes = {CsiMode::case1};
      break;
    case ExperimentTag::csi_cases:
      s.grid = {base.area_km};
      s.csi_modes = {CsiMode::perfect, CsiMode::case1, CsiMode::case2};
      break;
    case ExperimentTag::n_sweep:
      s.grid = {1, 10, 30, 50, 70};
      break;
    case ExperimentTag::nr_sweep:
      s.grid = {1, 2, 4, 8, 16, 24, 32};
      break;
    case ExperimentTag::rhoj_sweep:
      s.grid = {0.001, 0.01, 0.1, 1.0};
      break;
    case ExperimentTag::asymptotics:
      s.grid = {8, 16, 32, 64, 128};
      s.precoders = {PrecoderKind::mrt};
      s.csi_modes = {CsiMode::perfect};
      s.schemes = {};
      break;
  }
  return s;
}

// Parameters at one sweep value. Throws ConfigError when the point is infeasible.
inline SystemParams params_at(const ExperimentSpec& spec, double value, PrecoderKind kind) {
  SystemParams p = spec.base;
  p.precoder = kind;
  if (!(value > 0.0)) throw ConfigError("sweep values must be positive");
  switch (spec.tag) {
    case ExperimentTag::d_sweep:
    case ExperimentTag::csi_cases:
      p.area_km = value;
      break;
    case ExperimentTag::m_sweep: {
      const int m = static_cast<int>(value);
      if (m != value || kTotalAntennas % m != 0) throw ConfigError("M must divide the antenna budget of 240");
      p.num_mn = m;
      p.mn_antennas = kTotalAntennas / m;
      break;
    }
    case ExperimentTag::n_sweep:
      p.mn_antennas = static_cast<int>(value);
      break;
    case ExperimentTag::nr_sweep:
      p.ur_antennas = p.ut_antennas = static_cast<int>(value);
      break;
    case ExperimentTag::rhoj_sweep:
      p.jam_power_w = value;
      break;
    case ExperimentTag::asymptotics:
      break;
  }
  p.validate();
  return p;
}

struct ResultRow {
  double sweep_value = 0.0;
  std::string scheme;
  std::string csi;
  std::string precoder;
  double msp = 0.0;
  double stderr_ = 0.0;
  double runtime_s = 0.0;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<std::string> skipped;  // infeasible grid points with the reason
  std::string csv_path;
  std::string manifest_path;
};

// Runs fn(0..n-1) on a bounded pool. Results must be written to per-task
// slots by fn; order of execution does not affect them.
inline void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t w = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), 1, std::max<std::size_t>(n, 1));
  if (w == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(w);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < w; ++t)
    pool.emplace_back([&, t]() {
      try {
        for (std::size_t i = next++; i < n; i = next++) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
        next = n;
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline void write_results_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
  os << "sweep_value,scheme,csi_case,precoder,msp_mean,msp_stderr,runtime_s\n";
  os << std::setprecision(10);
  for (const ResultRow& r : rows)
    os << r.sweep_value << ',' << r.scheme << ',' << r.csi << ',' << r.precoder << ',' << r.msp << ',' << r.stderr_
       << ',' << std::setprecision(4) << r.runtime_s << std::setprecision(10) << '\n';
}

inline nlohmann::json run_manifest(const ExperimentSpec& spec, const ExperimentResult& res) {
  nlohmann::json j;
  j["experiment"] = std::string(to_string(spec.tag));
  j["seed"] = spec.seed;
  j["git_hash"] = CFMON_GIT_HASH;
  j["fast"] = spec.fast;
  j["workers"] = spec.workers;
  j["params"] = params_to_map(spec.base);
  j["plan"] = {{"n_inner", spec.plan.n_inner},
               {"n_outer", spec.plan.n_outer},
               {"n_geom", spec.plan.n_geom},
               {"n_mc", spec.plan.n_mc}};
  j["optimizer"] = {{"n_initial", spec.baseline.optimizer.n_initial}, {"n_opt", spec.baseline.optimizer.n_opt}};
  j["self_interference_db"] = spec.baseline.self_interference_db;
  j["grid"] = spec.grid;
  j["skipped"] = res.skipped;
  j["csv"] = res.csv_path;
  return j;
}

inline void ensure_writable_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const auto probe = std::filesystem::path(dir) / ".cfmon_write_probe";
  std::ofstream f(probe);
  if (!f) throw ConfigError("output directory '" + dir + "' is not writable");
  f.close();
  std::filesystem::remove(probe, ec);
}

// Asymptotics: one row per sweep point and metric; msp columns carry the
// measured norms, stderr the fitted slope.
inline std::vector<ResultRow> run_asymptotics(const ExperimentSpec& spec) {
  std::vector<ResultRow> rows;
  std::vector<int> mo;
  for (double v : spec.grid) mo.push_back(static_cast<int>(v));
  const auto t0 = std::chrono::steady_clock::now();
  const Prop2Report p2 = verify_prop2(spec.base, mo, 4, spec.asym_trials, spec.seed);
  const double dt2 = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (const Prop2Point& pt : p2.points) {
    rows.push_back({static_cast<double>(pt.m_o), "prop2_noise", "perfect", "MRT", pt.noise, p2.slope_noise, dt2});
    rows.push_back({static_cast<double>(pt.m_o), "prop2_interference", "perfect", "MRT", pt.interference,
                    p2.slope_interference, dt2});
    rows.push_back({static_cast<double>(pt.m_o), "prop2_deviation", "perfect", "MRT", pt.deviation, p2.slope_deviation, dt2});
  }
  const double rho_j = spec.base.jam_power_w / noise_power(spec.base);
  const std::vector<int> mj{16, 32, 64, 128};
  const auto t1 = std::chrono::steady_clock::now();
  const Prop3Report p3 = verify_prop3(spec.base, mj, 4, rho_j * 16.0 * 16.0, spec.asym_trials, spec.seed);
  const double dt3 = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
  for (const Prop3Point& pt : p3.points) {
    rows.push_back({static_cast<double>(pt.m_j), "prop3_cpu_jamming", "perfect", "MRT", pt.cpu_jamming, p3.cpu_ratio, dt3});
    rows.push_back({static_cast<double>(pt.m_j), "prop3_ur_mean", "perfect", "MRT", pt.ur_mean, p3.ur_mean_spread, dt3});
    rows.push_back({static_cast<double>(pt.m_j), "prop3_ur_residual", "perfect", "MRT", pt.ur_residual, 0.0, dt3});
  }
  return rows;
}

inline ExperimentResult run_experiment(const ExperimentSpec& spec) {
  if (spec.grid.empty()) throw ConfigError("experiment grid is empty");
  for (double v : spec.grid)
    if (!(v > 0.0)) throw ConfigError("sweep values must be positive");
  spec.plan.validate();
  spec.baseline.validate();
  ensure_writable_dir(spec.out_dir);

  ExperimentResult res;
  const std::string stem = (std::filesystem::path(spec.out_dir) / std::string(to_string(spec.tag))).string();
  res.csv_path = stem + ".csv";
  res.manifest_path = stem + "_manifest.json";

  if (spec.tag == ExperimentTag::asymptotics) {
    res.rows = run_asymptotics(spec);
  } else {
    if (spec.schemes.empty() || spec.csi_modes.empty() || spec.precoders.empty())
      throw ConfigError("experiment needs at least one scheme, CSI mode and precoder");
    struct Point {
      double value;
      PrecoderKind kind;
      SystemParams params;
    };
    std::vector<Point> points;
    for (double v : spec.grid)
      for (PrecoderKind k : spec.precoders) {
        try {
          points.push_back({v, k, params_at(spec, v, k)});
        } catch (const ConfigError& e) {
          std::ostringstream os;
          os << to_string(spec.tag) << '=' << v << ' ' << to_string(k) << ": " << e.what();
          res.skipped.push_back(os.str());
        }
      }

    // Task = (grid point, geometry). Each task fills its own slot.
    const std::size_t n_geom = static_cast<std::size_t>(spec.plan.n_geom);
    const std::size_t per_geom = spec.csi_modes.size() * spec.schemes.size();
    std::vector<int> hits(points.size() * n_geom * per_geom, 0);
    std::vector<double> seconds(points.size() * n_geom, 0.0);
    parallel_for(points.size() * n_geom, spec.workers, [&](std::size_t task) {
      const std::size_t pi = task / n_geom, g = task % n_geom;
      const auto t0 = std::chrono::steady_clock::now();
      const GeometryOutcome o = run_schemes_on_geometry(points[pi].params, spec.plan, spec.csi_modes, spec.schemes,
                                                        spec.baseline, spec.seed, g);
      std::copy(o.indicator.begin(), o.indicator.end(), hits.begin() + static_cast<std::ptrdiff_t>(task * per_geom));
      seconds[task] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    });

    for (std::size_t pi = 0; pi < points.size(); ++pi) {
      double secs = 0.0;
      for (std::size_t g = 0; g < n_geom; ++g) secs += seconds[pi * n_geom + g];
      for (std::size_t c = 0; c < spec.csi_modes.size(); ++c)
        for (std::size_t k = 0; k < spec.schemes.size(); ++k) {
          int count = 0;
          for (std::size_t g = 0; g < n_geom; ++g)
            count += hits[(pi * n_geom + g) * per_geom + c * spec.schemes.size() + k];
          const MspEstimate e = binomial_estimate(count, static_cast<int>(n_geom));
          res.rows.push_back({points[pi].value, std::string(to_string(spec.schemes[k])),
                              std::string(to_string(spec.csi_modes[c])), std::string(to_string(points[pi].kind)),
                              e.msp, e.stderr_, secs});
        }
    }
  }

  std::ofstream csv(res.csv_path);
  if (!csv) throw ConfigError("cannot write '" + res.csv_path + "'");
  write_results_csv(csv, res.rows);
  std::ofstream man(res.manifest_path);
  if (!man) throw ConfigError("cannot write '" + res.manifest_path + "'");
  man << run_manifest(spec, res).dump(2) << '\n';
  return res;
}

// Two-row signaling table (case, complex scalars per block, statistical parameters).
inline std::string report_signaling(const SystemParams& p, int num_observing) {
  if (num_observing < 0) throw ConfigError("number of observing MNs must be >= 0");
  std::ostringstream os;
  os << "case,scalars_per_block,stat_params\n";
  for (CsiCase c : {CsiCase::case1, CsiCase::case2}) {
    const SignalingLoad s = signaling_load(p, num_observing, c);
    os << to_string(c) << ',' << s.scalars_per_block << ',' << s.stat_params << '\n';
  }
  return os.str();
}

}  // namespace cfmon
