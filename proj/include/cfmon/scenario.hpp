#pragma once

#include "cfmon/rng.hpp"
#include "cfmon/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace cfmon {

inline constexpr double kBoltzmann = 1.381e-23;  // J/K, as used by the reference setup
inline constexpr double kNoiseTemperature = 290.0;

// System-level parameters. Config-file keys are given in brackets; defaults
// are the reference simulation setup (D = 1 km, M = 8, N = 30, Nt = Nr = 4).
struct SystemParams {
  int num_mn = 8;                  // [M]
  int mn_antennas = 30;            // [N]
  int ut_antennas = 4;             // [Nt]
  int ur_antennas = 4;             // [Nr]
  double area_km = 1.0;            // [D] side of the square area
  int coherence = 300;             // [tau] symbols
  int uplink_pilots = 40;          // [tau_r]
  int downlink_pilots = 40;        // [tau_t]
  double ur_power_w = 0.1;         // [P_r]
  double ut_power_w = 0.1;         // [P_t]
  double jam_power_w = 0.2;        // [P_J]
  double bandwidth_hz = 20e6;      // [bandwidth]
  double noise_figure_db = 9.0;    // [noise_figure]
  double carrier_ghz = 1.9;        // [carrier_freq]
  double mn_height_m = 15.0;       // [h_MN]
  double user_height_m = 1.65;     // [h_u]
  double shadow_std_db = 8.0;      // [sigma_sh]
  double d0_m = 10.0;              // [d0]
  double d1_m = 50.0;              // [d1]
  PrecoderKind precoder = PrecoderKind::zf;  // [precoder_kind] ZF | MRT
  CsiCase csi_case = CsiCase::case1;         // [csi_case] case1 | case2
  std::uint64_t seed = 1;          // [rng_seed]

  void validate() const {
    auto require = [](bool ok, const char* what) {
      if (!ok) throw ConfigError(what);
    };
    require(num_mn > 0 && mn_antennas > 0 && ut_antennas > 0 && ur_antennas > 0, "antenna and node counts must be positive");
    require(area_km > 0.0, "D must be positive");
    require(uplink_pilots >= ur_antennas, "tau_r must be >= Nr for orthogonal uplink pilots");
    require(downlink_pilots >= ur_antennas, "tau_t must be >= Nr for orthogonal downlink pilots");
    require(coherence > uplink_pilots + downlink_pilots, "tau must exceed tau_r + tau_t");
    require(ur_power_w > 0.0 && ut_power_w > 0.0 && jam_power_w > 0.0, "powers must be positive");
    require(bandwidth_hz > 0.0 && carrier_ghz > 0.0, "bandwidth and carrier must be positive");
    require(mn_height_m > 0.0 && user_height_m > 0.0, "antenna heights must be positive");
    require(shadow_std_db >= 0.0, "sigma_sh must be non-negative");
    require(d0_m > 0.0 && d1_m > d0_m, "need 0 < d0 < d1");
    require(precoder != PrecoderKind::zf || ut_antennas >= ur_antennas, "ZF requires Nt >= Nr");
  }

  double prelog() const {
    return 1.0 - static_cast<double>(uplink_pilots + downlink_pilots) / static_cast<double>(coherence);
  }
};

inline PrecoderKind parse_precoder(const std::string& s) {
  if (s == "ZF" || s == "zf") return PrecoderKind::zf;
  if (s == "MRT" || s == "mrt") return PrecoderKind::mrt;
  throw ConfigError("unknown precoder_kind '" + s + "'");
}

inline CsiCase parse_csi_case(const std::string& s) {
  if (s == "case1" || s == "1") return CsiCase::case1;
  if (s == "case2" || s == "2") return CsiCase::case2;
  throw ConfigError("unknown csi_case '" + s + "'");
}

// Applies one `key = value` assignment. Unknown keys are an error.
inline void set_param(SystemParams& p, const std::string& key, const std::string& value) {
  auto as_int = [&]() {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(value, &used);
    } catch (const std::exception&) {
      throw ConfigError("bad integer for '" + key + "': " + value);
    }
    if (used != value.size()) throw ConfigError("bad integer for '" + key + "': " + value);
    return v;
  };
  auto as_double = [&]() {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(value, &used);
    } catch (const std::exception&) {
      throw ConfigError("bad number for '" + key + "': " + value);
    }
    if (used != value.size()) throw ConfigError("bad number for '" + key + "': " + value);
    return v;
  };

  if (key == "M") p.num_mn = as_int();
  else if (key == "N") p.mn_antennas = as_int();
  else if (key == "Nt") p.ut_antennas = as_int();
  else if (key == "Nr") p.ur_antennas = as_int();
  else if (key == "D") p.area_km = as_double();
  else if (key == "tau") p.coherence = as_int();
  else if (key == "tau_r") p.uplink_pilots = as_int();
  else if (key == "tau_t") p.downlink_pilots = as_int();
  else if (key == "P_r") p.ur_power_w = as_double();
  else if (key == "P_t") p.ut_power_w = as_double();
  else if (key == "P_J") p.jam_power_w = as_double();
  else if (key == "bandwidth") p.bandwidth_hz = as_double();
  else if (key == "noise_figure") p.noise_figure_db = as_double();
  else if (key == "carrier_freq") p.carrier_ghz = as_double();
  else if (key == "h_MN") p.mn_height_m = as_double();
  else if (key == "h_u") p.user_height_m = as_double();
  else if (key == "sigma_sh") p.shadow_std_db = as_double();
  else if (key == "d0") p.d0_m = as_double();
  else if (key == "d1") p.d1_m = as_double();
  else if (key == "precoder_kind") p.precoder = parse_precoder(value);
  else if (key == "csi_case") p.csi_case = parse_csi_case(value);
  else if (key == "rng_seed") {
    try {
      p.seed = std::stoull(value);
    } catch (const std::exception&) {
      throw ConfigError("bad rng_seed: " + value);
    }
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

// Plain-text `key = value` config; `#` starts a comment. Missing keys keep
// their defaults.
inline SystemParams parse_params(std::istream& in) {
  SystemParams p;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string{};
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    set_param(p, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  p.validate();
  return p;
}

inline SystemParams load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_params(in);
}

inline std::map<std::string, std::string> params_to_map(const SystemParams& p) {
  auto num = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  return {{"M", std::to_string(p.num_mn)},
          {"N", std::to_string(p.mn_antennas)},
          {"Nt", std::to_string(p.ut_antennas)},
          {"Nr", std::to_string(p.ur_antennas)},
          {"D", num(p.area_km)},
          {"tau", std::to_string(p.coherence)},
          {"tau_r", std::to_string(p.uplink_pilots)},
          {"tau_t", std::to_string(p.downlink_pilots)},
          {"P_r", num(p.ur_power_w)},
          {"P_t", num(p.ut_power_w)},
          {"P_J", num(p.jam_power_w)},
          {"bandwidth", num(p.bandwidth_hz)},
          {"noise_figure", num(p.noise_figure_db)},
          {"carrier_freq", num(p.carrier_ghz)},
          {"h_MN", num(p.mn_height_m)},
          {"h_u", num(p.user_height_m)},
          {"sigma_sh", num(p.shadow_std_db)},
          {"d0", num(p.d0_m)},
          {"d1", num(p.d1_m)},
          {"precoder_kind", std::string(to_string(p.precoder))},
          {"csi_case", std::string(to_string(p.csi_case))},
          {"rng_seed", std::to_string(p.seed)}};
}

// Thermal noise power in watts.
inline double noise_power(const SystemParams& p) {
  return p.bandwidth_hz * kBoltzmann * kNoiseTemperature * std::pow(10.0, p.noise_figure_db / 10.0);
}

// COST-231 Hata constant L in dB, carrier in MHz.
inline double hata_constant_db(const SystemParams& p) {
  const double lf = std::log10(p.carrier_ghz * 1000.0);
  return 46.3 + 33.9 * lf - 13.82 * std::log10(p.mn_height_m) - (1.1 * lf - 0.7) * p.user_height_m + (1.56 * lf - 0.8);
}

// Three-slope path loss (dB, negative). Distances enter the logarithms in km.
inline double path_loss_db(double distance_m, const SystemParams& p) {
  const double L = hata_constant_db(p);
  const double d = distance_m / 1000.0;
  const double d0 = p.d0_m / 1000.0;
  const double d1 = p.d1_m / 1000.0;
  if (d > d1) return -L - 35.0 * std::log10(d);
  if (d > d0) return -L - 15.0 * std::log10(d1) - 20.0 * std::log10(d);
  return -L - 15.0 * std::log10(d1) - 20.0 * std::log10(d0);
}

struct Point {
  double x = 0.0;  // km
  double y = 0.0;
};

// Torus distance on a side x side square, returned in metres.
inline double wrapped_distance_m(Point a, Point b, double side_km) {
  double dx = std::abs(a.x - b.x);
  double dy = std::abs(a.y - b.y);
  dx = std::min(dx, side_km - dx);
  dy = std::min(dy, side_km - dy);
  return 1000.0 * std::hypot(dx, dy);
}

// Large-scale state of one outer Monte-Carlo draw.
struct ScenarioRealization {
  std::vector<Point> mn_pos;
  Point ut_pos;
  Point ur_pos;
  double beta_tr = 0.0;
  std::vector<double> beta_mr;  // UR <-> MN m
  std::vector<double> beta_tm;  // UT <-> MN m
  RMatrix beta_mm;              // symmetric, zero diagonal
  double rho_r = 0.0;
  double rho_t = 0.0;
  double rho_j = 0.0;
  // Set for the co-located full-duplex array: residual self-interference
  // suppression in dB relative to the transmitted jamming power.
  std::optional<double> self_interference_db;

  int num_mn() const { return static_cast<int>(beta_mr.size()); }
};

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

inline void set_normalized_powers(const SystemParams& p, ScenarioRealization& r) {
  const double n0 = noise_power(p);
  r.rho_r = p.ur_power_w / n0;
  r.rho_t = p.ut_power_w / n0;
  r.rho_j = p.jam_power_w / n0;
}

inline ScenarioRealization draw_scenario(const SystemParams& p, Rng& rng) {
  p.validate();
  const int M = p.num_mn;
  ScenarioRealization r;
  auto draw_point = [&]() {
    const double x = rng.uniform(0.0, p.area_km);
    const double y = rng.uniform(0.0, p.area_km);
    return Point{x, y};
  };
  r.mn_pos.reserve(M);
  for (int m = 0; m < M; ++m) r.mn_pos.push_back(draw_point());
  r.ut_pos = draw_point();
  r.ur_pos = draw_point();

  auto gain = [&](Point a, Point b) {
    const double pl = path_loss_db(wrapped_distance_m(a, b, p.area_km), p);
    const double z = rng.normal();
    return db_to_linear(pl + p.shadow_std_db * z);
  };
  r.beta_tr = gain(r.ut_pos, r.ur_pos);
  r.beta_mr.resize(M);
  r.beta_tm.resize(M);
  for (int m = 0; m < M; ++m) r.beta_mr[m] = gain(r.mn_pos[m], r.ur_pos);
  for (int m = 0; m < M; ++m) r.beta_tm[m] = gain(r.ut_pos, r.mn_pos[m]);
  r.beta_mm = RMatrix::Zero(M, M);
  for (int m = 0; m < M; ++m)
    for (int k = m + 1; k < M; ++k) r.beta_mm(m, k) = r.beta_mm(k, m) = gain(r.mn_pos[m], r.mn_pos[k]);
  set_normalized_powers(p, r);
  return r;
}

}  // namespace cfmon
