#pragma once

#include "cfmon/gp.hpp"
#include "cfmon/precoding.hpp"
#include "cfmon/rng.hpp"
#include "cfmon/scenario.hpp"
#include "cfmon/spectral_efficiency.hpp"
#include "cfmon/transmission.hpp"
#include "cfmon/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cfmon {

enum class BaselineKind { opt, rma_opa, rma_epa, colocated };

inline std::string_view to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::opt: return "OPT";
    case BaselineKind::rma_opa: return "RMA_OPA";
    case BaselineKind::rma_epa: return "RMA_EPA";
    case BaselineKind::colocated: return "COLOCATED";
  }
  return "?";
}

inline BaselineKind parse_baseline(const std::string& s) {
  if (s == "OPT") return BaselineKind::opt;
  if (s == "RMA_OPA" || s == "RMA-OPA") return BaselineKind::rma_opa;
  if (s == "RMA_EPA" || s == "RMA-EPA") return BaselineKind::rma_epa;
  if (s == "COLOCATED") return BaselineKind::colocated;
  throw ConfigError("unknown baseline '" + s + "'");
}

struct BaselineOptions {
  double self_interference_db = 30.0;  // COLOCATED residual SI suppression
  OptimizerOptions optimizer{};

  void validate() const {
    if (self_interference_db < 30.0 || self_interference_db > 100.0)
      throw ConfigError("self-interference suppression must lie in [30, 100] dB");
    optimizer.validate();
  }
};

// Random mode assignment: each MN observes with probability 1/2.
inline std::vector<int> random_modes(int num_mn, std::uint64_t seed, std::uint64_t geom_id) {
  Rng rng(seed, streams::modes, geom_id);
  std::vector<int> a(num_mn);
  for (int& v : a) v = rng.bernoulli(0.5) ? 1 : 0;
  return a;
}

// Equal split in budget fractions: every jamming MN spends its whole budget.
inline RMatrix equal_fractions(const std::vector<int>& alpha, int num_streams) {
  RMatrix f = RMatrix::Zero(static_cast<Eigen::Index>(alpha.size()), num_streams);
  for (std::size_t m = 0; m < alpha.size(); ++m)
    if (alpha[m] == 0) f.row(static_cast<Eigen::Index>(m)).setConstant(1.0 / num_streams);
  return f;
}

// Indicator se_cq >= se_r for a config given in budget fractions.
inline int monitoring_indicator(const GeometryEvaluator& ev, const std::vector<int>& alpha, const RMatrix& fractions,
                                CsiCase csi) {
  const MonitoringConfig cfg = config_from_fractions(alpha, fractions, ev.params().mn_antennas, ev.gamma_mr());
  validate_config(cfg, ev.params().mn_antennas, ev.gamma_mr());
  const double r = ev.ur_mean_rate(cfg);
  const double c = csi == CsiCase::case1 ? ev.cpu_case1_rate(cfg) : ev.cpu_case2_rate(cfg);
  return c >= r ? 1 : 0;
}

// Per-geometry Bayesian optimisation of the indicator. With fixed_alpha the
// search covers the jamming fractions only.
inline OptimizerResult optimize_geometry(const GeometryEvaluator& ev, CsiCase csi, const OptimizerOptions& opt,
                                         Rng& rng, const std::optional<std::vector<int>>& fixed_alpha,
                                         const std::vector<RVector>& initial_points) {
  SearchSpace sp;
  sp.num_mn = ev.realization().num_mn();
  sp.num_streams = ev.params().ur_antennas;
  sp.fixed_alpha = fixed_alpha;
  const Objective f = [&](const RVector& s) {
    return static_cast<double>(monitoring_indicator(ev, sp.alpha_of(s), sp.pi_of(s), csi));
  };
  OptimizerOptions o = opt;
  o.stop_at = std::min(o.stop_at, 1.0);
  return optimize(f, sp, o, rng, initial_points);
}

// Co-located full-duplex array at a single uniformly drawn site: two
// virtual MNs (observing, jamming) with M*N/2 antennas each, no inter-MN
// channel, residual self-interference on the observing half.
struct ColocatedSetup {
  SystemParams params;
  ScenarioRealization realization;
};

inline ColocatedSetup colocated_setup(const SystemParams& p, const ScenarioRealization& cf, double si_db,
                                      std::uint64_t seed, std::uint64_t geom_id) {
  const int total = p.num_mn * p.mn_antennas;
  if (total % 2 != 0) throw ConfigError("co-located array needs an even antenna count");
  ColocatedSetup c;
  c.params = p;
  c.params.num_mn = 2;
  c.params.mn_antennas = total / 2;
  Rng rng = Rng(seed, streams::geometry, geom_id).split(0xc0);
  const Point site{rng.uniform(0.0, p.area_km), rng.uniform(0.0, p.area_km)};
  auto gain = [&](Point a, Point b) {
    return db_to_linear(path_loss_db(wrapped_distance_m(a, b, p.area_km), p) + p.shadow_std_db * rng.normal());
  };
  ScenarioRealization& r = c.realization;
  r.mn_pos = {site, site};
  r.ut_pos = cf.ut_pos;
  r.ur_pos = cf.ur_pos;
  r.beta_tr = cf.beta_tr;
  const double b_mr = gain(site, cf.ur_pos);
  const double b_tm = gain(cf.ut_pos, site);
  r.beta_mr = {b_mr, b_mr};
  r.beta_tm = {b_tm, b_tm};
  r.beta_mm = RMatrix::Zero(2, 2);
  r.rho_r = cf.rho_r;
  r.rho_t = cf.rho_t;
  r.rho_j = cf.rho_j;
  r.self_interference_db = si_db;
  return c;
}

// CSI regimes a scheme can be scored under. `perfect` uses B_hat = B and
// G_hat = G with the case-1 expression.
enum class CsiMode { case1, case2, perfect };

inline std::string_view to_string(CsiMode c) {
  switch (c) {
    case CsiMode::case1: return "case1";
    case CsiMode::case2: return "case2";
    case CsiMode::perfect: return "perfect";
  }
  return "?";
}

inline CsiMode parse_csi_mode(const std::string& s) {
  if (s == "perfect") return CsiMode::perfect;
  return parse_csi_case(s) == CsiCase::case1 ? CsiMode::case1 : CsiMode::case2;
}

inline CsiCase formula_of(CsiMode c) { return c == CsiMode::case2 ? CsiCase::case2 : CsiCase::case1; }

// Indicator per (csi mode, scheme), row-major in that order.
struct GeometryOutcome {
  std::size_t num_kinds = 0;
  std::vector<int> indicator;
  int at(std::size_t csi_index, std::size_t kind_index) const { return indicator[csi_index * num_kinds + kind_index]; }
};

// Runs the requested schemes on geometry g with common random numbers: the
// same geometry, fading draws and random modes feed every scheme and every
// CSI mode. Imperfect modes share one evaluator.
inline GeometryOutcome run_schemes_on_geometry(const SystemParams& p, const ExpectationPlan& plan,
                                               const std::vector<CsiMode>& csis,
                                               const std::vector<BaselineKind>& kinds, const BaselineOptions& bo,
                                               std::uint64_t seed, std::uint64_t g) {
  bo.validate();
  const ScenarioRealization real = draw_geometry(p, seed, g);
  std::optional<GeometryEvaluator> ev_est, ev_perfect, ev_colo_est, ev_colo_perfect;
  std::optional<ColocatedSetup> colo;
  auto cf = [&](bool perfect) -> const GeometryEvaluator& {
    auto& slot = perfect ? ev_perfect : ev_est;
    if (!slot) slot.emplace(p, real, plan, Rng(seed, streams::fading, g), perfect);
    return *slot;
  };
  auto co = [&](bool perfect) -> const GeometryEvaluator& {
    if (!colo) colo = colocated_setup(p, real, bo.self_interference_db, seed, g);
    auto& slot = perfect ? ev_colo_perfect : ev_colo_est;
    if (!slot) slot.emplace(colo->params, colo->realization, plan, Rng(seed, streams::fading, g).split(0xc0), perfect);
    return *slot;
  };
  const std::vector<int> rma = random_modes(p.num_mn, seed, g);
  const RMatrix epa = equal_fractions(rma, p.ur_antennas);
  SearchSpace sp{p.num_mn, p.ur_antennas, {}, std::nullopt};
  const RVector epa_point = sp.make(rma, epa);
  const std::vector<int> colo_modes{1, 0};
  SearchSpace csp{2, p.ur_antennas, {}, colo_modes};
  const RVector colo_point = csp.make(colo_modes, equal_fractions(colo_modes, p.ur_antennas));

  GeometryOutcome out;
  out.num_kinds = kinds.size();
  for (CsiMode mode : csis) {
    const bool perfect = mode == CsiMode::perfect;
    const CsiCase csi = formula_of(mode);
    for (BaselineKind kind : kinds) {
      Rng orng = Rng(seed, streams::optimizer, g)
                     .split(static_cast<std::uint64_t>(kind) * 4 + static_cast<std::uint64_t>(mode));
      int hit = 0;
      switch (kind) {
        case BaselineKind::rma_epa:
          hit = monitoring_indicator(cf(perfect), rma, epa, csi);
          break;
        case BaselineKind::rma_opa:
          hit = static_cast<int>(optimize_geometry(cf(perfect), csi, bo.optimizer, orng, rma, {epa_point}).best_value);
          break;
        case BaselineKind::opt:
          hit = static_cast<int>(
              optimize_geometry(cf(perfect), csi, bo.optimizer, orng, std::nullopt, {epa_point}).best_value);
          break;
        case BaselineKind::colocated:
          hit = static_cast<int>(
              optimize_geometry(co(perfect), csi, bo.optimizer, orng, colo_modes, {colo_point}).best_value);
          break;
      }
      out.indicator.push_back(hit);
    }
  }
  return out;
}

// MSP of one scheme over plan.n_geom geometries.
inline MspEstimate run_baseline(BaselineKind kind, const SystemParams& p, const ExpectationPlan& plan, CsiCase csi,
                                std::uint64_t seed, const BaselineOptions& bo = {}) {
  plan.validate();
  const CsiMode mode = csi == CsiCase::case1 ? CsiMode::case1 : CsiMode::case2;
  int hits = 0;
  for (int g = 0; g < plan.n_geom; ++g)
    hits += run_schemes_on_geometry(p, plan, {mode}, {kind}, bo, seed, static_cast<std::uint64_t>(g)).at(0, 0);
  return binomial_estimate(hits, plan.n_geom);
}

// ---------------------------------------------------------------- asymptotics

// Least-squares slope of log(y) against log(x).
inline double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("slope fit needs at least two matching points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

struct Prop2Point {
  int m_o = 0;
  double noise = 0.0;         // RMS || sum_m V_m^H w_m || / M_o
  double interference = 0.0;  // RMS || sum_m i_c,m || / M_o
  double deviation = 0.0;     // RMS || z_c / M_o - desired-mean term ||
};

struct Prop2Report {
  std::vector<Prop2Point> points;
  double slope_noise = 0.0;
  double slope_interference = 0.0;
  double slope_deviation = 0.0;
};

// Large-M_o check under perfect CSI and MRT at the UT. Large-scale gains and
// normalized powers are set to one so that only the number of observing MNs
// varies across the sweep. The desired-mean term is conditioned on the UT
// precoder, estimated with `mean_draws` extra channel draws per trial.
inline Prop2Report verify_prop2(const SystemParams& p, const std::vector<int>& mo_sweep, int m_j, int trials,
                                std::uint64_t seed, int mean_draws = 4096) {
  if (mo_sweep.empty() || trials < 1) throw ConfigError("verify_prop2: empty sweep");
  const int N = p.mn_antennas, Nt = p.ut_antennas, Nr = p.ur_antennas;
  const double rho_t = 1.0, rho_j = 1.0;
  const RVector lambda = load_powers(Nr);
  const auto sl = lambda.cwiseSqrt().cast<cplx>().asDiagonal();
  const RVector pi_j = RVector::Constant(Nr, 1.0 / (Nr * N));  // equal split with gamma = beta = 1
  const auto spi = pi_j.cwiseSqrt().cast<cplx>().asDiagonal();

  std::vector<double> s_noise(mo_sweep.size(), 0.0), s_int(mo_sweep.size(), 0.0), s_dev(mo_sweep.size(), 0.0);
  for (int t = 0; t < trials; ++t) {
    Rng rng(seed, streams::asymptotics, static_cast<std::uint64_t>(t));
    const CMatrix w = build_data_precoder(rng.cnormal_matrix(Nt, Nr), PrecoderKind::mrt);
    CMatrix mean_vb = CMatrix::Zero(Nr, Nr);
    for (int i = 0; i < mean_draws; ++i) {
      const CMatrix b = rng.cnormal_matrix(Nt, N).adjoint() * w;
      mean_vb += mmse_combine(b, rho_t).adjoint() * b;
    }
    mean_vb /= mean_draws;
    std::vector<CMatrix> wj;
    for (int j = 0; j < m_j; ++j) wj.push_back(rng.cnormal_matrix(N, Nr));
    const CVector x = rng.cnormal_vector(Nr), xj = rng.cnormal_vector(Nr);
    for (std::size_t k = 0; k < mo_sweep.size(); ++k) {
      const int mo = mo_sweep[k];
      CVector noise = CVector::Zero(Nr), intf = CVector::Zero(Nr), fluct = CVector::Zero(Nr);
      for (int m = 0; m < mo; ++m) {
        const CMatrix b = rng.cnormal_matrix(Nt, N).adjoint() * w;
        const CMatrix vh = mmse_combine(b, rho_t).adjoint();
        noise += vh * rng.cnormal_vector(N);
        CVector jam = CVector::Zero(N);
        for (int j = 0; j < m_j; ++j) jam += rng.cnormal_matrix(N, N).adjoint() * (wj[j] * (spi * xj));
        intf += std::sqrt(rho_j) * vh * jam;
        fluct += std::sqrt(rho_t) * (vh * b - mean_vb) * (sl * x);
      }
      s_noise[k] += (noise / mo).squaredNorm();
      s_int[k] += (intf / mo).squaredNorm();
      s_dev[k] += ((noise + intf + fluct) / mo).squaredNorm();
    }
  }
  Prop2Report rep;
  std::vector<double> xs, yn, yi, yd;
  for (std::size_t k = 0; k < mo_sweep.size(); ++k) {
    Prop2Point pt{mo_sweep[k], std::sqrt(s_noise[k] / trials), std::sqrt(s_int[k] / trials), std::sqrt(s_dev[k] / trials)};
    rep.points.push_back(pt);
    xs.push_back(pt.m_o);
    yn.push_back(pt.noise);
    yi.push_back(pt.interference);
    yd.push_back(pt.deviation);
  }
  if (xs.size() >= 2) {
    rep.slope_noise = fit_loglog_slope(xs, yn);
    rep.slope_deviation = fit_loglog_slope(xs, yd);
    if (m_j > 0) rep.slope_interference = fit_loglog_slope(xs, yi);
  }
  return rep;
}

struct Prop3Point {
  int m_j = 0;
  double cpu_jamming = 0.0;   // RMS || sum_m i_c,m ||
  double ur_mean = 0.0;       // mean level ||E{G^H G} Pi^{1/2}|| sqrt(rho_J) at the UR
  double ur_residual = 0.0;   // RMS of its fluctuation around that mean
};

struct Prop3Report {
  std::vector<Prop3Point> points;
  double cpu_ratio = 0.0;      // last / first cpu_jamming
  double ur_mean_spread = 0.0; // max |ur_mean / mean(ur_mean) - 1|
};

// Large-M_J check with rho_J = E_J / M_J^2, perfect CSI, MRT at the UT and
// the jammers, equal-split jamming power. Geometries are drawn with
// M_o + max(M_J) MNs; the first M_J jammers are used at each sweep point.
inline Prop3Report verify_prop3(const SystemParams& p, const std::vector<int>& mj_sweep, int m_o, double e_j,
                                int trials, std::uint64_t seed) {
  if (mj_sweep.empty() || trials < 1) throw ConfigError("verify_prop3: empty sweep");
  const int max_j = *std::max_element(mj_sweep.begin(), mj_sweep.end());
  const int N = p.mn_antennas, Nt = p.ut_antennas, Nr = p.ur_antennas;
  SystemParams q = p;
  q.num_mn = m_o + max_j;
  const RVector lambda = load_powers(Nr);

  std::vector<double> s_cpu(mj_sweep.size(), 0.0), s_mean(mj_sweep.size(), 0.0), s_res(mj_sweep.size(), 0.0);
  for (int t = 0; t < trials; ++t) {
    Rng rng(seed, streams::asymptotics, 0x30000 + static_cast<std::uint64_t>(t));
    const ScenarioRealization real = draw_scenario(q, rng);
    const CMatrix w = build_data_precoder(std::sqrt(real.beta_tr) * rng.cnormal_matrix(Nt, Nr), PrecoderKind::mrt);
    std::vector<CMatrix> vh;
    for (int m = 0; m < m_o; ++m) {
      const CMatrix b = (std::sqrt(real.beta_tm[m]) * rng.cnormal_matrix(Nt, N)).adjoint() * w;
      vh.push_back(mmse_combine(b, real.rho_t).adjoint());
    }
    // Jammer j's channel to the UR and its equal-split coefficients (gamma = beta).
    std::vector<CMatrix> g_jr;
    std::vector<RVector> spi;
    for (int j = 0; j < max_j; ++j) {
      const double beta = real.beta_mr[m_o + j];
      g_jr.push_back(std::sqrt(beta) * rng.cnormal_matrix(N, Nr));
      spi.push_back(RVector::Constant(Nr, std::sqrt(1.0 / (Nr * N * beta))));
    }
    const CVector xj = rng.cnormal_vector(Nr);
    // Per observer: accumulated jamming at its antennas from the first j jammers.
    std::vector<std::vector<CVector>> partial(m_o);
    for (int m = 0; m < m_o; ++m) {
      CVector acc = CVector::Zero(N);
      partial[m].reserve(max_j);
      for (int j = 0; j < max_j; ++j) {
        const CMatrix g = std::sqrt(real.beta_mm(m, m_o + j)) * rng.cnormal_matrix(N, N);
        acc += g.adjoint() * (g_jr[j] * spi[j].cast<cplx>().cwiseProduct(xj));
        partial[m].push_back(acc);
      }
    }
    // The mean term E{G^H G} Pi^{1/2} = N beta Pi^{1/2} is tracked as a level
    // (without the symbols); the fluctuation includes them.
    RVector ur_mean = RVector::Zero(Nr);
    CVector ur_fluct = CVector::Zero(Nr);
    std::vector<RVector> ur_mean_at(max_j);
    std::vector<CVector> ur_fluct_at(max_j);
    for (int j = 0; j < max_j; ++j) {
      const CVector sx = spi[j].cast<cplx>().cwiseProduct(xj);
      const CMatrix gg = g_jr[j].adjoint() * g_jr[j];
      const double e_gg = N * real.beta_mr[m_o + j];
      ur_mean += e_gg * spi[j];
      ur_fluct += (gg - e_gg * CMatrix::Identity(Nr, Nr)) * sx;
      ur_mean_at[j] = ur_mean;
      ur_fluct_at[j] = ur_fluct;
    }
    for (std::size_t k = 0; k < mj_sweep.size(); ++k) {
      const int mj = mj_sweep[k];
      const double rho_j = e_j / (static_cast<double>(mj) * mj);
      CVector cpu = CVector::Zero(Nr);
      for (int m = 0; m < m_o; ++m) cpu += std::sqrt(rho_j) * vh[m] * partial[m][mj - 1];
      s_cpu[k] += cpu.squaredNorm();
      s_mean[k] += std::sqrt(rho_j) * ur_mean_at[mj - 1].norm();
      s_res[k] += (std::sqrt(rho_j) * ur_fluct_at[mj - 1]).squaredNorm();
    }
  }
  Prop3Report rep;
  double avg = 0.0;
  for (std::size_t k = 0; k < mj_sweep.size(); ++k) {
    rep.points.push_back({mj_sweep[k], std::sqrt(s_cpu[k] / trials), s_mean[k] / trials,
                          std::sqrt(s_res[k] / trials)});
    avg += rep.points.back().ur_mean;
  }
  avg /= static_cast<double>(rep.points.size());
  rep.cpu_ratio = rep.points.front().cpu_jamming > 0.0 ? rep.points.back().cpu_jamming / rep.points.front().cpu_jamming : 0.0;
  for (const Prop3Point& pt : rep.points)
    rep.ur_mean_spread = std::max(rep.ur_mean_spread, avg > 0.0 ? std::abs(pt.ur_mean / avg - 1.0) : 0.0);
  return rep;
}

}  // namespace cfmon
