#pragma once

#include "cfmon/channel.hpp"
#include "cfmon/precoding.hpp"
#include "cfmon/rng.hpp"
#include "cfmon/scenario.hpp"
#include "cfmon/transmission.hpp"
#include "cfmon/types.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <ostream>
#include <vector>

namespace cfmon {

// Monte-Carlo depths. n_outer small-scale draws per geometry carry the outer
// expectation of the log-det; n_inner is the depth of the sampled
// conditional-expectation route; n_mc sizes the effective-channel moment cache.
struct ExpectationPlan {
  int n_inner = 200;
  int n_outer = 200;
  int n_geom = 500;
  int n_mc = 5000;

  void validate() const {
    if (n_inner < 100 || n_outer < 100) throw ConfigError("ExpectationPlan: n_inner and n_outer must be >= 100");
    if (n_geom < 1) throw ConfigError("ExpectationPlan: n_geom must be >= 1");
    if (n_mc < 1000) throw ConfigError("ExpectationPlan: n_mc must be >= 1000");
  }

  // Desk-scale plan: 10x fewer geometries and moment samples.
  ExpectationPlan fast() const {
    ExpectationPlan f = *this;
    f.n_geom = std::max(1, n_geom / 10);
    f.n_mc = std::max(1000, n_mc / 10);
    return f;
  }
};

struct SEReport {
  double se_r = 0.0;
  double se_c1 = 0.0;
  double se_c2 = 0.0;
  int msp1 = 0;
  int msp2 = 0;
  double prelog = 0.0;

  double se_c(CsiCase c) const { return c == CsiCase::case1 ? se_c1 : se_c2; }
  int msp(CsiCase c) const { return c == CsiCase::case1 ? msp1 : msp2; }
};

inline SEReport make_report(double prelog, double se_r, double se_c1, double se_c2) {
  SEReport r;
  r.prelog = prelog;
  r.se_r = se_r;
  r.se_c1 = se_c1;
  r.se_c2 = se_c2;
  r.msp1 = se_c1 >= se_r ? 1 : 0;
  r.msp2 = se_c2 >= se_r ? 1 : 0;
  return r;
}

// log2 det(I + U) for Hermitian PSD U.
inline double log2det_identity_plus(const CMatrix& u) {
  CMatrix m = CMatrix::Identity(u.rows(), u.cols()) + 0.5 * (u + u.adjoint());
  Eigen::LLT<CMatrix> llt(m);
  if (llt.info() != Eigen::Success) throw NumericalError("I + Upsilon is not positive definite");
  const RVector ldiag = CMatrix(llt.matrixL()).diagonal().real();
  return 2.0 * ldiag.array().log().sum() / std::log(2.0);
}

// Upsilon = rho_t D^H Psi^{-1} D via a Cholesky solve. Psi = V^H K V loses
// rank when Nr exceeds the observing antenna count; D lies in the same range,
// so the pseudo-inverse on that range gives the rate.
inline CMatrix upsilon(const CMatrix& d, const CMatrix& psi, double rho_t) {
  const CMatrix h = 0.5 * (psi + psi.adjoint());
  Eigen::LLT<CMatrix> llt(h);
  if (llt.info() == Eigen::Success) {
    const RVector ldiag = CMatrix(llt.matrixL()).diagonal().real();
    if (ldiag.minCoeff() * ldiag.minCoeff() > 1e-10 * h.diagonal().real().maxCoeff())
      return rho_t * d.adjoint() * llt.solve(d);
  }
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(h);
  const RVector ev = eig.eigenvalues();
  const double tol = 1e-10 * std::max(std::abs(ev.minCoeff()), std::abs(ev.maxCoeff()));
  if (!(ev.maxCoeff() > 0.0) || ev.minCoeff() < -tol) throw NumericalError("Psi is not positive semi-definite");
  RVector inv = RVector::Zero(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev(i) > tol) inv(i) = 1.0 / ev(i);
  const CMatrix proj = eig.eigenvectors().adjoint() * d;
  return rho_t * proj.adjoint() * inv.cast<cplx>().asDiagonal() * proj;
}

// Per-stream jamming power at the UR antennas (n = 0..Nr-1), averaged over
// fading and the jamming symbols:
//   I_n = N sum_n' sum_m (1-a_m) pi_mn' beta_mr gamma_mr + N^2 (sum_m (1-a_m) sqrt(pi_mn) gamma_mr)^2
inline RVector jamming_interference(const MonitoringConfig& cfg, const std::vector<double>& beta_mr,
                                    const std::vector<double>& gamma_mr, int mn_antennas) {
  const Eigen::Index Nr = cfg.pi.cols();
  const double N = mn_antennas;
  double incoherent = 0.0;
  RVector coherent = RVector::Zero(Nr);
  for (int m = 0; m < cfg.num_mn(); ++m) {
    if (cfg.alpha[m] == 1) continue;
    incoherent += N * beta_mr[m] * gamma_mr[m] * cfg.pi.row(m).sum();
    coherent += gamma_mr[m] * cfg.pi.row(m).transpose().cwiseSqrt();
  }
  return (incoherent + (N * coherent.array()).square()).matrix();
}

// SINR per UR antenna for one effective-channel draw a = G_tr^H W.
inline RVector ur_sinr(const RMatrix& abs2_a, const RVector& lambda, double rho_t, double rho_j,
                       const RVector& interference) {
  const Eigen::Index Nr = abs2_a.rows();
  RVector g(Nr);
  for (Eigen::Index n = 0; n < Nr; ++n) {
    double leak = 0.0;
    for (Eigen::Index k = 0; k < Nr; ++k)
      if (k != n) leak += lambda(k) * abs2_a(n, k);
    g(n) = rho_t * lambda(n) * abs2_a(n, n) / (1.0 + rho_t * leak + rho_j * interference(n));
  }
  return g;
}

inline double ur_rate(const RMatrix& abs2_a, const RVector& lambda, double rho_t, double rho_j,
                      const RVector& interference) {
  return std::log2(1.0 + ur_sinr(abs2_a, lambda, rho_t, rho_j, interference).sum());
}

// Spatially white jamming power at each antenna of MN m:
// E{F_m F_m^H} = c_m I_N with c_m = N sum_m' (1-a_m') beta_mm' gamma_m'r sum_n pi_m'n.
inline std::vector<double> cpu_jamming_levels(const MonitoringConfig& cfg, const RMatrix& beta_mm,
                                              const std::vector<double>& gamma_mr, int mn_antennas) {
  const int M = cfg.num_mn();
  std::vector<double> c(M, 0.0);
  for (int m = 0; m < M; ++m)
    for (int k = 0; k < M; ++k)
      if (k != m && cfg.alpha[k] == 0) c[m] += mn_antennas * beta_mm(m, k) * gamma_mr[k] * cfg.pi.row(k).sum();
  return c;
}

// Residual self-interference of the co-located array, as a multiple of the
// receiver noise: rho_J,total 10^(-SI/10).
inline double self_interference_level(const MonitoringConfig& cfg, const ScenarioRealization& real,
                                      const std::vector<double>& gamma_mr, int mn_antennas) {
  if (!real.self_interference_db) return 0.0;
  double used = 0.0;
  for (int m = 0; m < cfg.num_mn(); ++m) used += jam_budget_usage(cfg, m, mn_antennas, gamma_mr[m]);
  return real.rho_j * used * std::pow(10.0, -*real.self_interference_db / 10.0);
}

// Sampled E{F_m F_m^H} over n_inner fresh inter-MN channels and jamming
// precoder estimates. Used to validate the closed form above.
inline CMatrix sampled_jamming_covariance(const MonitoringConfig& cfg, int m, const RMatrix& beta_mm,
                                          const std::vector<double>& gamma_mr, int mn_antennas, int n_inner,
                                          Rng& rng) {
  const int N = mn_antennas;
  const Eigen::Index Nr = cfg.pi.cols();
  CMatrix acc = CMatrix::Zero(N, N);
  for (int i = 0; i < n_inner; ++i) {
    CMatrix f = CMatrix::Zero(N, Nr);
    for (int k = 0; k < cfg.num_mn(); ++k) {
      if (k == m || cfg.alpha[k] == 1) continue;
      const CMatrix g = std::sqrt(beta_mm(m, k)) * rng.cnormal_matrix(N, N);
      const CMatrix wj = std::sqrt(gamma_mr[k]) * rng.cnormal_matrix(N, Nr);
      f += g.adjoint() * wj * cfg.pi.row(k).transpose().cwiseSqrt().cast<cplx>().asDiagonal();
    }
    acc.noalias() += f * f.adjoint();
  }
  return acc / n_inner;
}

// Sampled E{B_tilde Lambda B_tilde^H} with rows b_tilde_p ~ CN(0, C_err).
inline CMatrix sampled_error_covariance(const CMatrix& c_err, const RVector& lambda, int mn_antennas, int n_inner,
                                        Rng& rng) {
  const Eigen::Index Nr = c_err.rows();
  Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (c_err + c_err.adjoint()));
  const CMatrix root = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  const auto lam = lambda.cast<cplx>().asDiagonal();
  CMatrix acc = CMatrix::Zero(mn_antennas, mn_antennas);
  for (int i = 0; i < n_inner; ++i) {
    const CMatrix bt = (root * rng.cnormal_matrix(Nr, mn_antennas)).adjoint();  // N x Nr
    acc.noalias() += bt * lam * bt.adjoint();
  }
  return acc / n_inner;
}

// Everything about one geometry that does not depend on the monitoring
// config: small-scale draws, estimates, combiners. evaluate() then scores a
// config in O(n_outer * M * Nr^3).
class GeometryEvaluator {
 public:
  GeometryEvaluator(const SystemParams& p, const ScenarioRealization& real, const ExpectationPlan& plan, Rng rng,
                    bool perfect_csi = false)
      : params_(p), real_(real), perfect_(perfect_csi) {
    plan.validate();
    const int M = real.num_mn(), Nr = p.ur_antennas, N = p.mn_antennas;
    lambda_ = load_powers(Nr);
    sqrt_lambda_ = lambda_.cwiseSqrt();
    for (int m = 0; m < M; ++m)
      gamma_mr_.push_back(perfect_csi ? real.beta_mr[m] : uplink_gamma(p.uplink_pilots, real.rho_r, real.beta_mr[m]));

    std::vector<CMatrix> gains;
    if (!perfect_csi) {
      Rng mom_rng = rng.split(1);
      moments_ = effective_moments(p.precoder, p, real, plan.n_mc, mom_rng);
      for (int m = 0; m < M; ++m) {
        gains.push_back(b_estimator_gain(moments_.cov_b[m], p.downlink_pilots, real.rho_t, 1.0));
        const CMatrix c_err = b_error_covariance(moments_.cov_b[m], p.downlink_pilots, real.rho_t);
        err_trace_.push_back((lambda_.asDiagonal() * c_err.real()).trace());
      }
    } else {
      err_trace_.assign(M, 0.0);
    }

    Rng draw_rng = rng.split(2);
    draws_.reserve(plan.n_outer);
    const auto sl = sqrt_lambda_.cast<cplx>().asDiagonal();
    for (int i = 0; i < plan.n_outer; ++i) {
      const PrecodedDraw d = draw_precoded_link(p, real, p.precoder, draw_rng, perfect_csi);
      Draw dr;
      dr.abs2_a = (d.g_tr.adjoint() * d.w).cwiseAbs2();
      for (int m = 0; m < M; ++m) {
        const CMatrix g_tm = std::sqrt(real.beta_tm[m]) * draw_rng.cnormal_matrix(p.ut_antennas, N);
        const CMatrix b = g_tm.adjoint() * d.w;
        const CMatrix bhat = perfect_csi
                                 ? b
                                 : estimate_b(b, moments_.mean_b[m], gains[m], p.downlink_pilots, real.rho_t, draw_rng);
        const CMatrix v = mmse_combine(bhat, real.rho_t);
        const CMatrix vh = v.adjoint();
        dr.y.push_back(vh * bhat * sl);
        dr.x.push_back(vh * b * sl);
        dr.q.push_back(vh * v);
      }
      draws_.push_back(std::move(dr));
    }
  }

  const SystemParams& params() const { return params_; }
  const ScenarioRealization& realization() const { return real_; }
  const std::vector<double>& gamma_mr() const { return gamma_mr_; }
  const RVector& lambda() const { return lambda_; }
  const std::vector<double>& error_traces() const { return err_trace_; }
  int num_draws() const { return static_cast<int>(draws_.size()); }

  // Per-MN budget weights N gamma_mr.
  std::vector<double> budget_weights() const {
    std::vector<double> w;
    for (double g : gamma_mr_) w.push_back(jam_budget_weight(params_.mn_antennas, g));
    return w;
  }

  SEReport evaluate(const MonitoringConfig& cfg) const {
    validate_config(cfg, params_.mn_antennas, gamma_mr_);
    const double prelog = params_.prelog();
    return make_report(prelog, prelog * ur_mean_rate(cfg), prelog * cpu_case1_rate(cfg), prelog * cpu_case2_rate(cfg));
  }

  // E{log2(1 + sum_n Gamma_n)} over the draws (no prelog).
  double ur_mean_rate(const MonitoringConfig& cfg) const {
    const RVector interf = jamming_interference(cfg, real_.beta_mr, gamma_mr_, params_.mn_antennas);
    double acc = 0.0;
    for (const Draw& d : draws_) acc += ur_rate(d.abs2_a, lambda_, real_.rho_t, real_.rho_j, interf);
    return acc / num_draws();
  }

  // E{log2 det(I + Upsilon^(1))} over the draws (no prelog).
  double cpu_case1_rate(const MonitoringConfig& cfg) const {
    const std::vector<double> w = noise_weights(cfg, true);
    if (w.empty()) return 0.0;
    const Eigen::Index Nr = params_.ur_antennas;
    double acc = 0.0;
    for (const Draw& d : draws_) {
      CMatrix dhat = CMatrix::Zero(Nr, Nr), psi = CMatrix::Zero(Nr, Nr);
      for (int m = 0; m < cfg.num_mn(); ++m) {
        if (cfg.alpha[m] != 1) continue;
        dhat += d.y[m];
        psi += w[m] * d.q[m];
      }
      acc += log2det_identity_plus(upsilon(dhat, psi, real_.rho_t));
    }
    return acc / num_draws();
  }

  // log2 det(I + Upsilon^(2)) from unconditional moments (no prelog).
  double cpu_case2_rate(const MonitoringConfig& cfg) const {
    const std::vector<double> w = noise_weights(cfg, false);
    if (w.empty()) return 0.0;
    const Eigen::Index Nr = params_.ur_antennas;
    CMatrix mean_d = CMatrix::Zero(Nr, Nr), mean_dd = CMatrix::Zero(Nr, Nr), psi = CMatrix::Zero(Nr, Nr);
    for (const Draw& d : draws_) {
      CMatrix dm = CMatrix::Zero(Nr, Nr);
      for (int m = 0; m < cfg.num_mn(); ++m) {
        if (cfg.alpha[m] != 1) continue;
        dm += d.x[m];
        psi += w[m] * d.q[m];
      }
      mean_d += dm;
      mean_dd.noalias() += dm * dm.adjoint();
    }
    const double n = num_draws();
    mean_d /= n;
    mean_dd /= n;
    psi /= n;
    psi += real_.rho_t * (mean_dd - mean_d * mean_d.adjoint());
    return log2det_identity_plus(upsilon(mean_d, psi, real_.rho_t));
  }

 private:
  struct Draw {
    RMatrix abs2_a;           // |a_{n,n'}|^2
    std::vector<CMatrix> y;   // V^H B_hat Lambda^{1/2}
    std::vector<CMatrix> x;   // V^H B Lambda^{1/2}
    std::vector<CMatrix> q;   // V^H V
  };

  // Scalar weight of V_m^H V_m in Psi for each observing MN: noise (with any
  // self-interference), inter-MN jamming and, for case-1, the B-estimation
  // error. Empty when nobody observes.
  std::vector<double> noise_weights(const MonitoringConfig& cfg, bool with_error) const {
    if (cfg.num_observing() == 0) return {};
    const std::vector<double> c = cpu_jamming_levels(cfg, real_.beta_mm, gamma_mr_, params_.mn_antennas);
    const double si = self_interference_level(cfg, real_, gamma_mr_, params_.mn_antennas);
    std::vector<double> w(cfg.num_mn(), 0.0);
    for (int m = 0; m < cfg.num_mn(); ++m) {
      if (cfg.alpha[m] != 1) continue;
      w[m] = 1.0 + si + real_.rho_j * c[m] + (with_error ? real_.rho_t * err_trace_[m] : 0.0);
    }
    return w;
  }

  SystemParams params_;
  ScenarioRealization real_;
  bool perfect_;
  RVector lambda_, sqrt_lambda_;
  std::vector<double> gamma_mr_;
  std::vector<double> err_trace_;
  EffectiveMoments moments_;
  std::vector<Draw> draws_;
};

// Stream ids shared by every scheme so paired comparisons see the same
// geometries and fading.
namespace streams {
inline constexpr std::uint64_t geometry = 1;
inline constexpr std::uint64_t fading = 2;
inline constexpr std::uint64_t modes = 3;
inline constexpr std::uint64_t optimizer = 4;
inline constexpr std::uint64_t asymptotics = 5;
}  // namespace streams

inline ScenarioRealization draw_geometry(const SystemParams& p, std::uint64_t seed, std::uint64_t geom_id) {
  Rng rng(seed, streams::geometry, geom_id);
  return draw_scenario(p, rng);
}

struct MspEstimate {
  double msp = 0.0;
  double stderr_ = 0.0;
  int n = 0;
};

inline MspEstimate binomial_estimate(int successes, int n) {
  MspEstimate e;
  e.n = n;
  if (n <= 0) return e;
  e.msp = static_cast<double>(successes) / n;
  e.stderr_ = std::sqrt(e.msp * (1.0 - e.msp) / n);
  return e;
}

// MSP of a fixed config given in budget fractions (M x Nr, rows summing to <= 1)
// over plan.n_geom fresh geometries.
inline MspEstimate msp_estimate(const SystemParams& p, const std::vector<int>& alpha, const RMatrix& fractions,
                                const ExpectationPlan& plan, CsiCase csi, std::uint64_t seed) {
  plan.validate();
  int hits = 0;
  for (int g = 0; g < plan.n_geom; ++g) {
    const ScenarioRealization real = draw_geometry(p, seed, static_cast<std::uint64_t>(g));
    const GeometryEvaluator ev(p, real, plan, Rng(seed, streams::fading, static_cast<std::uint64_t>(g)));
    const MonitoringConfig cfg = config_from_fractions(alpha, fractions, p.mn_antennas, ev.gamma_mr());
    hits += ev.evaluate(cfg).msp(csi);
  }
  return binomial_estimate(hits, plan.n_geom);
}

struct SignalingLoad {
  long scalars_per_block = 0;
  long stat_params = 0;
};

inline SignalingLoad signaling_load(const SystemParams& p, int num_observing, CsiCase csi) {
  SignalingLoad s;
  s.scalars_per_block = static_cast<long>(p.coherence - (p.downlink_pilots + p.uplink_pilots)) * p.ur_antennas;
  s.stat_params = csi == CsiCase::case1 ? static_cast<long>(p.ur_antennas) * p.ur_antennas * num_observing : 0;
  return s;
}

inline SignalingLoad signaling_load(const SystemParams& p, const MonitoringConfig& cfg, CsiCase csi) {
  return signaling_load(p, cfg.num_observing(), csi);
}

inline std::uint64_t config_hash(const MonitoringConfig& cfg) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ull;
  };
  for (int a : cfg.alpha) mix(static_cast<std::uint64_t>(a));
  for (Eigen::Index i = 0; i < cfg.pi.size(); ++i) mix(std::hash<double>{}(cfg.pi.data()[i]));
  return h;
}

inline void write_se_header(std::ostream& os) { os << "geometry_id,config_hash,se_r,se_c1,se_c2,msp1,msp2\n"; }

inline void write_se_row(std::ostream& os, std::uint64_t geometry_id, std::uint64_t hash, const SEReport& r) {
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << geometry_id << ',' << std::hex << std::setw(16) << std::setfill('0') << hash << std::dec << std::setfill(' ')
     << ',' << std::setprecision(10) << r.se_r << ',' << r.se_c1 << ',' << r.se_c2 << ',' << r.msp1 << ',' << r.msp2
     << '\n';
  os.flags(flags);
  os.precision(prec);
}

}  // namespace cfmon
