#pragma once

#include "cfmon/channel.hpp"
#include "cfmon/precoding.hpp"
#include "cfmon/rng.hpp"
#include "cfmon/scenario.hpp"
#include "cfmon/types.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace cfmon {

// Mode flags (1 = observe, 0 = jam) and jamming power coefficients pi[m][n]
// in absolute units.
struct MonitoringConfig {
  std::vector<int> alpha;
  RMatrix pi;  // M x Nr

  int num_mn() const { return static_cast<int>(alpha.size()); }
  int num_observing() const {
    int c = 0;
    for (int a : alpha) c += a;
    return c;
  }
  int num_jamming() const { return num_mn() - num_observing(); }
};

// E{||g_hat_mr,n||^2} = N gamma_mr: the weight of pi[m][n] in the per-MN power budget.
inline double jam_budget_weight(int mn_antennas, double gamma_mr) { return mn_antennas * gamma_mr; }

// (1 - alpha_m) sum_n N gamma_mr pi[m][n]; feasible when <= 1.
inline double jam_budget_usage(const MonitoringConfig& cfg, int m, int mn_antennas, double gamma_mr) {
  if (cfg.alpha[m] == 1) return 0.0;
  return jam_budget_weight(mn_antennas, gamma_mr) * cfg.pi.row(m).sum();
}

inline void validate_config(const MonitoringConfig& cfg, int mn_antennas, const std::vector<double>& gamma_mr,
                            double tol = 1e-9) {
  if (static_cast<int>(gamma_mr.size()) != cfg.num_mn() || cfg.pi.rows() != cfg.num_mn())
    throw InfeasibleConfigError("config dimensions do not match the number of MNs");
  for (int m = 0; m < cfg.num_mn(); ++m) {
    if (cfg.alpha[m] != 0 && cfg.alpha[m] != 1) throw InfeasibleConfigError("alpha must be 0 or 1");
    if ((cfg.pi.row(m).array() < 0.0).any()) throw InfeasibleConfigError("jamming coefficients must be >= 0");
    if (jam_budget_usage(cfg, m, mn_antennas, gamma_mr[m]) > 1.0 + tol)
      throw InfeasibleConfigError("MN " + std::to_string(m) + " exceeds its jamming power budget");
  }
}

// Builds a config from per-MN budget fractions: pi = frac / (N gamma_mr).
inline MonitoringConfig config_from_fractions(const std::vector<int>& alpha, const RMatrix& fractions, int mn_antennas,
                                              const std::vector<double>& gamma_mr) {
  MonitoringConfig cfg{alpha, RMatrix::Zero(fractions.rows(), fractions.cols())};
  for (int m = 0; m < cfg.num_mn(); ++m) {
    const double w = jam_budget_weight(mn_antennas, gamma_mr[m]);
    if (w > 0.0) cfg.pi.row(m) = fractions.row(m) / w;
  }
  return cfg;
}

// Equal split saturating every jamming MN's budget.
inline MonitoringConfig equal_power_config(const std::vector<int>& alpha, int num_streams, int mn_antennas,
                                           const std::vector<double>& gamma_mr) {
  RMatrix frac = RMatrix::Zero(static_cast<Eigen::Index>(alpha.size()), num_streams);
  for (std::size_t m = 0; m < alpha.size(); ++m)
    if (alpha[m] == 0) frac.row(static_cast<Eigen::Index>(m)).setConstant(1.0 / num_streams);
  return config_from_fractions(alpha, frac, mn_antennas, gamma_mr);
}

struct PrecoderSet {
  CMatrix w;                // Nt x Nr, unit-norm columns
  RVector lambda;           // Nr, sums to one
  std::vector<CMatrix> wj;  // N x Nr per MN (MR: the MN's uplink estimate)
};

// MR jamming precoders W_m^J = G_hat_mr. Throws when the config breaks the budget.
inline std::vector<CMatrix> build_jamming(const MonitoringConfig& cfg, const std::vector<CMatrix>& ghat_mr,
                                          const std::vector<double>& gamma_mr, int mn_antennas) {
  validate_config(cfg, mn_antennas, gamma_mr);
  return ghat_mr;
}

inline PrecoderSet build_precoders(const UplinkEstimates& ul, const MonitoringConfig& cfg, PrecoderKind kind,
                                   int mn_antennas) {
  PrecoderSet pre;
  pre.w = build_data_precoder(ul.ghat_tr, kind);
  pre.lambda = load_powers(static_cast<int>(pre.w.cols()));
  pre.wj = build_jamming(cfg, ul.ghat_mr, ul.gamma_mr, mn_antennas);
  return pre;
}

// s_t = sqrt(rho_t) W Lambda^{1/2} x.
inline CVector data_signal(const PrecoderSet& pre, double rho_t, const CVector& x) {
  return std::sqrt(rho_t) * pre.w * (pre.lambda.array().sqrt().matrix().cast<cplx>().asDiagonal() * x);
}

// s_m^J = (1 - alpha_m) sqrt(rho_J) W_m^J Pi_m^{1/2} x^J.
inline CVector jamming_signal(const PrecoderSet& pre, const MonitoringConfig& cfg, int m, double rho_j,
                              const CVector& xj) {
  if (cfg.alpha[m] == 1) return CVector::Zero(pre.wj[m].rows());
  const CVector scaled = cfg.pi.row(m).transpose().array().sqrt().matrix().cast<cplx>().cwiseProduct(xj);
  return std::sqrt(rho_j) * pre.wj[m] * scaled;
}

// One data slot: received signals with their additive decomposition.
struct ReceivedSignals {
  CVector x;   // data symbols, CN(0, I)
  CVector xj;  // jamming symbols shared by all jammers
  CVector y_r, y_r_data, y_r_jam, y_r_noise;
  std::vector<CVector> y_m, y_m_data, y_m_jam, y_m_noise;  // zero for jamming MNs
};

inline ReceivedSignals receive(const ChannelSet& ch, const PrecoderSet& pre, const MonitoringConfig& cfg,
                               const ScenarioRealization& real, Rng& rng) {
  const int M = cfg.num_mn();
  const Eigen::Index Nr = pre.w.cols();
  ReceivedSignals rx;
  rx.x = rng.cnormal_vector(Nr);
  rx.xj = rng.cnormal_vector(Nr);
  const CVector st = data_signal(pre, real.rho_t, rx.x);
  std::vector<CVector> sj;
  sj.reserve(M);
  for (int m = 0; m < M; ++m) sj.push_back(jamming_signal(pre, cfg, m, real.rho_j, rx.xj));

  rx.y_r_data = ch.g_tr.adjoint() * st;
  rx.y_r_jam = CVector::Zero(Nr);
  for (int m = 0; m < M; ++m)
    if (cfg.alpha[m] == 0) rx.y_r_jam += ch.g_mr[m].adjoint() * sj[m];
  rx.y_r_noise = rng.cnormal_vector(Nr);
  rx.y_r = rx.y_r_data + rx.y_r_jam + rx.y_r_noise;

  for (int m = 0; m < M; ++m) {
    const Eigen::Index N = ch.g_tm[m].cols();
    CVector data = CVector::Zero(N), jam = CVector::Zero(N), noise = CVector::Zero(N);
    if (cfg.alpha[m] == 1) {
      data = ch.g_tm[m].adjoint() * st;
      for (int k = 0; k < M; ++k)
        if (k != m && cfg.alpha[k] == 0) jam += ch.g_mm[m][k].adjoint() * sj[k];
      noise = rng.cnormal_vector(N);
    }
    rx.y_m.push_back(data + jam + noise);
    rx.y_m_data.push_back(std::move(data));
    rx.y_m_jam.push_back(std::move(jam));
    rx.y_m_noise.push_back(std::move(noise));
  }
  return rx;
}

// CPU aggregate z_c = sum_m alpha_m V_m^H y_m and its desired / noise /
// inter-MN interference parts.
struct CombinedSignal {
  CVector z_c, d_c, n_c, i_c;
};

inline CombinedSignal aggregate_cpu(const MonitoringConfig& cfg, const std::vector<CMatrix>& v,
                                    const ReceivedSignals& rx) {
  if (v.size() != static_cast<std::size_t>(cfg.num_mn()) || rx.y_m.size() != v.size())
    throw Error("aggregate_cpu: need one combiner and one received vector per MN");
  const Eigen::Index Nr = v.empty() ? rx.x.size() : v.front().cols();
  CombinedSignal out{CVector::Zero(Nr), CVector::Zero(Nr), CVector::Zero(Nr), CVector::Zero(Nr)};
  for (int m = 0; m < cfg.num_mn(); ++m) {
    if (cfg.alpha[m] != 1) continue;
    const CMatrix vh = v[m].adjoint();
    out.z_c += vh * rx.y_m[m];
    out.d_c += vh * rx.y_m_data[m];
    out.n_c += vh * rx.y_m_noise[m];
    out.i_c += vh * rx.y_m_jam[m];
  }
  return out;
}

}  // namespace cfmon
