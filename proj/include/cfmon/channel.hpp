#pragma once

#include "cfmon/precoding.hpp"
#include "cfmon/rng.hpp"
#include "cfmon/scenario.hpp"
#include "cfmon/types.hpp"

#include <json.hpp>

#include <cmath>
#include <functional>
#include <vector>

namespace cfmon {

// True small-scale channels of one coherence block, large-scale gains applied.
struct ChannelSet {
  CMatrix g_tr;                            // Nt x Nr
  std::vector<CMatrix> g_mr;               // N x Nr
  std::vector<CMatrix> g_tm;               // Nt x N
  std::vector<std::vector<CMatrix>> g_mm;  // N x N, zero for m == m'
};

inline ChannelSet draw_channels(const SystemParams& p, const ScenarioRealization& real, Rng& rng) {
  const int M = real.num_mn();
  const int N = p.mn_antennas, Nt = p.ut_antennas, Nr = p.ur_antennas;
  ChannelSet ch;
  ch.g_tr = std::sqrt(real.beta_tr) * rng.cnormal_matrix(Nt, Nr);
  ch.g_mr.reserve(M);
  ch.g_tm.reserve(M);
  for (int m = 0; m < M; ++m) ch.g_mr.push_back(std::sqrt(real.beta_mr[m]) * rng.cnormal_matrix(N, Nr));
  for (int m = 0; m < M; ++m) ch.g_tm.push_back(std::sqrt(real.beta_tm[m]) * rng.cnormal_matrix(Nt, N));
  ch.g_mm.assign(M, std::vector<CMatrix>(M, CMatrix::Zero(N, N)));
  for (int m = 0; m < M; ++m)
    for (int k = m + 1; k < M; ++k) {
      ch.g_mm[m][k] = std::sqrt(real.beta_mm(m, k)) * rng.cnormal_matrix(N, N);
      ch.g_mm[k][m] = ch.g_mm[m][k].transpose();  // reciprocal link
    }
  return ch;
}

// tau x Nr matrix whose orthonormal columns are the uplink pilots (identity columns).
inline CMatrix uplink_pilot_matrix(int tau, int num_streams) {
  if (tau < num_streams) throw ConfigError("pilot length shorter than the number of streams");
  return CMatrix::Identity(tau, num_streams);
}

// Nr x tau matrix with orthonormal rows (Phi Phi^H = I).
inline CMatrix downlink_pilot_matrix(int tau, int num_streams) {
  return uplink_pilot_matrix(tau, num_streams).transpose();
}

// Per-entry mean square of the uplink MMSE estimate.
inline double uplink_gamma(double tau, double rho, double beta, double noise_var = 1.0) {
  const double snr = tau * rho * beta;
  return snr + noise_var > 0.0 ? snr * beta / (snr + noise_var) : 0.0;
}

// Receives the UR's uplink pilots over channel g (rows = receive antennas),
// projects onto each pilot and applies the scalar MMSE gain.
inline CMatrix uplink_estimate(const CMatrix& g, double beta, int tau, double rho, Rng& rng, double noise_var = 1.0) {
  const CMatrix phi = uplink_pilot_matrix(tau, static_cast<int>(g.cols()));
  const double amp = std::sqrt(tau * rho);
  CMatrix y = amp * g * phi.adjoint();
  if (noise_var > 0.0) y += rng.cnormal_matrix(g.rows(), tau, noise_var);
  const CMatrix projected = y * phi;
  const double denom = tau * rho * beta + noise_var;
  const double gain = denom > 0.0 ? amp * beta / denom : 0.0;
  return gain * projected;
}

struct UplinkEstimates {
  CMatrix ghat_tr;
  std::vector<CMatrix> ghat_mr;
  double gamma_tr = 0.0;
  std::vector<double> gamma_mr;
};

inline UplinkEstimates uplink_training(const ChannelSet& ch, const ScenarioRealization& real, const SystemParams& p,
                                       Rng& rng, double noise_var = 1.0) {
  const int tau = p.uplink_pilots;
  if (tau < p.ur_antennas) throw ConfigError("uplink training requires tau_r >= Nr");
  UplinkEstimates est;
  est.ghat_tr = uplink_estimate(ch.g_tr, real.beta_tr, tau, real.rho_r, rng, noise_var);
  est.gamma_tr = uplink_gamma(tau, real.rho_r, real.beta_tr, noise_var);
  for (int m = 0; m < real.num_mn(); ++m) {
    est.ghat_mr.push_back(uplink_estimate(ch.g_mr[m], real.beta_mr[m], tau, real.rho_r, rng, noise_var));
    est.gamma_mr.push_back(uplink_gamma(tau, real.rho_r, real.beta_mr[m], noise_var));
  }
  return est;
}

// Prior moments of the effective channels a_{n,n'} = g_tr,n^H w_n' and
// b_p = W^H g_tm,p that the beamforming-training estimators need.
struct EffectiveMoments {
  PrecoderKind kind = PrecoderKind::zf;
  std::size_t key = 0;
  int samples = 0;
  CMatrix mean_a;               // Nr x Nr
  RMatrix var_a;                // Nr x Nr
  std::vector<CVector> mean_b;  // per MN, Nr
  std::vector<CMatrix> cov_b;   // per MN, Nr x Nr
  RMatrix mean_a_stderr_sq;     // per-entry squared standard error of mean_a
};

// Key over precoder kind and the large-scale coefficients that shape the moments.
inline std::size_t moments_key(PrecoderKind kind, const ScenarioRealization& real) {
  std::size_t h = std::hash<int>{}(static_cast<int>(kind));
  auto mix = [&h](double v) { h ^= std::hash<double>{}(v) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2); };
  mix(real.beta_tr);
  mix(real.rho_r);
  for (double b : real.beta_tm) mix(b);
  return h;
}

// Draws a fresh G_tr, its uplink estimate and the resulting precoder,
// redrawing on a degenerate ZF Gram matrix.
struct PrecodedDraw {
  CMatrix g_tr;
  CMatrix ghat_tr;
  CMatrix w;
};

inline PrecodedDraw draw_precoded_link(const SystemParams& p, const ScenarioRealization& real, PrecoderKind kind,
                                       Rng& rng, bool perfect_csi = false) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    PrecodedDraw d;
    d.g_tr = std::sqrt(real.beta_tr) * rng.cnormal_matrix(p.ut_antennas, p.ur_antennas);
    d.ghat_tr = perfect_csi ? d.g_tr : uplink_estimate(d.g_tr, real.beta_tr, p.uplink_pilots, real.rho_r, rng);
    try {
      d.w = build_data_precoder(d.ghat_tr, kind);
      return d;
    } catch (const DegenerateChannelError&) {
    }
  }
  throw DegenerateChannelError("could not draw a non-degenerate UT precoder in 100 attempts");
}

inline EffectiveMoments effective_moments(PrecoderKind kind, const SystemParams& p, const ScenarioRealization& real,
                                          int n_mc, Rng& rng, bool perfect_csi = false) {
  if (n_mc < 1000) throw ConfigError("effective_moments: n_mc must be >= 1000");
  const int Nr = p.ur_antennas, N = p.mn_antennas, M = real.num_mn();
  EffectiveMoments mom;
  mom.kind = kind;
  mom.key = moments_key(kind, real);
  mom.samples = n_mc;
  CMatrix sum_a = CMatrix::Zero(Nr, Nr);
  RMatrix sum_abs2 = RMatrix::Zero(Nr, Nr);
  std::vector<CVector> sum_b(M, CVector::Zero(Nr));
  std::vector<CMatrix> sum_bb(M, CMatrix::Zero(Nr, Nr));
  for (int i = 0; i < n_mc; ++i) {
    const PrecodedDraw d = draw_precoded_link(p, real, kind, rng, perfect_csi);
    const CMatrix a = d.g_tr.adjoint() * d.w;
    sum_a += a;
    sum_abs2 += a.cwiseAbs2();
    const CMatrix wh = d.w.adjoint();
    for (int m = 0; m < M; ++m) {
      const CMatrix g_tm = std::sqrt(real.beta_tm[m]) * rng.cnormal_matrix(p.ut_antennas, N);
      const CMatrix b = wh * g_tm;  // column p is b_p
      sum_b[m] += b.rowwise().sum();
      sum_bb[m].noalias() += b * b.adjoint();
    }
  }
  mom.mean_a = sum_a / n_mc;
  const RMatrix second = sum_abs2 / n_mc;
  mom.var_a = (second - mom.mean_a.cwiseAbs2()).cwiseMax(0.0);
  mom.mean_a_stderr_sq = mom.var_a / n_mc;
  const double count = static_cast<double>(n_mc) * N;
  for (int m = 0; m < M; ++m) {
    CVector mu = sum_b[m] / count;
    CMatrix cov = sum_bb[m] / count - mu * mu.adjoint();
    cov = 0.5 * (cov + cov.adjoint()).eval();
    mom.mean_b.push_back(std::move(mu));
    mom.cov_b.push_back(std::move(cov));
  }
  return mom;
}

// Estimates formed at the UR (a_hat) and at each MN (rows b_hat_p^H).
struct EffectiveEstimates {
  CMatrix ahat;               // Nr x Nr
  std::vector<CMatrix> bhat;  // N x Nr per MN
};

// Gain sqrt(tau rho) C (tau rho C + s2 I)^{-1} of the vector MMSE estimator.
inline CMatrix b_estimator_gain(const CMatrix& cov, double tau, double rho, double noise_var) {
  const double amp = std::sqrt(tau * rho);
  if (amp == 0.0) return CMatrix::Zero(cov.rows(), cov.cols());
  CMatrix s = tau * rho * cov;
  s.diagonal().array() += noise_var;
  // gain = amp * C * S^{-1};  S Hermitian so gain^H = amp * S^{-1} C
  return (amp * s.ldlt().solve(cov)).adjoint();
}

// Error covariance of the b_p MMSE estimate: C - amp^2 C (tau rho C + s2 I)^{-1} C.
inline CMatrix b_error_covariance(const CMatrix& cov, double tau, double rho, double noise_var = 1.0) {
  const CMatrix gain = b_estimator_gain(cov, tau, rho, noise_var);
  CMatrix err = cov - std::sqrt(tau * rho) * gain * cov;
  return 0.5 * (err + err.adjoint());
}

inline void check_moments(const EffectiveMoments* mom, PrecoderKind kind, int num_mn) {
  if (mom == nullptr || mom->kind != kind || static_cast<int>(mom->cov_b.size()) != num_mn)
    throw Error("beamforming training: no moment cache for the configured precoder");
}

// Projects precoded downlink pilots at one MN and applies the b_p MMSE
// estimator row by row. `b` is the true N x Nr effective channel G_tm^H W.
inline CMatrix estimate_b(const CMatrix& b, const CVector& mean_b, const CMatrix& gain, int tau, double rho, Rng& rng,
                          double noise_var = 1.0) {
  const int Nr = static_cast<int>(b.cols());
  const CMatrix phi = downlink_pilot_matrix(tau, Nr);
  const double amp = std::sqrt(tau * rho);
  CMatrix y = amp * b * phi;
  if (noise_var > 0.0) y += rng.cnormal_matrix(b.rows(), tau, noise_var);
  const CMatrix projected = y * phi.adjoint();  // row p = amp b_p^H + noise
  // Row form of b_hat_p = mu + K (z_p - amp mu) with z_p = row_p^H.
  const CVector offset = mean_b - gain * (amp * mean_b);
  CMatrix bhat = projected * gain.adjoint();
  bhat.rowwise() += offset.adjoint();
  return bhat;
}

inline EffectiveEstimates beamforming_training(const ChannelSet& ch, const CMatrix& w, const ScenarioRealization& real,
                                               const SystemParams& p, const EffectiveMoments* mom, Rng& rng,
                                               double noise_var = 1.0) {
  const int M = real.num_mn(), Nr = p.ur_antennas, tau = p.downlink_pilots;
  if (tau < Nr) throw ConfigError("beamforming training requires tau_t >= Nr");
  check_moments(mom, p.precoder, M);
  const double amp = std::sqrt(tau * real.rho_t);
  const CMatrix phi = downlink_pilot_matrix(tau, Nr);

  EffectiveEstimates est;
  const CMatrix a = ch.g_tr.adjoint() * w;
  CMatrix y = amp * a * phi;
  if (noise_var > 0.0) y += rng.cnormal_matrix(Nr, tau, noise_var);
  const CMatrix projected = y * phi.adjoint();
  est.ahat.resize(Nr, Nr);
  for (int n = 0; n < Nr; ++n)
    for (int k = 0; k < Nr; ++k) {
      const double var = mom->var_a(n, k);
      const double denom = tau * real.rho_t * var + noise_var;
      const double gain = denom > 0.0 ? amp * var / denom : 0.0;
      est.ahat(n, k) = mom->mean_a(n, k) + gain * (projected(n, k) - amp * mom->mean_a(n, k));
    }
  for (int m = 0; m < M; ++m) {
    const CMatrix gain = b_estimator_gain(mom->cov_b[m], tau, real.rho_t, noise_var);
    est.bhat.push_back(estimate_b(ch.g_tm[m].adjoint() * w, mom->mean_b[m], gain, tau, real.rho_t, rng, noise_var));
  }
  return est;
}

// JSON sidecar for reuse across runs.
inline nlohmann::json moments_to_json(const EffectiveMoments& mom) {
  auto cmat = [](const CMatrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back({m(i, j).real(), m(i, j).imag()});
      rows.push_back(row);
    }
    return rows;
  };
  nlohmann::json j;
  j["kind"] = std::string(to_string(mom.kind));
  j["key"] = mom.key;
  j["samples"] = mom.samples;
  j["mean_a"] = cmat(mom.mean_a);
  j["var_a"] = cmat(mom.var_a.cast<cplx>());
  j["mean_b"] = nlohmann::json::array();
  j["cov_b"] = nlohmann::json::array();
  for (std::size_t m = 0; m < mom.mean_b.size(); ++m) {
    j["mean_b"].push_back(cmat(mom.mean_b[m]));
    j["cov_b"].push_back(cmat(mom.cov_b[m]));
  }
  return j;
}

inline EffectiveMoments moments_from_json(const nlohmann::json& j) {
  auto cmat = [](const nlohmann::json& rows) {
    CMatrix m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t k = 0; k < rows[i].size(); ++k)
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = {rows[i][k][0].get<double>(), rows[i][k][1].get<double>()};
    return m;
  };
  EffectiveMoments mom;
  mom.kind = parse_precoder(j.at("kind").get<std::string>());
  mom.key = j.at("key").get<std::size_t>();
  mom.samples = j.at("samples").get<int>();
  mom.mean_a = cmat(j.at("mean_a"));
  mom.var_a = cmat(j.at("var_a")).real();
  for (const auto& v : j.at("mean_b")) mom.mean_b.push_back(cmat(v));
  for (const auto& c : j.at("cov_b")) mom.cov_b.push_back(cmat(c));
  mom.mean_a_stderr_sq = mom.var_a / std::max(mom.samples, 1);
  return mom;
}

}  // namespace cfmon
