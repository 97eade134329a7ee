#pragma once

#include "cfmon/types.hpp"

#include <cmath>

namespace cfmon {

// Data precoder at the UT from its uplink estimate (Nt x Nr). Columns are
// normalized to unit norm after the ZF or MRT construction.
inline CMatrix build_data_precoder(const CMatrix& ghat_tr, PrecoderKind kind) {
  CMatrix w;
  if (kind == PrecoderKind::zf) {
    const CMatrix gram = ghat_tr.adjoint() * ghat_tr;
    Eigen::LLT<CMatrix> llt(gram);
    const double scale = gram.diagonal().real().maxCoeff();
    if (llt.info() != Eigen::Success || !(scale > 0.0))
      throw DegenerateChannelError("ZF precoder: Gram matrix of the channel estimate is singular");
    const RVector ldiag = CMatrix(llt.matrixL()).diagonal().real();
    if (ldiag.minCoeff() * ldiag.minCoeff() < 1e-13 * scale)
      throw DegenerateChannelError("ZF precoder: Gram matrix of the channel estimate is ill-conditioned");
    w = ghat_tr * llt.solve(CMatrix::Identity(gram.rows(), gram.cols()));
  } else {
    w = ghat_tr;
  }
  for (Eigen::Index n = 0; n < w.cols(); ++n) {
    const double norm = w.col(n).norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) throw DegenerateChannelError("precoder column with zero norm");
    w.col(n) /= norm;
  }
  return w;
}

// Equal per-stream loading; sums to one so E{||s_t||^2} = rho_t with unit-norm columns.
inline RVector load_powers(int num_streams) {
  if (num_streams < 1) throw ConfigError("load_powers: need at least one stream");
  return RVector::Constant(num_streams, 1.0 / num_streams);
}

// MMSE combiner V = B (B^H B + reg I)^{-1}, B is N x Nr.
inline CMatrix mmse_combine_reg(const CMatrix& bhat, double reg) {
  CMatrix gram = bhat.adjoint() * bhat;
  gram.diagonal().array() += reg;
  Eigen::LDLT<CMatrix> ldlt(gram);
  return ldlt.solve(bhat.adjoint()).adjoint();
}

// Per-stream regularizer is 1/rho_t.
inline CMatrix mmse_combine(const CMatrix& bhat, double rho_t) { return mmse_combine_reg(bhat, 1.0 / rho_t); }

}  // namespace cfmon
