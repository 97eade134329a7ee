#pragma once

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cfmon {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

enum class PrecoderKind { zf, mrt };
enum class CsiCase { case1, case2 };

inline std::string_view to_string(PrecoderKind k) { return k == PrecoderKind::zf ? "ZF" : "MRT"; }
inline std::string_view to_string(CsiCase c) { return c == CsiCase::case1 ? "case1" : "case2"; }

// Base of every error raised by the library. `kind()` is a stable token used
// in the CLI's machine-readable error line.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual std::string_view kind() const noexcept { return "error"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  std::string_view kind() const noexcept override { return "config"; }
};

// Rank-deficient estimated channel for ZF; callers redraw the realization.
class DegenerateChannelError : public Error {
 public:
  using Error::Error;
  std::string_view kind() const noexcept override { return "degenerate_channel"; }
};

class InfeasibleConfigError : public Error {
 public:
  using Error::Error;
  std::string_view kind() const noexcept override { return "infeasible_config"; }
};

class NumericalError : public Error {
 public:
  using Error::Error;
  std::string_view kind() const noexcept override { return "numerical"; }
};

}  // namespace cfmon
