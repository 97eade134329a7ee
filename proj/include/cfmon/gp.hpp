#pragma once

#include "cfmon/rng.hpp"
#include "cfmon/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace cfmon {

// ---------------------------------------------------------------- kernel

// Matern correlation at scaled distance r (unit signal variance).
inline double matern_bessel(double r, double nu) {
  if (nu <= 0.0) throw ConfigError("Matern smoothness must be positive");
  if (r <= 0.0) return 1.0;
  const double x = std::sqrt(2.0 * nu) * r;
  if (x > 700.0) return 0.0;
  return std::pow(2.0, 1.0 - nu) / std::tgamma(nu) * std::pow(x, nu) * std::cyl_bessel_k(nu, x);
}

inline double matern(double r, double nu) {
  r = std::abs(r);
  if (nu == 0.5) return std::exp(-r);
  if (nu == 1.5) {
    const double x = std::sqrt(3.0) * r;
    return (1.0 + x) * std::exp(-x);
  }
  if (nu == 2.5) {
    const double x = std::sqrt(5.0) * r;
    return (1.0 + x + x * x / 3.0) * std::exp(-x);
  }
  return matern_bessel(r, nu);
}

// Matern on the concatenated [alpha, pi] point with one
// lengthscale per block: r^2 = |d_alpha|^2 / l_alpha^2 + |d_pi|^2 / l_pi^2.
struct KernelHyper {
  double nu = 2.5;
  double len_alpha = 1.0;
  double len_pi = 0.5;
  double signal_var = 0.25;
  int alpha_dim = 0;

  void validate() const {
    if (!(len_alpha > 0.0) || !(len_pi > 0.0)) throw ConfigError("kernel lengthscales must be positive");
    if (!(signal_var > 0.0)) throw ConfigError("kernel signal variance must be positive");
    if (!(nu > 0.0)) throw ConfigError("Matern smoothness must be positive");
  }
};

inline double scaled_distance(const RVector& s, const RVector& t, const KernelHyper& h) {
  if (s.size() != t.size()) throw ConfigError("kernel: dimension mismatch");
  const Eigen::Index a = std::min<Eigen::Index>(h.alpha_dim, s.size());
  const double da = (s.head(a) - t.head(a)).squaredNorm();
  const double dp = (s.tail(s.size() - a) - t.tail(t.size() - a)).squaredNorm();
  return std::sqrt(da / (h.len_alpha * h.len_alpha) + dp / (h.len_pi * h.len_pi));
}

inline double kernel(const RVector& s, const RVector& t, const KernelHyper& h) {
  h.validate();
  return h.signal_var * matern(scaled_distance(s, t, h), h.nu);
}

// ---------------------------------------------------------------- posterior

struct Posterior {
  double mean = 0.0;
  double var = 0.0;
};

class GaussianProcess {
 public:
  explicit GaussianProcess(KernelHyper hyper, double prior_mean = 0.5) : hyper_(hyper), mu0_(prior_mean) {
    hyper_.validate();
  }

  void add(const RVector& s, double f, double noise_var) {
    if (noise_var < 0.0) throw ConfigError("observation noise must be >= 0");
    xs_.push_back(s);
    fs_.push_back(f);
    noise_.push_back(noise_var);
    dirty_ = true;
  }

  std::size_t size() const { return xs_.size(); }
  const KernelHyper& hyper() const { return hyper_; }
  double prior_mean() const { return mu0_; }
  const std::vector<RVector>& inputs() const { return xs_; }
  const std::vector<double>& outputs() const { return fs_; }

  void set_hyper(const KernelHyper& h) {
    h.validate();
    hyper_ = h;
    dirty_ = true;
  }

  Posterior posterior(const RVector& s) const {
    if (xs_.empty()) throw Error("GP posterior requested with no observations");
    refresh();
    const RVector k = cross(s);
    Posterior p;
    p.mean = mu0_ + k.dot(weights_);
    const RVector v = llt_.matrixL().solve(k);
    p.var = std::max(0.0, hyper_.signal_var - v.squaredNorm());
    return p;
  }

  double log_marginal_likelihood() const {
    refresh();
    const RVector r = residuals();
    const RMatrix l = llt_.matrixL();
    return -0.5 * r.dot(weights_) - l.diagonal().array().log().sum() -
           0.5 * static_cast<double>(r.size()) * std::log(2.0 * std::numbers::pi);
  }

  // Grid search over the two lengthscales, keeping the best log marginal likelihood.
  void fit_lengthscales(const std::vector<double>& grid_alpha, const std::vector<double>& grid_pi) {
    if (xs_.size() < 2) return;
    KernelHyper best = hyper_;
    double best_lml = -std::numeric_limits<double>::infinity();
    for (double la : grid_alpha)
      for (double lp : grid_pi) {
        KernelHyper h = hyper_;
        h.len_alpha = la;
        h.len_pi = lp;
        set_hyper(h);
        double lml = -std::numeric_limits<double>::infinity();
        try {
          lml = log_marginal_likelihood();
        } catch (const NumericalError&) {
        }
        if (lml > best_lml) {
          best_lml = lml;
          best = h;
        }
      }
    set_hyper(best);
  }

  double jitter_used() const {
    refresh();
    return jitter_;
  }

 private:
  RVector cross(const RVector& s) const {
    RVector k(static_cast<Eigen::Index>(xs_.size()));
    for (std::size_t i = 0; i < xs_.size(); ++i) k(static_cast<Eigen::Index>(i)) = kernel(s, xs_[i], hyper_);
    return k;
  }

  RVector residuals() const {
    RVector r(static_cast<Eigen::Index>(fs_.size()));
    for (std::size_t i = 0; i < fs_.size(); ++i) r(static_cast<Eigen::Index>(i)) = fs_[i] - mu0_;
    return r;
  }

  // Cholesky of K + diag(noise), adding jitter from 1e-10 to 1e-4 (relative
  // to the signal variance) until it factors.
  void refresh() const {
    if (!dirty_) return;
    const Eigen::Index n = static_cast<Eigen::Index>(xs_.size());
    RMatrix k(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j <= i; ++j) k(i, j) = k(j, i) = kernel(xs_[i], xs_[j], hyper_);
    for (Eigen::Index i = 0; i < n; ++i) k(i, i) += noise_[static_cast<std::size_t>(i)];
    jitter_ = 0.0;
    llt_.compute(k);
    for (double rel = 1e-10; llt_.info() != Eigen::Success; rel *= 10.0) {
      if (rel > 1e-4) throw NumericalError("GP Gram matrix is not positive definite even with jitter");
      jitter_ = rel * hyper_.signal_var;
      RMatrix kj = k;
      kj.diagonal().array() += jitter_;
      llt_.compute(kj);
    }
    weights_ = llt_.solve(residuals());
    dirty_ = false;
  }

  KernelHyper hyper_;
  double mu0_;
  std::vector<RVector> xs_;
  std::vector<double> fs_;
  std::vector<double> noise_;
  mutable bool dirty_ = true;
  mutable Eigen::LLT<RMatrix> llt_;
  mutable RVector weights_;
  mutable double jitter_ = 0.0;
};

// ---------------------------------------------------------------- acquisitions

enum class Acquisition { ei, pi, ucb };

inline std::string_view to_string(Acquisition a) {
  switch (a) {
    case Acquisition::ei: return "EI";
    case Acquisition::pi: return "PI";
    case Acquisition::ucb: return "UCB";
  }
  return "?";
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

inline double expected_improvement(const Posterior& p, double best, double xi = 0.01) {
  const double sd = std::sqrt(p.var);
  const double imp = p.mean - best - xi;
  if (sd <= 0.0) return std::max(0.0, imp);
  const double z = imp / sd;
  return imp * normal_cdf(z) + sd * normal_pdf(z);
}

inline double probability_of_improvement(const Posterior& p, double best, double xi = 0.01) {
  const double sd = std::sqrt(p.var);
  const double imp = p.mean - best - xi;
  if (sd <= 0.0) return imp > 0.0 ? 1.0 : 0.0;
  return normal_cdf(imp / sd);
}

inline double upper_confidence_bound(const Posterior& p, double kappa = 1.96) { return p.mean + kappa * std::sqrt(p.var); }

struct AcquisitionParams {
  double xi = 0.01;
  double kappa = 1.96;
};

inline double acquisition_value(Acquisition a, const Posterior& p, double best, const AcquisitionParams& ap = {}) {
  switch (a) {
    case Acquisition::ei: return expected_improvement(p, best, ap.xi);
    case Acquisition::pi: return probability_of_improvement(p, best, ap.xi);
    case Acquisition::ucb: return upper_confidence_bound(p, ap.kappa);
  }
  return 0.0;
}

// Index of the acquisition maximizer over precomputed pool posteriors; first wins on ties.
inline std::size_t argmax_acquisition(Acquisition a, const std::vector<Posterior>& posts, double best,
                                      const AcquisitionParams& ap = {}) {
  if (posts.empty()) throw Error("acquisition: empty candidate pool");
  std::size_t arg = 0;
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < posts.size(); ++i) {
    const double v = acquisition_value(a, posts[i], best, ap);
    if (v > top) {
      top = v;
      arg = i;
    }
  }
  return arg;
}

inline std::size_t argmax_acquisition(const GaussianProcess& gp, Acquisition a, const std::vector<RVector>& pool,
                                      double best, const AcquisitionParams& ap = {}) {
  std::vector<Posterior> posts;
  posts.reserve(pool.size());
  for (const RVector& s : pool) posts.push_back(gp.posterior(s));
  return argmax_acquisition(a, posts, best, ap);
}

// GP-Hedge selection among portfolio nominees.
class Hedge {
 public:
  explicit Hedge(std::size_t members, double eta = 1.0) : gains_(members, 0.0), eta_(eta) {
    if (members == 0) throw ConfigError("hedge: empty portfolio");
  }

  std::vector<double> probabilities() const {
    const double top = *std::max_element(gains_.begin(), gains_.end());
    std::vector<double> p(gains_.size());
    double z = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) z += p[j] = std::exp(eta_ * (gains_[j] - top));
    for (double& v : p) v /= z;
    return p;
  }

  std::size_t choose(Rng& rng) const {
    const std::vector<double> p = probabilities();
    double u = rng.uniform();
    for (std::size_t j = 0; j + 1 < p.size(); ++j) {
      if (u < p[j]) return j;
      u -= p[j];
    }
    return p.size() - 1;
  }

  // g_j += reward_j (the posterior mean at nominee j after the update).
  void update(const std::vector<double>& rewards) {
    if (rewards.size() != gains_.size()) throw Error("hedge: reward count mismatch");
    for (std::size_t j = 0; j < gains_.size(); ++j) gains_[j] += rewards[j];
  }

  const std::vector<double>& gains() const { return gains_; }

 private:
  std::vector<double> gains_;
  double eta_;
};

// ---------------------------------------------------------------- search space

// s = [alpha (M), pi (M*Nr, row-major per MN)].
struct SearchSpace {
  int num_mn = 0;
  int num_streams = 0;
  std::vector<double> weights;              // per-MN budget weight of pi
  std::optional<std::vector<int>> fixed_alpha;

  int dim() const { return num_mn + num_mn * num_streams; }
  double pi_at(const RVector& s, int m, int n) const { return s(num_mn + m * num_streams + n); }
  double& pi_at(RVector& s, int m, int n) const { return s(num_mn + m * num_streams + n); }

  std::vector<int> alpha_of(const RVector& s) const {
    std::vector<int> a(num_mn);
    for (int m = 0; m < num_mn; ++m) a[m] = s(m) >= 0.5 ? 1 : 0;
    return a;
  }

  RMatrix pi_of(const RVector& s) const {
    RMatrix p(num_mn, num_streams);
    for (int m = 0; m < num_mn; ++m)
      for (int n = 0; n < num_streams; ++n) p(m, n) = pi_at(s, m, n);
    return p;
  }

  RVector make(const std::vector<int>& alpha, const RMatrix& pi) const {
    RVector s(dim());
    for (int m = 0; m < num_mn; ++m) s(m) = alpha[m];
    for (int m = 0; m < num_mn; ++m)
      for (int n = 0; n < num_streams; ++n) pi_at(s, m, n) = pi(m, n);
    return s;
  }
};

// Rounds alpha, clips pi at zero and scales each jamming MN's row down so
// its weighted sum is <= 1. Never scales up.
inline RVector project_feasible(const RVector& raw, const SearchSpace& sp) {
  if (raw.size() != sp.dim()) throw ConfigError("project_feasible: dimension mismatch");
  RVector s = raw;
  for (int m = 0; m < sp.num_mn; ++m) {
    const int a = sp.fixed_alpha ? (*sp.fixed_alpha)[m] : (raw(m) >= 0.5 ? 1 : 0);
    s(m) = a;
    double used = 0.0;
    for (int n = 0; n < sp.num_streams; ++n) {
      double& v = sp.pi_at(s, m, n);
      if (!(v > 0.0)) v = 0.0;
      used += v;
    }
    const double w = sp.weights.empty() ? 1.0 : sp.weights[m];
    // Same tolerance as is_feasible, so projecting twice changes nothing.
    if (a == 0 && w * used > 1.0 + 1e-12)
      for (int n = 0; n < sp.num_streams; ++n) sp.pi_at(s, m, n) /= w * used;
  }
  return s;
}

inline bool is_feasible(const RVector& s, const SearchSpace& sp, double tol = 1e-12) {
  for (int m = 0; m < sp.num_mn; ++m) {
    if (s(m) != 0.0 && s(m) != 1.0) return false;
    double used = 0.0;
    for (int n = 0; n < sp.num_streams; ++n) {
      if (sp.pi_at(s, m, n) < 0.0) return false;
      used += sp.pi_at(s, m, n);
    }
    const double w = sp.weights.empty() ? 1.0 : sp.weights[m];
    if (s(m) == 0.0 && w * used > 1.0 + tol) return false;
  }
  return true;
}

inline RVector random_point(const SearchSpace& sp, Rng& rng) {
  RVector s(sp.dim());
  const double hi = 1.0 / sp.num_streams;
  for (int m = 0; m < sp.num_mn; ++m) s(m) = rng.uniform();
  for (int m = 0; m < sp.num_mn; ++m) {
    const double w = sp.weights.empty() ? 1.0 : sp.weights[m];
    for (int n = 0; n < sp.num_streams; ++n) sp.pi_at(s, m, n) = rng.uniform(0.0, 2.0 * hi) / w;
  }
  return project_feasible(s, sp);
}

inline RVector perturb_point(const RVector& s, const SearchSpace& sp, Rng& rng, double scale = 0.1) {
  RVector t = s;
  for (int m = 0; m < sp.num_mn; ++m)
    if (rng.uniform() < 1.0 / sp.num_mn) t(m) = 1.0 - t(m);
  for (int m = 0; m < sp.num_mn; ++m) {
    const double w = sp.weights.empty() ? 1.0 : sp.weights[m];
    for (int n = 0; n < sp.num_streams; ++n) sp.pi_at(t, m, n) += scale * rng.normal() / w;
  }
  return project_feasible(t, sp);
}

// ---------------------------------------------------------------- optimizer

struct OptimizerOptions {
  int n_initial = 10;
  int n_opt = 20;
  int pool_random = 512;
  int pool_local = 32;
  int refit_every = 5;
  double eta = 1.0;
  double prior_mean = 0.5;
  double signal_var = 0.25;
  double nu = 2.5;
  AcquisitionParams acq{};
  std::vector<Acquisition> portfolio{Acquisition::ei, Acquisition::pi, Acquisition::ucb};
  // Number of Monte-Carlo samples behind each objective value; sets the
  // binomial observation noise f(1-f)/n, floored at 1e-6.
  int observation_count = 1;
  // Stop once the incumbent reaches this value (the objective's known maximum).
  double stop_at = std::numeric_limits<double>::infinity();

  void validate() const {
    if (n_initial < 1 || n_opt <= n_initial) throw ConfigError("optimizer needs N_opt > N_initial >= 1");
    if (pool_random + pool_local < 1) throw ConfigError("optimizer: empty candidate pool");
    if (portfolio.empty()) throw ConfigError("optimizer: empty acquisition portfolio");
  }
};

struct TraceRow {
  int iteration = 0;
  RVector s;
  double value = 0.0;
  std::string acquisition;  // "init" for seed points
  std::vector<double> gains;
};

struct OptimizerResult {
  RVector best_s;
  double best_value = -std::numeric_limits<double>::infinity();
  std::vector<double> incumbent;  // best-so-far after each evaluation
  std::vector<TraceRow> trace;
};

inline double observation_noise(double f, int n) {
  const double p = std::clamp(f, 0.0, 1.0);
  return std::max(p * (1.0 - p) / std::max(n, 1), 1e-6);
}

using Objective = std::function<double(const RVector&)>;

inline OptimizerResult optimize(const Objective& objective, const SearchSpace& sp, const OptimizerOptions& opt,
                                Rng& rng, const std::vector<RVector>& initial_points = {}) {
  opt.validate();
  KernelHyper hyper;
  hyper.nu = opt.nu;
  hyper.signal_var = opt.signal_var;
  hyper.alpha_dim = sp.num_mn;
  GaussianProcess gp(hyper, opt.prior_mean);
  Hedge hedge(opt.portfolio.size(), opt.eta);
  OptimizerResult res;

  auto record = [&](const RVector& s, const std::string& tag) {
    const double f = objective(s);
    gp.add(s, f, observation_noise(f, opt.observation_count));
    if (f > res.best_value) {
      res.best_value = f;
      res.best_s = s;
    }
    res.incumbent.push_back(res.best_value);
    res.trace.push_back({static_cast<int>(res.trace.size()), s, f, tag, hedge.gains()});
  };
  auto done = [&]() { return res.best_value >= opt.stop_at; };

  for (int i = 0; i < opt.n_initial && !done(); ++i) {
    const RVector s = i < static_cast<int>(initial_points.size()) ? project_feasible(initial_points[i], sp)
                                                                   : random_point(sp, rng);
    record(s, "init");
  }

  const std::vector<double> grid_alpha{0.5, 1.0, 2.0, 4.0};
  const std::vector<double> grid_pi{0.1, 0.2, 0.5, 1.0, 2.0};
  for (int it = opt.n_initial; it < opt.n_opt && !done(); ++it) {
    if ((it - opt.n_initial) % opt.refit_every == 0) gp.fit_lengthscales(grid_alpha, grid_pi);

    std::vector<RVector> pool;
    pool.reserve(static_cast<std::size_t>(opt.pool_random + opt.pool_local));
    for (int i = 0; i < opt.pool_random; ++i) pool.push_back(random_point(sp, rng));
    for (int i = 0; i < opt.pool_local; ++i) pool.push_back(perturb_point(res.best_s, sp, rng));

    std::vector<Posterior> posts;
    posts.reserve(pool.size());
    for (const RVector& s : pool) posts.push_back(gp.posterior(s));
    std::vector<RVector> nominees;
    for (Acquisition a : opt.portfolio) nominees.push_back(pool[argmax_acquisition(a, posts, res.best_value, opt.acq)]);
    const std::size_t pick = hedge.choose(rng);
    record(nominees[pick], std::string(to_string(opt.portfolio[pick])));

    std::vector<double> rewards;
    for (const RVector& s : nominees) rewards.push_back(gp.posterior(s).mean);
    hedge.update(rewards);
    res.trace.back().gains = hedge.gains();
  }
  return res;
}

inline void write_trace_header(std::ostream& os, std::size_t portfolio_size) {
  os << "iteration,s,value,acquisition";
  for (std::size_t j = 0; j < portfolio_size; ++j) os << ",gain" << j;
  os << '\n';
}

inline void write_trace(std::ostream& os, const OptimizerResult& res) {
  for (const TraceRow& r : res.trace) {
    os << r.iteration << ',';
    for (Eigen::Index i = 0; i < r.s.size(); ++i) os << (i ? ";" : "") << r.s(i);
    os << ',' << r.value << ',' << r.acquisition;
    for (double g : r.gains) os << ',' << g;
    os << '\n';
  }
}

}  // namespace cfmon
