#pragma once

// delta-Laplace (generalised Gaussian) distribution and the Gaussian copula
// with AR(1)-conditional banded precision.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <boost/math/special_functions/gamma.hpp>

#include "condex/error.hpp"
#include "condex/optim.hpp"
#include "condex/rng.hpp"
#include "condex/stats.hpp"

namespace condex {

struct DeltaLaplaceParams {
  double mu = 0;
  double sigma = 1;
  double delta = 1;

  void validate() const {
    if (!std::isfinite(mu) || !(sigma > 0) || !(delta > 0) || !std::isfinite(sigma) || !std::isfinite(delta))
      throw InputError("delta-Laplace parameters need finite mu, sigma > 0, delta > 0");
  }
  bool operator==(const DeltaLaplaceParams&) const = default;
};

inline double dl_log_density(double z, const DeltaLaplaceParams& p) {
  return std::log(p.delta) - std::numbers::ln2 - std::log(p.sigma) - std::lgamma(1.0 / p.delta) -
         std::pow(std::abs((z - p.mu) / p.sigma), p.delta);
}

inline double dl_cdf(double z, const DeltaLaplaceParams& p) {
  const double t = (z - p.mu) / p.sigma;
  if (t == 0) return 0.5;
  const double q = 0.5 * boost::math::gamma_q(1.0 / p.delta, std::pow(std::abs(t), p.delta));
  return t > 0 ? 1.0 - q : q;
}

namespace detail {

/// Quantile given the tail mass beyond it on one side: upper=true means
/// P(Z > z) = tail, otherwise P(Z < z) = tail. tail must lie in (0, 1/2].
inline double dl_tail_quantile(double tail, bool upper, const DeltaLaplaceParams& p) {
  if (tail >= 0.5) return p.mu;
  const double w = boost::math::gamma_q_inv(1.0 / p.delta, 2.0 * tail);
  const double t = std::pow(w, 1.0 / p.delta);
  return upper ? p.mu + p.sigma * t : p.mu - p.sigma * t;
}

}  // namespace detail

inline double dl_quantile(double q, const DeltaLaplaceParams& p) {
  if (!(q > 0 && q < 1)) throw InputError("dl_quantile: probability must lie in (0,1)");
  return q > 0.5 ? detail::dl_tail_quantile(1.0 - q, true, p) : detail::dl_tail_quantile(q, false, p);
}

/// dl_quantile(Phi(w)) without losing the tails to rounding.
inline double dl_quantile_from_normal(double w, const DeltaLaplaceParams& p) {
  return w > 0 ? detail::dl_tail_quantile(normal_survival(w), true, p)
               : detail::dl_tail_quantile(normal_cdf(w), false, p);
}

/// Phi^-1(dl_cdf(z)) without losing the tails to rounding.
inline double dl_normal_score(double z, const DeltaLaplaceParams& p) {
  const double t = (z - p.mu) / p.sigma;
  if (t == 0) return 0.0;
  double tail = 0.5 * boost::math::gamma_q(1.0 / p.delta, std::pow(std::abs(t), p.delta));
  tail = std::max(tail, std::numeric_limits<double>::min());
  const double s = -normal_quantile(tail);
  return t > 0 ? s : -s;
}

inline double dl_sample(const DeltaLaplaceParams& p, CounterRng& rng) {
  const double w = gamma_variate(1.0 / p.delta, rng);
  const double sign = (rng() >> 63) ? 1.0 : -1.0;
  return p.mu + p.sigma * sign * std::pow(w, 1.0 / p.delta);
}

namespace detail {

inline constexpr double kLogDeltaLo = -3.0;  // delta in [0.05, 20]
inline constexpr double kLogDeltaHi = 3.0;

/// Profile negative log-likelihood in (mu, log delta) with sigma at its
/// closed-form maximiser sigma^delta = (delta/n) sum |z - mu|^delta.
inline double dl_profile_nll(const double* z, std::size_t n, double mu, double log_delta, double* sigma_out = nullptr) {
  if (!(log_delta >= kLogDeltaLo && log_delta <= kLogDeltaHi) || !std::isfinite(mu))
    return std::numeric_limits<double>::infinity();
  const double delta = std::exp(log_delta);
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += std::pow(std::abs(z[i] - mu), delta);
  const double dn = static_cast<double>(n);
  if (!(s > 0) || !std::isfinite(s)) return std::numeric_limits<double>::infinity();
  const double log_sigma = (std::log(delta) + std::log(s) - std::log(dn)) / delta;
  if (sigma_out) *sigma_out = std::exp(log_sigma);
  return -dn * (log_delta - std::numbers::ln2 - log_sigma - std::lgamma(1.0 / delta)) + dn / delta;
}

struct DlProfileStart {
  double mu;
  double log_delta;
  double mu_step;
  double log_delta_step;
};

inline DlProfileStart dl_cold_start(const double* z, std::size_t n) {
  std::vector<double> v(z, z + n);
  const double med = median(v);
  double mad = 0;
  for (double& x : v) x = std::abs(x - med);
  mad = median(v);
  if (!(mad > 0)) {
    double m = 0;
    for (std::size_t i = 0; i < n; ++i) m += std::abs(z[i] - med);
    mad = m / static_cast<double>(n);
  }
  return {med, 0.0, 0.5 * mad, 0.3};
}

inline DeltaLaplaceParams dl_profile_fit(const double* z, std::size_t n, const DlProfileStart& start,
                                         const NelderMeadOptions& opt) {
  auto f = [&](const std::vector<double>& x) { return dl_profile_nll(z, n, x[0], x[1]); };
  const auto r = nelder_mead(f, {start.mu, start.log_delta}, {start.mu_step, start.log_delta_step}, opt);
  if (!r.converged) throw NumericalError("delta-Laplace MLE did not converge", r.x, r.value);
  DeltaLaplaceParams p;
  p.mu = r.x[0];
  p.delta = std::exp(r.x[1]);
  dl_profile_nll(z, n, r.x[0], r.x[1], &p.sigma);
  return p;
}

inline NelderMeadOptions dl_default_options() {
  NelderMeadOptions o;
  o.x_tolerance = 1e-9;
  o.max_evaluations = 5000;
  return o;
}

}  // namespace detail

inline DeltaLaplaceParams dl_mle(const std::vector<double>& samples) {
  if (samples.size() < 20) throw InputError("dl_mle: need at least 20 samples, got " + std::to_string(samples.size()));
  for (double v : samples)
    if (!std::isfinite(v)) throw InputError("dl_mle: non-finite sample");
  const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
  if (*lo == *hi) throw InputError("dl_mle: degenerate (constant) sample");
  const auto start = detail::dl_cold_start(samples.data(), samples.size());
  return detail::dl_profile_fit(samples.data(), samples.size(), start, detail::dl_default_options());
}

/// Q: the (k+1)x(k+1) AR(1) precision with its first row and column deleted.
inline Eigen::MatrixXd build_conditional_precision(double rho, int k) {
  if (!(std::abs(rho) < 1)) throw InputError("build_conditional_precision: |rho| must be < 1");
  if (k < 1) throw InputError("build_conditional_precision: k must be >= 1");
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(k, k);
  for (int i = 0; i < k; ++i) {
    Q(i, i) = (i == k - 1) ? 1.0 : 1.0 + rho * rho;
    if (i + 1 < k) Q(i, i + 1) = Q(i + 1, i) = -rho;
  }
  return Q;
}

/// P = D^-1/2 Q^-1 D^-1/2 with D = diag(Q^-1).
inline Eigen::MatrixXd conditional_correlation(double rho, int k) {
  const Eigen::MatrixXd Q = build_conditional_precision(rho, k);
  Eigen::MatrixXd S = Q.llt().solve(Eigen::MatrixXd::Identity(k, k));
  const Eigen::VectorXd d = S.diagonal().cwiseSqrt().cwiseInverse();
  return d.asDiagonal() * S * d.asDiagonal();
}

enum class CopulaKind { independence, gaussian_ar1_conditional };

struct ResidualCopula {
  CopulaKind kind = CopulaKind::independence;
  double rho = 0;
  int k = 1;
};

/// Draws from a Gaussian copula with delta-Laplace margins; the Cholesky
/// factor is computed once.
class GaussianCopulaSampler {
 public:
  GaussianCopulaSampler() = default;
  explicit GaussianCopulaSampler(const ResidualCopula& c) : copula_(c) {
    if (c.k < 1) throw InputError("copula dimension must be >= 1");
    if (c.kind == CopulaKind::gaussian_ar1_conditional) {
      Eigen::LLT<Eigen::MatrixXd> llt(conditional_correlation(c.rho, c.k));
      if (llt.info() != Eigen::Success) throw InternalError("copula correlation matrix is not positive definite");
      L_ = llt.matrixL();
    }
  }

  int dimension() const noexcept { return copula_.k; }

  /// Writes `m <= k` leading components (the copula margin of the first m lags).
  void sample(const DeltaLaplaceParams* marginals, int m, CounterRng& rng, double* out) const {
    double w[256];
    std::vector<double> big;
    double* n = w;
    if (m > 256) {
      big.resize(static_cast<std::size_t>(m));
      n = big.data();
    }
    for (int i = 0; i < m; ++i) n[i] = standard_normal(rng);
    for (int i = 0; i < m; ++i) {
      double wi = n[i];
      if (copula_.kind == CopulaKind::gaussian_ar1_conditional) {
        wi = 0;
        for (int j = 0; j <= i; ++j) wi += L_(i, j) * n[j];
      }
      out[i] = dl_quantile_from_normal(wi, marginals[i]);
    }
  }

 private:
  ResidualCopula copula_;
  Eigen::MatrixXd L_;
};

inline std::vector<double> gaussian_copula_sample(const ResidualCopula& copula,
                                                  const std::vector<DeltaLaplaceParams>& marginals,
                                                  CounterRng& rng) {
  if (static_cast<int>(marginals.size()) != copula.k)
    throw InputError("gaussian_copula_sample: need one marginal per dimension");
  GaussianCopulaSampler s(copula);
  std::vector<double> out(marginals.size());
  s.sample(marginals.data(), copula.k, rng, out.data());
  return out;
}

}  // namespace condex
