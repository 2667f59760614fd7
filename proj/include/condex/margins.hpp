#pragma once

// Semi-parametric marginal model: interpolated empirical body below u*,
// generalised Pareto tail above, and the transform to standard Laplace.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "condex/error.hpp"
#include "condex/optim.hpp"
#include "condex/series.hpp"
#include "condex/stats.hpp"

namespace condex {

inline constexpr double kGpdExpLimit = 1e-6;

/// P(excess > y) for the generalised Pareto distribution.
inline double gpd_survival(double y, double sigma, double xi) {
  if (y <= 0) return 1.0;
  if (std::abs(xi) < kGpdExpLimit) return std::exp(-y / sigma);
  const double t = 1.0 + xi * y / sigma;
  if (t <= 0) return 0.0;
  return std::exp(-std::log(t) / xi);
}

/// Negative log-likelihood; +inf outside the support or for xi <= -1.
inline double gpd_nll(const std::vector<double>& y, double sigma, double xi) {
  if (!(sigma > 0) || !(xi > -1)) return std::numeric_limits<double>::infinity();
  const double n = static_cast<double>(y.size());
  double s = 0;
  if (std::abs(xi) < kGpdExpLimit) {
    for (double v : y) s += v;
    return n * std::log(sigma) + s / sigma;
  }
  for (double v : y) {
    const double t = xi * v / sigma;
    if (t <= -1) return std::numeric_limits<double>::infinity();
    s += std::log1p(t);
  }
  return n * std::log(sigma) + (1.0 + 1.0 / xi) * s;
}

struct GpdFit {
  double sigma = 0, xi = 0;
  double sigma_se = std::numeric_limits<double>::quiet_NaN();
  double xi_se = std::numeric_limits<double>::quiet_NaN();
  double nll = 0;
};

inline GpdFit fit_gpd(const std::vector<double>& excesses, std::uint64_t seed = 1) {
  if (excesses.size() < 10)
    throw InputError("fit_gpd: need at least 10 excesses, got " + std::to_string(excesses.size()));
  for (double v : excesses)
    if (!(v > 0) || !std::isfinite(v)) throw InputError("fit_gpd: excesses must be positive and finite");

  const double m = mean(excesses), s2 = variance(excesses);
  double xi0 = std::clamp(0.5 * (1.0 - m * m / s2), -0.45, 0.45);
  double sg0 = 0.5 * m * (m * m / s2 + 1.0);
  if (!std::isfinite(gpd_nll(excesses, sg0, xi0))) {
    xi0 = 0;
    sg0 = m;
  }
  auto f = [&](const std::vector<double>& p) { return gpd_nll(excesses, std::exp(p[0]), p[1]); };
  NelderMeadOptions opt;
  opt.x_tolerance = 1e-8;
  opt.max_evaluations = 4000;
  const auto best = minimize_with_restarts(f, {std::log(sg0), xi0}, {0.2, 0.1}, 5, 1.0, seed, opt);
  if (!best.converged)
    throw NumericalError("fit_gpd: simplex did not converge", {std::exp(best.x[0]), best.x[1]}, best.value);

  GpdFit r;
  r.sigma = std::exp(best.x[0]);
  r.xi = best.x[1];
  r.nll = best.value;

  // Observed information by central differences in (sigma, xi).
  const double hs = 1e-4 * r.sigma, hx = 1e-4;
  auto g = [&](double s, double x) { return gpd_nll(excesses, s, x); };
  const double f0 = g(r.sigma, r.xi);
  const double fss = (g(r.sigma + hs, r.xi) - 2 * f0 + g(r.sigma - hs, r.xi)) / (hs * hs);
  const double fxx = (g(r.sigma, r.xi + hx) - 2 * f0 + g(r.sigma, r.xi - hx)) / (hx * hx);
  const double fsx = (g(r.sigma + hs, r.xi + hx) - g(r.sigma + hs, r.xi - hx) - g(r.sigma - hs, r.xi + hx) +
                      g(r.sigma - hs, r.xi - hx)) / (4 * hs * hx);
  const double det = fss * fxx - fsx * fsx;
  if (std::isfinite(det) && det > 0 && fss > 0) {
    r.sigma_se = std::sqrt(fxx / det);
    r.xi_se = std::sqrt(fss / det);
  }
  return r;
}

/// Empirical body with plotting positions i/(N+1), linearly interpolated and
/// rescaled to reach 1 - p at u*, joined to a GPD tail above u*.
class MarginalModel {
 public:
  MarginalModel() = default;

  MarginalModel(double threshold, double sigma, double xi, double exceed_prob, std::vector<double> sorted_body,
                std::size_t n_total, double sigma_se = std::numeric_limits<double>::quiet_NaN(),
                double xi_se = std::numeric_limits<double>::quiet_NaN())
      : u_(threshold), sigma_(sigma), xi_(xi), sigma_se_(sigma_se), xi_se_(xi_se), p_(exceed_prob),
        body_(std::move(sorted_body)), n_total_(n_total) {
    if (!(sigma_ > 0)) throw InputError("MarginalModel: GPD scale must be positive");
    if (!(xi_ > -1) || !std::isfinite(xi_)) throw InputError("MarginalModel: GPD shape must exceed -1");
    if (!(p_ > 0 && p_ < 1)) throw InputError("MarginalModel: exceedance probability must lie in (0,1)");
    if (body_.empty()) throw InputError("MarginalModel: empty body");
    if (!std::is_sorted(body_.begin(), body_.end())) throw InputError("MarginalModel: body must be sorted");
    if (body_.back() != u_) throw InputError("MarginalModel: largest body value must equal the threshold");
    if (n_total_ <= body_.size()) throw InputError("MarginalModel: n_total must exceed the body size");
    build_knots();
  }

  double threshold() const noexcept { return u_; }
  double sigma() const noexcept { return sigma_; }
  double xi() const noexcept { return xi_; }
  double sigma_se() const noexcept { return sigma_se_; }
  double xi_se() const noexcept { return xi_se_; }
  double exceed_prob() const noexcept { return p_; }
  const std::vector<double>& sorted_body() const noexcept { return body_; }
  std::size_t n_total() const noexcept { return n_total_; }

  /// Finite upper endpoint of the tail, +inf when xi >= 0.
  double upper_endpoint() const noexcept {
    return xi_ < 0 ? u_ - sigma_ / xi_ : std::numeric_limits<double>::infinity();
  }

  double cdf(double y) const {
    if (y > u_) return 1.0 - p_ * gpd_survival(y - u_, sigma_, xi_);
    return body_cdf(y);
  }

  /// Pointwise transform to the standard Laplace scale.
  double to_laplace(double y) const {
    if (!std::isfinite(y)) throw InputError("to_laplace: non-finite value");
    if (y > u_) {
      const double e = y - u_;
      double log_surv;
      if (std::abs(xi_) < kGpdExpLimit) {
        log_surv = -e / sigma_;
      } else {
        const double t = xi_ * e / sigma_;
        if (t <= -1) throw InputError("to_laplace: value beyond the finite upper endpoint of the fitted tail");
        log_surv = -std::log1p(t) / xi_;
      }
      return -std::log(2.0 * p_) - log_surv;
    }
    const double F = body_cdf(y);
    return F < 0.5 ? std::log(2.0 * F) : -std::log(2.0 * (1.0 - F));
  }

  /// Exact inverse of to_laplace on its range; clamps below the smallest knot.
  double from_laplace(double x) const {
    if (x >= 0) {
      const double log_s = -x - std::log(2.0);
      const double L = log_s - std::log(p_);
      if (L < 0) {
        if (std::abs(xi_) < kGpdExpLimit) return u_ - sigma_ * L;
        return u_ + sigma_ * std::expm1(-xi_ * L) / xi_;
      }
      return body_inverse(1.0 - std::exp(log_s));
    }
    return body_inverse(0.5 * std::exp(x));
  }

  LaplaceSeries to_laplace(const RawSeries& s) const {
    LaplaceSeries out;
    out.segments = s.segments;
    out.values.reserve(s.size());
    for (double y : s.values) out.values.push_back(to_laplace(y));
    return out;
  }

  std::vector<double> from_laplace(const std::vector<double>& xs) const {
    std::vector<double> out;
    out.reserve(xs.size());
    for (double x : xs) out.push_back(from_laplace(x));
    return out;
  }

  RawSeries from_laplace(const LaplaceSeries& s) const { return RawSeries{from_laplace(s.values), s.segments}; }

 private:
  void build_knots() {
    const double n1 = static_cast<double>(n_total_) + 1.0;
    knot_y_.clear();
    knot_p_.clear();
    for (std::size_t i = 0; i < body_.size();) {
      std::size_t j = i;
      while (j + 1 < body_.size() && body_[j + 1] == body_[i]) ++j;
      knot_y_.push_back(body_[i]);
      knot_p_.push_back((0.5 * static_cast<double>(i + j) + 1.0) / n1);
      i = j + 1;
    }
    const double scale = (1.0 - p_) / knot_p_.back();
    for (double& p : knot_p_) p *= scale;
    knot_p_.back() = 1.0 - p_;
  }

  double body_cdf(double y) const {
    if (y <= knot_y_.front()) return knot_p_.front();
    if (y >= knot_y_.back()) return knot_p_.back();
    const auto it = std::upper_bound(knot_y_.begin(), knot_y_.end(), y);
    const std::size_t j = static_cast<std::size_t>(it - knot_y_.begin());
    const double t = (y - knot_y_[j - 1]) / (knot_y_[j] - knot_y_[j - 1]);
    return knot_p_[j - 1] + t * (knot_p_[j] - knot_p_[j - 1]);
  }

  double body_inverse(double F) const {
    if (F <= knot_p_.front()) return knot_y_.front();
    if (F >= knot_p_.back()) return knot_y_.back();
    const auto it = std::upper_bound(knot_p_.begin(), knot_p_.end(), F);
    const std::size_t j = static_cast<std::size_t>(it - knot_p_.begin());
    const double t = (F - knot_p_[j - 1]) / (knot_p_[j] - knot_p_[j - 1]);
    return knot_y_[j - 1] + t * (knot_y_[j] - knot_y_[j - 1]);
  }

  double u_ = 0, sigma_ = 1, xi_ = 0;
  double sigma_se_ = std::numeric_limits<double>::quiet_NaN(), xi_se_ = std::numeric_limits<double>::quiet_NaN();
  double p_ = 0.5;
  std::vector<double> body_;
  std::size_t n_total_ = 0;
  std::vector<double> knot_y_, knot_p_;
};

inline MarginalModel fit_marginal(const RawSeries& series, double threshold_quantile, std::uint64_t seed = 1) {
  series.validate();
  if (!(threshold_quantile > 0.5 && threshold_quantile < 1.0))
    throw InputError("fit_marginal: threshold quantile must lie in (0.5, 1)");
  std::vector<double> sorted = series.values;
  std::sort(sorted.begin(), sorted.end());
  const double u = order_statistic_quantile(sorted, threshold_quantile);
  const auto first_above = std::upper_bound(sorted.begin(), sorted.end(), u);
  std::vector<double> excess;
  for (auto it = first_above; it != sorted.end(); ++it) excess.push_back(*it - u);
  if (excess.size() < 10)
    throw InputError("fit_marginal: only " + std::to_string(excess.size()) +
                     " exceedances of the threshold, need at least 10");
  const auto g = fit_gpd(excess, seed);
  const double p = static_cast<double>(excess.size()) / static_cast<double>(sorted.size());
  std::vector<double> body(sorted.begin(), first_above);
  return MarginalModel(u, g.sigma, g.xi, p, std::move(body), sorted.size(), g.sigma_se, g.xi_se);
}

struct ThresholdScanRow {
  double quantile = 0;
  double threshold = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_exceed = 0;
  double sigma = std::numeric_limits<double>::quiet_NaN(), xi = std::numeric_limits<double>::quiet_NaN();
  double sigma_se = std::numeric_limits<double>::quiet_NaN(), xi_se = std::numeric_limits<double>::quiet_NaN();
  bool ok = false;
  std::string message;
};

inline std::vector<ThresholdScanRow> threshold_stability_scan(const RawSeries& series,
                                                              const std::vector<double>& quantile_grid) {
  if (!std::is_sorted(quantile_grid.begin(), quantile_grid.end()))
    throw InputError("threshold_stability_scan: grid must be sorted ascending");
  std::vector<ThresholdScanRow> rows;
  if (quantile_grid.empty()) return rows;
  series.validate();
  std::vector<double> sorted = series.values;
  std::sort(sorted.begin(), sorted.end());
  for (double q : quantile_grid) {
    ThresholdScanRow r;
    r.quantile = q;
    try {
      r.threshold = order_statistic_quantile(sorted, q);
      const auto first_above = std::upper_bound(sorted.begin(), sorted.end(), r.threshold);
      std::vector<double> excess;
      for (auto it = first_above; it != sorted.end(); ++it) excess.push_back(*it - r.threshold);
      r.n_exceed = excess.size();
      const auto g = fit_gpd(excess);
      r.sigma = g.sigma;
      r.xi = g.xi;
      r.sigma_se = g.sigma_se;
      r.xi_se = g.xi_se;
      r.ok = true;
    } catch (const std::exception& e) {
      r.message = e.what();
    }
    rows.push_back(r);
  }
  return rows;
}

/// Standard Laplace quantile.
inline double laplace_quantile(double q) {
  if (!(q > 0 && q < 1)) throw InputError("laplace_quantile: level must lie in (0,1)");
  return q < 0.5 ? std::log(2 * q) : -std::log(2 * (1 - q));
}

inline double laplace_cdf(double x) { return x < 0 ? 0.5 * std::exp(x) : 1 - 0.5 * std::exp(-x); }

}  // namespace condex
