#pragma once

// Synthetic Markov chains with exactly standard Laplace margins, used as
// ground truth, and brute-force estimates of functionals from them.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "condex/error.hpp"
#include "condex/functionals.hpp"
#include "condex/rng.hpp"
#include "condex/series.hpp"
#include "condex/simulate.hpp"

namespace condex {

enum class GeneratorKind { gauss_ar1, inv_logistic, gauss_ar2 };

struct GeneratorSpec {
  GeneratorKind kind = GeneratorKind::gauss_ar1;
  double rho = 0;     ///< gauss_ar1
  double gamma = 1;   ///< inv_logistic dependence
  double theta1 = 0;  ///< gauss_ar2
  double theta2 = 0;
  std::size_t n = 1000;
  std::uint64_t seed = 1;
  bool laplace_margins = true;  ///< false returns the latent N(0,1) or Exp(1) chain

  void validate() const {
    switch (kind) {
      case GeneratorKind::gauss_ar1:
        if (!(std::abs(rho) < 1)) throw InputError("gauss_ar1: |rho| must be < 1");
        break;
      case GeneratorKind::inv_logistic:
        if (!(gamma > 0 && gamma <= 1)) throw InputError("inv_logistic: gamma must lie in (0,1]");
        break;
      case GeneratorKind::gauss_ar2:
        if (!(theta1 + theta2 < 1 && theta2 - theta1 < 1 && std::abs(theta2) < 1))
          throw InputError("gauss_ar2: (theta1, theta2) outside the stationarity triangle");
        break;
    }
    if (n < 1) throw InputError("generator length must be >= 1");
  }
};

inline GeneratorKind parse_generator_kind(const std::string& s) {
  if (s == "gauss_ar1") return GeneratorKind::gauss_ar1;
  if (s == "inv_logistic") return GeneratorKind::inv_logistic;
  if (s == "gauss_ar2") return GeneratorKind::gauss_ar2;
  throw InputError("unknown generator kind '" + s + "'");
}

/// Exact N(0,1) -> standard Laplace.
inline double gaussian_to_laplace(double y) {
  return y < 0 ? std::log(std::erfc(-y / std::numbers::sqrt2)) : -std::log(std::erfc(y / std::numbers::sqrt2));
}

/// Exact Exp(1) -> standard Laplace.
inline double exponential_to_laplace(double y) {
  return y >= std::numbers::ln2 ? y - std::numbers::ln2 : std::log(-2.0 * std::expm1(-y));
}

/// log P(Y_{n+1} > y | Y_n = x) for the inverted logistic chain with Exp(1) margins.
inline double inv_logistic_log_survival(double y, double x, double gamma) {
  if (y <= 0) return 0.0;
  const double a = std::pow(x, 1.0 / gamma) + std::pow(y, 1.0 / gamma);
  return x - std::pow(a, gamma) + (gamma - 1.0) * std::log(a) + (1.0 / gamma - 1.0) * std::log(x);
}

/// Solves S(y | x) = u by bisection.
inline double inv_logistic_transition(double x, double u, double gamma) {
  const double lu = std::log(u);
  double lo = 0, hi = 1;
  while (inv_logistic_log_survival(hi, x, gamma) > lu) {
    lo = hi;
    hi *= 2;
  }
  while (hi - lo > 1e-12 * std::max(1.0, lo)) {
    const double mid = 0.5 * (lo + hi);
    if (inv_logistic_log_survival(mid, x, gamma) > lu) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

/// Streaming generator; the first value is drawn from the stationary law.
class ChainGenerator {
 public:
  explicit ChainGenerator(const GeneratorSpec& spec) : spec_(spec), rng_(spec.seed, 0x6e6e) { spec.validate(); }

  /// AR(2) innovation variance that keeps unit marginal variance.
  static double ar2_innovation_variance(double t1, double t2) {
    const double r1 = t1 / (1 - t2), r2 = t2 + t1 * r1;
    return 1 - t1 * r1 - t2 * r2;
  }

  double next() {
    const double y = next_latent();
    if (!spec_.laplace_margins) return y;
    return spec_.kind == GeneratorKind::inv_logistic ? exponential_to_laplace(y) : gaussian_to_laplace(y);
  }

 private:
  double next_latent() {
    switch (spec_.kind) {
      case GeneratorKind::gauss_ar1: {
        const double e = standard_normal(rng_);
        y1_ = started_ ? spec_.rho * y1_ + std::sqrt(1 - spec_.rho * spec_.rho) * e : e;
        started_ = true;
        return y1_;
      }
      case GeneratorKind::inv_logistic: {
        y1_ = started_ ? inv_logistic_transition(y1_, rng_.uniform(), spec_.gamma) : standard_exponential(rng_);
        started_ = true;
        return y1_;
      }
      case GeneratorKind::gauss_ar2: {
        const double t1 = spec_.theta1, t2 = spec_.theta2;
        if (count_ == 0) {
          y1_ = standard_normal(rng_);
        } else if (count_ == 1) {
          const double r1 = t1 / (1 - t2);
          y2_ = y1_;
          y1_ = r1 * y2_ + std::sqrt(1 - r1 * r1) * standard_normal(rng_);
        } else {
          const double y = t1 * y1_ + t2 * y2_ + std::sqrt(ar2_innovation_variance(t1, t2)) * standard_normal(rng_);
          y2_ = y1_;
          y1_ = y;
        }
        ++count_;
        return y1_;
      }
    }
    throw InternalError("unknown generator kind");
  }

  GeneratorSpec spec_;
  CounterRng rng_;
  bool started_ = false;
  std::size_t count_ = 0;
  double y1_ = 0, y2_ = 0;
};

inline LaplaceSeries generate(const GeneratorSpec& spec) {
  ChainGenerator g(spec);
  std::vector<double> v(spec.n);
  for (auto& x : v) x = g.next();
  return LaplaceSeries::single(std::move(v));
}

/// Direct Monte Carlo of a functional over `n_direct` consecutive windows of
/// one long generated chain. Standard error from 100 batch means (ratio form).
inline EstimateReport oracle_conditional_probability(const GeneratorSpec& spec, const FunctionalSpec& f,
                                                     std::size_t n_direct) {
  validate_functional(f);
  if (f.scale != Scale::laplace) throw InputError("oracle: Laplace-scale functionals only");
  if (n_direct < 100) throw InputError("oracle: n_direct must be >= 100");
  const std::size_t L = static_cast<std::size_t>(block_length(f));
  GeneratorSpec s = spec;
  s.laplace_margins = true;
  s.n = n_direct + L;  // the chain is streamed, not stored
  ChainGenerator g(s);
  std::vector<double> ring(2 * L);
  for (std::size_t i = 0; i + 1 < L; ++i) ring[i] = ring[i + L] = g.next();
  constexpr std::size_t kBatches = 100;
  std::vector<double> num(kBatches, 0.0), den(kBatches, 0.0);
  const bool uncond = f.kind == FunctionalKind::union_prob;
  const bool on_union = conditions_on_union(f.kind);
  std::size_t head = 0;  // ring index of the window start
  for (std::size_t w = 0; w < n_direct; ++w) {
    const std::size_t tail = (head + L - 1) % L;
    ring[tail] = ring[tail + L] = g.next();
    const std::span<const double> win(ring.data() + head, L);
    const std::size_t b = w * kBatches / n_direct;
    bool cond = true;
    if (!uncond) cond = on_union ? detail::count_above(win, f.v) > 0 : win[0] > f.v;
    if (cond) {
      den[b] += 1;
      num[b] += evaluate_functional(win, f);
    }
    head = (head + 1) % L;
  }
  double N = 0, D = 0;
  for (std::size_t b = 0; b < kBatches; ++b) {
    N += num[b];
    D += den[b];
  }
  if (D == 0) throw InputError("oracle: no conditioning events observed");
  const double R = N / D;
  const double dbar = D / kBatches;
  double ss = 0;
  for (std::size_t b = 0; b < kBatches; ++b) {
    const double e = (num[b] - R * den[b]) / dbar;
    ss += e * e;
  }
  const double se = std::sqrt(ss / (kBatches - 1) / kBatches);
  return detail::make_report(R, se, static_cast<std::size_t>(D), spec.seed);
}

}  // namespace condex
