#pragma once

// Cluster functionals, their model-based and empirical estimators, and
// runs-method cluster extraction.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "condex/error.hpp"
#include "condex/margins.hpp"
#include "condex/resample.hpp"
#include "condex/series.hpp"
#include "condex/simulate.hpp"

namespace condex {

enum class FunctionalKind {
  theta,          ///< P(X_2..X_d <= v | X_1 > v)
  chi,            ///< P(X_{d+1} > v | X_1 > v)
  e1,             ///< E max
  e2,             ///< E mean
  e3,             ///< E number of exceedances of v
  p,              ///< P(count = r | X_1 > v)
  pstar,          ///< P(count = r | max > v)
  union_prob,     ///< P(max > v), unconditional
  max_exceed,     ///< P(max > s | X_1 > v)
  total_exceed,   ///< P(count >= s | X_1 > v)
  consec_exceed,  ///< P(longest run above v >= s | X_1 > v)
};

enum class Scale { laplace, data };

struct FunctionalSpec {
  FunctionalKind kind = FunctionalKind::theta;
  double v = 0;  ///< Laplace-scale threshold
  int d = 2;
  int r = 1;
  double s = 0;  ///< level for max_exceed (in `scale` units), count for total/consec
  Scale scale = Scale::laplace;
};

inline const char* to_string(FunctionalKind k) {
  switch (k) {
    case FunctionalKind::theta: return "theta";
    case FunctionalKind::chi: return "chi";
    case FunctionalKind::e1: return "e1";
    case FunctionalKind::e2: return "e2";
    case FunctionalKind::e3: return "e3";
    case FunctionalKind::p: return "p";
    case FunctionalKind::pstar: return "pstar";
    case FunctionalKind::union_prob: return "union";
    case FunctionalKind::max_exceed: return "max_exceed";
    case FunctionalKind::total_exceed: return "total_exceed";
    case FunctionalKind::consec_exceed: return "consec_exceed";
  }
  return "?";
}

inline FunctionalKind parse_functional_kind(const std::string& s) {
  for (int i = 0; i <= static_cast<int>(FunctionalKind::consec_exceed); ++i)
    if (s == to_string(static_cast<FunctionalKind>(i))) return static_cast<FunctionalKind>(i);
  throw InputError("unknown functional '" + s + "'");
}

/// True for kinds conditioned on the union of exceedances (ALOE route).
inline bool conditions_on_union(FunctionalKind k) { return k == FunctionalKind::pstar || k == FunctionalKind::union_prob; }

/// Simulated block length: chi needs lag d, hence d + 1 values.
inline int block_length(const FunctionalSpec& f) { return f.kind == FunctionalKind::chi ? f.d + 1 : f.d; }

inline void validate_functional(const FunctionalSpec& f, const MarginalModel* marginal = nullptr) {
  if (f.d < 1) throw InputError("functional: d must be >= 1");
  if ((f.kind == FunctionalKind::theta) && f.d < 2) throw InputError("theta needs d >= 2");
  if ((f.kind == FunctionalKind::p || f.kind == FunctionalKind::pstar) && (f.r < 1 || f.r > f.d))
    throw InputError("functional: r must lie in 1..d");
  if ((f.kind == FunctionalKind::total_exceed || f.kind == FunctionalKind::consec_exceed) && !(f.s >= 1))
    throw InputError("functional: count level s must be >= 1");
  if (f.scale == Scale::data) {
    if (f.kind != FunctionalKind::e1 && f.kind != FunctionalKind::e2 && f.kind != FunctionalKind::max_exceed)
      throw InputError(std::string("functional ") + to_string(f.kind) + " is defined on the Laplace scale only");
    if (!marginal) throw InputError("data-scale functional needs a marginal model");
  }
}

namespace detail {

inline int count_above(std::span<const double> x, double v) {
  int c = 0;
  for (double y : x) c += y > v;
  return c;
}

inline int longest_run_above(std::span<const double> x, double v) {
  int best = 0, cur = 0;
  for (double y : x) {
    cur = y > v ? cur + 1 : 0;
    best = std::max(best, cur);
  }
  return best;
}

}  // namespace detail

/// Kernel value on one block (Laplace scale input).
inline double evaluate_functional(std::span<const double> block, const FunctionalSpec& f,
                                  const MarginalModel* marginal = nullptr) {
  validate_functional(f, marginal);
  if (static_cast<int>(block.size()) != block_length(f))
    throw InputError("functional: block length " + std::to_string(block.size()) + " does not match " +
                     std::to_string(block_length(f)));
  std::vector<double> data;
  std::span<const double> y = block;
  if (f.scale == Scale::data) {
    data.reserve(block.size());
    for (double x : block) data.push_back(marginal->from_laplace(x));
    y = data;
  }
  switch (f.kind) {
    case FunctionalKind::theta:
      return std::all_of(block.begin() + 1, block.end(), [&](double x) { return x <= f.v; }) ? 1.0 : 0.0;
    case FunctionalKind::chi: return block.back() > f.v ? 1.0 : 0.0;
    case FunctionalKind::e1: return *std::max_element(y.begin(), y.end());
    case FunctionalKind::e2: {
      double s = 0;
      for (double x : y) s += x;
      return s / static_cast<double>(y.size());
    }
    case FunctionalKind::e3: return detail::count_above(block, f.v);
    case FunctionalKind::p:
    case FunctionalKind::pstar: return detail::count_above(block, f.v) == f.r ? 1.0 : 0.0;
    case FunctionalKind::union_prob: return detail::count_above(block, f.v) > 0 ? 1.0 : 0.0;
    case FunctionalKind::max_exceed: return *std::max_element(y.begin(), y.end()) > f.s ? 1.0 : 0.0;
    case FunctionalKind::total_exceed: return detail::count_above(block, f.v) >= f.s ? 1.0 : 0.0;
    case FunctionalKind::consec_exceed: return detail::longest_run_above(block, f.v) >= f.s ? 1.0 : 0.0;
  }
  throw InternalError("unknown functional kind");
}

/// Model-based estimate: forward simulation for kinds conditioned on X_1 > v,
/// the ALOE estimators for kinds conditioned on the union.
inline EstimateReport estimate_functional(const FittedConditionalModel& fit, const FunctionalSpec& f,
                                          const SimConfig& config, const MarginalModel* marginal = nullptr) {
  validate_functional(f, marginal);
  SimConfig c = config;
  c.v = f.v;
  c.d = block_length(f);
  if (f.kind == FunctionalKind::union_prob) {
    const auto a = aloe_estimate(fit, c);
    return detail::make_report(a.p_hat, a.std_error, a.n, a.seed);
  }
  const BlockFunctional g = [&f, marginal](std::span<const double> b) { return evaluate_functional(b, f, marginal); };
  if (f.kind == FunctionalKind::pstar) return aloe_conditional_expectation(fit, c, g);
  return estimate_conditional(fit, c, g);
}

/// Sample-average estimate over full windows that never cross segments.
/// Returns the estimate and the number of conditioning windows.
template <class Tag>
std::pair<double, std::size_t> empirical_functional_value(const Series<Tag>& s, const FunctionalSpec& f,
                                                          const MarginalModel* marginal = nullptr) {
  validate_functional(f, marginal);
  const std::size_t L = static_cast<std::size_t>(block_length(f));
  double sum = 0;
  std::size_t n_cond = 0, n_windows = 0;
  for (const auto& seg : s.segments) {
    if (seg.size() < L) continue;
    for (std::size_t t = seg.begin; t + L <= seg.end; ++t) {
      const std::span<const double> w(s.values.data() + t, L);
      ++n_windows;
      if (f.kind == FunctionalKind::union_prob) {
        sum += evaluate_functional(w, f, marginal);
        continue;
      }
      const bool cond = conditions_on_union(f.kind) ? detail::count_above(w, f.v) > 0 : w[0] > f.v;
      if (!cond) continue;
      ++n_cond;
      sum += evaluate_functional(w, f, marginal);
    }
  }
  if (f.kind == FunctionalKind::union_prob) {
    if (n_windows == 0) throw InputError("empirical_functional: no full windows");
    return {sum / static_cast<double>(n_windows), n_windows};
  }
  if (n_cond == 0) throw InputError("empirical_functional: no exceedances of v with a full window");
  return {sum / static_cast<double>(n_cond), n_cond};
}

struct EmpiricalOptions {
  BootstrapScheme scheme;
  int replications = 200;
};

inline EstimateReport empirical_functional(const LaplaceSeries& s, const FunctionalSpec& f,
                                           const EmpiricalOptions& opt = {}, const MarginalModel* marginal = nullptr) {
  const auto [est, n] = empirical_functional_value(s, f, marginal);
  const std::function<double(const LaplaceSeries&)> estimator = [&](const LaplaceSeries& r) {
    return empirical_functional_value(r, f, marginal).first;
  };
  BootstrapScheme sch = opt.scheme;
  std::size_t shortest = s.values.size();
  for (const auto& seg : s.segments) shortest = std::min(shortest, seg.size());
  sch.block_length = std::min(sch.block_length, shortest);
  const auto b = bootstrap_estimate(s, sch, opt.replications, estimator);
  EstimateReport r = detail::make_report(est, b.std_error, n, opt.scheme.seed);
  return r;
}

struct Cluster {
  std::size_t block = 0;      ///< index of the source block
  std::vector<double> values;  ///< from the first value to the last exceedance
  int run_length = 1;
  bool terminated = false;    ///< false when the block ended first
};

/// Runs method: a cluster ends once r consecutive values fall at or below v.
inline std::vector<Cluster> extract_clusters(const SimulatedBlocks& blocks, double v, int r) {
  if (r < 1) throw InputError("extract_clusters: run length must be >= 1");
  std::vector<Cluster> out;
  for (std::size_t i = 0; i < blocks.rows(); ++i) {
    const auto b = blocks.row(i);
    if (b.empty() || !(b[0] > v)) continue;
    Cluster c;
    c.block = i;
    c.run_length = r;
    std::size_t last = 0;
    int below = 0;
    for (std::size_t t = 1; t < b.size(); ++t) {
      if (b[t] > v) {
        last = t;
        below = 0;
      } else if (++below == r) {
        c.terminated = true;
        break;
      }
    }
    c.values.assign(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(last + 1));
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace condex
