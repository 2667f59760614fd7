#pragma once

// Derivative-free minimisation (Nelder-Mead with adaptive coefficients).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "condex/error.hpp"
#include "condex/rng.hpp"

namespace condex {

struct NelderMeadOptions {
  int max_evaluations = 20000;
  double x_tolerance = 1e-8;  ///< simplex diameter
  double f_tolerance = 0.0;   ///< relative spread of vertex values; 0 disables
};

struct OptimResult {
  std::vector<double> x;
  double value = std::numeric_limits<double>::infinity();
  int evaluations = 0;
  bool converged = false;
};

/// `f` takes `const std::vector<double>&` and may return +inf for infeasible points.
template <class F>
OptimResult nelder_mead(F&& f, const std::vector<double>& x0, const std::vector<double>& step,
                        const NelderMeadOptions& opt = {}) {
  const std::size_t n = x0.size();
  if (n == 0) throw InputError("nelder_mead: empty parameter vector");
  if (step.size() != n) throw InputError("nelder_mead: step size mismatch");

  const double dn = static_cast<double>(n);
  const double c_refl = 1.0;
  const double c_exp = 1.0 + 2.0 / dn;
  const double c_con = 0.75 - 1.0 / (2.0 * dn);
  const double c_shr = 1.0 - 1.0 / dn;

  OptimResult res;
  std::vector<std::vector<double>> pts(n + 1, x0);
  std::vector<double> fv(n + 1);
  auto eval = [&](const std::vector<double>& x) {
    ++res.evaluations;
    const double v = f(x);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  };
  fv[0] = eval(pts[0]);
  if (!std::isfinite(fv[0])) throw InputError("nelder_mead: objective is not finite at the starting point");
  for (std::size_t i = 0; i < n; ++i) {
    pts[i + 1][i] += step[i];
    fv[i + 1] = eval(pts[i + 1]);
    if (!std::isfinite(fv[i + 1])) {
      pts[i + 1][i] = x0[i] - step[i];
      fv[i + 1] = eval(pts[i + 1]);
    }
  }

  std::vector<std::size_t> order(n + 1);
  std::vector<double> centroid(n), xr(n), xe(n), xc(n);
  auto point = [&](const std::vector<double>& from, double t, std::vector<double>& out) {
    for (std::size_t j = 0; j < n; ++j) out[j] = centroid[j] + t * (from[j] - centroid[j]);
  };

  for (;;) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[n - 1];

    double diam = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == best) continue;
      double d2 = 0.0;
      for (std::size_t j = 0; j < n; ++j) d2 = std::max(d2, std::abs(pts[i][j] - pts[best][j]));
      diam = std::max(diam, d2);
    }
    const double fspread = fv[worst] - fv[best];
    if (diam < opt.x_tolerance ||
        (opt.f_tolerance > 0.0 && std::isfinite(fspread) &&
         fspread <= opt.f_tolerance * (1.0 + std::abs(fv[best])))) {
      res.converged = true;
      break;
    }
    if (res.evaluations >= opt.max_evaluations) break;

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i <= n; ++i)
      if (i != worst)
        for (std::size_t j = 0; j < n; ++j) centroid[j] += pts[i][j];
    for (double& c : centroid) c /= dn;

    point(pts[worst], -c_refl, xr);
    const double fr = eval(xr);
    if (fr < fv[best]) {
      point(pts[worst], -c_refl * c_exp, xe);
      const double fe = eval(xe);
      if (fe < fr) {
        pts[worst] = xe;
        fv[worst] = fe;
      } else {
        pts[worst] = xr;
        fv[worst] = fr;
      }
      continue;
    }
    if (fr < fv[second]) {
      pts[worst] = xr;
      fv[worst] = fr;
      continue;
    }
    bool outside = fr < fv[worst];
    point(outside ? xr : pts[worst], c_con, xc);
    const double fc = eval(xc);
    if (fc < (outside ? fr : fv[worst])) {
      pts[worst] = xc;
      fv[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == best) continue;
      for (std::size_t j = 0; j < n; ++j) pts[i][j] = pts[best][j] + c_shr * (pts[i][j] - pts[best][j]);
      fv[i] = eval(pts[i]);
    }
  }

  const auto it = std::min_element(fv.begin(), fv.end());
  res.x = pts[static_cast<std::size_t>(it - fv.begin())];
  res.value = *it;
  return res;
}

/// Runs from `x0`, then `restarts` more times from jittered copies of the
/// incumbent. Jitter is `jitter * step[j] * N(0,1)`, drawn from a seeded stream.
template <class F>
OptimResult minimize_with_restarts(F&& f, const std::vector<double>& x0, const std::vector<double>& step,
                                   int restarts, double jitter, std::uint64_t seed,
                                   const NelderMeadOptions& opt = {}) {
  OptimResult best = nelder_mead(f, x0, step, opt);
  int total = best.evaluations;
  bool all_converged = best.converged;
  CounterRng rng(seed, 0x4e4d);
  for (int r = 0; r < restarts; ++r) {
    std::vector<double> start = best.x;
    for (std::size_t j = 0; j < start.size(); ++j) start[j] += jitter * step[j] * standard_normal(rng);
    if (!std::isfinite(f(start))) start = best.x;
    OptimResult cur = nelder_mead(f, start, step, opt);
    total += cur.evaluations;
    if (cur.value < best.value) {
      best = std::move(cur);
      all_converged = best.converged;
    }
  }
  best.evaluations = total;
  best.converged = all_converged;
  return best;
}

}  // namespace condex
