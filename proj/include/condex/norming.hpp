#pragma once

// Norming functions a_i(x), b_i(x) and the structured alpha sequences.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "condex/error.hpp"

namespace condex {

struct FreeAlpha {
  std::vector<double> alpha;  ///< alpha_1..alpha_k
};
struct GeometricAlpha {
  double alpha = 0;
};
/// AR(2) autocorrelation sequence parameterised by partial autocorrelations.
struct ARCorr2 {
  double r1 = 0, r2 = 0;
};
struct ARCorr3 {
  double r1 = 0, r2 = 0, r3 = 0;
};
/// Homogeneous recurrence alpha_t = c {sum_i g_i (g_i alpha_{t-i})^d}^{1/d}
/// of order l, with the weights g on the simplex via a sum-to-zero softmax.
struct PTAlpha {
  std::vector<double> init;   ///< alpha_1..alpha_{l-1}
  double c = 1;
  double delta = 1;
  std::vector<double> Gamma;  ///< l-1 free reals
  int order() const noexcept { return static_cast<int>(init.size()) + 1; }
};

using AlphaStructure = std::variant<FreeAlpha, GeometricAlpha, ARCorr2, ARCorr3, PTAlpha>;

enum class StructureKind { free, geometric, ar2, ar3, pt };
enum class NormingModel { model1, model2 };

inline StructureKind structure_kind(const AlphaStructure& s) { return static_cast<StructureKind>(s.index()); }

inline const char* to_string(StructureKind k) {
  switch (k) {
    case StructureKind::free: return "free";
    case StructureKind::geometric: return "geometric";
    case StructureKind::ar2: return "ar2";
    case StructureKind::ar3: return "ar3";
    case StructureKind::pt: return "pt";
  }
  return "?";
}

inline StructureKind parse_structure_kind(const std::string& s) {
  if (s == "free") return StructureKind::free;
  if (s == "geometric") return StructureKind::geometric;
  if (s == "ar2") return StructureKind::ar2;
  if (s == "ar3") return StructureKind::ar3;
  if (s == "pt") return StructureKind::pt;
  throw InputError("unknown alpha structure '" + s + "'");
}

/// PT simplex weights from the free Gamma values.
inline std::vector<double> pt_weights(const std::vector<double>& Gamma) {
  std::vector<double> logits(Gamma);
  logits.push_back(-std::accumulate(Gamma.begin(), Gamma.end(), 0.0));
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0;
  for (double& g : logits) s += (g = std::exp(g - mx));
  for (double& g : logits) g /= s;
  return logits;
}

inline std::vector<double> pt_gamma_from_weights(const std::vector<double>& w) {
  const std::size_t l = w.size();
  if (l < 2) throw InputError("PT weights need order >= 2");
  std::vector<double> L(l - 1);
  for (std::size_t i = 0; i + 1 < l; ++i) L[i] = std::log(w[i] / w[l - 1]);
  const double S = std::accumulate(L.begin(), L.end(), 0.0) / static_cast<double>(l);
  for (double& v : L) v -= S;
  return L;
}

/// Upper bound on c: alpha_t decays only when c^delta sum g_i^(1+delta) < 1.
inline double pt_c_max(const std::vector<double>& weights, double delta) {
  double s = 0;
  for (double g : weights) s += std::pow(g, 1.0 + delta);
  return std::pow(s, -1.0 / delta);
}

namespace detail {

inline double spow(double x, double p) { return x < 0 ? -std::pow(-x, p) : std::pow(x, p); }

inline void check_unit(double a, const char* what) {
  if (!(a >= -1.0 && a <= 1.0)) throw InputError(std::string(what) + " must lie in [-1,1]");
}
inline void check_open_unit(double r, const char* what) {
  if (!(r > -1.0 && r < 1.0)) throw InputError(std::string(what) + " must lie in (-1,1)");
}

}  // namespace detail

inline void validate_structure(const AlphaStructure& s) {
  std::visit(
      [](const auto& a) {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, FreeAlpha>) {
          if (a.alpha.empty()) throw InputError("free alpha structure is empty");
          for (double v : a.alpha) detail::check_unit(v, "free alpha");
        } else if constexpr (std::is_same_v<T, GeometricAlpha>) {
          detail::check_unit(a.alpha, "geometric alpha");
        } else if constexpr (std::is_same_v<T, ARCorr2>) {
          detail::check_open_unit(a.r1, "r1");
          detail::check_open_unit(a.r2, "r2");
        } else if constexpr (std::is_same_v<T, ARCorr3>) {
          detail::check_open_unit(a.r1, "r1");
          detail::check_open_unit(a.r2, "r2");
          detail::check_open_unit(a.r3, "r3");
        } else {
          if (a.init.empty()) throw InputError("PT structure needs order >= 2");
          if (a.Gamma.size() != a.init.size()) throw InputError("PT structure needs order-1 Gamma values");
          for (double v : a.init) detail::check_unit(v, "PT initial alpha");
          if (!(a.delta > 0) || !std::isfinite(a.delta)) throw InputError("PT delta must be positive");
          if (!(a.c > 0)) throw InputError("PT c must be positive");
          const double cmax = pt_c_max(pt_weights(a.Gamma), a.delta);
          if (!(a.c < cmax))
            throw InputError("PT constraint violated: need c^-delta > sum gamma_i^(1+delta) (c < " +
                             std::to_string(cmax) + ")");
        }
      },
      s);
}

/// AR coefficients (theta) from partial autocorrelations, orders 2 and 3.
inline std::pair<double, double> ar2_theta(const ARCorr2& a) { return {a.r1 * (1 - a.r2), a.r2}; }
inline std::array<double, 3> ar3_theta(const ARCorr3& a) {
  return {a.r1 - a.r1 * a.r2 - a.r2 * a.r3, a.r2 - a.r1 * a.r3 + a.r1 * a.r2 * a.r3, a.r3};
}

/// alpha_1..alpha_k. Recurrence structures extrapolate to any k.
inline std::vector<double> alpha_sequence(const AlphaStructure& s, int k) {
  if (k < 1) throw InputError("alpha_sequence: k must be >= 1");
  validate_structure(s);
  std::vector<double> a(static_cast<std::size_t>(k));
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, FreeAlpha>) {
          if (static_cast<int>(p.alpha.size()) < k)
            throw InputError("free alpha structure cannot be extrapolated beyond lag " + std::to_string(p.alpha.size()));
          std::copy_n(p.alpha.begin(), k, a.begin());
        } else if constexpr (std::is_same_v<T, GeometricAlpha>) {
          double v = 1;
          for (int i = 0; i < k; ++i) a[static_cast<std::size_t>(i)] = (v *= p.alpha);
        } else if constexpr (std::is_same_v<T, ARCorr2>) {
          const auto [t1, t2] = ar2_theta(p);
          double prev2 = 1, prev1 = t1 / (1 - t2);
          a[0] = prev1;
          for (int i = 1; i < k; ++i) {
            const double v = t1 * prev1 + t2 * prev2;
            a[static_cast<std::size_t>(i)] = v;
            prev2 = prev1;
            prev1 = v;
          }
        } else if constexpr (std::is_same_v<T, ARCorr3>) {
          const auto t = ar3_theta(p);
          std::vector<double> full(static_cast<std::size_t>(std::max(k, 2)) + 1);
          full[0] = 1;
          full[1] = (t[0] + t[1] * t[2]) / (1 - t[1] - t[0] * t[2] - t[2] * t[2]);
          full[2] = t[1] + (t[0] + t[2]) * full[1];
          for (std::size_t i = 3; i < full.size(); ++i) full[i] = t[0] * full[i - 1] + t[1] * full[i - 2] + t[2] * full[i - 3];
          std::copy_n(full.begin() + 1, k, a.begin());
        } else {
          const auto g = pt_weights(p.Gamma);
          const std::size_t l = g.size();
          std::vector<double> full(l + static_cast<std::size_t>(k));
          full[0] = 1;
          for (std::size_t i = 0; i < p.init.size(); ++i) full[i + 1] = p.init[i];
          for (std::size_t t = l; t <= static_cast<std::size_t>(k); ++t) {
            double s = 0;
            for (std::size_t i = 1; i <= l; ++i) s += g[i - 1] * detail::spow(g[i - 1] * full[t - i], p.delta);
            full[t] = p.c * detail::spow(s, 1.0 / p.delta);
          }
          std::copy_n(full.begin() + 1, k, a.begin());
        }
      },
      s);
  return a;
}

/// The recurrence form of a stationary AR(2) (theta1 != theta2, both > 0).
inline PTAlpha pt_from_ar2(double theta1, double theta2) {
  if (!(theta1 > 0 && theta2 > 0)) throw InputError("pt_from_ar2: theta1 and theta2 must be positive");
  if (theta1 == theta2) throw InputError("pt_from_ar2: theta1 == theta2 makes the mapping singular");
  if (!(theta1 + theta2 < 1 && theta2 - theta1 < 1 && theta2 < 1))
    throw InputError("pt_from_ar2: (theta1, theta2) outside the stationarity triangle");
  const double rt = std::sqrt(theta1 * theta2);
  const double g1 = (theta1 - rt) / (theta1 - theta2);
  PTAlpha p;
  p.delta = 1;
  p.c = (theta1 - theta2) * (theta1 - theta2) / (theta1 - 2 * rt + theta2);
  p.init = {theta1 / (1 - theta2)};
  p.Gamma = pt_gamma_from_weights({g1, 1 - g1});
  return p;
}

struct NormingSpec {
  NormingModel model = NormingModel::model1;
  AlphaStructure alpha = GeometricAlpha{};
  double beta = 0;
  int k = 1;
};

struct BackwardForwardSpec {
  NormingSpec forward;
  NormingSpec backward;
  bool symmetric = true;
};

inline void validate_norming(const NormingSpec& s, const std::vector<double>& alphas) {
  if (!(s.beta >= 0 && s.beta < 1)) throw InputError("beta must lie in [0,1)");
  if (s.model == NormingModel::model2)
    for (double a : alphas)
      if (a < 0) throw InputError("Model 2 norming requires every alpha_i >= 0");
}

/// a_i(x)
inline double norm_location(double alpha_i, double x) { return alpha_i * x; }

/// b_i(x); 0^0 is taken as 1 so that Model 2 with alpha_i = 0, beta = 0 gives 2.
inline double norm_scale(NormingModel m, double alpha_i, double beta, double x) {
  return m == NormingModel::model1 ? std::pow(x, beta) : 1.0 + std::pow(alpha_i * x, beta);
}

inline double norm_location(const NormingSpec& s, double x, int i) {
  if (!(x > 0)) throw InputError("norm_location: x must be positive");
  const auto a = alpha_sequence(s.alpha, i);
  validate_norming(s, a);
  return norm_location(a.back(), x);
}

inline double norm_scale(const NormingSpec& s, double x, int i) {
  if (!(x > 0)) throw InputError("norm_scale: x must be positive");
  const auto a = alpha_sequence(s.alpha, i);
  validate_norming(s, a);
  return norm_scale(s.model, a.back(), s.beta, x);
}

/// Precomputed a_i, b_i for lags 1..k of one direction.
class LagNorming {
 public:
  LagNorming() = default;
  LagNorming(const NormingSpec& s, int k) : model_(s.model), beta_(s.beta), alpha_(alpha_sequence(s.alpha, k)) {
    validate_norming(s, alpha_);
  }
  int horizon() const noexcept { return static_cast<int>(alpha_.size()); }
  double alpha(int i) const { return alpha_[static_cast<std::size_t>(i - 1)]; }
  double beta() const noexcept { return beta_; }
  NormingModel model() const noexcept { return model_; }
  double location(int i, double x) const { return alpha(i) * x; }
  double scale(int i, double x) const { return norm_scale(model_, alpha(i), beta_, x); }
  const std::vector<double>& alphas() const noexcept { return alpha_; }

 private:
  NormingModel model_ = NormingModel::model1;
  double beta_ = 0;
  std::vector<double> alpha_;
};

// ---------------------------------------------------------------------------
// Unconstrained parameterisation for the optimisers.

inline constexpr double kBetaEps = 1e-6;

namespace detail {

inline double logistic(double e) { return e >= 0 ? 1.0 / (1.0 + std::exp(-e)) : std::exp(e) / (1.0 + std::exp(e)); }

/// (lo, hi) from the real line, never touching the ends.
inline double to_interval(double e, double lo, double hi) {
  const double x = e >= 0 ? hi - (hi - lo) * logistic(-e) : lo + (hi - lo) * logistic(e);
  return std::clamp(x, std::nextafter(lo, hi), std::nextafter(hi, lo));
}

inline double from_interval(double x, double lo, double hi) { return std::log((x - lo) / (hi - x)); }

}  // namespace detail

/// Bijection between R^n and (alpha structure, beta) for one structure kind.
class NormingCodec {
 public:
  NormingCodec(StructureKind kind, NormingModel model, int k, int pt_order = 2)
      : kind_(kind), model_(model), k_(k), order_(pt_order) {
    if (k < 1) throw InputError("horizon k must be >= 1");
    if (kind == StructureKind::pt && pt_order < 2) throw InputError("PT order must be >= 2");
  }

  StructureKind kind() const noexcept { return kind_; }
  NormingModel model() const noexcept { return model_; }

  std::size_t structure_dimension() const noexcept {
    switch (kind_) {
      case StructureKind::free: return static_cast<std::size_t>(k_);
      case StructureKind::geometric: return 1;
      case StructureKind::ar2: return 2;
      case StructureKind::ar3: return 3;
      case StructureKind::pt: return 2 * static_cast<std::size_t>(order_ - 1) + 2;
    }
    return 0;
  }
  std::size_t dimension() const noexcept { return structure_dimension() + 1; }

  std::pair<AlphaStructure, double> to_natural(const double* e) const {
    return {structure_to_natural(e), detail::to_interval(e[structure_dimension()], kBetaEps, 1 - kBetaEps)};
  }
  std::pair<AlphaStructure, double> to_natural(const std::vector<double>& e) const { return to_natural(e.data()); }

  AlphaStructure structure_to_natural(const double* e) const {
    const double alo = model_ == NormingModel::model2 ? 0.0 : -1.0;
    switch (kind_) {
      case StructureKind::free: {
        FreeAlpha f;
        for (int i = 0; i < k_; ++i) f.alpha.push_back(detail::to_interval(e[i], alo, 1));
        return f;
      }
      case StructureKind::geometric: return GeometricAlpha{detail::to_interval(e[0], alo, 1)};
      case StructureKind::ar2: return ARCorr2{detail::to_interval(e[0], -1, 1), detail::to_interval(e[1], -1, 1)};
      case StructureKind::ar3:
        return ARCorr3{detail::to_interval(e[0], -1, 1), detail::to_interval(e[1], -1, 1),
                       detail::to_interval(e[2], -1, 1)};
      case StructureKind::pt: {
        PTAlpha p;
        const int m = order_ - 1;
        for (int i = 0; i < m; ++i) p.init.push_back(detail::to_interval(e[i], alo, 1));
        p.delta = std::exp(e[m]);
        for (int i = 0; i < m; ++i) p.Gamma.push_back(e[m + 1 + i]);
        const double cmax = pt_c_max(pt_weights(p.Gamma), p.delta);
        p.c = detail::to_interval(e[2 * m + 1], 0, cmax);
        return p;
      }
    }
    throw InternalError("unknown structure kind");
  }

  std::vector<double> to_unconstrained(const AlphaStructure& s, double beta) const {
    if (structure_kind(s) != kind_) throw InputError("structure kind does not match the codec");
    if (!(beta > kBetaEps && beta < 1 - kBetaEps)) beta = std::clamp(beta, 2 * kBetaEps, 1 - 2 * kBetaEps);
    const double alo = model_ == NormingModel::model2 ? 0.0 : -1.0;
    std::vector<double> e;
    auto iv = [](double x, double lo, double hi) {
      const double eps = 1e-12 * (hi - lo);
      return detail::from_interval(std::clamp(x, lo + eps, hi - eps), lo, hi);
    };
    std::visit(
        [&](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, FreeAlpha>) {
            if (static_cast<int>(p.alpha.size()) != k_) throw InputError("free alpha length must equal k");
            for (double a : p.alpha) e.push_back(iv(a, alo, 1));
          } else if constexpr (std::is_same_v<T, GeometricAlpha>) {
            e.push_back(iv(p.alpha, alo, 1));
          } else if constexpr (std::is_same_v<T, ARCorr2>) {
            e = {iv(p.r1, -1, 1), iv(p.r2, -1, 1)};
          } else if constexpr (std::is_same_v<T, ARCorr3>) {
            e = {iv(p.r1, -1, 1), iv(p.r2, -1, 1), iv(p.r3, -1, 1)};
          } else {
            if (p.order() != order_) throw InputError("PT order does not match the codec");
            for (double a : p.init) e.push_back(iv(a, alo, 1));
            e.push_back(std::log(p.delta));
            for (double g : p.Gamma) e.push_back(g);
            e.push_back(iv(p.c, 0, pt_c_max(pt_weights(p.Gamma), p.delta)));
          }
        },
        s);
    e.push_back(detail::from_interval(beta, kBetaEps, 1 - kBetaEps));
    return e;
  }

 private:
  StructureKind kind_;
  NormingModel model_;
  int k_;
  int order_;
};

}  // namespace condex
