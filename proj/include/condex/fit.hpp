#pragma once

// Composite-likelihood fitting of conditional extremes models: exceedance
// blocks, the semi-parametric profile fit and the two-stage parametric fit.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>

#include "condex/dists.hpp"
#include "condex/error.hpp"
#include "condex/margins.hpp"
#include "condex/norming.hpp"
#include "condex/optim.hpp"
#include "condex/series.hpp"
#include "condex/stats.hpp"

namespace condex {

enum class Direction { forward, backward_forward };
enum class WorkingMargin { delta_laplace, gaussian };
enum class CurveFamily { param1, param2 };

struct ExceedanceBlock {
  std::size_t t = 0;
  double x = 0;
  std::vector<double> trailing;  ///< x_{t+1}, ..., x_{t+m}
  std::vector<double> leading;   ///< x_{t-1}, ..., x_{t-m'}
};

struct ExceedanceBlockSet {
  double u = 0;
  int k = 1;
  Direction direction = Direction::forward;
  std::vector<ExceedanceBlock> blocks;
  std::size_t size() const noexcept { return blocks.size(); }
};

inline ExceedanceBlockSet extract_blocks(const LaplaceSeries& s, double u, int k, Direction dir) {
  if (!(u > 0)) throw InputError("extract_blocks: threshold u must be positive");
  if (k < 1) throw InputError("extract_blocks: k must be >= 1");
  s.validate();
  ExceedanceBlockSet out{u, k, dir, {}};
  std::size_t n_exceed = 0;
  for (const auto& seg : s.segments) {
    for (std::size_t t = seg.begin; t < seg.end; ++t) {
      if (!(s.values[t] > u)) continue;
      ++n_exceed;
      ExceedanceBlock b;
      b.t = t;
      b.x = s.values[t];
      const std::size_t fwd = std::min<std::size_t>(static_cast<std::size_t>(k), seg.end - t - 1);
      b.trailing.assign(s.values.begin() + static_cast<std::ptrdiff_t>(t + 1),
                        s.values.begin() + static_cast<std::ptrdiff_t>(t + 1 + fwd));
      if (dir == Direction::backward_forward) {
        const std::size_t bwd = std::min<std::size_t>(static_cast<std::size_t>(k), t - seg.begin);
        for (std::size_t j = 1; j <= bwd; ++j) b.leading.push_back(s.values[t - j]);
      }
      if (b.trailing.empty() && b.leading.empty()) continue;
      out.blocks.push_back(std::move(b));
    }
  }
  if (out.blocks.empty())
    throw InputError("extract_blocks: no usable exceedance blocks (" + std::to_string(n_exceed) +
                     " exceedances of u)");
  return out;
}

namespace detail {

/// Pairs (x_t, x_{t+i}) for one lag, with the block each came from.
struct LagData {
  std::vector<double> x0, xl;
  std::vector<std::size_t> row;
};

struct LagTable {
  std::vector<LagData> forward, backward;  // index lag - 1
};

inline LagTable make_lag_table(const ExceedanceBlockSet& b) {
  LagTable t;
  t.forward.resize(static_cast<std::size_t>(b.k));
  if (b.direction == Direction::backward_forward) t.backward.resize(static_cast<std::size_t>(b.k));
  for (std::size_t r = 0; r < b.blocks.size(); ++r) {
    const auto& blk = b.blocks[r];
    for (std::size_t i = 0; i < blk.trailing.size() && i < t.forward.size(); ++i) {
      t.forward[i].x0.push_back(blk.x);
      t.forward[i].xl.push_back(blk.trailing[i]);
      t.forward[i].row.push_back(r);
    }
    for (std::size_t i = 0; i < blk.leading.size() && i < t.backward.size(); ++i) {
      t.backward[i].x0.push_back(blk.x);
      t.backward[i].xl.push_back(blk.leading[i]);
      t.backward[i].row.push_back(r);
    }
  }
  return t;
}

/// Residuals z = (x_{t+i} - a_i(x_t)) / b_i(x_t); returns sum log b_i(x_t).
inline double lag_residuals(const LagData& d, const LagNorming& nm, int lag, std::vector<double>& z) {
  z.resize(d.x0.size());
  double slb = 0;
  for (std::size_t j = 0; j < d.x0.size(); ++j) {
    const double b = nm.scale(lag, d.x0[j]);
    z[j] = (d.xl[j] - nm.location(lag, d.x0[j])) / b;
    slb += std::log(b);
  }
  return slb;
}

inline double dl_sum_nll(const std::vector<double>& z, const DeltaLaplaceParams& p) {
  double s = 0;
  for (double v : z) s -= dl_log_density(v, p);
  return s;
}

}  // namespace detail

/// Negative composite log-likelihood over all available (t, i) pairs.
inline double composite_nll(const ExceedanceBlockSet& blocks, const NormingSpec& spec,
                            const std::vector<DeltaLaplaceParams>& nuisance) {
  if (static_cast<int>(nuisance.size()) < blocks.k) throw InputError("composite_nll: need one nuisance entry per lag");
  const LagNorming nm(spec, blocks.k);
  const auto table = detail::make_lag_table(blocks);
  std::vector<double> z;
  double nll = 0;
  for (int i = 1; i <= blocks.k; ++i) {
    nll += detail::lag_residuals(table.forward[static_cast<std::size_t>(i - 1)], nm, i, z);
    nll += detail::dl_sum_nll(z, nuisance[static_cast<std::size_t>(i - 1)]);
  }
  return nll;
}

inline double composite_nll(const ExceedanceBlockSet& blocks, const BackwardForwardSpec& spec,
                            const std::vector<DeltaLaplaceParams>& forward_nuisance,
                            const std::vector<DeltaLaplaceParams>& backward_nuisance) {
  double nll = composite_nll(blocks, spec.forward, forward_nuisance);
  if (blocks.direction != Direction::backward_forward) return nll;
  if (static_cast<int>(backward_nuisance.size()) < blocks.k)
    throw InputError("composite_nll: need one backward nuisance entry per lag");
  const LagNorming nm(spec.symmetric ? spec.forward : spec.backward, blocks.k);
  const auto table = detail::make_lag_table(blocks);
  std::vector<double> z;
  for (int i = 1; i <= blocks.k; ++i) {
    nll += detail::lag_residuals(table.backward[static_cast<std::size_t>(i - 1)], nm, i, z);
    nll += detail::dl_sum_nll(z, backward_nuisance[static_cast<std::size_t>(i - 1)]);
  }
  return nll;
}

/// Empirical residual vectors, one row per exceedance block; NaN marks a
/// lag cut off by a segment boundary.
struct ResidualStore {
  int k = 0;
  bool has_backward = false;
  std::vector<double> conditioning;  ///< x_t per row
  std::vector<double> forward;       ///< rows x k
  std::vector<double> backward;      ///< rows x k (when has_backward)

  std::size_t rows() const noexcept { return conditioning.size(); }
  double fwd(std::size_t r, int lag) const { return forward[r * static_cast<std::size_t>(k) + static_cast<std::size_t>(lag - 1)]; }
  double bwd(std::size_t r, int lag) const { return backward[r * static_cast<std::size_t>(k) + static_cast<std::size_t>(lag - 1)]; }
};

struct FitMetadata {
  double nll = 0;
  int evaluations = 0;
  std::uint64_t seed = 0;
  bool converged = false;
  std::vector<std::string> warnings;
};

struct SemiParamFit {
  NormingSpec forward;
  std::optional<NormingSpec> backward;  ///< present for backward-forward fits
  bool symmetric = true;
  WorkingMargin margin = WorkingMargin::delta_laplace;
  /// Per-lag residual margins; the Gaussian margin N(m, s^2) is stored as
  /// its delta = 2 equivalent (mu = m, sigma = s sqrt 2).
  std::vector<DeltaLaplaceParams> forward_nuisance, backward_nuisance;
  ResidualStore residuals;
  double u = 0;
  int k = 1;
  FitMetadata meta;

  Direction direction() const noexcept { return backward ? Direction::backward_forward : Direction::forward; }
  const NormingSpec& backward_spec() const { return symmetric || !backward ? forward : *backward; }
};

struct ResidualCurves {
  CurveFamily family = CurveFamily::param1;
  double A = 0, B = 1, C = 0, D = 1, E = 0, F = 1;

  /// delta-Laplace parameters of the lag-`lag` residual.
  DeltaLaplaceParams at(int lag, double beta, double u) const {
    const double i = static_cast<double>(lag - 1);
    const double pre = family == CurveFamily::param1 ? std::pow(1.0 + u, -beta) : 1.0;
    return {A * std::exp(-B * i), pre * (1.0 + C * std::exp(-D * i)), 1.0 + E * std::exp(-F * i)};
  }

  void validate() const {
    auto in = [](double v, double lo, double hi) { return v > lo && v < hi; };
    const bool c_ok = family == CurveFamily::param1 ? in(C, 0, 3) : in(C, -1, 0);
    if (!(in(A, 0, 1) && in(E, 0, 1) && in(B, 0, 5) && in(D, 0, 5) && in(F, 0, 5) && c_ok))
      throw InputError("residual curve parameters out of bounds");
  }
};

struct ParamFit {
  NormingSpec forward;
  bool backward_forward = false;  ///< symmetric backward lags share forward parameters
  ResidualCurves curves;
  double rho = 0;
  double u = 0;
  int k = 1;
  FitMetadata meta;

  Direction direction() const noexcept { return backward_forward ? Direction::backward_forward : Direction::forward; }
  DeltaLaplaceParams lag_params(int lag) const { return curves.at(lag, forward.beta, u); }
};

using FittedConditionalModel = std::variant<SemiParamFit, ParamFit>;

struct FitOptions {
  NormingModel model = NormingModel::model1;
  StructureKind structure = StructureKind::geometric;
  int pt_order = 2;
  WorkingMargin margin = WorkingMargin::delta_laplace;
  bool symmetric = true;
  CurveFamily curves = CurveFamily::param1;
  int restarts = 3;
  std::uint64_t seed = 1;
  int max_evaluations = 4000;
};

namespace detail {

inline double starting_alpha(const ExceedanceBlockSet& blocks) {
  std::vector<double> a, b;
  for (const auto& blk : blocks.blocks)
    if (!blk.trailing.empty()) {
      a.push_back(blk.x);
      b.push_back(blk.trailing[0]);
    }
  if (a.size() < 3)
    for (const auto& blk : blocks.blocks)
      if (!blk.leading.empty()) {
        a.push_back(blk.x);
        b.push_back(blk.leading[0]);
      }
  double r = a.size() >= 3 ? normal_scores_correlation(a, b) : 0.5;
  if (!std::isfinite(r)) r = 0.5;
  return std::clamp(r, 0.05, 0.95);
}

inline AlphaStructure starting_structure(StructureKind kind, int k, int pt_order, double a0) {
  switch (kind) {
    case StructureKind::free: {
      FreeAlpha f;
      for (int i = 1; i <= k; ++i) f.alpha.push_back(std::pow(a0, i));
      return f;
    }
    case StructureKind::geometric: return GeometricAlpha{a0};
    case StructureKind::ar2: return ARCorr2{a0, 0};
    case StructureKind::ar3: return ARCorr3{a0, 0, 0};
    case StructureKind::pt: {
      PTAlpha p;
      const int l = pt_order;
      for (int i = 1; i < l; ++i) p.init.push_back(std::pow(a0, i));
      p.delta = 1;
      p.Gamma.assign(static_cast<std::size_t>(l - 1), 0.0);
      double s = 0;
      for (int i = 1; i <= l; ++i) s += std::pow(a0, l - i);
      const double cmax = pt_c_max(pt_weights(p.Gamma), 1.0);
      p.c = std::min(static_cast<double>(l * l) * std::pow(a0, l) / s, 0.95 * cmax);
      return p;
    }
  }
  throw InternalError("unknown structure kind");
}

/// Parameter vector layout shared by both fit types: forward structure and
/// beta, then (asymmetric backward-forward only) backward structure and beta.
struct NormingLayout {
  NormingCodec codec;
  bool two_sided = false;
  bool symmetric = true;

  std::size_t dimension() const { return codec.dimension() * ((two_sided && !symmetric) ? 2 : 1); }

  /// Returns false when the parameters are infeasible (e.g. negative Model 2 alpha).
  bool decode(const double* e, int k, NormingSpec& fwd, NormingSpec& bwd, LagNorming& nf, LagNorming& nb) const {
    auto one = [&](const double* p, NormingSpec& s, LagNorming& n) {
      auto [structure, beta] = codec.to_natural(p);
      s.model = codec.model();
      s.alpha = std::move(structure);
      s.beta = beta;
      s.k = k;
      try {
        n = LagNorming(s, k);
      } catch (const InputError&) {
        return false;
      }
      return true;
    };
    if (!one(e, fwd, nf)) return false;
    if (!two_sided) return true;
    if (symmetric) {
      bwd = fwd;
      nb = nf;
      return true;
    }
    return one(e + codec.dimension(), bwd, nb);
  }
};

inline std::vector<double> norming_start(const NormingLayout& lay, const ExceedanceBlockSet& blocks,
                                         const FitOptions& opt) {
  const double a0 = starting_alpha(blocks);
  auto s = lay.codec.to_unconstrained(starting_structure(opt.structure, blocks.k, opt.pt_order, a0), 0.2);
  if (lay.two_sided && !lay.symmetric) {
    const auto b = s;
    s.insert(s.end(), b.begin(), b.end());
  }
  return s;
}

/// Profile objective: per lag, the residual margin is re-estimated for every
/// candidate norming. Inner delta-Laplace fits warm-start from the previous call.
class ProfileObjective {
 public:
  ProfileObjective(const ExceedanceBlockSet& blocks, const FitOptions& opt)
      : k_(blocks.k),
        opt_(opt),
        layout_{NormingCodec(opt.structure, opt.model, blocks.k, opt.pt_order),
                blocks.direction == Direction::backward_forward, opt.symmetric},
        table_(make_lag_table(blocks)) {
    warm_fwd_.resize(table_.forward.size());
    warm_bwd_.resize(table_.backward.size());
  }

  const NormingLayout& layout() const noexcept { return layout_; }

  double operator()(const std::vector<double>& e) {
    NormingSpec fs, bs;
    LagNorming nf, nb;
    if (!layout_.decode(e.data(), k_, fs, bs, nf, nb)) return std::numeric_limits<double>::infinity();
    try {
      double nll = side(table_.forward, nf, warm_fwd_, nullptr, false);
      if (layout_.two_sided) nll += side(table_.backward, nb, warm_bwd_, nullptr, false);
      return nll;
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    } catch (const InputError&) {
      return std::numeric_limits<double>::infinity();
    }
  }

  /// Cold (deterministic) inner fits at `e`; fills the fit's specs and nuisance.
  double finalize(const std::vector<double>& e, SemiParamFit& fit) const {
    NormingSpec fs, bs;
    LagNorming nf, nb;
    if (!layout_.decode(e.data(), k_, fs, bs, nf, nb)) throw NumericalError("fit ended at an infeasible point", e);
    std::vector<Warm> cold_f(table_.forward.size()), cold_b(table_.backward.size());
    double nll = side(table_.forward, nf, cold_f, &fit.forward_nuisance, true);
    fit.forward = fs;
    if (layout_.two_sided) {
      nll += side(table_.backward, nb, cold_b, &fit.backward_nuisance, true);
      fit.backward = bs;
    }
    return nll;
  }

 private:
  struct Warm {
    bool valid = false;
    double mu = 0, log_delta = 0, sigma = 1;
  };

  double side(const std::vector<LagData>& lags, const LagNorming& nm, std::vector<Warm>& warm,
              std::vector<DeltaLaplaceParams>* out, bool cold) const {
    double nll = 0;
    if (out) out->clear();
    for (std::size_t i = 0; i < lags.size(); ++i) {
      const LagData& d = lags[i];
      if (d.x0.empty()) {
        if (out) out->push_back({0, 1, opt_.margin == WorkingMargin::gaussian ? 2.0 : 1.0});
        continue;
      }
      const double slb = lag_residuals(d, nm, static_cast<int>(i + 1), z_);
      DeltaLaplaceParams p;
      if (opt_.margin == WorkingMargin::gaussian) {
        const double m = mean(z_);
        double ss = 0;
        for (double v : z_) ss += (v - m) * (v - m);
        const double sd = std::sqrt(ss / static_cast<double>(z_.size()));
        if (!(sd > 0)) throw NumericalError("degenerate residuals");
        p = {m, sd * std::numbers::sqrt2, 2.0};
      } else {
        if (z_.size() < 3) throw NumericalError("too few residuals at a lag");
        DlProfileStart st;
        NelderMeadOptions o = dl_default_options();
        if (!cold && warm[i].valid) {
          st = {warm[i].mu, warm[i].log_delta, 0.05 * warm[i].sigma, 0.05};
          o.x_tolerance = 1e-7;
        } else {
          st = dl_cold_start(z_.data(), z_.size());
        }
        p = dl_profile_fit(z_.data(), z_.size(), st, o);
        warm[i] = {true, p.mu, std::log(p.delta), p.sigma};
      }
      nll += slb + dl_sum_nll(z_, p);
      if (out) out->push_back(p);
    }
    return nll;
  }

  int k_;
  FitOptions opt_;
  NormingLayout layout_;
  LagTable table_;
  mutable std::vector<double> z_;
  std::vector<Warm> warm_fwd_, warm_bwd_;
};

inline ResidualStore build_residual_store(const ExceedanceBlockSet& blocks, const LagNorming& nf,
                                          const LagNorming* nb) {
  ResidualStore st;
  st.k = blocks.k;
  st.has_backward = nb != nullptr;
  const std::size_t k = static_cast<std::size_t>(blocks.k);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  st.forward.assign(blocks.size() * k, nan);
  if (nb) st.backward.assign(blocks.size() * k, nan);
  for (std::size_t r = 0; r < blocks.size(); ++r) {
    const auto& b = blocks.blocks[r];
    st.conditioning.push_back(b.x);
    for (std::size_t i = 0; i < b.trailing.size() && i < k; ++i) {
      const int lag = static_cast<int>(i + 1);
      st.forward[r * k + i] = (b.trailing[i] - nf.location(lag, b.x)) / nf.scale(lag, b.x);
    }
    if (nb)
      for (std::size_t i = 0; i < b.leading.size() && i < k; ++i) {
        const int lag = static_cast<int>(i + 1);
        st.backward[r * k + i] = (b.leading[i] - nb->location(lag, b.x)) / nb->scale(lag, b.x);
      }
  }
  return st;
}

inline NelderMeadOptions outer_options(const FitOptions& o) {
  NelderMeadOptions n;
  n.x_tolerance = 1e-6;
  n.f_tolerance = 1e-12;
  n.max_evaluations = o.max_evaluations;
  return n;
}

}  // namespace detail

/// Inner step at a given norming: the per-lag residual margins (cold start).
inline std::vector<DeltaLaplaceParams> profile_nuisance(const ExceedanceBlockSet& blocks, const NormingSpec& spec,
                                                        WorkingMargin margin, bool backward_side = false) {
  FitOptions o;
  o.margin = margin;
  o.model = spec.model;
  o.structure = structure_kind(spec.alpha);
  if (o.structure == StructureKind::pt) o.pt_order = std::get<PTAlpha>(spec.alpha).order();
  const detail::ProfileObjective obj(blocks, o);
  SemiParamFit tmp;
  std::vector<double> e = obj.layout().codec.to_unconstrained(spec.alpha, spec.beta);
  if (obj.layout().two_sided && !obj.layout().symmetric) {
    const auto c = e;
    e.insert(e.end(), c.begin(), c.end());
  }
  // Evaluate through the same code path the fit uses; decoding round-trips.
  obj.finalize(e, tmp);
  return backward_side ? tmp.backward_nuisance : tmp.forward_nuisance;
}

inline SemiParamFit fit_semiparametric(const ExceedanceBlockSet& blocks, const FitOptions& opt) {
  if (blocks.blocks.empty()) throw InputError("fit_semiparametric: no blocks");
  SemiParamFit fit;
  if (blocks.size() < 20)
    fit.meta.warnings.push_back("only " + std::to_string(blocks.size()) + " exceedance blocks (>= 20 recommended)");
  detail::ProfileObjective obj(blocks, opt);
  const auto x0 = detail::norming_start(obj.layout(), blocks, opt);
  const std::vector<double> step(x0.size(), 0.5);
  auto f = [&](const std::vector<double>& e) { return obj(e); };
  const auto best = minimize_with_restarts(f, x0, step, opt.restarts, 0.5, opt.seed, detail::outer_options(opt));
  if (!std::isfinite(best.value)) throw NumericalError("fit_semiparametric: no feasible point found", best.x);
  if (!best.converged) throw NumericalError("fit_semiparametric: simplex did not converge within budget", best.x, best.value);

  fit.symmetric = opt.symmetric;
  fit.margin = opt.margin;
  fit.u = blocks.u;
  fit.k = blocks.k;
  fit.meta.nll = obj.finalize(best.x, fit);
  fit.meta.evaluations = best.evaluations;
  fit.meta.seed = opt.seed;
  fit.meta.converged = best.converged;
  const LagNorming nf(fit.forward, fit.k);
  if (fit.backward) {
    const LagNorming nb(fit.backward_spec(), fit.k);
    fit.residuals = detail::build_residual_store(blocks, nf, &nb);
  } else {
    fit.residuals = detail::build_residual_store(blocks, nf, nullptr);
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Parametric fit.

namespace detail {

struct CurveBounds {
  double lo, hi;
};

inline std::array<CurveBounds, 6> curve_bounds(CurveFamily f) {
  const CurveBounds c = f == CurveFamily::param1 ? CurveBounds{0, 3} : CurveBounds{-1, 0};
  return {CurveBounds{0, 1}, CurveBounds{0, 5}, c, CurveBounds{0, 5}, CurveBounds{0, 1}, CurveBounds{0, 5}};
}

inline ResidualCurves curves_from(const double* e, CurveFamily f) {
  const auto b = curve_bounds(f);
  double v[6];
  for (int i = 0; i < 6; ++i) v[i] = to_interval(e[i], b[static_cast<std::size_t>(i)].lo, b[static_cast<std::size_t>(i)].hi);
  return {f, v[0], v[1], v[2], v[3], v[4], v[5]};
}

inline std::vector<double> curves_to(const ResidualCurves& c) {
  const auto b = curve_bounds(c.family);
  const double v[6] = {c.A, c.B, c.C, c.D, c.E, c.F};
  std::vector<double> e;
  for (int i = 0; i < 6; ++i) {
    const auto& bi = b[static_cast<std::size_t>(i)];
    const double eps = 1e-12 * (bi.hi - bi.lo);
    e.push_back(from_interval(std::clamp(v[i], bi.lo + eps, bi.hi - eps), bi.lo, bi.hi));
  }
  return e;
}

inline double curves_nll(const LagTable& t, const LagNorming& nm, const ResidualCurves& c, double beta, double u,
                         std::vector<double>& z) {
  double nll = 0;
  auto side = [&](const std::vector<LagData>& lags) {
    for (std::size_t i = 0; i < lags.size(); ++i) {
      if (lags[i].x0.empty()) continue;
      const int lag = static_cast<int>(i + 1);
      nll += lag_residuals(lags[i], nm, lag, z);
      nll += dl_sum_nll(z, c.at(lag, beta, u));
    }
  };
  side(t.forward);
  side(t.backward);
  return nll;
}

/// Normal scores w of the observed residual prefix of each block and side.
inline std::vector<std::vector<double>> copula_scores(const ExceedanceBlockSet& blocks, const LagNorming& nm,
                                                      const ResidualCurves& c, double beta) {
  std::vector<std::vector<double>> out;
  auto add = [&](double x, const std::vector<double>& vals) {
    if (vals.empty()) return;
    std::vector<double> w;
    for (std::size_t i = 0; i < vals.size() && i < static_cast<std::size_t>(blocks.k); ++i) {
      const int lag = static_cast<int>(i + 1);
      const double z = (vals[i] - nm.location(lag, x)) / nm.scale(lag, x);
      w.push_back(dl_normal_score(z, c.at(lag, beta, blocks.u)));
    }
    out.push_back(std::move(w));
  };
  for (const auto& b : blocks.blocks) {
    add(b.x, b.trailing);
    if (blocks.direction == Direction::backward_forward) add(b.x, b.leading);
  }
  return out;
}

/// Negative copula log-density summed over blocks; a block observing the
/// first m lags uses the leading m x m block of the correlation matrix.
inline double copula_nll(const std::vector<std::vector<double>>& scores, double rho, int k) {
  const Eigen::MatrixXd P = conditional_correlation(rho, k);
  std::vector<Eigen::LLT<Eigen::MatrixXd>> chol(static_cast<std::size_t>(k) + 1);
  std::vector<double> logdet(static_cast<std::size_t>(k) + 1, 0.0);
  std::vector<bool> ready(static_cast<std::size_t>(k) + 1, false);
  double nll = 0;
  for (const auto& w : scores) {
    const std::size_t m = w.size();
    if (!ready[m]) {
      chol[m].compute(P.topLeftCorner(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m)));
      const Eigen::MatrixXd L = chol[m].matrixL();
      double ld = 0;
      for (std::size_t i = 0; i < m; ++i) ld += 2.0 * std::log(L(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)));
      logdet[m] = ld;
      ready[m] = true;
    }
    const Eigen::Map<const Eigen::VectorXd> wv(w.data(), static_cast<Eigen::Index>(m));
    const Eigen::VectorXd y = chol[m].matrixL().solve(wv);
    // log pi = -0.5 log|P| - 0.5 w' P^-1 w + 0.5 w'w
    nll += 0.5 * logdet[m] + 0.5 * y.squaredNorm() - 0.5 * wv.squaredNorm();
  }
  return nll;
}

}  // namespace detail

/// Stage 2 alone: the copula correlation with norming and curves fixed.
inline double fit_copula_rho(const ExceedanceBlockSet& blocks, const NormingSpec& spec, const ResidualCurves& curves) {
  const LagNorming nm(spec, blocks.k);
  const auto scores = detail::copula_scores(blocks, nm, curves, spec.beta);
  auto f = [&](double r) { return detail::copula_nll(scores, r, blocks.k); };
  const auto r = boost::math::tools::brent_find_minima(f, -0.99, 0.99, 40);
  return r.first;
}

inline ParamFit fit_parametric(const ExceedanceBlockSet& blocks, const FitOptions& opt) {
  if (blocks.blocks.empty()) throw InputError("fit_parametric: no blocks");
  if (blocks.direction == Direction::backward_forward && !opt.symmetric)
    throw InputError("fit_parametric: backward-forward parametric fits must be symmetric");
  ParamFit fit;
  if (blocks.size() < 20)
    fit.meta.warnings.push_back("only " + std::to_string(blocks.size()) + " exceedance blocks (>= 20 recommended)");
  const detail::NormingLayout lay{NormingCodec(opt.structure, opt.model, blocks.k, opt.pt_order), false, true};
  const std::size_t nd = lay.codec.dimension();
  const auto table = detail::make_lag_table(blocks);
  std::vector<double> z;
  auto f = [&](const std::vector<double>& e) {
    NormingSpec fs, bs;
    LagNorming nf, nb;
    if (!lay.decode(e.data(), blocks.k, fs, bs, nf, nb)) return std::numeric_limits<double>::infinity();
    const auto c = detail::curves_from(e.data() + nd, opt.curves);
    return detail::curves_nll(table, nf, c, fs.beta, blocks.u, z);
  };
  auto x0 = detail::norming_start(lay, blocks, opt);
  ResidualCurves c0;
  c0.family = opt.curves;
  c0.A = 0.2;
  c0.B = 1;
  c0.C = opt.curves == CurveFamily::param1 ? 0.5 : -0.5;
  c0.D = 1;
  c0.E = 0.5;
  c0.F = 1;
  const auto ce = detail::curves_to(c0);
  x0.insert(x0.end(), ce.begin(), ce.end());
  const std::vector<double> step(x0.size(), 0.5);
  auto nm_opt = detail::outer_options(opt);
  nm_opt.max_evaluations = std::max(nm_opt.max_evaluations, 400 * static_cast<int>(x0.size()));
  const auto best = minimize_with_restarts(f, x0, step, opt.restarts, 0.5, opt.seed, nm_opt);
  if (!std::isfinite(best.value)) throw NumericalError("fit_parametric: no feasible point found", best.x);
  if (!best.converged) throw NumericalError("fit_parametric: stage 1 did not converge within budget", best.x, best.value);

  NormingSpec fs, bs;
  LagNorming nf, nb;
  lay.decode(best.x.data(), blocks.k, fs, bs, nf, nb);
  fit.forward = fs;
  fit.backward_forward = blocks.direction == Direction::backward_forward;
  fit.curves = detail::curves_from(best.x.data() + nd, opt.curves);
  fit.u = blocks.u;
  fit.k = blocks.k;
  fit.rho = fit_copula_rho(blocks, fit.forward, fit.curves);
  fit.meta.nll = best.value;
  fit.meta.evaluations = best.evaluations;
  fit.meta.seed = opt.seed;
  fit.meta.converged = best.converged;
  return fit;
}

/// Fits the configured model type to a Laplace-scale series.
struct FitConfig {
  int k = 5;
  Direction direction = Direction::forward;
  bool parametric = false;
  FitOptions options;
};

inline FittedConditionalModel fit_model(const LaplaceSeries& s, double u, const FitConfig& cfg) {
  const auto blocks = extract_blocks(s, u, cfg.k, cfg.direction);
  if (cfg.parametric) return fit_parametric(blocks, cfg.options);
  return fit_semiparametric(blocks, cfg.options);
}

inline const NormingSpec& forward_spec(const FittedConditionalModel& m) {
  return std::visit([](const auto& f) -> const NormingSpec& { return f.forward; }, m);
}

inline double fit_threshold(const FittedConditionalModel& m) {
  return std::visit([](const auto& f) { return f.u; }, m);
}

inline int fit_horizon(const FittedConditionalModel& m) {
  return std::visit([](const auto& f) { return f.k; }, m);
}

inline Direction fit_direction(const FittedConditionalModel& m) {
  return std::visit([](const auto& f) { return f.direction(); }, m);
}

struct StabilityRow {
  double u_quantile = 0;
  double u = 0;
  std::size_t n_blocks = 0;
  bool ok = false;
  std::string message;
  double beta = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> alpha;  ///< alpha_1..alpha_k
  double nll = std::numeric_limits<double>::quiet_NaN();
  double rho = std::numeric_limits<double>::quiet_NaN();
};

/// One fit per threshold quantile (Laplace scale); failures recorded per row.
inline std::vector<StabilityRow> parameter_stability_scan(const LaplaceSeries& s, const std::vector<double>& u_quantiles,
                                                          const FitConfig& cfg) {
  if (!std::is_sorted(u_quantiles.begin(), u_quantiles.end()))
    throw InputError("parameter_stability_scan: grid must be sorted ascending");
  std::vector<StabilityRow> rows;
  for (double q : u_quantiles) {
    StabilityRow r;
    r.u_quantile = q;
    try {
      r.u = laplace_quantile(q);
      const auto blocks = extract_blocks(s, r.u, cfg.k, cfg.direction);
      r.n_blocks = blocks.size();
      if (cfg.parametric) {
        const auto f = fit_parametric(blocks, cfg.options);
        r.beta = f.forward.beta;
        r.alpha = alpha_sequence(f.forward.alpha, cfg.k);
        r.nll = f.meta.nll;
        r.rho = f.rho;
      } else {
        const auto f = fit_semiparametric(blocks, cfg.options);
        r.beta = f.forward.beta;
        r.alpha = alpha_sequence(f.forward.alpha, cfg.k);
        r.nll = f.meta.nll;
      }
      r.ok = true;
    } catch (const std::exception& e) {
      r.message = e.what();
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

struct TauRow {
  int lag = 0;  ///< negative for backward lags
  std::size_t n = 0;
  double tau = std::numeric_limits<double>::quiet_NaN();
  bool skipped = false;
};

struct QQRow {
  int lag = 0;
  double empirical = 0;
  double model = 0;
};

struct ResidualDiagnostics {
  std::vector<TauRow> tau;
  std::vector<QQRow> qq;
};

/// Kendall's tau between x_t and the lag-i residual, and QQ data against the
/// fitted residual margins.
inline ResidualDiagnostics residual_diagnostics(const FittedConditionalModel& model, const ExceedanceBlockSet& blocks) {
  if (blocks.k > fit_horizon(model)) throw InputError("residual_diagnostics: block horizon exceeds the fit's");
  ResidualDiagnostics out;
  const LagNorming nf(forward_spec(model), blocks.k);
  std::optional<LagNorming> nb;
  if (blocks.direction == Direction::backward_forward && fit_direction(model) == Direction::backward_forward) {
    if (const auto* s = std::get_if<SemiParamFit>(&model)) nb.emplace(s->backward_spec(), blocks.k);
    else nb.emplace(forward_spec(model), blocks.k);
  }
  auto margin_at = [&](int lag, bool backward) -> DeltaLaplaceParams {
    if (const auto* s = std::get_if<SemiParamFit>(&model))
      return (backward ? s->backward_nuisance : s->forward_nuisance)[static_cast<std::size_t>(lag - 1)];
    return std::get<ParamFit>(model).lag_params(lag);
  };
  const auto table = detail::make_lag_table(blocks);
  auto side = [&](const std::vector<detail::LagData>& lags, const LagNorming& nm, bool backward) {
    std::vector<double> z;
    for (std::size_t i = 0; i < lags.size(); ++i) {
      const int lag = static_cast<int>(i + 1);
      TauRow r;
      r.lag = backward ? -lag : lag;
      r.n = lags[i].x0.size();
      if (r.n < 3) {
        r.skipped = true;
        out.tau.push_back(r);
        continue;
      }
      detail::lag_residuals(lags[i], nm, lag, z);
      r.tau = kendall_tau(lags[i].x0, z);
      out.tau.push_back(r);
      std::sort(z.begin(), z.end());
      const auto p = margin_at(lag, backward);
      const double n1 = static_cast<double>(z.size()) + 1;
      for (std::size_t j = 0; j < z.size(); ++j)
        out.qq.push_back({r.lag, z[j], dl_quantile(static_cast<double>(j + 1) / n1, p)});
    }
  };
  side(table.forward, nf, false);
  if (nb) side(table.backward, *nb, true);
  return out;
}

}  // namespace condex
