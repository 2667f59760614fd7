#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "condex/fit.hpp"
#include "condex/rng.hpp"

using namespace condex;
using Catch::Approx;

namespace {

// Blocks drawn straight from a Model 1 geometric law with iid residuals.
ExceedanceBlockSet model1_blocks(double alpha, double beta, const DeltaLaplaceParams& z, int k, std::size_t n,
                                 std::uint64_t seed) {
  CounterRng rng(seed, 0);
  ExceedanceBlockSet b{laplace_quantile(0.95), k, Direction::forward, {}};
  for (std::size_t r = 0; r < n; ++r) {
    ExceedanceBlock blk;
    blk.t = r;
    blk.x = b.u + standard_exponential(rng);
    for (int i = 1; i <= k; ++i) blk.trailing.push_back(std::pow(alpha, i) * blk.x + std::pow(blk.x, beta) * dl_sample(z, rng));
    b.blocks.push_back(std::move(blk));
  }
  return b;
}

// Gaussian AR(1) mapped to Laplace margins.
LaplaceSeries laplace_ar1(double rho, std::size_t n, std::uint64_t seed) {
  CounterRng rng(seed, 0);
  std::vector<double> v(n);
  double y = standard_normal(rng);
  for (auto& x : v) {
    x = laplace_quantile(normal_cdf(y));
    y = rho * y + std::sqrt(1 - rho * rho) * standard_normal(rng);
  }
  return LaplaceSeries::single(std::move(v));
}

FitOptions quick_options() {
  FitOptions o;
  o.restarts = 1;
  o.seed = 5;
  return o;
}

}  // namespace

TEST_CASE("extract_blocks") {
  SECTION("a lone exceedance at the last index leaves no forward block") {
    auto s = LaplaceSeries::single({0.1, 0.2, -0.3, 5.0});
    try {
      extract_blocks(s, 1, 2, Direction::forward);
      FAIL("expected InputError");
    } catch (const InputError& e) {
      CHECK(std::string(e.what()).find("1 exceedances") != std::string::npos);
    }
    CHECK(extract_blocks(s, 1, 2, Direction::backward_forward).size() == 1);
  }
  SECTION("blocks overlap and are truncated at segment ends") {
    LaplaceSeries s{{3, 4, 0, 5, 1, 2}, {{0, 4}, {4, 6}}};
    const auto b = extract_blocks(s, 2.5, 2, Direction::forward);
    REQUIRE(b.size() == 2);
    CHECK(b.blocks[0].trailing == std::vector<double>{4, 0});
    CHECK(b.blocks[1].trailing == std::vector<double>{0, 5});
    const auto bf = extract_blocks(s, 2.5, 2, Direction::backward_forward);
    REQUIRE(bf.size() == 3);
    CHECK(bf.blocks[2].trailing.empty());
    CHECK(bf.blocks[2].leading == std::vector<double>{0, 4});
  }
  SECTION("about 5% of points start a block at the 95% Laplace quantile") {
    const auto s = laplace_ar1(0, 100000, 1);
    const auto b = extract_blocks(s, laplace_quantile(0.95), 3, Direction::forward);
    CHECK(b.size() == Approx(5000).margin(250));
  }
  CHECK_THROWS_AS(extract_blocks(LaplaceSeries::single({1, 2}), 0, 1, Direction::forward), InputError);
  CHECK_THROWS_AS(extract_blocks(LaplaceSeries::single({1, 2}), 1, 0, Direction::forward), InputError);
}

TEST_CASE("composite likelihood by hand") {
  ExceedanceBlockSet b{1, 1, Direction::forward, {{0, 2.0, {0.7}, {}}}};
  const NormingSpec s{NormingModel::model1, GeometricAlpha{0}, 0, 1};
  const std::vector<DeltaLaplaceParams> nu{{0, 1, 1}};
  CHECK(composite_nll(b, s, nu) == Approx(std::log(2.0) + 0.7));
  const double one = composite_nll(b, s, nu);
  b.blocks.push_back(b.blocks[0]);
  CHECK(composite_nll(b, s, nu) == Approx(2 * one));
  CHECK_THROWS_AS(composite_nll(b, s, {}), InputError);
}

TEST_CASE("semi-parametric fit recovers a Model 1 geometric law") {
  // a single fit has replication sd near 0.016 for alpha here, so the band
  // applies to the mean of five independent fits
  std::vector<double> as, bs;
  for (std::uint64_t seed = 21; seed < 26; ++seed) {
    const auto f = fit_semiparametric(model1_blocks(0.7, 0.3, {0, 1, 1.5}, 3, 2000, seed), quick_options());
    CHECK(f.meta.converged);
    as.push_back(std::get<GeometricAlpha>(f.forward.alpha).alpha);
    bs.push_back(f.forward.beta);
  }
  CHECK(mean(as) == Approx(0.7).margin(0.03));
  CHECK(mean(bs) == Approx(0.3).margin(0.08));
}

TEST_CASE("properties of a semi-parametric fit") {
  const auto b = model1_blocks(0.7, 0.3, {0, 1, 1.5}, 3, 2000, 11);
  const auto f = fit_semiparametric(b, quick_options());
  const double a = std::get<GeometricAlpha>(f.forward.alpha).alpha;
  CHECK(f.meta.converged);
  CHECK(f.meta.warnings.empty());

  SECTION("the optimum beats nearby perturbations") {
    CounterRng rng(12, 0);
    for (int i = 0; i < 200; ++i) {
      NormingSpec p = f.forward;
      p.alpha = GeometricAlpha{a * (1 + 0.05 * (2 * rng.uniform() - 1))};
      p.beta = f.forward.beta * (1 + 0.05 * (2 * rng.uniform() - 1));
      const auto nu = profile_nuisance(b, p, WorkingMargin::delta_laplace);
      CHECK(composite_nll(b, p, nu) >= f.meta.nll - 1e-6);
    }
  }
  SECTION("profiling at the optimum reproduces the stored nuisance") {
    const auto nu = profile_nuisance(b, f.forward, WorkingMargin::delta_laplace);
    REQUIRE(nu.size() == f.forward_nuisance.size());
    for (std::size_t i = 0; i < nu.size(); ++i) {
      CHECK(nu[i].mu == Approx(f.forward_nuisance[i].mu).margin(1e-8));
      CHECK(nu[i].sigma == Approx(f.forward_nuisance[i].sigma).margin(1e-8));
      CHECK(nu[i].delta == Approx(f.forward_nuisance[i].delta).margin(1e-8));
    }
    CHECK(composite_nll(b, f.forward, nu) == Approx(f.meta.nll).margin(1e-8));
  }
  SECTION("stored residuals rebuild the data") {
    const LagNorming nm(f.forward, b.k);
    REQUIRE(f.residuals.rows() == b.size());
    double worst = 0;
    for (std::size_t r = 0; r < b.size(); ++r)
      for (int i = 1; i <= b.k; ++i) {
        const double x = b.blocks[r].x;
        const double back = nm.location(i, x) + nm.scale(i, x) * f.residuals.fwd(r, i);
        worst = std::max(worst, std::abs(back - b.blocks[r].trailing[static_cast<std::size_t>(i - 1)]));
      }
    CHECK(worst < 1e-9);
  }
  SECTION("residuals are nearly independent of the conditioning value") {
    const auto d = residual_diagnostics(FittedConditionalModel{f}, b);
    REQUIRE(d.tau.size() == 3);
    for (const auto& row : d.tau) CHECK(std::abs(row.tau) < 0.05);
    CHECK(d.qq.size() == 3 * b.size());
  }
}

TEST_CASE("Gaussian and delta-Laplace working margins agree on Gaussian residuals") {
  const auto b = model1_blocks(0.6, 0.2, {0, std::sqrt(2.0), 2}, 3, 2000, 13);
  auto o = quick_options();
  const auto dl = fit_semiparametric(b, o);
  o.margin = WorkingMargin::gaussian;
  const auto ga = fit_semiparametric(b, o);
  CHECK(std::get<GeometricAlpha>(dl.forward.alpha).alpha ==
        Approx(std::get<GeometricAlpha>(ga.forward.alpha).alpha).margin(0.02));
  CHECK(dl.forward.beta == Approx(ga.forward.beta).margin(0.05));
  for (const auto& p : ga.forward_nuisance) CHECK(p.delta == 2);
}

TEST_CASE("few blocks produce a warning") {
  const auto b = model1_blocks(0.5, 0.2, {0, 1, 1}, 2, 15, 14);
  const auto f = fit_semiparametric(b, quick_options());
  REQUIRE(f.meta.warnings.size() == 1);
  CHECK(f.meta.warnings[0].find("15") != std::string::npos);
}

TEST_CASE("copula stage") {
  // residuals independent across lags, margins on the curves
  const ResidualCurves c{CurveFamily::param1, 0.1, 1, 0.5, 1, 0.5, 1};
  const NormingSpec spec{NormingModel::model1, GeometricAlpha{0.6}, 0.2, 1};
  CounterRng rng(15, 0);
  ExceedanceBlockSet b{laplace_quantile(0.95), 4, Direction::forward, {}};
  for (int r = 0; r < 3000; ++r) {
    ExceedanceBlock blk;
    blk.x = b.u + standard_exponential(rng);
    for (int i = 1; i <= 4; ++i)
      blk.trailing.push_back(norm_location(spec, blk.x, i) + norm_scale(spec, blk.x, i) * dl_sample(c.at(i, 0.2, b.u), rng));
    b.blocks.push_back(std::move(blk));
  }
  const double rho = fit_copula_rho(b, spec, c);
  CHECK(std::abs(rho) < 0.03);

  const LagNorming nm(spec, 4);
  const auto scores = detail::copula_scores(b, nm, c, spec.beta);
  std::vector<double> grid;
  for (double r = -0.95; r <= 0.95; r += 0.05) grid.push_back(detail::copula_nll(scores, r, 4));
  int turns = 0;
  for (std::size_t i = 1; i + 1 < grid.size(); ++i) turns += grid[i] < grid[i - 1] && grid[i] < grid[i + 1];
  CHECK(turns == 1);
}

TEST_CASE("parametric fit runs end to end on a short AR(1)") {
  const auto s = laplace_ar1(0.7, 30000, 16);
  FitConfig cfg;
  cfg.k = 3;
  cfg.parametric = true;
  cfg.options = quick_options();
  const auto m = fit_model(s, laplace_quantile(0.95), cfg);
  const auto& p = std::get<ParamFit>(m);
  CHECK_NOTHROW(p.curves.validate());
  CHECK(p.rho > -1);
  CHECK(p.rho < 1);
  CHECK(std::get<GeometricAlpha>(p.forward.alpha).alpha > 0.3);
}

TEST_CASE("parameter stability scan") {
  const auto s = laplace_ar1(0.7, 20000, 17);
  FitConfig cfg;
  cfg.k = 2;
  cfg.options = quick_options();
  CHECK(parameter_stability_scan(s, {}, cfg).empty());
  const auto rows = parameter_stability_scan(s, {0.9, 0.95, 0.99999}, cfg);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].ok);
  CHECK(rows[1].ok);
  CHECK(rows[0].alpha.size() == 2);
  CHECK_FALSE(rows[2].ok);
  CHECK_FALSE(rows[2].message.empty());
  CHECK_THROWS_AS(parameter_stability_scan(s, {0.95, 0.9}, cfg), InputError);
}
