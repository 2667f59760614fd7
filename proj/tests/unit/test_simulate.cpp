#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "condex/simulate.hpp"

using namespace condex;
using Catch::Approx;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Hand-built semi-parametric fit; `fwd` and `bwd` are row-major rows x k.
SemiParamFit hand_fit(double alpha, double beta, int k, std::vector<double> fwd, std::vector<double> bwd = {}) {
  SemiParamFit f;
  f.forward = {NormingModel::model1, GeometricAlpha{alpha}, beta, k};
  f.u = 1;
  f.k = k;
  f.residuals.k = k;
  f.residuals.forward = std::move(fwd);
  const std::size_t rows = f.residuals.forward.size() / static_cast<std::size_t>(k);
  f.residuals.conditioning.assign(rows, 2.0);
  if (!bwd.empty()) {
    f.backward = f.forward;
    f.residuals.has_backward = true;
    f.residuals.backward = std::move(bwd);
  }
  f.forward_nuisance.assign(static_cast<std::size_t>(k), {0, 1, 1});
  f.backward_nuisance = f.forward_nuisance;
  return f;
}

// Random residual rows for a backward-forward fit.
SemiParamFit random_bf_fit(int k, std::size_t rows, std::uint64_t seed) {
  CounterRng rng(seed, 0);
  std::vector<double> fwd, bwd;
  for (std::size_t r = 0; r < rows * static_cast<std::size_t>(k); ++r) {
    fwd.push_back(dl_sample({0, 1, 1.3}, rng));
    bwd.push_back(dl_sample({0, 1, 1.3}, rng));
  }
  return hand_fit(0.6, 0.3, k, fwd, bwd);
}

}  // namespace

TEST_CASE("forward blocks start at v plus a unit exponential") {
  const FittedConditionalModel m{hand_fit(0.5, 0.2, 2, {0.1, 0.2})};
  SimConfig c;
  c.n_samples = 200000;
  c.v = 3;
  c.d = 1;
  const auto b = forward_simulate(m, c);
  std::vector<double> e;
  for (std::size_t i = 0; i < b.rows(); ++i) e.push_back(b.row(i)[0] - 3);
  CHECK(mean(e) == Approx(1).margin(0.01));
  CHECK(ks_statistic(e, [](double x) { return x < 0 ? 0.0 : 1 - std::exp(-x); }) < ks_critical_value(e.size(), 0.01));
}

TEST_CASE("a single residual row gives deterministic lags") {
  const FittedConditionalModel m{hand_fit(0.5, 0, 2, {0.1, -0.2})};
  SimConfig c;
  c.n_samples = 100;
  c.v = 1;
  c.d = 3;
  const auto b = forward_simulate(m, c);
  for (std::size_t i = 0; i < b.rows(); ++i) {
    const auto r = b.row(i);
    CHECK(r[1] == Approx(0.5 * r[0] + 0.1).margin(1e-12));
    CHECK(r[2] == Approx(0.25 * r[0] - 0.2).margin(1e-12));
  }
}

TEST_CASE("simulation is reproducible and independent of the thread count") {
  const FittedConditionalModel m{random_bf_fit(4, 300, 2)};
  SimConfig c;
  c.n_samples = 5000;
  c.v = 2;
  c.d = 5;
  c.seed = 77;
  const auto a = forward_simulate(m, c);
  const auto b = forward_simulate(m, c);
  c.threads = 4;
  const auto t = forward_simulate(m, c);
  CHECK(a.values == b.values);
  CHECK(a.values == t.values);
  const auto p1 = aloe_estimate(m, c);
  c.threads = 1;
  const auto p2 = aloe_estimate(m, c);
  CHECK(p1.p_hat == p2.p_hat);
  c.seed = 78;
  CHECK(forward_simulate(m, c).values != a.values);
}

TEST_CASE("empirical draws pick rows uniformly and skip truncated rows") {
  // rows 0..4 complete, row 5 lacks lag 2
  std::vector<double> fwd{0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5, kNaN};
  const FittedConditionalModel m{hand_fit(0.5, 0.2, 2, fwd)};
  ConditionalSimulator sim(m, ResidualSource::empirical_joint, 0, 2);
  sim.prepare(0, 2);
  sim.prepare(0, 1);
  CounterRng rng(3, 0);
  const int n = 60000;
  std::vector<double> count(6, 0), count1(6, 0);
  double z[3];
  for (int i = 0; i < n; ++i) {
    sim.draw(0, 2, rng, nullptr, z);
    CHECK(z[0] == z[1]);
    ++count[static_cast<std::size_t>(z[0])];
    sim.draw(0, 1, rng, nullptr, z);
    ++count1[static_cast<std::size_t>(z[0])];
  }
  CHECK(count[5] == 0);
  double chi2 = 0, chi2b = 0;
  for (int r = 0; r < 5; ++r) chi2 += std::pow(count[static_cast<std::size_t>(r)] - n / 5.0, 2) / (n / 5.0);
  for (int r = 0; r < 6; ++r) chi2b += std::pow(count1[static_cast<std::size_t>(r)] - n / 6.0, 2) / (n / 6.0);
  CHECK(chi2 < 18.47);   // 4 df, 0.1%
  CHECK(chi2b < 20.52);  // 5 df, 0.1%
  CHECK_THROWS_AS(sim.draw(0, 3, rng, nullptr, z), InputError);
}

TEST_CASE("parametric draws follow the fitted curves") {
  ParamFit p;
  p.forward = {NormingModel::model1, GeometricAlpha{0.6}, 0.2, 3};
  p.curves = {CurveFamily::param1, 0.3, 1, 0.5, 1, 0.5, 1};
  p.rho = 0.5;
  p.u = 2;
  p.k = 3;
  p.backward_forward = true;
  const FittedConditionalModel m{p};
  CounterRng rng(4, 0);
  const int n = 100000;
  std::vector<std::vector<double>> lag(3);
  for (int i = 0; i < n; ++i) {
    const auto z = draw_residual_vector(m, {1, 3}, rng);
    REQUIRE(z.size() == 4);
    for (int l = 0; l < 3; ++l) lag[static_cast<std::size_t>(l)].push_back(z[static_cast<std::size_t>(l) + 1]);
  }
  for (int l = 1; l <= 3; ++l) {
    const auto q = p.lag_params(l);
    const auto& x = lag[static_cast<std::size_t>(l - 1)];
    CHECK(mean(x) == Approx(q.mu).margin(0.02));
    CHECK(ks_statistic(x, [&](double z) { return dl_cdf(z, q); }) < ks_critical_value(x.size(), 0.001));
  }
  CHECK_THROWS_AS(draw_residual_vector(m, {0, 2}, rng, ResidualSource::empirical_joint), InputError);
}

TEST_CASE("ALOE") {
  const FittedConditionalModel m{random_bf_fit(4, 500, 5)};
  SimConfig c;
  c.n_samples = 20000;
  c.v = 3;
  SECTION("d = 1 is exact") {
    c.d = 1;
    const auto a = aloe_estimate(m, c);
    CHECK(a.p_hat == Approx(0.5 * std::exp(-3)).epsilon(1e-14));
    CHECK(a.std_error == 0);
  }
  SECTION("estimate sits between the union bounds") {
    for (int d : {2, 3, 5}) {
      c.d = d;
      const auto a = aloe_estimate(m, c);
      CHECK(a.p_hat >= a.union_bound / d);
      CHECK(a.p_hat <= a.union_bound);
      CHECK(a.s_histogram[0] == 0);
      std::size_t total = 0;
      for (auto h : a.s_histogram) total += h;
      CHECK(total == c.n_samples);
    }
  }
  SECTION("variance bound holds for d = 1") {
    c.d = 1;
    c.n_samples = 1000;
    const BlockFunctional g = [&](std::span<const double> b) { return b[0] > c.v ? 1.0 : 0.0; };
    const auto r = variance_bound_check(m, c, 10, g);
    CHECK_FALSE(r.violated);
    CHECK(r.sample_variance == Approx(0).margin(1e-30));
  }
  SECTION("forward-only fits cannot run ALOE beyond d = 1") {
    const FittedConditionalModel f{hand_fit(0.5, 0.2, 2, {0.1, 0.2})};
    c.d = 2;
    CHECK_THROWS_AS(aloe_estimate(f, c), InputError);
  }
}

TEST_CASE("configuration errors") {
  const FittedConditionalModel m{hand_fit(0.5, 0.2, 2, {0.1, 0.2})};
  SimConfig c;
  c.v = 0.5;  // below u = 1
  CHECK_THROWS_AS(forward_simulate(m, c), InputError);
  c.v = 2;
  c.d = 4;  // beyond k + 1
  CHECK_THROWS_AS(forward_simulate(m, c), InputError);
  c.d = 2;
  c.source = ResidualSource::parametric;
  CHECK_THROWS_AS(forward_simulate(m, c), InputError);
  CHECK_THROWS_AS(ConditionalSimulator(m, ResidualSource::empirical_joint, 1, 1), InputError);
}
