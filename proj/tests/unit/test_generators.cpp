#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "condex/generators.hpp"

using namespace condex;
using Catch::Approx;

namespace {

double acf(const std::vector<double>& x, std::size_t lag) {
  const double m = mean(x);
  double num = 0, den = 0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    den += (x[t] - m) * (x[t] - m);
    if (t + lag < x.size()) num += (x[t] - m) * (x[t + lag] - m);
  }
  return num / den;
}

// Joint survival of the inverted logistic pair with Exp(1) margins.
double joint_survival(double x, double y, double g) {
  return std::exp(-std::pow(std::pow(x, 1 / g) + std::pow(y, 1 / g), g));
}

}  // namespace

TEST_CASE("AR(2) innovation variance by hand") {
  CHECK(ChainGenerator::ar2_innovation_variance(0.6, 0.3) == Approx(0.241429).margin(1e-6));
  CHECK(ChainGenerator::ar2_innovation_variance(0, 0) == 1);
}

TEST_CASE("exact margin maps") {
  CHECK(gaussian_to_laplace(0) == Approx(0).margin(1e-15));
  CHECK(gaussian_to_laplace(normal_quantile(0.95)) == Approx(laplace_quantile(0.95)).margin(1e-10));
  CHECK(gaussian_to_laplace(-9) == Approx(std::log(2 * normal_cdf(-9))).epsilon(1e-10));
  CHECK(exponential_to_laplace(std::log(2.0)) == Approx(0).margin(1e-15));
  CHECK(exponential_to_laplace(-std::log(0.05)) == Approx(laplace_quantile(0.95)).margin(1e-12));
  CHECK(exponential_to_laplace(1e-3) == Approx(laplace_quantile(1 - std::exp(-1e-3))).margin(1e-9));
}

TEST_CASE("generated chains have standard Laplace margins") {
  const auto iid = generate({GeneratorKind::gauss_ar1, 0, 1, 0, 0, 1000000, 2});
  CHECK(ks_statistic(iid.values, laplace_cdf) < ks_critical_value(iid.values.size(), 0.01));
  CHECK(std::abs(acf(iid.values, 1)) < 0.005);
  // dependence inflates KS fluctuations, so the bound is looser here
  const auto ar1 = generate({GeneratorKind::gauss_ar1, 0.7, 1, 0, 0, 1000000, 3});
  CHECK(ks_statistic(ar1.values, laplace_cdf) < 0.006);
  const auto ar2 = generate({GeneratorKind::gauss_ar2, 0, 1, 0.6, 0.3, 1000000, 4});
  CHECK(ks_statistic(ar2.values, laplace_cdf) < 0.01);
  const auto il = generate({GeneratorKind::inv_logistic, 0, 0.5, 0, 0, 200000, 5});
  CHECK(ks_statistic(il.values, laplace_cdf) < 0.01);
}

TEST_CASE("latent autocorrelations") {
  GeneratorSpec s{GeneratorKind::gauss_ar1, 0.7, 1, 0, 0, 1000000, 6, false};
  const auto a = generate(s).values;
  for (std::size_t i = 1; i <= 4; ++i) CHECK(acf(a, i) == Approx(std::pow(0.7, static_cast<double>(i))).margin(0.01));
  s = {GeneratorKind::gauss_ar2, 0, 1, 0.6, 0.3, 1000000, 7, false};
  const auto b = generate(s).values;
  std::vector<double> r{1, 0.6 / 0.7};
  for (std::size_t i = 2; i <= 5; ++i) r.push_back(0.6 * r[i - 1] + 0.3 * r[i - 2]);
  for (std::size_t i = 1; i <= 5; ++i) CHECK(acf(b, i) == Approx(r[i]).margin(0.01));
  CHECK(variance(b) == Approx(1).margin(0.03));
}

TEST_CASE("inverted logistic transition") {
  for (double g : {0.3, 0.5, 0.8})
    for (double x : {0.2, 1.0, 4.0})
      for (double y : {0.1, 0.7, 2.0, 6.0}) {
        // S(y | x) = -d/dx joint survival / e^{-x}
        // five-point stencil
        const double h = 1e-3 * x;
        auto J = [&](double t) { return joint_survival(t, y, g); };
        const double d = -(-J(x + 2 * h) + 8 * J(x + h) - 8 * J(x - h) + J(x - 2 * h)) / (12 * h);
        const double s = std::exp(inv_logistic_log_survival(y, x, g));
        CHECK(s == Approx(d / std::exp(-x)).epsilon(1e-7));
        CHECK(std::exp(inv_logistic_log_survival(inv_logistic_transition(x, s, g), x, g)) == Approx(s).epsilon(1e-9));
      }
  CHECK(inv_logistic_log_survival(0, 1, 0.5) == 0);
}

TEST_CASE("oracle estimates") {
  const double v = laplace_quantile(0.95);
  const auto iid = oracle_conditional_probability({GeneratorKind::gauss_ar1, 0, 1, 0, 0, 0, 8},
                                                  {FunctionalKind::chi, v, 1}, 1000000);
  CHECK(iid.estimate == Approx(0.5 * std::exp(-v)).margin(4 * iid.std_error));
  CHECK(iid.std_error == Approx(std::sqrt(0.05 * 0.95 / 50000)).epsilon(0.25));

  double prev = 1;
  for (double q : {0.9, 0.97, 0.99}) {
    const auto r = oracle_conditional_probability({GeneratorKind::inv_logistic, 0, 0.5, 0, 0, 0, 9},
                                                  {FunctionalKind::chi, laplace_quantile(q), 1}, 1000000);
    CHECK(r.estimate < prev);
    prev = r.estimate;
  }
  CHECK_THROWS_AS(oracle_conditional_probability({}, {FunctionalKind::chi, v, 1}, 99), InputError);
}

TEST_CASE("generator input errors") {
  CHECK_THROWS_AS(generate({GeneratorKind::gauss_ar1, 1.0}), InputError);
  CHECK_THROWS_AS(generate({GeneratorKind::inv_logistic, 0, 0}), InputError);
  CHECK_THROWS_AS(generate({GeneratorKind::gauss_ar2, 0, 1, 0.8, 0.3}), InputError);
  CHECK_THROWS_AS(parse_generator_kind("ar9"), InputError);
}
