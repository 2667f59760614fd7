#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "condex/rng.hpp"
#include "condex/stats.hpp"

using namespace condex;
using Catch::Approx;

namespace {

// O(n^2) tau-b, the oracle for the merge-sort version.
double tau_b_naive(const std::vector<double>& x, const std::vector<double>& y) {
  double conc = 0, disc = 0, tx = 0, ty = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const double a = x[i] - x[j], b = y[i] - y[j];
      if (a == 0 && b == 0) continue;
      if (a == 0) ++tx;
      else if (b == 0) ++ty;
      else if (a * b > 0) ++conc;
      else ++disc;
    }
  return (conc - disc) / std::sqrt((conc + disc + tx) * (conc + disc + ty));
}

}  // namespace

TEST_CASE("kendall tau matches the quadratic definition with and without ties") {
  CounterRng rng(11, 0);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> x, y;
    for (int i = 0; i < 300; ++i) {
      const double a = std::floor(rng.uniform() * (rep % 2 ? 10 : 1e6));
      x.push_back(a);
      y.push_back(std::floor(a / 3 + rng.uniform() * (rep % 3 ? 5 : 1e6)));
    }
    CHECK(kendall_tau(x, y) == Approx(tau_b_naive(x, y)).margin(1e-12));
  }
}

TEST_CASE("kendall tau of monotone pairings") {
  std::vector<double> x{1, 2, 3, 4, 5}, up{2, 4, 6, 8, 10}, down{5, 4, 3, 2, 1};
  CHECK(kendall_tau(x, up) == Approx(1.0));
  CHECK(kendall_tau(x, down) == Approx(-1.0));
}

TEST_CASE("normal quantile inverts the cdf") {
  for (double p : {1e-10, 0.001, 0.2, 0.5, 0.8, 0.999, 1 - 1e-10})
    CHECK(normal_cdf(normal_quantile(p)) == Approx(p).epsilon(1e-12));
}

TEST_CASE("order statistic quantile picks the ceil(qN)-th value") {
  std::vector<double> s{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  CHECK(order_statistic_quantile(s, 0.95) == 10);
  CHECK(order_statistic_quantile(s, 0.9) == 9);
  CHECK(order_statistic_quantile(s, 0.51) == 6);
}

TEST_CASE("average ranks share ties") {
  std::vector<double> x{3, 1, 3, 2};
  const auto r = average_ranks(x);
  CHECK(r == std::vector<double>{3.5, 1, 3.5, 2});
}

TEST_CASE("uniform draws stay inside (0,1) and substreams differ") {
  CounterRng a(5, 0), b(5, 1);
  int same = 0;
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform(), v = b.uniform();
    CHECK(u > 0);
    CHECK(u < 1);
    same += u == v;
  }
  CHECK(same == 0);
}

TEST_CASE("gamma variates have the right mean and variance") {
  CounterRng rng(3, 9);
  for (double shape : {0.3, 1.0, 2.5}) {
    std::vector<double> x(200000);
    for (auto& v : x) v = gamma_variate(shape, rng);
    CHECK(mean(x) == Approx(shape).epsilon(0.02));
    CHECK(variance(x) == Approx(shape).epsilon(0.04));
  }
}
