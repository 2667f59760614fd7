#include <catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <vector>

#include "condex/resample.hpp"

using namespace condex;
using Catch::Approx;

namespace {

RawSeries index_series(std::vector<std::size_t> lengths) {
  RawSeries s;
  for (auto L : lengths) {
    const std::size_t b = s.values.size();
    for (std::size_t i = 0; i < L; ++i) s.values.push_back(static_cast<double>(s.values.size()));
    s.segments.push_back({b, b + L});
  }
  return s;
}

}  // namespace

TEST_CASE("a block as long as the segment reproduces it") {
  const auto s = index_series({30});
  for (auto kind : {BootstrapKind::block, BootstrapKind::moving_block}) {
    const auto r = resample_series(s, {kind, 30, 4});
    CHECK(r.values == s.values);
  }
}

TEST_CASE("resampling keeps lengths and segments and stays inside each segment") {
  const auto s = index_series({23, 40, 17});
  for (auto kind : {BootstrapKind::block, BootstrapKind::moving_block, BootstrapKind::stationary})
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
      const auto r = resample_series(s, {kind, 7, 5}, rep);
      REQUIRE(r.values.size() == s.values.size());
      CHECK(r.segments == s.segments);
      for (const auto& seg : r.segments)
        for (std::size_t t = seg.begin; t < seg.end; ++t) {
          CHECK(r.values[t] >= static_cast<double>(seg.begin));
          CHECK(r.values[t] < static_cast<double>(seg.end));
        }
    }
}

TEST_CASE("moving-block starts are uniform over windows") {
  const auto s = index_series({20});
  std::vector<double> count(16, 0);
  const int R = 20000;
  for (int rep = 0; rep < R; ++rep) {
    const auto r = resample_series(s, {BootstrapKind::moving_block, 5, 6}, static_cast<std::uint64_t>(rep));
    for (std::size_t j = 0; j < 20; j += 5) ++count[static_cast<std::size_t>(r.values[j])];
  }
  const double e = 4.0 * R / 16;
  double chi2 = 0;
  for (double c : count) chi2 += (c - e) * (c - e) / e;
  CHECK(chi2 < 37.70);  // 15 df, 0.1%
}

TEST_CASE("stationary block lengths have the requested mean") {
  CounterRng rng(7, 0);
  double total = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) total += static_cast<double>(sample_stationary_block_length(10, rng));
  CHECK(total / n == Approx(10).margin(0.1));
  CHECK(sample_stationary_block_length(1, rng) == 1);
}

TEST_CASE("bootstrap standard errors") {
  SECTION("a constant estimator has zero spread") {
    const auto s = index_series({100});
    const std::function<double(const RawSeries&)> f = [](const RawSeries&) { return 3.0; };
    const auto r = bootstrap_estimate(s, {BootstrapKind::moving_block, 10, 1}, 50, f);
    CHECK(r.std_error == 0);
    CHECK(r.ci_low == 3);
    CHECK(r.ci_high == 3);
    REQUIRE(r.warnings.size() == 1);
  }
  SECTION("iid mean matches sigma / sqrt(n)") {
    CounterRng rng(8, 0);
    std::vector<double> x(2000);
    for (auto& v : x) v = standard_normal(rng);
    const auto s = RawSeries::single(x);
    const std::function<double(const RawSeries&)> f = [](const RawSeries& r) { return mean(r.values); };
    const auto r = bootstrap_estimate(s, {BootstrapKind::moving_block, 10, 2}, 400, f, 2);
    CHECK(r.std_error == Approx(1 / std::sqrt(2000.0)).epsilon(0.2));
    CHECK(r.ci_low < mean(x));
    CHECK(r.ci_high > mean(x));
    CHECK(r.warnings.empty());
  }
}

TEST_CASE("bootstrap is deterministic for a seed and thread count free") {
  const auto s = index_series({200});
  const std::function<double(const RawSeries&)> f = [](const RawSeries& r) { return r.values[0] + r.values[100]; };
  const auto a = bootstrap_estimate(s, {BootstrapKind::stationary, 8, 3}, 60, f);
  const auto b = bootstrap_estimate(s, {BootstrapKind::stationary, 8, 3}, 60, f, 3);
  CHECK(a.replicates == b.replicates);
  CHECK(bootstrap_estimate(s, {BootstrapKind::stationary, 8, 4}, 60, f).replicates != a.replicates);
}

TEST_CASE("failed replicates are dropped, too many is an error") {
  const auto s = index_series({200});
  int calls = 0;
  const std::function<double(const RawSeries&)> some = [&](const RawSeries&) {
    if (++calls % 10 == 0) throw InputError("bad replicate");
    return 1.0;
  };
  const auto r = bootstrap_estimate(s, {BootstrapKind::moving_block, 10, 1}, 100, some);
  CHECK(r.dropped == 10);
  CHECK(r.replicates.size() == 90);
  const std::function<double(const RawSeries&)> many = [](const RawSeries& x) {
    return x.values[0] < 100 ? std::nan("") : 1.0;
  };
  CHECK_THROWS_AS(bootstrap_estimate(s, {BootstrapKind::moving_block, 10, 1}, 100, many), NumericalError);
}

TEST_CASE("bootstrap input errors") {
  const auto s = index_series({10, 5});
  CHECK_THROWS_AS(resample_series(s, {BootstrapKind::moving_block, 6, 1}), InputError);
  CHECK_THROWS_AS(resample_series(s, {BootstrapKind::moving_block, 0, 1}), InputError);
  const std::function<double(const RawSeries&)> f = [](const RawSeries&) { return 0.0; };
  CHECK_THROWS_AS(bootstrap_estimate(s, {BootstrapKind::block, 2, 1}, 49, f), InputError);
  CHECK_THROWS_AS(parse_bootstrap_kind("wild"), InputError);
  CHECK(parse_bootstrap_kind("stationary") == BootstrapKind::stationary);
}
