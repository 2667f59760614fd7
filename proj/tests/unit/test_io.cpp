#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <vector>

#include "condex/io.hpp"

using namespace condex;
using Catch::Approx;

namespace {

SemiParamFit sample_fit(bool backward) {
  SemiParamFit f;
  f.forward = {NormingModel::model1, ARCorr2{0.8, 0.2}, 0.25, 3};
  if (backward) {
    f.backward = NormingSpec{NormingModel::model1, GeometricAlpha{0.4}, 0.1, 3};
    f.symmetric = false;
  }
  f.u = 2.3;
  f.k = 3;
  f.forward_nuisance = {{0.1, 1.2, 1.3}, {0.2, 1.1, 1.4}, {0.3, 1.0, 1.5}};
  f.backward_nuisance = f.forward_nuisance;
  f.meta = {123.456, 789, 42, true, {"a warning"}};
  f.residuals.k = 3;
  f.residuals.has_backward = backward;
  f.residuals.conditioning = {2.5, 3.1};
  f.residuals.forward = {0.1 / 3, -1e-17, 2, 1.5, std::nan(""), std::nan("")};
  if (backward) f.residuals.backward = {1, 2, 3, 4, 5, std::nan("")};
  return f;
}

}  // namespace

TEST_CASE("sha256 of a known string") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("marginal model round trip") {
  const MarginalModel m(3, 1.5, 0.1, 0.1, {-1, 0.5, 2, 3}, 5, 0.2, std::nan(""));
  const auto j = json::parse(to_json(m).dump());
  CHECK(j.at("gpd_shape_se").is_null());
  const auto b = marginal_from_json(j);
  CHECK(b.threshold() == 3);
  CHECK(b.sigma() == 1.5);
  CHECK(b.xi() == 0.1);
  CHECK(b.sigma_se() == 0.2);
  CHECK(std::isnan(b.xi_se()));
  CHECK(b.sorted_body() == m.sorted_body());
  for (double y : {-2.0, 0.7, 3.0, 8.0}) CHECK(b.to_laplace(y) == m.to_laplace(y));
  auto bad = j;
  bad["type"] = "other";
  CHECK_THROWS_AS(marginal_from_json(bad), InputError);
  bad = j;
  bad.erase("gpd_scale");
  CHECK_THROWS_AS(marginal_from_json(bad), InputError);
  bad = j;
  bad["gpd_scale"] = "wide";
  CHECK_THROWS_AS(marginal_from_json(bad), InputError);
}

TEST_CASE("structures round trip exactly") {
  PTAlpha p = pt_from_ar2(0.6, 0.3);
  for (const AlphaStructure& s : std::vector<AlphaStructure>{FreeAlpha{{0.9, 0.5, -0.1}}, GeometricAlpha{0.37},
                                                             ARCorr2{0.7, -0.2}, ARCorr3{0.5, 0.1, 0.05}, p}) {
    const auto back = structure_from_json(json::parse(to_json(s).dump()));
    CHECK(alpha_sequence(back, 3) == alpha_sequence(s, 3));
    CHECK(to_json(back) == to_json(s));
  }
  CHECK_THROWS_AS(structure_from_json(json{{"kind", "spline"}}), InputError);
  CHECK_THROWS_AS(structure_from_json(json{{"kind", "geometric"}, {"alpha", 1.5}}), InputError);
}

TEST_CASE("semi-parametric fit round trip") {
  for (bool backward : {false, true}) {
    const auto f = sample_fit(backward);
    const auto text = to_json(FittedConditionalModel{f}).dump(2);
    const auto csv = residuals_to_csv(f.residuals);
    const auto store = residuals_from_csv(csv);
    const auto m = fit_from_json(json::parse(text), store);
    const auto& g = std::get<SemiParamFit>(m);
    CHECK(g.u == f.u);
    CHECK(g.k == f.k);
    CHECK(g.backward.has_value() == backward);
    CHECK(g.symmetric == f.symmetric);
    CHECK(to_json(g.forward) == to_json(f.forward));
    if (backward) CHECK(to_json(*g.backward) == to_json(*f.backward));
    CHECK(g.forward_nuisance[2].delta == 1.5);
    CHECK(g.meta.nll == f.meta.nll);
    CHECK(g.meta.warnings == f.meta.warnings);
    REQUIRE(g.residuals.rows() == 2);
    for (std::size_t r = 0; r < 2; ++r)
      for (int i = 1; i <= 3; ++i) {
        const double a = f.residuals.fwd(r, i), b = g.residuals.fwd(r, i);
        CHECK(((std::isnan(a) && std::isnan(b)) || a == b));
      }
    CHECK(to_json(m) == json::parse(text));
  }
}

TEST_CASE("residual store and fit must agree") {
  const auto f = sample_fit(false);
  const auto j = to_json(FittedConditionalModel{f});
  auto st = f.residuals;
  st.k = 2;
  st.forward.resize(4);
  CHECK_THROWS_AS(fit_from_json(j, st), InputError);
  CHECK_THROWS_AS(fit_from_json(j, sample_fit(true).residuals), InputError);
  CHECK_THROWS_AS(residuals_from_csv("y,f1\n1,2\n"), InputError);
  CHECK_THROWS_AS(residuals_from_csv("x,f1,f2\n1,2\n"), InputError);
  CHECK_THROWS_AS(residuals_from_csv("x,f1\n1,abc\n"), InputError);
  CHECK_THROWS_AS(residuals_from_csv("x,f1,f2,b1\n1,2,3,4\n"), InputError);
}

TEST_CASE("parametric fit round trip") {
  ParamFit p;
  p.forward = {NormingModel::model2, GeometricAlpha{0.5}, 0.3, 4};
  p.curves = {CurveFamily::param2, 0.2, 1.1, -0.4, 0.9, 0.3, 2.2};
  p.rho = -0.25;
  p.u = 1.9;
  p.k = 4;
  p.backward_forward = true;
  const auto j = json::parse(to_json(FittedConditionalModel{p}).dump());
  const auto& q = std::get<ParamFit>(fit_from_json(j));
  CHECK(q.rho == p.rho);
  CHECK(q.curves.C == p.curves.C);
  CHECK(q.curves.family == CurveFamily::param2);
  CHECK(q.backward_forward);
  CHECK(q.forward.model == NormingModel::model2);
  auto bad = j;
  bad["rho"] = 1.0;
  CHECK_THROWS_AS(fit_from_json(bad), InputError);
  bad = j;
  bad["residual_family"]["A"] = 2.0;
  CHECK_THROWS_AS(fit_from_json(bad), InputError);
  bad = j;
  bad["type"] = "mystery";
  CHECK_THROWS_AS(fit_from_json(bad), InputError);
  bad = j;
  bad["direction"] = "sideways";
  CHECK_THROWS_AS(fit_from_json(bad), InputError);
}

TEST_CASE("series CSV") {
  std::istringstream in("\xEF\xBB\xBFsegment_id,value\na,1\na,2.5\n\nb,-3\n");
  const auto s = read_series_csv(in);
  CHECK(s.series.values == std::vector<double>{1, 2.5, -3});
  CHECK(s.segment_ids == std::vector<std::string>{"a", "b"});
  CHECK(s.series.segments[1] == Segment{2, 3});
  std::ostringstream out;
  write_series_csv(out, s.series, s.segment_ids);
  std::istringstream again(out.str());
  CHECK(read_series_csv(again).series.values == s.series.values);

  auto bad = [](const std::string& text) {
    std::istringstream i(text);
    return read_series_csv(i);
  };
  CHECK_THROWS_AS(bad(""), InputError);
  CHECK_THROWS_AS(bad("id,value\na,1\n"), InputError);
  CHECK_THROWS_AS(bad("segment_id,value\na,1\nb,2\na,3\n"), InputError);
  CHECK_THROWS_AS(bad("segment_id,value\na,\n"), InputError);
  CHECK_THROWS_AS(bad("segment_id,value\na,1,2\n"), InputError);
  CHECK_THROWS_AS(bad("segment_id,value\na,inf\n"), InputError);
  CHECK_THROWS_AS(bad("segment_id,value\n"), InputError);
}
