#pragma once

// JSON and CSV serialisation of models and results, and file hashing.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

#include "condex/error.hpp"
#include "condex/fit.hpp"
#include "condex/margins.hpp"
#include "condex/norming.hpp"
#include "condex/series.hpp"
#include "condex/simulate.hpp"

namespace condex {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw InternalError("sha256 failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline std::string sha256_file(const std::string& path) { return sha256_hex(read_file(path)); }

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << content;
  if (!out) throw InputError("write failed for " + path);
}

namespace detail {

template <class T>
T get_field(const json& j, const char* key) {
  if (!j.contains(key)) throw InputError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InputError(std::string("bad field '") + key + "': " + e.what());
  }
}

inline double nan_or(const json& j, const char* key) {
  return j.contains(key) && j.at(key).is_number() ? j.at(key).get<double>() : std::numeric_limits<double>::quiet_NaN();
}

inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace detail

// --- marginal model --------------------------------------------------------

inline json to_json(const MarginalModel& m) {
  return {{"schema_version", kSchemaVersion},
          {"type", "marginal_model"},
          {"threshold_ustar", m.threshold()},
          {"gpd_scale", m.sigma()},
          {"gpd_shape", m.xi()},
          {"gpd_scale_se", detail::number_or_null(m.sigma_se())},
          {"gpd_shape_se", detail::number_or_null(m.xi_se())},
          {"exceedance_prob", m.exceed_prob()},
          {"n_total", m.n_total()},
          {"sorted_body", m.sorted_body()}};
}

inline MarginalModel marginal_from_json(const json& j) {
  if (detail::get_field<std::string>(j, "type") != "marginal_model") throw InputError("not a marginal model document");
  return MarginalModel(detail::get_field<double>(j, "threshold_ustar"), detail::get_field<double>(j, "gpd_scale"),
                       detail::get_field<double>(j, "gpd_shape"), detail::get_field<double>(j, "exceedance_prob"),
                       detail::get_field<std::vector<double>>(j, "sorted_body"),
                       detail::get_field<std::size_t>(j, "n_total"), detail::nan_or(j, "gpd_scale_se"),
                       detail::nan_or(j, "gpd_shape_se"));
}

// --- norming ---------------------------------------------------------------

inline json to_json(const AlphaStructure& s) {
  return std::visit(
      [](const auto& a) -> json {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, FreeAlpha>) return {{"kind", "free"}, {"alpha", a.alpha}};
        else if constexpr (std::is_same_v<T, GeometricAlpha>) return {{"kind", "geometric"}, {"alpha", a.alpha}};
        else if constexpr (std::is_same_v<T, ARCorr2>) return {{"kind", "ar2"}, {"r1", a.r1}, {"r2", a.r2}};
        else if constexpr (std::is_same_v<T, ARCorr3>)
          return {{"kind", "ar3"}, {"r1", a.r1}, {"r2", a.r2}, {"r3", a.r3}};
        else return {{"kind", "pt"}, {"init", a.init}, {"c", a.c}, {"delta", a.delta}, {"Gamma", a.Gamma}};
      },
      s);
}

inline AlphaStructure structure_from_json(const json& j) {
  using detail::get_field;
  const auto kind = parse_structure_kind(get_field<std::string>(j, "kind"));
  AlphaStructure s;
  switch (kind) {
    case StructureKind::free: s = FreeAlpha{get_field<std::vector<double>>(j, "alpha")}; break;
    case StructureKind::geometric: s = GeometricAlpha{get_field<double>(j, "alpha")}; break;
    case StructureKind::ar2: s = ARCorr2{get_field<double>(j, "r1"), get_field<double>(j, "r2")}; break;
    case StructureKind::ar3:
      s = ARCorr3{get_field<double>(j, "r1"), get_field<double>(j, "r2"), get_field<double>(j, "r3")};
      break;
    case StructureKind::pt: {
      PTAlpha p;
      p.init = get_field<std::vector<double>>(j, "init");
      p.c = get_field<double>(j, "c");
      p.delta = get_field<double>(j, "delta");
      p.Gamma = get_field<std::vector<double>>(j, "Gamma");
      s = p;
      break;
    }
  }
  validate_structure(s);
  return s;
}

inline json to_json(const NormingSpec& s) {
  return {{"model", s.model == NormingModel::model1 ? 1 : 2},
          {"structure", to_json(s.alpha)},
          {"beta", s.beta},
          {"k", s.k}};
}

inline NormingSpec norming_from_json(const json& j) {
  NormingSpec s;
  const int m = detail::get_field<int>(j, "model");
  if (m != 1 && m != 2) throw InputError("norming model must be 1 or 2");
  s.model = m == 1 ? NormingModel::model1 : NormingModel::model2;
  s.alpha = structure_from_json(j.at("structure"));
  s.beta = detail::get_field<double>(j, "beta");
  s.k = detail::get_field<int>(j, "k");
  validate_norming(s, alpha_sequence(s.alpha, s.k));
  return s;
}

inline json to_json(const DeltaLaplaceParams& p) { return {{"mu", p.mu}, {"sigma", p.sigma}, {"delta", p.delta}}; }

inline DeltaLaplaceParams dl_from_json(const json& j) {
  DeltaLaplaceParams p{detail::get_field<double>(j, "mu"), detail::get_field<double>(j, "sigma"),
                       detail::get_field<double>(j, "delta")};
  p.validate();
  return p;
}

// --- fits ------------------------------------------------------------------

inline json to_json(const FitMetadata& m) {
  return {{"nll", m.nll}, {"evaluations", m.evaluations}, {"seed", m.seed}, {"converged", m.converged},
          {"warnings", m.warnings}};
}

inline FitMetadata metadata_from_json(const json& j) {
  FitMetadata m;
  m.nll = detail::get_field<double>(j, "nll");
  m.evaluations = detail::get_field<int>(j, "evaluations");
  m.seed = detail::get_field<std::uint64_t>(j, "seed");
  m.converged = detail::get_field<bool>(j, "converged");
  if (j.contains("warnings")) m.warnings = j.at("warnings").get<std::vector<std::string>>();
  return m;
}

/// Fit document without the residual store (which travels as CSV).
inline json to_json(const FittedConditionalModel& model) {
  json j = {{"schema_version", kSchemaVersion}};
  if (const auto* s = std::get_if<SemiParamFit>(&model)) {
    j["type"] = "semiparametric";
    j["u"] = s->u;
    j["k"] = s->k;
    j["direction"] = s->backward ? "backward_forward" : "forward";
    j["symmetric"] = s->symmetric;
    j["forward"] = to_json(s->forward);
    if (s->backward && !s->symmetric) j["backward"] = to_json(*s->backward);
    j["working_margin"] = s->margin == WorkingMargin::gaussian ? "gaussian" : "dlaplace";
    json fn = json::array(), bn = json::array();
    for (const auto& p : s->forward_nuisance) fn.push_back(to_json(p));
    for (const auto& p : s->backward_nuisance) bn.push_back(to_json(p));
    j["nuisance"] = {{"forward", fn}, {"backward", bn}};
    j["fit_metadata"] = to_json(s->meta);
  } else {
    const auto& p = std::get<ParamFit>(model);
    j["type"] = "parametric";
    j["u"] = p.u;
    j["k"] = p.k;
    j["direction"] = p.backward_forward ? "backward_forward" : "forward";
    j["symmetric"] = true;
    j["forward"] = to_json(p.forward);
    const auto& c = p.curves;
    j["residual_family"] = {{"family", c.family == CurveFamily::param1 ? "param1" : "param2"},
                            {"A", c.A}, {"B", c.B}, {"C", c.C}, {"D", c.D}, {"E", c.E}, {"F", c.F}};
    j["rho"] = p.rho;
    j["fit_metadata"] = to_json(p.meta);
  }
  return j;
}

inline FittedConditionalModel fit_from_json(const json& j, ResidualStore residuals = {}) {
  using detail::get_field;
  const auto type = get_field<std::string>(j, "type");
  const auto dir = get_field<std::string>(j, "direction");
  if (dir != "forward" && dir != "backward_forward") throw InputError("bad direction '" + dir + "'");
  if (type == "semiparametric") {
    SemiParamFit s;
    s.u = get_field<double>(j, "u");
    s.k = get_field<int>(j, "k");
    s.symmetric = get_field<bool>(j, "symmetric");
    s.forward = norming_from_json(j.at("forward"));
    if (dir == "backward_forward") s.backward = s.symmetric ? s.forward : norming_from_json(j.at("backward"));
    const auto wm = get_field<std::string>(j, "working_margin");
    if (wm != "gaussian" && wm != "dlaplace") throw InputError("bad working_margin '" + wm + "'");
    s.margin = wm == "gaussian" ? WorkingMargin::gaussian : WorkingMargin::delta_laplace;
    for (const auto& p : j.at("nuisance").at("forward")) s.forward_nuisance.push_back(dl_from_json(p));
    for (const auto& p : j.at("nuisance").at("backward")) s.backward_nuisance.push_back(dl_from_json(p));
    s.meta = metadata_from_json(j.at("fit_metadata"));
    if (residuals.rows() > 0 && residuals.k != s.k) throw InputError("residual store horizon does not match the fit");
    if (residuals.rows() > 0 && residuals.has_backward != s.backward.has_value())
      throw InputError("residual store direction does not match the fit");
    s.residuals = std::move(residuals);
    return s;
  }
  if (type == "parametric") {
    ParamFit p;
    p.u = get_field<double>(j, "u");
    p.k = get_field<int>(j, "k");
    p.backward_forward = dir == "backward_forward";
    p.forward = norming_from_json(j.at("forward"));
    const auto& c = j.at("residual_family");
    const auto fam = get_field<std::string>(c, "family");
    if (fam != "param1" && fam != "param2") throw InputError("bad residual family '" + fam + "'");
    p.curves = {fam == "param1" ? CurveFamily::param1 : CurveFamily::param2, get_field<double>(c, "A"),
                get_field<double>(c, "B"), get_field<double>(c, "C"), get_field<double>(c, "D"),
                get_field<double>(c, "E"), get_field<double>(c, "F")};
    p.curves.validate();
    p.rho = get_field<double>(j, "rho");
    if (!(std::abs(p.rho) < 1)) throw InputError("rho must lie in (-1,1)");
    p.meta = metadata_from_json(j.at("fit_metadata"));
    return p;
  }
  throw InputError("unknown fit type '" + type + "'");
}

/// Wide CSV: x, f1..fk, b1..bk; "NA" marks truncated lags.
inline std::string residuals_to_csv(const ResidualStore& st) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "x";
  for (int i = 1; i <= st.k; ++i) os << ",f" << i;
  if (st.has_backward)
    for (int i = 1; i <= st.k; ++i) os << ",b" << i;
  os << '\n';
  auto cell = [&](double v) {
    if (std::isfinite(v)) os << v;
    else os << "NA";
  };
  for (std::size_t r = 0; r < st.rows(); ++r) {
    os << st.conditioning[r];
    for (int i = 1; i <= st.k; ++i) {
      os << ',';
      cell(st.fwd(r, i));
    }
    if (st.has_backward)
      for (int i = 1; i <= st.k; ++i) {
        os << ',';
        cell(st.bwd(r, i));
      }
    os << '\n';
  }
  return os.str();
}

inline ResidualStore residuals_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw InputError("residual CSV is empty");
  std::vector<std::string> head;
  {
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) head.emplace_back(detail::trim(c));
  }
  if (head.empty() || head[0] != "x") throw InputError("residual CSV header must start with 'x'");
  ResidualStore st;
  int nf = 0, nb = 0;
  for (std::size_t i = 1; i < head.size(); ++i) (head[i][0] == 'f' ? nf : nb)++;
  if (nb != 0 && nb != nf) throw InputError("residual CSV has unequal forward and backward widths");
  st.k = nf;
  st.has_backward = nb > 0;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    std::vector<double> vals;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) {
      const auto t = detail::trim(c);
      vals.push_back(t == "NA" ? std::numeric_limits<double>::quiet_NaN()
                               : detail::parse_double(t, "residual CSV row " + std::to_string(row)));
    }
    if (vals.size() != head.size()) throw InputError("residual CSV row " + std::to_string(row) + ": wrong column count");
    st.conditioning.push_back(vals[0]);
    st.forward.insert(st.forward.end(), vals.begin() + 1, vals.begin() + 1 + nf);
    if (nb) st.backward.insert(st.backward.end(), vals.begin() + 1 + nf, vals.end());
  }
  return st;
}

// --- results ---------------------------------------------------------------

inline json to_json(const EstimateReport& r) {
  return {{"estimate", r.estimate}, {"std_error", r.std_error}, {"ci_low", r.ci_low},
          {"ci_high", r.ci_high}, {"n", r.n}, {"seed", r.seed}};
}

inline json to_json(const AloeResult& r) {
  return {{"p_hat", r.p_hat}, {"std_error", r.std_error}, {"union_bound", r.union_bound},
          {"s_histogram", r.s_histogram}, {"n", r.n}, {"seed", r.seed}};
}

}  // namespace condex
