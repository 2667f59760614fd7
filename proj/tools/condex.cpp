// condex command-line driver.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "condex/condex.hpp"

namespace fs = std::filesystem;
using namespace condex;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

std::string fmt(double v) { return detail::format_double(v); }

/// Tracks inputs and outputs of one command and writes the manifest.
class Run {
 public:
  Run(std::string command, std::vector<std::string> argv) : command_(std::move(command)), argv_(std::move(argv)) {
    start_ = std::chrono::steady_clock::now();
  }

  std::string input(const std::string& path) {
    auto content = read_file(path);
    inputs_[path] = sha256_hex(content);
    return content;
  }
  void output(const std::string& path, const std::string& content) {
    write_file(path, content);
    outputs_[path] = sha256_hex(content);
  }
  void param(const std::string& key, json value) { params_[key] = std::move(value); }
  void seed(std::uint64_t s) { seed_ = s; }
  void warn(const std::string& w) {
    std::cerr << "warning: " << w << '\n';
    warnings_.push_back(w);
  }
  const std::map<std::string, std::string>& inputs() const { return inputs_; }

  /// Written next to the primary output as <output>.manifest.json.
  void write_manifest(const std::string& primary) const {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json m = {{"schema_version", kSchemaVersion},
              {"type", "run_manifest"},
              {"command", command_},
              {"argv", argv_},
              {"parameters", params_},
              {"input_hashes", inputs_},
              {"output_hashes", outputs_},
              {"seed", seed_ ? json(*seed_) : json(nullptr)},
              {"library_version", CONDEX_VERSION},
              {"wall_clock_seconds", secs},
              {"warnings", warnings_}};
    write_file(primary + ".manifest.json", m.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::vector<std::string> argv_;
  json params_ = json::object();
  std::map<std::string, std::string> inputs_, outputs_;
  std::optional<std::uint64_t> seed_;
  std::vector<std::string> warnings_;
  std::chrono::steady_clock::time_point start_;
};

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(detail::parse_double(detail::trim(item), "list '" + s + "'"));
  if (out.empty()) throw InputError("empty list");
  return out;
}

double quantile_to_laplace(double q, const char* what) {
  if (!(q >= 0.5 && q < 1)) throw InputError(std::string(what) + " must lie in [0.5, 1)");
  return laplace_quantile(q);
}

template <class Tag>
LabelledSeries<Tag> parse_series(const std::string& content, const std::string& name) {
  std::istringstream in(content);
  return read_series_csv<Tag>(in, name);
}

// --- artifacts shared by several commands -----------------------------------

struct Loaded {
  FittedConditionalModel model;
  json doc;
};

Loaded load_model(Run& run, const std::string& path) {
  json doc;
  try {
    doc = json::parse(run.input(path));
  } catch (const json::parse_error& e) {
    throw InputError(path + ": " + e.what());
  }
  ResidualStore store;
  if (doc.contains("residual_store") && !doc["residual_store"].is_null()) {
    const auto& ref = doc["residual_store"];
    const fs::path rp = fs::path(path).parent_path() / ref.at("path").get<std::string>();
    const auto content = run.input(rp.string());
    if (sha256_hex(content) != ref.at("sha256").get<std::string>())
      throw InputError(rp.string() + ": residual store hash does not match the model");
    store = residuals_from_csv(content);
  } else if (doc.value("type", "") == "semiparametric") {
    throw InputError(path + ": semi-parametric model has no residual store");
  }
  return {fit_from_json(doc, std::move(store)), doc};
}

MarginalModel load_marginal(Run& run, const std::string& path, const json* model_doc = nullptr) {
  const auto content = run.input(path);
  if (model_doc) {
    const auto& ref = (*model_doc).value("marginal_model_ref", json(nullptr));
    if (ref.is_null()) throw InputError("the model was fitted on Laplace-scale data and carries no marginal model");
    if (ref.at("sha256").get<std::string>() != sha256_hex(content))
      throw InputError(path + ": marginal model does not match the one the model was fitted with");
  }
  try {
    return marginal_from_json(json::parse(content));
  } catch (const json::parse_error& e) {
    throw InputError(path + ": " + e.what());
  }
}

/// Laplace-scale series from raw data plus a marginal model, or as-is without one.
LaplaceSeries load_laplace(Run& run, const std::string& in, const std::string& marginal, const json* model_doc,
                           std::vector<std::string>* ids = nullptr) {
  const auto content = run.input(in);
  if (marginal.empty()) {
    if (model_doc && !(*model_doc).value("marginal_model_ref", json(nullptr)).is_null())
      throw InputError("the model was fitted with a marginal model; pass --marginal");
    auto s = parse_series<LaplaceTag>(content, in);
    if (ids) *ids = s.segment_ids;
    return s.series;
  }
  const auto m = load_marginal(run, marginal, model_doc);
  auto raw = parse_series<RawTag>(content, in);
  if (ids) *ids = raw.segment_ids;
  return m.to_laplace(raw.series);
}

std::string stem(const std::string& out) {
  const fs::path p(out);
  return (p.parent_path() / p.stem()).string();
}

// --- option groups ----------------------------------------------------------

struct FitFlags {
  double u_quantile = 0.95;
  int k = 5;
  int model = 1;
  std::string structure = "geometric";
  int order = 2;
  std::string working_margin = "dlaplace";
  bool parametric = false;
  std::string curves = "param1";
  std::string direction = "forward";
  bool asymmetric = false;
  int restarts = 3;
  std::uint64_t seed = 1;

  void add(CLI::App* c) {
    c->add_option("--u-quantile", u_quantile, "conditioning threshold as a Laplace quantile")->capture_default_str();
    c->add_option("--k", k, "number of lags")->capture_default_str();
    c->add_option("--model", model, "norming model 1 or 2")->check(CLI::IsMember({1, 2}))->capture_default_str();
    c->add_option("--structure", structure)
        ->check(CLI::IsMember({"free", "geometric", "ar2", "ar3", "pt"}))
        ->capture_default_str();
    c->add_option("--order", order, "PT order l")->capture_default_str();
    c->add_option("--working-margin", working_margin)
        ->check(CLI::IsMember({"dlaplace", "gaussian"}))
        ->capture_default_str();
    c->add_flag("--parametric", parametric, "two-stage parametric model");
    c->add_option("--curves", curves, "parametric residual family")
        ->check(CLI::IsMember({"param1", "param2"}))
        ->capture_default_str();
    c->add_option("--direction", direction)->check(CLI::IsMember({"forward", "both"}))->capture_default_str();
    c->add_flag("--asymmetric", asymmetric, "separate backward norming parameters");
    c->add_option("--restarts", restarts)->capture_default_str();
    c->add_option("--seed", seed)->capture_default_str();
  }

  FitConfig config() const {
    FitConfig c;
    c.k = k;
    c.direction = direction == "both" ? Direction::backward_forward : Direction::forward;
    c.parametric = parametric;
    c.options.model = model == 1 ? NormingModel::model1 : NormingModel::model2;
    c.options.structure = parse_structure_kind(structure);
    c.options.pt_order = order;
    c.options.margin = working_margin == "gaussian" ? WorkingMargin::gaussian : WorkingMargin::delta_laplace;
    c.options.symmetric = !asymmetric;
    c.options.curves = curves == "param2" ? CurveFamily::param2 : CurveFamily::param1;
    c.options.restarts = restarts;
    c.options.seed = seed;
    return c;
  }

  void record(Run& run) const {
    run.param("u_quantile", u_quantile);
    run.param("k", k);
    run.param("model", model);
    run.param("structure", structure);
    run.param("order", order);
    run.param("working_margin", working_margin);
    run.param("parametric", parametric);
    run.param("curves", curves);
    run.param("direction", direction);
    run.param("asymmetric", asymmetric);
    run.param("restarts", restarts);
    run.seed(seed);
  }
};

struct FunctionalFlags {
  std::string kind = "theta";
  double v_quantile = 0.95;
  int d = 2;
  int r = 1;
  double s = 1;
  std::string scale = "laplace";

  void add(CLI::App* c) {
    c->add_option("--functional", kind, "theta chi e1 e2 e3 p pstar union max_exceed total_exceed consec_exceed")
        ->capture_default_str();
    c->add_option("--v-quantile", v_quantile)->capture_default_str();
    c->add_option("--d", d, "block length")->capture_default_str();
    c->add_option("--r", r, "exceedance count for p and pstar")->capture_default_str();
    c->add_option("--s", s, "level for max_exceed, count for total/consec")->capture_default_str();
    c->add_option("--scale", scale)->check(CLI::IsMember({"laplace", "data"}))->capture_default_str();
  }

  FunctionalSpec spec() const {
    FunctionalSpec f;
    f.kind = parse_functional_kind(kind);
    f.v = quantile_to_laplace(v_quantile, "--v-quantile");
    f.d = d;
    f.r = r;
    f.s = s;
    f.scale = scale == "data" ? Scale::data : Scale::laplace;
    return f;
  }

  std::string params() const {
    std::ostringstream os;
    os << "v_quantile=" << v_quantile << ";d=" << d << ";r=" << r << ";s=" << s << ";scale=" << scale;
    return os.str();
  }

  void record(Run& run) const {
    run.param("functional", kind);
    run.param("v_quantile", v_quantile);
    run.param("d", d);
    run.param("r", r);
    run.param("s", s);
    run.param("scale", scale);
  }
};

std::string results_csv(const std::vector<std::pair<std::string, EstimateReport>>& rows,
                        const std::string& kind) {
  std::ostringstream os;
  os << "kind,params,estimate,stderr,n,seed\n";
  for (const auto& [params, r] : rows)
    os << kind << ',' << params << ',' << fmt(r.estimate) << ',' << fmt(r.std_error) << ',' << r.n << ',' << r.seed
       << '\n';
  return os.str();
}

// --- commands ---------------------------------------------------------------

struct Common {
  unsigned threads = 1;
  std::string out;
};

void cmd_generate(Run& run, const Common& co, const std::string& kind, const GeneratorSpec& base) {
  GeneratorSpec g = base;
  g.kind = parse_generator_kind(kind);
  run.param("kind", kind);
  run.param("rho", g.rho);
  run.param("gamma", g.gamma);
  run.param("theta1", g.theta1);
  run.param("theta2", g.theta2);
  run.param("n", g.n);
  run.seed(g.seed);
  const auto s = generate(g);
  std::ostringstream os;
  write_series_csv(os, s);
  run.output(co.out, os.str());
  run.write_manifest(co.out);
}

void cmd_fit_marginal(Run& run, const Common& co, const std::string& in, std::optional<double> q,
                      const std::string& scan, std::uint64_t seed) {
  if (q.has_value() == !scan.empty()) throw InputError("fit-marginal needs exactly one of --quantile and --scan");
  const auto data = parse_series<RawTag>(run.input(in), in);
  run.seed(seed);
  if (q) {
    run.param("quantile", *q);
    const auto m = fit_marginal(data.series, *q, seed);
    run.output(co.out, to_json(m).dump(2) + "\n");
  } else {
    run.param("scan", scan);
    const auto rows = threshold_stability_scan(data.series, parse_list(scan));
    std::ostringstream os;
    os << "quantile,threshold,n_exceed,gpd_scale,gpd_shape,gpd_scale_se,gpd_shape_se,ok,message\n";
    for (const auto& r : rows)
      os << fmt(r.quantile) << ',' << fmt(r.threshold) << ',' << r.n_exceed << ',' << fmt(r.sigma) << ','
         << fmt(r.xi) << ',' << fmt(r.sigma_se) << ',' << fmt(r.xi_se) << ',' << (r.ok ? 1 : 0) << ",\""
         << r.message << "\"\n";
    run.output(co.out, os.str());
  }
  run.write_manifest(co.out);
}

void cmd_transform(Run& run, const Common& co, const std::string& in, const std::string& marginal, bool inverse) {
  run.param("inverse", inverse);
  const auto m = load_marginal(run, marginal);
  const auto content = run.input(in);
  std::ostringstream os;
  if (inverse) {
    const auto s = parse_series<LaplaceTag>(content, in);
    write_series_csv(os, m.from_laplace(s.series), s.segment_ids);
  } else {
    const auto s = parse_series<RawTag>(content, in);
    write_series_csv(os, m.to_laplace(s.series), s.segment_ids);
  }
  run.output(co.out, os.str());
  run.write_manifest(co.out);
}

void cmd_fit(Run& run, const Common& co, const std::string& in, const std::string& marginal, const FitFlags& ff) {
  ff.record(run);
  const auto s = load_laplace(run, in, marginal, nullptr);
  const double u = quantile_to_laplace(ff.u_quantile, "--u-quantile");
  const auto model = fit_model(s, u, ff.config());
  json doc = to_json(model);
  doc["u_quantile"] = ff.u_quantile;
  doc["data_ref"] = {{"path", in}, {"sha256", run.inputs().at(in)}};
  doc["marginal_model_ref"] =
      marginal.empty() ? json(nullptr) : json{{"path", marginal}, {"sha256", run.inputs().at(marginal)}};
  if (const auto* sp = std::get_if<SemiParamFit>(&model)) {
    const std::string rpath = stem(co.out) + ".residuals.csv";
    const auto csv = residuals_to_csv(sp->residuals);
    run.output(rpath, csv);
    doc["residual_store"] = {{"path", fs::path(rpath).filename().string()}, {"sha256", sha256_hex(csv)}};
  } else {
    doc["residual_store"] = nullptr;
  }
  for (const auto& w : std::visit([](const auto& f) { return f.meta.warnings; }, model)) run.warn(w);
  run.output(co.out, doc.dump(2) + "\n");
  run.write_manifest(co.out);
}

SimConfig sim_config(const FittedConditionalModel& m, std::size_t n, std::uint64_t seed, unsigned threads,
                     const std::string& source) {
  SimConfig c;
  c.n_samples = n;
  c.seed = seed;
  c.threads = threads;
  c.source = source.empty() ? default_source(m)
                            : (source == "parametric" ? ResidualSource::parametric : ResidualSource::empirical_joint);
  return c;
}

void cmd_simulate(Run& run, const Common& co, const std::string& model_path, double v_quantile, int d, std::size_t n,
                  std::uint64_t seed, const std::string& source, int cluster_r) {
  run.param("v_quantile", v_quantile);
  run.param("d", d);
  run.param("n", n);
  run.param("source", source);
  run.param("threads", co.threads);
  run.param("clusters", cluster_r);
  run.seed(seed);
  const auto loaded = load_model(run, model_path);
  auto c = sim_config(loaded.model, n, seed, co.threads, source);
  c.v = quantile_to_laplace(v_quantile, "--v-quantile");
  c.d = d;
  const auto blocks = forward_simulate(loaded.model, c);
  std::ostringstream os;
  os << "block";
  for (int j = 1; j <= d; ++j) os << ",x" << j;
  os << '\n';
  for (std::size_t i = 0; i < blocks.rows(); ++i) {
    os << i;
    for (double x : blocks.row(i)) os << ',' << fmt(x);
    os << '\n';
  }
  run.output(co.out, os.str());
  if (cluster_r > 0) {
    std::ostringstream cs;
    cs << "block,length,terminated,maximum,values\n";
    for (const auto& cl : extract_clusters(blocks, c.v, cluster_r)) {
      cs << cl.block << ',' << cl.values.size() << ',' << (cl.terminated ? 1 : 0) << ','
         << fmt(*std::max_element(cl.values.begin(), cl.values.end())) << ",\"";
      for (std::size_t j = 0; j < cl.values.size(); ++j) cs << (j ? ";" : "") << fmt(cl.values[j]);
      cs << "\"\n";
    }
    run.output(stem(co.out) + ".clusters.csv", cs.str());
  }
  run.write_manifest(co.out);
}

void cmd_estimate(Run& run, const Common& co, const std::string& model_path, const std::string& in,
                  const std::string& marginal, const FunctionalFlags& ff, const std::string& method, std::size_t n,
                  std::uint64_t seed, const std::string& source, const BootstrapScheme& scheme, int replications) {
  ff.record(run);
  run.param("method", method);
  run.param("n", n);
  run.param("threads", co.threads);
  run.seed(seed);
  const auto f = ff.spec();
  EstimateReport rep;
  if (method == "empirical") {
    if (in.empty()) throw InputError("--method empirical needs --in");
    run.param("bootstrap", {{"block_length", scheme.block_length}, {"replications", replications}});
    std::optional<MarginalModel> m;
    if (!marginal.empty()) m = load_marginal(run, marginal);
    if (f.scale == Scale::data && !m) throw InputError("data-scale functionals need --marginal");
    LaplaceSeries s;
    const auto content = run.input(in);
    if (m) s = m->to_laplace(parse_series<RawTag>(content, in).series);
    else s = parse_series<LaplaceTag>(content, in).series;
    EmpiricalOptions eo;
    eo.scheme = scheme;
    eo.scheme.seed = seed;
    eo.replications = replications;
    rep = empirical_functional(s, f, eo, m ? &*m : nullptr);
  } else {
    if (model_path.empty()) throw InputError("--method " + method + " needs --model");
    const auto loaded = load_model(run, model_path);
    std::optional<MarginalModel> m;
    if (f.scale == Scale::data) {
      if (marginal.empty()) throw InputError("data-scale functionals need --marginal");
      m = load_marginal(run, marginal, &loaded.doc);
    }
    auto c = sim_config(loaded.model, n, seed, co.threads, source);
    const bool union_kind = conditions_on_union(f.kind);
    if (method == "aloe" && !union_kind) {
      // ALOE applies to union-conditioned kinds; others need the forward route
      throw InputError(std::string("--method aloe supports pstar and union, not ") + to_string(f.kind));
    }
    if (method == "forward" && union_kind)
      throw InputError(std::string(to_string(f.kind)) + " is conditioned on the union; use --method aloe");
    rep = estimate_functional(loaded.model, f, c, m ? &*m : nullptr);
  }
  run.output(co.out, results_csv({{ff.params(), rep}}, ff.kind));
  run.write_manifest(co.out);
}

void cmd_bootstrap(Run& run, const Common& co, const std::string& in, const std::string& marginal,
                   const std::string& target, const FitFlags& fit, const FunctionalFlags& ff, std::size_t n_sim,
                   const BootstrapScheme& scheme, int replications) {
  fit.record(run);
  run.param("target", target);
  run.param("scheme", scheme.kind == BootstrapKind::block ? "block"
                      : scheme.kind == BootstrapKind::stationary ? "stationary" : "moving_block");
  run.param("block_length", scheme.block_length);
  run.param("replications", replications);
  run.param("threads", co.threads);
  run.seed(scheme.seed);
  const auto s = load_laplace(run, in, marginal, nullptr);
  const double u = quantile_to_laplace(fit.u_quantile, "--u-quantile");
  const auto cfg = fit.config();
  std::vector<std::string> cols;
  std::function<std::vector<double>(const LaplaceSeries&)> est;
  if (target == "fit") {
    cols.push_back("beta");
    for (int i = 1; i <= cfg.k; ++i) cols.push_back("alpha" + std::to_string(i));
    if (cfg.parametric) cols.push_back("rho");
    est = [&](const LaplaceSeries& r) {
      const auto m = fit_model(r, u, cfg);
      const auto& spec = forward_spec(m);
      std::vector<double> v{spec.beta};
      for (double a : alpha_sequence(spec.alpha, cfg.k)) v.push_back(a);
      if (const auto* p = std::get_if<ParamFit>(&m)) v.push_back(p->rho);
      return v;
    };
  } else {
    ff.record(run);
    run.param("n", n_sim);
    if (ff.scale == "data") throw InputError("bootstrap --target estimate supports Laplace-scale functionals only");
    const auto f = ff.spec();
    cols.push_back(ff.kind);
    est = [&, f](const LaplaceSeries& r) {
      const auto m = fit_model(r, u, cfg);
      SimConfig c = sim_config(m, n_sim, scheme.seed, 1, "");
      return std::vector<double>{estimate_functional(m, f, c).estimate};
    };
  }
  const auto reps = bootstrap_replicates(s, scheme, replications, est, co.threads);
  for (const auto& w : reps.warnings) run.warn(w);
  std::ostringstream os;
  os << "replicate";
  for (const auto& c : cols) os << ',' << c;
  os << '\n';
  for (std::size_t i = 0; i < reps.values.size(); ++i) {
    os << i;
    for (double x : reps.values[i]) os << ',' << fmt(x);
    os << '\n';
  }
  run.output(co.out, os.str());
  json summary = {{"schema_version", kSchemaVersion}, {"replications", replications},
                  {"kept", reps.values.size()},       {"dropped", reps.dropped},
                  {"columns", json::object()}};
  for (std::size_t j = 0; j < cols.size(); ++j) {
    std::vector<double> col;
    for (const auto& r : reps.values) col.push_back(r[j]);
    std::vector<double> sorted = col;
    std::sort(sorted.begin(), sorted.end());
    summary["columns"][cols[j]] = {{"mean", mean(col)},
                                   {"std_error", col.size() > 1 ? std::sqrt(variance(col)) : 0.0},
                                   {"ci_low", sorted_quantile(sorted, 0.025)},
                                   {"ci_high", sorted_quantile(sorted, 0.975)}};
  }
  run.output(stem(co.out) + ".summary.json", summary.dump(2) + "\n");
  run.write_manifest(co.out);
}

/// Refit settings matching an existing fit, for threshold scans.
FitConfig config_from_model(const FittedConditionalModel& m, std::uint64_t seed) {
  FitConfig c;
  c.k = fit_horizon(m);
  c.direction = fit_direction(m);
  c.parametric = std::holds_alternative<ParamFit>(m);
  const auto& f = forward_spec(m);
  c.options.model = f.model;
  c.options.structure = structure_kind(f.alpha);
  if (const auto* pt = std::get_if<PTAlpha>(&f.alpha)) c.options.pt_order = static_cast<int>(pt->init.size()) + 1;
  if (const auto* s = std::get_if<SemiParamFit>(&m)) {
    c.options.margin = s->margin;
    c.options.symmetric = s->symmetric;
  } else {
    c.options.curves = std::get<ParamFit>(m).curves.family;
  }
  c.options.seed = seed;
  return c;
}

void cmd_diagnose(Run& run, const Common& co, const std::string& model_path, const std::string& in,
                  const std::string& marginal, const std::string& u_grid, std::uint64_t seed) {
  const auto loaded = load_model(run, model_path);
  const auto s = load_laplace(run, in, marginal, &loaded.doc);
  const auto& m = loaded.model;
  const auto blocks = extract_blocks(s, fit_threshold(m), fit_horizon(m), fit_direction(m));
  const auto diag = residual_diagnostics(m, blocks);
  const std::string base = co.out;
  std::ostringstream tau, qq;
  tau << "lag,n,tau,skipped\n";
  for (const auto& r : diag.tau) tau << r.lag << ',' << r.n << ',' << fmt(r.tau) << ',' << (r.skipped ? 1 : 0) << '\n';
  qq << "lag,empirical,model\n";
  for (const auto& r : diag.qq) qq << r.lag << ',' << fmt(r.empirical) << ',' << fmt(r.model) << '\n';
  run.output(base + ".tau.csv", tau.str());
  run.output(base + ".qq.csv", qq.str());
  if (!u_grid.empty()) {
    run.param("u_grid", u_grid);
    run.seed(seed);
    const auto cfg = config_from_model(m, seed);
    const auto rows = parameter_stability_scan(s, parse_list(u_grid), cfg);
    std::ostringstream st;
    st << "u_quantile,u,n_blocks,ok,beta,rho,nll";
    for (int i = 1; i <= cfg.k; ++i) st << ",alpha" << i;
    st << ",message\n";
    for (const auto& r : rows) {
      st << fmt(r.u_quantile) << ',' << fmt(r.u) << ',' << r.n_blocks << ',' << (r.ok ? 1 : 0) << ','
         << fmt(r.beta) << ',' << fmt(r.rho) << ',' << fmt(r.nll);
      for (int i = 0; i < cfg.k; ++i)
        st << ',' << (i < static_cast<int>(r.alpha.size()) ? fmt(r.alpha[static_cast<std::size_t>(i)]) : "nan");
      st << ",\"" << r.message << "\"\n";
    }
    run.output(base + ".stability.csv", st.str());
  }
  run.write_manifest(base + ".tau.csv");
}

int run_cli(const std::vector<std::string>& args);

/// Re-executes the argv recorded in a manifest and compares output hashes.
int cmd_replay(const std::string& manifest_path) {
  const auto m = json::parse(read_file(manifest_path));
  const auto argv = m.at("argv").get<std::vector<std::string>>();
  const int rc = run_cli(argv);
  if (rc != 0) return rc;
  const auto expected = m.at("output_hashes").get<std::map<std::string, std::string>>();
  int mismatches = 0;
  for (const auto& [path, hash] : expected) {
    const auto now = sha256_file(path);
    if (now != hash) {
      std::cerr << "replay: " << path << " differs\n";
      ++mismatches;
    }
  }
  std::cout << (mismatches ? "replay: outputs differ\n" : "replay: outputs identical\n");
  return mismatches ? 1 : 0;
}

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Conditional extremes for stationary time series"};
  app.require_subcommand(1);
  app.set_version_flag("--version", CONDEX_VERSION);
  Common co;

  auto add_common = [&](CLI::App* c, bool out_required = true) {
    c->add_option("--threads", co.threads, "worker threads (1 is bitwise reproducible)")->capture_default_str();
    auto* o = c->add_option("--out", co.out, "output path");
    if (out_required) o->required();
  };

  // generate
  auto* gen = app.add_subcommand("generate", "synthetic chain with standard Laplace margins");
  std::string gen_kind = "gauss_ar1";
  GeneratorSpec gspec;
  gen->add_option("--kind", gen_kind)->check(CLI::IsMember({"gauss_ar1", "inv_logistic", "gauss_ar2"}));
  gen->add_option("--rho", gspec.rho);
  gen->add_option("--gamma", gspec.gamma);
  gen->add_option("--theta1", gspec.theta1);
  gen->add_option("--theta2", gspec.theta2);
  gen->add_option("--n", gspec.n)->capture_default_str();
  gen->add_option("--seed", gspec.seed)->capture_default_str();
  add_common(gen);

  // fit-marginal
  auto* fm = app.add_subcommand("fit-marginal", "semi-parametric marginal model");
  std::string in, marginal, model_path;
  std::optional<double> fm_q;
  std::string fm_scan;
  std::uint64_t seed = 1;
  fm->add_option("--in", in)->required();
  fm->add_option("--quantile", fm_q, "GPD threshold quantile");
  fm->add_option("--scan", fm_scan, "comma-separated quantile grid for a stability table");
  fm->add_option("--seed", seed)->capture_default_str();
  add_common(fm);

  // transform
  auto* tr = app.add_subcommand("transform", "data to Laplace scale, or back with --inverse");
  bool inverse = false;
  tr->add_option("--in", in)->required();
  tr->add_option("--marginal", marginal)->required();
  tr->add_flag("--inverse", inverse);
  add_common(tr);

  // fit
  auto* fit = app.add_subcommand("fit", "fit a conditional model");
  FitFlags fit_flags;
  fit->add_option("--in", in)->required();
  fit->add_option("--marginal", marginal, "marginal model; omit when --in is already on the Laplace scale");
  fit_flags.add(fit);
  add_common(fit);

  // simulate
  auto* sim = app.add_subcommand("simulate", "forward-simulate blocks from a fitted model");
  double v_quantile = 0.99;
  int d = 10, cluster_r = 0;
  std::size_t n = 10000;
  std::string source;
  sim->add_option("--model", model_path)->required();
  sim->add_option("--v-quantile", v_quantile)->capture_default_str();
  sim->add_option("--d", d)->capture_default_str();
  sim->add_option("--n", n)->capture_default_str();
  sim->add_option("--seed", seed)->capture_default_str();
  sim->add_option("--source", source, "residual source")->check(CLI::IsMember({"empirical", "parametric"}));
  sim->add_option("--clusters", cluster_r, "also write runs-method clusters with this run length");
  add_common(sim);

  // estimate
  auto* est = app.add_subcommand("estimate", "estimate a cluster functional");
  FunctionalFlags fflags;
  std::string method = "forward";
  BootstrapScheme scheme;
  std::string scheme_kind = "moving_block";
  int replications = 200;
  fflags.add(est);
  est->add_option("--model", model_path);
  est->add_option("--in", in, "series for --method empirical");
  est->add_option("--marginal", marginal);
  est->add_option("--method", method)->check(CLI::IsMember({"forward", "aloe", "empirical"}))->capture_default_str();
  est->add_option("--n", n)->capture_default_str();
  est->add_option("--seed", seed)->capture_default_str();
  est->add_option("--source", source)->check(CLI::IsMember({"empirical", "parametric"}));
  est->add_option("--block-length", scheme.block_length, "bootstrap block length for --method empirical")
      ->capture_default_str();
  est->add_option("--replications", replications, "bootstrap replications for --method empirical")
      ->capture_default_str();
  add_common(est);

  // bootstrap
  auto* bs = app.add_subcommand("bootstrap", "block-bootstrap a fit or an estimate");
  std::string target = "fit";
  FitFlags bs_fit;
  FunctionalFlags bs_f;
  bs->add_option("--in", in)->required();
  bs->add_option("--marginal", marginal);
  bs->add_option("--target", target)->check(CLI::IsMember({"fit", "estimate"}))->capture_default_str();
  bs->add_option("--bootstrap", scheme_kind)
      ->check(CLI::IsMember({"block", "moving_block", "stationary"}))
      ->capture_default_str();
  bs->add_option("--block-length", scheme.block_length)->capture_default_str();
  bs->add_option("--replications", replications)->capture_default_str();
  bs->add_option("--n", n, "simulation size per replicate for --target estimate")->capture_default_str();
  bs_fit.add(bs);
  bs_f.add(bs);
  add_common(bs);

  // diagnose
  auto* dg = app.add_subcommand("diagnose", "residual diagnostics and parameter stability");
  std::string u_grid;
  std::uint64_t dg_seed = 1;
  dg->add_option("--model", model_path)->required();
  dg->add_option("--in", in)->required();
  dg->add_option("--marginal", marginal);
  dg->add_option("--u-grid", u_grid, "comma-separated u quantiles for a stability scan");
  dg->add_option("--seed", dg_seed, "seed for the stability refits")->capture_default_str();
  dg->add_option("--threads", co.threads);
  dg->add_option("--out", co.out, "output prefix")->required();

  // replay
  auto* rp = app.add_subcommand("replay", "re-run a manifest and compare output hashes");
  std::string manifest;
  rp->add_option("manifest", manifest)->required();

  std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }
  if (co.threads < 1) throw InputError("--threads must be >= 1");

  auto* sub = app.get_subcommands().front();
  Run run(sub->get_name(), args);
  if (sub == gen) cmd_generate(run, co, gen_kind, gspec);
  else if (sub == fm) cmd_fit_marginal(run, co, in, fm_q, fm_scan, seed);
  else if (sub == tr) cmd_transform(run, co, in, marginal, inverse);
  else if (sub == fit) cmd_fit(run, co, in, marginal, fit_flags);
  else if (sub == sim) cmd_simulate(run, co, model_path, v_quantile, d, n, seed, source, cluster_r);
  else if (sub == est) cmd_estimate(run, co, model_path, in, marginal, fflags, method, n, seed, source, scheme,
                                    replications);
  else if (sub == bs) {
    scheme.kind = parse_bootstrap_kind(scheme_kind);
    scheme.seed = bs_fit.seed;
    cmd_bootstrap(run, co, in, marginal, target, bs_fit, bs_f, n, scheme, replications);
  } else if (sub == dg) cmd_diagnose(run, co, model_path, in, marginal, u_grid, dg_seed);
  else if (sub == rp) return cmd_replay(manifest);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  try {
    return run_cli(args);
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const json::exception& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
