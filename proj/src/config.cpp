#include "seqbal/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "seqbal/error.hpp"

namespace seqbal {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + " must be a JSON object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw ParseError("unknown key \"" + k + "\" in " + where);
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError("bad value for \"" + std::string(key) + "\" in " + where + ": " + e.what());
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

PatternGraph graph_from_value(const json& v, const std::filesystem::path& base, const std::string& where) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "G1") return simulation_graph();
    if (s == "G2") return sensitivity_graph_g2();
    if (s == "G3") return sensitivity_graph_g3();
    return read_graph_file(resolve(base, s));
  }
  if (v.is_object()) return graph_from_json(v.dump());
  throw ParseError(where + " must be a file path, G1/G2/G3, or an inline graph object");
}

}  // namespace

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

BasisConfig basis_config_from_json(const json& j) {
  check_keys(j, {"n_splines", "degree", "knots", "penalty"}, "basis");
  BasisConfig b;
  if (j.contains("n_splines")) b.n_splines = get<int>(j, "n_splines", "basis");
  if (j.contains("degree")) b.degree = get<int>(j, "degree", "basis");
  if (j.contains("knots")) {
    const auto k = get<std::string>(j, "knots", "basis");
    if (k == "quantile") b.knots = KnotRule::quantile;
    else if (k == "uniform") b.knots = KnotRule::uniform;
    else throw ParseError("basis.knots must be \"quantile\" or \"uniform\"");
  }
  if (j.contains("penalty")) {
    const auto k = get<std::string>(j, "penalty", "basis");
    if (k == "sd") b.penalty = PenaltyRule::sd;
    else if (k == "ones") b.penalty = PenaltyRule::ones;
    else throw ParseError("basis.penalty must be \"sd\" or \"ones\"");
  }
  if (b.n_splines < 1 || b.degree < 0 || b.n_splines < b.degree + 1)
    throw ParseError("basis needs n_splines >= degree + 1 >= 1");
  return b;
}

SolverOptions solver_options_from_json(const json& j) {
  check_keys(j, {"tol", "max_iter", "kkt_tol"}, "solver");
  SolverOptions s;
  if (j.contains("tol")) s.tol = get<double>(j, "tol", "solver");
  if (j.contains("max_iter")) s.max_iter = get<int>(j, "max_iter", "solver");
  if (j.contains("kkt_tol")) s.kkt_tol = get<double>(j, "kkt_tol", "solver");
  if (!(s.tol > 0.0) || !(s.kkt_tol > 0.0) || s.max_iter < 1) throw ParseError("solver tolerances must be positive");
  return s;
}

LambdaPolicy lambda_policy_from_json(const json& j) {
  LambdaPolicy p;
  if (j.is_number()) {
    p.use_cv = false;
    p.fixed = j.get<double>();
  } else if (j.is_string()) {
    if (j.get<std::string>() != "cv") throw ParseError("lambda must be a number, \"cv\", or an object");
  } else {
    check_keys(j, {"mode", "value", "grid_size", "grid_ratio", "folds", "seed", "per_model"}, "lambda");
    const auto mode = j.contains("mode") ? get<std::string>(j, "mode", "lambda") : std::string("cv");
    if (mode == "fixed") {
      p.use_cv = false;
      p.fixed = get<double>(j, "value", "lambda");
    } else if (mode != "cv") {
      throw ParseError("lambda.mode must be \"cv\" or \"fixed\"");
    }
    if (j.contains("grid_size")) p.grid_size = get<int>(j, "grid_size", "lambda");
    if (j.contains("grid_ratio")) p.grid_ratio = get<double>(j, "grid_ratio", "lambda");
    if (j.contains("folds")) p.k_folds = get<int>(j, "folds", "lambda");
    if (j.contains("seed")) p.seed = get<std::uint64_t>(j, "seed", "lambda");
    if (j.contains("per_model")) p.per_model = get<std::map<std::string, double>>(j, "per_model", "lambda");
  }
  if (!(p.fixed >= 0.0)) throw ParseError("lambda must be nonnegative");
  for (const auto& [k, v] : p.per_model)
    if (!(v >= 0.0)) throw ParseError("lambda for model " + k + " must be nonnegative");
  if (p.grid_size < 1 || !(p.grid_ratio > 0.0 && p.grid_ratio <= 1.0) || p.k_folds < 2)
    throw ParseError("lambda grid needs grid_size >= 1, 0 < grid_ratio <= 1 and folds >= 2");
  return p;
}

RunConfig run_config_from_json(const json& j, const std::filesystem::path& base) {
  check_keys(j,
             {"graph", "data", "na_token", "column_kinds", "outcome", "predictors", "method", "lambda", "basis",
              "solver", "newton", "variance", "bootstrap_reps", "seed", "threads", "out"},
             "fit config");
  RunConfig c;
  for (const char* k : {"graph", "data", "outcome", "method"})
    if (!j.contains(k)) throw ParseError("fit config is missing \"" + std::string(k) + "\"");
  c.graph_path = resolve(base, get<std::string>(j, "graph", "fit config"));
  c.data_path = resolve(base, get<std::string>(j, "data", "fit config"));
  if (j.contains("na_token")) c.csv.na_token = get<std::string>(j, "na_token", "fit config");
  if (j.contains("column_kinds"))
    for (const auto& [name, kind] : get<std::map<std::string, std::string>>(j, "column_kinds", "fit config"))
      c.csv.kind_overrides[name] = parse_column_kind(kind);
  c.outcome = get<std::string>(j, "outcome", "fit config");
  if (j.contains("predictors")) c.predictors = get<std::vector<std::string>>(j, "predictors", "fit config");
  auto& p = c.pipeline;
  p.method = parse_method(get<std::string>(j, "method", "fit config"));
  if (j.contains("lambda")) p.weights.lambda = lambda_policy_from_json(j.at("lambda"));
  if (j.contains("basis")) p.weights.basis = basis_config_from_json(j.at("basis"));
  if (j.contains("solver")) p.weights.solver = solver_options_from_json(j.at("solver"));
  if (j.contains("newton")) {
    const auto& n = j.at("newton");
    check_keys(n, {"tol", "max_iter"}, "newton");
    if (n.contains("tol")) p.newton.tol = get<double>(n, "tol", "newton");
    if (n.contains("max_iter")) p.newton.max_iter = get<int>(n, "max_iter", "newton");
  }
  if (j.contains("variance")) {
    const auto v = get<std::string>(j, "variance", "fit config");
    if (v == "sandwich") p.variance = VarianceMethod::sandwich;
    else if (v == "bootstrap") p.variance = VarianceMethod::bootstrap;
    else throw ParseError("variance must be \"sandwich\" or \"bootstrap\"");
  }
  if (j.contains("bootstrap_reps")) p.bootstrap_reps = get<int>(j, "bootstrap_reps", "fit config");
  if (j.contains("seed")) p.seed = get<std::uint64_t>(j, "seed", "fit config");
  const bool cv_seed_given = j.contains("lambda") && j.at("lambda").is_object() && j.at("lambda").contains("seed");
  if (!cv_seed_given) p.weights.lambda.seed = p.seed;
  p.threads = j.contains("threads") ? get<int>(j, "threads", "fit config") : 0;
  if (j.contains("out")) c.out_dir = resolve(base, get<std::string>(j, "out", "fit config"));
  else c.out_dir = base / "out";
  if (!std::filesystem::exists(c.graph_path)) throw LoadError("graph file not found: " + c.graph_path.string());
  if (!std::filesystem::exists(c.data_path)) throw LoadError("data file not found: " + c.data_path.string());
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return run_config_from_json(read_json_file(path), path.parent_path());
}

json odds_spec_to_json(const OddsSpec& odds) {
  json out = json::object();
  for (const auto& [r, poly] : odds) {
    json terms = json::array();
    for (const auto& t : poly.terms) terms.push_back({{"powers", t.powers}, {"coef", t.coef}});
    out[r.str()] = {{"constant", poly.constant}, {"terms", terms}};
  }
  return out;
}

OddsSpec odds_spec_from_json(const json& j, std::size_t d) {
  if (!j.is_object()) throw ParseError("odds must be an object keyed by pattern");
  OddsSpec out;
  for (const auto& [key, v] : j.items()) {
    const auto r = parse_pattern(key);
    if (r.size() != d) throw ParseError("odds pattern " + key + " has the wrong length");
    const std::string where = "odds." + key;
    check_keys(v, {"constant", "terms"}, where);
    OddsPolynomial poly;
    if (v.contains("constant")) poly.constant = get<double>(v, "constant", where);
    if (v.contains("terms"))
      for (const auto& t : v.at("terms")) {
        check_keys(t, {"powers", "coef"}, where + ".terms");
        OddsPolynomial::Term term;
        term.powers = get<std::vector<int>>(t, "powers", where);
        term.coef = get<double>(t, "coef", where);
        if (term.powers.size() != d) throw ParseError(where + ": powers must have length " + std::to_string(d));
        for (int pw : term.powers)
          if (pw < 0) throw ParseError(where + ": powers must be nonnegative");
        poly.terms.push_back(std::move(term));
      }
    out.emplace(r, std::move(poly));
  }
  return out;
}

SimStudyConfig sim_config_from_json(const json& j, const std::filesystem::path& base) {
  check_keys(j,
             {"n", "reps", "seed", "theta_true", "graph", "odds", "methods", "basis", "solver", "lambda", "method_lambda",
              "newton", "blowup_threshold", "threads", "fit_graphs", "out", "long_output"},
             "simulation config");
  const std::string where = "simulation config";
  SimStudyConfig c;
  auto& s = c.sim;
  s = default_sim_config();
  if (j.contains("n")) s.n = get<std::size_t>(j, "n", where);
  if (j.contains("reps")) s.reps = get<int>(j, "reps", where);
  if (j.contains("seed")) s.seed = get<std::uint64_t>(j, "seed", where);
  if (j.contains("theta_true")) {
    const auto v = get<std::vector<double>>(j, "theta_true", where);
    s.theta_true = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  if (j.contains("graph")) s.graph = graph_from_value(j.at("graph"), base, "graph");
  if (j.contains("odds")) {
    const auto& o = j.at("odds");
    if (o.is_object() && o.contains("default")) {
      const auto& d = o.at("default");
      check_keys(d, {"seed", "scale"}, "odds.default");
      const auto seed = d.contains("seed") ? get<std::uint64_t>(d, "seed", "odds.default") : std::uint64_t{4};
      const double scale = d.contains("scale") ? get<double>(d, "scale", "odds.default") : 1.0;
      s.odds = default_odds_spec(s.graph, seed, scale);
    } else {
      s.odds = odds_spec_from_json(o, s.graph.dim());
    }
  } else if (j.contains("graph")) {
    s.odds = default_odds_spec(s.graph);
  }
  if (j.contains("methods")) {
    s.methods.clear();
    for (const auto& m : get<std::vector<std::string>>(j, "methods", where)) s.methods.push_back(parse_sim_method(m));
  }
  if (j.contains("basis")) s.fit.basis = basis_config_from_json(j.at("basis"));
  if (j.contains("solver")) s.fit.solver = solver_options_from_json(j.at("solver"));
  if (j.contains("lambda")) {
    s.fit.lambda = lambda_policy_from_json(j.at("lambda"));
    s.method_lambda.clear();
  }
  if (j.contains("method_lambda")) {
    s.method_lambda.clear();
    for (const auto& [m, v] : get<std::map<std::string, double>>(j, "method_lambda", where)) {
      if (!(v >= 0.0)) throw ParseError("method_lambda." + m + " must be nonnegative");
      s.method_lambda[parse_sim_method(m)] = v;
    }
  }
  if (j.contains("newton")) {
    const auto& n = j.at("newton");
    check_keys(n, {"tol", "max_iter"}, "newton");
    if (n.contains("tol")) s.newton.tol = get<double>(n, "tol", "newton");
    if (n.contains("max_iter")) s.newton.max_iter = get<int>(n, "max_iter", "newton");
  }
  if (j.contains("blowup_threshold")) s.blowup_threshold = get<double>(j, "blowup_threshold", where);
  s.threads = j.contains("threads") ? get<int>(j, "threads", where) : 0;
  if (j.contains("fit_graphs")) {
    const auto& fg = j.at("fit_graphs");
    if (!fg.is_array()) throw ParseError("fit_graphs must be an array of {\"label\", \"graph\"} objects");
    for (const auto& e : fg) {
      check_keys(e, {"label", "graph"}, "fit_graphs entry");
      c.fit_graphs.emplace_back(get<std::string>(e, "label", "fit_graphs entry"),
                                graph_from_value(e.at("graph"), base, "fit_graphs entry"));
    }
  }
  if (c.fit_graphs.empty()) c.fit_graphs.emplace_back("G1", s.graph);
  if (j.contains("out")) c.out_dir = resolve(base, get<std::string>(j, "out", where));
  else c.out_dir = base / "out";
  if (j.contains("long_output")) c.long_output = get<bool>(j, "long_output", where);
  return c;
}

SimStudyConfig load_sim_config(const std::filesystem::path& path) {
  return sim_config_from_json(read_json_file(path), path.parent_path());
}

}  // namespace seqbal
