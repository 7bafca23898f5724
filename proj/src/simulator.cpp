#include "seqbal/simulator.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

#include "seqbal/error.hpp"
#include "seqbal/format.hpp"
#include "seqbal/parallel.hpp"
#include "seqbal/pipeline.hpp"

namespace seqbal {

double OddsPolynomial::eval(std::span<const double> full_row) const {
  double v = constant;
  for (const auto& t : terms) {
    double m = t.coef;
    for (std::size_t j = 0; j < t.powers.size(); ++j)
      for (int k = 0; k < t.powers[j]; ++k) m *= full_row[j];
    v += m;
  }
  return v;
}

int OddsPolynomial::degree() const {
  int deg = 0;
  for (const auto& t : terms) {
    int s = 0;
    for (int p : t.powers) s += p;
    deg = std::max(deg, s);
  }
  return deg;
}

bool OddsPolynomial::uses_only(const Pattern& r) const {
  for (const auto& t : terms)
    for (std::size_t j = 0; j < t.powers.size(); ++j)
      if (t.powers[j] > 0 && (j >= r.size() || !r.observed(j))) return false;
  return true;
}

std::string_view to_string(SimMethod m) {
  switch (m) {
    case SimMethod::full: return "full";
    case SimMethod::cc: return "cc";
    case SimMethod::true_weight: return "true";
    case SimMethod::entropy: return "entropy";
    case SimMethod::local: return "local";
    case SimMethod::seq: return "seq";
  }
  return "seq";
}

SimMethod parse_sim_method(std::string_view s) {
  if (s == "full") return SimMethod::full;
  if (s == "cc") return SimMethod::cc;
  if (s == "true") return SimMethod::true_weight;
  if (s == "entropy") return SimMethod::entropy;
  if (s == "local") return SimMethod::local;
  if (s == "seq" || s == "sequential") return SimMethod::seq;
  throw ParseError("unknown simulation method \"" + std::string(s) + "\" (expected full, cc, true, entropy, local or seq)");
}

namespace {

std::vector<Pattern> simulation_nodes() {
  std::vector<Pattern> out;
  for (const char* s : {"11111", "01111", "10111", "11110", "11001", "10110", "11010", "11000"})
    out.push_back(parse_pattern(s));
  return out;
}

std::vector<Edge> simulation_edges(bool with_shortcut) {
  std::vector<std::pair<const char*, const char*>> raw{
      {"11111", "01111"}, {"11111", "10111"}, {"11111", "11110"}, {"10111", "10110"}, {"11110", "10110"},
      {"11110", "11010"}, {"11001", "11000"}, {"11010", "11000"}, {"11111", "11001"}};
  if (with_shortcut) raw.emplace_back("11111", "11010");
  std::vector<Edge> out;
  for (auto [a, b] : raw) out.emplace_back(parse_pattern(a), parse_pattern(b));
  return out;
}

}  // namespace

PatternGraph simulation_graph() { return PatternGraph(5, simulation_nodes(), simulation_edges(true)); }
PatternGraph sensitivity_graph_g2() { return PatternGraph(5, simulation_nodes(), simulation_edges(false)); }
PatternGraph sensitivity_graph_g3() { return make_ccmv_graph(simulation_nodes()); }

void SimConfig::check() const {
  if (n < 2) throw ContractError("simulation needs n >= 2");
  if (reps < 1) throw ContractError("simulation needs reps >= 1");
  if (theta_true.size() < 2) throw ContractError("theta_true needs an intercept and at least one slope");
  if (graph.dim() != static_cast<std::size_t>(theta_true.size()))
    throw ContractError("graph dimension " + std::to_string(graph.dim()) + " does not match theta_true length " +
                        std::to_string(theta_true.size()));
  const auto report = validate_graph(graph);
  if (!report.regular()) throw ContractError("simulation graph is not regular:\n" + report.to_string());
  if (!graph.all_type1()) throw ContractError("simulation supports Type 1 graphs only");
  const auto one = Pattern::complete(graph.dim());
  for (const auto& r : graph.nodes()) {
    if (r == one) continue;
    auto it = odds.find(r);
    if (it == odds.end()) throw ContractError("no odds polynomial for pattern " + r.str());
    if (!it->second.uses_only(r))
      throw ContractError("odds polynomial for " + r.str() + " depends on a coordinate missing under that pattern");
    for (const auto& t : it->second.terms)
      if (t.powers.size() != graph.dim()) throw ContractError("odds term for " + r.str() + " has the wrong length");
  }
  if (methods.empty()) throw ContractError("no simulation methods selected");
  if (!(blowup_threshold > 0.0)) throw ContractError("blowup threshold must be positive");
}

double truncated_normal(Rng& rng) {
  std::normal_distribution<double> z;
  for (;;) {
    const double v = z(rng);
    if (v >= -3.0 && v <= 3.0) return v;
  }
}

namespace {

Eigen::MatrixXd draw_full(const Eigen::VectorXd& theta, std::size_t n, Rng& rng) {
  const auto d = theta.size();
  Eigen::MatrixXd full(static_cast<Eigen::Index>(n), d);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Eigen::Index i = 0; i < full.rows(); ++i) {
    double eta = theta(0);
    for (Eigen::Index j = 1; j < d; ++j) {
      full(i, j) = truncated_normal(rng);
      eta += theta(j) * full(i, j);
    }
    const double p = 1.0 / (1.0 + std::exp(-eta));
    full(i, 0) = unif(rng) < p ? 1.0 : 0.0;
  }
  return full;
}

Eigen::VectorXd poly_values(const OddsPolynomial& poly, const Eigen::MatrixXd& full) {
  Eigen::VectorXd v(full.rows());
  std::vector<double> row(static_cast<std::size_t>(full.cols()));
  for (Eigen::Index i = 0; i < full.rows(); ++i) {
    for (Eigen::Index j = 0; j < full.cols(); ++j) row[static_cast<std::size_t>(j)] = full(i, j);
    v(i) = poly.eval(row);
  }
  return v;
}

std::map<Pattern, Eigen::VectorXd> q_from_log_odds(const PatternGraph& g, const std::vector<Eigen::VectorXd>& log_odds,
                                                   Eigen::Index n) {
  const auto q = propagate_q(
      g, [&](std::size_t, std::size_t child) -> Eigen::VectorXd { return log_odds[child].array().exp().matrix(); }, n);
  std::map<Pattern, Eigen::VectorXd> out;
  for (std::size_t k = 0; k < g.nodes().size(); ++k) out.emplace(g.nodes()[k], q[k]);
  return out;
}

Eigen::VectorXd pi_from_q(const std::map<Pattern, Eigen::VectorXd>& q, Eigen::Index n) {
  Eigen::VectorXd total = Eigen::VectorXd::Zero(n);
  for (const auto& [r, v] : q) total += v;
  return total.cwiseInverse();
}

}  // namespace

std::map<Pattern, Eigen::VectorXd> true_q(const PatternGraph& g, const OddsSpec& odds, const Eigen::MatrixXd& full) {
  const auto one = Pattern::complete(g.dim());
  std::vector<Eigen::VectorXd> log_odds(g.nodes().size());
  for (std::size_t k = 0; k < g.nodes().size(); ++k) {
    const auto& r = g.nodes()[k];
    if (r == one) {
      log_odds[k] = Eigen::VectorXd::Zero(full.rows());
      continue;
    }
    auto it = odds.find(r);
    if (it == odds.end()) throw ContractError("no odds polynomial for pattern " + r.str());
    log_odds[k] = poly_values(it->second, full);
  }
  return q_from_log_odds(g, log_odds, full.rows());
}

OddsSpec default_odds_spec(const PatternGraph& g, std::uint64_t seed, double scale) {
  const auto d = g.dim();
  const auto one = Pattern::complete(d);
  Rng rng = make_stream_rng(seed, 0);
  std::normal_distribution<double> z;

  auto term = [&](std::initializer_list<std::pair<std::size_t, int>> powers, double coef) {
    OddsPolynomial::Term t;
    t.powers.assign(d, 0);
    for (auto [j, p] : powers) t.powers[j] += p;
    t.coef = coef * scale;
    return t;
  };

  OddsSpec spec;
  for (const auto& r : g.nodes()) {
    if (r == one) continue;
    OddsPolynomial poly;
    std::vector<std::size_t> obs = r.observed_columns();
    std::vector<std::size_t> cont;
    for (std::size_t j : obs) {
      poly.terms.push_back(term({{j, 1}}, 0.5 * z(rng)));
      if (j != 0) cont.push_back(j);
    }
    for (std::size_t j : cont) poly.terms.push_back(term({{j, 2}}, 0.15 * z(rng)));
    for (std::size_t a = 0; a < obs.size(); ++a)
      for (std::size_t b = a + 1; b < obs.size(); ++b) poly.terms.push_back(term({{obs[a], 1}, {obs[b], 1}}, 0.6 * z(rng)));
    if (!cont.empty()) {
      poly.terms.push_back(term({{cont.back(), 3}}, 0.03 * z(rng)));
      poly.terms.push_back(term({{cont.front(), 4}}, -0.01 * std::abs(z(rng))));
    }
    spec.emplace(r, std::move(poly));
  }

  // Calibrate intercepts on a fixed Monte Carlo sample.
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  if (d == 5) theta << 3.0, -2.0, 1.0, 2.0, -1.0;
  Rng mc = make_stream_rng(seed, 1);
  const Eigen::MatrixXd full = draw_full(theta, 20000, mc);
  const auto& nodes = g.nodes();
  std::vector<Eigen::VectorXd> base(nodes.size());
  std::vector<double> c(nodes.size(), 0.0);
  for (std::size_t k = 0; k < nodes.size(); ++k)
    base[k] = nodes[k] == one ? Eigen::VectorXd::Zero(full.rows()) : poly_values(spec.at(nodes[k]), full);

  const double p_complete = 0.4;
  const double p_other = (1.0 - p_complete) / static_cast<double>(std::max<std::size_t>(1, nodes.size() - 1));
  for (int it = 0; it < 500; ++it) {
    std::vector<Eigen::VectorXd> lo(nodes.size());
    for (std::size_t k = 0; k < nodes.size(); ++k) lo[k] = base[k].array() + c[k];
    const auto q = q_from_log_odds(g, lo, full.rows());
    const auto pi = pi_from_q(q, full.rows());
    const double share1 = pi.mean();
    double change = 0.0;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      if (nodes[k] == one) continue;
      const double share = q.at(nodes[k]).cwiseProduct(pi).mean();
      const double step = 0.5 * (std::log(p_other / share) - std::log(p_complete / share1));
      c[k] += step;
      change = std::max(change, std::abs(step));
    }
    if (change < 1e-9) break;
  }
  for (std::size_t k = 0; k < nodes.size(); ++k)
    if (nodes[k] != one) spec.at(nodes[k]).constant = c[k];
  return spec;
}

SimConfig default_sim_config() {
  SimConfig cfg;
  cfg.odds = default_odds_spec(cfg.graph);
  cfg.fit.lambda.use_cv = false;
  cfg.fit.lambda.fixed = 1e-2;
  cfg.method_lambda = {{SimMethod::entropy, 5e-3}, {SimMethod::local, 3.5e-2}, {SimMethod::seq, 3.5e-2}};
  return cfg;
}

GeneratedData generate(const SimConfig& cfg, std::uint64_t rep_index) {
  const auto& g = cfg.graph;
  const auto d = g.dim();
  Rng rng = make_stream_rng(cfg.seed, rep_index);
  GeneratedData out;
  out.full = draw_full(cfg.theta_true, cfg.n, rng);
  out.q = true_q(g, cfg.odds, out.full);
  out.pi = pi_from_q(out.q, out.full.rows());

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> values(cfg.n * d);
  std::vector<std::uint8_t> observed(cfg.n * d);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double u = unif(rng);
    double acc = 0.0;
    const Pattern* chosen = &g.nodes().back();
    for (const auto& r : g.nodes()) {
      acc += out.q.at(r)(ii) * out.pi(ii);
      if (u < acc) {
        chosen = &r;
        break;
      }
    }
    for (std::size_t j = 0; j < d; ++j) {
      const bool obs = chosen->observed(j);
      observed[i * d + j] = obs ? 1 : 0;
      values[i * d + j] = obs ? out.full(ii, static_cast<Eigen::Index>(j)) : 0.0;
    }
  }
  std::vector<std::string> names{"Y"};
  std::vector<ColumnKind> kinds{ColumnKind::discrete};
  for (std::size_t j = 1; j < d; ++j) {
    names.push_back("X" + std::to_string(j));
    kinds.push_back(ColumnKind::continuous);
  }
  out.data = Dataset(std::move(names), std::move(kinds), std::move(values), std::move(observed));
  return out;
}

WeightSet true_weights(const SimConfig& cfg, const GeneratedData& gen) {
  WeightSet ws;
  ws.complete_rows = gen.data.complete_rows();
  const auto m = static_cast<Eigen::Index>(ws.complete_rows.size());
  for (const auto& r : cfg.graph.nodes()) {
    const auto& all = gen.q.at(r);
    Eigen::VectorXd v(m);
    for (Eigen::Index k = 0; k < m; ++k) v(k) = all(static_cast<Eigen::Index>(ws.complete_rows[static_cast<std::size_t>(k)]));
    ws.q.emplace(r, std::move(v));
  }
  ws.assemble();
  return ws;
}

namespace {

EstimatingFunctionSpec sim_spec(std::size_t d) {
  EstimatingFunctionSpec spec;
  spec.outcome = 0;
  for (std::size_t j = 1; j < d; ++j) spec.predictors.push_back(j);
  return spec;
}

}  // namespace

std::optional<Eigen::VectorXd> run_method(const SimConfig& cfg, SimMethod method, const GeneratedData& gen,
                                          const PatternGraph& fit_graph) {
  const auto& ds = gen.data;
  const auto spec = sim_spec(ds.n_cols());
  try {
    switch (method) {
      case SimMethod::full: {
        RegressionData data;
        data.x.resize(gen.full.rows(), gen.full.cols());
        data.x.col(0).setOnes();
        data.x.rightCols(gen.full.cols() - 1) = gen.full.rightCols(gen.full.cols() - 1);
        data.y = gen.full.col(0);
        return solve_ee(data, Eigen::VectorXd::Ones(data.x.rows()), static_cast<double>(data.x.rows()), cfg.newton)
            .theta;
      }
      case SimMethod::cc: {
        const auto data = regression_data(ds, spec, ds.complete_rows());
        return solve_ee(data, Eigen::VectorXd::Ones(data.x.rows()), static_cast<double>(data.x.rows()), cfg.newton)
            .theta;
      }
      case SimMethod::true_weight: {
        const auto ws = true_weights(cfg, gen);
        if (ws.max_weight() > cfg.blowup_threshold) return std::nullopt;
        return solve_weighted_ee(ds, ws, spec, cfg.newton).theta;
      }
      case SimMethod::entropy:
      case SimMethod::local:
      case SimMethod::seq: {
        const Method m = method == SimMethod::entropy ? Method::entropy
                         : method == SimMethod::local ? Method::local
                                                      : Method::seq;
        WeightFitOptions opts = cfg.fit;
        if (auto it = cfg.method_lambda.find(method); it != cfg.method_lambda.end()) {
          opts.lambda.use_cv = false;
          opts.lambda.fixed = it->second;
        }
        const auto wf = fit_weights(fit_graph, ds, m, opts);
        for (const auto& model : wf.models)
          if (!model.solve.converged) return std::nullopt;
        if (!(wf.weights.max_weight() <= cfg.blowup_threshold)) return std::nullopt;
        return solve_weighted_ee(ds, wf.weights, spec, cfg.newton).theta;
      }
    }
  } catch (const Error&) {
    return std::nullopt;
  }
  return std::nullopt;
}

const MethodSummary& StudyResult::get(std::string_view method, std::string_view graph) const {
  for (const auto& m : methods)
    if (m.method == method && (m.graph == graph || m.graph.empty())) return m;
  throw LookupError("no study result for method " + std::string(method) + " on graph " + std::string(graph));
}

namespace {

void summarize(MethodSummary& s, const Eigen::VectorXd& theta) {
  const auto q = theta.size();
  s.bias = Eigen::VectorXd::Zero(q);
  s.mse = Eigen::VectorXd::Zero(q);
  s.successes = 0;
  s.failures = 0;
  for (const auto& e : s.estimates) {
    if (!e) {
      ++s.failures;
      continue;
    }
    ++s.successes;
    const Eigen::VectorXd diff = *e - theta;
    s.bias += diff;
    s.mse += diff.cwiseAbs2();
  }
  if (s.successes > 0) {
    s.bias /= s.successes;
    s.mse /= s.successes;
    s.bias_l1 = s.bias.cwiseAbs().sum();
    s.mse_l2 = s.mse.norm();
  } else {
    s.bias.setConstant(std::nan(""));
    s.mse.setConstant(std::nan(""));
    s.bias_l1 = s.mse_l2 = std::nan("");
  }
}

bool graph_dependent(SimMethod m) {
  return m == SimMethod::entropy || m == SimMethod::local || m == SimMethod::seq;
}

}  // namespace

StudyResult sensitivity_study(const SimConfig& cfg, const std::vector<std::pair<std::string, PatternGraph>>& graphs) {
  cfg.check();
  if (graphs.empty()) throw ContractError("no fitting graphs given");
  for (const auto& [label, fg] : graphs)
    if (fg.nodes() != cfg.graph.nodes())
      throw ContractError("fitting graph " + label + " must have the same patterns as the generating graph");

  // Slots: graph-free methods once, weighting methods once per graph.
  struct Slot {
    SimMethod method;
    std::size_t graph;
    bool per_graph;
  };
  std::vector<Slot> slots;
  for (auto m : cfg.methods) {
    if (graph_dependent(m)) {
      for (std::size_t k = 0; k < graphs.size(); ++k) slots.push_back({m, k, true});
    } else {
      slots.push_back({m, 0, false});
    }
  }

  const auto reps = static_cast<std::size_t>(cfg.reps);
  std::vector<std::vector<std::optional<Eigen::VectorXd>>> est(slots.size(),
                                                               std::vector<std::optional<Eigen::VectorXd>>(reps));
  parallel_for(reps, cfg.threads, [&](std::size_t rep) {
    const auto gen = generate(cfg, rep);
    for (std::size_t s = 0; s < slots.size(); ++s)
      est[s][rep] = run_method(cfg, slots[s].method, gen, graphs[slots[s].graph].second);
  });

  StudyResult res;
  for (std::size_t s = 0; s < slots.size(); ++s) {
    MethodSummary ms;
    ms.method = std::string(to_string(slots[s].method));
    ms.graph = slots[s].per_graph ? graphs[slots[s].graph].first : "";
    ms.estimates = std::move(est[s]);
    summarize(ms, cfg.theta_true);
    res.methods.push_back(std::move(ms));
  }
  return res;
}

StudyResult run_study(const SimConfig& cfg) { return sensitivity_study(cfg, {{"G1", cfg.graph}}); }

namespace {

std::string coef_name(Eigen::Index j) { return "theta" + std::to_string(j + 1); }

}  // namespace

void write_study_csv(const StudyResult& res, std::ostream& out) {
  out << "method,graph,coef,bias,mse,successes,failures\n";
  for (const auto& m : res.methods) {
    const std::string head = m.method + "," + m.graph + ",";
    const std::string tail = "," + std::to_string(m.successes) + "," + std::to_string(m.failures) + "\n";
    for (Eigen::Index j = 0; j < m.bias.size(); ++j)
      out << head << coef_name(j) << "," << format_double(m.bias(j)) << "," << format_double(m.mse(j)) << tail;
    out << head << "norm" << "," << format_double(m.bias_l1) << "," << format_double(m.mse_l2) << tail;
  }
}

void write_study_long(const StudyResult& res, std::ostream& out) {
  out << "rep,method,graph,coef,estimate\n";
  for (const auto& m : res.methods)
    for (std::size_t r = 0; r < m.estimates.size(); ++r) {
      const auto& e = m.estimates[r];
      if (!e) continue;
      for (Eigen::Index j = 0; j < e->size(); ++j)
        out << r << "," << m.method << "," << m.graph << "," << coef_name(j) << "," << format_double((*e)(j)) << "\n";
    }
}

std::string study_table(const StudyResult& res) {
  std::ostringstream os;
  os << std::left << std::setw(10) << "method" << std::setw(8) << "graph" << std::right << std::setw(12) << "|bias|_1"
     << std::setw(12) << "|MSE|_2" << std::setw(8) << "ok" << std::setw(8) << "failed" << "\n";
  os << std::fixed << std::setprecision(4);
  for (const auto& m : res.methods)
    os << std::left << std::setw(10) << m.method << std::setw(8) << (m.graph.empty() ? "-" : m.graph) << std::right
       << std::setw(12) << m.bias_l1 << std::setw(12) << m.mse_l2 << std::setw(8) << m.successes << std::setw(8)
       << m.failures << "\n";
  return os.str();
}

}  // namespace seqbal
