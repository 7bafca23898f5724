#include "seqbal/weights.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "seqbal/error.hpp"
#include "seqbal/format.hpp"
#include "seqbal/log.hpp"

namespace seqbal {

std::string_view to_string(WeightMethod m) {
  switch (m) {
    case WeightMethod::entropy: return "entropy";
    case WeightMethod::local: return "local";
    case WeightMethod::sequential: return "seq";
  }
  return "seq";
}

Eigen::VectorXd OddsModel::odds(const Dataset& ds, std::span<const std::size_t> rows) const {
  const Eigen::VectorXd eta = design_matrix(spec, ds, rows) * alpha;
  // exp() stays finite; anything this large is reported as a weight blow-up.
  return eta.array().min(700.0).exp().matrix();
}

std::string model_key(const Pattern& r, const std::optional<Pattern>& parent) {
  return parent ? r.str() + "|" + parent->str() : r.str();
}

std::string model_key(const OddsModel& m) { return model_key(m.pattern, m.pairwise_parent); }

const OddsModel& find_model(const ModelSet& models, const Pattern& r, const std::optional<Pattern>& parent) {
  for (const auto& m : models)
    if (m.pattern == r && m.pairwise_parent == parent) return m;
  throw FitError("no odds model for " + model_key(r, parent));
}

void WeightSet::assemble() {
  w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(complete_rows.size()));
  for (const auto& [p, v] : q) w += v;
}

double WeightSet::max_weight() const { return w.size() ? w.maxCoeff() : 0.0; }

std::vector<Eigen::VectorXd> propagate_q(
    const PatternGraph& g, const std::function<Eigen::VectorXd(std::size_t, std::size_t)>& edge_factor,
    Eigen::Index n_rows) {
  const auto order = processing_order(g);
  std::vector<Eigen::VectorXd> q(g.size());
  q[g.index_of(Pattern::complete(g.dim()))] = Eigen::VectorXd::Ones(n_rows);
  for (const auto& r : order) {
    const auto ri = g.index_of(r);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(n_rows);
    for (auto si : g.parent_indices(ri)) {
      if (q[si].size() != n_rows) throw FitError("internal ordering error: parent processed after child");
      acc.array() += edge_factor(si, ri).array() * q[si].array();
    }
    q[ri] = std::move(acc);
  }
  return q;
}

namespace {

struct ProblemRows {
  std::vector<std::size_t> source;
  std::vector<std::size_t> target;
};

LossProblem make_problem(LossKind kind, const BasisSpec& spec, const Dataset& ds, const ProblemRows& rows,
                         const Eigen::VectorXd* source_multiplier) {
  LossProblem p;
  p.kind = kind;
  const auto ns = static_cast<Eigen::Index>(rows.source.size());
  const auto nt = static_cast<Eigen::Index>(rows.target.size());
  p.design.resize(ns + nt, static_cast<Eigen::Index>(spec.size()));
  p.design.topRows(ns) = design_matrix(spec, ds, rows.source);
  p.design.bottomRows(nt) = design_matrix(spec, ds, rows.target);
  p.target = Eigen::ArrayXd::Zero(ns + nt);
  p.target.tail(nt).setOnes();
  p.multiplier = Eigen::ArrayXd::Ones(ns + nt);
  if (source_multiplier) p.multiplier.head(ns) = source_multiplier->array();
  p.t = spec.t;
  p.n_total = static_cast<double>(ds.n_rows());
  return p;
}

double choose_lambda(const LossProblem& p, const std::string& key, const WeightFitOptions& opts) {
  const auto& pol = opts.lambda;
  if (auto it = pol.per_model.find(key); it != pol.per_model.end()) return it->second;
  if (!pol.use_cv) return pol.fixed;
  const auto grid = default_lambda_grid(p, pol.grid_size, pol.grid_ratio, opts.solver);
  CvOptions cv;
  cv.k_folds = pol.k_folds;
  cv.seed = stable_hash(key, pol.seed);
  cv.solver = opts.solver;
  return cross_validate(p, grid, cv).lambda;
}

OddsModel solve_model(const Pattern& r, std::optional<Pattern> parent, BasisSpec spec, const LossProblem& p,
                      const WeightFitOptions& opts) {
  OddsModel m;
  m.pattern = r;
  m.pairwise_parent = std::move(parent);
  m.loss = p.kind;
  m.n_target = static_cast<std::size_t>(p.n_target());
  m.n_source = static_cast<std::size_t>(p.n_rows()) - m.n_target;
  const auto key = model_key(m);
  m.lambda = choose_lambda(p, key, opts);
  m.solve = minimize(p, m.lambda, opts.solver);
  if (!m.solve.converged)
    log_warning("odds model " + key + " did not converge (KKT residual " + format_double(m.solve.kkt_residual) + ")");
  m.alpha = m.solve.alpha;
  m.spec = std::move(spec);
  return m;
}

void require_rows(const Pattern& r, const ProblemRows& rows, const std::string& source_desc) {
  if (rows.target.empty()) throw FitError("no observations for pattern " + r.str());
  if (rows.source.empty()) throw FitError("no observations in " + source_desc + " for pattern " + r.str());
}

void require_data_in_graph(const PatternGraph& g, const Dataset& ds) {
  if (ds.n_cols() != g.dim()) throw ContractError("dataset and graph dimensions differ");
  auto report = validate_graph(g);
  if (!report.regular()) throw ContractError("pattern graph is not regular:\n" + report.to_string());
  for (const auto& [p, rows] : ds.pattern_index())
    if (!g.contains(p)) throw FitError("pattern not in graph: " + p.str());
  if (ds.complete_rows().empty()) throw FitError("no complete cases");
}

}  // namespace

ModelSet fit_local(const PatternGraph& g, const Dataset& ds, LossKind loss, const WeightFitOptions& opts) {
  if (loss == LossKind::sequential) throw ContractError("fit_local takes the entropy or tailored loss");
  require_data_in_graph(g, ds);
  ModelSet models;
  for (const auto& r : processing_order(g)) {
    const auto parents = g.parents(r);
    auto spec = build_basis(ds, r, opts.basis);
    if (g.coeff_type(r) == CoeffType::type1) {
      ProblemRows rows;
      rows.target = ds.rows_with(r);
      for (const auto& s : parents) {
        const auto& sr = ds.rows_with(s);
        rows.source.insert(rows.source.end(), sr.begin(), sr.end());
      }
      std::sort(rows.source.begin(), rows.source.end());
      require_rows(r, rows, "parent patterns");
      const auto p = make_problem(loss, spec, ds, rows, nullptr);
      models.push_back(solve_model(r, std::nullopt, spec, p, opts));
    } else {
      for (const auto& s : parents) {
        ProblemRows rows{ds.rows_with(s), ds.rows_with(r)};
        require_rows(r, rows, "parent pattern " + s.str());
        const auto p = make_problem(loss, spec, ds, rows, nullptr);
        models.push_back(solve_model(r, s, spec, p, opts));
      }
    }
  }
  return models;
}

WeightSet assemble_local_weights(const ModelSet& models, const PatternGraph& g, const Dataset& ds,
                                 WeightMethod method) {
  const auto& cc = ds.complete_rows();
  const auto n = static_cast<Eigen::Index>(cc.size());
  const auto& nodes = g.nodes();

  // Odds per (child, parent) evaluated on complete cases, memoized per model.
  std::map<std::string, Eigen::VectorXd> cache;
  auto odds_of = [&](const Pattern& r, const std::optional<Pattern>& s) -> const Eigen::VectorXd& {
    const auto key = model_key(r, s);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, find_model(models, r, s).odds(ds, cc)).first;
    return it->second;
  };

  auto factor = [&](std::size_t si, std::size_t ri) -> Eigen::VectorXd {
    const auto& r = nodes[ri];
    const auto& s = nodes[si];
    switch (g.coeff_type(r)) {
      case CoeffType::type1: return odds_of(r, std::nullopt);
      case CoeffType::type3: return g.type3_constants(r).at(s) * odds_of(r, s);
      case CoeffType::type2: {
        double pa = 0.0;
        for (auto pi : g.parent_indices(ri)) pa += static_cast<double>(ds.rows_with(nodes[pi]).size());
        const double c = static_cast<double>(ds.rows_with(s).size()) / pa;
        return c * odds_of(r, s);
      }
    }
    throw FitError("unknown coefficient type");
  };

  const auto q = propagate_q(g, factor, n);
  WeightSet ws;
  ws.complete_rows = cc;
  ws.method = method;
  for (std::size_t i = 0; i < nodes.size(); ++i) ws.q[nodes[i]] = q[i];
  ws.assemble();
  return ws;
}

SequentialFit fit_sequential(const PatternGraph& g, const Dataset& ds, const WeightFitOptions& opts) {
  require_data_in_graph(g, ds);
  for (const auto& r : g.nodes())
    if (!r.is_complete() && g.coeff_type(r) != CoeffType::type1)
      throw FitError("sequential estimation is not supported for " + std::string(to_string(g.coeff_type(r))) +
                     " mixture coefficients (node " + r.str() + "); use method local or entropy");

  const auto& cc = ds.complete_rows();
  const auto n = static_cast<Eigen::Index>(cc.size());
  SequentialFit out;
  auto& ws = out.weights;
  ws.complete_rows = cc;
  ws.method = WeightMethod::sequential;
  ws.q[Pattern::complete(g.dim())] = Eigen::VectorXd::Ones(n);

  for (const auto& r : processing_order(g)) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(n);
    for (const auto& s : g.parents(r)) {
      auto it = ws.q.find(s);
      if (it == ws.q.end()) throw FitError("internal ordering error: parent " + s.str() + " not yet fitted");
      m += it->second;
    }
    ProblemRows rows{cc, ds.rows_with(r)};
    require_rows(r, rows, "complete cases");
    auto spec = build_basis(ds, r, opts.basis);
    const auto p = make_problem(LossKind::sequential, spec, ds, rows, &m);
    auto model = solve_model(r, std::nullopt, spec, p, opts);
    ws.q[r] = (model.odds(ds, cc).array() * m.array()).matrix();
    out.models.push_back(std::move(model));
  }
  ws.assemble();
  return out;
}

std::string term_label(const BasisTerm& term, const Dataset& ds) {
  if (std::holds_alternative<InterceptTerm>(term)) return "intercept";
  if (const auto* ind = std::get_if<IndicatorTerm>(&term))
    return "indicator(" + ds.column_names()[ind->column] + "=" + format_double(ind->level) + ")";
  const auto& sp = std::get<SplineTerm>(term);
  return "spline(" + ds.column_names()[sp.column] + "," + std::to_string(sp.index + 1) + ")";
}

std::vector<BalanceRow> balance_report(const WeightSet& ws, const ModelSet& models, const PatternGraph& g,
                                       const Dataset& ds) {
  std::vector<BalanceRow> out;
  const double n = static_cast<double>(ds.n_rows());
  for (const auto& r : processing_order(g)) {
    const OddsModel* model = nullptr;
    double lambda = 0.0;
    for (const auto& m : models)
      if (m.pattern == r) {
        if (!model) model = &m;
        lambda = std::max(lambda, m.lambda);
      }
    if (!model) throw FitError("no odds model for pattern " + r.str());
    const auto& spec = model->spec;
    const auto tgt = design_matrix(spec, ds, ds.rows_with(r));
    const auto src = design_matrix(spec, ds, ws.complete_rows);
    const Eigen::VectorXd target_sum = tgt.colwise().sum().transpose();
    const Eigen::VectorXd weighted_sum = src.transpose() * ws.q.at(r);
    for (std::size_t k = 0; k < spec.size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      BalanceRow row{r, k, term_label(spec.terms[k], ds), target_sum(kk) / n, weighted_sum(kk) / n, 0.0,
                     lambda * spec.t(kk)};
      row.gap = std::abs(row.target_mean - row.weighted_mean);
      out.push_back(std::move(row));
    }
  }
  return out;
}

void write_weights_csv(const WeightSet& ws, const Dataset& ds, std::ostream& out) {
  out << "row_id,pattern";
  for (const auto& [p, v] : ws.q) out << ",Q_" << p.str();
  out << ",w\n";
  for (std::size_t a = 0; a < ws.complete_rows.size(); ++a) {
    const auto i = ws.complete_rows[a];
    out << i + 1 << ',' << ds.row_pattern(i).str();
    for (const auto& [p, v] : ws.q) out << ',' << format_double(v(static_cast<Eigen::Index>(a)));
    out << ',' << format_double(ws.w(static_cast<Eigen::Index>(a))) << '\n';
  }
}

void write_balance_csv(const std::vector<BalanceRow>& rows, std::ostream& out) {
  out << "pattern,term,label,target_mean,weighted_mean,gap,slack\n";
  for (const auto& r : rows)
    out << r.pattern.str() << ',' << r.term + 1 << ',' << csv_escape(r.label) << ',' << format_double(r.target_mean)
        << ',' << format_double(r.weighted_mean) << ',' << format_double(r.gap) << ',' << format_double(r.slack)
        << '\n';
}

}  // namespace seqbal
