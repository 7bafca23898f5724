#include "seqbal/pipeline.hpp"

#include <random>

#include "seqbal/error.hpp"
#include "seqbal/log.hpp"
#include "seqbal/parallel.hpp"
#include "seqbal/rng.hpp"

namespace seqbal {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::cc: return "cc";
    case Method::entropy: return "entropy";
    case Method::local: return "local";
    case Method::seq: return "seq";
  }
  return "seq";
}

Method parse_method(std::string_view s) {
  if (s == "cc") return Method::cc;
  if (s == "entropy") return Method::entropy;
  if (s == "local") return Method::local;
  if (s == "seq" || s == "sequential") return Method::seq;
  throw ParseError("unknown method \"" + std::string(s) + "\" (expected entropy, local, seq or cc)");
}

WeightFit fit_weights(const PatternGraph& g, const Dataset& ds, Method method, const WeightFitOptions& opts) {
  switch (method) {
    case Method::entropy: {
      auto models = fit_local(g, ds, LossKind::entropy, opts);
      auto ws = assemble_local_weights(models, g, ds, WeightMethod::entropy);
      return {std::move(models), std::move(ws)};
    }
    case Method::local: {
      auto models = fit_local(g, ds, LossKind::tailored, opts);
      auto ws = assemble_local_weights(models, g, ds, WeightMethod::local);
      return {std::move(models), std::move(ws)};
    }
    case Method::seq: {
      auto fit = fit_sequential(g, ds, opts);
      return {std::move(fit.models), std::move(fit.weights)};
    }
    case Method::cc: break;
  }
  throw ContractError("the complete-case method has no weights");
}

namespace {

Eigen::VectorXd estimate_once(const Dataset& ds, const PatternGraph& g, const EstimatingFunctionSpec& spec,
                              const PipelineConfig& cfg) {
  if (cfg.method == Method::cc) {
    const auto data = regression_data(ds, spec, ds.complete_rows());
    return solve_ee(data, Eigen::VectorXd::Ones(data.x.rows()), static_cast<double>(data.x.rows()), cfg.newton).theta;
  }
  const auto wf = fit_weights(g, ds, cfg.method, cfg.weights);
  return solve_weighted_ee(ds, wf.weights, spec, cfg.newton).theta;
}

}  // namespace

BootstrapResult bootstrap_covariance(const Dataset& ds, const PatternGraph& g, const EstimatingFunctionSpec& spec,
                                     const PipelineConfig& cfg, const std::map<std::string, double>& lambdas, int reps,
                                     std::uint64_t seed) {
  if (reps < 2) throw ContractError("bootstrap needs at least 2 replicates");
  PipelineConfig rcfg = cfg;
  rcfg.weights.lambda.use_cv = false;
  rcfg.weights.lambda.per_model = lambdas;

  const auto n = ds.n_rows();
  std::vector<std::optional<Eigen::VectorXd>> est(static_cast<std::size_t>(reps));
  parallel_for(est.size(), cfg.threads, [&](std::size_t b) {
    auto rng = make_stream_rng(seed, b);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> rows(n);
    for (auto& r : rows) r = pick(rng);
    try {
      est[b] = estimate_once(ds.select_rows(rows), g, spec, rcfg);
    } catch (const Error&) {
      est[b].reset();
    }
  });

  BootstrapResult res;
  std::vector<Eigen::VectorXd> ok;
  for (auto& e : est)
    if (e) ok.push_back(*e);
  res.replicates = static_cast<int>(ok.size());
  res.failures = reps - res.replicates;
  if (res.failures * 5 > reps)
    throw FitError("bootstrap failed: " + std::to_string(res.failures) + " of " + std::to_string(reps) +
                   " replicates did not produce an estimate");
  if (ok.size() < 2) throw FitError("bootstrap produced fewer than 2 usable replicates");
  const auto q = ok.front().size();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(q);
  for (const auto& e : ok) mean += e;
  mean /= static_cast<double>(ok.size());
  res.cov = Eigen::MatrixXd::Zero(q, q);
  for (const auto& e : ok) res.cov += (e - mean) * (e - mean).transpose();
  res.cov /= static_cast<double>(ok.size() - 1);
  res.low_precision = ok.size() < 50;
  if (res.low_precision)
    log_warning("bootstrap covariance from " + std::to_string(ok.size()) + " replicates is low precision");
  return res;
}

PipelineResult run_pipeline(const PatternGraph& g, const Dataset& ds, const EstimatingFunctionSpec& spec,
                            const PipelineConfig& cfg) {
  PipelineResult out;
  out.check = check_against_graph(ds, g);
  if (!out.check.ok()) throw FitError("data does not match the pattern graph:\n" + out.check.to_string());
  for (const auto& w : out.check.warnings) log_warning(w);

  auto& fit = out.fit;
  fit.method = std::string(to_string(cfg.method));
  fit.names = spec.parameter_names(ds);
  fit.n = ds.n_rows();
  fit.n_complete = ds.complete_rows().size();

  VarianceMethod variance = cfg.variance;
  if (cfg.method != Method::cc && !g.all_type1() && variance == VarianceMethod::sandwich) {
    log_warning("sandwich variance is implemented for Type 1 graphs only; using the bootstrap");
    variance = VarianceMethod::bootstrap;
  }
  fit.variance = variance == VarianceMethod::sandwich ? "sandwich" : "bootstrap";

  std::map<std::string, double> lambdas;
  if (cfg.method == Method::cc) {
    const auto data = regression_data(ds, spec, ds.complete_rows());
    const auto sol = solve_ee(data, Eigen::VectorXd::Ones(data.x.rows()), static_cast<double>(data.x.rows()), cfg.newton);
    fit.theta = sol.theta;
    fit.newton_iterations = sol.iterations;
    if (variance == VarianceMethod::sandwich) fit.cov = classical_sandwich(data, sol.theta);
  } else {
    out.weights = fit_weights(g, ds, cfg.method, cfg.weights);
    const auto& wf = *out.weights;
    out.balance = balance_report(wf.weights, wf.models, g, ds);
    const auto sol = solve_weighted_ee(ds, wf.weights, spec, cfg.newton);
    fit.theta = sol.theta;
    fit.newton_iterations = sol.iterations;
    for (const auto& m : wf.models) lambdas[model_key(m)] = m.lambda;
    if (variance == VarianceMethod::sandwich) {
      std::map<Pattern, BasisSpec> bases;
      for (const auto& m : wf.models) bases.emplace(m.pattern, m.spec);
      fit.cov = sandwich_covariance(ds, wf.weights, spec, sol.theta, bases);
    }
  }
  fit.converged = true;

  if (variance == VarianceMethod::bootstrap) {
    out.bootstrap = bootstrap_covariance(ds, g, spec, cfg, lambdas, cfg.bootstrap_reps, cfg.seed);
    fit.cov = out.bootstrap->cov;
  }
  fit.finalize();
  return out;
}

}  // namespace seqbal
