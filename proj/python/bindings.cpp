#include <algorithm>
#include <cmath>
#include <optional>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "seqbal/config.hpp"
#include "seqbal/error.hpp"
#include "seqbal/log.hpp"
#include "seqbal/pipeline.hpp"
#include "seqbal/simulator.hpp"

namespace py = pybind11;
using namespace seqbal;

namespace {

py::dict fit_dict(const PipelineResult& res) {
  py::dict d;
  d["method"] = res.fit.method;
  d["names"] = res.fit.names;
  d["estimate"] = res.fit.theta;
  d["se"] = res.fit.se;
  d["cov"] = res.fit.cov;
  d["p_values"] = res.fit.p_values;
  d["variance"] = res.fit.variance;
  d["converged"] = res.fit.converged;
  d["n"] = res.fit.n;
  d["n_complete"] = res.fit.n_complete;
  if (res.weights) {
    d["weights"] = res.weights->weights.w;
    d["complete_rows"] = res.weights->weights.complete_rows;
  } else {
    d["weights"] = py::none();
    d["complete_rows"] = py::none();
  }
  py::list balance;
  for (const auto& row : res.balance) {
    py::dict b;
    b["pattern"] = row.pattern.str();
    b["term"] = row.term;
    b["label"] = row.label;
    b["target_mean"] = row.target_mean;
    b["weighted_mean"] = row.weighted_mean;
    b["gap"] = row.gap;
    b["slack"] = row.slack;
    balance.append(b);
  }
  d["balance"] = balance;
  d["table"] = res.fit.to_table();
  return d;
}

void apply_lambda(PipelineConfig& pc, std::optional<double> lambda) {
  if (!lambda) return;
  pc.weights.lambda.use_cv = false;
  pc.weights.lambda.fixed = *lambda;
}

EstimatingFunctionSpec spec_for(const Dataset& ds, const std::string& outcome, std::vector<std::string> predictors) {
  if (predictors.empty())
    for (const auto& name : ds.column_names())
      if (name != outcome) predictors.push_back(name);
  return EstimatingFunctionSpec::from_names(ds, outcome, predictors);
}

// NaN marks a missing cell.
Dataset dataset_from_array(const Eigen::Ref<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>& x,
                           const std::vector<std::string>& columns, const std::vector<std::string>& discrete) {
  if (static_cast<std::size_t>(x.cols()) != columns.size())
    throw ContractError("expected " + std::to_string(x.cols()) + " column names, got " + std::to_string(columns.size()));
  std::vector<double> values(static_cast<std::size_t>(x.size()));
  std::vector<std::uint8_t> observed(values.size());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const auto k = static_cast<std::size_t>(i * x.cols() + j);
      observed[k] = std::isnan(x(i, j)) ? 0 : 1;
      values[k] = observed[k] ? x(i, j) : 0.0;
    }
  std::vector<ColumnKind> kinds;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const auto& name = columns[static_cast<std::size_t>(j)];
    if (std::find(discrete.begin(), discrete.end(), name) != discrete.end()) {
      kinds.push_back(ColumnKind::discrete);
      continue;
    }
    std::vector<double> seen;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      if (!std::isnan(x(i, j))) seen.push_back(x(i, j));
    kinds.push_back(infer_kind(seen));
  }
  return Dataset(columns, kinds, std::move(values), std::move(observed));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Sequential balancing weights for monotone-free missing data";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", error.ptr());
  py::register_exception<LoadError>(m, "LoadError", error.ptr());
  py::register_exception<LookupError>(m, "LookupError", error.ptr());
  py::register_exception<ContractError>(m, "ContractError", error.ptr());
  py::register_exception<FitError>(m, "FitError", error.ptr());

  m.def(
      "set_quiet", [](bool quiet) { set_log_level(quiet ? LogLevel::quiet : LogLevel::warning); }, py::arg("quiet") = true);

  m.def(
      "validate_graph",
      [](const std::filesystem::path& path) {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& v : validate_graph(read_graph_file(path)).violations)
          out.emplace_back(std::string(to_string(v.kind)), v.message);
        return out;
      },
      py::arg("path"), "List of (kind, message) violations; empty for a regular graph.");

  m.def(
      "fit",
      [](const std::filesystem::path& config, std::optional<std::string> method, std::optional<double> lambda,
         std::optional<std::uint64_t> seed, std::optional<int> threads) {
        auto cfg = load_run_config(config);
        if (method) cfg.pipeline.method = parse_method(*method);
        apply_lambda(cfg.pipeline, lambda);
        if (seed) {
          cfg.pipeline.seed = *seed;
          cfg.pipeline.weights.lambda.seed = *seed;
        }
        if (threads) cfg.pipeline.threads = *threads;
        const auto g = load_graph(cfg.graph_path);
        const auto ds = load_csv(cfg.data_path, cfg.csv);
        const auto spec = spec_for(ds, cfg.outcome, cfg.predictors);
        py::gil_scoped_release release;
        auto res = run_pipeline(g, ds, spec, cfg.pipeline);
        py::gil_scoped_acquire acquire;
        return fit_dict(res);
      },
      py::arg("config"), py::arg("method") = py::none(), py::arg("lam") = py::none(), py::arg("seed") = py::none(),
      py::arg("threads") = py::none(), "Run a fit described by a JSON config file.");

  m.def(
      "fit_array",
      [](const std::filesystem::path& graph, const Eigen::Ref<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                                             Eigen::RowMajor>>& data,
         const std::vector<std::string>& columns, const std::string& outcome, const std::vector<std::string>& predictors,
         const std::string& method, std::optional<double> lambda, const std::vector<std::string>& discrete, int threads) {
        const auto g = load_graph(graph);
        const auto ds = dataset_from_array(data, columns, discrete);
        const auto spec = spec_for(ds, outcome, predictors);
        PipelineConfig pc;
        pc.method = parse_method(method);
        pc.threads = threads;
        apply_lambda(pc, lambda);
        return fit_dict(run_pipeline(g, ds, spec, pc));
      },
      py::arg("graph"), py::arg("data"), py::arg("columns"), py::arg("outcome"),
      py::arg("predictors") = std::vector<std::string>{}, py::arg("method") = "seq", py::arg("lam") = py::none(),
      py::arg("discrete") = std::vector<std::string>{}, py::arg("threads") = 1,
      "Fit on an in-memory array where NaN marks missing cells.");

  m.def(
      "generate",
      [](std::size_t n, std::uint64_t seed) {
        SimConfig cfg = default_sim_config();
        cfg.n = n;
        cfg.seed = seed;
        const auto gen = generate(cfg, 0);
        Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(gen.data.n_cols()));
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < gen.data.n_cols(); ++j)
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                gen.data.observed(i, j) ? gen.data.value(i, j) : std::nan("");
        return py::make_tuple(x, gen.data.column_names());
      },
      py::arg("n") = 1000, py::arg("seed") = 1, "One simulated data set; NaN marks missing cells.");

  m.def(
      "simulate",
      [](const std::filesystem::path& config, std::optional<int> reps, std::optional<std::uint64_t> seed,
         std::optional<int> threads) {
        auto cfg = load_sim_config(config);
        if (reps) cfg.sim.reps = *reps;
        if (seed) cfg.sim.seed = *seed;
        if (threads) cfg.sim.threads = *threads;
        StudyResult res;
        {
          py::gil_scoped_release release;
          res = sensitivity_study(cfg.sim, cfg.fit_graphs);
        }
        py::list rows;
        for (const auto& s : res.methods) {
          py::dict d;
          d["method"] = s.method;
          d["graph"] = s.graph;
          d["successes"] = s.successes;
          d["failures"] = s.failures;
          d["bias"] = s.bias;
          d["mse"] = s.mse;
          d["bias_l1"] = s.bias_l1;
          d["mse_l2"] = s.mse_l2;
          rows.append(d);
        }
        return rows;
      },
      py::arg("config"), py::arg("reps") = py::none(), py::arg("seed") = py::none(), py::arg("threads") = py::none(),
      "Run a simulation study config; one summary dict per method and graph.");
}
