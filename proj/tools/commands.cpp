#include "commands.hpp"

#include <fstream>
#include <ostream>

#include "seqbal/config.hpp"
#include "seqbal/error.hpp"
#include "seqbal/log.hpp"
#include "seqbal/parallel.hpp"

namespace seqbal::cli {

namespace {

int resolve_threads(int configured, const Overrides& ov) {
  const int t = ov.threads ? *ov.threads : configured;
  return t > 0 ? t : default_threads();
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw LoadError("cannot write " + p.string());
  return f;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw LoadError("cannot create output directory " + dir.string() + ": " + ec.message());
}

// Maps library exceptions onto the exit-code contract.
template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const LoadError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace

int cmd_validate(const std::filesystem::path& graph_path, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    PatternGraph g = [&] {
      try {
        return read_graph_file(graph_path);
      } catch (const ContractError& e) {
        throw ParseError(graph_path.string() + ": " + e.what());
      }
    }();
    const auto report = validate_graph(g);
    if (!report.regular()) {
      out << report.to_string();
      return 1;
    }
    out << "regular pattern graph: " << g.nodes().size() << " patterns, " << g.edges().size() << " edges\n";
    out << "processing order:";
    for (const auto& r : processing_order(g)) out << " " << r.str();
    out << "\n";
    return 0;
  });
}

int cmd_fit(const std::filesystem::path& config_path, const Overrides& ov, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto cfg = load_run_config(config_path);
    if (ov.seed) {
      cfg.pipeline.seed = *ov.seed;
      cfg.pipeline.weights.lambda.seed = *ov.seed;
    }
    if (ov.out) cfg.out_dir = *ov.out;
    cfg.pipeline.threads = resolve_threads(cfg.pipeline.threads, ov);

    const auto g = load_graph(cfg.graph_path);
    const auto ds = load_csv(cfg.data_path, cfg.csv);
    std::vector<std::string> predictors = cfg.predictors;
    if (predictors.empty())
      for (const auto& name : ds.column_names())
        if (name != cfg.outcome) predictors.push_back(name);
    const auto spec = EstimatingFunctionSpec::from_names(ds, cfg.outcome, predictors);
    const auto res = run_pipeline(g, ds, spec, cfg.pipeline);

    ensure_dir(cfg.out_dir);
    open_out(cfg.out_dir / "fit.json") << res.fit.to_json() << "\n";
    {
      auto f = open_out(cfg.out_dir / "weights.csv");
      if (res.weights) {
        write_weights_csv(res.weights->weights, ds, f);
      } else {
        WeightSet unit;
        unit.complete_rows = ds.complete_rows();
        unit.q[Pattern::complete(ds.n_cols())] =
            Eigen::VectorXd::Ones(static_cast<Eigen::Index>(unit.complete_rows.size()));
        unit.assemble();
        write_weights_csv(unit, ds, f);
      }
    }
    {
      auto f = open_out(cfg.out_dir / "balance.csv");
      write_balance_csv(res.balance, f);
    }
    const auto table = res.fit.to_table();
    open_out(cfg.out_dir / "table.txt") << table;
    out << table;
    return 0;
  });
}

int cmd_simulate(const std::filesystem::path& config_path, const Overrides& ov, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto cfg = load_sim_config(config_path);
    if (ov.seed) cfg.sim.seed = *ov.seed;
    if (ov.out) cfg.out_dir = *ov.out;
    cfg.sim.threads = resolve_threads(cfg.sim.threads, ov);
    const auto res = sensitivity_study(cfg.sim, cfg.fit_graphs);
    ensure_dir(cfg.out_dir);
    {
      auto f = open_out(cfg.out_dir / "study.csv");
      write_study_csv(res, f);
    }
    if (cfg.long_output) {
      auto f = open_out(cfg.out_dir / "study_long.csv");
      write_study_long(res, f);
    }
    out << study_table(res);
    return 0;
  });
}

int cmd_generate(const GenerateOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    SimConfig cfg = default_sim_config();
    if (opts.graph) cfg.graph = load_graph(*opts.graph);
    cfg.odds = default_odds_spec(cfg.graph, 4, opts.odds_scale);
    cfg.n = opts.n;
    cfg.seed = opts.seed;
    cfg.check();
    const auto gen = generate(cfg, 0);
    if (opts.out.has_parent_path()) ensure_dir(opts.out.parent_path());
    write_csv(gen.data, opts.out);
    out << "wrote " << gen.data.n_rows() << " rows to " << opts.out.string() << "\n";
    return 0;
  });
}

}  // namespace seqbal::cli
