#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "seqbal/log.hpp"

int main(int argc, char** argv) {
  using namespace seqbal;
  CLI::App app{"Sequential balancing weights for non-monotone missing data"};
  app.require_subcommand(1);
  bool quiet = false, verbose = false;
  app.add_flag("-q,--quiet", quiet, "Suppress warnings");
  app.add_flag("-v,--verbose", verbose, "Print progress information");

  cli::Overrides ov;
  auto add_overrides = [&](CLI::App* sub) {
    sub->add_option("--seed", ov.seed, "Override the config seed");
    sub->add_option("--threads", ov.threads, "Worker threads (default: config, else all cores)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--out", ov.out, "Override the output directory");
  };

  std::string graph_path;
  auto* validate = app.add_subcommand("validate", "Check that a pattern graph is regular");
  validate->add_option("graph", graph_path, "Graph JSON file")->required();

  std::string fit_config;
  auto* fit = app.add_subcommand("fit", "Fit weights and the weighted logistic model");
  fit->add_option("config", fit_config, "Fit config JSON")->required();
  add_overrides(fit);

  std::string sim_config;
  auto* simulate = app.add_subcommand("simulate", "Run a replicated simulation study");
  simulate->add_option("config", sim_config, "Simulation config JSON")->required();
  add_overrides(simulate);

  cli::GenerateOptions gen;
  std::string gen_graph;
  auto* generate = app.add_subcommand("generate", "Write one simulated data set as CSV");
  generate->add_option("--n", gen.n, "Rows")->check(CLI::PositiveNumber);
  generate->add_option("--seed", gen.seed, "Seed");
  generate->add_option("--graph", gen_graph, "Generating graph (default: the simulation graph)");
  generate->add_option("--odds-scale", gen.odds_scale, "Multiplier for the non-constant odds coefficients");
  generate->add_option("--out", gen.out, "Output CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  set_log_level(quiet ? LogLevel::quiet : verbose ? LogLevel::info : LogLevel::warning);

  if (*validate) return cli::cmd_validate(graph_path, std::cout, std::cerr);
  if (*fit) return cli::cmd_fit(fit_config, ov, std::cout, std::cerr);
  if (*simulate) return cli::cmd_simulate(sim_config, ov, std::cout, std::cerr);
  if (*generate) {
    if (!gen_graph.empty()) gen.graph = gen_graph;
    return cli::cmd_generate(gen, std::cout, std::cerr);
  }
  return 2;
}
