#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "seqbal/dataset.hpp"
#include "seqbal/pipeline.hpp"
#include "seqbal/simulator.hpp"

namespace seqbal {

/// Everything `fit` needs. Relative paths in the file are resolved against
/// the directory holding the config.
struct RunConfig {
  std::filesystem::path graph_path;
  std::filesystem::path data_path;
  CsvOptions csv;
  std::string outcome;
  std::vector<std::string> predictors;  // empty: every other column
  PipelineConfig pipeline;
  std::filesystem::path out_dir = "out";
};

struct SimStudyConfig {
  SimConfig sim;
  /// Graphs the weighting methods are fitted under; defaults to {"G1": sim.graph}.
  std::vector<std::pair<std::string, PatternGraph>> fit_graphs;
  std::filesystem::path out_dir = "out";
  bool long_output = false;
};

/// Throws ParseError on malformed content, LoadError on unreadable files.
/// A missing "threads" key leaves threads at 0, meaning all available cores.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

SimStudyConfig sim_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
SimStudyConfig load_sim_config(const std::filesystem::path& path);

BasisConfig basis_config_from_json(const nlohmann::json& j);
SolverOptions solver_options_from_json(const nlohmann::json& j);
LambdaPolicy lambda_policy_from_json(const nlohmann::json& j);

nlohmann::json odds_spec_to_json(const OddsSpec& odds);
OddsSpec odds_spec_from_json(const nlohmann::json& j, std::size_t d);

nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace seqbal
