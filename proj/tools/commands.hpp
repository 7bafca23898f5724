#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>

namespace seqbal::cli {

/// Flags that override the corresponding config entries.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::filesystem::path> out;
};

// Exit codes: 0 success, 1 domain failure, 2 usage or I/O failure.
int cmd_validate(const std::filesystem::path& graph_path, std::ostream& out, std::ostream& err);
int cmd_fit(const std::filesystem::path& config_path, const Overrides& ov, std::ostream& out, std::ostream& err);
int cmd_simulate(const std::filesystem::path& config_path, const Overrides& ov, std::ostream& out, std::ostream& err);

/// Writes one simulated data set (default design) as CSV.
struct GenerateOptions {
  std::size_t n = 500;
  std::uint64_t seed = 1;
  std::optional<std::filesystem::path> graph;
  double odds_scale = 1.0;
  std::filesystem::path out = "data.csv";
};
int cmd_generate(const GenerateOptions& opts, std::ostream& out, std::ostream& err);

}  // namespace seqbal::cli
