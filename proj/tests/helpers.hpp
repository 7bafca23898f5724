#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "seqbal/pattern_graph.hpp"

namespace th {

inline seqbal::Pattern P(const std::string& s) { return seqbal::parse_pattern(s); }

inline seqbal::PatternGraph make_graph(std::size_t d, const std::vector<std::string>& nodes,
                                       const std::vector<std::pair<std::string, std::string>>& edges) {
  std::vector<seqbal::Pattern> pn;
  for (const auto& s : nodes) pn.push_back(P(s));
  std::vector<seqbal::Edge> pe;
  for (const auto& [s, r] : edges) pe.emplace_back(P(s), P(r));
  return seqbal::PatternGraph(d, pn, pe);
}

inline std::vector<std::string> strs(const std::vector<seqbal::Pattern>& ps) {
  std::vector<std::string> out;
  for (const auto& p : ps) out.push_back(p.str());
  return out;
}

inline std::filesystem::path source_dir() { return SEQBAL_SOURCE_DIR; }
inline std::filesystem::path graph_file(const std::string& name) { return source_dir() / "graphs" / name; }

}  // namespace th
