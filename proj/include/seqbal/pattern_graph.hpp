#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace seqbal {

/// A missingness pattern: bit j is 1 when coordinate j is observed.
///
/// Stored as its '0'/'1' rendering, so ordering is lexicographic on that
/// string. Coordinate 0 of the string is the first variable.
class Pattern {
 public:
  Pattern() = default;

  static Pattern complete(std::size_t d);

  std::size_t size() const { return bits_.size(); }
  bool observed(std::size_t j) const { return bits_[j] == '1'; }
  std::size_t n_observed() const;
  bool is_complete() const;
  std::vector<std::size_t> observed_columns() const;

  /// Strict partial order: every bit of *this is >= the other's and they differ.
  bool dominates(const Pattern& other) const;

  const std::string& str() const { return bits_; }

  friend auto operator<=>(const Pattern&, const Pattern&) = default;
  friend bool operator==(const Pattern&, const Pattern&) = default;

 private:
  friend Pattern parse_pattern(std::string_view text);
  explicit Pattern(std::string bits) : bits_(std::move(bits)) {}

  std::string bits_;
};

/// Throws ParseError naming the 1-based position of the first bad character.
Pattern parse_pattern(std::string_view text);

enum class CoeffType { type1, type2, type3 };

std::string_view to_string(CoeffType t);

struct Path {
  std::vector<Pattern> vertices;

  friend auto operator<=>(const Path&, const Path&) = default;
  friend bool operator==(const Path&, const Path&) = default;
};

using Edge = std::pair<Pattern, Pattern>;

/// Directed graph over missingness patterns plus the per-node mixture
/// coefficient type. Construction checks only structural sanity (pattern
/// length, duplicates, dangling edges); regularity is checked by
/// validate_graph.
class PatternGraph {
 public:
  PatternGraph() = default;
  PatternGraph(std::size_t d, std::vector<Pattern> nodes, std::vector<Edge> edges,
               std::map<Pattern, CoeffType> coeff_types = {},
               std::map<Pattern, std::map<Pattern, double>> type3_constants = {});

  std::size_t dim() const { return d_; }
  std::size_t size() const { return nodes_.size(); }

  /// Nodes in lexicographic order; indices below refer to this order.
  const std::vector<Pattern>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }

  bool contains(const Pattern& p) const;
  std::size_t index_of(const Pattern& p) const;

  std::vector<Pattern> parents(const Pattern& r) const;
  std::vector<Pattern> children(const Pattern& s) const;
  const std::vector<std::size_t>& parent_indices(std::size_t r) const { return parents_[r]; }
  const std::vector<std::size_t>& child_indices(std::size_t s) const { return children_[s]; }

  CoeffType coeff_type(const Pattern& r) const;
  const std::map<Pattern, double>& type3_constants(const Pattern& r) const;
  const std::map<Pattern, std::map<Pattern, double>>& all_type3_constants() const { return type3_; }

  /// True when every node uses Type 1 mixture coefficients.
  bool all_type1() const;

 private:
  std::size_t d_ = 0;
  std::vector<Pattern> nodes_;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> parents_;
  std::vector<std::vector<std::size_t>> children_;
  std::map<Pattern, CoeffType> coeff_;
  std::map<Pattern, std::map<Pattern, double>> type3_;
};

enum class ViolationKind {
  missing_complete,
  cycle,
  source,
  partial_order,
  unreachable,
  type3_constants,
};

std::string_view to_string(ViolationKind k);

struct Violation {
  ViolationKind kind;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool regular() const { return violations.empty(); }
  bool has(ViolationKind k) const;
  std::string to_string() const;
};

ValidationReport validate_graph(const PatternGraph& g);

/// All paths from the complete pattern to r, sorted lexicographically by
/// vertex sequence. Throws ContractError on a non-regular graph.
std::vector<Path> enumerate_paths(const PatternGraph& g, const Pattern& r);

/// Non-source nodes by decreasing number of observed variables, ties broken
/// lexicographically. Throws ContractError on a non-regular graph.
std::vector<Pattern> processing_order(const PatternGraph& g);

/// Parses the JSON graph format. Throws ParseError on malformed input; the
/// result is not checked for regularity.
PatternGraph graph_from_json(std::string_view text);
std::string graph_to_json(const PatternGraph& g);

/// Reads a graph file without checking regularity.
PatternGraph read_graph_file(const std::filesystem::path& path);

/// Reads a graph file and rejects it (ContractError) unless it is regular.
PatternGraph load_graph(const std::filesystem::path& path);

/// Every non-complete pattern gets the complete pattern as sole parent.
PatternGraph make_ccmv_graph(const std::vector<Pattern>& nodes);

}  // namespace seqbal
