#include "seqbal/pattern_graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "json.hpp"
#include "seqbal/error.hpp"

namespace seqbal {

using nlohmann::json;

Pattern Pattern::complete(std::size_t d) {
  if (d == 0) throw ContractError("pattern dimension must be at least 1");
  return Pattern(std::string(d, '1'));
}

std::size_t Pattern::n_observed() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), '1'));
}

bool Pattern::is_complete() const { return !bits_.empty() && n_observed() == bits_.size(); }

std::vector<std::size_t> Pattern::observed_columns() const {
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < bits_.size(); ++j)
    if (bits_[j] == '1') cols.push_back(j);
  return cols;
}

bool Pattern::dominates(const Pattern& other) const {
  if (bits_.size() != other.bits_.size() || bits_ == other.bits_) return false;
  for (std::size_t j = 0; j < bits_.size(); ++j)
    if (bits_[j] < other.bits_[j]) return false;
  return true;
}

Pattern parse_pattern(std::string_view text) {
  if (text.empty()) throw ParseError("empty pattern string");
  for (std::size_t j = 0; j < text.size(); ++j) {
    if (text[j] != '0' && text[j] != '1') {
      throw ParseError("invalid character '" + std::string(1, text[j]) + "' in pattern \"" +
                       std::string(text) + "\" at position " + std::to_string(j + 1));
    }
  }
  return Pattern(std::string(text));
}

std::string_view to_string(CoeffType t) {
  switch (t) {
    case CoeffType::type1: return "type1";
    case CoeffType::type2: return "type2";
    case CoeffType::type3: return "type3";
  }
  return "type1";
}

// ---------------------------------------------------------------------------

PatternGraph::PatternGraph(std::size_t d, std::vector<Pattern> nodes, std::vector<Edge> edges,
                           std::map<Pattern, CoeffType> coeff_types,
                           std::map<Pattern, std::map<Pattern, double>> type3_constants)
    : d_(d), nodes_(std::move(nodes)), edges_(std::move(edges)), coeff_(std::move(coeff_types)),
      type3_(std::move(type3_constants)) {
  if (d_ == 0) throw ContractError("graph dimension must be at least 1");
  std::sort(nodes_.begin(), nodes_.end());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].size() != d_)
      throw ContractError("pattern " + nodes_[i].str() + " has length " +
                          std::to_string(nodes_[i].size()) + ", expected " + std::to_string(d_));
    if (i > 0 && nodes_[i] == nodes_[i - 1])
      throw ContractError("duplicate node " + nodes_[i].str());
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
  parents_.assign(nodes_.size(), {});
  children_.assign(nodes_.size(), {});
  for (const auto& [s, r] : edges_) {
    if (!contains(s) || !contains(r))
      throw ContractError("edge " + s.str() + " -> " + r.str() + " references an unknown node");
    const auto si = index_of(s);
    const auto ri = index_of(r);
    parents_[ri].push_back(si);
    children_[si].push_back(ri);
  }
  for (const auto& [p, t] : coeff_)
    if (!contains(p)) throw ContractError("coeff_type given for unknown node " + p.str());
  for (const auto& [p, m] : type3_) {
    if (!contains(p)) throw ContractError("type3_constants given for unknown node " + p.str());
    for (const auto& [s, c] : m)
      if (!contains(s)) throw ContractError("type3 constant references unknown node " + s.str());
  }
}

bool PatternGraph::contains(const Pattern& p) const {
  return std::binary_search(nodes_.begin(), nodes_.end(), p);
}

std::size_t PatternGraph::index_of(const Pattern& p) const {
  auto it = std::lower_bound(nodes_.begin(), nodes_.end(), p);
  if (it == nodes_.end() || *it != p) throw LookupError("pattern " + p.str() + " is not a graph node");
  return static_cast<std::size_t>(it - nodes_.begin());
}

std::vector<Pattern> PatternGraph::parents(const Pattern& r) const {
  std::vector<Pattern> out;
  for (auto i : parents_[index_of(r)]) out.push_back(nodes_[i]);
  return out;
}

std::vector<Pattern> PatternGraph::children(const Pattern& s) const {
  std::vector<Pattern> out;
  for (auto i : children_[index_of(s)]) out.push_back(nodes_[i]);
  return out;
}

CoeffType PatternGraph::coeff_type(const Pattern& r) const {
  index_of(r);
  auto it = coeff_.find(r);
  return it == coeff_.end() ? CoeffType::type1 : it->second;
}

const std::map<Pattern, double>& PatternGraph::type3_constants(const Pattern& r) const {
  static const std::map<Pattern, double> empty;
  auto it = type3_.find(r);
  return it == type3_.end() ? empty : it->second;
}

bool PatternGraph::all_type1() const {
  return std::all_of(coeff_.begin(), coeff_.end(),
                     [](const auto& kv) { return kv.second == CoeffType::type1; });
}

// ---------------------------------------------------------------------------

std::string_view to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::missing_complete: return "missing complete pattern";
    case ViolationKind::cycle: return "cycle";
    case ViolationKind::source: return "source";
    case ViolationKind::partial_order: return "edge violates partial order";
    case ViolationKind::unreachable: return "unreachable";
    case ViolationKind::type3_constants: return "type3 constants";
  }
  return "unknown";
}

bool ValidationReport::has(ViolationKind k) const {
  return std::any_of(violations.begin(), violations.end(),
                     [k](const Violation& v) { return v.kind == k; });
}

std::string ValidationReport::to_string() const {
  if (violations.empty()) return "graph is regular\n";
  std::ostringstream os;
  for (const auto& v : violations) os << "violation [" << seqbal::to_string(v.kind) << "]: " << v.message << '\n';
  return os.str();
}

namespace {

// Returns a directed cycle as a vertex list (first vertex repeated at the end),
// or an empty vector when the graph is acyclic.
std::vector<std::size_t> find_cycle(const PatternGraph& g) {
  const std::size_t n = g.size();
  std::vector<int> color(n, 0);  // 0 white, 1 on stack, 2 done
  std::vector<std::size_t> stack;
  std::vector<std::size_t> cycle;

  std::function<bool(std::size_t)> dfs = [&](std::size_t u) {
    color[u] = 1;
    stack.push_back(u);
    for (auto v : g.child_indices(u)) {
      if (color[v] == 1) {
        auto it = std::find(stack.begin(), stack.end(), v);
        cycle.assign(it, stack.end());
        cycle.push_back(v);
        return true;
      }
      if (color[v] == 0 && dfs(v)) return true;
    }
    stack.pop_back();
    color[u] = 2;
    return false;
  };
  for (std::size_t u = 0; u < n; ++u)
    if (color[u] == 0 && dfs(u)) break;
  return cycle;
}

void require_regular(const PatternGraph& g) {
  auto report = validate_graph(g);
  if (!report.regular()) throw ContractError("pattern graph is not regular:\n" + report.to_string());
}

}  // namespace

ValidationReport validate_graph(const PatternGraph& g) {
  ValidationReport report;
  auto add = [&](ViolationKind k, std::string msg) { report.violations.push_back({k, std::move(msg)}); };
  const auto& nodes = g.nodes();
  const auto full = Pattern::complete(g.dim());
  const bool has_full = g.contains(full);

  if (!has_full) add(ViolationKind::missing_complete, "complete pattern " + full.str() + " is not a node");

  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const bool no_parent = g.parent_indices(i).empty();
    if (nodes[i] == full && !no_parent)
      add(ViolationKind::source, "complete pattern " + full.str() + " has a parent");
    if (nodes[i] != full && no_parent)
      add(ViolationKind::source, "node " + nodes[i].str() + " has no parent");
  }

  for (const auto& [s, r] : g.edges())
    if (!s.dominates(r))
      add(ViolationKind::partial_order, "edge " + s.str() + " -> " + r.str() + " violates partial order");

  if (auto cyc = find_cycle(g); !cyc.empty()) {
    std::string witness;
    for (std::size_t k = 0; k < cyc.size(); ++k) witness += (k ? " -> " : "") + nodes[cyc[k]].str();
    add(ViolationKind::cycle, "cycle " + witness);
  }

  if (has_full) {
    std::vector<char> seen(nodes.size(), 0);
    std::vector<std::size_t> todo{g.index_of(full)};
    seen[todo.front()] = 1;
    while (!todo.empty()) {
      auto u = todo.back();
      todo.pop_back();
      for (auto v : g.child_indices(u))
        if (!seen[v]) seen[v] = 1, todo.push_back(v);
    }
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (!seen[i]) add(ViolationKind::unreachable, "node " + nodes[i].str() + " is not reachable from " + full.str());
  }

  for (const auto& r : nodes) {
    if (g.coeff_type(r) != CoeffType::type3) continue;
    const auto& consts = g.type3_constants(r);
    const auto pa = g.parents(r);
    double total = 0.0;
    bool ok = consts.size() == pa.size();
    for (const auto& s : pa) {
      auto it = consts.find(s);
      if (it == consts.end()) {
        ok = false;
        continue;
      }
      if (!(it->second >= 0.0) || !std::isfinite(it->second)) ok = false;
      total += it->second;
    }
    if (!ok || std::abs(total - 1.0) > 1e-9)
      add(ViolationKind::type3_constants,
          "type3 constants of node " + r.str() + " must cover its parents, be nonnegative and sum to 1");
  }
  return report;
}

std::vector<Path> enumerate_paths(const PatternGraph& g, const Pattern& r) {
  require_regular(g);
  const auto target = g.index_of(r);
  const auto source = g.index_of(Pattern::complete(g.dim()));
  std::vector<Path> paths;
  std::vector<std::size_t> current{source};

  std::function<void(std::size_t)> walk = [&](std::size_t u) {
    if (u == target) {
      Path p;
      for (auto i : current) p.vertices.push_back(g.nodes()[i]);
      paths.push_back(std::move(p));
      return;
    }
    for (auto v : g.child_indices(u)) {
      current.push_back(v);
      walk(v);
      current.pop_back();
    }
  };
  walk(source);
  std::sort(paths.begin(), paths.end());
  return paths;
}

std::vector<Pattern> processing_order(const PatternGraph& g) {
  require_regular(g);
  std::vector<Pattern> order;
  for (const auto& p : g.nodes())
    if (!p.is_complete()) order.push_back(p);
  std::stable_sort(order.begin(), order.end(), [](const Pattern& a, const Pattern& b) {
    if (a.n_observed() != b.n_observed()) return a.n_observed() > b.n_observed();
    return a < b;
  });
  return order;
}

// ---------------------------------------------------------------------------

namespace {

CoeffType parse_coeff_type(const std::string& s) {
  if (s == "type1") return CoeffType::type1;
  if (s == "type2") return CoeffType::type2;
  if (s == "type3") return CoeffType::type3;
  throw ParseError("unknown coeff_type \"" + s + "\" (expected type1, type2 or type3)");
}

Pattern pattern_field(const json& j, std::size_t d, const char* where) {
  if (!j.is_string()) throw ParseError(std::string(where) + ": pattern must be a string");
  auto p = parse_pattern(j.get<std::string>());
  if (p.size() != d)
    throw ParseError(std::string(where) + ": pattern " + p.str() + " has length " + std::to_string(p.size()) +
                     ", expected d = " + std::to_string(d));
  return p;
}

}  // namespace

PatternGraph graph_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("graph JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("graph JSON must be an object");
  if (!j.contains("d") || !j["d"].is_number_integer() || j["d"].get<long>() < 1)
    throw ParseError("graph JSON: \"d\" must be a positive integer");
  const auto d = j["d"].get<std::size_t>();
  if (!j.contains("nodes") || !j["nodes"].is_array()) throw ParseError("graph JSON: \"nodes\" must be an array");

  std::vector<Pattern> nodes;
  for (const auto& n : j["nodes"]) nodes.push_back(pattern_field(n, d, "nodes"));

  std::vector<Edge> edges;
  if (j.contains("edges")) {
    if (!j["edges"].is_array()) throw ParseError("graph JSON: \"edges\" must be an array");
    for (const auto& e : j["edges"]) {
      if (!e.is_array() || e.size() != 2) throw ParseError("graph JSON: each edge must be [parent, child]");
      edges.emplace_back(pattern_field(e[0], d, "edges"), pattern_field(e[1], d, "edges"));
    }
  }

  std::map<Pattern, CoeffType> coeff;
  if (j.contains("coeff_type")) {
    if (!j["coeff_type"].is_object()) throw ParseError("graph JSON: \"coeff_type\" must be an object");
    for (const auto& [k, v] : j["coeff_type"].items()) {
      if (!v.is_string()) throw ParseError("graph JSON: coeff_type values must be strings");
      coeff[pattern_field(json(k), d, "coeff_type")] = parse_coeff_type(v.get<std::string>());
    }
  }

  std::map<Pattern, std::map<Pattern, double>> type3;
  if (j.contains("type3_constants")) {
    if (!j["type3_constants"].is_object()) throw ParseError("graph JSON: \"type3_constants\" must be an object");
    for (const auto& [k, v] : j["type3_constants"].items()) {
      if (!v.is_object()) throw ParseError("graph JSON: type3_constants entries must be objects");
      auto& row = type3[pattern_field(json(k), d, "type3_constants")];
      for (const auto& [pk, pv] : v.items()) {
        if (!pv.is_number()) throw ParseError("graph JSON: type3 constants must be numbers");
        row[pattern_field(json(pk), d, "type3_constants")] = pv.get<double>();
      }
    }
  }

  try {
    return PatternGraph(d, std::move(nodes), std::move(edges), std::move(coeff), std::move(type3));
  } catch (const ContractError& e) {
    throw ParseError(std::string("graph JSON: ") + e.what());
  }
}

std::string graph_to_json(const PatternGraph& g) {
  json j;
  j["d"] = g.dim();
  j["nodes"] = json::array();
  for (const auto& n : g.nodes()) j["nodes"].push_back(n.str());
  j["edges"] = json::array();
  for (const auto& [s, r] : g.edges()) j["edges"].push_back({s.str(), r.str()});
  j["coeff_type"] = json::object();
  for (const auto& n : g.nodes())
    if (!n.is_complete()) j["coeff_type"][n.str()] = std::string(to_string(g.coeff_type(n)));
  if (!g.all_type3_constants().empty()) {
    j["type3_constants"] = json::object();
    for (const auto& [r, m] : g.all_type3_constants())
      for (const auto& [s, c] : m) j["type3_constants"][r.str()][s.str()] = c;
  }
  return j.dump(2);
}

PatternGraph read_graph_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open graph file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return graph_from_json(buf.str());
}

PatternGraph load_graph(const std::filesystem::path& path) {
  auto g = read_graph_file(path);
  require_regular(g);
  return g;
}

PatternGraph make_ccmv_graph(const std::vector<Pattern>& nodes) {
  if (nodes.empty()) throw ContractError("CCMV graph needs at least one node");
  const auto d = nodes.front().size();
  const auto full = Pattern::complete(d);
  std::vector<Pattern> all = nodes;
  if (std::find(all.begin(), all.end(), full) == all.end()) all.push_back(full);
  std::vector<Edge> edges;
  for (const auto& p : all)
    if (p != full) edges.emplace_back(full, p);
  return PatternGraph(d, std::move(all), std::move(edges));
}

}  // namespace seqbal
