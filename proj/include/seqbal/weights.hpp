#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "seqbal/basis.hpp"
#include "seqbal/dataset.hpp"
#include "seqbal/optimizer.hpp"
#include "seqbal/pattern_graph.hpp"

namespace seqbal {

enum class WeightMethod { entropy, local, sequential };

std::string_view to_string(WeightMethod m);

/// How lambda is chosen for each odds model.
struct LambdaPolicy {
  bool use_cv = true;
  double fixed = 0.0;
  int grid_size = 40;
  double grid_ratio = 1e-4;
  int k_folds = 5;
  std::uint64_t seed = 0;
  /// Per-model overrides keyed by model_key(); take precedence over cv/fixed.
  std::map<std::string, double> per_model;
};

struct WeightFitOptions {
  BasisConfig basis;
  SolverOptions solver;
  LambdaPolicy lambda;
};

/// Fitted log-linear odds O(l) = exp(Phi(l)' alpha) for one pattern, or for
/// one (parent, pattern) pair under Type 2/3 coefficients.
struct OddsModel {
  Pattern pattern;
  BasisSpec spec;
  Eigen::VectorXd alpha;
  LossKind loss = LossKind::tailored;
  double lambda = 0.0;
  std::optional<Pattern> pairwise_parent;
  SolveResult solve;
  std::size_t n_source = 0;
  std::size_t n_target = 0;

  /// Odds on the given rows; the rows must observe every column of `pattern`.
  Eigen::VectorXd odds(const Dataset& ds, std::span<const std::size_t> rows) const;
};

/// "r" for Type 1 models, "r|s" for pairwise models against parent s.
std::string model_key(const Pattern& r, const std::optional<Pattern>& parent = std::nullopt);
std::string model_key(const OddsModel& m);

using ModelSet = std::vector<OddsModel>;

const OddsModel& find_model(const ModelSet& models, const Pattern& r,
                            const std::optional<Pattern>& parent = std::nullopt);

/// Q-hat values on complete-case rows and the weights they assemble into.
struct WeightSet {
  std::vector<std::size_t> complete_rows;
  std::map<Pattern, Eigen::VectorXd> q;  // includes the complete pattern (all ones)
  Eigen::VectorXd w;
  WeightMethod method = WeightMethod::sequential;

  /// Recomputes w as the sum of all q vectors.
  void assemble();
  double max_weight() const;
};

/// Q^r = sum over parents s of edge_factor(s, r) * Q^s, with Q of the
/// complete pattern equal to 1, evaluated in processing order. Indices refer
/// to g.nodes(). Returns one vector per node.
std::vector<Eigen::VectorXd> propagate_q(
    const PatternGraph& g, const std::function<Eigen::VectorXd(std::size_t parent, std::size_t child)>& edge_factor,
    Eigen::Index n_rows);

/// Fits every odds model locally against its parent patterns with the
/// entropy or tailored loss.
ModelSet fit_local(const PatternGraph& g, const Dataset& ds, LossKind loss, const WeightFitOptions& opts = {});

/// Combines local models into complete-case weights through the Q recursion.
WeightSet assemble_local_weights(const ModelSet& models, const PatternGraph& g, const Dataset& ds,
                                 WeightMethod method = WeightMethod::local);

struct SequentialFit {
  ModelSet models;
  WeightSet weights;
};

/// Sequential balancing: each pattern is balanced against complete cases
/// reweighted by the already-fitted Q of its parents. Type 1 graphs only.
SequentialFit fit_sequential(const PatternGraph& g, const Dataset& ds, const WeightFitOptions& opts = {});

struct BalanceRow {
  Pattern pattern;
  std::size_t term;
  std::string label;
  double target_mean;
  double weighted_mean;
  double gap;
  double slack;  // lambda * t_k
};

/// Per (pattern, basis term): pattern-r mean vs complete-case mean reweighted
/// by Q-hat^r, both normalized by N.
std::vector<BalanceRow> balance_report(const WeightSet& ws, const ModelSet& models, const PatternGraph& g,
                                       const Dataset& ds);

std::string term_label(const BasisTerm& term, const Dataset& ds);

void write_weights_csv(const WeightSet& ws, const Dataset& ds, std::ostream& out);
void write_balance_csv(const std::vector<BalanceRow>& rows, std::ostream& out);

}  // namespace seqbal
