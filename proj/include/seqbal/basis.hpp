#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "seqbal/dataset.hpp"
#include "seqbal/pattern_graph.hpp"

namespace seqbal {

enum class KnotRule { quantile, uniform };
enum class PenaltyRule { sd, ones };

struct BasisConfig {
  int n_splines = 6;
  int degree = 3;
  KnotRule knots = KnotRule::quantile;
  PenaltyRule penalty = PenaltyRule::sd;
};

struct InterceptTerm {};

/// index-th member of the clamped B-spline family on `knots`.
struct SplineTerm {
  std::size_t column;
  std::vector<double> knots;
  int degree;
  int index;
};

/// 1 when the column equals `level`, else 0.
struct IndicatorTerm {
  std::size_t column;
  double level;
};

using BasisTerm = std::variant<InterceptTerm, SplineTerm, IndicatorTerm>;

/// Basis functions for the odds model of one pattern, with their L1
/// penalty weights. Term 0 is always the unpenalized intercept.
struct BasisSpec {
  Pattern pattern;
  std::vector<BasisTerm> terms;
  Eigen::VectorXd t;

  std::size_t size() const { return terms.size(); }
};

/// Builds Phi^r from the columns observed under r. Knots come from the
/// complete-case rows. Throws FitError for a constant continuous column.
BasisSpec build_basis(const Dataset& ds, const Pattern& r, const BasisConfig& cfg = {});

/// Evaluates every term on one row. Out-of-range spline inputs are clamped
/// to the boundary knots.
Eigen::VectorXd evaluate(const BasisSpec& spec, const RowView& row);

/// Rows of Phi^r for the given dataset rows.
Eigen::MatrixXd design_matrix(const BasisSpec& spec, const Dataset& ds, std::span<const std::size_t> rows);

/// t_1 = 0; others are the population SD of the term over complete cases
/// (floored at 1e-8), or all ones.
Eigen::VectorXd penalty_weights(const BasisSpec& spec, const Dataset& ds, PenaltyRule rule = PenaltyRule::sd);

/// Clamped knot vector: degree+1 copies of each boundary around n_splines-degree-1 interior knots.
std::vector<double> clamped_knots(std::span<const double> sample, int n_splines, int degree, KnotRule rule);

/// All n = knots.size()-degree-1 B-spline values at x (x clamped to the knot range).
std::vector<double> bspline_basis(std::span<const double> knots, int degree, double x);

/// Type-7 (linear interpolation) sample quantile of sorted data.
double quantile_sorted(std::span<const double> sorted, double p);

}  // namespace seqbal
