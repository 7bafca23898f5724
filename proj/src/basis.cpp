#include "seqbal/basis.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "seqbal/error.hpp"

namespace seqbal {

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw ContractError("quantile of an empty sample");
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<double> clamped_knots(std::span<const double> sample, int n_splines, int degree, KnotRule rule) {
  if (degree < 1 || degree > 4) throw ContractError("spline degree must be in 1..4");
  if (n_splines < degree + 1) throw ContractError("n_splines must be at least degree + 1");
  std::vector<double> sorted(sample.begin(), sample.end());
  std::sort(sorted.begin(), sorted.end());
  const double a = sorted.front();
  const double b = sorted.back();
  const int n_interior = n_splines - degree - 1;
  std::vector<double> knots(static_cast<std::size_t>(degree + 1), a);
  for (int j = 1; j <= n_interior; ++j) {
    const double p = static_cast<double>(j) / (n_interior + 1);
    knots.push_back(rule == KnotRule::quantile ? quantile_sorted(sorted, p) : a + p * (b - a));
  }
  knots.insert(knots.end(), static_cast<std::size_t>(degree + 1), b);
  return knots;
}

std::vector<double> bspline_basis(std::span<const double> knots, int degree, double x) {
  const auto p = static_cast<std::size_t>(degree);
  if (knots.size() < 2 * p + 2) throw ContractError("knot vector too short for the spline degree");
  const std::size_t n = knots.size() - p - 1;
  const double lo = knots[p];
  const double hi = knots[n];
  if (!(hi > lo)) throw ContractError("degenerate knot range");
  x = std::clamp(x, lo, hi);

  // Knot span containing x; the right boundary belongs to the last span.
  std::size_t span;
  if (x >= hi) {
    span = n - 1;
    while (knots[span] >= knots[span + 1]) --span;
  } else {
    std::size_t low = p, high = n;
    span = (low + high) / 2;
    while (x < knots[span] || x >= knots[span + 1]) {
      if (x < knots[span]) high = span; else low = span;
      span = (low + high) / 2;
    }
  }

  // Triangular Cox-de Boor evaluation of the p+1 nonzero functions.
  std::vector<double> nonzero(p + 1, 0.0), left(p + 1, 0.0), right(p + 1, 0.0);
  nonzero[0] = 1.0;
  for (std::size_t j = 1; j <= p; ++j) {
    left[j] = x - knots[span + 1 - j];
    right[j] = knots[span + j] - x;
    double saved = 0.0;
    for (std::size_t r = 0; r < j; ++r) {
      const double tmp = nonzero[r] / (right[r + 1] + left[j - r]);
      nonzero[r] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    nonzero[j] = saved;
  }
  std::vector<double> out(n, 0.0);
  for (std::size_t k = 0; k <= p; ++k) out[span - p + k] = nonzero[k];
  return out;
}

BasisSpec build_basis(const Dataset& ds, const Pattern& r, const BasisConfig& cfg) {
  if (r.size() != ds.n_cols()) throw ContractError("pattern length does not match dataset dimension");
  if (cfg.degree < 1 || cfg.degree > 4) throw ContractError("spline degree must be in 1..4");
  if (cfg.n_splines < cfg.degree + 1) throw ContractError("n_splines must be at least degree + 1");
  const auto& cc = ds.complete_rows();
  if (cc.empty()) throw FitError("cannot build a basis without complete cases");

  BasisSpec spec;
  spec.pattern = r;
  spec.terms.emplace_back(InterceptTerm{});
  for (auto col : r.observed_columns()) {
    std::vector<double> sample;
    sample.reserve(cc.size());
    for (auto i : cc) sample.push_back(ds.value(i, col));
    if (ds.kind(col) == ColumnKind::discrete) {
      std::set<double> levels(sample.begin(), sample.end());
      // The smallest level is the reference.
      for (auto it = std::next(levels.begin()); it != levels.end(); ++it)
        spec.terms.emplace_back(IndicatorTerm{col, *it});
      continue;
    }
    const auto [mn, mx] = std::minmax_element(sample.begin(), sample.end());
    if (!(*mx > *mn))
      throw FitError("degenerate basis: continuous column " + ds.column_names()[col] +
                     " is constant on complete cases; declare it discrete");
    auto knots = clamped_knots(sample, cfg.n_splines, cfg.degree, cfg.knots);
    for (int k = 0; k < cfg.n_splines; ++k) spec.terms.emplace_back(SplineTerm{col, knots, cfg.degree, k});
  }
  spec.t = penalty_weights(spec, ds, cfg.penalty);
  return spec;
}

namespace {

void evaluate_into(const BasisSpec& spec, const RowView& row, double* out) {
  std::vector<double> family;
  for (std::size_t k = 0; k < spec.terms.size(); ++k) {
    const auto& term = spec.terms[k];
    if (std::holds_alternative<InterceptTerm>(term)) {
      out[k] = 1.0;
    } else if (const auto* ind = std::get_if<IndicatorTerm>(&term)) {
      out[k] = row.at(ind->column) == ind->level ? 1.0 : 0.0;
    } else {
      const auto& sp = std::get<SplineTerm>(term);
      // Members of one family are stored consecutively starting at index 0.
      if (sp.index == 0 || family.empty()) family = bspline_basis(sp.knots, sp.degree, row.at(sp.column));
      out[k] = family.at(static_cast<std::size_t>(sp.index));
    }
  }
}

}  // namespace

Eigen::VectorXd evaluate(const BasisSpec& spec, const RowView& row) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(spec.size()));
  evaluate_into(spec, row, out.data());
  return out;
}

Eigen::MatrixXd design_matrix(const BasisSpec& spec, const Dataset& ds, std::span<const std::size_t> rows) {
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMajor m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(spec.size()));
  for (std::size_t a = 0; a < rows.size(); ++a) evaluate_into(spec, ds.row(rows[a]), m.row(static_cast<Eigen::Index>(a)).data());
  return m;
}

Eigen::VectorXd penalty_weights(const BasisSpec& spec, const Dataset& ds, PenaltyRule rule) {
  const auto k = static_cast<Eigen::Index>(spec.size());
  Eigen::VectorXd t = Eigen::VectorXd::Ones(k);
  t(0) = 0.0;
  if (rule == PenaltyRule::ones) return t;
  const auto phi = design_matrix(spec, ds, ds.complete_rows());
  const double n = static_cast<double>(phi.rows());
  for (Eigen::Index j = 1; j < k; ++j) {
    const double mean = phi.col(j).mean();
    const double var = (phi.col(j).array() - mean).square().sum() / n;
    t(j) = std::max(std::sqrt(var), 1e-8);
  }
  return t;
}

}  // namespace seqbal
