#include "seqbal/estimator.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "seqbal/error.hpp"

namespace seqbal {

namespace {

inline double expit(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Eigen::VectorXd x_tilde(const EstimatingFunctionSpec& spec, const RowView& row) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(spec.dim()));
  x(0) = 1.0;
  for (std::size_t j = 0; j < spec.predictors.size(); ++j) x(static_cast<Eigen::Index>(j + 1)) = row.at(spec.predictors[j]);
  return x;
}

}  // namespace

std::vector<std::string> EstimatingFunctionSpec::parameter_names(const Dataset& ds) const {
  std::vector<std::string> names{"(Intercept)"};
  for (auto j : predictors) names.push_back(ds.column_names()[j]);
  return names;
}

EstimatingFunctionSpec EstimatingFunctionSpec::from_names(const Dataset& ds, const std::string& outcome,
                                                          const std::vector<std::string>& predictors) {
  EstimatingFunctionSpec spec;
  spec.outcome = ds.column_index(outcome);
  for (const auto& p : predictors) {
    const auto j = ds.column_index(p);
    if (j == spec.outcome) throw ContractError("outcome column " + outcome + " cannot also be a predictor");
    spec.predictors.push_back(j);
  }
  return spec;
}

Eigen::VectorXd psi(const EstimatingFunctionSpec& spec, const Eigen::VectorXd& theta, const RowView& row) {
  const auto x = x_tilde(spec, row);
  const double y = row.at(spec.outcome);
  return (y - expit(x.dot(theta))) * x;
}

Eigen::MatrixXd psi_dot(const EstimatingFunctionSpec& spec, const Eigen::VectorXd& theta, const RowView& row) {
  const auto x = x_tilde(spec, row);
  const double p = expit(x.dot(theta));
  return -p * (1.0 - p) * x * x.transpose();
}

RegressionData regression_data(const Dataset& ds, const EstimatingFunctionSpec& spec, std::span<const std::size_t> rows) {
  RegressionData d;
  const auto n = static_cast<Eigen::Index>(rows.size());
  d.x.resize(n, static_cast<Eigen::Index>(spec.dim()));
  d.y.resize(n);
  for (Eigen::Index a = 0; a < n; ++a) {
    const auto row = ds.row(rows[static_cast<std::size_t>(a)]);
    d.x.row(a) = x_tilde(spec, row).transpose();
    const double y = row.at(spec.outcome);
    if (y != 0.0 && y != 1.0)
      throw ContractError("outcome " + ds.column_names()[spec.outcome] + " must be 0 or 1 (row " +
                          std::to_string(rows[static_cast<std::size_t>(a)] + 1) + ")");
    d.y(a) = y;
  }
  return d;
}

Eigen::MatrixXd psi_matrix(const RegressionData& data, const Eigen::VectorXd& theta) {
  const Eigen::VectorXd eta = data.x * theta;
  Eigen::VectorXd resid(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) resid(i) = data.y(i) - expit(eta(i));
  return data.x.array().colwise() * resid.array();
}

namespace {

struct ScoreInfo {
  Eigen::VectorXd score;
  Eigen::MatrixXd info;  // minus the derivative of the score
};

ScoreInfo score_info(const RegressionData& data, const Eigen::VectorXd& w, double n_total, const Eigen::VectorXd& theta,
                     bool with_info) {
  const Eigen::VectorXd eta = data.x * theta;
  Eigen::VectorXd resid(eta.size()), curv(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double p = expit(eta(i));
    resid(i) = w(i) * (data.y(i) - p);
    curv(i) = w(i) * p * (1.0 - p);
  }
  ScoreInfo s;
  s.score = data.x.transpose() * resid / n_total;
  if (with_info) s.info = data.x.transpose() * (data.x.array().colwise() * curv.array()).matrix() / n_total;
  return s;
}

}  // namespace

EeSolution solve_ee(const RegressionData& data, const Eigen::VectorXd& w, double n_total, const NewtonOptions& opts) {
  if (w.size() != data.x.rows()) throw ContractError("weight vector length does not match the rows");
  if (!(n_total > 0.0)) throw ContractError("n_total must be positive");
  const auto q = data.x.cols();
  EeSolution sol;
  sol.theta = Eigen::VectorXd::Zero(q);
  auto cur = score_info(data, w, n_total, sol.theta, true);
  for (int it = 0; it <= opts.max_iter; ++it) {
    sol.iterations = it;
    sol.score_norm = cur.score.cwiseAbs().maxCoeff();
    if (sol.score_norm <= opts.tol) return sol;
    if (it == opts.max_iter) break;

    Eigen::LDLT<Eigen::MatrixXd> ldlt(cur.info);
    const double scale = cur.info.diagonal().cwiseAbs().maxCoeff();
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 1e-13 * scale))
      throw FitError("singular weighted information matrix; predictors may be collinear");
    const Eigen::VectorXd step = ldlt.solve(cur.score);

    double t = 1.0;
    const double norm0 = cur.score.norm();
    ScoreInfo next;
    bool improved = false;
    for (int h = 0; h < 40; ++h) {
      next = score_info(data, w, n_total, sol.theta + t * step, false);
      if (next.score.allFinite() && next.score.norm() < norm0) {
        improved = true;
        break;
      }
      t *= 0.5;
    }
    if (!improved) {
      // At the floating-point floor the full step cannot reduce the norm further.
      next = score_info(data, w, n_total, sol.theta + step, false);
      t = 1.0;
      if (!next.score.allFinite()) break;
    }
    sol.theta += t * step;
    cur = score_info(data, w, n_total, sol.theta, true);
  }
  throw FitError("weighted estimating equation did not converge; final max |score| = " +
                 std::to_string(sol.score_norm));
}

EeSolution solve_weighted_ee(const Dataset& ds, const WeightSet& ws, const EstimatingFunctionSpec& spec,
                             const NewtonOptions& opts) {
  const auto data = regression_data(ds, spec, ws.complete_rows);
  return solve_ee(data, ws.w, static_cast<double>(ds.n_rows()), opts);
}

Eigen::MatrixXd estimate_u(const Dataset& ds, const WeightSet& ws, const EstimatingFunctionSpec& spec,
                           const Eigen::VectorXd& theta, const BasisSpec& basis) {
  const auto& cc = ws.complete_rows;
  const auto data = regression_data(ds, spec, cc);
  const Eigen::MatrixXd resp = psi_matrix(data, theta);
  const Eigen::MatrixXd phi = design_matrix(basis, ds, cc);
  const Eigen::VectorXd& q = basis.pattern.is_complete() ? Eigen::VectorXd(Eigen::VectorXd::Ones(phi.rows()))
                                                          : ws.q.at(basis.pattern);
  const double mass = q.sum();
  if (!(mass > 0.0)) throw FitError("pattern " + basis.pattern.str() + " has zero weight on complete cases");

  const Eigen::MatrixXd phi_w = phi.array().colwise() * q.array();
  const Eigen::MatrixXd gram = phi_w.transpose() * phi / mass;
  const Eigen::MatrixXd rhs = phi_w.transpose() * resp / mass;
  const auto k = gram.rows();
  // Ridge for conditioning, then refinement toward the unridged normal equations.
  const Eigen::MatrixXd ridged = gram + 1e-8 * Eigen::MatrixXd::Identity(k, k);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(ridged);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0))
    throw FitError("rank-deficient regression for pattern " + basis.pattern.str());
  Eigen::MatrixXd beta = ldlt.solve(rhs);
  for (int pass = 0; pass < 3; ++pass) beta += ldlt.solve(rhs - gram * beta);
  if (!beta.allFinite()) throw FitError("rank-deficient regression for pattern " + basis.pattern.str());
  return beta;
}

Eigen::MatrixXd sandwich_covariance(const Dataset& ds, const WeightSet& ws, const EstimatingFunctionSpec& spec,
                                    const Eigen::VectorXd& theta, const std::map<Pattern, BasisSpec>& bases) {
  const auto n = static_cast<Eigen::Index>(ds.n_rows());
  const auto q = static_cast<Eigen::Index>(spec.dim());
  const auto& cc = ws.complete_rows;
  const auto data = regression_data(ds, spec, cc);
  const Eigen::MatrixXd psi_cc = psi_matrix(data, theta);

  Eigen::MatrixXd F = Eigen::MatrixXd::Zero(n, q);
  Eigen::MatrixXd f_cc = psi_cc;
  for (const auto& [r, qr] : ws.q) {
    if (r.is_complete()) continue;
    auto it = bases.find(r);
    if (it == bases.end()) throw FitError("no basis for pattern " + r.str() + " in the variance estimate");
    const Eigen::MatrixXd beta = estimate_u(ds, ws, spec, theta, it->second);
    const Eigen::MatrixXd u_cc = design_matrix(it->second, ds, cc) * beta;
    f_cc += ((psi_cc - u_cc).array().colwise() * qr.array()).matrix();
    const auto& rows = ds.rows_with(r);
    if (!rows.empty()) {
      const Eigen::MatrixXd u_r = design_matrix(it->second, ds, rows) * beta;
      for (std::size_t a = 0; a < rows.size(); ++a) F.row(static_cast<Eigen::Index>(rows[a])) = u_r.row(static_cast<Eigen::Index>(a));
    }
  }
  for (std::size_t a = 0; a < cc.size(); ++a) F.row(static_cast<Eigen::Index>(cc[a])) = f_cc.row(static_cast<Eigen::Index>(a));
  for (const auto& [p, rows] : ds.pattern_index())
    if (!p.is_complete() && !ws.q.count(p)) throw FitError("pattern " + p.str() + " has no weights");

  const Eigen::RowVectorXd mean = F.colwise().mean();
  F.rowwise() -= mean;
  const Eigen::MatrixXd V = F.transpose() * F / static_cast<double>(n);

  const Eigen::VectorXd eta = data.x * theta;
  Eigen::VectorXd curv(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double p = expit(eta(i));
    curv(i) = ws.w(i) * p * (1.0 - p);
  }
  const Eigen::MatrixXd D = -data.x.transpose() * (data.x.array().colwise() * curv.array()).matrix() / static_cast<double>(n);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(D);
  if (!lu.isInvertible()) throw FitError("singular derivative matrix in the sandwich estimator");
  const Eigen::MatrixXd Dinv = lu.inverse();
  Eigen::MatrixXd cov = Dinv * V * Dinv.transpose() / static_cast<double>(n);
  return 0.5 * (cov + cov.transpose());
}

Eigen::MatrixXd classical_sandwich(const RegressionData& data, const Eigen::VectorXd& theta) {
  const double n = static_cast<double>(data.x.rows());
  const Eigen::MatrixXd ps = psi_matrix(data, theta);
  const Eigen::MatrixXd V = ps.transpose() * ps / n;
  const Eigen::VectorXd eta = data.x * theta;
  Eigen::VectorXd curv(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double p = expit(eta(i));
    curv(i) = p * (1.0 - p);
  }
  const Eigen::MatrixXd D = -data.x.transpose() * (data.x.array().colwise() * curv.array()).matrix() / n;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(D);
  if (!lu.isInvertible()) throw FitError("singular derivative matrix in the sandwich estimator");
  const Eigen::MatrixXd Dinv = lu.inverse();
  Eigen::MatrixXd cov = Dinv * V * Dinv.transpose() / n;
  return 0.5 * (cov + cov.transpose());
}

double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

void FitResult::finalize() {
  const auto q = theta.size();
  se.resize(q);
  z.resize(q);
  p_values.resize(q);
  for (Eigen::Index j = 0; j < q; ++j) {
    se(j) = std::sqrt(std::max(cov(j, j), 0.0));
    z(j) = se(j) > 0.0 ? theta(j) / se(j) : 0.0;
    p_values(j) = se(j) > 0.0 ? normal_two_sided_p(z(j)) : 1.0;
  }
}

std::string FitResult::to_json() const {
  using nlohmann::ordered_json;
  auto vec = [](const Eigen::VectorXd& v) {
    std::vector<double> out(v.data(), v.data() + v.size());
    return out;
  };
  ordered_json j;
  j["method"] = method;
  j["variance"] = variance;
  j["n"] = n;
  j["n_complete"] = n_complete;
  j["converged"] = converged;
  j["newton_iterations"] = newton_iterations;
  j["parameters"] = names;
  j["estimate"] = vec(theta);
  j["se"] = vec(se);
  j["z"] = vec(z);
  j["p_value"] = vec(p_values);
  ordered_json c = ordered_json::array();
  for (Eigen::Index i = 0; i < cov.rows(); ++i) c.push_back(vec(cov.row(i).transpose()));
  j["cov"] = c;
  return j.dump(2) + "\n";
}

std::string FitResult::to_table() const {
  std::ostringstream os;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-16s %12s %12s %10s\n", "Parameter", "Estimate", "Std.Err", "p-value");
  os << "Method: " << method << " (variance: " << variance << ")\n" << buf;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    std::snprintf(buf, sizeof buf, "%-16s %12.4f %12.4f %10.4f\n", names[static_cast<std::size_t>(j)].c_str(), theta(j),
                  se(j), p_values(j));
    os << buf;
  }
  return os.str();
}

}  // namespace seqbal
