#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "seqbal/basis.hpp"
#include "seqbal/dataset.hpp"
#include "seqbal/weights.hpp"

namespace seqbal {

/// Logistic-regression estimating function: psi = (y - expit(x'theta)) x,
/// x = (1, predictors).
struct EstimatingFunctionSpec {
  std::size_t outcome = 0;
  std::vector<std::size_t> predictors;

  std::size_t dim() const { return predictors.size() + 1; }
  std::vector<std::string> parameter_names(const Dataset& ds) const;

  static EstimatingFunctionSpec from_names(const Dataset& ds, const std::string& outcome,
                                           const std::vector<std::string>& predictors);
};

Eigen::VectorXd psi(const EstimatingFunctionSpec& spec, const Eigen::VectorXd& theta, const RowView& row);
Eigen::MatrixXd psi_dot(const EstimatingFunctionSpec& spec, const Eigen::VectorXd& theta, const RowView& row);

/// Stacked (1, predictors) rows and outcomes. Throws ContractError if a
/// needed cell is missing or the outcome is not 0/1.
struct RegressionData {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
};
RegressionData regression_data(const Dataset& ds, const EstimatingFunctionSpec& spec, std::span<const std::size_t> rows);

/// Row-wise psi at theta (n x q).
Eigen::MatrixXd psi_matrix(const RegressionData& data, const Eigen::VectorXd& theta);

struct NewtonOptions {
  double tol = 1e-10;
  int max_iter = 100;
};

struct EeSolution {
  Eigen::VectorXd theta;
  int iterations = 0;
  double score_norm = 0.0;  // max |score| at theta
};

/// Root of (1/n_total) sum_i w_i psi_theta(x_i, y_i) by damped Newton from
/// theta = 0. Throws FitError on a singular information matrix or when the
/// iteration limit is reached.
EeSolution solve_ee(const RegressionData& data, const Eigen::VectorXd& w, double n_total,
                    const NewtonOptions& opts = {});

/// Weighted estimating equation over the complete cases of `ws`.
EeSolution solve_weighted_ee(const Dataset& ds, const WeightSet& ws, const EstimatingFunctionSpec& spec,
                             const NewtonOptions& opts = {});

/// Coefficients (K_r x q) of the Q^r-weighted least-squares projection of psi
/// onto Phi^r over complete cases.
Eigen::MatrixXd estimate_u(const Dataset& ds, const WeightSet& ws, const EstimatingFunctionSpec& spec,
                           const Eigen::VectorXd& theta, const BasisSpec& basis);

/// D^-1 V D^-T / N from the plug-in influence function. `bases` supplies
/// Phi^r for every non-complete pattern of the graph.
Eigen::MatrixXd sandwich_covariance(const Dataset& ds, const WeightSet& ws, const EstimatingFunctionSpec& spec,
                                    const Eigen::VectorXd& theta, const std::map<Pattern, BasisSpec>& bases);

/// Classical M-estimation sandwich over the given rows with unit weights.
Eigen::MatrixXd classical_sandwich(const RegressionData& data, const Eigen::VectorXd& theta);

/// Two-sided standard normal p-value.
double normal_two_sided_p(double z);

struct FitResult {
  std::string method;
  std::vector<std::string> names;
  Eigen::VectorXd theta;
  Eigen::MatrixXd cov;
  Eigen::VectorXd se;
  Eigen::VectorXd z;
  Eigen::VectorXd p_values;
  int newton_iterations = 0;
  bool converged = false;
  std::string variance = "sandwich";
  std::size_t n = 0;
  std::size_t n_complete = 0;

  /// Fills se, z and p_values from theta and cov.
  void finalize();
  std::string to_json() const;
  /// Parameter / estimate / p-value table.
  std::string to_table() const;
};

}  // namespace seqbal
