#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace seqbal {

enum class LossKind { entropy, tailored, sequential };

std::string_view to_string(LossKind k);

/// One penalized odds-fitting problem.
///
/// Rows are either source rows (target == 0) or target rows (target == 1).
/// The loss is normalized by n_total, the full sample size, not by the row
/// count of the design.
///
///   tailored / sequential:  (1/N) sum[ src * m_i * exp(eta_i) - tgt * eta_i ]
///   entropy:                (1/N) sum[ src * log(1+exp(eta_i)) + tgt * log(1+exp(-eta_i)) ]
///
/// with eta = design * alpha. m_i is the row multiplier; it is 1 everywhere
/// except on source rows of a sequential problem.
struct LossProblem {
  LossKind kind = LossKind::tailored;
  Eigen::MatrixXd design;
  Eigen::ArrayXd target;
  Eigen::ArrayXd multiplier;
  Eigen::VectorXd t;
  double n_total = 0.0;

  Eigen::Index n_rows() const { return design.rows(); }
  Eigen::Index n_terms() const { return design.cols(); }
  Eigen::Index n_target() const;

  /// Throws ContractError when the invariants above do not hold.
  void check() const;

  /// The same problem restricted to `rows`, with n_total scaled by the kept fraction.
  LossProblem subset(std::span<const Eigen::Index> rows) const;
};

/// Linear predictors above this are continued linearly in the exp() term.
inline constexpr double kLinearPredictorCap = 30.0;

struct LossEval {
  double value = 0.0;
  Eigen::VectorXd gradient;
  bool capped = false;
};

LossEval loss_value_grad(const LossProblem& p, const Eigen::VectorXd& alpha);
double loss_value(const LossProblem& p, const Eigen::VectorXd& alpha);

double l1_penalty(const Eigen::VectorXd& alpha, double lambda, const Eigen::VectorXd& t);

/// Componentwise soft threshold at step * lambda * t_k.
Eigen::VectorXd prox_l1(const Eigen::VectorXd& v, double step, double lambda, const Eigen::VectorXd& t);

/// Largest subgradient-optimality violation of alpha for loss + lambda * sum t_k |alpha_k|.
double kkt_residual(const Eigen::VectorXd& gradient, const Eigen::VectorXd& alpha, double lambda,
                    const Eigen::VectorXd& t);

struct SolverOptions {
  double tol = 1e-8;
  int max_iter = 5000;
  double kkt_tol = 1e-6;
  bool record_trace = false;
};

struct SolveResult {
  Eigen::VectorXd alpha;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  double kkt_residual = 0.0;
  bool capped = false;
  int restarts = 0;
  std::vector<double> trace;  // accepted penalized objective values, when requested
};

/// FISTA with backtracking and function-value restarts, started at alpha = 0.
/// Throws FitError if the objective becomes NaN.
SolveResult minimize(const LossProblem& p, double lambda, const SolverOptions& opts = {},
                     const Eigen::VectorXd* start = nullptr);

/// Smallest lambda for which every penalized coefficient is zero.
double lambda_max(const LossProblem& p, const SolverOptions& opts = {});

/// `size` log-spaced values from lambda_max down to lambda_max * ratio.
std::vector<double> default_lambda_grid(const LossProblem& p, int size = 40, double ratio = 1e-4,
                                        const SolverOptions& opts = {});

struct CvOptions {
  int k_folds = 5;
  std::uint64_t seed = 0;
  SolverOptions solver;
};

struct CvEntry {
  double lambda;
  int fold;
  double held_out_loss;
};

struct CvResult {
  double lambda = 0.0;
  std::vector<double> grid;
  std::vector<double> mean_loss;
  std::vector<CvEntry> table;
};

/// k-fold CV over `grid`, folds stratified by row role. The score is the
/// held-out unpenalized loss; ties go to the larger lambda. Throws FitError
/// when a fold would get no target rows.
CvResult cross_validate(const LossProblem& p, std::span<const double> grid, const CvOptions& opts = {});

/// Fold id per row, stratified by role, deterministic in seed.
std::vector<int> stratified_folds(const Eigen::ArrayXd& target, int k_folds, std::uint64_t seed);

}  // namespace seqbal
