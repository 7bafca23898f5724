#include "seqbal/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "seqbal/error.hpp"
#include "seqbal/log.hpp"

namespace seqbal {

std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::entropy: return "entropy";
    case LossKind::tailored: return "tailored";
    case LossKind::sequential: return "sequential";
  }
  return "tailored";
}

Eigen::Index LossProblem::n_target() const {
  return static_cast<Eigen::Index>((target > 0.5).count());
}

void LossProblem::check() const {
  if (target.size() != design.rows() || multiplier.size() != design.rows())
    throw ContractError("loss problem: role and multiplier vectors must match the design row count");
  if (t.size() != design.cols()) throw ContractError("loss problem: penalty weight count must match the design columns");
  if (!(n_total > 0.0)) throw ContractError("loss problem: n_total must be positive");
  for (Eigen::Index i = 0; i < design.rows(); ++i) {
    if (target(i) != 0.0 && target(i) != 1.0) throw ContractError("loss problem: target flags must be 0 or 1");
    if (!(multiplier(i) >= 0.0) || !std::isfinite(multiplier(i)))
      throw ContractError("loss problem: row multipliers must be finite and nonnegative");
    if (target(i) == 1.0 && multiplier(i) != 1.0) throw ContractError("loss problem: target rows carry multiplier 1");
  }
  if ((t.array() < 0.0).any()) throw ContractError("loss problem: penalty weights must be nonnegative");
  if (!design.allFinite()) throw ContractError("loss problem: design matrix is not finite");
}

LossProblem LossProblem::subset(std::span<const Eigen::Index> rows) const {
  LossProblem out;
  out.kind = kind;
  out.t = t;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.design.resize(n, design.cols());
  out.target.resize(n);
  out.multiplier.resize(n);
  for (Eigen::Index a = 0; a < n; ++a) {
    out.design.row(a) = design.row(rows[static_cast<std::size_t>(a)]);
    out.target(a) = target(rows[static_cast<std::size_t>(a)]);
    out.multiplier(a) = multiplier(rows[static_cast<std::size_t>(a)]);
  }
  out.n_total = n_total * static_cast<double>(n) / static_cast<double>(design.rows());
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// exp(eta) continued linearly beyond the cap: convex, C1, no overflow.
inline double capped_exp(double eta, double& slope, bool& capped) {
  if (eta <= kLinearPredictorCap) {
    slope = std::exp(eta);
    return slope;
  }
  capped = true;
  slope = std::exp(kLinearPredictorCap);
  return slope * (1.0 + eta - kLinearPredictorCap);
}

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Per-row loss contribution and its derivative w.r.t. eta.
template <bool WithGrad>
double row_terms(const LossProblem& p, const Eigen::VectorXd& eta, Eigen::VectorXd* deta, bool& capped) {
  double total = 0.0;
  const auto n = p.n_rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double e = eta(i);
    const bool tgt = p.target(i) > 0.5;
    double v, dv;
    if (p.kind == LossKind::entropy) {
      if (tgt) {
        v = softplus(-e);
        dv = -sigmoid(-e);
      } else {
        v = softplus(e);
        dv = sigmoid(e);
      }
    } else if (tgt) {
      v = -e;
      dv = -1.0;
    } else {
      const double m = p.multiplier(i);
      double slope;
      v = m * capped_exp(e, slope, capped);
      dv = m * slope;
    }
    total += v;
    if constexpr (WithGrad) (*deta)(i) = dv;
  }
  return total / p.n_total;
}

}  // namespace

LossEval loss_value_grad(const LossProblem& p, const Eigen::VectorXd& alpha) {
  LossEval out;
  const Eigen::VectorXd eta = p.design * alpha;
  Eigen::VectorXd deta(p.n_rows());
  out.value = row_terms<true>(p, eta, &deta, out.capped);
  out.gradient = p.design.transpose() * deta / p.n_total;
  return out;
}

double loss_value(const LossProblem& p, const Eigen::VectorXd& alpha) {
  bool capped = false;
  const Eigen::VectorXd eta = p.design * alpha;
  return row_terms<false>(p, eta, nullptr, capped);
}

double l1_penalty(const Eigen::VectorXd& alpha, double lambda, const Eigen::VectorXd& t) {
  if (lambda == 0.0) return 0.0;
  double s = 0.0;
  for (Eigen::Index k = 0; k < alpha.size(); ++k)
    if (t(k) != 0.0) s += t(k) * std::abs(alpha(k));
  return lambda * s;
}

Eigen::VectorXd prox_l1(const Eigen::VectorXd& v, double step, double lambda, const Eigen::VectorXd& t) {
  if (!(step > 0.0)) throw ContractError("prox step must be positive");
  Eigen::VectorXd out = v;
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    const double thr = step * lambda * t(k);
    if (thr <= 0.0) continue;
    const double a = std::abs(v(k)) - thr;
    out(k) = a > 0.0 ? std::copysign(a, v(k)) : 0.0;
  }
  return out;
}

double kkt_residual(const Eigen::VectorXd& gradient, const Eigen::VectorXd& alpha, double lambda,
                    const Eigen::VectorXd& t) {
  double worst = 0.0;
  for (Eigen::Index k = 0; k < alpha.size(); ++k) {
    const double bound = lambda * t(k);
    double r;
    if (alpha(k) != 0.0)
      r = std::abs(gradient(k) + bound * (alpha(k) > 0 ? 1.0 : -1.0));
    else
      r = std::max(std::abs(gradient(k)) - bound, 0.0);
    worst = std::max(worst, r);
  }
  return worst;
}

namespace {

// Second derivative of the per-row loss w.r.t. eta.
Eigen::VectorXd row_curvature(const LossProblem& p, const Eigen::VectorXd& eta) {
  Eigen::VectorXd h(p.n_rows());
  for (Eigen::Index i = 0; i < p.n_rows(); ++i) {
    const double e = eta(i);
    if (p.kind == LossKind::entropy) {
      const double s = sigmoid(e);
      h(i) = s * (1.0 - s);
    } else if (p.target(i) > 0.5) {
      h(i) = 0.0;
    } else {
      h(i) = e <= kLinearPredictorCap ? p.multiplier(i) * std::exp(e) : 0.0;
    }
  }
  return h;
}

// Proximal Newton steps: each minimizes the L1-penalized quadratic model by
// coordinate descent, then backtracks on the true objective. Returns true if
// the penalized objective went down; x and Fx are updated in place.
bool prox_newton(const LossProblem& p, double lambda, Eigen::VectorXd& x, double& Fx) {
  const auto K = x.size();
  bool improved = false;
  for (int step = 0; step < 20; ++step) {
    const Eigen::VectorXd eta = p.design * x;
    const auto fg = loss_value_grad(p, x);
    const Eigen::VectorXd h = row_curvature(p, eta);
    Eigen::MatrixXd H = p.design.transpose() * h.asDiagonal() * p.design / p.n_total;
    H.diagonal().array() += 1e-10 * std::max(1.0, H.diagonal().maxCoeff());

    Eigen::VectorXd z = x;
    Eigen::VectorXd hd = Eigen::VectorXd::Zero(K);  // H (z - x)
    for (int sweep = 0; sweep < 500; ++sweep) {
      double biggest = 0.0;
      for (Eigen::Index k = 0; k < K; ++k) {
        const double a = H(k, k);
        const double c = fg.gradient(k) + hd(k) - a * (z(k) - x(k));
        const double v = a * x(k) - c;
        const double thr = lambda * p.t(k);
        const double u = std::abs(v) > thr ? std::copysign(std::abs(v) - thr, v) / a : 0.0;
        const double delta = u - z(k);
        if (delta != 0.0) {
          hd += H.col(k) * delta;
          z(k) = u;
          biggest = std::max(biggest, std::abs(delta) * std::sqrt(a));
        }
      }
      if (biggest < 1e-13) break;
    }
    const Eigen::VectorXd d = z - x;
    if (!d.allFinite() || d.cwiseAbs().maxCoeff() == 0.0) break;
    bool accepted = false;
    for (double s = 1.0; s > 1e-10; s *= 0.5) {
      Eigen::VectorXd cand = x + s * d;
      const double Fc = loss_value(p, cand) + l1_penalty(cand, lambda, p.t);
      if (Fc < Fx) {
        x = std::move(cand);
        Fx = Fc;
        accepted = true;
        improved = true;
        break;
      }
    }
    if (!accepted) break;
  }
  return improved;
}

}  // namespace

SolveResult minimize(const LossProblem& p, double lambda, const SolverOptions& opts, const Eigen::VectorXd* start) {
  if (!(lambda >= 0.0)) throw ContractError("lambda must be nonnegative");
  p.check();
  const auto K = p.n_terms();
  if (start && start->size() != K) throw ContractError("warm start has the wrong length");
  SolveResult res;
  Eigen::VectorXd x = start ? *start : Eigen::VectorXd::Zero(K);
  Eigen::VectorXd y = x;
  double theta = 1.0;
  double lip = 1.0;
  double Fx = loss_value(p, x) + l1_penalty(x, lambda, p.t);
  if (std::isnan(Fx)) throw FitError("objective is NaN at the starting point");
  if (opts.record_trace) res.trace.push_back(Fx);
  bool just_restarted = true;
  bool capped = false;

  for (int it = 1; it <= opts.max_iter; ++it) {
    res.iterations = it;
    const auto fy = loss_value_grad(p, y);
    if (std::isnan(fy.value) || !fy.gradient.allFinite()) throw FitError("objective became NaN during minimization");

    Eigen::VectorXd z;
    double fz = 0.0;
    for (int bt = 0;; ++bt) {
      z = prox_l1(y - fy.gradient / lip, 1.0 / lip, lambda, p.t);
      const Eigen::VectorXd d = z - y;
      fz = loss_value(p, z);
      const double model = fy.value + fy.gradient.dot(d) + 0.5 * lip * d.squaredNorm();
      if (fz <= model + 1e-12 * std::max(1.0, std::abs(fy.value))) break;
      lip *= 2.0;
      if (bt > 200 || !std::isfinite(lip)) throw FitError("line search failed to find a descent step");
    }
    if (std::isnan(fz)) throw FitError("objective became NaN during minimization");
    const double Fz = fz + l1_penalty(z, lambda, p.t);

    if (Fz > Fx + 1e-12 * std::max(1.0, std::abs(Fx)) && !just_restarted) {
      // Momentum overshot: restart from the last accepted point.
      y = x;
      theta = 1.0;
      just_restarted = true;
      ++res.restarts;
      continue;
    }
    just_restarted = false;

    const double scale = std::max(1.0, x.cwiseAbs().maxCoeff());
    const double delta = (z - x).cwiseAbs().maxCoeff() / scale;
    const double theta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
    y = z + ((theta - 1.0) / theta_next) * (z - x);
    x = std::move(z);
    Fx = Fz;
    theta = theta_next;
    if (opts.record_trace) res.trace.push_back(Fx);
    lip *= 0.9;

    if (delta < opts.tol) {
      const auto fx = loss_value_grad(p, x);
      const double kkt = kkt_residual(fx.gradient, x, lambda, p.t);
      if (kkt <= opts.kkt_tol) {
        res.converged = true;
        break;
      }
    }
    if (it % 25 == 0 && prox_newton(p, lambda, x, Fx)) {
      y = x;
      theta = 1.0;
      just_restarted = true;
      if (opts.record_trace) res.trace.push_back(Fx);
    }
  }

  const auto fx = loss_value_grad(p, x);
  capped = fx.capped;
  res.alpha = x;
  res.objective = fx.value + l1_penalty(x, lambda, p.t);
  res.kkt_residual = kkt_residual(fx.gradient, x, lambda, p.t);
  res.capped = capped;
  if (res.converged && res.kkt_residual > opts.kkt_tol) res.converged = false;
  if (capped)
    log_warning("linear predictor exceeded " + std::to_string(kLinearPredictorCap) +
                " at the solution; odds are near the boundedness limit");
  return res;
}

double lambda_max(const LossProblem& p, const SolverOptions& opts) {
  const auto K = p.n_terms();
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(K);
  const bool intercept_only =
      K > 0 && p.t(0) == 0.0 && (p.t.tail(K - 1).array() > 0.0).all() && (p.design.col(0).array() == 1.0).all();
  if (intercept_only) {
    const double n_tgt = (p.target > 0.5).cast<double>().sum();
    const double src = ((1.0 - p.target) * p.multiplier).sum();
    const double n_src = (1.0 - p.target).sum();
    if (n_tgt > 0.0 && src > 0.0)
      alpha(0) = p.kind == LossKind::entropy ? std::log(n_tgt / n_src) : std::log(n_tgt / src);
  } else {
    alpha = minimize(p, 1e12, opts).alpha;
  }
  const auto g = loss_value_grad(p, alpha).gradient;
  double lmax = 0.0;
  for (Eigen::Index k = 0; k < K; ++k)
    if (p.t(k) > 0.0) lmax = std::max(lmax, std::abs(g(k)) / p.t(k));
  return lmax;
}

std::vector<double> default_lambda_grid(const LossProblem& p, int size, double ratio, const SolverOptions& opts) {
  if (size < 1) throw ContractError("lambda grid size must be positive");
  const double top = lambda_max(p, opts);
  std::vector<double> grid;
  if (!(top > 0.0)) return {0.0};
  if (size == 1) return {top};
  for (int j = 0; j < size; ++j) grid.push_back(top * std::pow(ratio, static_cast<double>(j) / (size - 1)));
  return grid;
}

std::vector<int> stratified_folds(const Eigen::ArrayXd& target, int k_folds, std::uint64_t seed) {
  if (k_folds < 2) throw ContractError("k_folds must be at least 2");
  std::vector<int> fold(static_cast<std::size_t>(target.size()), 0);
  std::mt19937_64 rng(seed);
  for (int role = 0; role < 2; ++role) {
    std::vector<std::size_t> ids;
    for (Eigen::Index i = 0; i < target.size(); ++i)
      if ((target(i) > 0.5) == (role == 1)) ids.push_back(static_cast<std::size_t>(i));
    std::shuffle(ids.begin(), ids.end(), rng);
    for (std::size_t a = 0; a < ids.size(); ++a) fold[ids[a]] = static_cast<int>(a % static_cast<std::size_t>(k_folds));
  }
  return fold;
}

CvResult cross_validate(const LossProblem& p, std::span<const double> grid, const CvOptions& opts) {
  if (grid.empty()) throw ContractError("lambda grid is empty");
  if (opts.k_folds < 2) throw ContractError("k_folds must be at least 2");
  p.check();
  CvResult res;
  res.grid.assign(grid.begin(), grid.end());
  if (grid.size() == 1) {
    res.lambda = grid.front();
    res.mean_loss.assign(1, std::numeric_limits<double>::quiet_NaN());
    return res;
  }

  const auto fold = stratified_folds(p.target, opts.k_folds, opts.seed);
  std::vector<LossProblem> train, held;
  for (int f = 0; f < opts.k_folds; ++f) {
    std::vector<Eigen::Index> in, out;
    for (Eigen::Index i = 0; i < p.n_rows(); ++i) (fold[static_cast<std::size_t>(i)] == f ? out : in).push_back(i);
    held.push_back(p.subset(out));
    train.push_back(p.subset(in));
    if (held.back().n_target() == 0 || train.back().n_target() == 0)
      throw FitError("cross-validation fold " + std::to_string(f + 1) + " has no target rows (" +
                     std::to_string(p.n_target()) + " target rows for " + std::to_string(opts.k_folds) + " folds)");
  }

  // Each fold walks the grid in order, warm-starting from the previous lambda.
  res.mean_loss.assign(grid.size(), 0.0);
  res.table.resize(grid.size() * static_cast<std::size_t>(opts.k_folds));
  for (int f = 0; f < opts.k_folds; ++f) {
    const auto& tr = train[static_cast<std::size_t>(f)];
    Eigen::VectorXd warm = Eigen::VectorXd::Zero(tr.n_terms());
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const auto sol = minimize(tr, grid[g], opts.solver, &warm);
      warm = sol.alpha;
      const double loss = loss_value(held[static_cast<std::size_t>(f)], sol.alpha);
      res.table[g * static_cast<std::size_t>(opts.k_folds) + static_cast<std::size_t>(f)] = {grid[g], f, loss};
    }
  }
  for (std::size_t g = 0; g < grid.size(); ++g)
    for (int f = 0; f < opts.k_folds; ++f)
      res.mean_loss[g] += res.table[g * static_cast<std::size_t>(opts.k_folds) + static_cast<std::size_t>(f)].held_out_loss / opts.k_folds;
  std::size_t best = 0;
  for (std::size_t g = 1; g < grid.size(); ++g) {
    const bool better = res.mean_loss[g] < res.mean_loss[best];
    const bool tie_larger = res.mean_loss[g] == res.mean_loss[best] && grid[g] > grid[best];
    if (better || tie_larger) best = g;
  }
  res.lambda = grid[best];
  return res;
}

}  // namespace seqbal
