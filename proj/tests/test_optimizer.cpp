#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "seqbal/error.hpp"
#include "seqbal/optimizer.hpp"

using namespace seqbal;

namespace {

LossProblem random_problem(std::mt19937_64& rng, LossKind kind, Eigen::Index n, Eigen::Index k,
                           double p_target = 0.4) {
  std::normal_distribution<double> z;
  std::bernoulli_distribution tgt(p_target);
  std::uniform_real_distribution<double> u(0.2, 3.0);
  LossProblem p;
  p.kind = kind;
  p.design.resize(n, k);
  p.target.resize(n);
  p.multiplier.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    p.design(i, 0) = 1.0;
    for (Eigen::Index j = 1; j < k; ++j) p.design(i, j) = z(rng);
    p.target(i) = tgt(rng) ? 1.0 : 0.0;
    p.multiplier(i) = (kind == LossKind::sequential && p.target(i) == 0.0) ? u(rng) : 1.0;
  }
  p.t.resize(k);
  p.t[0] = 0.0;
  for (Eigen::Index j = 1; j < k; ++j) p.t[j] = u(rng);
  p.n_total = static_cast<double>(n) * 1.25;
  return p;
}

Eigen::VectorXd random_alpha(std::mt19937_64& rng, Eigen::Index k, double scale = 0.5) {
  std::normal_distribution<double> z;
  Eigen::VectorXd a(k);
  for (Eigen::Index j = 0; j < k; ++j) a[j] = scale * z(rng);
  return a;
}

// Damped Newton on the smooth tailored loss, written out directly.
Eigen::VectorXd tailored_newton(const LossProblem& p) {
  const Eigen::MatrixXd& x = p.design;
  Eigen::VectorXd a = Eigen::VectorXd::Zero(x.cols());
  auto value = [&](const Eigen::VectorXd& v) {
    double s = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double eta = x.row(i).dot(v);
      s += p.target(i) == 0.0 ? std::exp(eta) : -eta;
    }
    return s / p.n_total;
  };
  for (int it = 0; it < 200; ++it) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(x.cols());
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(x.cols(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const Eigen::VectorXd xi = x.row(i).transpose();
      if (p.target(i) == 0.0) {
        const double e = std::exp(xi.dot(a));
        g += e * xi;
        h += e * xi * xi.transpose();
      } else {
        g -= xi;
      }
    }
    g /= p.n_total;
    h /= p.n_total;
    const Eigen::VectorXd step = h.ldlt().solve(g);
    double s = 1.0;
    const double f0 = value(a);
    while (value(a - s * step) > f0 && s > 1e-12) s *= 0.5;
    a -= s * step;
    if (g.cwiseAbs().maxCoeff() < 1e-14) break;
  }
  return a;
}

}  // namespace

TEST_CASE("loss values at zero") {
  LossProblem p;
  p.design = Eigen::MatrixXd::Ones(10, 1);
  p.target = Eigen::ArrayXd::Zero(10);
  p.target.tail(5) = 1.0;
  p.multiplier = Eigen::ArrayXd::Ones(10);
  p.t = Eigen::VectorXd::Zero(1);
  p.n_total = 10;
  p.kind = LossKind::tailored;
  CHECK(loss_value(p, Eigen::VectorXd::Zero(1)) == doctest::Approx(0.5).epsilon(1e-15));
  p.kind = LossKind::entropy;
  CHECK(loss_value(p, Eigen::VectorXd::Zero(1)) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("analytic gradients match central differences") {
  std::mt19937_64 rng(42);
  for (LossKind kind : {LossKind::tailored, LossKind::entropy, LossKind::sequential}) {
    for (int rep = 0; rep < 20; ++rep) {
      const auto p = random_problem(rng, kind, 60, 5);
      const auto a = random_alpha(rng, 5);
      const auto ev = loss_value_grad(p, a);
      const auto fd = oracle::central_diff([&](const Eigen::VectorXd& v) { return loss_value(p, v); }, a);
      const double rel = (fd - ev.gradient).norm() / std::max(ev.gradient.norm(), 1e-8);
      CAPTURE(to_string(kind));
      CHECK(rel < 1e-5);
      CHECK(ev.value == loss_value(p, a));
    }
  }
}

TEST_CASE("sequential with unit multipliers is the tailored loss") {
  std::mt19937_64 rng(3);
  auto p = random_problem(rng, LossKind::tailored, 80, 4);
  auto q = p;
  q.kind = LossKind::sequential;
  for (int rep = 0; rep < 10; ++rep) {
    const auto a = random_alpha(rng, 4);
    const auto ep = loss_value_grad(p, a);
    const auto eq = loss_value_grad(q, a);
    CHECK(ep.value == eq.value);
    CHECK((ep.gradient.array() == eq.gradient.array()).all());
  }
}

TEST_CASE("losses are convex along random segments") {
  std::mt19937_64 rng(8);
  for (LossKind kind : {LossKind::tailored, LossKind::entropy, LossKind::sequential}) {
    const auto p = random_problem(rng, kind, 50, 4);
    for (int s = 0; s < 100; ++s) {
      const auto a = random_alpha(rng, 4, 1.0);
      const auto b = random_alpha(rng, 4, 1.0);
      const double mid = loss_value(p, 0.5 * (a + b));
      CHECK(mid <= 0.5 * (loss_value(p, a) + loss_value(p, b)) + 1e-10);
    }
  }
}

TEST_CASE("large linear predictors are continued, not overflowed") {
  LossProblem p;
  p.kind = LossKind::tailored;
  p.design = Eigen::MatrixXd::Ones(2, 1);
  p.target = Eigen::ArrayXd(2);
  p.target << 0, 1;
  p.multiplier = Eigen::ArrayXd::Ones(2);
  p.t = Eigen::VectorXd::Zero(1);
  p.n_total = 2;
  const auto ev = loss_value_grad(p, Eigen::VectorXd::Constant(1, 40.0));
  CHECK(ev.capped);
  CHECK(std::isfinite(ev.value));
  CHECK(std::isfinite(ev.gradient[0]));
  CHECK_FALSE(loss_value_grad(p, Eigen::VectorXd::Constant(1, 10.0)).capped);
}

TEST_CASE("prox_l1") {
  Eigen::VectorXd v(2);
  v << 3.0, -0.5;
  Eigen::VectorXd t = Eigen::VectorXd::Ones(2);
  const auto r = prox_l1(v, 1.0, 1.0, t);
  CHECK(r[0] == 2.0);
  CHECK(r[1] == 0.0);
  CHECK((prox_l1(v, 1.0, 0.0, t).array() == v.array()).all());
  t[0] = 0.0;
  CHECK(prox_l1(v, 1.0, 1e9, t)[0] == 3.0);
  CHECK(prox_l1(-v, 0.5, 1.0, Eigen::VectorXd::Ones(2))[0] == -2.5);
}

TEST_CASE("huge lambda zeroes penalized coordinates; intercept solves the 1-D problem") {
  std::mt19937_64 rng(5);
  for (LossKind kind : {LossKind::tailored, LossKind::entropy, LossKind::sequential}) {
    const auto p = random_problem(rng, kind, 120, 5);
    const auto res = minimize(p, 1e6);
    REQUIRE(res.converged);
    for (Eigen::Index j = 1; j < 5; ++j) CHECK(res.alpha[j] == 0.0);
    const double n_tgt = p.target.sum();
    double src_mass = 0, n_src = 0;
    for (Eigen::Index i = 0; i < p.n_rows(); ++i)
      if (p.target(i) == 0.0) {
        src_mass += p.multiplier(i);
        n_src += 1;
      }
    const double expected = kind == LossKind::entropy ? std::log(n_tgt / n_src) : std::log(n_tgt / src_mass);
    CHECK(res.alpha[0] == doctest::Approx(expected).epsilon(1e-7));
    CHECK(lambda_max(p) < 1e6);
  }
}

TEST_CASE("lambda_max is the zeroing threshold") {
  std::mt19937_64 rng(6);
  const auto p = random_problem(rng, LossKind::tailored, 200, 4);
  const double lm = lambda_max(p);
  const auto above = minimize(p, lm * 1.001);
  for (Eigen::Index j = 1; j < 4; ++j) CHECK(above.alpha[j] == 0.0);
  const auto below = minimize(p, lm * 0.8);
  CHECK(below.alpha.tail(3).cwiseAbs().maxCoeff() > 0.0);
  const auto grid = default_lambda_grid(p, 40, 1e-4);
  REQUIRE(grid.size() == 40);
  CHECK(grid.front() == doctest::Approx(lm));
  CHECK(grid.back() == doctest::Approx(lm * 1e-4));
  for (std::size_t k = 1; k < grid.size(); ++k) CHECK(grid[k] < grid[k - 1]);
}

TEST_CASE("unpenalized tailored fit matches an independent Newton solve") {
  std::mt19937_64 rng(9);
  const auto p = random_problem(rng, LossKind::tailored, 300, 4, 0.5);
  const auto res = minimize(p, 0.0);
  REQUIRE(res.converged);
  const auto ref = tailored_newton(p);
  CHECK((res.alpha - ref).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("converged solves satisfy KKT and the balance identity") {
  std::mt19937_64 rng(10);
  for (LossKind kind : {LossKind::tailored, LossKind::sequential}) {
    for (double lambda : {0.0, 1e-3, 1e-2, 5e-2}) {
      const auto p = random_problem(rng, kind, 250, 6);
      const auto res = minimize(p, lambda);
      REQUIRE(res.converged);
      CHECK(res.kkt_residual <= 1e-6);
      CHECK(kkt_residual(loss_value_grad(p, res.alpha).gradient, res.alpha, lambda, p.t) <= 1e-6);
      const Eigen::VectorXd eta = p.design * res.alpha;
      for (Eigen::Index k = 0; k < p.n_terms(); ++k) {
        double gap = 0;
        for (Eigen::Index i = 0; i < p.n_rows(); ++i)
          gap += p.target(i) == 1.0 ? p.design(i, k) : -p.multiplier(i) * std::exp(eta[i]) * p.design(i, k);
        CHECK(std::abs(gap) <= p.n_total * lambda * p.t[k] + 1e-6 * p.n_total);
      }
    }
  }
}

TEST_CASE("accepted objective values never increase") {
  std::mt19937_64 rng(12);
  for (LossKind kind : {LossKind::tailored, LossKind::entropy, LossKind::sequential}) {
    const auto p = random_problem(rng, kind, 200, 6);
    SolverOptions opts;
    opts.record_trace = true;
    const auto res = minimize(p, 1e-3, opts);
    REQUIRE(res.trace.size() >= 2);
    for (std::size_t k = 1; k < res.trace.size(); ++k) CHECK(res.trace[k] <= res.trace[k - 1] + 1e-12);
    CHECK(res.objective == doctest::Approx(res.trace.back()));
  }
}

TEST_CASE("non-convergence is reported, NaN is an error") {
  std::mt19937_64 rng(13);
  const auto p = random_problem(rng, LossKind::entropy, 100, 5);
  SolverOptions opts;
  opts.max_iter = 1;
  const auto res = minimize(p, 1e-4, opts);
  CHECK_FALSE(res.converged);
  auto bad = p;
  bad.design(3, 2) = std::nan("");
  CHECK_THROWS_AS(minimize(bad, 1e-3), Error);
  auto wrong = p;
  wrong.t.resize(2);
  CHECK_THROWS_AS(minimize(wrong, 1e-3), ContractError);
}

TEST_CASE("stratified folds preserve roles") {
  Eigen::ArrayXd target(103);
  for (Eigen::Index i = 0; i < 103; ++i) target(i) = i % 3 == 0 ? 1.0 : 0.0;
  const auto folds = stratified_folds(target, 5, 7);
  REQUIRE(folds.size() == 103);
  for (int f = 0; f < 5; ++f) {
    int nt = 0, ns = 0;
    for (Eigen::Index i = 0; i < 103; ++i)
      if (folds[static_cast<std::size_t>(i)] == f) (target(i) == 1.0 ? nt : ns)++;
    CHECK(nt >= 6);
    CHECK(nt <= 7);
    CHECK(ns >= 13);
    CHECK(ns <= 14);
  }
  CHECK(stratified_folds(target, 5, 7) == folds);
}

TEST_CASE("cross-validation") {
  std::mt19937_64 rng(14);
  SUBCASE("single-value grid") {
    const auto p = random_problem(rng, LossKind::tailored, 150, 4);
    const std::vector<double> grid{0.01};
    const auto cv = cross_validate(p, grid);
    CHECK(cv.lambda == 0.01);
  }
  SUBCASE("duplicate rows give identical folds") {
    LossProblem p;
    p.kind = LossKind::tailored;
    const Eigen::Index n = 50;
    p.design.resize(n, 2);
    p.target.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p.design(i, 0) = 1.0;
      p.design(i, 1) = 0.5;
      p.target(i) = i % 2 == 0 ? 1.0 : 0.0;
    }
    p.multiplier = Eigen::ArrayXd::Ones(n);
    p.t = Eigen::VectorXd::Ones(2);
    p.t[0] = 0.0;
    p.n_total = n;
    const std::vector<double> grid{0.1, 0.01, 0.0};
    const auto cv = cross_validate(p, grid);
    for (double lambda : grid) {
      std::vector<double> losses;
      for (const auto& e : cv.table)
        if (e.lambda == lambda) losses.push_back(e.held_out_loss);
      REQUIRE(losses.size() == 5);
      for (double v : losses) CHECK(v == doctest::Approx(losses[0]).epsilon(1e-9));
    }
  }
  SUBCASE("chosen lambda does no worse than lambda = 0 out of sample") {
    // truth depends on the first two of eight covariates
    LossProblem p;
    p.kind = LossKind::tailored;
    const Eigen::Index n = 400, k = 9;
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u(0, 1);
    p.design.resize(n, k);
    p.target.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p.design(i, 0) = 1;
      for (Eigen::Index j = 1; j < k; ++j) p.design(i, j) = z(rng);
      const double odds = std::exp(-0.3 + 0.8 * p.design(i, 1) - 0.5 * p.design(i, 2));
      p.target(i) = u(rng) < odds / (1 + odds) ? 1.0 : 0.0;
    }
    p.multiplier = Eigen::ArrayXd::Ones(n);
    p.t = Eigen::VectorXd::Ones(k);
    p.t[0] = 0;
    p.n_total = n;
    auto grid = default_lambda_grid(p, 15, 1e-3);
    grid.push_back(0.0);
    CvOptions opts;
    opts.seed = 3;
    const auto cv = cross_validate(p, grid, opts);

    const auto folds = stratified_folds(p.target, opts.k_folds, opts.seed);
    auto held_out = [&](double lambda) {
      double total = 0;
      for (int f = 0; f < opts.k_folds; ++f) {
        std::vector<Eigen::Index> tr, te;
        for (Eigen::Index i = 0; i < n; ++i) (folds[static_cast<std::size_t>(i)] == f ? te : tr).push_back(i);
        const auto fit = minimize(p.subset(tr), lambda);
        total += loss_value(p.subset(te), fit.alpha);
      }
      return total / opts.k_folds;
    };
    const double at_hat = held_out(cv.lambda);
    const double at_zero = held_out(0.0);
    CHECK(at_hat <= at_zero);
    // ties go to the larger lambda
    const auto best = std::min_element(cv.mean_loss.begin(), cv.mean_loss.end());
    CHECK(cv.lambda == cv.grid[static_cast<std::size_t>(best - cv.mean_loss.begin())]);
  }
  SUBCASE("fold without targets is an error") {
    auto p = random_problem(rng, LossKind::tailored, 100, 3);
    p.target.setZero();
    p.target(0) = 1.0;
    p.target(1) = 1.0;
    const std::vector<double> grid{0.1, 0.01};
    CHECK_THROWS_AS(cross_validate(p, grid), FitError);
  }
}
