#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "oracles.hpp"
#include "seqbal/error.hpp"
#include "seqbal/estimator.hpp"
#include "seqbal/pipeline.hpp"
#include "seqbal/simulator.hpp"

using namespace seqbal;

namespace {

// Complete logistic data: column 0 is Y, then `p` normal predictors.
Dataset logistic_data(std::size_t n, std::size_t p, std::uint64_t seed, double scale = 1.0, double shift = 0.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(0, 1);
  const std::vector<double> beta{-0.3, 0.8, -0.5, 0.25};
  Eigen::MatrixXd m(n, p + 1);
  for (std::size_t i = 0; i < n; ++i) {
    double eta = beta[0];
    for (std::size_t j = 0; j < p; ++j) {
      const double x = z(rng);
      eta += beta[j + 1] * x;
      m(i, j + 1) = shift + scale * x;
    }
    m(i, 0) = u(rng) < oracle::expit(eta) ? 1.0 : 0.0;
  }
  std::vector<ColumnKind> kinds(p + 1, ColumnKind::continuous);
  kinds[0] = ColumnKind::discrete;
  return oracle::make_dataset(m, kinds);
}

EstimatingFunctionSpec spec_for(std::size_t p) {
  EstimatingFunctionSpec s;
  s.outcome = 0;
  for (std::size_t j = 1; j <= p; ++j) s.predictors.push_back(j);
  return s;
}

WeightSet unit_weights(const Dataset& ds) {
  WeightSet ws;
  ws.complete_rows = ds.complete_rows();
  ws.q[Pattern::complete(ds.n_cols())] = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(ws.complete_rows.size()));
  ws.assemble();
  return ws;
}

}  // namespace

TEST_CASE("psi at theta = 0 with y = 1") {
  Eigen::MatrixXd m(1, 3);
  m << 1.0, 2.0, -4.0;
  const auto ds = oracle::make_dataset(m, {ColumnKind::discrete, ColumnKind::continuous, ColumnKind::continuous});
  const auto spec = spec_for(2);
  const auto v = psi(spec, Eigen::VectorXd::Zero(3), ds.row(0));
  CHECK(v[0] == 0.5);
  CHECK(v[1] == 1.0);
  CHECK(v[2] == -2.0);
}

TEST_CASE("psi_dot matches finite differences") {
  const auto ds = logistic_data(20, 3, 1);
  const auto spec = spec_for(3);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> z;
  for (std::size_t i = 0; i < 20; ++i) {
    Eigen::VectorXd theta(4);
    for (int k = 0; k < 4; ++k) theta[k] = z(rng);
    const auto jac = psi_dot(spec, theta, ds.row(i));
    for (int a = 0; a < 4; ++a) {
      const auto grad = oracle::central_diff([&](const Eigen::VectorXd& t) { return psi(spec, t, ds.row(i))[a]; }, theta);
      CHECK((jac.row(a).transpose() - grad).cwiseAbs().maxCoeff() < 1e-8);
    }
  }
}

TEST_CASE("unit weights reproduce the logistic MLE") {
  const auto ds = logistic_data(800, 3, 3);
  const auto spec = spec_for(3);
  const auto data = regression_data(ds, spec, ds.complete_rows());
  const auto sol = solve_ee(data, Eigen::VectorXd::Ones(800), 800.0);
  const auto mle = oracle::logistic_mle(data.x, data.y);
  CHECK((sol.theta - mle).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(sol.score_norm < 1e-10);
  CHECK(psi_matrix(data, sol.theta).colwise().mean().cwiseAbs().maxCoeff() < 1e-10);

  const auto ws = unit_weights(ds);
  CHECK((solve_weighted_ee(ds, ws, spec).theta - mle).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("scaling every weight leaves the root unchanged") {
  const auto ds = logistic_data(500, 2, 4);
  const auto data = regression_data(ds, spec_for(2), ds.complete_rows());
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(1.0, 4.0);
  Eigen::VectorXd w(500);
  for (auto& v : w) v = u(rng);
  const auto a = solve_ee(data, w, 500.0).theta;
  const auto b = solve_ee(data, 2.0 * w, 500.0).theta;
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("affine predictor rescaling divides the slope") {
  const auto base = logistic_data(600, 1, 6);
  const auto moved = logistic_data(600, 1, 6, 2.5, 3.0);
  const auto spec = spec_for(1);
  const auto t0 = solve_ee(regression_data(base, spec, base.complete_rows()), Eigen::VectorXd::Ones(600), 600.0).theta;
  const auto t1 = solve_ee(regression_data(moved, spec, moved.complete_rows()), Eigen::VectorXd::Ones(600), 600.0).theta;
  CHECK(t1[1] == doctest::Approx(t0[1] / 2.5).epsilon(1e-9));
  CHECK(t1[0] == doctest::Approx(t0[0] - 3.0 * t1[1]).epsilon(1e-9));
}

TEST_CASE("estimating-equation errors") {
  const auto ds = logistic_data(50, 2, 7);
  const auto data = regression_data(ds, spec_for(2), ds.complete_rows());
  CHECK_THROWS_AS(solve_ee(data, Eigen::VectorXd::Ones(3), 50.0), ContractError);
  CHECK_THROWS_AS(solve_ee(data, Eigen::VectorXd::Ones(50), 0.0), ContractError);

  Eigen::MatrixXd m(4, 3);
  m << 1, 1, 2, 0, 2, 4, 1, 3, 6, 0, 4, 8;
  const auto collinear = oracle::make_dataset(m, {ColumnKind::discrete, ColumnKind::continuous, ColumnKind::continuous});
  const auto cd = regression_data(collinear, spec_for(2), collinear.complete_rows());
  CHECK_THROWS_AS(solve_ee(cd, Eigen::VectorXd::Ones(4), 4.0), FitError);

  Eigen::MatrixXd bad(2, 2);
  bad << 2, 1, 0, 1;
  const auto bd = oracle::make_dataset(bad);
  CHECK_THROWS_AS(regression_data(bd, spec_for(1), bd.complete_rows()), ContractError);

  CHECK_THROWS_AS(EstimatingFunctionSpec::from_names(ds, "V1", {"V1"}), ContractError);
  CHECK_THROWS_AS(EstimatingFunctionSpec::from_names(ds, "V1", {"nope"}), LookupError);
  const auto named = EstimatingFunctionSpec::from_names(ds, "V1", {"V3", "V2"});
  CHECK(named.predictors == std::vector<std::size_t>{2, 1});
  CHECK(named.dim() == 3);
}

TEST_CASE("projection residuals are orthogonal to the basis") {
  SimConfig cfg = default_sim_config();
  const auto gen = generate(cfg, 5);
  const auto spec = EstimatingFunctionSpec::from_names(gen.data, "Y", {"X1", "X2", "X3", "X4"});
  const auto fit = fit_sequential(cfg.graph, gen.data, cfg.fit);
  const auto theta = solve_weighted_ee(gen.data, fit.weights, spec).theta;
  const auto& cc = fit.weights.complete_rows;
  const auto resp = psi_matrix(regression_data(gen.data, spec, cc), theta);
  for (const auto& m : fit.models) {
    const auto beta = estimate_u(gen.data, fit.weights, spec, theta, m.spec);
    REQUIRE(beta.rows() == static_cast<Eigen::Index>(m.spec.size()));
    REQUIRE(beta.cols() == 5);
    const auto phi = design_matrix(m.spec, gen.data, cc);
    const auto& q = fit.weights.q.at(m.pattern);
    const Eigen::MatrixXd normal = (phi.array().colwise() * q.array()).matrix().transpose() * (resp - phi * beta) / q.sum();
    CHECK(normal.cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("sandwich covariance") {
  SUBCASE("symmetric and positive semidefinite under missingness") {
    SimConfig cfg = default_sim_config();
    const auto gen = generate(cfg, 6);
    const auto spec = EstimatingFunctionSpec::from_names(gen.data, "Y", {"X1", "X2", "X3", "X4"});
    const auto fit = fit_sequential(cfg.graph, gen.data, cfg.fit);
    const auto theta = solve_weighted_ee(gen.data, fit.weights, spec).theta;
    std::map<Pattern, BasisSpec> bases;
    for (const auto& m : fit.models) bases.emplace(m.pattern, m.spec);
    const auto cov = sandwich_covariance(gen.data, fit.weights, spec, theta, bases);
    CHECK((cov - cov.transpose()).cwiseAbs().maxCoeff() == 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10);
    bases.erase(fit.models.front().pattern);
    CHECK_THROWS_AS(sandwich_covariance(gen.data, fit.weights, spec, theta, bases), FitError);
  }
  SUBCASE("no missingness reduces to the classical sandwich") {
    const auto ds = logistic_data(2000, 3, 8);
    const auto spec = spec_for(3);
    const auto data = regression_data(ds, spec, ds.complete_rows());
    const auto mle = oracle::logistic_mle(data.x, data.y);
    const auto expected = oracle::logistic_sandwich(data.x, data.y, mle);
    const auto theta = solve_weighted_ee(ds, unit_weights(ds), spec).theta;
    const auto cov = sandwich_covariance(ds, unit_weights(ds), spec, theta, {});
    const auto classical = classical_sandwich(data, theta);
    for (int j = 0; j < 4; ++j) {
      CHECK(std::abs(cov(j, j) / expected(j, j) - 1.0) < 0.05);
      CHECK(std::abs(classical(j, j) / expected(j, j) - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("p-values match the normal tail") {
  for (double z : {0.0, 0.3, -1.0, 1.96, -2.5, 4.0, 8.0})
    CHECK(std::abs(normal_two_sided_p(z) - oracle::two_sided_p(z)) < 1e-12);
  FitResult r;
  r.names = {"a", "b", "c"};
  r.theta = Eigen::Vector3d(1.0, -2.0, 0.0);
  r.cov = Eigen::Vector3d(0.25, 1.0, 0.0).asDiagonal();
  r.finalize();
  CHECK(r.se[0] == 0.5);
  CHECK(r.z[1] == -2.0);
  CHECK(std::abs(r.p_values[0] - oracle::two_sided_p(2.0)) < 1e-12);
  CHECK(r.p_values[2] == 1.0);
  CHECK(r.to_json().find("\"parameters\"") != std::string::npos);
  CHECK(r.to_table().find("b") != std::string::npos);
}

TEST_CASE("bootstrap covariance") {
  SimConfig cfg = default_sim_config();
  cfg.n = 400;
  const auto gen = generate(cfg, 9);
  const auto spec = EstimatingFunctionSpec::from_names(gen.data, "Y", {"X1", "X2", "X3", "X4"});
  PipelineConfig pc;
  pc.method = Method::seq;
  pc.weights = cfg.fit;
  const auto wf = fit_weights(cfg.graph, gen.data, Method::seq, pc.weights);
  std::map<std::string, double> lambdas;
  for (const auto& m : wf.models) lambdas[model_key(m)] = m.lambda;

  SUBCASE("tiny replicate counts are flagged") {
    const auto b = bootstrap_covariance(gen.data, cfg.graph, spec, pc, lambdas, 2, 11);
    CHECK(b.low_precision);
    CHECK(b.replicates + b.failures == 2);
    CHECK_THROWS_AS(bootstrap_covariance(gen.data, cfg.graph, spec, pc, lambdas, 1, 11), ContractError);
  }
  SUBCASE("fixed seed is reproducible") {
    const auto a = bootstrap_covariance(gen.data, cfg.graph, spec, pc, lambdas, 6, 12);
    const auto b = bootstrap_covariance(gen.data, cfg.graph, spec, pc, lambdas, 6, 12);
    CHECK((a.cov.array() == b.cov.array()).all());
  }
}

TEST_CASE("bootstrap and sandwich agree on complete data") {
  const auto ds = logistic_data(1000, 2, 13);
  const auto g = th::make_graph(3, {"111"}, {});
  const auto spec = spec_for(2);
  PipelineConfig pc;
  pc.method = Method::cc;
  pc.variance = VarianceMethod::bootstrap;
  pc.bootstrap_reps = 300;
  pc.seed = 14;
  const auto boot = run_pipeline(g, ds, spec, pc);
  REQUIRE(boot.bootstrap);
  CHECK_FALSE(boot.bootstrap->low_precision);
  pc.variance = VarianceMethod::sandwich;
  const auto sand = run_pipeline(g, ds, spec, pc);
  CHECK((boot.fit.theta - sand.fit.theta).cwiseAbs().maxCoeff() == 0.0);
  for (int j = 0; j < 3; ++j) CHECK(std::abs(boot.fit.se[j] / sand.fit.se[j] - 1.0) < 0.25);
}
