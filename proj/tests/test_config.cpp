#include "doctest.h"
#include "helpers.hpp"
#include "seqbal/config.hpp"
#include "seqbal/error.hpp"

using namespace seqbal;
using nlohmann::json;

namespace {

json fit_json() {
  return json{{"graph", "../graphs/fig1a_ccmv.json"}, {"data", "../data/toy.csv"}, {"outcome", "Y"}, {"method", "seq"}};
}

}  // namespace

TEST_CASE("fit config defaults and path resolution") {
  const auto base = th::source_dir() / "configs";
  const auto c = run_config_from_json(fit_json(), base);
  CHECK(c.graph_path == base / "../graphs/fig1a_ccmv.json");
  CHECK(c.pipeline.method == Method::seq);
  CHECK(c.pipeline.weights.lambda.use_cv);
  CHECK(c.pipeline.threads == 0);
  CHECK(c.out_dir == base / "out");
  CHECK(c.predictors.empty());
  CHECK(c.csv.na_token == "NA");
}

TEST_CASE("fit config fields") {
  auto j = fit_json();
  j["lambda"] = 0.05;
  j["basis"] = {{"n_splines", 5}, {"degree", 2}, {"knots", "uniform"}, {"penalty", "ones"}};
  j["solver"] = {{"tol", 1e-9}, {"max_iter", 100}, {"kkt_tol", 1e-7}};
  j["variance"] = "bootstrap";
  j["bootstrap_reps"] = 30;
  j["seed"] = 9;
  j["threads"] = 2;
  j["predictors"] = {"X1", "X2"};
  j["na_token"] = ".";
  j["column_kinds"] = {{"X1", "discrete"}};
  const auto c = run_config_from_json(j, th::source_dir() / "configs");
  CHECK_FALSE(c.pipeline.weights.lambda.use_cv);
  CHECK(c.pipeline.weights.lambda.fixed == 0.05);
  CHECK(c.pipeline.weights.basis.n_splines == 5);
  CHECK(c.pipeline.weights.basis.knots == KnotRule::uniform);
  CHECK(c.pipeline.weights.basis.penalty == PenaltyRule::ones);
  CHECK(c.pipeline.weights.solver.max_iter == 100);
  CHECK(c.pipeline.variance == VarianceMethod::bootstrap);
  CHECK(c.pipeline.bootstrap_reps == 30);
  CHECK(c.pipeline.seed == 9);
  CHECK(c.pipeline.weights.lambda.seed == 9);
  CHECK(c.pipeline.threads == 2);
  CHECK(c.predictors == std::vector<std::string>{"X1", "X2"});
  CHECK(c.csv.na_token == ".");
  CHECK(c.csv.kind_overrides.at("X1") == ColumnKind::discrete);

  auto cv = fit_json();
  cv["lambda"] = {{"mode", "cv"}, {"grid_size", 10}, {"grid_ratio", 0.01}, {"folds", 3}, {"per_model", {{"110", 0.2}}}};
  const auto p = run_config_from_json(cv, th::source_dir() / "configs").pipeline.weights.lambda;
  CHECK(p.use_cv);
  CHECK(p.grid_size == 10);
  CHECK(p.k_folds == 3);
  CHECK(p.per_model.at("110") == 0.2);
}

TEST_CASE("malformed fit configs") {
  auto missing = fit_json();
  missing.erase("outcome");
  CHECK_THROWS_AS(run_config_from_json(missing, "/tmp"), ParseError);
  auto unknown = fit_json();
  unknown["lamda"] = 0.1;
  CHECK_THROWS_AS(run_config_from_json(unknown, "/tmp"), ParseError);
  auto method = fit_json();
  method["method"] = "ipw";
  CHECK_THROWS_AS(run_config_from_json(method, "/tmp"), ParseError);
  auto neg = fit_json();
  neg["lambda"] = -1.0;
  CHECK_THROWS_AS(run_config_from_json(neg, "/tmp"), ParseError);
  auto wrong_type = fit_json();
  wrong_type["seed"] = "seven";
  CHECK_THROWS_AS(run_config_from_json(wrong_type, "/tmp"), ParseError);
  auto basis = fit_json();
  basis["basis"] = {{"n_splines", 2}, {"degree", 3}};
  CHECK_THROWS_AS(run_config_from_json(basis, "/tmp"), ParseError);
  auto variance = fit_json();
  variance["variance"] = "jackknife";
  CHECK_THROWS_AS(run_config_from_json(variance, "/tmp"), ParseError);
  CHECK_THROWS_AS(run_config_from_json(json::array(), "/tmp"), ParseError);
  auto absent = fit_json();
  absent["data"] = "../data/absent.csv";
  CHECK_THROWS_AS(run_config_from_json(absent, th::source_dir() / "configs"), LoadError);
  CHECK_THROWS_AS(load_run_config(th::source_dir() / "configs" / "nope.json"), LoadError);
}

TEST_CASE("bundled configs load") {
  const auto dir = th::source_dir() / "configs";
  for (const char* f : {"fit_toy_seq.json", "fit_toy_cc.json", "fit_toy_cv.json"}) CHECK_NOTHROW(load_run_config(dir / f));
  for (const char* f : {"sim_smoke.json", "sim_study.json", "sim_sensitivity.json"}) {
    const auto c = load_sim_config(dir / f);
    CHECK_NOTHROW(c.sim.check());
  }
  const auto sens = load_sim_config(dir / "sim_sensitivity.json");
  REQUIRE(sens.fit_graphs.size() == 3);
  CHECK(sens.fit_graphs[1].first == "G2");
  CHECK(sens.fit_graphs[2].second.nodes() == sens.sim.graph.nodes());
}

TEST_CASE("simulation config") {
  const auto d = sim_config_from_json(json::object(), "/tmp");
  CHECK(d.sim.n == 1000);
  CHECK(d.sim.reps == 100);
  CHECK(d.sim.threads == 0);
  CHECK(d.fit_graphs.size() == 1);
  CHECK(d.sim.method_lambda == default_sim_config().method_lambda);

  const auto c = sim_config_from_json(
      json{{"n", 200}, {"reps", 3}, {"graph", "G3"}, {"methods", {"full", "true"}}, {"odds", {{"default", {{"scale", 0.5}}}}}},
      "/tmp");
  CHECK(c.sim.n == 200);
  CHECK(c.sim.methods == std::vector<SimMethod>{SimMethod::full, SimMethod::true_weight});
  CHECK(c.sim.graph.edges().size() == 7);
  CHECK_NOTHROW(c.sim.check());

  CHECK_THROWS_AS(sim_config_from_json(json{{"methods", {"magic"}}}, "/tmp"), ParseError);
  CHECK_THROWS_AS(sim_config_from_json(json{{"graph", "G9"}}, "/tmp"), LoadError);
  CHECK_THROWS_AS(sim_config_from_json(json{{"fit_graphs", "G2"}}, "/tmp"), ParseError);
  CHECK_THROWS_AS(sim_config_from_json(json{{"method_lambda", {{"seq", -1.0}}}}, "/tmp"), ParseError);
}

TEST_CASE("odds spec JSON round trip") {
  const auto odds = default_sim_config().odds;
  const auto back = odds_spec_from_json(odds_spec_to_json(odds), 5);
  REQUIRE(back.size() == odds.size());
  for (const auto& [r, poly] : odds) {
    const auto& b = back.at(r);
    CHECK(b.constant == poly.constant);
    REQUIRE(b.terms.size() == poly.terms.size());
    for (std::size_t k = 0; k < poly.terms.size(); ++k) {
      CHECK(b.terms[k].powers == poly.terms[k].powers);
      CHECK(b.terms[k].coef == poly.terms[k].coef);
    }
  }
  CHECK_THROWS_AS(odds_spec_from_json(json{{"111", json::object()}}, 5), ParseError);
  CHECK_THROWS_AS(odds_spec_from_json(json{{"01111", {{"terms", {{{"powers", {-1, 0, 0, 0, 0}}, {"coef", 1.0}}}}}}}, 5),
                  ParseError);
}
