#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "seqbal/dataset.hpp"
#include "seqbal/estimator.hpp"
#include "seqbal/pattern_graph.hpp"
#include "seqbal/rng.hpp"
#include "seqbal/weights.hpp"

namespace seqbal {

/// Polynomial on the log-odds scale: constant + sum coef * prod_j l_j^powers[j].
struct OddsPolynomial {
  struct Term {
    std::vector<int> powers;
    double coef = 0.0;
  };
  double constant = 0.0;
  std::vector<Term> terms;

  double eval(std::span<const double> full_row) const;
  int degree() const;
  /// True when every term only involves coordinates observed under r.
  bool uses_only(const Pattern& r) const;
};

using OddsSpec = std::map<Pattern, OddsPolynomial>;

enum class SimMethod { full, cc, true_weight, entropy, local, seq };

std::string_view to_string(SimMethod m);
SimMethod parse_sim_method(std::string_view s);

/// The eight-pattern regular graph used for the simulation design (G1).
PatternGraph simulation_graph();
/// G1 with the edge 11111 -> 11010 removed.
PatternGraph sensitivity_graph_g2();
/// CCMV over the simulation patterns.
PatternGraph sensitivity_graph_g3();

struct SimConfig {
  std::size_t n = 1000;
  int reps = 100;
  std::uint64_t seed = 1;
  Eigen::VectorXd theta_true = (Eigen::VectorXd(5) << 3.0, -2.0, 1.0, 2.0, -1.0).finished();
  PatternGraph graph = simulation_graph();
  OddsSpec odds;
  std::vector<SimMethod> methods{SimMethod::full, SimMethod::cc,    SimMethod::true_weight,
                                 SimMethod::entropy, SimMethod::local, SimMethod::seq};
  WeightFitOptions fit;
  /// Fixed lambda per weighting method; overrides fit.lambda for that method.
  std::map<SimMethod, double> method_lambda;
  NewtonOptions newton;
  double blowup_threshold = 1e6;
  int threads = 1;

  /// Throws ContractError on inconsistent settings.
  void check() const;
};

/// Seeded default odds polynomials (degree <= 4, only observed coordinates),
/// with intercepts calibrated so that complete cases make up about 40% of the
/// sample and every other pattern about 1/7 of the rest. `scale` multiplies
/// the non-constant coefficients.
OddsSpec default_odds_spec(const PatternGraph& g, std::uint64_t seed = 4, double scale = 1.0);

/// SimConfig with the default odds for its graph and a fixed lambda.
SimConfig default_sim_config();

/// Standard normal conditioned on [-3, 3].
double truncated_normal(Rng& rng);

struct GeneratedData {
  Dataset data;          // with missing cells masked
  Eigen::MatrixXd full;  // N x d before masking
  Eigen::VectorXd pi;    // P(R = 1_d | L_i)
  std::map<Pattern, Eigen::VectorXd> q;  // true Q^r(L_i) on all rows
};

/// True Q^r for every node on the rows of `full` (N x d), by the recursion.
std::map<Pattern, Eigen::VectorXd> true_q(const PatternGraph& g, const OddsSpec& odds, const Eigen::MatrixXd& full);

/// Column 0 is the outcome Y, columns 1.. the covariates.
GeneratedData generate(const SimConfig& cfg, std::uint64_t rep_index);

/// 1/pi on the complete cases, with the true Q^r as components.
WeightSet true_weights(const SimConfig& cfg, const GeneratedData& gen);

struct MethodSummary {
  std::string method;
  std::string graph;
  int successes = 0;
  int failures = 0;
  Eigen::VectorXd bias;
  Eigen::VectorXd mse;
  double bias_l1 = 0.0;
  double mse_l2 = 0.0;
  std::vector<std::optional<Eigen::VectorXd>> estimates;  // per replicate
};

struct StudyResult {
  std::vector<MethodSummary> methods;

  const MethodSummary& get(std::string_view method, std::string_view graph = "G1") const;
};

/// Estimate of one method on one generated data set, or nullopt on failure.
std::optional<Eigen::VectorXd> run_method(const SimConfig& cfg, SimMethod method, const GeneratedData& gen,
                                          const PatternGraph& fit_graph);

StudyResult run_study(const SimConfig& cfg);

/// Generates under cfg.graph and fits the weighting methods under each graph.
StudyResult sensitivity_study(const SimConfig& cfg, const std::vector<std::pair<std::string, PatternGraph>>& graphs);

void write_study_csv(const StudyResult& res, std::ostream& out);
void write_study_long(const StudyResult& res, std::ostream& out);
std::string study_table(const StudyResult& res);

}  // namespace seqbal
