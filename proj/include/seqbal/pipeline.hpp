#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "seqbal/dataset.hpp"
#include "seqbal/estimator.hpp"
#include "seqbal/pattern_graph.hpp"
#include "seqbal/weights.hpp"

namespace seqbal {

/// cc: unweighted complete-case fit. The others fit balancing weights first.
enum class Method { cc, entropy, local, seq };

std::string_view to_string(Method m);
Method parse_method(std::string_view s);

enum class VarianceMethod { sandwich, bootstrap };

struct PipelineConfig {
  Method method = Method::seq;
  WeightFitOptions weights;
  NewtonOptions newton;
  VarianceMethod variance = VarianceMethod::sandwich;
  int bootstrap_reps = 200;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct WeightFit {
  ModelSet models;
  WeightSet weights;
};

/// Fits odds models and assembles complete-case weights for entropy, local or seq.
WeightFit fit_weights(const PatternGraph& g, const Dataset& ds, Method method, const WeightFitOptions& opts);

struct BootstrapResult {
  Eigen::MatrixXd cov;
  int replicates = 0;
  int failures = 0;
  bool low_precision = false;  // fewer than 50 successful replicates
};

/// Row-resampling bootstrap of the whole weighting + estimation pipeline.
/// `lambdas` fixes the penalty level per model key (from the original fit).
/// Throws FitError when more than 20% of replicates fail.
BootstrapResult bootstrap_covariance(const Dataset& ds, const PatternGraph& g, const EstimatingFunctionSpec& spec,
                                     const PipelineConfig& cfg, const std::map<std::string, double>& lambdas, int reps,
                                     std::uint64_t seed);

struct PipelineResult {
  FitResult fit;
  std::optional<WeightFit> weights;
  std::vector<BalanceRow> balance;
  GraphCheckReport check;
  std::optional<BootstrapResult> bootstrap;
};

/// End-to-end estimate of the logistic parameters with standard errors.
PipelineResult run_pipeline(const PatternGraph& g, const Dataset& ds, const EstimatingFunctionSpec& spec,
                            const PipelineConfig& cfg);

}  // namespace seqbal
