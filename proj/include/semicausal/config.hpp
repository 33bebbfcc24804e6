#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "semicausal/nuisance.hpp"
#include "semicausal/simulation.hpp"

namespace semicausal {

// One nuisance learner block:
//   {method, features: [..], bandwidth?, kappa?, candidates?: [..], folds?, delta?}
// methods: logistic | ols | kernel | ensemble. Feature names are "1" for the
// intercept and "l1".."ld" for covariates; an empty list means intercept plus
// every covariate. Ensemble candidates are preset names such as "logistic",
// "logistic_intercept", "ols", "ols_intercept", "kernel" or "kernel:0.5".
struct LearnerSpec {
  std::string method;
  std::vector<std::string> features;
  double bandwidth = 0.0;  // 0 => Silverman
  double kappa = 0.0;
  std::vector<std::string> candidates;
  int folds = 5;
  double delta = 0.01;
};

struct EstimateConfig {
  std::string estimator = "aipw";  // plugin | ipw | ipw_estimated | aipw | crossfit_aipw
  double level = 0.95;
  int folds = 5;
  LearnerSpec propensity;
  LearnerSpec outcome;
};

FeatureMap make_feature_map(const std::vector<std::string>& names);
PropensityLearner make_propensity_learner(const LearnerSpec& spec, std::uint64_t seed);
OutcomeLearner make_outcome_learner(const LearnerSpec& spec, std::uint64_t seed);

EstimateConfig parse_estimate_config(const nlohmann::json& doc, const std::string& name);
DGPSpec parse_dgp_spec(const nlohmann::json& doc, const std::string& name);

// JSON or a small TOML subset ([section], key = value with strings, numbers,
// booleans and flat arrays), chosen by file extension.
nlohmann::json load_structured_file(const std::string& path);
nlohmann::json parse_toml_text(const std::string& text, const std::string& name);

}  // namespace semicausal
