#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "semicausal/dataset.hpp"
#include "semicausal/errors.hpp"

namespace semicausal {

using FeatureMap = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

FeatureMap intercept_only_features();
FeatureMap linear_features();  // [1, l1, .., ld]

// min(max(p, delta), 1 - delta); requires 0 < delta < 0.5.
double truncate_propensity(double p, double delta);

// Fitted propensity predictor. predict() truncates to [delta, 1-delta];
// raw() exposes the untruncated model value.
class PropensityFit {
 public:
  PropensityFit(std::function<double(const Eigen::VectorXd&)> raw, std::string method,
                double delta, Eigen::VectorXd coef = Eigen::VectorXd());

  double predict(const Eigen::VectorXd& l) const { return truncate_propensity(raw_(l), delta_); }
  double raw(const Eigen::VectorXd& l) const { return raw_(l); }
  double delta() const { return delta_; }
  const std::string& method() const { return method_; }
  const Eigen::VectorXd& coef() const { return coef_; }

 private:
  std::function<double(const Eigen::VectorXd&)> raw_;
  std::string method_;
  double delta_;
  Eigen::VectorXd coef_;
};

// Fitted outcome regression mu(l, a).
class OutcomeFit {
 public:
  OutcomeFit(std::function<double(const Eigen::VectorXd&, int)> fn, std::string method);

  double predict(const Eigen::VectorXd& l, int a) const { return fn_(l, a); }
  const std::string& method() const { return method_; }

  // queries where all kernel weights underflowed and the arm mean was used
  long fallback_count() const { return fallback_ ? fallback_->load() : 0; }

 private:
  friend OutcomeFit fit_outcome_kernel(const Dataset&, double);
  std::function<double(const Eigen::VectorXd&, int)> fn_;
  std::string method_;
  std::shared_ptr<std::atomic<long>> fallback_;
};

struct NuisancePair {
  PropensityFit propensity;
  OutcomeFit outcome;
};

struct LogisticConfig {
  double delta = 0.01;
  int max_iterations = 100;
  double score_tolerance = 1e-8;   // on max |P_n{(A - pi)x}|
  double step_tolerance = 1e-10;   // on max |parameter change|
  double separation_bound = 30.0;  // |linear predictor| beyond this declares separation
};

// Bernoulli MLE via iteratively reweighted least squares.
PropensityFit fit_logistic(const Dataset& data, const FeatureMap& features,
                           const LogisticConfig& config = LogisticConfig());

// Ordinary least squares fit separately within each treatment arm.
OutcomeFit fit_outcome_linear(const Dataset& data, const FeatureMap& features);

// Nadaraya-Watson per arm, Gaussian kernel on standardized covariates.
OutcomeFit fit_outcome_kernel(const Dataset& data, double bandwidth);

// Silverman's rule on standardized covariates, times n^{-kappa}.
double silverman_bandwidth(const Dataset& data, double kappa = 0.0);

using PropensityLearner = std::function<PropensityFit(const Dataset&)>;
using OutcomeLearner = std::function<OutcomeFit(const Dataset&)>;

struct EnsembleInfo {
  Eigen::VectorXd weights;     // over retained candidates, nonnegative, summing to 1
  std::vector<int> retained;   // original candidate indices
  std::vector<int> dropped;
  double cv_risk = 0.0;        // cross-validated risk at the solved weights
};

// K-fold stacking: cross-validated predictions per candidate, convex weights
// from least squares over the probability simplex, candidates refit on the
// full sample. Candidates that fail on any fold are dropped.
PropensityFit fit_propensity_ensemble(const Dataset& data,
                                      const std::vector<PropensityLearner>& candidates, int folds,
                                      std::uint64_t seed, double delta,
                                      EnsembleInfo* info = nullptr);
OutcomeFit fit_outcome_ensemble(const Dataset& data, const std::vector<OutcomeLearner>& candidates,
                                int folds, std::uint64_t seed, EnsembleInfo* info = nullptr);

// Seeded shuffle partition into k folds with sizes differing by at most 1;
// returns the fold index of every row.
std::vector<int> make_folds(Eigen::Index n, int k, std::uint64_t seed);

// argmin_w ||target - preds * w||^2 over the probability simplex, by pairwise
// projected coordinate descent (1e-10 objective-change stop, 1e4 sweep cap).
Eigen::VectorXd simplex_least_squares(const Eigen::MatrixXd& preds, const Eigen::VectorXd& target);

}  // namespace semicausal
