#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semicausal/inference.hpp"
#include "semicausal/nuisance.hpp"

namespace semicausal {

// m_a(z; pi, mu) = I(a_obs = arm) {y - mu_arm} / [arm*pi + (1-arm)(1-pi)] + mu_arm
inline double dr_arm_moment(int a_obs, double y, int arm, double pi, double mu_arm) {
  const double denom = arm == 1 ? pi : 1.0 - pi;
  return (a_obs == arm ? (y - mu_arm) / denom : 0.0) + mu_arm;
}

// m_1 - m_0 evaluated at one observation
inline double dr_contrast(int a_obs, double y, double pi, double mu1, double mu0) {
  return dr_arm_moment(a_obs, y, 1, pi, mu1) - dr_arm_moment(a_obs, y, 0, pi, mu0);
}

struct EstimateDiagnostics {
  long truncated_propensity = 0;    // predictions sitting at the [delta, 1-delta] bounds
  std::vector<int> fold_assignment; // nonempty only for cross-fit estimates
  bool naive_se = false;            // se treats the fitted nuisance as known
};

struct EstimateReport {
  std::string estimator;
  double psi_hat = 0.0;
  Eigen::VectorXd influence;
  double se = 0.0;
  ConfidenceInterval ci;
  double level = 0.95;
  Eigen::Index n = 0;
  EstimateDiagnostics diagnostics;
};

// P_n{mu(L,1) - mu(L,0)}
double plugin_ate(const Dataset& data, const OutcomeFit& outcome);

// P_n{AY/pi(L) - (1-A)Y/(1-pi(L))}
double ipw_ate(const Dataset& data, const PropensityFit& propensity);

// Doubly robust estimator with influence-function inference.
EstimateReport aipw_ate(const Dataset& data, const NuisancePair& nuisance, double level = 0.95);

// K-fold cross-fitting: nuisances fit on each fold's complement, moments
// evaluated on the fold, influence values pooled over all rows.
EstimateReport crossfit_aipw(const Dataset& data, const PropensityLearner& propensity_learner,
                             const OutcomeLearner& outcome_learner, int folds, std::uint64_t seed,
                             double level = 0.95);

// IPW with a logistic propensity model; influence values carry the
// estimated-alpha correction from the stacked estimating equations.
EstimateReport ipw_estimated_parametric(const Dataset& data, const FeatureMap& features,
                                        double level = 0.95,
                                        const LogisticConfig& config = LogisticConfig());

using BasisMap = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// Solves P_n{(A/pi(L)) basis(V) (Y - psi' basis(V))} = 0, i.e. weighted least
// squares with weights A/pi(L).
Eigen::VectorXd conditional_effect_ipw(const Dataset& data, const PropensityFit& propensity,
                                       const BasisMap& basis);

// IPW estimating function stacked with the logistic score, for the sandwich
// cross-check; theta = (psi, alpha).
struct IpwLogisticStack {
  Eigen::VectorXd theta_hat;
  StackedFunction m;
  StackedJacobian jacobian;
};
IpwLogisticStack make_ipw_logistic_stack(const Dataset& data, const FeatureMap& features,
                                         const LogisticConfig& config = LogisticConfig());

}  // namespace semicausal
