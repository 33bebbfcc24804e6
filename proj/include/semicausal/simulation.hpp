#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "semicausal/distribution.hpp"
#include "semicausal/estimators.hpp"
#include "semicausal/oracle.hpp"

namespace semicausal {

enum class NoiseKind { kGaussian, kTwoPoint, kNone };
enum class MisspecKind { kNone, kOmit, kDistort };

// Synthetic data-generating process with analytically known truth.
//
// L is one-dimensional with a finite law; A | L is Bernoulli with a logistic
// propensity; Y = mu0(L, A) + noise. The "distort" misspecification adds a
// fixed l^2 term (to the logit and/or the outcome mean) that the linear
// learners cannot represent; "omit" keeps the process but hands the learner
// an intercept-only model.
struct DGPSpec {
  std::vector<double> covariate_values{-1.0, -0.5, 0.0, 0.5, 1.0};
  std::vector<double> covariate_probs{0.2, 0.2, 0.2, 0.2, 0.2};
  double propensity_intercept = -0.25;
  double propensity_slope = 0.5;
  double outcome_intercept = 1.0;
  double outcome_covariate = 1.0;
  double outcome_treatment = 1.0;
  double outcome_interaction = 0.5;
  NoiseKind noise = NoiseKind::kGaussian;
  double noise_sd = 1.0;
  MisspecKind propensity_misspec = MisspecKind::kNone;
  MisspecKind outcome_misspec = MisspecKind::kNone;
  double rate_pi = 0.3;      // synthetic-nuisance dial r_pi
  double rate_mu = 0.3;      // synthetic-nuisance dial r_mu
  double rate_scale = 0.5;   // synthetic-nuisance dial c
  double delta = 0.01;

  void validate() const;
  double true_propensity(double l) const;        // includes distortion when flagged
  double true_outcome_mean(double l, int a) const;
  double true_ate() const;                        // exact summation over the covariate law
  double covariate_mean() const;
  double covariate_range() const;

  // Exact finite law with the same pi0, mu0 and covariate margin; outcomes
  // take two symmetric values so conditional means are preserved.
  DiscreteDistribution induced_distribution() const;

  Dataset sample(Eigen::Index n, std::uint64_t seed) const;
};

// fixed distortion magnitudes used by MisspecKind::kDistort
inline constexpr double kPropensityDistortion = 0.75;  // added to the logit, times l^2
inline constexpr double kOutcomeDistortion = 1.0;      // added to mu(l, a), times l^2

struct EstimatorStats {
  long replications = 0;
  long failures = 0;
  double mean_bias = 0.0;
  double empirical_sd = 0.0;
  double mean_se = 0.0;
  double coverage = 0.0;      // closed intervals: a zero-width CI at psi0 covers
  double mean_ci_width = 0.0;
};

struct PerRepRecord {
  long rep = 0;
  std::string estimator;
  double psi_hat = 0.0;
  double se = 0.0;
  bool covered = false;
};

struct MonteCarloSummary {
  std::uint64_t seed = 0;
  Eigen::Index n = 0;
  long replications = 0;
  double level = 0.95;
  double psi0 = 0.0;
  long failure_count = 0;
  std::vector<std::pair<std::string, EstimatorStats>> estimators;  // requested order
};

// Known estimator tags: plugin, ipw_known, ipw_estimated, aipw,
// crossfit_aipw, constant_truth. Replications use derived seeds and may run
// on several threads; aggregation is in replication order either way.
MonteCarloSummary run_monte_carlo(const DGPSpec& spec, const std::vector<std::string>& estimators,
                                  Eigen::Index n, long reps, std::uint64_t seed, double level,
                                  int threads = 1, int crossfit_folds = 5,
                                  std::vector<PerRepRecord>* per_rep = nullptr);

struct EfficiencyComparison {
  long replications = 0;
  double variance_known = 0.0;
  double variance_estimated = 0.0;
  double ratio = 0.0;
  bool reliable = false;  // false for degenerate replication counts
};

// IPW with the true propensity vs IPW with a fitted logistic model, on
// identical datasets.
EfficiencyComparison efficiency_experiment(const DGPSpec& spec, Eigen::Index n, long reps,
                                           std::uint64_t seed, int threads = 1);

struct DrCell {
  Eigen::Index n = 0;
  long replications = 0;
  double mean_bias = 0.0;
  double mc_se = 0.0;
};

struct DrTable {
  std::vector<DrCell> cells;
  double psi0 = 0.0;
  double limit_bias = 0.0;  // oracle exact_bias at the learners' population limits
};

// Monte-Carlo bias of AIPW across a sample-size grid under the spec's
// misspecification flags; at least one flag must be set.
DrTable dr_experiment(const DGPSpec& spec, const std::vector<Eigen::Index>& n_grid, long reps,
                      std::uint64_t seed, int threads = 1);

// Population-level fits of the (possibly misspecified) learners, solved
// exactly on the induced law.
std::pair<PropensityFunction, OutcomeFunction> limiting_nuisances(const DGPSpec& spec);

struct RateCell {
  Eigen::Index n = 0;
  long replications = 0;
  double sqrt_n_bias = 0.0;     // sqrt(n) * (variance-reduced mean bias)
  double mc_se = 0.0;           // Monte-Carlo standard error of sqrt_n_bias
  double exact_bias = 0.0;      // oracle bias of the synthetic pair at this n
  double raw_mean_bias = 0.0;   // plain mean(psi_hat) - psi0
  long retruncations = 0;       // synthetic propensity values clipped back
};

struct RateTable {
  double rate_pi = 0.0;
  double rate_mu = 0.0;
  double scale = 0.0;
  std::vector<RateCell> cells;
};

// AIPW with deterministic synthetic nuisances eta_n = eta0 + c n^{-r} u.
// The bias is estimated with the true-nuisance AIPW on the same sample as a
// control variate (its expectation is exactly psi0) plus antithetic noise
// pairs, so the n^{-(r_pi+r_mu)} cross-term is visible at desk scale; the
// plain mean bias is reported alongside.
RateTable rate_experiment(const DGPSpec& spec, const std::vector<Eigen::Index>& n_grid,
                          const std::vector<long>& reps_per_n, std::uint64_t seed,
                          int threads = 1);

// perturbation directions u_pi, u_mu for the synthetic nuisances
std::pair<std::function<double(double)>, std::function<double(double, int)>> rate_directions(
    const DGPSpec& spec);

}  // namespace semicausal
