#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "semicausal/distribution.hpp"

namespace semicausal {

// One-dimensional family p_eps = p0 (1 + eps g) through the base
// distribution. g must have exact mean zero under the base (within 1e-12);
// it doubles as the submodel score at eps = 0. Admissible range is
// |eps| < 1 / sup|g|, which keeps every perturbed mass nonnegative.
class Submodel {
 public:
  Submodel(DiscreteDistribution base, const ZFunction& g);
  Submodel(DiscreteDistribution base, std::vector<double> g_values);

  const DiscreteDistribution& base() const { return base_; }
  const std::vector<double>& g_values() const { return g_values_; }
  double sup_g() const { return sup_g_; }
  double max_epsilon() const;  // 1 / sup|g|; +inf for g == 0

 private:
  void validate();
  DiscreteDistribution base_;
  std::vector<double> g_values_;
  double sup_g_ = 0.0;
};

// Atom masses p0 (1 + eps g); requires |eps| < max_epsilon().
DiscreteDistribution perturb(const Submodel& sub, double epsilon);

using Functional = std::function<double(const DiscreteDistribution&)>;

// Central difference [psi(P_{+h}) - psi(P_{-h})] / 2h, with one Richardson
// refinement (steps h and h/2) by default.
double pathwise_derivative(const Submodel& sub, const Functional& functional, double step = 1e-4,
                           bool richardson = true);

// P(phi S_eps) = exact_mean(phi * g, base), using the score identity S = g.
double eif_covariance(const Submodel& sub, const ZFunction& phi);

struct EifCheckEntry {
  double derivative = 0.0;
  double covariance = 0.0;
  double gap = 0.0;
};

struct EifCheckReport {
  std::vector<EifCheckEntry> checks;
  double phi_mean = 0.0;      // exact_mean(phi); ~0 for a valid influence function
  double phi_variance = 0.0;  // exact_mean(phi^2)
  double tol = 1e-6;
  bool gaps_ok = false;
  bool mean_ok = false;
  bool pass = false;
};

// Verifies the pathwise-derivative identity for the ATE functional against
// every supplied mean-zero direction g (one per-atom value vector).
EifCheckReport check_eif(const DiscreteDistribution& base, const ZFunction& phi,
                         const std::vector<std::vector<double>>& perturbations, double tol = 1e-6,
                         double step = 1e-4);

using PropensityFunction = std::function<double(const Eigen::VectorXd&)>;
using OutcomeFunction = std::function<double(const Eigen::VectorXd&, int)>;

// m1 - m0 - psi0 built from the base's own true nuisances.
ZFunction efficient_influence(const DiscreteDistribution& base);

// AY/pi0 - (1-A)Y/(1-pi0) - psi0 with the true propensity.
ZFunction ipw_influence(const DiscreteDistribution& base);

// i.i.d. uniform(-1,1) atom values, centered exactly and rescaled to
// sup-norm 1; satisfies the Submodel invariants by construction.
std::vector<double> random_score_direction(const DiscreteDistribution& base, std::uint64_t seed);

// Random direction in the tangent space of the known-propensity model:
// E(g | L, A) = E(g | L), so perturbing along it leaves p(a | l) unchanged.
// This is the space where the plain IPW influence function lives.
std::vector<double> random_score_direction_fixed_propensity(const DiscreteDistribution& base,
                                                            std::uint64_t seed);

// exact_mean(m(.; pi, mu)) - true_ate(base). Supplied pi must stay inside
// [delta, 1-delta] on the support.
double exact_bias(const DiscreteDistribution& base, const PropensityFunction& pi,
                  const OutcomeFunction& mu);

struct ProductBound {
  double lhs = 0.0;  // |exact bias|
  double rhs = 0.0;  // (1/delta) * sum_a ||pi - pi0|| ||mu(.,a) - mu0(.,a)||
  bool pass = false;
};

// Cauchy-Schwarz product bound with the explicit constant 1/delta, L2(P)
// norms taken exactly over the covariate margin.
ProductBound product_bound_check(const DiscreteDistribution& base, const PropensityFunction& pi,
                                 const OutcomeFunction& mu, double delta);

}  // namespace semicausal
