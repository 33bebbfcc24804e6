#pragma once

#include <Eigen/Core>
#include <functional>

#include "semicausal/dataset.hpp"

namespace semicausal {

struct ConfidenceInterval {
  ConfidenceInterval() = default;
  ConfidenceInterval(double level_, double lower_, double upper_);
  double level = 0.95;
  double lower = 0.0;
  double upper = 0.0;
};

// sqrt(P_n{phi^2} / n) for already-centered influence values; needs n >= 2.
double if_standard_error(const Eigen::VectorXd& influence);

// psi_hat +/- z * se with z the standard-normal quantile at (1+level)/2.
ConfidenceInterval wald_interval(double psi_hat, double se, double level);

using StackedFunction = std::function<Eigen::VectorXd(const Atom&, const Eigen::VectorXd&)>;
using StackedJacobian = std::function<Eigen::MatrixXd(const Atom&, const Eigen::VectorXd&)>;

// Per-row influence vectors of the stacked M-estimator solving
// P_n{m(Z; theta)} = 0: row i is -J^{-1} m(Z_i; theta_hat) with
// J = P_n{dm/dtheta'}; the sign makes the sample-mean problem m = y - theta
// come out as y_i - ybar. Preconditions: the estimating equation is solved
// (max |P_n m| < 1e-6) and J is nonsingular.
//
// The numeric-Jacobian overload uses central differences with step
// 1e-6 * (1 + |theta_j|).
Eigen::MatrixXd sandwich_stacked(const Dataset& data, const StackedFunction& m,
                                 const Eigen::VectorXd& theta_hat);
Eigen::MatrixXd sandwich_stacked(const Dataset& data, const StackedFunction& m,
                                 const Eigen::VectorXd& theta_hat,
                                 const StackedJacobian& jacobian);

}  // namespace semicausal
