#include "semicausal/inference.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

#include "semicausal/errors.hpp"
#include "semicausal/math.hpp"

namespace semicausal {

ConfidenceInterval::ConfidenceInterval(double level_, double lower_, double upper_)
    : level(level_), lower(lower_), upper(upper_) {
  if (!(level > 0.0 && level < 1.0)) {
    throw std::domain_error("ConfidenceInterval: level must lie strictly in (0,1)");
  }
  if (!(lower <= upper)) {
    throw std::invalid_argument("ConfidenceInterval: lower must not exceed upper");
  }
}

double if_standard_error(const Eigen::VectorXd& influence) {
  const Eigen::Index n = influence.size();
  if (n < 2) {
    throw std::invalid_argument("if_standard_error: needs at least 2 influence values");
  }
  KahanSum ss;
  for (Eigen::Index i = 0; i < n; ++i) ss.add(influence[i] * influence[i]);
  const double nn = static_cast<double>(n);
  return std::sqrt(ss.value() / nn / nn);
}

ConfidenceInterval wald_interval(double psi_hat, double se, double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw std::domain_error("wald_interval: level must lie strictly in (0,1)");
  }
  if (!(se >= 0.0)) {
    throw std::invalid_argument("wald_interval: se must be nonnegative");
  }
  const double z = normal_quantile(0.5 * (1.0 + level));
  return ConfidenceInterval(level, psi_hat - z * se, psi_hat + z * se);
}

namespace {

Eigen::VectorXd stacked_mean(const Dataset& data, const StackedFunction& m,
                             const Eigen::VectorXd& theta) {
  Atom z = data.row(0);
  Eigen::VectorXd first = m(z, theta);
  Eigen::VectorXd acc = first;
  for (Eigen::Index i = 1; i < data.size(); ++i) {
    z.l = data.covariates().row(i).transpose();
    z.a = data.treatment_at(i);
    z.y = data.outcome()[i];
    acc += m(z, theta);
  }
  return acc / static_cast<double>(data.size());
}

Eigen::MatrixXd influence_from_jacobian(const Dataset& data, const StackedFunction& m,
                                        const Eigen::VectorXd& theta,
                                        const Eigen::MatrixXd& jac_mean) {
  const Eigen::Index k = theta.size();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(jac_mean);
  if (!lu.isInvertible()) {
    throw SingularDesignError("sandwich_stacked: empirical Jacobian P_n{dm/dtheta'} is singular");
  }
  Eigen::MatrixXd neg_inv = -lu.inverse();
  Eigen::MatrixXd out(data.size(), k);
  Atom z;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    z.l = data.covariates().row(i).transpose();
    z.a = data.treatment_at(i);
    z.y = data.outcome()[i];
    out.row(i) = (neg_inv * m(z, theta)).transpose();
  }
  return out;
}

void check_solved(const Dataset& data, const StackedFunction& m, const Eigen::VectorXd& theta) {
  Eigen::VectorXd mean = stacked_mean(data, m, theta);
  double worst = mean.cwiseAbs().maxCoeff();
  if (worst >= 1e-6) {
    throw std::invalid_argument(
        "sandwich_stacked: estimating equation not solved at theta_hat (max |P_n m| = " +
        std::to_string(worst) + ")");
  }
}

}  // namespace

Eigen::MatrixXd sandwich_stacked(const Dataset& data, const StackedFunction& m,
                                 const Eigen::VectorXd& theta_hat) {
  check_solved(data, m, theta_hat);
  const Eigen::Index k = theta_hat.size();
  Eigen::MatrixXd jac(k, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double h = 1e-6 * (1.0 + std::abs(theta_hat[j]));
    Eigen::VectorXd up = theta_hat;
    Eigen::VectorXd dn = theta_hat;
    up[j] += h;
    dn[j] -= h;
    jac.col(j) = (stacked_mean(data, m, up) - stacked_mean(data, m, dn)) / (2.0 * h);
  }
  return influence_from_jacobian(data, m, theta_hat, jac);
}

Eigen::MatrixXd sandwich_stacked(const Dataset& data, const StackedFunction& m,
                                 const Eigen::VectorXd& theta_hat,
                                 const StackedJacobian& jacobian) {
  check_solved(data, m, theta_hat);
  const Eigen::Index k = theta_hat.size();
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(k, k);
  Atom z;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    z.l = data.covariates().row(i).transpose();
    z.a = data.treatment_at(i);
    z.y = data.outcome()[i];
    jac += jacobian(z, theta_hat);
  }
  jac /= static_cast<double>(data.size());
  return influence_from_jacobian(data, m, theta_hat, jac);
}

}  // namespace semicausal
