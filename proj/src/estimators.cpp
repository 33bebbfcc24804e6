#include "semicausal/estimators.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "semicausal/math.hpp"
#include "semicausal/rng.hpp"

namespace semicausal {

namespace {

void check_finite(double v, const char* who, Eigen::Index row) {
  if (!std::isfinite(v)) {
    throw std::runtime_error(std::string(who) + ": non-finite prediction at row " +
                             std::to_string(row));
  }
}

long at_bounds(double p, double delta) {
  return (p <= delta || p >= 1.0 - delta) ? 1 : 0;
}

EstimateReport finish_report(std::string tag, double psi, Eigen::VectorXd influence, double level,
                             Eigen::Index n, EstimateDiagnostics diagnostics) {
  EstimateReport report;
  report.estimator = std::move(tag);
  report.psi_hat = psi;
  report.influence = std::move(influence);
  report.se = if_standard_error(report.influence);
  report.ci = wald_interval(psi, report.se, level);
  report.level = level;
  report.n = n;
  report.diagnostics = std::move(diagnostics);
  return report;
}

}  // namespace

double plugin_ate(const Dataset& data, const OutcomeFit& outcome) {
  KahanSum sum;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    Eigen::VectorXd l = data.covariates().row(i).transpose();
    double contrast = outcome.predict(l, 1) - outcome.predict(l, 0);
    check_finite(contrast, "plugin_ate", i);
    sum.add(contrast);
  }
  return sum.value() / static_cast<double>(data.size());
}

double ipw_ate(const Dataset& data, const PropensityFit& propensity) {
  KahanSum sum;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    double p = propensity.predict(data.covariates().row(i).transpose());
    if (!(p > 0.0 && p < 1.0)) {
      throw std::invalid_argument("ipw_ate: propensity " + std::to_string(p) +
                                  " at row " + std::to_string(i) + " is outside (0,1)");
    }
    double a = data.treatment()[i];
    double y = data.outcome()[i];
    double term = a * y / p - (1.0 - a) * y / (1.0 - p);
    check_finite(term, "ipw_ate", i);
    sum.add(term);
  }
  return sum.value() / static_cast<double>(data.size());
}

EstimateReport aipw_ate(const Dataset& data, const NuisancePair& nuisance, double level) {
  const Eigen::Index n = data.size();
  Eigen::VectorXd contrast(n);
  EstimateDiagnostics diagnostics;
  KahanSum sum;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd l = data.covariates().row(i).transpose();
    double p = nuisance.propensity.predict(l);
    diagnostics.truncated_propensity += at_bounds(p, nuisance.propensity.delta());
    double mu1 = nuisance.outcome.predict(l, 1);
    double mu0 = nuisance.outcome.predict(l, 0);
    double v = dr_contrast(data.treatment_at(i), data.outcome()[i], p, mu1, mu0);
    check_finite(v, "aipw_ate", i);
    contrast[i] = v;
    sum.add(v);
  }
  const double psi = sum.value() / static_cast<double>(n);
  Eigen::VectorXd influence = contrast.array() - psi;
  return finish_report("aipw", psi, std::move(influence), level, n, std::move(diagnostics));
}

EstimateReport crossfit_aipw(const Dataset& data, const PropensityLearner& propensity_learner,
                             const OutcomeLearner& outcome_learner, int folds, std::uint64_t seed,
                             double level) {
  const Eigen::Index n = data.size();
  if (folds < 2) {
    throw std::invalid_argument("crossfit_aipw: need at least 2 folds");
  }
  if (n < 2 * static_cast<Eigen::Index>(folds)) {
    throw std::invalid_argument("crossfit_aipw: need n >= 2K rows");
  }
  std::vector<int> fold_of = make_folds(n, folds, seed);

  Eigen::VectorXd contrast(n);
  EstimateDiagnostics diagnostics;
  for (int f = 0; f < folds; ++f) {
    std::vector<Eigen::Index> train;
    std::vector<Eigen::Index> test;
    for (Eigen::Index i = 0; i < n; ++i) {
      (fold_of[static_cast<std::size_t>(i)] == f ? test : train).push_back(i);
    }
    Eigen::MatrixXd cov(train.size(), data.dim());
    Eigen::VectorXd trt(train.size());
    Eigen::VectorXd out(train.size());
    for (std::size_t r = 0; r < train.size(); ++r) {
      cov.row(static_cast<Eigen::Index>(r)) = data.covariates().row(train[r]);
      trt[static_cast<Eigen::Index>(r)] = data.treatment()[train[r]];
      out[static_cast<Eigen::Index>(r)] = data.outcome()[train[r]];
    }
    try {
      Dataset complement(std::move(cov), std::move(trt), std::move(out));
      PropensityFit pfit = propensity_learner(complement);
      OutcomeFit ofit = outcome_learner(complement);
      for (Eigen::Index i : test) {
        Eigen::VectorXd l = data.covariates().row(i).transpose();
        double p = pfit.predict(l);
        diagnostics.truncated_propensity += at_bounds(p, pfit.delta());
        double v = dr_contrast(data.treatment_at(i), data.outcome()[i], p, ofit.predict(l, 1),
                               ofit.predict(l, 0));
        check_finite(v, "crossfit_aipw", i);
        contrast[i] = v;
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("crossfit_aipw: nuisance fit failed on fold " + std::to_string(f) +
                               ": " + e.what());
    }
  }

  KahanSum sum;
  for (Eigen::Index i = 0; i < n; ++i) sum.add(contrast[i]);
  const double psi = sum.value() / static_cast<double>(n);
  Eigen::VectorXd influence = contrast.array() - psi;
  diagnostics.fold_assignment = std::move(fold_of);
  return finish_report("crossfit_aipw", psi, std::move(influence), level, n,
                       std::move(diagnostics));
}

namespace {

inline double logistic(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

}  // namespace

IpwLogisticStack make_ipw_logistic_stack(const Dataset& data, const FeatureMap& features,
                                         const LogisticConfig& config) {
  PropensityFit fit = fit_logistic(data, features, config);
  const Eigen::VectorXd alpha = fit.coef();
  const Eigen::Index q = alpha.size();

  // psi solves the IPW moment at the fitted alpha
  KahanSum sum;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    Eigen::VectorXd x = features(data.covariates().row(i).transpose());
    double p = logistic(alpha.dot(x));
    double a = data.treatment()[i];
    double y = data.outcome()[i];
    sum.add(a * y / p - (1.0 - a) * y / (1.0 - p));
  }
  const double psi = sum.value() / static_cast<double>(data.size());

  Eigen::VectorXd theta(q + 1);
  theta[0] = psi;
  theta.tail(q) = alpha;

  FeatureMap feats = features;
  auto m = [feats, q](const Atom& z, const Eigen::VectorXd& th) {
    Eigen::VectorXd x = feats(z.l);
    double p = logistic(th.tail(q).dot(x));
    double a = z.a;
    Eigen::VectorXd out(q + 1);
    out[0] = a * z.y / p - (1.0 - a) * z.y / (1.0 - p) - th[0];
    out.tail(q) = (a - p) * x;
    return out;
  };
  auto jac = [feats, q](const Atom& z, const Eigen::VectorXd& th) {
    Eigen::VectorXd x = feats(z.l);
    double p = logistic(th.tail(q).dot(x));
    double a = z.a;
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(q + 1, q + 1);
    out(0, 0) = -1.0;
    // d phi / d alpha' = -{a y (1-p)/p + (1-a) y p/(1-p)} x'
    double slope = -(a * z.y * (1.0 - p) / p + (1.0 - a) * z.y * p / (1.0 - p));
    out.block(0, 1, 1, q) = slope * x.transpose();
    // d S / d alpha' = -p(1-p) x x'
    out.block(1, 1, q, q) = -p * (1.0 - p) * x * x.transpose();
    return out;
  };
  return IpwLogisticStack{std::move(theta), std::move(m), std::move(jac)};
}

EstimateReport ipw_estimated_parametric(const Dataset& data, const FeatureMap& features,
                                        double level, const LogisticConfig& config) {
  PropensityFit fit = fit_logistic(data, features, config);
  const Eigen::VectorXd alpha = fit.coef();
  const Eigen::Index q = alpha.size();
  const Eigen::Index n = data.size();

  Eigen::VectorXd phi(n);
  Eigen::MatrixXd scores(n, q);
  Eigen::RowVectorXd dphi_dalpha = Eigen::RowVectorXd::Zero(q);
  Eigen::MatrixXd dscore_dalpha = Eigen::MatrixXd::Zero(q, q);
  KahanSum sum;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd x = features(data.covariates().row(i).transpose());
    double p = logistic(alpha.dot(x));
    double a = data.treatment()[i];
    double y = data.outcome()[i];
    double term = a * y / p - (1.0 - a) * y / (1.0 - p);
    check_finite(term, "ipw_estimated_parametric", i);
    phi[i] = term;
    sum.add(term);
    scores.row(i) = ((a - p) * x).transpose();
    dphi_dalpha += -(a * y * (1.0 - p) / p + (1.0 - a) * y * p / (1.0 - p)) * x.transpose();
    dscore_dalpha -= p * (1.0 - p) * x * x.transpose();
  }
  const double psi = sum.value() / static_cast<double>(n);
  phi.array() -= psi;
  dphi_dalpha /= static_cast<double>(n);
  dscore_dalpha /= static_cast<double>(n);

  Eigen::FullPivLU<Eigen::MatrixXd> lu(dscore_dalpha);
  if (!lu.isInvertible()) {
    throw SingularDesignError("ipw_estimated_parametric: P_n{dS/dalpha} is singular");
  }
  // phi* = phi - P_n{dphi/dalpha'} P_n{dS/dalpha}^{-1} S
  Eigen::RowVectorXd correction_row = dphi_dalpha * lu.inverse();
  Eigen::VectorXd influence = phi - scores * correction_row.transpose();

  EstimateDiagnostics diagnostics;
  for (Eigen::Index i = 0; i < n; ++i) {
    diagnostics.truncated_propensity +=
        at_bounds(fit.predict(data.covariates().row(i).transpose()), fit.delta());
  }
  return finish_report("ipw_estimated", psi, std::move(influence), level, n,
                       std::move(diagnostics));
}

Eigen::VectorXd conditional_effect_ipw(const Dataset& data, const PropensityFit& propensity,
                                       const BasisMap& basis) {
  const Eigen::Index n = data.size();
  Eigen::VectorXd b0 = basis(data.covariates().row(0).transpose());
  const Eigen::Index k = b0.size();
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(k, k);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (data.treatment_at(i) != 1) continue;  // weights A/pi vanish off the treated
    Eigen::VectorXd b = basis(data.covariates().row(i).transpose());
    double w = 1.0 / propensity.predict(data.covariates().row(i).transpose());
    gram += w * b * b.transpose();
    rhs += w * data.outcome()[i] * b;
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
  if (!lu.isInvertible()) {
    throw SingularDesignError("conditional_effect_ipw: weighted Gram matrix is singular");
  }
  return lu.solve(rhs);
}

}  // namespace semicausal
