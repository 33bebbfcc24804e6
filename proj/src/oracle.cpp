#include "semicausal/oracle.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <stdexcept>
#include <utility>

#include "semicausal/errors.hpp"
#include "semicausal/estimators.hpp"
#include "semicausal/math.hpp"
#include "semicausal/rng.hpp"

namespace semicausal {

Submodel::Submodel(DiscreteDistribution base, const ZFunction& g) : base_(std::move(base)) {
  g_values_.resize(base_.size());
  for (std::size_t i = 0; i < base_.size(); ++i) {
    g_values_[i] = g(base_.atom(i));
  }
  validate();
}

Submodel::Submodel(DiscreteDistribution base, std::vector<double> g_values)
    : base_(std::move(base)), g_values_(std::move(g_values)) {
  if (g_values_.size() != base_.size()) {
    throw std::invalid_argument("Submodel: g has " + std::to_string(g_values_.size()) +
                                " values for " + std::to_string(base_.size()) + " atoms");
  }
  validate();
}

void Submodel::validate() {
  KahanSum mean;
  sup_g_ = 0.0;
  for (std::size_t i = 0; i < base_.size(); ++i) {
    if (!std::isfinite(g_values_[i])) {
      throw std::invalid_argument("Submodel: non-finite g value at atom " + std::to_string(i));
    }
    mean.add(base_.mass(i) * g_values_[i]);
    sup_g_ = std::max(sup_g_, std::abs(g_values_[i]));
  }
  if (std::abs(mean.value()) > 1e-12) {
    throw std::invalid_argument("Submodel: exact_mean(g) = " + std::to_string(mean.value()) +
                                ", not zero within 1e-12");
  }
}

double Submodel::max_epsilon() const {
  return sup_g_ == 0.0 ? std::numeric_limits<double>::infinity() : 1.0 / sup_g_;
}

DiscreteDistribution perturb(const Submodel& sub, double epsilon) {
  if (!(std::abs(epsilon) < sub.max_epsilon())) {
    throw std::domain_error("perturb: |epsilon| = " + std::to_string(std::abs(epsilon)) +
                            " is outside the admissible range (-1/M, 1/M) with 1/M = " +
                            std::to_string(sub.max_epsilon()));
  }
  const auto& base = sub.base();
  std::vector<Atom> atoms;
  std::vector<double> masses;
  atoms.reserve(base.size());
  masses.reserve(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    atoms.push_back(base.atom(i));
    masses.push_back(base.mass(i) * (1.0 + epsilon * sub.g_values()[i]));
  }
  return DiscreteDistribution(std::move(atoms), std::move(masses), base.delta());
}

namespace {

double central_difference(const Submodel& sub, const Functional& functional, double h) {
  double up, dn;
  try {
    up = functional(perturb(sub, h));
    dn = functional(perturb(sub, -h));
  } catch (const std::exception& e) {
    throw std::runtime_error("pathwise_derivative: functional failed at eps = +/-" +
                             std::to_string(h) + ": " + e.what());
  }
  return (up - dn) / (2.0 * h);
}

}  // namespace

double pathwise_derivative(const Submodel& sub, const Functional& functional, double step,
                           bool richardson) {
  if (!(step > 0.0)) {
    throw std::invalid_argument("pathwise_derivative: step must be positive");
  }
  if (!(step < sub.max_epsilon())) {
    throw std::domain_error("pathwise_derivative: step " + std::to_string(step) +
                            " is outside the admissible epsilon range");
  }
  const double coarse = central_difference(sub, functional, step);
  if (!richardson) {
    return coarse;
  }
  const double fine = central_difference(sub, functional, 0.5 * step);
  return (4.0 * fine - coarse) / 3.0;
}

double eif_covariance(const Submodel& sub, const ZFunction& phi) {
  const auto& base = sub.base();
  KahanSum sum;
  for (std::size_t i = 0; i < base.size(); ++i) {
    double v = phi(base.atom(i));
    if (!std::isfinite(v)) {
      throw std::runtime_error("eif_covariance: non-finite phi at atom " + std::to_string(i));
    }
    sum.add(base.mass(i) * v * sub.g_values()[i]);
  }
  return sum.value();
}

EifCheckReport check_eif(const DiscreteDistribution& base, const ZFunction& phi,
                         const std::vector<std::vector<double>>& perturbations, double tol,
                         double step) {
  EifCheckReport report;
  report.tol = tol;
  report.phi_mean = exact_mean(phi, base);
  report.phi_variance = exact_mean([&phi](const Atom& z) { return phi(z) * phi(z); }, base);

  Functional target = [](const DiscreteDistribution& dist) { return true_ate(dist); };
  report.gaps_ok = true;
  for (std::size_t k = 0; k < perturbations.size(); ++k) {
    std::unique_ptr<Submodel> sub;
    try {
      sub = std::make_unique<Submodel>(base, perturbations[k]);
    } catch (const std::exception& e) {
      throw std::invalid_argument("check_eif: perturbation " + std::to_string(k) +
                                  " rejected: " + e.what());
    }
    EifCheckEntry entry;
    entry.derivative = pathwise_derivative(*sub, target, step, true);
    entry.covariance = eif_covariance(*sub, phi);
    entry.gap = std::abs(entry.derivative - entry.covariance);
    if (entry.gap > tol) report.gaps_ok = false;
    report.checks.push_back(entry);
  }
  report.mean_ok = std::abs(report.phi_mean) <= tol;
  report.pass = report.gaps_ok && report.mean_ok;
  return report;
}

ZFunction efficient_influence(const DiscreteDistribution& base) {
  auto shared = std::make_shared<DiscreteDistribution>(base);
  const double psi0 = true_ate(base);
  return [shared, psi0](const Atom& z) {
    const auto& lev = shared->level_of(z.l);
    return dr_contrast(z.a, z.y, lev.propensity, lev.mean_y[1], lev.mean_y[0]) - psi0;
  };
}

ZFunction ipw_influence(const DiscreteDistribution& base) {
  auto shared = std::make_shared<DiscreteDistribution>(base);
  const double psi0 = true_ate(base);
  return [shared, psi0](const Atom& z) {
    const double p = shared->level_of(z.l).propensity;
    return (z.a == 1 ? z.y / p : -z.y / (1.0 - p)) - psi0;
  };
}

std::vector<double> random_score_direction(const DiscreteDistribution& base, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> g(base.size());
  for (double& v : g) v = 2.0 * rng.uniform01() - 1.0;

  KahanSum mean;
  for (std::size_t i = 0; i < base.size(); ++i) mean.add(base.mass(i) * g[i]);
  const double shift = mean.value();
  double sup = 0.0;
  for (double& v : g) {
    v -= shift;
    sup = std::max(sup, std::abs(v));
  }
  if (sup == 0.0) {
    // centered to the zero direction; use a two-atom contrast instead
    g[0] = 1.0;
    g[1] = -base.mass(0) / base.mass(1);
    sup = std::max(1.0, std::abs(g[1]));
  }
  for (double& v : g) v /= sup;
  return g;
}

std::vector<double> random_score_direction_fixed_propensity(const DiscreteDistribution& base,
                                                            std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = base.size();
  std::vector<double> u(n);
  for (double& v : u) v = 2.0 * rng.uniform01() - 1.0;

  // per-(l, a) cell means of u, weighted by atom mass
  std::map<std::pair<std::vector<double>, int>, std::pair<double, double>> cells;
  for (std::size_t i = 0; i < n; ++i) {
    const Atom& z = base.atom(i);
    auto key = std::make_pair(std::vector<double>(z.l.data(), z.l.data() + z.l.size()), z.a);
    cells[key].first += base.mass(i) * u[i];
    cells[key].second += base.mass(i);
  }

  // per-level component v(l), centered over the covariate margin
  std::map<std::vector<double>, double> v;
  double v_mean = 0.0;
  for (const auto& lev : base.levels()) {
    std::vector<double> key(lev.l.data(), lev.l.data() + lev.l.size());
    v[key] = 2.0 * rng.uniform01() - 1.0;
    v_mean += lev.prob * v[key];
  }

  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Atom& z = base.atom(i);
    std::vector<double> lkey(z.l.data(), z.l.data() + z.l.size());
    const auto& cell = cells[std::make_pair(lkey, z.a)];
    const double cell_mean = cell.second > 0.0 ? cell.first / cell.second : 0.0;
    g[i] = (u[i] - cell_mean) + (v[lkey] - v_mean);
  }

  // exact recentering (a global shift keeps E(g|L,A) = E(g|L)) and sup-norm 1
  KahanSum mean;
  for (std::size_t i = 0; i < n; ++i) mean.add(base.mass(i) * g[i]);
  double sup = 0.0;
  for (double& x : g) {
    x -= mean.value();
    sup = std::max(sup, std::abs(x));
  }
  if (sup > 0.0) {
    for (double& x : g) x /= sup;
  }
  return g;
}

namespace {

void require_valid_propensity(const DiscreteDistribution& base, const PropensityFunction& pi,
                              double delta) {
  for (const auto& lev : base.levels()) {
    double p = pi(lev.l);
    if (!(p >= delta && p <= 1.0 - delta)) {
      throw PositivityError("supplied propensity " + std::to_string(p) +
                            " leaves [" + std::to_string(delta) + ", " +
                            std::to_string(1.0 - delta) + "] on the support");
    }
  }
}

}  // namespace

double exact_bias(const DiscreteDistribution& base, const PropensityFunction& pi,
                  const OutcomeFunction& mu) {
  require_valid_propensity(base, pi, base.delta());
  KahanSum sum;
  for (std::size_t i = 0; i < base.size(); ++i) {
    const Atom& z = base.atom(i);
    double v = dr_contrast(z.a, z.y, pi(z.l), mu(z.l, 1), mu(z.l, 0));
    if (!std::isfinite(v)) {
      throw std::runtime_error("exact_bias: non-finite moment at atom " + std::to_string(i));
    }
    sum.add(base.mass(i) * v);
  }
  return sum.value() - true_ate(base);
}

ProductBound product_bound_check(const DiscreteDistribution& base, const PropensityFunction& pi,
                                 const OutcomeFunction& mu, double delta) {
  require_valid_propensity(base, pi, delta);
  ProductBound result;
  result.lhs = std::abs(exact_bias(base, pi, mu));

  // L2(P) norms over the covariate margin
  KahanSum pi_sq;
  KahanSum mu_sq[2];
  for (const auto& lev : base.levels()) {
    const double dpi = pi(lev.l) - lev.propensity;
    pi_sq.add(lev.prob * dpi * dpi);
    for (int a = 0; a < 2; ++a) {
      const double dmu = mu(lev.l, a) - lev.mean_y[a];
      mu_sq[a].add(lev.prob * dmu * dmu);
    }
  }
  const double pi_norm = std::sqrt(pi_sq.value());
  result.rhs =
      (pi_norm * std::sqrt(mu_sq[0].value()) + pi_norm * std::sqrt(mu_sq[1].value())) / delta;
  result.pass = result.lhs <= result.rhs + 1e-12;
  return result;
}

}  // namespace semicausal
