#include "semicausal/simulation.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <thread>

#include "semicausal/math.hpp"
#include "semicausal/rng.hpp"

namespace semicausal {

namespace {

inline double logistic(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

void run_parallel(long count, int threads, const std::function<void(long)>& body) {
  if (threads <= 1 || count < 2) {
    for (long i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<long> next{0};
  auto worker = [&]() {
    for (;;) {
      long i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= count) return;
      body(i);
    }
  };
  std::vector<std::thread> pool;
  const int spawn = std::min<long>(threads, count);
  pool.reserve(static_cast<std::size_t>(spawn));
  for (int t = 0; t < spawn; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

double population_variance(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  KahanSum sum;
  for (double v : values) sum.add(v);
  const double mean = sum.value() / static_cast<double>(values.size());
  KahanSum sq;
  for (double v : values) sq.add((v - mean) * (v - mean));
  return sq.value() / static_cast<double>(values.size());
}

}  // namespace

void DGPSpec::validate() const {
  if (covariate_values.empty() || covariate_values.size() != covariate_probs.size()) {
    throw std::invalid_argument("DGPSpec: covariate values and probs must be nonempty and match");
  }
  double total = 0.0;
  for (double p : covariate_probs) {
    if (!(p >= 0.0)) throw std::invalid_argument("DGPSpec: covariate prob is negative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("DGPSpec: covariate probs sum to " + std::to_string(total));
  }
  if (!(delta > 0.0 && delta < 0.5)) {
    throw std::invalid_argument("DGPSpec: delta must lie in (0, 0.5)");
  }
  if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) {
    throw std::invalid_argument("DGPSpec: noise sd must be finite and nonnegative");
  }
  if (rate_pi < 0.0 || rate_mu < 0.0) {
    throw std::invalid_argument("DGPSpec: rate dials must be nonnegative");
  }
  for (double l : covariate_values) {
    double p = true_propensity(l);
    if (!(p >= delta && p <= 1.0 - delta)) {
      throw PositivityError("DGPSpec: pi0(" + std::to_string(l) + ") = " + std::to_string(p) +
                            " leaves [delta, 1-delta]");
    }
  }
}

double DGPSpec::true_propensity(double l) const {
  double eta = propensity_intercept + propensity_slope * l;
  if (propensity_misspec == MisspecKind::kDistort) {
    eta += kPropensityDistortion * l * l;
  }
  return logistic(eta);
}

double DGPSpec::true_outcome_mean(double l, int a) const {
  double mu = outcome_intercept + outcome_covariate * l +
              a * (outcome_treatment + outcome_interaction * l);
  if (outcome_misspec == MisspecKind::kDistort) {
    mu += kOutcomeDistortion * l * l;
  }
  return mu;
}

double DGPSpec::true_ate() const {
  KahanSum sum;
  for (std::size_t i = 0; i < covariate_values.size(); ++i) {
    const double l = covariate_values[i];
    sum.add(covariate_probs[i] * (true_outcome_mean(l, 1) - true_outcome_mean(l, 0)));
  }
  return sum.value();
}

double DGPSpec::covariate_mean() const {
  KahanSum sum;
  for (std::size_t i = 0; i < covariate_values.size(); ++i) {
    sum.add(covariate_probs[i] * covariate_values[i]);
  }
  return sum.value();
}

double DGPSpec::covariate_range() const {
  auto [lo, hi] = std::minmax_element(covariate_values.begin(), covariate_values.end());
  double range = *hi - *lo;
  return range > 0.0 ? range : 1.0;
}

DiscreteDistribution DGPSpec::induced_distribution() const {
  validate();
  std::vector<Atom> atoms;
  std::vector<double> masses;
  const bool two_point = noise != NoiseKind::kNone && noise_sd > 0.0;
  for (std::size_t i = 0; i < covariate_values.size(); ++i) {
    if (covariate_probs[i] <= 0.0) continue;
    const double l = covariate_values[i];
    const double p1 = true_propensity(l);
    for (int a = 0; a < 2; ++a) {
      const double arm_mass = covariate_probs[i] * (a == 1 ? p1 : 1.0 - p1);
      const double mu = true_outcome_mean(l, a);
      Eigen::VectorXd lv(1);
      lv[0] = l;
      if (two_point) {
        atoms.push_back(Atom{lv, a, mu - noise_sd});
        masses.push_back(0.5 * arm_mass);
        atoms.push_back(Atom{lv, a, mu + noise_sd});
        masses.push_back(0.5 * arm_mass);
      } else {
        atoms.push_back(Atom{lv, a, mu});
        masses.push_back(arm_mass);
      }
    }
  }
  return DiscreteDistribution(std::move(atoms), std::move(masses), delta);
}

Dataset DGPSpec::sample(Eigen::Index n, std::uint64_t seed) const {
  if (n < 1) {
    throw std::invalid_argument("DGPSpec::sample: n must be >= 1");
  }
  std::vector<double> cum(covariate_probs.size());
  double running = 0.0;
  for (std::size_t i = 0; i < covariate_probs.size(); ++i) {
    running += covariate_probs[i];
    cum[i] = running;
  }
  cum.back() = 1.0;

  Rng rng(seed);
  Eigen::MatrixXd covariates(n, 1);
  Eigen::VectorXd treatment(n);
  Eigen::VectorXd outcome(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double ul = rng.uniform01();
    auto it = std::upper_bound(cum.begin(), cum.end(), ul);
    std::size_t k = static_cast<std::size_t>(it - cum.begin());
    if (k >= covariate_values.size()) k = covariate_values.size() - 1;
    const double l = covariate_values[k];
    const int a = rng.uniform01() < true_propensity(l) ? 1 : 0;
    double y = true_outcome_mean(l, a);
    if (noise == NoiseKind::kGaussian) {
      y += noise_sd * rng.normal();
    } else if (noise == NoiseKind::kTwoPoint) {
      y += rng.uniform01() < 0.5 ? -noise_sd : noise_sd;
    }
    covariates(i, 0) = l;
    treatment[i] = a;
    outcome[i] = y;
  }
  return Dataset(std::move(covariates), std::move(treatment), std::move(outcome));
}

namespace {

FeatureMap features_for(MisspecKind kind) {
  return kind == MisspecKind::kOmit ? intercept_only_features() : linear_features();
}

struct RepResult {
  double psi = 0.0;
  double se = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool ok = false;
};

using RepEstimator = std::function<RepResult(const Dataset&, std::uint64_t)>;

RepEstimator resolve_estimator(const std::string& tag, const DGPSpec& spec, double level,
                               int crossfit_folds) {
  const FeatureMap pfeat = features_for(spec.propensity_misspec);
  const FeatureMap ofeat = features_for(spec.outcome_misspec);
  LogisticConfig lconfig;
  lconfig.delta = spec.delta;
  const double psi0 = spec.true_ate();
  const DGPSpec spec_copy = spec;

  if (tag == "plugin") {
    return [ofeat, level](const Dataset& data, std::uint64_t) {
      OutcomeFit fit = fit_outcome_linear(data, ofeat);
      Eigen::VectorXd contrast(data.size());
      for (Eigen::Index i = 0; i < data.size(); ++i) {
        Eigen::VectorXd l = data.covariates().row(i).transpose();
        contrast[i] = fit.predict(l, 1) - fit.predict(l, 0);
      }
      const double psi = contrast.mean();
      Eigen::VectorXd influence = contrast.array() - psi;
      const double se = if_standard_error(influence);
      ConfidenceInterval ci = wald_interval(psi, se, level);
      return RepResult{psi, se, ci.lower, ci.upper, true};
    };
  }
  if (tag == "ipw_known") {
    return [spec_copy, level](const Dataset& data, std::uint64_t) {
      PropensityFit fit(
          [spec_copy](const Eigen::VectorXd& l) { return spec_copy.true_propensity(l[0]); },
          "true", spec_copy.delta);
      Eigen::VectorXd term(data.size());
      for (Eigen::Index i = 0; i < data.size(); ++i) {
        const double p = fit.predict(data.covariates().row(i).transpose());
        const double a = data.treatment()[i];
        const double y = data.outcome()[i];
        term[i] = a * y / p - (1.0 - a) * y / (1.0 - p);
      }
      const double psi = term.mean();
      Eigen::VectorXd influence = term.array() - psi;
      const double se = if_standard_error(influence);
      ConfidenceInterval ci = wald_interval(psi, se, level);
      return RepResult{psi, se, ci.lower, ci.upper, true};
    };
  }
  if (tag == "ipw_estimated") {
    return [pfeat, level, lconfig](const Dataset& data, std::uint64_t) {
      EstimateReport report = ipw_estimated_parametric(data, pfeat, level, lconfig);
      return RepResult{report.psi_hat, report.se, report.ci.lower, report.ci.upper, true};
    };
  }
  if (tag == "aipw") {
    return [pfeat, ofeat, level, lconfig](const Dataset& data, std::uint64_t) {
      NuisancePair nuisance{fit_logistic(data, pfeat, lconfig), fit_outcome_linear(data, ofeat)};
      EstimateReport report = aipw_ate(data, nuisance, level);
      return RepResult{report.psi_hat, report.se, report.ci.lower, report.ci.upper, true};
    };
  }
  if (tag == "crossfit_aipw") {
    PropensityLearner plearner = [pfeat, lconfig](const Dataset& d) {
      return fit_logistic(d, pfeat, lconfig);
    };
    OutcomeLearner olearner = [ofeat](const Dataset& d) { return fit_outcome_linear(d, ofeat); };
    return [plearner, olearner, level, crossfit_folds](const Dataset& data, std::uint64_t rep_seed) {
      EstimateReport report = crossfit_aipw(data, plearner, olearner, crossfit_folds,
                                            derive_seed(rep_seed, 17), level);
      return RepResult{report.psi_hat, report.se, report.ci.lower, report.ci.upper, true};
    };
  }
  if (tag == "constant_truth") {
    return [psi0](const Dataset&, std::uint64_t) {
      return RepResult{psi0, 0.0, psi0, psi0, true};
    };
  }
  throw std::invalid_argument("run_monte_carlo: unknown estimator tag '" + tag + "'");
}

}  // namespace

MonteCarloSummary run_monte_carlo(const DGPSpec& spec, const std::vector<std::string>& estimators,
                                  Eigen::Index n, long reps, std::uint64_t seed, double level,
                                  int threads, int crossfit_folds,
                                  std::vector<PerRepRecord>* per_rep) {
  spec.validate();
  if (reps < 1) {
    throw std::invalid_argument("run_monte_carlo: reps must be >= 1");
  }
  if (estimators.empty()) {
    throw std::invalid_argument("run_monte_carlo: no estimators requested");
  }
  if (!(level > 0.0 && level < 1.0)) {
    throw std::domain_error("run_monte_carlo: level must lie in (0,1)");
  }

  std::vector<RepEstimator> fns;
  fns.reserve(estimators.size());
  for (const auto& tag : estimators) {
    fns.push_back(resolve_estimator(tag, spec, level, crossfit_folds));
  }
  const double psi0 = spec.true_ate();
  const std::size_t n_est = estimators.size();

  std::vector<RepResult> grid(static_cast<std::size_t>(reps) * n_est);
  run_parallel(reps, threads, [&](long r) {
    const std::uint64_t rep_seed = derive_seed(seed, static_cast<std::uint64_t>(r));
    Dataset data = spec.sample(n, rep_seed);
    for (std::size_t j = 0; j < n_est; ++j) {
      RepResult& slot = grid[static_cast<std::size_t>(r) * n_est + j];
      try {
        slot = fns[j](data, rep_seed);
      } catch (const std::exception&) {
        slot.ok = false;
      }
    }
  });

  MonteCarloSummary summary;
  summary.seed = seed;
  summary.n = n;
  summary.replications = reps;
  summary.level = level;
  summary.psi0 = psi0;

  for (std::size_t j = 0; j < n_est; ++j) {
    EstimatorStats stats;
    std::vector<double> psis;
    psis.reserve(static_cast<std::size_t>(reps));
    KahanSum bias_sum, se_sum, width_sum;
    long covered = 0;
    for (long r = 0; r < reps; ++r) {
      const RepResult& cell = grid[static_cast<std::size_t>(r) * n_est + j];
      if (!cell.ok) {
        ++stats.failures;
        continue;
      }
      ++stats.replications;
      psis.push_back(cell.psi);
      bias_sum.add(cell.psi - psi0);
      se_sum.add(cell.se);
      width_sum.add(cell.upper - cell.lower);
      if (cell.lower <= psi0 && psi0 <= cell.upper) ++covered;
      if (per_rep) {
        per_rep->push_back(PerRepRecord{r, estimators[j], cell.psi, cell.se,
                                        cell.lower <= psi0 && psi0 <= cell.upper});
      }
    }
    if (stats.replications > 0) {
      const double m = static_cast<double>(stats.replications);
      stats.mean_bias = bias_sum.value() / m;
      stats.empirical_sd = std::sqrt(population_variance(psis));
      stats.mean_se = se_sum.value() / m;
      stats.coverage = static_cast<double>(covered) / m;
      stats.mean_ci_width = width_sum.value() / m;
    }
    summary.failure_count += stats.failures;
    if (stats.failures * 100 > reps) {
      throw std::runtime_error("run_monte_carlo: estimator '" + estimators[j] + "' failed on " +
                               std::to_string(stats.failures) + " of " + std::to_string(reps) +
                               " replications (over 1%)");
    }
    summary.estimators.emplace_back(estimators[j], stats);
  }
  // per-rep records were appended estimator-major; reorder to rep-major
  if (per_rep) {
    std::stable_sort(per_rep->begin(), per_rep->end(),
                     [](const PerRepRecord& a, const PerRepRecord& b) { return a.rep < b.rep; });
  }
  return summary;
}

EfficiencyComparison efficiency_experiment(const DGPSpec& spec, Eigen::Index n, long reps,
                                           std::uint64_t seed, int threads) {
  spec.validate();
  if (spec.propensity_misspec == MisspecKind::kDistort) {
    throw std::invalid_argument(
        "efficiency_experiment: pi0 must be logistic in the available features");
  }
  if (reps < 1) {
    throw std::invalid_argument("efficiency_experiment: reps must be >= 1");
  }
  const FeatureMap pfeat = features_for(spec.propensity_misspec);
  LogisticConfig lconfig;
  lconfig.delta = spec.delta;

  std::vector<double> known(static_cast<std::size_t>(reps));
  std::vector<double> estimated(static_cast<std::size_t>(reps));
  std::vector<char> ok(static_cast<std::size_t>(reps), 0);
  run_parallel(reps, threads, [&](long r) {
    const std::uint64_t rep_seed = derive_seed(seed, static_cast<std::uint64_t>(r));
    Dataset data = spec.sample(n, rep_seed);
    try {
      PropensityFit true_fit(
          [&spec](const Eigen::VectorXd& l) { return spec.true_propensity(l[0]); }, "true",
          spec.delta);
      known[static_cast<std::size_t>(r)] = ipw_ate(data, true_fit);
      PropensityFit fitted = fit_logistic(data, pfeat, lconfig);
      KahanSum sum;
      for (Eigen::Index i = 0; i < data.size(); ++i) {
        const double p = fitted.raw(data.covariates().row(i).transpose());
        const double a = data.treatment()[i];
        const double y = data.outcome()[i];
        sum.add(a * y / p - (1.0 - a) * y / (1.0 - p));
      }
      estimated[static_cast<std::size_t>(r)] = sum.value() / static_cast<double>(data.size());
      ok[static_cast<std::size_t>(r)] = 1;
    } catch (const std::exception&) {
      ok[static_cast<std::size_t>(r)] = 0;
    }
  });

  std::vector<double> k_ok, e_ok;
  long failures = 0;
  for (long r = 0; r < reps; ++r) {
    if (ok[static_cast<std::size_t>(r)]) {
      k_ok.push_back(known[static_cast<std::size_t>(r)]);
      e_ok.push_back(estimated[static_cast<std::size_t>(r)]);
    } else {
      ++failures;
    }
  }
  if (failures * 100 > reps) {
    throw std::runtime_error("efficiency_experiment: over 1% of replications failed");
  }

  EfficiencyComparison cmp;
  cmp.replications = static_cast<long>(k_ok.size());
  cmp.variance_known = population_variance(k_ok);
  cmp.variance_estimated = population_variance(e_ok);
  cmp.ratio = cmp.variance_estimated / cmp.variance_known;
  cmp.reliable = cmp.replications >= 2;
  return cmp;
}

std::pair<PropensityFunction, OutcomeFunction> limiting_nuisances(const DGPSpec& spec) {
  spec.validate();
  const auto& ls = spec.covariate_values;
  const auto& ps = spec.covariate_probs;
  const std::size_t k = ls.size();

  PropensityFunction pi_limit;
  if (spec.propensity_misspec == MisspecKind::kNone) {
    pi_limit = [spec](const Eigen::VectorXd& l) { return spec.true_propensity(l[0]); };
  } else if (spec.propensity_misspec == MisspecKind::kOmit) {
    double marginal = 0.0;
    for (std::size_t i = 0; i < k; ++i) marginal += ps[i] * spec.true_propensity(ls[i]);
    pi_limit = [marginal](const Eigen::VectorXd&) { return marginal; };
  } else {
    // population logistic score equations, solved by Newton on (b0, b1)
    Eigen::Vector2d beta = Eigen::Vector2d::Zero();
    for (int iter = 0; iter < 200; ++iter) {
      Eigen::Vector2d score = Eigen::Vector2d::Zero();
      Eigen::Matrix2d info = Eigen::Matrix2d::Zero();
      for (std::size_t i = 0; i < k; ++i) {
        Eigen::Vector2d x(1.0, ls[i]);
        const double fitted = logistic(beta.dot(x));
        score += ps[i] * (spec.true_propensity(ls[i]) - fitted) * x;
        info += ps[i] * fitted * (1.0 - fitted) * x * x.transpose();
      }
      Eigen::Vector2d step = info.ldlt().solve(score);
      beta += step;
      if (step.cwiseAbs().maxCoeff() < 1e-14) break;
    }
    pi_limit = [beta](const Eigen::VectorXd& l) {
      return logistic(beta[0] + beta[1] * l[0]);
    };
  }

  OutcomeFunction mu_limit;
  if (spec.outcome_misspec == MisspecKind::kNone) {
    mu_limit = [spec](const Eigen::VectorXd& l, int a) { return spec.true_outcome_mean(l[0], a); };
  } else if (spec.outcome_misspec == MisspecKind::kOmit) {
    double num[2] = {0.0, 0.0};
    double den[2] = {0.0, 0.0};
    for (std::size_t i = 0; i < k; ++i) {
      const double p1 = spec.true_propensity(ls[i]);
      for (int a = 0; a < 2; ++a) {
        const double w = ps[i] * (a == 1 ? p1 : 1.0 - p1);
        num[a] += w * spec.true_outcome_mean(ls[i], a);
        den[a] += w;
      }
    }
    const double m0 = num[0] / den[0];
    const double m1 = num[1] / den[1];
    mu_limit = [m0, m1](const Eigen::VectorXd&, int a) { return a == 1 ? m1 : m0; };
  } else {
    // weighted least squares of mu0(., a) on (1, l) with arm-occupancy weights
    Eigen::Vector2d beta_arm[2];
    for (int a = 0; a < 2; ++a) {
      Eigen::Matrix2d gram = Eigen::Matrix2d::Zero();
      Eigen::Vector2d rhs = Eigen::Vector2d::Zero();
      for (std::size_t i = 0; i < k; ++i) {
        const double p1 = spec.true_propensity(ls[i]);
        const double w = ps[i] * (a == 1 ? p1 : 1.0 - p1);
        Eigen::Vector2d x(1.0, ls[i]);
        gram += w * x * x.transpose();
        rhs += w * spec.true_outcome_mean(ls[i], a) * x;
      }
      beta_arm[a] = gram.ldlt().solve(rhs);
    }
    Eigen::Vector2d b0 = beta_arm[0];
    Eigen::Vector2d b1 = beta_arm[1];
    mu_limit = [b0, b1](const Eigen::VectorXd& l, int a) {
      const Eigen::Vector2d& b = a == 1 ? b1 : b0;
      return b[0] + b[1] * l[0];
    };
  }
  return {std::move(pi_limit), std::move(mu_limit)};
}

DrTable dr_experiment(const DGPSpec& spec, const std::vector<Eigen::Index>& n_grid, long reps,
                      std::uint64_t seed, int threads) {
  spec.validate();
  if (spec.propensity_misspec == MisspecKind::kNone &&
      spec.outcome_misspec == MisspecKind::kNone) {
    throw std::invalid_argument("dr_experiment: at least one misspecification flag must be set");
  }
  if (n_grid.empty() || reps < 2) {
    throw std::invalid_argument("dr_experiment: need a sample-size grid and reps >= 2");
  }

  DrTable table;
  table.psi0 = spec.true_ate();
  auto [pi_limit, mu_limit] = limiting_nuisances(spec);
  table.limit_bias = exact_bias(spec.induced_distribution(), pi_limit, mu_limit);

  const FeatureMap pfeat = features_for(spec.propensity_misspec);
  const FeatureMap ofeat = features_for(spec.outcome_misspec);
  LogisticConfig lconfig;
  lconfig.delta = spec.delta;

  for (std::size_t cell_idx = 0; cell_idx < n_grid.size(); ++cell_idx) {
    const Eigen::Index n = n_grid[cell_idx];
    std::vector<double> psis(static_cast<std::size_t>(reps));
    std::vector<char> ok(static_cast<std::size_t>(reps), 0);
    run_parallel(reps, threads, [&](long r) {
      const std::uint64_t rep_seed =
          derive_seed(seed, static_cast<std::uint64_t>(cell_idx) * 1000003ULL +
                                static_cast<std::uint64_t>(r));
      try {
        Dataset data = spec.sample(n, rep_seed);
        NuisancePair nuisance{fit_logistic(data, pfeat, lconfig),
                              fit_outcome_linear(data, ofeat)};
        psis[static_cast<std::size_t>(r)] = aipw_ate(data, nuisance, 0.95).psi_hat;
        ok[static_cast<std::size_t>(r)] = 1;
      } catch (const std::exception&) {
        ok[static_cast<std::size_t>(r)] = 0;
      }
    });
    std::vector<double> kept;
    kept.reserve(static_cast<std::size_t>(reps));
    for (long r = 0; r < reps; ++r) {
      if (ok[static_cast<std::size_t>(r)]) kept.push_back(psis[static_cast<std::size_t>(r)]);
    }
    if (static_cast<long>(reps - static_cast<long>(kept.size())) * 100 > reps) {
      throw std::runtime_error("dr_experiment: over 1% of replications failed at n = " +
                               std::to_string(n));
    }
    DrCell cell;
    cell.n = n;
    cell.replications = static_cast<long>(kept.size());
    KahanSum sum;
    for (double v : kept) sum.add(v - table.psi0);
    cell.mean_bias = sum.value() / static_cast<double>(kept.size());
    cell.mc_se = std::sqrt(population_variance(kept) / static_cast<double>(kept.size()));
    table.cells.push_back(cell);
  }
  return table;
}

std::pair<std::function<double(double)>, std::function<double(double, int)>> rate_directions(
    const DGPSpec& spec) {
  const double mean = spec.covariate_mean();
  const double range = spec.covariate_range();
  auto u_pi = [mean, range](double l) { return 0.5 * (l - mean) / range; };
  auto u_mu = [mean, range](double l, int a) {
    return (a == 1 ? -1.0 : 1.0) * (l - mean) / range;
  };
  return {u_pi, u_mu};
}

RateTable rate_experiment(const DGPSpec& spec, const std::vector<Eigen::Index>& n_grid,
                          const std::vector<long>& reps_per_n, std::uint64_t seed, int threads) {
  spec.validate();
  if (n_grid.empty() || reps_per_n.size() != n_grid.size()) {
    throw std::invalid_argument("rate_experiment: n grid and reps grid must match");
  }
  auto [u_pi, u_mu] = rate_directions(spec);
  const double psi0 = spec.true_ate();
  const double c = spec.rate_scale;

  RateTable table;
  table.rate_pi = spec.rate_pi;
  table.rate_mu = spec.rate_mu;
  table.scale = c;

  // covariate sampling table
  std::vector<double> cum(spec.covariate_probs.size());
  double running = 0.0;
  for (std::size_t i = 0; i < spec.covariate_probs.size(); ++i) {
    running += spec.covariate_probs[i];
    cum[i] = running;
  }
  cum.back() = 1.0;

  const DiscreteDistribution induced = spec.induced_distribution();

  for (std::size_t cell_idx = 0; cell_idx < n_grid.size(); ++cell_idx) {
    const Eigen::Index n = n_grid[cell_idx];
    const long reps = reps_per_n[cell_idx];
    if (n < 2 || reps < 2) {
      throw std::invalid_argument("rate_experiment: each cell needs n >= 2 and reps >= 2");
    }
    const double shift_pi = c * std::pow(static_cast<double>(n), -spec.rate_pi);
    const double shift_mu = c * std::pow(static_cast<double>(n), -spec.rate_mu);

    // per-level synthetic nuisances, with re-truncation diagnostics
    const std::size_t klev = spec.covariate_values.size();
    std::vector<double> pi_n(klev), mu_n0(klev), mu_n1(klev), pi_0(klev), mu_00(klev),
        mu_01(klev);
    long level_clips = 0;
    for (std::size_t i = 0; i < klev; ++i) {
      const double l = spec.covariate_values[i];
      pi_0[i] = spec.true_propensity(l);
      mu_00[i] = spec.true_outcome_mean(l, 0);
      mu_01[i] = spec.true_outcome_mean(l, 1);
      const double raw = pi_0[i] + shift_pi * u_pi(l);
      pi_n[i] = truncate_propensity(raw, spec.delta);
      if (pi_n[i] != raw) ++level_clips;
      mu_n0[i] = mu_00[i] + shift_mu * u_mu(l, 0);
      mu_n1[i] = mu_01[i] + shift_mu * u_mu(l, 1);
    }

    // oracle bias of the synthetic pair on the induced law
    std::vector<double> values = spec.covariate_values;
    auto level_index = [&values](double l) {
      for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i] == l) return i;
      }
      throw std::invalid_argument("rate_experiment: covariate level not in the law");
    };
    PropensityFunction pi_fn = [&](const Eigen::VectorXd& l) { return pi_n[level_index(l[0])]; };
    OutcomeFunction mu_fn = [&](const Eigen::VectorXd& l, int a) {
      const std::size_t i = level_index(l[0]);
      return a == 1 ? mu_n1[i] : mu_n0[i];
    };
    const double cell_exact_bias = exact_bias(induced, pi_fn, mu_fn);

    // Monte Carlo: antithetic noise pairs, true-nuisance AIPW as control variate
    std::vector<double> diff(static_cast<std::size_t>(reps));
    std::vector<double> raw_psi(static_cast<std::size_t>(reps));
    run_parallel(reps, threads, [&](long r) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(cell_idx) * 1000003ULL +
                                    static_cast<std::uint64_t>(r)));
      KahanSum m_synth, m_true;
      double l = 0.0;
      int a = 0;
      std::size_t li = 0;
      double eps = 0.0;
      for (Eigen::Index row = 0; row < n; ++row) {
        if (row % 2 == 0) {
          const double ul = rng.uniform01();
          auto it = std::upper_bound(cum.begin(), cum.end(), ul);
          li = static_cast<std::size_t>(it - cum.begin());
          if (li >= klev) li = klev - 1;
          l = spec.covariate_values[li];
          a = rng.uniform01() < pi_0[li] ? 1 : 0;
          if (spec.noise == NoiseKind::kGaussian) {
            eps = spec.noise_sd * rng.normal();
          } else if (spec.noise == NoiseKind::kTwoPoint) {
            eps = rng.uniform01() < 0.5 ? -spec.noise_sd : spec.noise_sd;
          } else {
            eps = 0.0;
          }
        } else {
          eps = -eps;  // antithetic mate shares (l, a)
        }
        const double mu_true = a == 1 ? mu_01[li] : mu_00[li];
        const double y = mu_true + eps;
        m_synth.add(dr_contrast(a, y, pi_n[li], mu_n1[li], mu_n0[li]));
        m_true.add(dr_contrast(a, y, pi_0[li], mu_01[li], mu_00[li]));
      }
      const double nn = static_cast<double>(n);
      raw_psi[static_cast<std::size_t>(r)] = m_synth.value() / nn;
      diff[static_cast<std::size_t>(r)] = (m_synth.value() - m_true.value()) / nn;
    });

    RateCell cell;
    cell.n = n;
    cell.replications = reps;
    KahanSum diff_sum, raw_sum;
    for (long r = 0; r < reps; ++r) {
      diff_sum.add(diff[static_cast<std::size_t>(r)]);
      raw_sum.add(raw_psi[static_cast<std::size_t>(r)]);
    }
    const double mean_diff = diff_sum.value() / static_cast<double>(reps);
    const double sqrt_n = std::sqrt(static_cast<double>(n));
    cell.sqrt_n_bias = sqrt_n * mean_diff;
    cell.mc_se =
        sqrt_n * std::sqrt(population_variance(diff) / static_cast<double>(reps));
    cell.exact_bias = cell_exact_bias;
    cell.raw_mean_bias = raw_sum.value() / static_cast<double>(reps) - psi0;
    cell.retruncations = level_clips;
    table.cells.push_back(cell);
  }
  return table;
}

}  // namespace semicausal
