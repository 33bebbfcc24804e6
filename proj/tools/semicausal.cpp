// semicausal: ATE estimation, Monte-Carlo experiments and exact EIF checks
// on finite discrete distributions.
//
// Subcommands: estimate, simulate, eif-check, rates.
// Exit codes: 0 success, 1 usage error, 2 computation/I-O error.

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "semicausal/config.hpp"
#include "semicausal/json_writer.hpp"
#include "semicausal/report_json.hpp"
#include "semicausal/rng.hpp"

namespace sc = semicausal;

namespace {

constexpr std::uint64_t kDefaultSeed = 20240101;

std::uint64_t default_seed() {
  if (const char* env = std::getenv("SEMICAUSAL_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw CLI::ValidationError("SEMICAUSAL_SEED", "not an unsigned integer");
    }
  }
  return kDefaultSeed;
}

void write_output(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    return;
  }
  sc::atomic_write(path, content);
}

std::vector<Eigen::Index> parse_grid(const std::vector<long>& raw) {
  std::vector<Eigen::Index> grid;
  for (long v : raw) {
    if (v < 2) throw CLI::ValidationError("--n-grid", "entries must be >= 2");
    grid.push_back(static_cast<Eigen::Index>(v));
  }
  return grid;
}

int run_estimate(const std::string& data_path, const std::string& config_path,
                 const std::string& out_path, std::uint64_t seed,
                 std::optional<double> level_override,
                 std::optional<std::string> estimator_override) {
  sc::Dataset data = sc::Dataset::read_csv(data_path);
  sc::EstimateConfig config =
      sc::parse_estimate_config(sc::load_structured_file(config_path), config_path);
  if (level_override) config.level = *level_override;
  if (estimator_override) config.estimator = *estimator_override;

  sc::EstimateReport report;
  if (config.estimator == "plugin") {
    sc::OutcomeFit fit = sc::make_outcome_learner(config.outcome, seed)(data);
    const double psi = sc::plugin_ate(data, fit);
    Eigen::VectorXd contrast(data.size());
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      Eigen::VectorXd l = data.covariates().row(i).transpose();
      contrast[i] = fit.predict(l, 1) - fit.predict(l, 0);
    }
    report.estimator = "plugin";
    report.psi_hat = psi;
    report.influence = contrast.array() - psi;
    report.se = sc::if_standard_error(report.influence);
    report.ci = sc::wald_interval(psi, report.se, config.level);
    report.level = config.level;
    report.n = data.size();
    report.diagnostics.naive_se = true;
  } else if (config.estimator == "ipw") {
    sc::PropensityFit fit = sc::make_propensity_learner(config.propensity, seed)(data);
    const double psi = sc::ipw_ate(data, fit);
    Eigen::VectorXd term(data.size());
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      Eigen::VectorXd l = data.covariates().row(i).transpose();
      const double p = fit.predict(l);
      const double a = data.treatment()[i];
      term[i] = a * data.outcome()[i] / p - (1.0 - a) * data.outcome()[i] / (1.0 - p);
    }
    report.estimator = "ipw";
    report.psi_hat = psi;
    report.influence = term.array() - psi;
    report.se = sc::if_standard_error(report.influence);
    report.ci = sc::wald_interval(psi, report.se, config.level);
    report.level = config.level;
    report.n = data.size();
    report.diagnostics.naive_se = true;
  } else if (config.estimator == "ipw_estimated") {
    sc::LogisticConfig lconfig;
    lconfig.delta = config.propensity.delta;
    report = sc::ipw_estimated_parametric(data, sc::make_feature_map(config.propensity.features),
                                          config.level, lconfig);
  } else if (config.estimator == "aipw") {
    sc::NuisancePair nuisance{sc::make_propensity_learner(config.propensity, seed)(data),
                              sc::make_outcome_learner(config.outcome, seed)(data)};
    report = sc::aipw_ate(data, nuisance, config.level);
  } else {  // crossfit_aipw
    report = sc::crossfit_aipw(data, sc::make_propensity_learner(config.propensity, seed),
                               sc::make_outcome_learner(config.outcome, seed), config.folds, seed,
                               config.level);
  }
  write_output(out_path, sc::to_json(report));
  return 0;
}

int run_simulate(const std::string& spec_path, long n, long reps, std::uint64_t seed,
                 double level, const std::vector<std::string>& estimators, int threads, int folds,
                 const std::string& out_path, const std::string& per_rep_path) {
  sc::DGPSpec spec;
  if (!spec_path.empty()) {
    spec = sc::parse_dgp_spec(sc::load_structured_file(spec_path), spec_path);
  }
  std::vector<sc::PerRepRecord> per_rep;
  std::vector<sc::PerRepRecord>* per_rep_ptr = per_rep_path.empty() ? nullptr : &per_rep;
  sc::MonteCarloSummary summary =
      sc::run_monte_carlo(spec, estimators, static_cast<Eigen::Index>(n), reps, seed, level,
                          threads, folds, per_rep_ptr);
  write_output(out_path, sc::to_json(summary, spec));
  if (per_rep_ptr) {
    sc::atomic_write(per_rep_path, sc::per_rep_csv(per_rep));
  }
  return 0;
}

int run_eif_check(const std::string& dist_path, const std::string& glist_path, int num_g,
                  std::uint64_t seed, double tol, double step, const std::string& out_path) {
  sc::DiscreteDistribution base = sc::DiscreteDistribution::read_json(dist_path);

  std::vector<std::vector<double>> gs;
  if (!glist_path.empty()) {
    nlohmann::json doc = sc::load_structured_file(glist_path);
    const nlohmann::json& list = doc.is_object() && doc.contains("g") ? doc["g"] : doc;
    if (!list.is_array()) {
      throw std::invalid_argument(glist_path + ": expected an array of per-atom value lists");
    }
    for (const auto& entry : list) {
      gs.push_back(entry.get<std::vector<double>>());
    }
  } else {
    for (int k = 0; k < num_g; ++k) {
      gs.push_back(sc::random_score_direction(base, sc::derive_seed(seed, k)));
    }
  }

  sc::ZFunction phi = sc::efficient_influence(base);
  sc::EifCheckReport report = sc::check_eif(base, phi, gs, tol, step);
  sc::ZFunction phi_ipw = sc::ipw_influence(base);
  const double ipw_variance =
      sc::exact_mean([&phi_ipw](const sc::Atom& z) { return phi_ipw(z) * phi_ipw(z); }, base);
  write_output(out_path, sc::to_json(report, base.size(), sc::true_ate(base), ipw_variance, step,
                                     seed));
  return report.pass ? 0 : 2;
}

int run_rates(const std::string& spec_path, double r_pi, double r_mu, double scale,
              const std::vector<long>& n_grid_raw, const std::vector<long>& reps_raw,
              std::uint64_t seed, int threads, const std::string& out_path) {
  sc::DGPSpec spec;
  if (!spec_path.empty()) {
    spec = sc::parse_dgp_spec(sc::load_structured_file(spec_path), spec_path);
  }
  if (r_pi >= 0.0) spec.rate_pi = r_pi;
  if (r_mu >= 0.0) spec.rate_mu = r_mu;
  if (scale > 0.0) spec.rate_scale = scale;
  std::vector<Eigen::Index> n_grid = parse_grid(n_grid_raw);
  std::vector<long> reps = reps_raw;
  if (reps.size() == 1 && n_grid.size() > 1) {
    reps.assign(n_grid.size(), reps.front());
  }
  sc::RateTable table = sc::rate_experiment(spec, n_grid, reps, seed, threads);
  write_output(out_path, sc::to_json(table, seed));
  return 0;
}

}  // namespace

int parse_and_dispatch(int argc, char** argv) {
  CLI::App app{"semicausal: semiparametric average-treatment-effect toolkit"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  bool seed_given = false;

  // estimate
  auto* estimate = app.add_subcommand("estimate", "Estimate the ATE from a CSV dataset");
  std::string data_path, config_path, out_path;
  double level_flag = -1.0;
  std::string estimator_flag;
  estimate->add_option("--data", data_path, "Dataset CSV (header l1..ld,a,y)")
      ->required()
      ->check(CLI::ExistingFile);
  estimate->add_option("--config", config_path, "Learner config (JSON or TOML)")
      ->required()
      ->check(CLI::ExistingFile);
  estimate->add_option("--out", out_path, "Output report path (default: stdout)");
  estimate->add_option("--seed", seed, "RNG seed (also env SEMICAUSAL_SEED)")
      ->each([&](const std::string&) { seed_given = true; });
  estimate->add_option("--level", level_flag, "Confidence level override");
  estimate->add_option("--estimator", estimator_flag,
                       "Estimator override: plugin|ipw|ipw_estimated|aipw|crossfit_aipw");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Monte-Carlo bias/variance/coverage study");
  std::string sim_spec, sim_out, per_rep_path;
  long sim_n = 500, sim_reps = 1000;
  double sim_level = 0.95;
  int threads = 1, folds = 5;
  std::vector<std::string> estimators{"aipw"};
  simulate->add_option("--spec", sim_spec, "DGP spec file (JSON or TOML; default DGP if absent)")
      ->check(CLI::ExistingFile);
  simulate->add_option("--n", sim_n, "Sample size per replication")->check(CLI::PositiveNumber);
  simulate->add_option("--reps", sim_reps, "Number of replications")->check(CLI::PositiveNumber);
  simulate->add_option("--seed", seed, "Master seed (also env SEMICAUSAL_SEED)")
      ->each([&](const std::string&) { seed_given = true; });
  simulate->add_option("--level", sim_level, "Nominal confidence level");
  simulate
      ->add_option("--estimators", estimators,
                   "Comma-separated tags: plugin,ipw_known,ipw_estimated,aipw,crossfit_aipw")
      ->delimiter(',');
  simulate->add_option("--threads", threads, "Worker threads (results independent of this)")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--folds", folds, "Folds for crossfit_aipw")->check(CLI::PositiveNumber);
  simulate->add_option("--out", sim_out, "Summary JSON path (default: stdout)");
  simulate->add_option("--per-rep", per_rep_path,
                       "Optional CSV of per-replication results (rep,estimator,psi_hat,se,covered)");

  // eif-check
  auto* eif = app.add_subcommand("eif-check",
                                 "Verify the pathwise-derivative identity on a discrete base");
  std::string dist_path, glist_path, eif_out;
  int num_g = 10;
  double tol = 1e-6, step = 1e-4;
  eif->add_option("--dist", dist_path, "DiscreteDistribution JSON spec")
      ->required()
      ->check(CLI::ExistingFile);
  eif->add_option("--g-list", glist_path,
                  "Optional JSON array of per-atom mean-zero score directions")
      ->check(CLI::ExistingFile);
  eif->add_option("--num-g", num_g, "Random directions when --g-list is absent")
      ->check(CLI::PositiveNumber);
  eif->add_option("--seed", seed, "Seed for random directions (also env SEMICAUSAL_SEED)")
      ->each([&](const std::string&) { seed_given = true; });
  eif->add_option("--tol", tol, "Gap tolerance");
  eif->add_option("--step", step, "Central-difference step");
  eif->add_option("--out", eif_out, "Report JSON path (default: stdout)");

  // rates
  auto* rates = app.add_subcommand("rates", "Synthetic-nuisance sqrt(n)-bias rate experiment");
  std::string rates_spec, rates_out;
  double r_pi = -1.0, r_mu = -1.0, scale = -1.0;
  std::vector<long> n_grid{1000, 10000, 100000};
  std::vector<long> reps_grid{2000};
  int rate_threads = 1;
  rates->add_option("--spec", rates_spec, "DGP spec file (default DGP if absent)")
      ->check(CLI::ExistingFile);
  rates->add_option("--r-pi", r_pi, "Propensity rate dial r_pi");
  rates->add_option("--r-mu", r_mu, "Outcome rate dial r_mu");
  rates->add_option("--scale", scale, "Perturbation scale c");
  rates->add_option("--n-grid", n_grid, "Sample sizes")->delimiter(',');
  rates->add_option("--reps", reps_grid, "Replications per grid point (scalar or per-point list)")
      ->delimiter(',');
  rates->add_option("--seed", seed, "Master seed (also env SEMICAUSAL_SEED)")
      ->each([&](const std::string&) { seed_given = true; });
  rates->add_option("--threads", rate_threads, "Worker threads (results independent of this)")
      ->check(CLI::PositiveNumber);
  rates->add_option("--out", rates_out, "Table JSON path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exit 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (!seed_given) seed = default_seed();
    if (estimate->parsed()) {
      return run_estimate(data_path, config_path, out_path, seed,
                          level_flag > 0.0 ? std::optional<double>(level_flag) : std::nullopt,
                          estimator_flag.empty() ? std::nullopt
                                                 : std::optional<std::string>(estimator_flag));
    }
    if (simulate->parsed()) {
      return run_simulate(sim_spec, sim_n, sim_reps, seed, sim_level, estimators, threads, folds,
                          sim_out, per_rep_path);
    }
    if (eif->parsed()) {
      return run_eif_check(dist_path, glist_path, num_g, seed, tol, step, eif_out);
    }
    if (rates->parsed()) {
      return run_rates(rates_spec, r_pi, r_mu, scale, n_grid, reps_grid, seed, rate_threads,
                       rates_out);
    }
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

int main(int argc, char** argv) { return parse_and_dispatch(argc, argv); }
