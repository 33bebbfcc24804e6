// Acceptance suite: runs every gate criterion at its stated tolerance and
// prints one PASS/FAIL line per criterion. Exit status is the number of
// failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "semicausal/estimators.hpp"
#include "semicausal/oracle.hpp"
#include "semicausal/simulation.hpp"

using namespace semicausal;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  int id;
  std::string title;
  double budget_seconds;
  std::function<bool(std::string&)> run;
};

DiscreteDistribution fixed_base() {
  DGPSpec spec;
  spec.noise = NoiseKind::kTwoPoint;
  return spec.induced_distribution();
}

// ---- criterion 1: pathwise-derivative identity for the EIF ----
bool run_eif_identity(std::string& detail) {
  double worst = 0.0;
  for (std::uint64_t b = 0; b < 5; ++b) {
    DiscreteDistribution base = testutil::random_base(1000 + b);
    ZFunction phi = efficient_influence(base);
    Functional target = [](const DiscreteDistribution& d) { return true_ate(d); };
    for (std::uint64_t k = 0; k < 10; ++k) {
      Submodel sub(base, random_score_direction(base, 2000 + 10 * b + k));
      const double deriv = pathwise_derivative(sub, target);
      const double cov = eif_covariance(sub, phi);
      worst = std::max(worst, std::abs(deriv - cov));
    }
  }
  std::ostringstream msg;
  msg << "max gap " << worst << " over 5 bases x 10 directions (tol 1e-6)";
  detail = msg.str();
  return worst <= 1e-6;
}

// ---- criterion 2: exact double robustness ----
bool run_double_robustness(std::string& detail) {
  DiscreteDistribution base = fixed_base();
  Rng rng(42);
  auto pi0 = [&base](const Eigen::VectorXd& l) { return base.true_propensity(l); };
  auto mu0 = [&base](const Eigen::VectorXd& l, int a) { return base.true_outcome_mean(l, a); };
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const double c1 = 4.0 * rng.uniform01() - 2.0;
    const double c2 = 4.0 * rng.uniform01() - 2.0;
    const double c3 = 4.0 * rng.uniform01() - 2.0;
    OutcomeFunction mu = [&, c1, c2, c3](const Eigen::VectorXd& l, int a) {
      return mu0(l, a) + c1 + c2 * l[0] + c3 * a * (1.0 - l[0]);
    };
    worst = std::max(worst, std::abs(exact_bias(base, pi0, mu)));
  }
  for (int trial = 0; trial < 50; ++trial) {
    const double s1 = 0.7 * rng.uniform01() - 0.35;
    const double s2 = 0.7 * rng.uniform01() - 0.35;
    PropensityFunction pi = [&, s1, s2](const Eigen::VectorXd& l) {
      return truncate_propensity(pi0(l) + s1 + s2 * l[0], base.delta());
    };
    worst = std::max(worst, std::abs(exact_bias(base, pi, mu0)));
  }
  std::ostringstream msg;
  msg << "max |bias| " << worst << " over 50+50 single-wrong pairs (tol 1e-12)";
  detail = msg.str();
  return worst <= 1e-12;
}

// ---- criterion 3: Cauchy-Schwarz product bound ----
bool run_product_bound(std::string& detail) {
  DiscreteDistribution base = fixed_base();
  Rng rng(43);
  int passed = 0;
  double worst_margin = std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < 100; ++trial) {
    const double s1 = 0.6 * rng.uniform01() - 0.3;
    const double s2 = 0.6 * rng.uniform01() - 0.3;
    const double t1 = 4.0 * rng.uniform01() - 2.0;
    const double t2 = 4.0 * rng.uniform01() - 2.0;
    PropensityFunction pi = [&, s1, s2](const Eigen::VectorXd& l) {
      return truncate_propensity(base.true_propensity(l) + s1 + s2 * l[0], base.delta());
    };
    OutcomeFunction mu = [&, t1, t2](const Eigen::VectorXd& l, int a) {
      return base.true_outcome_mean(l, a) + (a == 1 ? t1 : t2) * (0.4 + l[0]);
    };
    ProductBound pb = product_bound_check(base, pi, mu, base.delta());
    if (pb.pass) ++passed;
    worst_margin = std::min(worst_margin, pb.rhs - pb.lhs);
  }
  std::ostringstream msg;
  msg << passed << "/100 doubly-wrong pairs bounded; smallest rhs-lhs margin " << worst_margin;
  detail = msg.str();
  return passed == 100;
}

// ---- criterion 4: Wald coverage of AIPW ----
bool run_coverage(std::string& detail) {
  DGPSpec spec;
  MonteCarloSummary summary = run_monte_carlo(spec, {"aipw"}, 500, 1000, 2, 0.95, 1);
  const double coverage = summary.estimators[0].second.coverage;
  std::ostringstream msg;
  msg << "empirical coverage " << coverage << " (band [0.93, 0.97], 1000 reps, n=500)";
  detail = msg.str();
  return coverage >= 0.93 && coverage <= 0.97;
}

// ---- criterion 5: estimated propensity is at least as efficient ----
bool run_efficiency(std::string& detail) {
  DGPSpec spec;
  EfficiencyComparison cmp = efficiency_experiment(spec, 1000, 2000, 51, 1);
  std::ostringstream msg;
  msg << "var(estimated)/var(known) = " << cmp.ratio << " (must be <= 1.05)";
  detail = msg.str();
  return cmp.reliable && cmp.ratio <= 1.05;
}

// ---- criterion 6: double-robust consistency trend + negative control ----
bool run_dr_trend(std::string& detail) {
  const std::vector<Eigen::Index> grid{500, 2000, 8000};
  std::ostringstream msg;
  bool ok = true;

  auto one_correct = [&](MisspecKind pi_kind, MisspecKind mu_kind, const char* label,
                         std::uint64_t seed) {
    DGPSpec spec;
    spec.propensity_misspec = pi_kind;
    spec.outcome_misspec = mu_kind;
    DrTable table = dr_experiment(spec, grid, 500, seed, 1);
    const double first = std::abs(table.cells.front().mean_bias);
    const double last = std::abs(table.cells.back().mean_bias);
    const double gate = std::max(0.5 * first, 2.0 * table.cells.back().mc_se);
    const bool pass = last < gate;
    msg << label << " |bias|@8000 " << last << " vs gate " << gate << "; ";
    return pass;
  };
  ok = one_correct(MisspecKind::kNone, MisspecKind::kDistort, "pi-correct", 61) && ok;
  ok = one_correct(MisspecKind::kDistort, MisspecKind::kNone, "mu-correct", 62) && ok;

  DGPSpec both;
  both.propensity_misspec = MisspecKind::kDistort;
  both.outcome_misspec = MisspecKind::kDistort;
  DrTable control = dr_experiment(both, grid, 500, 63, 1);
  const DrCell& last = control.cells.back();
  const bool nonzero = std::abs(last.mean_bias) > 4.0 * last.mc_se;
  const bool matches = std::abs(last.mean_bias - control.limit_bias) <= 4.0 * last.mc_se;
  msg << "negative control bias@8000 " << last.mean_bias << " (limit " << control.limit_bias
      << ", mc se " << last.mc_se << ")";
  detail = msg.str();
  return ok && nonzero && matches;
}

// ---- criterion 7: n^{-1/4}-style rate condition ----
bool run_rate_condition(std::string& detail) {
  const std::vector<Eigen::Index> grid{1000, 10000, 100000};
  std::ostringstream msg;

  DGPSpec fast;
  fast.rate_pi = 0.3;
  fast.rate_mu = 0.3;
  fast.rate_scale = 1.0;
  RateTable decay = rate_experiment(fast, grid, {4000, 2000, 600}, 71, 1);
  const bool decreasing =
      std::abs(decay.cells[0].sqrt_n_bias) > std::abs(decay.cells[1].sqrt_n_bias) &&
      std::abs(decay.cells[1].sqrt_n_bias) > std::abs(decay.cells[2].sqrt_n_bias);
  msg << "(0.3,0.3) |sqrt(n) bias|: ";
  for (const auto& cell : decay.cells) msg << std::abs(cell.sqrt_n_bias) << " ";

  DGPSpec slow;
  slow.rate_pi = 0.15;
  slow.rate_mu = 0.15;
  slow.rate_scale = 1.0;
  RateTable growth = rate_experiment(slow, grid, {2000, 800, 200}, 72, 1);
  const bool increasing =
      std::abs(growth.cells[0].sqrt_n_bias) < std::abs(growth.cells[1].sqrt_n_bias) &&
      std::abs(growth.cells[1].sqrt_n_bias) < std::abs(growth.cells[2].sqrt_n_bias);
  msg << "| (0.15,0.15): ";
  for (const auto& cell : growth.cells) msg << std::abs(cell.sqrt_n_bias) << " ";
  detail = msg.str();
  return decreasing && increasing;
}

// ---- criterion 8: sandwich vs closed-form corrected influence ----
bool run_cross_path(std::string& detail) {
  DGPSpec spec;
  Dataset data = spec.sample(800, 81);
  IpwLogisticStack stack = make_ipw_logistic_stack(data, linear_features());
  Eigen::MatrixXd analytic = sandwich_stacked(data, stack.m, stack.theta_hat, stack.jacobian);
  Eigen::MatrixXd numeric = sandwich_stacked(data, stack.m, stack.theta_hat);
  EstimateReport report = ipw_estimated_parametric(data, linear_features());
  const double path_gap = (analytic.col(0) - report.influence).cwiseAbs().maxCoeff();
  const double jac_gap = (analytic - numeric).cwiseAbs().maxCoeff();
  std::ostringstream msg;
  msg << "influence path gap " << path_gap << " (tol 1e-8), jacobian gap " << jac_gap
      << " (tol 1e-5)";
  detail = msg.str();
  return path_gap <= 1e-8 && jac_gap <= 1e-5;
}

// ---- criterion 9: exact efficiency ordering ----
bool run_variance_ordering(std::string& detail) {
  bool all_ordered = true;
  bool strict_somewhere = false;
  double min_slack = std::numeric_limits<double>::infinity();
  auto check_base = [&](const DiscreteDistribution& base) {
    ZFunction eif = efficient_influence(base);
    ZFunction ipw = ipw_influence(base);
    const double var_eif = exact_mean([&](const Atom& z) { return eif(z) * eif(z); }, base);
    const double var_ipw = exact_mean([&](const Atom& z) { return ipw(z) * ipw(z); }, base);
    all_ordered = all_ordered && var_eif <= var_ipw + 1e-12;
    if (var_ipw - var_eif > 1e-9) strict_somewhere = true;
    min_slack = std::min(min_slack, var_ipw - var_eif);
  };
  for (std::uint64_t b = 0; b < 5; ++b) check_base(testutil::random_base(1000 + b));
  check_base(fixed_base());
  std::ostringstream msg;
  msg << "var(eif) <= var(ipw) on all 6 bases, smallest slack " << min_slack;
  detail = msg.str();
  return all_ordered && strict_somewhere;
}

// ---- criterion 10: CLI byte-reproducibility, including --threads 4 ----
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

bool run_cli_determinism(std::string& detail) {
  const char* bin = std::getenv("SEMICAUSAL_BIN");
  const char* data_dir = std::getenv("SEMICAUSAL_DATA");
  if (!bin || !data_dir) {
    detail = "SEMICAUSAL_BIN / SEMICAUSAL_DATA not set";
    return false;
  }
  fs::path dir = fs::temp_directory_path() / ("semicausal_acc_" + std::to_string(::getpid()));
  fs::create_directories(dir);

  DGPSpec spec;
  Dataset data = spec.sample(300, 5);
  fs::path csv = dir / "data.csv";
  data.write_csv(csv.string());
  fs::path config = dir / "config.json";
  {
    std::ofstream out(config);
    out << "{\"estimator\": \"crossfit_aipw\", \"folds\": 5,\n"
           " \"propensity\": {\"method\": \"logistic\"}, \"outcome\": {\"method\": \"ols\"}}\n";
  }
  fs::path dist = fs::path(data_dir) / "example_distribution.json";

  auto run = [&](const std::string& args, const fs::path& out) {
    std::string cmd = std::string(bin) + " " + args + " --out " + out.string() +
                      " >/dev/null 2>&1";
    return std::system(cmd.c_str()) == 0;
  };

  struct Job {
    std::string name;
    std::string args;
  };
  const std::vector<Job> jobs{
      {"estimate", "estimate --data " + csv.string() + " --config " + config.string() +
                       " --seed 9"},
      {"simulate-t1",
       "simulate --n 200 --reps 60 --seed 9 --estimators aipw,ipw_known --threads 1"},
      {"simulate-t4",
       "simulate --n 200 --reps 60 --seed 9 --estimators aipw,ipw_known --threads 4"},
      {"eif-check", "eif-check --dist " + dist.string() + " --seed 9"},
      {"rates",
       "rates --r-pi 0.3 --r-mu 0.3 --scale 1.0 --n-grid 500,1000 --reps 80 --seed 9 "
       "--threads 4"},
  };

  std::ostringstream msg;
  bool ok = true;
  std::string simulate_reference;
  for (const auto& job : jobs) {
    fs::path out1 = dir / (job.name + "_1.json");
    fs::path out2 = dir / (job.name + "_2.json");
    if (!run(job.args, out1) || !run(job.args, out2)) {
      msg << job.name << " failed to run; ";
      ok = false;
      continue;
    }
    const std::string b1 = slurp(out1);
    if (b1.empty() || b1 != slurp(out2)) {
      msg << job.name << " not byte-reproducible; ";
      ok = false;
    }
    if (job.name == "simulate-t1") simulate_reference = b1;
    if (job.name == "simulate-t4" && b1 != simulate_reference) {
      msg << "simulate differs between --threads 1 and 4; ";
      ok = false;
    }
  }
  if (ok) msg << "all subcommands byte-identical across reruns and thread counts";
  detail = msg.str();
  return ok;
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "EIF pathwise identity", 5.0, run_eif_identity},
      {2, "Exact double robustness", 1.0, run_double_robustness},
      {3, "Product bias bound", 1.0, run_product_bound},
      {4, "AIPW Wald coverage", 120.0, run_coverage},
      {5, "Estimated-propensity efficiency", 180.0, run_efficiency},
      {6, "Double-robust consistency trend", 300.0, run_dr_trend},
      {7, "Product-rate condition", 300.0, run_rate_condition},
      {8, "Sandwich cross-path agreement", 1.0, run_cross_path},
      {9, "Exact efficiency ordering", 1.0, run_variance_ordering},
      {10, "CLI determinism under --threads", 120.0, run_cli_determinism},
  };

  int failures = 0;
  for (const auto& criterion : criteria) {
    const auto start = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = false;
    try {
      ok = criterion.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (elapsed > criterion.budget_seconds) {
      ok = false;
      detail += " [over budget]";
    }
    std::printf("%s  criterion %2d  %-34s (%.2fs < %.0fs)  %s\n", ok ? "PASS" : "FAIL",
                criterion.id, criterion.title.c_str(), elapsed, criterion.budget_seconds,
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  std::printf("ACCEPTANCE: %zu/%zu criteria passed\n", criteria.size() - failures,
              criteria.size());
  return failures;
}
