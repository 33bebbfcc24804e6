#include "semicausal/report_json.hpp"

#include <algorithm>

#include "semicausal/json_writer.hpp"

namespace semicausal {

namespace {

const char* noise_name(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::kGaussian: return "gaussian";
    case NoiseKind::kTwoPoint: return "two_point";
    default: return "none";
  }
}

const char* misspec_name(MisspecKind kind) {
  switch (kind) {
    case MisspecKind::kNone: return "none";
    case MisspecKind::kOmit: return "omit";
    default: return "distort";
  }
}

}  // namespace

void append_dgp(JsonWriter& w, const DGPSpec& spec) {
  w.begin_object();
  w.key("covariate_points").begin_array();
  for (double v : spec.covariate_values) w.value(v);
  w.end_array();
  w.key("covariate_probs").begin_array();
  for (double v : spec.covariate_probs) w.value(v);
  w.end_array();
  w.key("propensity").begin_object();
  w.key("intercept").value(spec.propensity_intercept);
  w.key("slope").value(spec.propensity_slope);
  w.end_object();
  w.key("outcome").begin_object();
  w.key("intercept").value(spec.outcome_intercept);
  w.key("covariate").value(spec.outcome_covariate);
  w.key("treatment").value(spec.outcome_treatment);
  w.key("interaction").value(spec.outcome_interaction);
  w.end_object();
  w.key("noise").begin_object();
  w.key("kind").value(noise_name(spec.noise));
  w.key("sd").value(spec.noise_sd);
  w.end_object();
  w.key("misspec").begin_object();
  w.key("propensity").value(misspec_name(spec.propensity_misspec));
  w.key("outcome").value(misspec_name(spec.outcome_misspec));
  w.end_object();
  w.key("rates").begin_object();
  w.key("r_pi").value(spec.rate_pi);
  w.key("r_mu").value(spec.rate_mu);
  w.key("scale").value(spec.rate_scale);
  w.end_object();
  w.key("delta").value(spec.delta);
  w.end_object();
}

std::string to_json(const EstimateReport& report) {
  JsonWriter w;
  w.begin_object();
  w.key("estimator").value(report.estimator);
  w.key("psi_hat").value(report.psi_hat);
  w.key("se").value(report.se);
  w.key("ci").begin_array().value(report.ci.lower).value(report.ci.upper).end_array();
  w.key("level").value(report.level);
  w.key("n").value(static_cast<long>(report.n));
  w.key("diagnostics").begin_object();
  w.key("truncated_propensity").value(report.diagnostics.truncated_propensity);
  if (!report.diagnostics.fold_assignment.empty()) {
    int folds = 0;
    for (int f : report.diagnostics.fold_assignment) folds = std::max(folds, f + 1);
    w.key("folds").value(static_cast<long>(folds));
  }
  w.key("naive_se").value(report.diagnostics.naive_se);
  w.key("influence_mean")
      .value(report.influence.size() > 0 ? report.influence.mean() : 0.0);
  w.end_object();
  w.end_object();
  std::string out = w.str();
  out.push_back('\n');
  return out;
}

std::string to_json(const MonteCarloSummary& summary, const DGPSpec& spec) {
  JsonWriter w;
  w.begin_object();
  w.key("command").value("simulate");
  w.key("seed").value(static_cast<unsigned long>(summary.seed));
  w.key("n").value(static_cast<long>(summary.n));
  w.key("replications").value(summary.replications);
  w.key("level").value(summary.level);
  w.key("psi0").value(summary.psi0);
  w.key("failure_count").value(summary.failure_count);
  w.key("dgp");
  append_dgp(w, spec);
  w.key("estimators").begin_array();
  for (const auto& [name, stats] : summary.estimators) {
    w.begin_object();
    w.key("name").value(name);
    w.key("replications").value(stats.replications);
    w.key("failures").value(stats.failures);
    w.key("mean_bias").value(stats.mean_bias);
    w.key("empirical_sd").value(stats.empirical_sd);
    w.key("mean_se").value(stats.mean_se);
    w.key("coverage").value(stats.coverage);
    w.key("mean_ci_width").value(stats.mean_ci_width);
    w.end_object();
  }
  w.end_array();
  w.end_object();
  std::string out = w.str();
  out.push_back('\n');
  return out;
}

std::string to_json(const EifCheckReport& report, std::size_t atoms, double psi0,
                    double ipw_variance, double step, std::uint64_t seed) {
  JsonWriter w;
  w.begin_object();
  w.key("command").value("eif-check");
  w.key("seed").value(static_cast<unsigned long>(seed));
  w.key("atoms").value(static_cast<unsigned long>(atoms));
  w.key("psi0").value(psi0);
  w.key("tol").value(report.tol);
  w.key("step").value(step);
  w.key("phi_mean").value(report.phi_mean);
  w.key("phi_variance").value(report.phi_variance);
  w.key("ipw_variance").value(ipw_variance);
  w.key("checks").begin_array();
  for (std::size_t i = 0; i < report.checks.size(); ++i) {
    const auto& entry = report.checks[i];
    w.begin_object();
    w.key("g").value(static_cast<unsigned long>(i));
    w.key("derivative").value(entry.derivative);
    w.key("covariance").value(entry.covariance);
    w.key("gap").value(entry.gap);
    w.end_object();
  }
  w.end_array();
  w.key("gaps_ok").value(report.gaps_ok);
  w.key("mean_ok").value(report.mean_ok);
  w.key("pass").value(report.pass);
  w.end_object();
  std::string out = w.str();
  out.push_back('\n');
  return out;
}

std::string to_json(const RateTable& table, std::uint64_t seed) {
  JsonWriter w;
  w.begin_object();
  w.key("command").value("rates");
  w.key("seed").value(static_cast<unsigned long>(seed));
  w.key("r_pi").value(table.rate_pi);
  w.key("r_mu").value(table.rate_mu);
  w.key("scale").value(table.scale);
  w.key("cells").begin_array();
  for (const auto& cell : table.cells) {
    w.begin_object();
    w.key("n").value(static_cast<long>(cell.n));
    w.key("replications").value(cell.replications);
    w.key("sqrt_n_bias").value(cell.sqrt_n_bias);
    w.key("mc_se").value(cell.mc_se);
    w.key("exact_bias").value(cell.exact_bias);
    w.key("raw_mean_bias").value(cell.raw_mean_bias);
    w.key("retruncations").value(cell.retruncations);
    w.end_object();
  }
  w.end_array();
  w.end_object();
  std::string out = w.str();
  out.push_back('\n');
  return out;
}

std::string to_json(const DrTable& table, std::uint64_t seed) {
  JsonWriter w;
  w.begin_object();
  w.key("command").value("dr-experiment");
  w.key("seed").value(static_cast<unsigned long>(seed));
  w.key("psi0").value(table.psi0);
  w.key("limit_bias").value(table.limit_bias);
  w.key("cells").begin_array();
  for (const auto& cell : table.cells) {
    w.begin_object();
    w.key("n").value(static_cast<long>(cell.n));
    w.key("replications").value(cell.replications);
    w.key("mean_bias").value(cell.mean_bias);
    w.key("mc_se").value(cell.mc_se);
    w.end_object();
  }
  w.end_array();
  w.end_object();
  std::string out = w.str();
  out.push_back('\n');
  return out;
}

std::string per_rep_csv(const std::vector<PerRepRecord>& records) {
  std::string out = "rep,estimator,psi_hat,se,covered\n";
  for (const auto& record : records) {
    out += std::to_string(record.rep);
    out += ',';
    out += record.estimator;
    out += ',';
    out += format_double(record.psi_hat);
    out += ',';
    out += format_double(record.se);
    out += ',';
    out += record.covered ? '1' : '0';
    out += '\n';
  }
  return out;
}

}  // namespace semicausal
