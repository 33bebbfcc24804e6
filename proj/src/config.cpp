#include "semicausal/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace semicausal {

FeatureMap make_feature_map(const std::vector<std::string>& names) {
  if (names.empty()) {
    return linear_features();
  }
  struct Term {
    bool intercept;
    Eigen::Index column;
  };
  std::vector<Term> terms;
  for (const auto& name : names) {
    if (name == "1") {
      terms.push_back({true, 0});
    } else if (name.size() >= 2 && name[0] == 'l') {
      int idx = 0;
      auto [ptr, ec] = std::from_chars(name.data() + 1, name.data() + name.size(), idx);
      if (ec != std::errc() || ptr != name.data() + name.size() || idx < 1) {
        throw std::invalid_argument("feature '" + name + "' is not '1' or 'l<k>'");
      }
      terms.push_back({false, idx - 1});
    } else {
      throw std::invalid_argument("feature '" + name + "' is not '1' or 'l<k>'");
    }
  }
  return [terms](const Eigen::VectorXd& l) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(terms.size()));
    for (std::size_t j = 0; j < terms.size(); ++j) {
      if (terms[j].intercept) {
        x[static_cast<Eigen::Index>(j)] = 1.0;
      } else {
        if (terms[j].column >= l.size()) {
          throw std::invalid_argument("feature l" + std::to_string(terms[j].column + 1) +
                                      " exceeds the covariate dimension " +
                                      std::to_string(l.size()));
        }
        x[static_cast<Eigen::Index>(j)] = l[terms[j].column];
      }
    }
    return x;
  };
}

namespace {

PropensityLearner propensity_preset(const std::string& name, double delta) {
  LogisticConfig config;
  config.delta = delta;
  if (name == "logistic") {
    return [config](const Dataset& d) { return fit_logistic(d, linear_features(), config); };
  }
  if (name == "logistic_intercept") {
    return [config](const Dataset& d) {
      return fit_logistic(d, intercept_only_features(), config);
    };
  }
  throw std::invalid_argument("unknown propensity candidate '" + name + "'");
}

OutcomeLearner outcome_preset(const std::string& name) {
  if (name == "ols") {
    return [](const Dataset& d) { return fit_outcome_linear(d, linear_features()); };
  }
  if (name == "ols_intercept") {
    return [](const Dataset& d) { return fit_outcome_linear(d, intercept_only_features()); };
  }
  if (name == "kernel") {
    return [](const Dataset& d) { return fit_outcome_kernel(d, silverman_bandwidth(d)); };
  }
  if (name.rfind("kernel:", 0) == 0) {
    double bw = std::stod(name.substr(7));
    return [bw](const Dataset& d) { return fit_outcome_kernel(d, bw); };
  }
  throw std::invalid_argument("unknown outcome candidate '" + name + "'");
}

}  // namespace

PropensityLearner make_propensity_learner(const LearnerSpec& spec, std::uint64_t seed) {
  if (spec.method == "logistic") {
    FeatureMap features = make_feature_map(spec.features);
    LogisticConfig config;
    config.delta = spec.delta;
    return [features, config](const Dataset& d) { return fit_logistic(d, features, config); };
  }
  if (spec.method == "ensemble") {
    std::vector<PropensityLearner> candidates;
    for (const auto& name : spec.candidates) {
      candidates.push_back(propensity_preset(name, spec.delta));
    }
    if (candidates.empty()) {
      throw std::invalid_argument("propensity ensemble needs at least one candidate");
    }
    int folds = spec.folds;
    double delta = spec.delta;
    return [candidates, folds, seed, delta](const Dataset& d) {
      return fit_propensity_ensemble(d, candidates, folds, seed, delta);
    };
  }
  throw std::invalid_argument("unknown propensity method '" + spec.method + "'");
}

OutcomeLearner make_outcome_learner(const LearnerSpec& spec, std::uint64_t seed) {
  if (spec.method == "ols") {
    FeatureMap features = make_feature_map(spec.features);
    return [features](const Dataset& d) { return fit_outcome_linear(d, features); };
  }
  if (spec.method == "kernel") {
    double bandwidth = spec.bandwidth;
    double kappa = spec.kappa;
    return [bandwidth, kappa](const Dataset& d) {
      double bw = bandwidth > 0.0 ? bandwidth : silverman_bandwidth(d, kappa);
      return fit_outcome_kernel(d, bw);
    };
  }
  if (spec.method == "ensemble") {
    std::vector<OutcomeLearner> candidates;
    for (const auto& name : spec.candidates) {
      candidates.push_back(outcome_preset(name));
    }
    if (candidates.empty()) {
      throw std::invalid_argument("outcome ensemble needs at least one candidate");
    }
    int folds = spec.folds;
    return [candidates, folds, seed](const Dataset& d) {
      return fit_outcome_ensemble(d, candidates, folds, seed);
    };
  }
  throw std::invalid_argument("unknown outcome method '" + spec.method + "'");
}

namespace {

LearnerSpec parse_learner_block(const nlohmann::json& block, const std::string& name,
                                const std::string& fallback_method, double fallback_delta) {
  LearnerSpec spec;
  spec.method = fallback_method;
  spec.delta = fallback_delta;
  if (block.is_null()) return spec;
  if (!block.is_object()) {
    throw std::invalid_argument(name + ": learner block must be an object");
  }
  spec.method = block.value("method", fallback_method);
  if (block.contains("features")) {
    for (const auto& f : block["features"]) spec.features.push_back(f.get<std::string>());
  }
  spec.bandwidth = block.value("bandwidth", 0.0);
  spec.kappa = block.value("kappa", 0.0);
  if (block.contains("candidates")) {
    for (const auto& candidate : block["candidates"]) {
      spec.candidates.push_back(candidate.get<std::string>());
    }
  }
  spec.folds = block.value("folds", 5);
  spec.delta = block.value("delta", spec.delta);
  return spec;
}

}  // namespace

EstimateConfig parse_estimate_config(const nlohmann::json& doc, const std::string& name) {
  if (!doc.is_object()) {
    throw std::invalid_argument(name + ": config must be a JSON/TOML object");
  }
  EstimateConfig config;
  config.estimator = doc.value("estimator", std::string("aipw"));
  config.level = doc.value("level", 0.95);
  config.folds = doc.value("folds", 5);
  double delta = doc.value("delta", 0.01);
  config.propensity = parse_learner_block(doc.contains("propensity") ? doc["propensity"] : nullptr,
                                          name, "logistic", delta);
  config.outcome =
      parse_learner_block(doc.contains("outcome") ? doc["outcome"] : nullptr, name, "ols", delta);
  static const std::vector<std::string> known{"plugin", "ipw", "ipw_estimated", "aipw",
                                              "crossfit_aipw"};
  if (std::find(known.begin(), known.end(), config.estimator) == known.end()) {
    throw std::invalid_argument(name + ": unknown estimator '" + config.estimator + "'");
  }
  if (!(config.level > 0.0 && config.level < 1.0)) {
    throw std::invalid_argument(name + ": level must lie in (0,1)");
  }
  return config;
}

namespace {

NoiseKind parse_noise_kind(const std::string& text, const std::string& name) {
  if (text == "gaussian") return NoiseKind::kGaussian;
  if (text == "two_point") return NoiseKind::kTwoPoint;
  if (text == "none") return NoiseKind::kNone;
  throw std::invalid_argument(name + ": unknown noise kind '" + text + "'");
}

MisspecKind parse_misspec_kind(const std::string& text, const std::string& name) {
  if (text == "none") return MisspecKind::kNone;
  if (text == "omit") return MisspecKind::kOmit;
  if (text == "distort") return MisspecKind::kDistort;
  throw std::invalid_argument(name + ": unknown misspecification kind '" + text + "'");
}

}  // namespace

DGPSpec parse_dgp_spec(const nlohmann::json& doc, const std::string& name) {
  DGPSpec spec;
  if (doc.is_null()) return spec;
  if (!doc.is_object()) {
    throw std::invalid_argument(name + ": DGP spec must be a JSON/TOML object");
  }
  if (doc.contains("covariates")) {
    const auto& cov = doc["covariates"];
    if (cov.contains("points")) {
      spec.covariate_values = cov["points"].get<std::vector<double>>();
      if (cov.contains("probs")) {
        spec.covariate_probs = cov["probs"].get<std::vector<double>>();
      } else {
        spec.covariate_probs.assign(spec.covariate_values.size(),
                                    1.0 / static_cast<double>(spec.covariate_values.size()));
      }
    } else if (cov.contains("grid")) {
      const auto& grid = cov["grid"];
      double lo = grid.value("min", -1.0);
      double hi = grid.value("max", 1.0);
      int count = grid.value("count", 5);
      if (count < 1 || hi < lo) {
        throw std::invalid_argument(name + ": bad covariate grid");
      }
      spec.covariate_values.clear();
      for (int i = 0; i < count; ++i) {
        spec.covariate_values.push_back(
            count == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / (count - 1));
      }
      spec.covariate_probs.assign(static_cast<std::size_t>(count), 1.0 / count);
    } else {
      throw std::invalid_argument(name + ": covariates block needs 'points' or 'grid'");
    }
  }
  if (doc.contains("propensity")) {
    const auto& block = doc["propensity"];
    spec.propensity_intercept = block.value("intercept", spec.propensity_intercept);
    spec.propensity_slope = block.value("slope", spec.propensity_slope);
  }
  if (doc.contains("outcome")) {
    const auto& block = doc["outcome"];
    spec.outcome_intercept = block.value("intercept", spec.outcome_intercept);
    spec.outcome_covariate = block.value("covariate", spec.outcome_covariate);
    spec.outcome_treatment = block.value("treatment", spec.outcome_treatment);
    spec.outcome_interaction = block.value("interaction", spec.outcome_interaction);
  }
  if (doc.contains("noise")) {
    const auto& block = doc["noise"];
    spec.noise = parse_noise_kind(block.value("kind", std::string("gaussian")), name);
    spec.noise_sd = block.value("sd", 1.0);
  }
  if (doc.contains("misspec")) {
    const auto& block = doc["misspec"];
    spec.propensity_misspec =
        parse_misspec_kind(block.value("propensity", std::string("none")), name);
    spec.outcome_misspec = parse_misspec_kind(block.value("outcome", std::string("none")), name);
  }
  if (doc.contains("rates")) {
    const auto& block = doc["rates"];
    spec.rate_pi = block.value("r_pi", spec.rate_pi);
    spec.rate_mu = block.value("r_mu", spec.rate_mu);
    spec.rate_scale = block.value("scale", spec.rate_scale);
  }
  spec.delta = doc.value("delta", spec.delta);
  spec.validate();
  return spec;
}

namespace {

std::string strip(const std::string& text) {
  std::size_t first = text.find_first_not_of(" \t");
  if (first == std::string::npos) return "";
  std::size_t last = text.find_last_not_of(" \t");
  return text.substr(first, last - first + 1);
}

nlohmann::json parse_toml_scalar(const std::string& token, const std::string& name,
                                 std::size_t line_no) {
  if (token.empty()) {
    throw std::invalid_argument(name + ":" + std::to_string(line_no) + ": empty value");
  }
  if (token.front() == '"' && token.back() == '"' && token.size() >= 2) {
    return token.substr(1, token.size() - 2);
  }
  if (token == "true") return true;
  if (token == "false") return false;
  try {
    std::size_t used = 0;
    if (token.find_first_of(".eE") == std::string::npos) {
      long v = std::stol(token, &used);
      if (used == token.size()) return v;
    }
    double v = std::stod(token, &used);
    if (used == token.size()) return v;
  } catch (const std::exception&) {
  }
  throw std::invalid_argument(name + ":" + std::to_string(line_no) + ": cannot parse value '" +
                              token + "'");
}

}  // namespace

nlohmann::json parse_toml_text(const std::string& text, const std::string& name) {
  nlohmann::json root = nlohmann::json::object();
  nlohmann::json* current = &root;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    // strip comments outside strings
    bool in_string = false;
    std::string body;
    for (char ch : line) {
      if (ch == '"') in_string = !in_string;
      if (ch == '#' && !in_string) break;
      body.push_back(ch);
    }
    body = strip(body);
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') {
        throw std::invalid_argument(name + ":" + std::to_string(line_no) +
                                    ": malformed table header");
      }
      std::string section = strip(body.substr(1, body.size() - 2));
      if (section.empty()) {
        throw std::invalid_argument(name + ":" + std::to_string(line_no) + ": empty table name");
      }
      nlohmann::json* node = &root;
      std::size_t start = 0;
      while (true) {
        std::size_t dot = section.find('.', start);
        std::string part = section.substr(start, dot == std::string::npos ? dot : dot - start);
        node = &(*node)[strip(part)];
        if (!node->is_object()) *node = nlohmann::json::object();
        if (dot == std::string::npos) break;
        start = dot + 1;
      }
      current = node;
      continue;
    }
    std::size_t eq = body.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(name + ":" + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = strip(body.substr(0, eq));
    std::string value = strip(body.substr(eq + 1));
    if (key.empty()) {
      throw std::invalid_argument(name + ":" + std::to_string(line_no) + ": empty key");
    }
    if (!value.empty() && value.front() == '[') {
      if (value.back() != ']') {
        throw std::invalid_argument(name + ":" + std::to_string(line_no) +
                                    ": arrays must close on the same line");
      }
      nlohmann::json arr = nlohmann::json::array();
      std::string inner = strip(value.substr(1, value.size() - 2));
      if (!inner.empty()) {
        std::size_t start = 0;
        bool in_str = false;
        std::string token;
        for (std::size_t i = 0; i <= inner.size(); ++i) {
          if (i == inner.size() || (inner[i] == ',' && !in_str)) {
            arr.push_back(parse_toml_scalar(strip(token), name, line_no));
            token.clear();
          } else {
            if (inner[i] == '"') in_str = !in_str;
            token.push_back(inner[i]);
          }
        }
        (void)start;
      }
      (*current)[key] = std::move(arr);
    } else {
      (*current)[key] = parse_toml_scalar(value, name, line_no);
    }
  }
  return root;
}

nlohmann::json load_structured_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("cannot open '" + path + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const bool toml = path.size() >= 5 && path.substr(path.size() - 5) == ".toml";
  if (toml) {
    return parse_toml_text(text, path);
  }
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(path + ": JSON parse error: " + e.what());
  }
}

}  // namespace semicausal
