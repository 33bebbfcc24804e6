#include "semicausal/distribution.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "semicausal/errors.hpp"
#include "semicausal/json_writer.hpp"
#include "semicausal/math.hpp"
#include "semicausal/rng.hpp"

namespace semicausal {

namespace {

std::vector<double> key_of(const Eigen::VectorXd& l) {
  return std::vector<double>(l.data(), l.data() + l.size());
}

}  // namespace

DiscreteDistribution::DiscreteDistribution(std::vector<Atom> atoms, std::vector<double> masses,
                                           double delta)
    : atoms_(std::move(atoms)), masses_(std::move(masses)), delta_(delta) {
  if (atoms_.empty() || atoms_.size() != masses_.size()) {
    throw std::invalid_argument("DiscreteDistribution: atoms and masses must be nonempty and match");
  }
  if (!(delta_ > 0.0 && delta_ < 0.5)) {
    throw std::invalid_argument("DiscreteDistribution: delta must lie in (0, 0.5)");
  }
  const Eigen::Index d = atoms_.front().l.size();
  KahanSum total;
  for (std::size_t i = 0; i < atoms_.size(); ++i) {
    const Atom& z = atoms_[i];
    if (z.l.size() != d) {
      throw std::invalid_argument("DiscreteDistribution: atom " + std::to_string(i) +
                                  " has inconsistent covariate dimension");
    }
    if (z.a != 0 && z.a != 1) {
      throw std::invalid_argument("DiscreteDistribution: atom " + std::to_string(i) +
                                  " has treatment outside {0,1}");
    }
    if (!z.l.allFinite() || !std::isfinite(z.y)) {
      throw std::invalid_argument("DiscreteDistribution: atom " + std::to_string(i) +
                                  " has non-finite entries");
    }
    if (!(masses_[i] >= 0.0) || !std::isfinite(masses_[i])) {
      throw std::invalid_argument("DiscreteDistribution: mass " + std::to_string(i) +
                                  " is negative or non-finite");
    }
    total.add(masses_[i]);
  }
  const double sum = total.value();
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("DiscreteDistribution: masses sum to " + std::to_string(sum) +
                                ", outside the 1e-9 normalization window");
  }
  if (sum != 1.0) {
    for (double& m : masses_) m /= sum;
  }

  // atom uniqueness
  {
    std::set<std::pair<std::vector<double>, std::pair<int, double>>> seen;
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
      auto key = std::make_pair(key_of(atoms_[i].l), std::make_pair(atoms_[i].a, atoms_[i].y));
      if (!seen.insert(key).second) {
        throw std::invalid_argument("DiscreteDistribution: duplicate atom at index " +
                                    std::to_string(i));
      }
    }
  }

  // covariate-level aggregation (map keyed by exact vector equality)
  std::map<std::vector<double>, std::array<double, 4>> acc;  // {p_a0, p_a1, py_a0, py_a1}
  for (std::size_t i = 0; i < atoms_.size(); ++i) {
    auto& cell = acc[key_of(atoms_[i].l)];
    cell[atoms_[i].a] += masses_[i];
    cell[2 + atoms_[i].a] += masses_[i] * atoms_[i].y;
  }
  for (const auto& [key, cell] : acc) {
    const double prob = cell[0] + cell[1];
    if (prob <= 0.0) continue;  // zero-mass level carries no information
    Level lev;
    lev.l = Eigen::Map<const Eigen::VectorXd>(key.data(), static_cast<Eigen::Index>(key.size()));
    lev.prob = prob;
    lev.propensity = cell[1] / prob;
    if (lev.propensity < delta_ || lev.propensity > 1.0 - delta_) {
      std::ostringstream msg;
      msg << "DiscreteDistribution: positivity violated, P(A=1 | L=l) = " << lev.propensity
          << " outside [" << delta_ << ", " << 1.0 - delta_ << "] at a covariate level";
      throw PositivityError(msg.str());
    }
    lev.mean_y[0] = cell[2] / cell[0];
    lev.mean_y[1] = cell[3] / cell[1];
    level_index_[key] = levels_.size();
    levels_.push_back(std::move(lev));
  }
}

const DiscreteDistribution::Level& DiscreteDistribution::level_of(const Eigen::VectorXd& l) const {
  auto it = level_index_.find(key_of(l));
  if (it == level_index_.end()) {
    throw std::invalid_argument("DiscreteDistribution: covariate level not in the support");
  }
  return levels_[it->second];
}

double DiscreteDistribution::true_outcome_mean(const Eigen::VectorXd& l, int a) const {
  if (a != 0 && a != 1) {
    throw std::invalid_argument("true_outcome_mean: treatment must be 0 or 1");
  }
  return level_of(l).mean_y[a];
}

double exact_mean(const ZFunction& f, const DiscreteDistribution& dist) {
  KahanSum sum;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    double v = f(dist.atom(i));
    if (!std::isfinite(v)) {
      throw std::runtime_error("exact_mean: non-finite value of f at atom " + std::to_string(i));
    }
    sum.add(dist.mass(i) * v);
  }
  return sum.value();
}

double true_ate(const DiscreteDistribution& dist) {
  KahanSum sum;
  for (const auto& lev : dist.levels()) {
    // unreachable after construction, but the contract names it
    if (!(lev.propensity > 0.0 && lev.propensity < 1.0)) {
      throw PositivityError("true_ate: a covariate level has zero mass on one treatment arm");
    }
    sum.add(lev.prob * (lev.mean_y[1] - lev.mean_y[0]));
  }
  return sum.value();
}

Dataset sample(const DiscreteDistribution& dist, Eigen::Index n, std::uint64_t seed) {
  if (n < 1) {
    throw std::invalid_argument("sample: n must be >= 1");
  }
  std::vector<double> cum(dist.size());
  double running = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    running += dist.mass(i);
    cum[i] = running;
  }
  cum.back() = 1.0;

  Rng rng(seed);
  const Eigen::Index d = dist.dim();
  Eigen::MatrixXd covariates(n, d);
  Eigen::VectorXd treatment(n);
  Eigen::VectorXd outcome(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double u = rng.uniform01();
    auto it = std::upper_bound(cum.begin(), cum.end(), u);
    std::size_t k = static_cast<std::size_t>(it - cum.begin());
    if (k >= dist.size()) k = dist.size() - 1;
    const Atom& z = dist.atom(k);
    covariates.row(i) = z.l.transpose();
    treatment[i] = z.a;
    outcome[i] = z.y;
  }
  return Dataset(std::move(covariates), std::move(treatment), std::move(outcome));
}

DiscreteDistribution DiscreteDistribution::from_json_text(const std::string& text,
                                                          const std::string& name) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(name + ": JSON parse error: " + e.what());
  }
  if (!doc.is_object() || !doc.contains("atoms") || !doc["atoms"].is_array() ||
      doc["atoms"].empty()) {
    throw std::invalid_argument(name + ": expected an object with a nonempty 'atoms' array");
  }
  double delta = doc.value("delta", 0.01);
  std::vector<Atom> atoms;
  std::vector<double> masses;
  std::size_t index = 0;
  for (const auto& entry : doc["atoms"]) {
    if (!entry.is_object() || !entry.contains("l") || !entry.contains("a") ||
        !entry.contains("y") || !entry.contains("p")) {
      throw std::invalid_argument(name + ": atom " + std::to_string(index) +
                                  " must have fields l, a, y, p");
    }
    Atom z;
    const auto& lv = entry["l"];
    if (!lv.is_array()) {
      throw std::invalid_argument(name + ": atom " + std::to_string(index) +
                                  ": field 'l' must be an array");
    }
    z.l.resize(static_cast<Eigen::Index>(lv.size()));
    for (std::size_t j = 0; j < lv.size(); ++j) {
      z.l[static_cast<Eigen::Index>(j)] = lv[j].get<double>();
    }
    z.a = entry["a"].get<int>();
    z.y = entry["y"].get<double>();
    atoms.push_back(std::move(z));
    masses.push_back(entry["p"].get<double>());
    ++index;
  }
  return DiscreteDistribution(std::move(atoms), std::move(masses), delta);
}

DiscreteDistribution DiscreteDistribution::read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("DiscreteDistribution: cannot open '" + path + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str(), path);
}

std::string DiscreteDistribution::to_json() const {
  JsonWriter w;
  w.begin_object();
  w.key("atoms").begin_array();
  for (std::size_t i = 0; i < atoms_.size(); ++i) {
    w.begin_object();
    w.key("l").begin_array();
    for (Eigen::Index j = 0; j < atoms_[i].l.size(); ++j) w.value(atoms_[i].l[j]);
    w.end_array();
    w.key("a").value(static_cast<long>(atoms_[i].a));
    w.key("y").value(atoms_[i].y);
    w.key("p").value(masses_[i]);
    w.end_object();
  }
  w.end_array();
  w.key("delta").value(delta_);
  w.end_object();
  return w.str();
}

}  // namespace semicausal
