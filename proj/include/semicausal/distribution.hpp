#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "semicausal/dataset.hpp"

namespace semicausal {

// Finite-support distribution over z = (l, a, y) with exact atom masses.
// This is the oracle measure P: expectations, the identified target and the
// true nuisance functions are all computed by finite summation.
//
// Invariants enforced at construction: masses nonnegative and summing to 1
// (renormalized when the drift is <= 1e-9, rejected otherwise), atoms unique,
// and P(A=1 | L=l) in [delta, 1-delta] for every covariate level with
// positive mass.
class DiscreteDistribution {
 public:
  struct Level {
    Eigen::VectorXd l;
    double prob = 0.0;         // P(L = l)
    double propensity = 0.0;   // P(A = 1 | L = l)
    double mean_y[2] = {0.0, 0.0};  // E(Y | L = l, A = a)
  };

  DiscreteDistribution(std::vector<Atom> atoms, std::vector<double> masses, double delta = 0.01);

  std::size_t size() const { return atoms_.size(); }
  const Atom& atom(std::size_t i) const { return atoms_[i]; }
  double mass(std::size_t i) const { return masses_[i]; }
  const std::vector<double>& masses() const { return masses_; }
  double delta() const { return delta_; }
  Eigen::Index dim() const { return atoms_.front().l.size(); }

  const std::vector<Level>& levels() const { return levels_; }
  const Level& level_of(const Eigen::VectorXd& l) const;
  double true_propensity(const Eigen::VectorXd& l) const { return level_of(l).propensity; }
  double true_outcome_mean(const Eigen::VectorXd& l, int a) const;

  static DiscreteDistribution from_json_text(const std::string& text, const std::string& name);
  static DiscreteDistribution read_json(const std::string& path);
  std::string to_json() const;

 private:
  std::vector<Atom> atoms_;
  std::vector<double> masses_;
  double delta_;
  std::vector<Level> levels_;
  std::map<std::vector<double>, std::size_t> level_index_;
};

// Exact P-expectation: sum over atoms of mass * f(atom).
double exact_mean(const ZFunction& f, const DiscreteDistribution& dist);

// The identified target: sum_l P(l) {E(Y|l,1) - E(Y|l,0)}.
double true_ate(const DiscreteDistribution& dist);

// n i.i.d. draws from the atom masses; deterministic given the seed.
Dataset sample(const DiscreteDistribution& dist, Eigen::Index n, std::uint64_t seed);

}  // namespace semicausal
