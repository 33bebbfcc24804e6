#pragma once

#include <cstdint>
#include <vector>

#include "semicausal/distribution.hpp"
#include "semicausal/rng.hpp"

namespace testutil {

inline semicausal::Atom atom1(double l, int a, double y) {
  Eigen::VectorXd lv(1);
  lv[0] = l;
  return semicausal::Atom{lv, a, y};
}

// Random base with 2 covariate levels, both arms and 3 outcome values per
// (l, a) cell; propensities drawn inside [0.2, 0.8] so (C3) holds with the
// default delta. Masses come from the factorization p(l) p(a|l) p(y|l,a).
inline semicausal::DiscreteDistribution random_base(std::uint64_t seed) {
  semicausal::Rng rng(seed);
  const double levels[2] = {0.0, 1.0};
  const double ys[3] = {-1.0, 0.5, 2.0};
  const double pl0 = 0.2 + 0.6 * rng.uniform01();
  std::vector<semicausal::Atom> atoms;
  std::vector<double> masses;
  for (int li = 0; li < 2; ++li) {
    const double pl = li == 0 ? pl0 : 1.0 - pl0;
    const double prop = 0.2 + 0.6 * rng.uniform01();
    for (int a = 0; a < 2; ++a) {
      const double pa = a == 1 ? prop : 1.0 - prop;
      double w[3];
      double total = 0.0;
      for (double& v : w) {
        v = 0.1 + rng.uniform01();
        total += v;
      }
      for (int yi = 0; yi < 3; ++yi) {
        atoms.push_back(atom1(levels[li], a, ys[yi]));
        masses.push_back(pl * pa * w[yi] / total);
      }
    }
  }
  return semicausal::DiscreteDistribution(std::move(atoms), std::move(masses), 0.01);
}

}  // namespace testutil
