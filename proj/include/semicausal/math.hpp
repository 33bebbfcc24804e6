#pragma once

#include <cmath>

namespace semicausal {

// Standard-normal quantile, rational (Acklam-style) approximation polished
// with one Halley step; absolute error below 1e-9 on (0,1).
// Throws std::domain_error outside (0,1).
double normal_quantile(double p);

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.70710678118654752440); }

// Compensated (Kahan) accumulator; keeps long reductions order-stable.
class KahanSum {
 public:
  void add(double x) {
    double y = x - carry_;
    double t = sum_ + y;
    carry_ = (t - sum_) - y;
    sum_ = t;
  }
  double value() const { return sum_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

}  // namespace semicausal
