#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>
#include <utility>

namespace semicausal {

// Design matrix rank-deficient (or an empirical Jacobian/Gram singular).
struct SingularDesignError : std::runtime_error {
  explicit SingularDesignError(const std::string& what) : std::runtime_error(what) {}
};

// Complete separation detected during a logistic fit.
struct SeparationError : std::runtime_error {
  explicit SeparationError(const std::string& what) : std::runtime_error(what) {}
};

// Iteration cap reached; carries the last iterate.
struct NonConvergenceError : std::runtime_error {
  NonConvergenceError(const std::string& what, Eigen::VectorXd iterate)
      : std::runtime_error(what), last_iterate(std::move(iterate)) {}
  Eigen::VectorXd last_iterate;
};

// Condition (C3) violated: a propensity left [delta, 1-delta].
struct PositivityError : std::domain_error {
  explicit PositivityError(const std::string& what) : std::domain_error(what) {}
};

}  // namespace semicausal
