#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "semicausal/errors.hpp"
#include "semicausal/estimators.hpp"
#include "semicausal/inference.hpp"
#include "semicausal/math.hpp"
#include "semicausal/rng.hpp"
#include "semicausal/simulation.hpp"

using namespace semicausal;

TEST_CASE("normal_quantile against frozen high-precision values") {
  // reference values from an independent 30-digit evaluation
  struct Case {
    double p;
    double z;
  };
  const Case cases[] = {
      {0.975, 1.959963984540054235525},  {0.95, 1.644853626951472714864},
      {0.995, 2.575829303548900760979},  {0.9, 1.281551565544600466965},
      {0.1, -1.281551565544600466965},   {0.5, 0.0},
      {0.025, -1.959963984540054235525}, {0.75, 0.6744897501960817432022},
      {0.0001, -3.719016485455680564394}, {0.9999, 3.719016485455680564394},
      {0.6, 0.2533471031357997987982}};
  for (const auto& c : cases) {
    CHECK(std::abs(normal_quantile(c.p) - c.z) < 1e-9);
  }
  CHECK_THROWS_AS(normal_quantile(0.0), std::domain_error);
  CHECK_THROWS_AS(normal_quantile(1.0), std::domain_error);
}

TEST_CASE("if_standard_error") {
  SUBCASE("degenerate all-zero values") {
    CHECK(if_standard_error(Eigen::VectorXd::Zero(5)) == 0.0);
  }
  SUBCASE("two values +-1") {
    Eigen::VectorXd phi(2);
    phi << 1.0, -1.0;
    CHECK(if_standard_error(phi) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
  }
  SUBCASE("seeded values match a direct compensated computation") {
    Rng rng(314);
    Eigen::VectorXd phi(100);
    for (Eigen::Index i = 0; i < phi.size(); ++i) phi[i] = rng.normal();
    phi.array() -= phi.mean();
    long double ss = 0.0L;
    for (Eigen::Index i = 0; i < phi.size(); ++i) {
      ss += static_cast<long double>(phi[i]) * phi[i];
    }
    double direct = std::sqrt(static_cast<double>(ss / (100.0L * 100.0L)));
    CHECK(if_standard_error(phi) == doctest::Approx(direct).epsilon(1e-14));
  }
  SUBCASE("needs two values") {
    CHECK_THROWS_AS(if_standard_error(Eigen::VectorXd::Zero(1)), std::invalid_argument);
  }
  SUBCASE("scale equivariance") {
    Rng rng(11);
    Eigen::VectorXd phi(40);
    for (Eigen::Index i = 0; i < phi.size(); ++i) phi[i] = rng.normal();
    const double base = if_standard_error(phi);
    for (double c : {2.0, -3.5, 0.25}) {
      CHECK(if_standard_error((c * phi).eval()) ==
            doctest::Approx(std::abs(c) * base).epsilon(1e-13));
    }
  }
}

TEST_CASE("wald_interval") {
  SUBCASE("zero se degenerates to a point") {
    ConfidenceInterval ci = wald_interval(1.5, 0.0, 0.95);
    CHECK(ci.lower == 1.5);
    CHECK(ci.upper == 1.5);
  }
  SUBCASE("half-width at 95% is the frozen z value") {
    ConfidenceInterval ci = wald_interval(0.0, 1.0, 0.95);
    CHECK(std::abs(ci.upper - 1.959963984540054) < 1e-9);
    CHECK(std::abs(ci.lower + 1.959963984540054) < 1e-9);
  }
  SUBCASE("widths increase strictly with the level") {
    double prev = 0.0;
    for (double level : {0.90, 0.95, 0.99}) {
      ConfidenceInterval ci = wald_interval(0.3, 0.7, level);
      const double width = ci.upper - ci.lower;
      CHECK(width > prev);
      prev = width;
    }
  }
  SUBCASE("contains psi_hat for any nonnegative se") {
    Rng rng(5);
    for (int trial = 0; trial < 25; ++trial) {
      const double psi = 10.0 * rng.uniform01() - 5.0;
      const double se = 3.0 * rng.uniform01();
      ConfidenceInterval ci = wald_interval(psi, se, 0.5 + 0.49 * rng.uniform01());
      CHECK(ci.lower <= psi);
      CHECK(psi <= ci.upper);
    }
  }
  SUBCASE("domain errors") {
    CHECK_THROWS_AS(wald_interval(0.0, 1.0, 0.0), std::domain_error);
    CHECK_THROWS_AS(wald_interval(0.0, 1.0, 1.0), std::domain_error);
    CHECK_THROWS_AS(wald_interval(0.0, -0.1, 0.95), std::invalid_argument);
  }
}

TEST_CASE("sandwich_stacked on the scalar mean problem") {
  DGPSpec spec;
  Dataset data = spec.sample(60, 123);
  StackedFunction m = [](const Atom& z, const Eigen::VectorXd& theta) {
    Eigen::VectorXd out(1);
    out[0] = z.y - theta[0];
    return out;
  };
  Eigen::VectorXd theta(1);
  theta[0] = data.outcome().mean();
  Eigen::MatrixXd influence = sandwich_stacked(data, m, theta);
  REQUIRE(influence.rows() == data.size());
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    CHECK(influence(i, 0) == doctest::Approx(data.outcome()[i] - theta[0]).epsilon(1e-9));
  }
}

TEST_CASE("sandwich_stacked preconditions") {
  DGPSpec spec;
  Dataset data = spec.sample(50, 9);
  StackedFunction m = [](const Atom& z, const Eigen::VectorXd& theta) {
    Eigen::VectorXd out(1);
    out[0] = z.y - theta[0];
    return out;
  };
  Eigen::VectorXd off(1);
  off[0] = data.outcome().mean() + 0.5;  // equation visibly unsolved
  CHECK_THROWS_AS(sandwich_stacked(data, m, off), std::invalid_argument);

  StackedFunction degenerate = [](const Atom&, const Eigen::VectorXd&) {
    return Eigen::VectorXd::Zero(1);
  };
  Eigen::VectorXd theta(1);
  theta[0] = 0.0;
  CHECK_THROWS_AS(sandwich_stacked(data, degenerate, theta), SingularDesignError);
}

TEST_CASE("sandwich_stacked on the IPW + logistic stack") {
  DGPSpec spec;
  Dataset data = spec.sample(400, 321);
  IpwLogisticStack stack = make_ipw_logistic_stack(data, linear_features());

  Eigen::MatrixXd analytic = sandwich_stacked(data, stack.m, stack.theta_hat, stack.jacobian);
  Eigen::MatrixXd numeric = sandwich_stacked(data, stack.m, stack.theta_hat);

  SUBCASE("analytic and numeric Jacobian routes agree") {
    CHECK((analytic - numeric).cwiseAbs().maxCoeff() < 1e-5);
  }

  SUBCASE("first component reproduces the closed-form corrected influence values") {
    EstimateReport report = ipw_estimated_parametric(data, linear_features());
    CHECK(report.psi_hat == doctest::Approx(stack.theta_hat[0]).epsilon(1e-12));
    CHECK((analytic.col(0) - report.influence).cwiseAbs().maxCoeff() < 1e-8);
  }

  SUBCASE("linear reparameterization scales influence values accordingly") {
    // m'(z; theta) = m(z; theta / 2) is solved at 2 * theta_hat; influence
    // values double, so the estimator of the original first component keeps
    // its standard error.
    StackedFunction m2 = [&stack](const Atom& z, const Eigen::VectorXd& theta) {
      return stack.m(z, (theta / 2.0).eval());
    };
    Eigen::MatrixXd doubled = sandwich_stacked(data, m2, (2.0 * stack.theta_hat).eval());
    CHECK((doubled.col(0) - 2.0 * numeric.col(0)).cwiseAbs().maxCoeff() < 1e-6);
  }
}
