#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "semicausal/errors.hpp"
#include "semicausal/nuisance.hpp"
#include "semicausal/simulation.hpp"

using namespace semicausal;

namespace {

Dataset toy_dataset(std::vector<double> ls, std::vector<double> as, std::vector<double> ys) {
  const auto n = static_cast<Eigen::Index>(ls.size());
  Eigen::MatrixXd cov(n, 1);
  Eigen::VectorXd trt(n), out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    cov(i, 0) = ls[static_cast<std::size_t>(i)];
    trt[i] = as[static_cast<std::size_t>(i)];
    out[i] = ys[static_cast<std::size_t>(i)];
  }
  return Dataset(std::move(cov), std::move(trt), std::move(out));
}

double loglik(const Dataset& data, double b0, double b1) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const double eta = b0 + b1 * data.covariates()(i, 0);
    const double p = 1.0 / (1.0 + std::exp(-eta));
    ll += data.treatment()[i] == 1.0 ? std::log(p) : std::log(1.0 - p);
  }
  return ll;
}

Eigen::VectorXd query1(double l) {
  Eigen::VectorXd v(1);
  v[0] = l;
  return v;
}

}  // namespace

TEST_CASE("truncate_propensity") {
  CHECK(truncate_propensity(0.5, 0.01) == 0.5);
  CHECK(truncate_propensity(0.0, 0.01) == 0.01);
  CHECK(truncate_propensity(1.0, 0.025) == 0.975);
  CHECK_THROWS_AS(truncate_propensity(0.5, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(truncate_propensity(0.5, 0.6), std::invalid_argument);
}

TEST_CASE("fit_logistic") {
  SUBCASE("intercept-only model recovers the marginal treatment rate") {
    Dataset data = toy_dataset({1, 2, 3, 4, 5, 6, 7, 8}, {1, 0, 1, 1, 0, 1, 0, 1},
                               {0, 0, 0, 0, 0, 0, 0, 0});
    PropensityFit fit = fit_logistic(data, intercept_only_features());
    const double rate = data.treatment().mean();
    for (double l : {0.0, 3.0, 100.0}) {
      CHECK(fit.predict(query1(l)) == doctest::Approx(rate).epsilon(1e-9));
    }
  }
  SUBCASE("symmetric data gives a zero slope") {
    // every (l, a) row is mirrored by (-l, a): the likelihood is symmetric in
    // the slope's sign, so the maximizer has slope zero
    Dataset data = toy_dataset({1, -1, 2, -2, 0.5, -0.5, 1.5, -1.5},
                               {1, 1, 0, 0, 1, 1, 0, 0}, {0, 0, 0, 0, 0, 0, 0, 0});
    PropensityFit fit = fit_logistic(data, linear_features());
    REQUIRE(fit.coef().size() == 2);
    CHECK(std::abs(fit.coef()[1]) < 1e-7);
  }
  SUBCASE("20-row fit matches a nested grid search of the log-likelihood") {
    DGPSpec spec;
    Dataset data = spec.sample(20, 77);
    PropensityFit fit = fit_logistic(data, linear_features());

    double best0 = 0.0, best1 = 0.0;
    double step = 0.2;
    double lo0 = -4.0, hi0 = 4.0, lo1 = -4.0, hi1 = 4.0;
    for (int refine = 0; refine < 3; ++refine) {
      double best = -std::numeric_limits<double>::infinity();
      for (double b0 = lo0; b0 <= hi0 + 1e-12; b0 += step) {
        for (double b1 = lo1; b1 <= hi1 + 1e-12; b1 += step) {
          const double ll = loglik(data, b0, b1);
          if (ll > best) {
            best = ll;
            best0 = b0;
            best1 = b1;
          }
        }
      }
      lo0 = best0 - step;
      hi0 = best0 + step;
      lo1 = best1 - step;
      hi1 = best1 + step;
      step /= 20.0;  // final resolution 5e-4 < 1e-3
    }
    CHECK(std::abs(fit.coef()[0] - best0) < 1e-3);
    CHECK(std::abs(fit.coef()[1] - best1) < 1e-3);
  }
  SUBCASE("empirical score vanishes at convergence") {
    DGPSpec spec;
    Dataset data = spec.sample(300, 5);
    PropensityFit fit = fit_logistic(data, linear_features());
    Eigen::Vector2d score = Eigen::Vector2d::Zero();
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      Eigen::Vector2d x(1.0, data.covariates()(i, 0));
      score += (data.treatment()[i] - fit.predict(data.covariates().row(i).transpose())) * x;
    }
    score /= static_cast<double>(data.size());
    CHECK(score.cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("complete separation is detected") {
    Dataset data = toy_dataset({-3, -2, -1, 1, 2, 3}, {0, 0, 0, 1, 1, 1}, {0, 0, 0, 0, 0, 0});
    CHECK_THROWS_AS(fit_logistic(data, linear_features()), SeparationError);
  }
  SUBCASE("rank-deficient design is rejected") {
    Dataset data = toy_dataset({1, 1, 1, 1}, {0, 1, 0, 1}, {0, 0, 0, 0});
    FeatureMap dup = [](const Eigen::VectorXd& l) {
      Eigen::VectorXd x(3);
      x << 1.0, l[0], l[0];
      return x;
    };
    CHECK_THROWS_AS(fit_logistic(data, dup), SingularDesignError);
  }
  SUBCASE("refits are bit-for-bit deterministic") {
    DGPSpec spec;
    Dataset data = spec.sample(150, 8);
    PropensityFit a = fit_logistic(data, linear_features());
    PropensityFit b = fit_logistic(data, linear_features());
    for (double l : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
      CHECK(a.predict(query1(l)) == b.predict(query1(l)));
    }
  }
  SUBCASE("iteration cap raises a non-convergence error carrying the last iterate") {
    DGPSpec spec;
    Dataset data = spec.sample(100, 9);
    LogisticConfig strict;
    strict.max_iterations = 1;
    try {
      fit_logistic(data, linear_features(), strict);
      FAIL("expected non-convergence");
    } catch (const NonConvergenceError& e) {
      CHECK(e.last_iterate.size() == 2);
      CHECK(e.last_iterate.allFinite());
    }
  }
}

TEST_CASE("fit_outcome_linear") {
  SUBCASE("constant outcome in both arms") {
    Dataset data = toy_dataset({1, 2, 3, 4}, {0, 1, 0, 1}, {3.5, 3.5, 3.5, 3.5});
    OutcomeFit fit = fit_outcome_linear(data, linear_features());
    for (double l : {0.0, 1.0, 9.0}) {
      CHECK(fit.predict(query1(l), 0) == doctest::Approx(3.5).epsilon(1e-12));
      CHECK(fit.predict(query1(l), 1) == doctest::Approx(3.5).epsilon(1e-12));
    }
  }
  SUBCASE("two points per arm interpolate exactly") {
    Dataset data = toy_dataset({0, 1, 0, 1}, {0, 0, 1, 1}, {1.0, 3.0, -1.0, 0.5});
    OutcomeFit fit = fit_outcome_linear(data, linear_features());
    CHECK(fit.predict(query1(0), 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fit.predict(query1(1), 0) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(fit.predict(query1(0), 1) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(fit.predict(query1(1), 1) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("50-row fit matches an independent normal-equations solve") {
    DGPSpec spec;
    Dataset data = spec.sample(50, 21);
    OutcomeFit fit = fit_outcome_linear(data, linear_features());
    for (int arm = 0; arm < 2; ++arm) {
      // Gaussian elimination on X'X beta = X'y, written out by hand
      double xtx[2][2] = {{0, 0}, {0, 0}};
      double xty[2] = {0, 0};
      for (Eigen::Index i = 0; i < data.size(); ++i) {
        if (data.treatment_at(i) != arm) continue;
        const double x[2] = {1.0, data.covariates()(i, 0)};
        for (int r = 0; r < 2; ++r) {
          for (int c = 0; c < 2; ++c) xtx[r][c] += x[r] * x[c];
          xty[r] += x[r] * data.outcome()[i];
        }
      }
      const double ratio = xtx[1][0] / xtx[0][0];
      const double denom = xtx[1][1] - ratio * xtx[0][1];
      const double beta1 = (xty[1] - ratio * xty[0]) / denom;
      const double beta0 = (xty[0] - xtx[0][1] * beta1) / xtx[0][0];
      CHECK(fit.predict(query1(0.0), arm) == doctest::Approx(beta0).epsilon(1e-10));
      CHECK(fit.predict(query1(1.0), arm) == doctest::Approx(beta0 + beta1).epsilon(1e-10));
    }
  }
  SUBCASE("per-arm residuals are orthogonal to the design") {
    DGPSpec spec;
    Dataset data = spec.sample(120, 31);
    OutcomeFit fit = fit_outcome_linear(data, linear_features());
    for (int arm = 0; arm < 2; ++arm) {
      double inner0 = 0.0, inner1 = 0.0;
      for (Eigen::Index i = 0; i < data.size(); ++i) {
        if (data.treatment_at(i) != arm) continue;
        const double r = data.outcome()[i] - fit.predict(data.covariates().row(i).transpose(), arm);
        inner0 += r;
        inner1 += r * data.covariates()(i, 0);
      }
      CHECK(std::abs(inner0) < 1e-8 * static_cast<double>(data.size()));
      CHECK(std::abs(inner1) < 1e-8 * static_cast<double>(data.size()));
    }
  }
  SUBCASE("an arm with too few rows is rejected") {
    Dataset data = toy_dataset({1, 2, 3}, {0, 0, 1}, {1, 2, 3});
    CHECK_THROWS_AS(fit_outcome_linear(data, linear_features()), std::invalid_argument);
  }
  SUBCASE("rank-deficient arm design is rejected") {
    Dataset data = toy_dataset({2, 2, 2, 2}, {0, 0, 1, 1}, {1, 2, 3, 4});
    CHECK_THROWS_AS(fit_outcome_linear(data, linear_features()), SingularDesignError);
  }
}

TEST_CASE("fit_outcome_kernel") {
  SUBCASE("constant outcome for any bandwidth") {
    Dataset data = toy_dataset({0, 1, 2, 3}, {0, 1, 0, 1}, {2.0, 2.0, 2.0, 2.0});
    for (double bw : {0.1, 1.0, 50.0}) {
      OutcomeFit fit = fit_outcome_kernel(data, bw);
      CHECK(fit.predict(query1(1.3), 0) == doctest::Approx(2.0).epsilon(1e-12));
      CHECK(fit.predict(query1(1.3), 1) == doctest::Approx(2.0).epsilon(1e-12));
    }
  }
  SUBCASE("bandwidth to infinity approaches the arm mean") {
    DGPSpec spec;
    Dataset data = spec.sample(60, 13);
    OutcomeFit fit = fit_outcome_kernel(data, 1e6);
    double mean[2] = {0, 0};
    long count[2] = {0, 0};
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      mean[data.treatment_at(i)] += data.outcome()[i];
      ++count[data.treatment_at(i)];
    }
    for (int arm = 0; arm < 2; ++arm) {
      CHECK(fit.predict(query1(0.37), arm) ==
            doctest::Approx(mean[arm] / count[arm]).epsilon(1e-8));
    }
  }
  SUBCASE("bandwidth 0.5 matches the direct double-loop computation") {
    DGPSpec spec;
    Dataset data = spec.sample(30, 44);
    const double bw = 0.5;
    OutcomeFit fit = fit_outcome_kernel(data, bw);

    // independent standardization and weighted mean
    double mean = data.covariates().col(0).mean();
    double var = 0.0;
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      var += (data.covariates()(i, 0) - mean) * (data.covariates()(i, 0) - mean);
    }
    var /= static_cast<double>(data.size());
    const double sd = std::sqrt(var);
    for (double q : {-1.0, -0.25, 0.0, 0.6, 1.0}) {
      for (int arm = 0; arm < 2; ++arm) {
        double wsum = 0.0, wy = 0.0;
        for (Eigen::Index i = 0; i < data.size(); ++i) {
          if (data.treatment_at(i) != arm) continue;
          const double dz = (q - mean) / sd - (data.covariates()(i, 0) - mean) / sd;
          const double w = std::exp(-0.5 * dz * dz / (bw * bw));
          wsum += w;
          wy += w * data.outcome()[i];
        }
        CHECK(fit.predict(query1(q), arm) == doctest::Approx(wy / wsum).epsilon(1e-12));
      }
    }
  }
  SUBCASE("vanished weights fall back to the arm mean and are flagged") {
    Dataset data = toy_dataset({0, 0.001, 1, 1.001}, {0, 1, 0, 1}, {1.0, 2.0, 3.0, 4.0});
    OutcomeFit fit = fit_outcome_kernel(data, 1e-3);
    CHECK(fit.fallback_count() == 0);
    const double far = fit.predict(query1(1e9), 0);
    CHECK(far == doctest::Approx(2.0));  // arm-0 mean of {1, 3}
    CHECK(fit.fallback_count() == 1);
  }
  SUBCASE("bandwidth and arm preconditions") {
    Dataset data = toy_dataset({0, 1}, {0, 1}, {1.0, 2.0});
    CHECK_THROWS_AS(fit_outcome_kernel(data, 0.0), std::invalid_argument);
    Dataset one_arm = toy_dataset({0, 1}, {1, 1}, {1.0, 2.0});
    CHECK_THROWS_AS(fit_outcome_kernel(one_arm, 0.5), std::invalid_argument);
  }
}

TEST_CASE("make_folds balances sizes and is deterministic") {
  auto folds = make_folds(103, 5, 42);
  REQUIRE(folds.size() == 103);
  std::vector<int> counts(5, 0);
  for (int f : folds) {
    REQUIRE(f >= 0);
    REQUIRE(f < 5);
    ++counts[static_cast<std::size_t>(f)];
  }
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  CHECK(*hi - *lo <= 1);
  CHECK(folds == make_folds(103, 5, 42));
  CHECK(folds != make_folds(103, 5, 43));
  CHECK_THROWS_AS(make_folds(10, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(make_folds(3, 5, 0), std::invalid_argument);
}

TEST_CASE("simplex_least_squares") {
  SUBCASE("single column collapses to weight one") {
    Eigen::MatrixXd preds(4, 1);
    preds << 1, 2, 3, 4;
    Eigen::VectorXd target(4);
    target << 1.1, 2.2, 2.9, 4.4;
    Eigen::VectorXd w = simplex_least_squares(preds, target);
    REQUIRE(w.size() == 1);
    CHECK(w[0] == 1.0);
  }
  SUBCASE("weights stay on the simplex") {
    Rng rng(17);
    Eigen::MatrixXd preds(50, 4);
    Eigen::VectorXd target(50);
    for (Eigen::Index i = 0; i < 50; ++i) {
      for (Eigen::Index j = 0; j < 4; ++j) preds(i, j) = rng.normal();
      target[i] = rng.normal();
    }
    Eigen::VectorXd w = simplex_least_squares(preds, target);
    CHECK(w.minCoeff() >= 0.0);
    CHECK(std::abs(w.sum() - 1.0) < 1e-10);
  }
}

TEST_CASE("ensembles") {
  DGPSpec spec;
  Dataset data = spec.sample(200, 55);

  OutcomeLearner ols = [](const Dataset& d) { return fit_outcome_linear(d, linear_features()); };
  OutcomeLearner ols_flat = [](const Dataset& d) {
    return fit_outcome_linear(d, intercept_only_features());
  };
  OutcomeLearner kern = [](const Dataset& d) { return fit_outcome_kernel(d, 0.8); };

  SUBCASE("single candidate: weight one and predictions equal the refit") {
    EnsembleInfo info;
    OutcomeFit ens = fit_outcome_ensemble(data, {ols}, 5, 7, &info);
    REQUIRE(info.weights.size() == 1);
    CHECK(info.weights[0] == 1.0);
    OutcomeFit direct = ols(data);
    for (double q : {-1.0, 0.0, 0.5}) {
      CHECK(ens.predict(query1(q), 1) == direct.predict(query1(q), 1));
    }
  }
  SUBCASE("identical candidates: predictions equal either, whatever the split") {
    OutcomeFit ens = fit_outcome_ensemble(data, {ols, ols}, 5, 7);
    OutcomeFit direct = ols(data);
    for (double q : {-1.0, -0.3, 0.2, 1.0}) {
      CHECK(ens.predict(query1(q), 0) == doctest::Approx(direct.predict(query1(q), 0)).epsilon(1e-13));
    }
  }
  SUBCASE("three candidates: solved weights beat a 0.01-step simplex grid") {
    EnsembleInfo info;
    fit_outcome_ensemble(data, {ols, ols_flat, kern}, 5, 7, &info);
    REQUIRE(info.weights.size() == 3);
    CHECK(info.weights.minCoeff() >= 0.0);
    CHECK(std::abs(info.weights.sum() - 1.0) < 1e-10);

    // rebuild the cross-validated prediction columns exactly as the stack does
    auto folds = make_folds(data.size(), 5, 7);
    std::vector<OutcomeLearner> cands{ols, ols_flat, kern};
    Eigen::MatrixXd preds(data.size(), 3);
    for (int f = 0; f < 5; ++f) {
      std::vector<Eigen::Index> train, test;
      for (Eigen::Index i = 0; i < data.size(); ++i) {
        (folds[static_cast<std::size_t>(i)] == f ? test : train).push_back(i);
      }
      Eigen::MatrixXd cov(train.size(), 1);
      Eigen::VectorXd trt(train.size()), out(train.size());
      for (std::size_t r = 0; r < train.size(); ++r) {
        cov(static_cast<Eigen::Index>(r), 0) = data.covariates()(train[r], 0);
        trt[static_cast<Eigen::Index>(r)] = data.treatment()[train[r]];
        out[static_cast<Eigen::Index>(r)] = data.outcome()[train[r]];
      }
      Dataset sub(cov, trt, out);
      for (int c = 0; c < 3; ++c) {
        OutcomeFit fit = cands[static_cast<std::size_t>(c)](sub);
        for (Eigen::Index i : test) {
          preds(i, c) = fit.predict(data.covariates().row(i).transpose(), data.treatment_at(i));
        }
      }
    }
    auto risk = [&](double w0, double w1, double w2) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < data.size(); ++i) {
        const double pred = w0 * preds(i, 0) + w1 * preds(i, 1) + w2 * preds(i, 2);
        s += (data.outcome()[i] - pred) * (data.outcome()[i] - pred);
      }
      return s / static_cast<double>(data.size());
    };
    double grid_best = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 100; ++i) {
      for (int j = 0; j + i <= 100; ++j) {
        grid_best = std::min(grid_best, risk(i / 100.0, j / 100.0, (100 - i - j) / 100.0));
      }
    }
    CHECK(info.cv_risk <= grid_best + 1e-6);

    // and no retained candidate beats the stacked weights
    for (int c = 0; c < 3; ++c) {
      double vertex = risk(c == 0, c == 1, c == 2);
      CHECK(info.cv_risk <= vertex + 1e-10);
    }
  }
  SUBCASE("failing candidates are dropped; all failing is an error") {
    OutcomeLearner broken = [](const Dataset&) -> OutcomeFit {
      throw std::runtime_error("broken learner");
    };
    EnsembleInfo info;
    OutcomeFit ens = fit_outcome_ensemble(data, {broken, ols}, 5, 7, &info);
    REQUIRE(info.dropped.size() == 1);
    CHECK(info.dropped[0] == 0);
    OutcomeFit direct = ols(data);
    CHECK(ens.predict(query1(0.1), 1) == direct.predict(query1(0.1), 1));
    CHECK_THROWS_AS(fit_outcome_ensemble(data, {broken, broken}, 5, 7), std::runtime_error);
  }
  SUBCASE("propensity ensemble truncates to [delta, 1-delta]") {
    PropensityLearner lg = [](const Dataset& d) { return fit_logistic(d, linear_features()); };
    PropensityLearner flat = [](const Dataset& d) {
      return fit_logistic(d, intercept_only_features());
    };
    EnsembleInfo info;
    PropensityFit ens = fit_propensity_ensemble(data, {lg, flat}, 5, 7, 0.25, &info);
    CHECK(info.weights.minCoeff() >= 0.0);
    CHECK(std::abs(info.weights.sum() - 1.0) < 1e-10);
    for (double q : {-1.0, 0.0, 1.0}) {
      const double p = ens.predict(query1(q));
      CHECK(p >= 0.25);
      CHECK(p <= 0.75);
    }
  }
}

TEST_CASE("kernel and ensemble predictions are refit-deterministic") {
  DGPSpec spec;
  Dataset data = spec.sample(120, 66);
  OutcomeFit k1 = fit_outcome_kernel(data, 0.7);
  OutcomeFit k2 = fit_outcome_kernel(data, 0.7);
  OutcomeLearner ols = [](const Dataset& d) { return fit_outcome_linear(d, linear_features()); };
  OutcomeLearner flat = [](const Dataset& d) {
    return fit_outcome_linear(d, intercept_only_features());
  };
  OutcomeFit e1 = fit_outcome_ensemble(data, {ols, flat}, 4, 3);
  OutcomeFit e2 = fit_outcome_ensemble(data, {ols, flat}, 4, 3);
  for (double q : {-0.8, 0.0, 0.9}) {
    CHECK(k1.predict(query1(q), 1) == k2.predict(query1(q), 1));
    CHECK(e1.predict(query1(q), 0) == e2.predict(query1(q), 0));
  }
}

TEST_CASE("silverman_bandwidth shrinks with n and with kappa") {
  DGPSpec spec;
  Dataset small = spec.sample(50, 3);
  Dataset large = spec.sample(5000, 3);
  CHECK(silverman_bandwidth(large) < silverman_bandwidth(small));
  CHECK(silverman_bandwidth(large, 0.2) < silverman_bandwidth(large, 0.0));
}
