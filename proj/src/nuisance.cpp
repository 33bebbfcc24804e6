#include "semicausal/nuisance.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "semicausal/rng.hpp"

namespace semicausal {

FeatureMap intercept_only_features() {
  return [](const Eigen::VectorXd&) {
    Eigen::VectorXd x(1);
    x[0] = 1.0;
    return x;
  };
}

FeatureMap linear_features() {
  return [](const Eigen::VectorXd& l) {
    Eigen::VectorXd x(l.size() + 1);
    x[0] = 1.0;
    x.tail(l.size()) = l;
    return x;
  };
}

double truncate_propensity(double p, double delta) {
  if (!(delta > 0.0 && delta < 0.5)) {
    throw std::invalid_argument("truncate_propensity: delta must lie in (0, 0.5)");
  }
  return std::min(std::max(p, delta), 1.0 - delta);
}

PropensityFit::PropensityFit(std::function<double(const Eigen::VectorXd&)> raw, std::string method,
                             double delta, Eigen::VectorXd coef)
    : raw_(std::move(raw)), method_(std::move(method)), delta_(delta), coef_(std::move(coef)) {
  if (!(delta_ > 0.0 && delta_ < 0.5)) {
    throw std::invalid_argument("PropensityFit: delta must lie in (0, 0.5)");
  }
  if (!raw_) {
    throw std::invalid_argument("PropensityFit: predictor is empty");
  }
}

OutcomeFit::OutcomeFit(std::function<double(const Eigen::VectorXd&, int)> fn, std::string method)
    : fn_(std::move(fn)), method_(std::move(method)) {
  if (!fn_) {
    throw std::invalid_argument("OutcomeFit: predictor is empty");
  }
}

namespace {

Eigen::MatrixXd design_matrix(const Dataset& data, const FeatureMap& features) {
  Eigen::VectorXd first = features(data.covariates().row(0).transpose());
  Eigen::MatrixXd design(data.size(), first.size());
  design.row(0) = first.transpose();
  for (Eigen::Index i = 1; i < data.size(); ++i) {
    design.row(i) = features(data.covariates().row(i).transpose()).transpose();
  }
  return design;
}

void require_full_rank(const Eigen::MatrixXd& design, const std::string& who) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < design.cols()) {
    throw SingularDesignError(who + ": design matrix is rank deficient (rank " +
                              std::to_string(qr.rank()) + " of " + std::to_string(design.cols()) +
                              " columns)");
  }
}

inline double logistic(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

}  // namespace

PropensityFit fit_logistic(const Dataset& data, const FeatureMap& features,
                           const LogisticConfig& config) {
  const Eigen::Index n = data.size();
  Eigen::MatrixXd design = design_matrix(data, features);
  const Eigen::Index p = design.cols();
  if (n < p) {
    throw std::invalid_argument("fit_logistic: fewer rows than features");
  }
  require_full_rank(design, "fit_logistic");

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd eta(n), prob(n), weight(n);
  for (int iter = 0; iter < config.max_iterations; ++iter) {
    eta = design * beta;
    const double worst_eta = eta.cwiseAbs().maxCoeff();
    if (worst_eta > config.separation_bound) {
      throw SeparationError("fit_logistic: |linear predictor| reached " +
                            std::to_string(worst_eta) + "; data look separated");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      prob[i] = logistic(eta[i]);
      weight[i] = prob[i] * (1.0 - prob[i]);
    }
    Eigen::VectorXd score = design.transpose() * (data.treatment() - prob) / static_cast<double>(n);
    if (score.cwiseAbs().maxCoeff() < config.score_tolerance) {
      break;
    }
    Eigen::MatrixXd info =
        design.transpose() * weight.asDiagonal() * design / static_cast<double>(n);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success) {
      throw SingularDesignError("fit_logistic: weighted information matrix is singular");
    }
    Eigen::VectorXd step = ldlt.solve(score);
    beta += step;
    if (step.cwiseAbs().maxCoeff() < config.step_tolerance) {
      break;
    }
    if (iter == config.max_iterations - 1) {
      throw NonConvergenceError("fit_logistic: IRLS did not converge in " +
                                    std::to_string(config.max_iterations) + " iterations",
                                beta);
    }
  }

  FeatureMap feats = features;
  Eigen::VectorXd coef = beta;
  auto raw = [feats, coef](const Eigen::VectorXd& l) { return logistic(coef.dot(feats(l))); };
  return PropensityFit(std::move(raw), "logistic", config.delta, beta);
}

OutcomeFit fit_outcome_linear(const Dataset& data, const FeatureMap& features) {
  Eigen::MatrixXd design = design_matrix(data, features);
  const Eigen::Index p = design.cols();

  std::array<Eigen::VectorXd, 2> beta;
  for (int arm = 0; arm < 2; ++arm) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      if (data.treatment_at(i) == arm) rows.push_back(i);
    }
    if (static_cast<Eigen::Index>(rows.size()) < p) {
      throw std::invalid_argument("fit_outcome_linear: arm " + std::to_string(arm) + " has " +
                                  std::to_string(rows.size()) + " rows, fewer than " +
                                  std::to_string(p) + " features");
    }
    Eigen::MatrixXd sub(rows.size(), p);
    Eigen::VectorXd resp(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      sub.row(static_cast<Eigen::Index>(r)) = design.row(rows[r]);
      resp[static_cast<Eigen::Index>(r)] = data.outcome()[rows[r]];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sub);
    if (qr.rank() < p) {
      throw SingularDesignError("fit_outcome_linear: arm " + std::to_string(arm) +
                                " design is rank deficient");
    }
    beta[static_cast<std::size_t>(arm)] = qr.solve(resp);
  }

  FeatureMap feats = features;
  auto fn = [feats, beta](const Eigen::VectorXd& l, int a) {
    if (a != 0 && a != 1) {
      throw std::invalid_argument("OutcomeFit: treatment must be 0 or 1");
    }
    return beta[static_cast<std::size_t>(a)].dot(feats(l));
  };
  return OutcomeFit(std::move(fn), "ols");
}

double silverman_bandwidth(const Dataset& data, double kappa) {
  const double n = static_cast<double>(data.size());
  const double d = static_cast<double>(std::max<Eigen::Index>(data.dim(), 1));
  const double silverman = std::pow(4.0 / (d + 2.0), 1.0 / (d + 4.0)) * std::pow(n, -1.0 / (d + 4.0));
  return silverman * std::pow(n, -kappa);
}

OutcomeFit fit_outcome_kernel(const Dataset& data, double bandwidth) {
  if (!(bandwidth > 0.0)) {
    throw std::invalid_argument("fit_outcome_kernel: bandwidth must be positive");
  }
  const Eigen::Index n = data.size();
  const Eigen::Index d = data.dim();

  Eigen::VectorXd mean = data.covariates().colwise().mean();
  Eigen::VectorXd sd(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    double var = (data.covariates().col(j).array() - mean[j]).square().sum() /
                 static_cast<double>(n);
    sd[j] = var > 0.0 ? std::sqrt(var) : 1.0;
  }

  struct ArmData {
    Eigen::MatrixXd z;     // standardized covariates
    Eigen::VectorXd y;
    double mean_y = 0.0;
  };
  auto arms = std::make_shared<std::array<ArmData, 2>>();
  for (int arm = 0; arm < 2; ++arm) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (data.treatment_at(i) == arm) rows.push_back(i);
    }
    if (rows.empty()) {
      throw std::invalid_argument("fit_outcome_kernel: arm " + std::to_string(arm) + " is empty");
    }
    ArmData& ad = (*arms)[static_cast<std::size_t>(arm)];
    ad.z.resize(rows.size(), d);
    ad.y.resize(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (Eigen::Index j = 0; j < d; ++j) {
        ad.z(static_cast<Eigen::Index>(r), j) = (data.covariates()(rows[r], j) - mean[j]) / sd[j];
      }
      ad.y[static_cast<Eigen::Index>(r)] = data.outcome()[rows[r]];
    }
    ad.mean_y = ad.y.mean();
  }

  auto fallback = std::make_shared<std::atomic<long>>(0);
  Eigen::VectorXd mean_c = mean;
  Eigen::VectorXd sd_c = sd;
  auto fn = [arms, fallback, mean_c, sd_c, bandwidth](const Eigen::VectorXd& l, int a) {
    if (a != 0 && a != 1) {
      throw std::invalid_argument("OutcomeFit: treatment must be 0 or 1");
    }
    const auto& ad = (*arms)[static_cast<std::size_t>(a)];
    Eigen::VectorXd q(l.size());
    for (Eigen::Index j = 0; j < l.size(); ++j) q[j] = (l[j] - mean_c[j]) / sd_c[j];
    double wsum = 0.0, wy = 0.0;
    for (Eigen::Index i = 0; i < ad.z.rows(); ++i) {
      double dist2 = (ad.z.row(i).transpose() - q).squaredNorm();
      double w = std::exp(-0.5 * dist2 / (bandwidth * bandwidth));
      wsum += w;
      wy += w * ad.y[i];
    }
    if (wsum == 0.0) {
      fallback->fetch_add(1, std::memory_order_relaxed);
      return ad.mean_y;
    }
    return wy / wsum;
  };
  OutcomeFit fit(std::move(fn), "kernel");
  fit.fallback_ = fallback;
  return fit;
}

std::vector<int> make_folds(Eigen::Index n, int k, std::uint64_t seed) {
  if (k < 2) {
    throw std::invalid_argument("make_folds: need at least 2 folds");
  }
  if (n < k) {
    throw std::invalid_argument("make_folds: fewer rows than folds");
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(seed);
  for (Eigen::Index i = n - 1; i > 0; --i) {
    auto j = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  std::vector<int> fold_of(static_cast<std::size_t>(n));
  for (Eigen::Index pos = 0; pos < n; ++pos) {
    fold_of[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])] =
        static_cast<int>(pos % k);
  }
  return fold_of;
}

Eigen::VectorXd simplex_least_squares(const Eigen::MatrixXd& preds, const Eigen::VectorXd& target) {
  const Eigen::Index k = preds.cols();
  if (k == 0 || preds.rows() != target.size()) {
    throw std::invalid_argument("simplex_least_squares: shape mismatch");
  }
  if (k == 1) {
    return Eigen::VectorXd::Ones(1);
  }
  const double n = static_cast<double>(preds.rows());
  Eigen::MatrixXd gram = preds.transpose() * preds / n;
  Eigen::VectorXd lin = preds.transpose() * target / n;
  auto objective = [&](const Eigen::VectorXd& w) {
    return w.dot(gram * w) - 2.0 * lin.dot(w);
  };

  Eigen::VectorXd w = Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));
  double obj = objective(w);
  const int max_sweeps = 10000;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    Eigen::VectorXd grad = 2.0 * (gram * w - lin);
    for (Eigen::Index i = 0; i < k; ++i) {
      for (Eigen::Index j = i + 1; j < k; ++j) {
        // move t along e_i - e_j, clipped so both weights stay nonnegative
        double curv = 2.0 * (gram(i, i) - 2.0 * gram(i, j) + gram(j, j));
        if (curv <= 0.0) continue;
        double t = (grad[j] - grad[i]) / curv;
        t = std::min(std::max(t, -w[i]), w[j]);
        if (t == 0.0) continue;
        w[i] += t;
        w[j] -= t;
        grad += 2.0 * t * (gram.col(i) - gram.col(j));
      }
    }
    double next = objective(w);
    if (obj - next < 1e-10) {
      obj = next;
      break;
    }
    obj = next;
  }
  // a vertex can only win through numerical slack; restart from it if so
  for (Eigen::Index v = 0; v < k; ++v) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(k);
    e[v] = 1.0;
    if (objective(e) < obj - 1e-12) {
      w = e;
      obj = objective(e);
    }
  }
  return w;
}

namespace {

// Shared stacking driver: fits candidates per fold, drops failures, solves
// simplex weights against the target, refits survivors on the full sample.
template <typename Fit, typename Learner, typename PredictFn>
std::pair<std::vector<Fit>, Eigen::VectorXd> stack_candidates(
    const Dataset& data, const std::vector<Learner>& candidates, int folds, std::uint64_t seed,
    const Eigen::VectorXd& target, const PredictFn& predict_row, EnsembleInfo* info,
    const char* who) {
  if (candidates.empty()) {
    throw std::invalid_argument(std::string(who) + ": no candidate learners");
  }
  const Eigen::Index n = data.size();
  std::vector<int> fold_of = make_folds(n, folds, seed);

  std::vector<int> retained;
  std::vector<int> dropped;
  std::vector<Eigen::VectorXd> cv_columns;
  for (int c = 0; c < static_cast<int>(candidates.size()); ++c) {
    Eigen::VectorXd col(n);
    bool ok = true;
    for (int f = 0; f < folds && ok; ++f) {
      std::vector<Eigen::Index> train;
      std::vector<Eigen::Index> test;
      for (Eigen::Index i = 0; i < n; ++i) {
        (fold_of[static_cast<std::size_t>(i)] == f ? test : train).push_back(i);
      }
      Eigen::MatrixXd cov(train.size(), data.dim());
      Eigen::VectorXd trt(train.size());
      Eigen::VectorXd out(train.size());
      for (std::size_t r = 0; r < train.size(); ++r) {
        cov.row(static_cast<Eigen::Index>(r)) = data.covariates().row(train[r]);
        trt[static_cast<Eigen::Index>(r)] = data.treatment()[train[r]];
        out[static_cast<Eigen::Index>(r)] = data.outcome()[train[r]];
      }
      try {
        Dataset complement(std::move(cov), std::move(trt), std::move(out));
        Fit fit = candidates[static_cast<std::size_t>(c)](complement);
        for (Eigen::Index i : test) col[i] = predict_row(fit, i);
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (ok) {
      retained.push_back(c);
      cv_columns.push_back(std::move(col));
    } else {
      dropped.push_back(c);
    }
  }
  if (retained.empty()) {
    throw std::runtime_error(std::string(who) + ": every candidate failed during cross-validation");
  }

  Eigen::MatrixXd preds(n, static_cast<Eigen::Index>(retained.size()));
  for (std::size_t c = 0; c < retained.size(); ++c) {
    preds.col(static_cast<Eigen::Index>(c)) = cv_columns[c];
  }
  Eigen::VectorXd weights = simplex_least_squares(preds, target);

  std::vector<Fit> fits;
  fits.reserve(retained.size());
  for (int c : retained) {
    fits.push_back(candidates[static_cast<std::size_t>(c)](data));
  }

  if (info) {
    info->weights = weights;
    info->retained = retained;
    info->dropped = dropped;
    info->cv_risk = (target - preds * weights).squaredNorm() / static_cast<double>(n);
  }
  return {std::move(fits), std::move(weights)};
}

}  // namespace

PropensityFit fit_propensity_ensemble(const Dataset& data,
                                      const std::vector<PropensityLearner>& candidates, int folds,
                                      std::uint64_t seed, double delta, EnsembleInfo* info) {
  auto [fits, weights] = stack_candidates<PropensityFit>(
      data, candidates, folds, seed, data.treatment(),
      [&data](const PropensityFit& f, Eigen::Index i) {
        return f.predict(data.covariates().row(i).transpose());
      },
      info, "fit_propensity_ensemble");
  auto shared = std::make_shared<std::vector<PropensityFit>>(std::move(fits));
  Eigen::VectorXd w = weights;
  auto raw = [shared, w](const Eigen::VectorXd& l) {
    double p = 0.0;
    for (Eigen::Index c = 0; c < w.size(); ++c) {
      p += w[c] * (*shared)[static_cast<std::size_t>(c)].predict(l);
    }
    return p;
  };
  return PropensityFit(std::move(raw), "ensemble", delta);
}

OutcomeFit fit_outcome_ensemble(const Dataset& data, const std::vector<OutcomeLearner>& candidates,
                                int folds, std::uint64_t seed, EnsembleInfo* info) {
  auto [fits, weights] = stack_candidates<OutcomeFit>(
      data, candidates, folds, seed, data.outcome(),
      [&data](const OutcomeFit& f, Eigen::Index i) {
        return f.predict(data.covariates().row(i).transpose(), data.treatment_at(i));
      },
      info, "fit_outcome_ensemble");
  auto shared = std::make_shared<std::vector<OutcomeFit>>(std::move(fits));
  Eigen::VectorXd w = weights;
  auto fn = [shared, w](const Eigen::VectorXd& l, int a) {
    double v = 0.0;
    for (Eigen::Index c = 0; c < w.size(); ++c) {
      v += w[c] * (*shared)[static_cast<std::size_t>(c)].predict(l, a);
    }
    return v;
  };
  return OutcomeFit(std::move(fn), "ensemble");
}

}  // namespace semicausal
