#pragma once

#include <Eigen/Core>
#include <functional>
#include <iosfwd>
#include <string>

namespace semicausal {

// One observation z = (l, a, y).
struct Atom {
  Eigen::VectorXd l;
  int a = 0;
  double y = 0.0;
};

// Generic real-valued function of z, total on whatever support it is applied to.
using ZFunction = std::function<double(const Atom&)>;

// Immutable i.i.d. sample of Z = (L, A, Y); the empirical measure lives here.
class Dataset {
 public:
  Dataset(Eigen::MatrixXd covariates, Eigen::VectorXd treatment, Eigen::VectorXd outcome);

  Eigen::Index size() const { return covariates_.rows(); }
  Eigen::Index dim() const { return covariates_.cols(); }
  const Eigen::MatrixXd& covariates() const { return covariates_; }
  const Eigen::VectorXd& treatment() const { return treatment_; }
  const Eigen::VectorXd& outcome() const { return outcome_; }
  int treatment_at(Eigen::Index i) const { return treatment_[i] != 0.0 ? 1 : 0; }
  Atom row(Eigen::Index i) const;

  // CSV with header l1,..,ld,a,y
  static Dataset read_csv(const std::string& path);
  static Dataset read_csv(std::istream& in, const std::string& name);
  void write_csv(std::ostream& out) const;
  void write_csv(const std::string& path) const;

 private:
  Eigen::MatrixXd covariates_;
  Eigen::VectorXd treatment_;
  Eigen::VectorXd outcome_;
};

// P_n{f(Z)} = n^{-1} sum_i f(Z_i)
double empirical_mean(const ZFunction& f, const Dataset& data);

}  // namespace semicausal
