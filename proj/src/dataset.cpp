#include "semicausal/dataset.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "semicausal/math.hpp"

namespace semicausal {

Dataset::Dataset(Eigen::MatrixXd covariates, Eigen::VectorXd treatment, Eigen::VectorXd outcome)
    : covariates_(std::move(covariates)),
      treatment_(std::move(treatment)),
      outcome_(std::move(outcome)) {
  const Eigen::Index n = covariates_.rows();
  if (n < 1) {
    throw std::invalid_argument("Dataset: needs at least one row");
  }
  if (treatment_.size() != n || outcome_.size() != n) {
    throw std::invalid_argument("Dataset: covariates, treatment and outcome row counts differ");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (treatment_[i] != 0.0 && treatment_[i] != 1.0) {
      throw std::invalid_argument("Dataset: treatment entry at row " + std::to_string(i) +
                                  " is not exactly 0 or 1");
    }
    if (!std::isfinite(outcome_[i])) {
      throw std::invalid_argument("Dataset: non-finite outcome at row " + std::to_string(i));
    }
  }
  if (!covariates_.allFinite()) {
    throw std::invalid_argument("Dataset: non-finite covariate entry");
  }
}

Atom Dataset::row(Eigen::Index i) const {
  return Atom{covariates_.row(i).transpose(), treatment_at(i), outcome_[i]};
}

double empirical_mean(const ZFunction& f, const Dataset& data) {
  const Eigen::Index n = data.size();
  KahanSum sum;
  Atom z;
  for (Eigen::Index i = 0; i < n; ++i) {
    z.l = data.covariates().row(i).transpose();
    z.a = data.treatment_at(i);
    z.y = data.outcome()[i];
    double v = f(z);
    if (!std::isfinite(v)) {
      throw std::runtime_error("empirical_mean: non-finite value of f at row " +
                               std::to_string(i));
    }
    sum.add(v);
  }
  return sum.value() / static_cast<double>(n);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_number(const std::string& token, const std::string& name, std::size_t line_no,
                    const std::string& field) {
  double value = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw std::invalid_argument(name + ":" + std::to_string(line_no) + ": field '" + field +
                                "': cannot parse '" + token + "' as a number");
  }
  return value;
}

}  // namespace

Dataset Dataset::read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("Dataset: cannot open '" + path + "'");
  }
  return read_csv(in, path);
}

Dataset Dataset::read_csv(std::istream& in, const std::string& name) {
  std::string line;
  if (!std::getline(in, line)) {
    throw std::invalid_argument(name + ":1: missing header row");
  }
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[header.size() - 2] != "a" || header.back() != "y") {
    throw std::invalid_argument(name + ":1: header must be l1,..,ld,a,y");
  }
  const std::size_t d = header.size() - 2;
  for (std::size_t j = 0; j < d; ++j) {
    if (header[j] != "l" + std::to_string(j + 1)) {
      throw std::invalid_argument(name + ":1: covariate column " + std::to_string(j + 1) +
                                  " must be named l" + std::to_string(j + 1));
    }
  }

  std::vector<std::array<double, 2>> ay;
  std::vector<double> ls;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw std::invalid_argument(name + ":" + std::to_string(line_no) + ": expected " +
                                  std::to_string(header.size()) + " fields, found " +
                                  std::to_string(fields.size()));
    }
    for (std::size_t j = 0; j < d; ++j) {
      ls.push_back(parse_number(fields[j], name, line_no, header[j]));
    }
    double a = parse_number(fields[d], name, line_no, "a");
    double y = parse_number(fields[d + 1], name, line_no, "y");
    ay.push_back({a, y});
  }
  const auto n = static_cast<Eigen::Index>(ay.size());
  if (n == 0) {
    throw std::invalid_argument(name + ": no data rows");
  }
  Eigen::MatrixXd covariates(n, static_cast<Eigen::Index>(d));
  Eigen::VectorXd treatment(n);
  Eigen::VectorXd outcome(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      covariates(i, static_cast<Eigen::Index>(j)) = ls[static_cast<std::size_t>(i) * d + j];
    }
    treatment[i] = ay[static_cast<std::size_t>(i)][0];
    outcome[i] = ay[static_cast<std::size_t>(i)][1];
  }
  return Dataset(std::move(covariates), std::move(treatment), std::move(outcome));
}

void Dataset::write_csv(std::ostream& out) const {
  const Eigen::Index d = dim();
  for (Eigen::Index j = 0; j < d; ++j) {
    out << 'l' << (j + 1) << ',';
  }
  out << "a,y\n";
  char buf[64];
  for (Eigen::Index i = 0; i < size(); ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", covariates_(i, j));
      out << buf << ',';
    }
    out << (treatment_at(i) ? '1' : '0') << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", outcome_[i]);
    out << buf << '\n';
  }
}

void Dataset::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("Dataset: cannot write '" + path + "'");
  }
  write_csv(out);
}

}  // namespace semicausal
