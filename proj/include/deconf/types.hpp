#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace deconf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class CheckFailedError : public Error {
 public:
  CheckFailedError(const std::string& msg, double score)
      : Error(msg), score_(score) {}
  double score() const { return score_; }

 private:
  double score_;
};

// N x D matrix of per-patient cause assignments.  Binary cohorts keep the
// flag so downstream models can insist on {0,1} entries.
struct ExposureMatrix {
  Matrix values;
  bool binary = false;

  Eigen::Index n_patients() const { return values.rows(); }
  Eigen::Index n_causes() const { return values.cols(); }
};

enum class FactorModelKind { Ppca, Pmf, Def };

const char* factor_model_name(FactorModelKind kind);

struct SubstituteConfounder {
  Matrix values;  // N x K posterior means
  FactorModelKind source;

  Eigen::Index k_dim() const { return values.cols(); }
};

struct Cohort {
  ExposureMatrix exposures;
  Vector outcomes;                        // length N
  std::vector<std::string> cause_labels;  // length D
  std::optional<Matrix> true_confounders; // N x Kc, synthetic cohorts only
  std::optional<Vector> true_effects;     // length D, synthetic cohorts only
};

// Throws ValidationError naming the offending field; returns its argument
// untouched otherwise (idempotent by construction).
const Cohort& validate_cohort(const Cohort& cohort);

// Exact value equality across all fields (bit-for-bit on matrices).
bool cohorts_equal(const Cohort& a, const Cohort& b);

}  // namespace deconf
