#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace effpop {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Composition matrix U in R^{E x K}: column k holds the per-class density of
/// neutral fraction k.
using CompositionMatrix = Eigen::MatrixXd;

// Error hierarchy. The CLI maps NumericalError to exit code 3, ConfigError to 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A model function returned a non-finite value.
class EvaluationError : public NumericalError {
 public:
  EvaluationError(const std::string& what, Vector at);
  const Vector& at() const noexcept { return at_; }

 private:
  Vector at_;
};

/// The (F, C, sigma) triple violates one of its algebraic requirements.
class ModelError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ConvergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Two routes to the same quantity disagree beyond tolerance.
class ConsistencyError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Ordered, unique class labels of the finite type space E.
class TypeSpace {
 public:
  TypeSpace() = default;
  explicit TypeSpace(std::vector<std::string> labels);
  /// Labels "x1", ..., "xn".
  static TypeSpace numbered(std::size_t n);

  std::size_t size() const noexcept { return labels_.size(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::string& label(std::size_t i) const { return labels_.at(i); }

 private:
  std::vector<std::string> labels_;
};

/// Rectangular region [lower, upper] on which model evaluations are declared valid.
struct Box {
  Vector lower;
  Vector upper;

  bool contains(const Vector& v, double slack = 0.0) const;
};

/// C(v) stored as |E| slices: slice(z)(x, y) = C_{xy,z}.
class CovarianceTensor {
 public:
  CovarianceTensor() = default;
  explicit CovarianceTensor(std::size_t dim);

  std::size_t dim() const noexcept { return slices_.size(); }
  Matrix& slice(std::size_t z) { return slices_[z]; }
  const Matrix& slice(std::size_t z) const { return slices_[z]; }
  double operator()(std::size_t x, std::size_t y, std::size_t z) const { return slices_[z](x, y); }
  double& operator()(std::size_t x, std::size_t y, std::size_t z) { return slices_[z](x, y); }

  void set_zero(std::size_t dim);
  /// (C w)_{xy} = sum_z C_{xy,z} w_z.
  Matrix contract(const Vector& w) const;
  void contract_into(const Vector& w, Matrix& out) const;

 private:
  std::vector<Matrix> slices_;
};

/// S(U): sum of the columns.
inline Vector column_sum(const CompositionMatrix& u) { return u.rowwise().sum(); }

bool all_finite(const Matrix& m);

/// Positive part taken entrywise.
inline Vector positive_part(const Vector& v) { return v.cwiseMax(0.0); }

}  // namespace effpop
