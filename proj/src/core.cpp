#include "effpop/core.hpp"

#include <unordered_set>
#include <utility>

namespace effpop {

EvaluationError::EvaluationError(const std::string& what, Vector at)
    : NumericalError(what), at_(std::move(at)) {}

TypeSpace::TypeSpace(std::vector<std::string> labels) : labels_(std::move(labels)) {
  if (labels_.empty()) throw ConfigError("type space must contain at least one class");
  std::unordered_set<std::string> seen;
  for (const auto& l : labels_) {
    if (!seen.insert(l).second) throw ConfigError("duplicate class label '" + l + "'");
  }
}

TypeSpace TypeSpace::numbered(std::size_t n) {
  std::vector<std::string> labels;
  labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) labels.push_back("x" + std::to_string(i + 1));
  return TypeSpace(std::move(labels));
}

bool Box::contains(const Vector& v, double slack) const {
  if (v.size() != lower.size() || v.size() != upper.size()) return false;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v[i] < lower[i] - slack || v[i] > upper[i] + slack) return false;
  }
  return true;
}

CovarianceTensor::CovarianceTensor(std::size_t dim) { set_zero(dim); }

void CovarianceTensor::set_zero(std::size_t dim) {
  slices_.resize(dim);
  const auto n = static_cast<Eigen::Index>(dim);
  for (auto& s : slices_) s.setZero(n, n);
}

Matrix CovarianceTensor::contract(const Vector& w) const {
  Matrix out;
  contract_into(w, out);
  return out;
}

void CovarianceTensor::contract_into(const Vector& w, Matrix& out) const {
  const auto n = static_cast<Eigen::Index>(slices_.size());
  out.setZero(n, n);
  for (Eigen::Index z = 0; z < n; ++z) {
    if (w[z] != 0.0) out.noalias() += w[z] * slices_[static_cast<std::size_t>(z)];
  }
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace effpop
