#pragma once

#include "effpop/core.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace effpop {

/// An infinitely decomposable SDE model over a finite type space:
///
///   drift       b(v)   = F(v) v
///   covariance  aa*(v) = C(v) v
///   fractions   sigma(v, w) sigma*(v, w) = C(v) w
///
/// The decomposition is an explicit input; it is never inferred from b.
/// Evaluation callbacks write into caller-owned buffers so the simulation
/// loops run without allocating. They must be reentrant.
struct DecomposedModel {
  using MeanFn = std::function<void(const Vector& v, Matrix& out)>;
  using CovarianceFn = std::function<void(const Vector& v, CovarianceTensor& out)>;
  using NoiseFn = std::function<void(const Vector& v, const Vector& w, Matrix& out)>;
  using JacobianFn = std::function<void(const Vector& v, Matrix& out)>;

  std::string name;
  TypeSpace space;
  MeanFn mean_matrix;
  CovarianceFn covariance_tensor;
  NoiseFn noise_factor;
  std::optional<JacobianFn> drift_jacobian;
  std::optional<Box> admissible_box;

  std::size_t dim() const noexcept { return space.size(); }

  Matrix F(const Vector& v) const;
  CovarianceTensor C(const Vector& v) const;
  Matrix sigma(const Vector& v, const Vector& w) const;
};

/// b(v) = F(v) v. Throws EvaluationError on non-finite F(v).
Vector drift(const DecomposedModel& model, const Vector& v);

/// aa*(v) = C(v) v. Throws ModelError if it has a negative eigenvalue below -tol.
Matrix total_covariance(const DecomposedModel& model, const Vector& v, double tol = 1e-9);

/// C(v) w, checked against sigma(v, w) sigma*(v, w).
Matrix fraction_covariance(const DecomposedModel& model, const Vector& v, const Vector& w,
                           double tol = 1e-9);

/// Noise factor and covariance tensor built from a diffusion matrix a(v) by
/// A(v) = a(v) / sqrt(v_y) column-wise, R(w) = diag(sqrt(w)), sigma = A R and
/// C_{xy,z} = A_xz A_yz.
struct NoiseDecomposition {
  DecomposedModel::NoiseFn noise_factor;
  DecomposedModel::CovarianceFn covariance_tensor;
  /// A(v) itself, for inspection.
  std::function<Matrix(const Vector&)> scaled_factor;
};

using DiffusionFn = std::function<Matrix(const Vector&)>;

/// Requires v_y = 0 => column y of a(v) is zero. That requirement is checked at
/// the supplied boundary points (if any); a violation throws ModelError.
NoiseDecomposition build_sigma_from_a(DiffusionFn a, std::size_t dim,
                                      const std::vector<Vector>& boundary_checks = {},
                                      double tol = 1e-12);

struct PointCheck {
  Vector point;
  double decomposition_residual = 0.0;  // ||sigma sigma* - C(v) w|| / (1 + ||C(v) w||)
  double linearity_residual = 0.0;      // ||C(v)(a w1 + b w2) - a C w1 - b C w2||
  double min_offdiagonal = 0.0;         // min_{x != y} F(v)_xy
  double min_eigenvalue = 0.0;          // smallest eigenvalue of aa*(v)
  bool decomposition_ok = true;
  bool linearity_ok = true;
  bool metzler_ok = true;
  bool psd_ok = true;

  bool ok() const { return decomposition_ok && linearity_ok && metzler_ok && psd_ok; }
};

struct ValidationReport {
  std::vector<PointCheck> points;
  double tol = 0.0;

  bool all_pass() const;
  std::size_t failures() const;
};

/// Checks sigma sigma* = C w, linearity of C(v)., the Metzler property of F and
/// positive semidefiniteness of aa* at every sample point. The second argument
/// w of the decomposition check is drawn deterministically from `seed`.
ValidationReport check_assumptions(const DecomposedModel& model,
                                   const std::vector<Vector>& sample_points, double tol = 1e-9,
                                   unsigned long long seed = 0);

/// The same model with sigma scaled by `factor` (so C and aa* scale by factor^2).
DecomposedModel scaled_noise(const DecomposedModel& model, double factor);

/// Uniform sample points in a box (deterministic for a given seed).
std::vector<Vector> sample_box(const Box& box, std::size_t count, unsigned long long seed);

}  // namespace effpop
