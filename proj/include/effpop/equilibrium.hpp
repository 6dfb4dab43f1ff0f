#pragma once

#include "effpop/core.hpp"
#include "effpop/model.hpp"

#include <complex>
#include <optional>
#include <vector>

namespace effpop {

struct FixedPointOptions {
  double tol = 1e-12;  // on ||b(h~)||_inf, relative to 1 + ||F(h~)||
  int max_iter = 500;
};

/// Positive equilibrium h~ with b(h~) = 0.
///
/// Uses Newton's method regularised by pseudo-transient continuation: each step
/// solves (I / delta - J) dv = b(v), with delta grown as the residual falls, so
/// early iterates follow the attracting flow and late iterates are pure Newton.
/// Steps are halved while the residual increases and iterates are projected to
/// the nonnegative orthant. Jacobians come from the model when available and
/// from central differences otherwise. If that stalls or ends on the boundary
/// of the orthant, the drift flow is followed from the guess until it settles
/// and Newton is restarted from there. Only strictly positive points are
/// returned; otherwise ConvergenceError.
Vector find_fixed_point(const DecomposedModel& model, const Vector& guess,
                        const FixedPointOptions& options = {});

/// Jacobian of b at v: analytic if the model provides it, otherwise central
/// differences with step sqrt(eps) * (1 + |v_x|).
Matrix drift_jacobian(const DecomposedModel& model, const Vector& v);

struct Spectrum {
  std::vector<std::complex<double>> eigenvalues;  // descending real part
  bool stable = false;                            // Re(lambda_1) < -tol

  double leading_real() const { return eigenvalues.empty() ? 0.0 : eigenvalues.front().real(); }
};

Spectrum stability_spectrum(const DecomposedModel& model, const Vector& h_tilde, double tol = 1e-9);

/// Reproductive values: h >= 0 with h^T F(h~) = 0 and <h, h~> = 1, from the
/// smallest right singular vector of F(h~)^T.
Vector left_null_vector(const DecomposedModel& model, const Vector& h_tilde, double tol = 1e-8);

/// Smallest t0 in {1, 2, 4, 8} with exp(t0 F(h~)) entrywise positive.
std::optional<double> check_primitivity(const DecomposedModel& model, const Vector& h_tilde);

/// n_e(x, y) = h~_x h~_y / (C(h~) h~)_xy. Entries with no cross noise are +inf.
Matrix pair_effective_sizes(const DecomposedModel& model, const Vector& h_tilde);

struct SigmaSquared {
  double quadratic_form = 0.0;   // <h, aa*(h~) h>
  double ancestral_sum = 0.0;    // sum_{x,y} Pi_x Pi_y / n_e(x,y)
  double relative_gap = 0.0;
};

/// Sigma^2 computed two ways; throws ConsistencyError if they differ by more
/// than `rel_tol` relative.
SigmaSquared sigma_squared_both(const DecomposedModel& model, const Vector& h_tilde, const Vector& h,
                                double rel_tol = 1e-10);
double sigma_squared(const DecomposedModel& model, const Vector& h_tilde, const Vector& h);

/// N_e = N / Sigma^2. Throws NumericalError when Sigma^2 <= 0 (no genetic drift,
/// the evolutionary time rescaling is undefined).
double effective_population_size(double sigma_sq, double N);

struct EquilibriumReport {
  Vector h_tilde;
  Vector h;
  Matrix mean_matrix;  // F(h~)
  std::vector<std::complex<double>> jacobian_eigenvalues;
  bool stable = false;
  Vector pi;
  Matrix n_e;  // +inf where absent
  double sigma_sq = 0.0;
  double sigma_sq_ancestral = 0.0;
  std::optional<double> primitivity_t0;
  /// Smallest |Re| over the nonzero eigenvalues of F(h~): the rate at which
  /// the linearised family sizes reach their Perron projection.
  double perron_gap = 0.0;

  double leading_real() const {
    return jacobian_eigenvalues.empty() ? 0.0 : jacobian_eigenvalues.front().real();
  }
};

struct CensusBound {
  std::optional<double> bound;  // <h~, aa*(h~)^{-1} h~> N; absent if aa*(h~) is singular
  double n_e = 0.0;
  bool holds = false;
};

CensusBound census_bound_check(const DecomposedModel& model, const EquilibriumReport& report, double N);

/// Runs the whole equilibrium pipeline: fixed point, spectrum, primitivity,
/// reproductive values, Pi, pairwise n_e and Sigma^2.
EquilibriumReport analyze(const DecomposedModel& model, const Vector& guess,
                          const FixedPointOptions& options = {});

/// [0, 10 max(h~)]^E.
Box default_admissible_box(const EquilibriumReport& report);

}  // namespace effpop
