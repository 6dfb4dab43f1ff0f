#pragma once

#include "effpop/core.hpp"
#include "effpop/equilibrium.hpp"
#include "effpop/model.hpp"

#include <optional>
#include <vector>

namespace effpop {

struct FlowOptions {
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  /// Convergence: ||F(v)v||_inf < conv_tol (1 + ||v||_inf), and the same for
  /// every transported column, sustained for `settle_time`.
  double conv_tol = 1e-11;
  double settle_time = 1.0;
  /// Cap for until-converged integrations.
  double t_max = 1e4;
  /// Largest adaptive step; 0 leaves it unbounded. Near a stable point an
  /// unbounded step drifts to the edge of the stability region, where the
  /// residual stops decreasing.
  double max_step = 0.0;
  /// When set, integrate with classical RK4 on a fixed grid all the way to the
  /// horizon. The resulting limit is a smooth function of the initial data,
  /// which is what finite-difference probes need.
  std::optional<double> fixed_step;
  bool record = false;
};

/// t_max = 50 / min(|Re lambda_1|, Perron gap of F(h~)); max_step is the
/// inverse of the largest eigenvalue modulus of the drift Jacobian and F(h~).
FlowOptions flow_options_for(const EquilibriumReport& report);

struct Horizon {
  double t_end = 0.0;
  bool until_converged = false;

  static Horizon fixed(double t) { return {t, false}; }
  static Horizon converged() { return {0.0, true}; }
};

struct FlowResult {
  std::vector<double> times;
  std::vector<Vector> states;
  bool converged = false;
  Vector limit;  // final state; the limit when converged
  double t_final = 0.0;
};

/// v' = b(v) = F(v) v.
FlowResult integrate_total_flow(const DecomposedModel& model, const Vector& v0, Horizon horizon,
                                const FlowOptions& options = {});

struct LinearFlowResult {
  std::vector<double> times;
  std::vector<Vector> base_states;
  std::vector<Matrix> states;
  bool converged = false;
  Vector base_limit;
  Matrix limit;
  double t_final = 0.0;
};

/// Joint integration of v' = F(v) v and W' = F(v) W for every column of w0.
LinearFlowResult integrate_linear_flow(const DecomposedModel& model, const Vector& v0, const Matrix& w0,
                                       Horizon horizon, const FlowOptions& options = {});

/// Phi_t(U): the coupled deterministic fraction system U^k' = F(S(U)) U^k.
CompositionMatrix integrate_fraction_flow(const DecomposedModel& model, const CompositionMatrix& u0,
                                          double t, const FlowOptions& options = {});

struct ProjectionResult {
  Matrix pi;       // E x K, column j = pi^j(U0)
  Vector theta;    // theta^j = <pi^j, h>
  Vector H_of_v;   // H(S(U0))
  double theta_sum_residual = 0.0;  // |sum_j theta^j - 1|
  double colinearity_residual = 0.0;  // max_j ||pi^j - theta^j h~||
};

/// Katzenberger projection: the long-time limit of the linear flow started
/// from (S(U0), U0^j). Throws ConvergenceError when S(U0) is not in the basin
/// and ConsistencyError if sum(theta) != 1 or some pi^j is not parallel to h~
/// beyond `check_tol`.
ProjectionResult katzenberger_projection(const DecomposedModel& model, const EquilibriumReport& report,
                                         const CompositionMatrix& u0, const FlowOptions& options,
                                         double check_tol = 1e-6);
ProjectionResult katzenberger_projection(const DecomposedModel& model, const EquilibriumReport& report,
                                         const CompositionMatrix& u0);

/// H(v0)_x = theta(v0, e_x), all |E| columns transported along one base
/// trajectory. Throws ConsistencyError if |<H(v0), v0> - 1| > check_tol.
Vector reproductive_value_map(const DecomposedModel& model, const EquilibriumReport& report, const Vector& v0,
                              const FlowOptions& options, double check_tol = 1e-6);
Vector reproductive_value_map(const DecomposedModel& model, const EquilibriumReport& report, const Vector& v0);

/// theta(v0, w0) from the integral representation
/// <w0 + int_0^inf (F(phi(s, v0)) - F(h~)) w_s ds, h>, truncated at t_max.
double theta_by_quadrature(const DecomposedModel& model, const EquilibriumReport& report, const Vector& v0,
                           const Vector& w0, const FlowOptions& options);

/// Column k -> <u^k, h> h~.
CompositionMatrix pf_projection(const CompositionMatrix& u, const Vector& h, const Vector& h_tilde);

/// Z^k = u^k - <u^k, h> h~.
CompositionMatrix pf_deviation(const CompositionMatrix& u, const Vector& h, const Vector& h_tilde);

struct GradientCheck {
  std::vector<Matrix> gradient;              // per k, E x K, by central differences of theta^k
  std::vector<double> drift_orthogonality;   // |<<grad theta^k, F(S(u))u>>| / (||grad|| ||F(S(u))u||)
  std::vector<double> invariance_times;
  std::vector<std::vector<double>> invariance_deviation;  // [time][k] |theta^k(Phi_t(u)) - theta^k(u)|
  double dh_formula_max_abs_diff = 0.0;      // vs <DH(S(u))(e_x), u^k - 1_{j=k} S(u)>
  std::optional<double> on_gamma_max_abs_diff;  // vs -(theta^k - 1_{j=k}) h_x, only for u on Gamma^K
};

GradientCheck theta_gradient_check(const DecomposedModel& model, const EquilibriumReport& report,
                                   const CompositionMatrix& u, double fd_step = 1e-5,
                                   const std::optional<FlowOptions>& options = std::nullopt);

struct TraceCheck {
  std::vector<double> trace;          // Tr[G* Hess(theta^k) G], per k
  std::vector<double> summand_scale;  // sum of |summands|, per k
  std::vector<double> relative_trace;
  Matrix covariance;                  // C_{k,k'} = <<G grad theta^k, G grad theta^k'>>
  Matrix wright_fisher_covariance;    // Sigma^2 (1_{k=k'} - theta^k') theta^k
  double covariance_max_rel_error = 0.0;  // max |C - C_WF| / max |C_WF|
};

/// u must lie on Gamma^K (columns theta^k h~ with theta on the simplex).
TraceCheck trace_identity_check(const DecomposedModel& model, const EquilibriumReport& report,
                                const CompositionMatrix& u_on_gamma, double fd_step = 1e-3,
                                const std::optional<FlowOptions>& options = std::nullopt);

/// theta(u) on the smooth fixed-step route used by the finite-difference checks.
Vector theta_fixed_grid(const DecomposedModel& model, const EquilibriumReport& report,
                        const CompositionMatrix& u, const FlowOptions& options);

/// Fixed-step options derived from the report (RK4, step 0.01 / max(1, ||F(h~)||)).
FlowOptions fixed_grid_options(const DecomposedModel& model, const EquilibriumReport& report);

}  // namespace effpop
