#include "effpop/flows.hpp"

#include <boost/numeric/odeint.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace effpop {

namespace ode = boost::numeric::odeint;

namespace {

using State = std::vector<double>;

double inf_norm(const Eigen::Ref<const Matrix>& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

/// State layout: [v (E) | W (E x m, column-major) | q (m, optional quadrature)].
class LinearSystem {
 public:
  LinearSystem(const DecomposedModel& model, Eigen::Index columns, const Vector* h = nullptr,
               const Matrix* f_eq = nullptr)
      : model_(model), n_(static_cast<Eigen::Index>(model.dim())), m_(columns), h_(h), f_eq_(f_eq) {}

  Eigen::Index size() const { return n_ + n_ * m_ + (h_ ? m_ : 0); }

  void operator()(const State& x, State& dxdt, double /*t*/) {
    Eigen::Map<const Vector> v(x.data(), n_);
    Eigen::Map<const Matrix> w(x.data() + n_, n_, m_);
    Eigen::Map<Vector> dv(dxdt.data(), n_);
    Eigen::Map<Matrix> dw(dxdt.data() + n_, n_, m_);
    v_buf_ = v;
    model_.mean_matrix(v_buf_, f_);
    dv.noalias() = f_ * v;
    dw.noalias() = f_ * w;
    if (h_) {
      Eigen::Map<Vector> dq(dxdt.data() + n_ + n_ * m_, m_);
      dq.noalias() = ((f_ - *f_eq_) * w).transpose() * *h_;
    }
  }

  /// Max over the drift residual and every transported column's residual,
  /// each relative to 1 + its own size.
  double residual(const State& x) {
    Eigen::Map<const Vector> v(x.data(), n_);
    Eigen::Map<const Matrix> w(x.data() + n_, n_, m_);
    v_buf_ = v;
    model_.mean_matrix(v_buf_, f_);
    double r = inf_norm(f_ * v) / (1.0 + inf_norm(v));
    if (m_ > 0) r = std::max(r, inf_norm(f_ * w) / (1.0 + inf_norm(w)));
    return r;
  }

 private:
  const DecomposedModel& model_;
  Eigen::Index n_;
  Eigen::Index m_;
  const Vector* h_;
  const Matrix* f_eq_;
  Vector v_buf_;
  Matrix f_;
};

class FractionSystem {
 public:
  FractionSystem(const DecomposedModel& model, Eigen::Index k)
      : model_(model), n_(static_cast<Eigen::Index>(model.dim())), k_(k) {}

  void operator()(const State& x, State& dxdt, double /*t*/) {
    Eigen::Map<const Matrix> u(x.data(), n_, k_);
    Eigen::Map<Matrix> du(dxdt.data(), n_, k_);
    s_ = u.rowwise().sum();
    model_.mean_matrix(s_, f_);
    du.noalias() = f_ * u;
  }

 private:
  const DecomposedModel& model_;
  Eigen::Index n_;
  Eigen::Index k_;
  Vector s_;
  Matrix f_;
};

struct Outcome {
  bool converged = false;
  double t = 0.0;
};

void check_finite(const State& x, double t) {
  for (double e : x) {
    if (!std::isfinite(e)) {
      throw NumericalError("flow integration produced a non-finite state at t = " + std::to_string(t));
    }
  }
}

/// Shared driver: adaptive Dormand-Prince 5(4) with dense output, or fixed-step
/// RK4. `residual` is consulted for until-converged horizons.
template <class System>
Outcome drive(System& system, State& x, Horizon horizon, const FlowOptions& options,
              const std::function<double(const State&)>& residual,
              const std::function<void(double, const State&)>& record) {
  Outcome out;
  const double t_stop = horizon.until_converged ? options.t_max : horizon.t_end;
  if (record) record(0.0, x);

  if (options.fixed_step) {
    const double step = *options.fixed_step;
    const auto steps = static_cast<long long>(std::ceil(t_stop / step - 1e-9));
    const double dt = steps > 0 ? t_stop / static_cast<double>(steps) : 0.0;
    ode::runge_kutta4<State> rk;
    double t = 0.0;
    for (long long i = 0; i < steps; ++i) {
      rk.do_step(system, x, t, dt);
      t = static_cast<double>(i + 1) * dt;
      if (record) record(t, x);
    }
    check_finite(x, t);
    out.t = t;
    out.converged = !horizon.until_converged || residual(x) < options.conv_tol;
    return out;
  }

  if (t_stop <= 0.0) {
    out.converged = !horizon.until_converged || residual(x) < options.conv_tol;
    return out;
  }

  auto stepper = options.max_step > 0.0
                     ? ode::make_dense_output(options.abs_tol, options.rel_tol, options.max_step,
                                              ode::runge_kutta_dopri5<State>())
                     : ode::make_dense_output(options.abs_tol, options.rel_tol, ode::runge_kutta_dopri5<State>());
  stepper.initialize(x, 0.0, std::min(1e-3, t_stop));
  double below_since = -1.0;
  if (horizon.until_converged && residual(x) < options.conv_tol) below_since = 0.0;

  while (true) {
    const auto [t0, t1] = stepper.do_step(system);
    if (t1 - t0 < 1e-14 * (1.0 + std::abs(t1))) {
      throw ConvergenceError("step-size underflow at t = " + std::to_string(t1));
    }
    if (!horizon.until_converged && t1 >= t_stop) {
      stepper.calc_state(t_stop, x);
      check_finite(x, t_stop);
      if (record) record(t_stop, x);
      out.t = t_stop;
      out.converged = true;
      return out;
    }
    x = stepper.current_state();
    check_finite(x, t1);
    if (record) record(t1, x);
    if (horizon.until_converged) {
      if (residual(x) < options.conv_tol) {
        if (below_since < 0.0) below_since = t1;
        if (t1 - below_since >= options.settle_time) {
          out.converged = true;
          out.t = t1;
          return out;
        }
      } else {
        below_since = -1.0;
      }
      if (t1 >= t_stop) {
        out.t = t1;
        return out;
      }
    }
  }
}

void check_box(const DecomposedModel& model, const Vector& v) {
  if (model.admissible_box && !model.admissible_box->contains(v, 1e-9)) {
    throw NumericalError("flow left the admissible box");
  }
}

}  // namespace

FlowOptions flow_options_for(const EquilibriumReport& report) {
  FlowOptions o;
  const double rate = std::min(std::abs(report.leading_real()), report.perron_gap);
  if (rate > 0.0 && std::isfinite(rate)) o.t_max = 50.0 / rate;
  double radius = 0.0;
  for (const auto& e : report.jacobian_eigenvalues) radius = std::max(radius, std::abs(e));
  if (report.mean_matrix.size() > 0) {
    const Eigen::VectorXcd ev = report.mean_matrix.eigenvalues();
    for (Eigen::Index i = 0; i < ev.size(); ++i) radius = std::max(radius, std::abs(ev[i]));
  }
  if (radius > 0.0 && std::isfinite(radius)) o.max_step = 1.0 / radius;
  return o;
}

FlowOptions fixed_grid_options(const DecomposedModel& model, const EquilibriumReport& report) {
  FlowOptions o = flow_options_for(report);
  const Matrix f = model.F(report.h_tilde);
  o.fixed_step = 0.01 / std::max(1.0, f.norm());
  return o;
}

FlowResult integrate_total_flow(const DecomposedModel& model, const Vector& v0, Horizon horizon,
                                const FlowOptions& options) {
  if ((v0.array() < 0.0).any()) throw ConfigError("total flow requires v0 >= 0");
  check_box(model, v0);
  LinearSystem system(model, 0);
  State x(v0.data(), v0.data() + v0.size());
  FlowResult result;
  const auto n = v0.size();
  auto record = [&](double t, const State& s) {
    result.times.push_back(t);
    result.states.emplace_back(Eigen::Map<const Vector>(s.data(), n));
  };
  const Outcome out = drive(system, x, horizon, options, [&](const State& s) { return system.residual(s); },
                            options.record ? std::function<void(double, const State&)>(record) : nullptr);
  result.converged = out.converged;
  result.t_final = out.t;
  result.limit = Eigen::Map<const Vector>(x.data(), n);
  check_box(model, result.limit);
  return result;
}

LinearFlowResult integrate_linear_flow(const DecomposedModel& model, const Vector& v0, const Matrix& w0,
                                       Horizon horizon, const FlowOptions& options) {
  if ((v0.array() < 0.0).any()) throw ConfigError("linear flow requires v0 >= 0");
  check_box(model, v0);
  const auto n = v0.size();
  const auto m = w0.cols();
  LinearSystem system(model, m);
  State x(static_cast<std::size_t>(system.size()));
  std::copy(v0.data(), v0.data() + n, x.begin());
  std::copy(w0.data(), w0.data() + n * m, x.begin() + n);

  LinearFlowResult result;
  auto record = [&](double t, const State& s) {
    result.times.push_back(t);
    result.base_states.emplace_back(Eigen::Map<const Vector>(s.data(), n));
    result.states.emplace_back(Eigen::Map<const Matrix>(s.data() + n, n, m));
  };
  const Outcome out = drive(system, x, horizon, options, [&](const State& s) { return system.residual(s); },
                            options.record ? std::function<void(double, const State&)>(record) : nullptr);
  result.converged = out.converged;
  result.t_final = out.t;
  result.base_limit = Eigen::Map<const Vector>(x.data(), n);
  result.limit = Eigen::Map<const Matrix>(x.data() + n, n, m);
  return result;
}

CompositionMatrix integrate_fraction_flow(const DecomposedModel& model, const CompositionMatrix& u0, double t,
                                          const FlowOptions& options) {
  FractionSystem system(model, u0.cols());
  State x(u0.data(), u0.data() + u0.size());
  FlowOptions o = options;
  o.record = false;
  drive(system, x, Horizon::fixed(t), o, [](const State&) { return 0.0; }, nullptr);
  return Eigen::Map<const Matrix>(x.data(), u0.rows(), u0.cols());
}

ProjectionResult katzenberger_projection(const DecomposedModel& model, const EquilibriumReport& report,
                                         const CompositionMatrix& u0, const FlowOptions& options,
                                         double check_tol) {
  const auto n = u0.rows();
  const auto k = u0.cols();
  const Vector s = column_sum(u0);
  Matrix w0(n, k + n);
  w0.leftCols(k) = u0;
  w0.rightCols(n) = Matrix::Identity(n, n);

  const LinearFlowResult flow = integrate_linear_flow(model, s, w0, Horizon::converged(), options);
  if (!flow.converged) {
    throw ConvergenceError("S(U0) is not in the basin of h~: the total flow did not converge by t_max");
  }

  ProjectionResult r;
  r.pi = flow.limit.leftCols(k);
  r.theta = r.pi.transpose() * report.h;
  r.H_of_v = flow.limit.rightCols(n).transpose() * report.h;
  r.theta_sum_residual = std::abs(r.theta.sum() - 1.0);
  double colinear = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    colinear = std::max(colinear, (r.pi.col(j) - r.theta[j] * report.h_tilde).cwiseAbs().maxCoeff());
  }
  r.colinearity_residual = colinear;
  if (r.theta_sum_residual > check_tol) {
    throw ConsistencyError("Katzenberger projection: sum of theta deviates from 1 by " +
                           std::to_string(r.theta_sum_residual));
  }
  const double scale = 1.0 + u0.cwiseAbs().maxCoeff();
  if (colinear > check_tol * scale) {
    throw ConsistencyError("Katzenberger projection is not parallel to h~ (residual " + std::to_string(colinear) + ")");
  }
  return r;
}

ProjectionResult katzenberger_projection(const DecomposedModel& model, const EquilibriumReport& report,
                                         const CompositionMatrix& u0) {
  return katzenberger_projection(model, report, u0, flow_options_for(report));
}

Vector reproductive_value_map(const DecomposedModel& model, const EquilibriumReport& report, const Vector& v0,
                              const FlowOptions& options, double check_tol) {
  const auto n = v0.size();
  const LinearFlowResult flow =
      integrate_linear_flow(model, v0, Matrix::Identity(n, n), Horizon::converged(), options);
  if (!flow.converged && !options.fixed_step) {
    throw ConvergenceError("v0 is not in the basin of h~: the total flow did not converge by t_max");
  }
  Vector H = flow.limit.transpose() * report.h;
  const double gap = std::abs(H.dot(v0) - 1.0);
  if (gap > check_tol) {
    throw ConsistencyError("<H(v0), v0> deviates from 1 by " + std::to_string(gap));
  }
  return H;
}

Vector reproductive_value_map(const DecomposedModel& model, const EquilibriumReport& report, const Vector& v0) {
  return reproductive_value_map(model, report, v0, flow_options_for(report));
}

double theta_by_quadrature(const DecomposedModel& model, const EquilibriumReport& report, const Vector& v0,
                           const Vector& w0, const FlowOptions& options) {
  const auto n = v0.size();
  const Matrix f_eq = model.F(report.h_tilde);
  LinearSystem system(model, 1, &report.h, &f_eq);
  State x(static_cast<std::size_t>(system.size()), 0.0);
  std::copy(v0.data(), v0.data() + n, x.begin());
  std::copy(w0.data(), w0.data() + n, x.begin() + n);
  FlowOptions o = options;
  o.record = false;
  drive(system, x, Horizon::fixed(options.t_max), o, [](const State&) { return 0.0; }, nullptr);
  return w0.dot(report.h) + x[static_cast<std::size_t>(2 * n)];
}

CompositionMatrix pf_projection(const CompositionMatrix& u, const Vector& h, const Vector& h_tilde) {
  return h_tilde * (u.transpose() * h).transpose();
}

CompositionMatrix pf_deviation(const CompositionMatrix& u, const Vector& h, const Vector& h_tilde) {
  return u - pf_projection(u, h, h_tilde);
}

Vector theta_fixed_grid(const DecomposedModel& model, const EquilibriumReport& report, const CompositionMatrix& u,
                        const FlowOptions& options) {
  const LinearFlowResult flow = integrate_linear_flow(model, column_sum(u), u, Horizon::converged(), options);
  return flow.limit.transpose() * report.h;
}

namespace {

/// Central-difference gradient of theta (all k at once) with Richardson
/// refinement. Returns per-k E x K matrices.
std::vector<Matrix> fd_gradient(const std::function<Vector(const CompositionMatrix&)>& theta,
                                const CompositionMatrix& u, double fd_step, bool richardson) {
  const auto n = u.rows();
  const auto k = u.cols();
  std::vector<Matrix> grad(static_cast<std::size_t>(k), Matrix::Zero(n, k));
  for (Eigen::Index j = 0; j < k; ++j) {
    for (Eigen::Index x = 0; x < n; ++x) {
      const double step = fd_step * (1.0 + std::abs(u(x, j)));
      auto central = [&](double hstep) {
        CompositionMatrix up = u, down = u;
        up(x, j) += hstep;
        down(x, j) -= hstep;
        return Vector((theta(up) - theta(down)) / (2.0 * hstep));
      };
      const Vector g = richardson ? Vector((4.0 * central(0.5 * step) - central(step)) / 3.0) : central(step);
      for (Eigen::Index kk = 0; kk < k; ++kk) grad[static_cast<std::size_t>(kk)](x, j) = g[kk];
    }
  }
  return grad;
}

}  // namespace

GradientCheck theta_gradient_check(const DecomposedModel& model, const EquilibriumReport& report,
                                   const CompositionMatrix& u, double fd_step,
                                   const std::optional<FlowOptions>& options) {
  const FlowOptions grid = options ? *options : fixed_grid_options(model, report);
  const auto n = u.rows();
  const auto k = u.cols();
  auto theta = [&](const CompositionMatrix& x) { return theta_fixed_grid(model, report, x, grid); };

  GradientCheck out;
  out.gradient = fd_gradient(theta, u, fd_step, false);

  const Vector s = column_sum(u);
  const CompositionMatrix drift_dir = model.F(s) * u;
  for (Eigen::Index kk = 0; kk < k; ++kk) {
    const Matrix& g = out.gradient[static_cast<std::size_t>(kk)];
    const double denom = g.norm() * drift_dir.norm();
    const double inner = std::abs((g.array() * drift_dir.array()).sum());
    out.drift_orthogonality.push_back(denom > 0.0 ? inner / denom : inner);
  }

  const Vector theta0 = theta(u);
  out.invariance_times = {0.5, 1.0, 5.0};
  const FlowOptions adaptive = flow_options_for(report);
  for (double t : out.invariance_times) {
    const CompositionMatrix moved = integrate_fraction_flow(model, u, t, adaptive);
    const Vector theta_t = theta(moved);
    std::vector<double> dev;
    for (Eigen::Index kk = 0; kk < k; ++kk) dev.push_back(std::abs(theta_t[kk] - theta0[kk]));
    out.invariance_deviation.push_back(std::move(dev));
  }

  // DH(S(u))(e_x) by central differences of H on the same grid.
  Matrix dh(n, n);  // column x = DH(s)(e_x)
  for (Eigen::Index x = 0; x < n; ++x) {
    const double step = fd_step * (1.0 + std::abs(s[x]));
    Vector up = s, down = s;
    up[x] += step;
    down[x] -= step;
    const Vector hu = reproductive_value_map(model, report, up, grid, 1e-4);
    const Vector hd = reproductive_value_map(model, report, down, grid, 1e-4);
    dh.col(x) = (hu - hd) / (2.0 * step);
  }
  double max_diff = 0.0;
  for (Eigen::Index kk = 0; kk < k; ++kk) {
    for (Eigen::Index j = 0; j < k; ++j) {
      const Vector dir = u.col(kk) - (j == kk ? s : Vector::Zero(n));
      for (Eigen::Index x = 0; x < n; ++x) {
        const double formula = dh.col(x).dot(dir);
        max_diff = std::max(max_diff, std::abs(formula - out.gradient[static_cast<std::size_t>(kk)](x, j)));
      }
    }
  }
  out.dh_formula_max_abs_diff = max_diff;

  // On Gamma^K the gradient has the closed form -(theta^k - 1_{j=k}) h_x.
  const CompositionMatrix dev = pf_deviation(u, report.h, report.h_tilde);
  const double on_gamma_tol = 1e-9 * (1.0 + u.cwiseAbs().maxCoeff());
  if (dev.cwiseAbs().maxCoeff() <= on_gamma_tol && (s - report.h_tilde).cwiseAbs().maxCoeff() <= on_gamma_tol) {
    const Vector th = u.transpose() * report.h;
    double diff = 0.0;
    for (Eigen::Index kk = 0; kk < k; ++kk) {
      for (Eigen::Index j = 0; j < k; ++j) {
        for (Eigen::Index x = 0; x < n; ++x) {
          const double closed = -(th[kk] - (j == kk ? 1.0 : 0.0)) * report.h[x];
          diff = std::max(diff, std::abs(closed - out.gradient[static_cast<std::size_t>(kk)](x, j)));
        }
      }
    }
    out.on_gamma_max_abs_diff = diff;
  }
  return out;
}

TraceCheck trace_identity_check(const DecomposedModel& model, const EquilibriumReport& report,
                                const CompositionMatrix& u, double fd_step,
                                const std::optional<FlowOptions>& options) {
  const FlowOptions grid = options ? *options : fixed_grid_options(model, report);
  const auto n = u.rows();
  const auto k = u.cols();
  const auto d = n * k;
  auto theta = [&](const CompositionMatrix& x) { return theta_fixed_grid(model, report, x, grid); };
  auto flat = [n](Eigen::Index x, Eigen::Index j) { return x + n * j; };

  Vector steps(d);
  for (Eigen::Index j = 0; j < k; ++j)
    for (Eigen::Index x = 0; x < n; ++x) steps[flat(x, j)] = fd_step * (1.0 + std::abs(u(x, j)));

  auto shifted = [&](Eigen::Index a, double da, Eigen::Index b, double db) {
    CompositionMatrix p = u;
    p(a % n, a / n) += da;
    if (b >= 0) p(b % n, b / n) += db;
    return theta(p);
  };

  const Vector f0 = theta(u);
  // hess[level][kk](a, b), level 0 uses steps, level 1 uses steps / 2.
  std::vector<std::vector<Matrix>> hess(2, std::vector<Matrix>(static_cast<std::size_t>(k), Matrix::Zero(d, d)));
  std::vector<std::vector<Vector>> grad(2, std::vector<Vector>(static_cast<std::size_t>(k), Vector::Zero(d)));
  for (int level = 0; level < 2; ++level) {
    const double scale = level == 0 ? 1.0 : 0.5;
    for (Eigen::Index a = 0; a < d; ++a) {
      const double ha = scale * steps[a];
      const Vector fp = shifted(a, ha, -1, 0.0);
      const Vector fm = shifted(a, -ha, -1, 0.0);
      for (Eigen::Index kk = 0; kk < k; ++kk) {
        hess[level][static_cast<std::size_t>(kk)](a, a) = (fp[kk] - 2.0 * f0[kk] + fm[kk]) / (ha * ha);
        grad[level][static_cast<std::size_t>(kk)][a] = (fp[kk] - fm[kk]) / (2.0 * ha);
      }
      for (Eigen::Index b = a + 1; b < d; ++b) {
        const double hb = scale * steps[b];
        const Vector fpp = shifted(a, ha, b, hb);
        const Vector fpm = shifted(a, ha, b, -hb);
        const Vector fmp = shifted(a, -ha, b, hb);
        const Vector fmm = shifted(a, -ha, b, -hb);
        for (Eigen::Index kk = 0; kk < k; ++kk) {
          const double v = (fpp[kk] - fpm[kk] - fmp[kk] + fmm[kk]) / (4.0 * ha * hb);
          hess[level][static_cast<std::size_t>(kk)](a, b) = v;
          hess[level][static_cast<std::size_t>(kk)](b, a) = v;
        }
      }
    }
  }

  const Vector s = column_sum(u);
  std::vector<Matrix> block_cov;  // sigma sigma*(S(u), u^n), from the noise factor
  for (Eigen::Index j = 0; j < k; ++j) {
    const Matrix sig = model.sigma(s, u.col(j));
    block_cov.push_back(sig * sig.transpose());
  }

  TraceCheck out;
  std::vector<Vector> gradient;
  for (Eigen::Index kk = 0; kk < k; ++kk) {
    const auto ks = static_cast<std::size_t>(kk);
    const Matrix h2 = (4.0 * hess[1][ks] - hess[0][ks]) / 3.0;
    gradient.push_back((4.0 * grad[1][ks] - grad[0][ks]) / 3.0);
    double trace = 0.0, mag = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      const Matrix& cov = block_cov[static_cast<std::size_t>(j)];
      for (Eigen::Index x = 0; x < n; ++x) {
        for (Eigen::Index y = 0; y < n; ++y) {
          const double term = h2(flat(y, j), flat(x, j)) * cov(x, y);
          trace += term;
          mag += std::abs(term);
        }
      }
    }
    out.trace.push_back(trace);
    out.summand_scale.push_back(mag);
    out.relative_trace.push_back(mag > 0.0 ? std::abs(trace) / mag : std::abs(trace));
  }

  out.covariance = Matrix::Zero(k, k);
  for (Eigen::Index a = 0; a < k; ++a) {
    for (Eigen::Index b = 0; b < k; ++b) {
      double c = 0.0;
      for (Eigen::Index j = 0; j < k; ++j) {
        const Matrix& cov = block_cov[static_cast<std::size_t>(j)];
        const auto ga = gradient[static_cast<std::size_t>(a)].segment(n * j, n);
        const auto gb = gradient[static_cast<std::size_t>(b)].segment(n * j, n);
        c += ga.dot(cov * gb);
      }
      out.covariance(a, b) = c;
    }
  }
  const Vector th = u.transpose() * report.h;
  out.wright_fisher_covariance = Matrix::Zero(k, k);
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index b = 0; b < k; ++b)
      out.wright_fisher_covariance(a, b) = report.sigma_sq * ((a == b ? 1.0 : 0.0) - th[b]) * th[a];
  const double wf_scale = out.wright_fisher_covariance.cwiseAbs().maxCoeff();
  const double diff = (out.covariance - out.wright_fisher_covariance).cwiseAbs().maxCoeff();
  out.covariance_max_rel_error = wf_scale > 0.0 ? diff / wf_scale : diff;
  return out;
}

}  // namespace effpop
