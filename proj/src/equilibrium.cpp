#include "effpop/equilibrium.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <unsupported/Eigen/MatrixFunctions>

#include <boost/numeric/odeint.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace effpop {

namespace {

double inf_norm(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

double inf_norm(const Matrix& m) { return m.size() ? m.rowwise().lpNorm<1>().maxCoeff() : 0.0; }

}  // namespace

Matrix drift_jacobian(const DecomposedModel& model, const Vector& v) {
  if (model.drift_jacobian) {
    Matrix j;
    (*model.drift_jacobian)(v, j);
    return j;
  }
  const auto n = v.size();
  Matrix j(n, n);
  const double root_eps = std::sqrt(std::numeric_limits<double>::epsilon());
  for (Eigen::Index x = 0; x < n; ++x) {
    const double step = root_eps * (1.0 + std::abs(v[x]));
    Vector up = v, down = v;
    up[x] += step;
    down[x] -= step;
    j.col(x) = (drift(model, up) - drift(model, down)) / (up[x] - down[x]);
  }
  return j;
}

namespace {

struct NewtonOutcome {
  Vector v;
  double residual = 0.0;
  bool converged = false;
};

/// Pseudo-transient Newton from `guess`; iterates are projected to v >= 0.
NewtonOutcome pseudo_transient_newton(const DecomposedModel& model, const Vector& guess,
                                      const FixedPointOptions& options) {
  const auto n = guess.size();
  const Matrix identity = Matrix::Identity(n, n);
  NewtonOutcome out;
  Vector v = guess;
  Vector r = drift(model, v);
  double res = inf_norm(r);
  double delta = 1.0 / (1.0 + inf_norm(drift_jacobian(model, v)));

  for (int iter = 0; iter < options.max_iter; ++iter) {
    const double scale = 1.0 + inf_norm(model.F(v));
    if (res <= options.tol * scale) break;

    const Matrix j = drift_jacobian(model, v);
    const Matrix a = identity / delta - j;
    Vector dv = a.fullPivLu().solve(r);
    if (!dv.allFinite()) break;

    const bool newton_regime = delta * inf_norm(j) > 10.0;
    double step = 1.0;
    Vector candidate;
    double cand_res = 0.0;
    for (int halving = 0; halving < 40; ++halving) {
      candidate = (v + step * dv).cwiseMax(0.0);
      cand_res = inf_norm(drift(model, candidate));
      const bool acceptable = std::isfinite(cand_res) &&
                              (newton_regime ? cand_res < res : cand_res < 10.0 * res + 1e-300);
      if (acceptable) break;
      step *= 0.5;
    }
    if (!std::isfinite(cand_res)) break;

    delta = std::clamp(delta * res / std::max(cand_res, 1e-300), 1e-8, 1e14);
    v = candidate;
    r = drift(model, v);
    res = inf_norm(r);
  }
  out.v = v;
  out.residual = res;
  out.converged = std::isfinite(res) && res <= options.tol * (1.0 + inf_norm(model.F(v)));
  return out;
}

bool strictly_positive(const Vector& v) {
  const double top = v.cwiseAbs().maxCoeff();
  return top > 1e-8 && v.minCoeff() > 1e-8 * top;
}

/// Follows v' = F(v) v until the drift is small relative to the state, so
/// the end point lies in the basin that the flow selects from `guess`.
Vector follow_flow(const DecomposedModel& model, const Vector& guess) {
  namespace ode = boost::numeric::odeint;
  using State = std::vector<double>;
  const auto n = guess.size();
  Vector vbuf(n);
  Matrix fbuf;
  auto rhs = [&](const State& x, State& dxdt, double) {
    vbuf = Eigen::Map<const Vector>(x.data(), n).cwiseMax(0.0);
    model.mean_matrix(vbuf, fbuf);
    Eigen::Map<Vector>(dxdt.data(), n) = fbuf * vbuf;
  };
  State x(guess.data(), guess.data() + n);
  auto stepper = ode::make_controlled(1e-10, 1e-8, ode::runge_kutta_dopri5<State>());
  double t = 0.0;
  for (int chunk = 0; chunk < 2000; ++chunk) {
    ode::integrate_adaptive(stepper, rhs, x, t, t + 5.0, 1e-3);
    t += 5.0;
    const Vector v = Eigen::Map<const Vector>(x.data(), n).cwiseMax(0.0);
    if (!v.allFinite() || inf_norm(v) > 1e12) throw ConvergenceError("the drift flow from the guess diverges");
    if (inf_norm(drift(model, v)) <= 1e-6 * (1.0 + inf_norm(v))) break;
  }
  return Eigen::Map<const Vector>(x.data(), n).cwiseMax(0.0);
}

}  // namespace

Vector find_fixed_point(const DecomposedModel& model, const Vector& guess,
                        const FixedPointOptions& options) {
  if (static_cast<std::size_t>(guess.size()) != model.dim()) {
    throw ConfigError("fixed-point guess has the wrong dimension");
  }
  if ((guess.array() <= 0.0).any()) throw ConfigError("fixed-point guess must be positive componentwise");

  NewtonOutcome first = pseudo_transient_newton(model, guess, options);
  if (first.converged && strictly_positive(first.v)) return first.v;

  // The direct iteration stalled or reached the boundary (a trivial or
  // single-class equilibrium). Let the flow carry the guess into the basin of
  // the attracting point first, then polish.
  const Vector start = follow_flow(model, guess);
  NewtonOutcome second = strictly_positive(start) ? pseudo_transient_newton(model, start, options) : NewtonOutcome{start};
  if (second.converged && strictly_positive(second.v)) return second.v;

  const NewtonOutcome& best = first.converged ? first : second;
  if (best.converged) {
    std::ostringstream os;
    os << "fixed-point iteration only found a boundary equilibrium (";
    for (Eigen::Index i = 0; i < best.v.size(); ++i) os << (i ? ", " : "") << best.v[i];
    os << ")";
    throw ConvergenceError(os.str());
  }
  std::ostringstream os;
  os << "fixed-point iteration did not converge in " << options.max_iter << " iterations (residual "
     << std::min(first.residual, second.residual) << ")";
  throw ConvergenceError(os.str());
}

Spectrum stability_spectrum(const DecomposedModel& model, const Vector& h_tilde, double tol) {
  const Matrix j = drift_jacobian(model, h_tilde);
  Eigen::EigenSolver<Matrix> es(j, false);
  if (es.info() != Eigen::Success) throw NumericalError("eigensolver failed on the drift Jacobian");
  Spectrum s;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) s.eigenvalues.push_back(es.eigenvalues()[i]);
  std::sort(s.eigenvalues.begin(), s.eigenvalues.end(), [](const auto& a, const auto& b) {
    if (a.real() != b.real()) return a.real() > b.real();
    return a.imag() > b.imag();
  });
  s.stable = !s.eigenvalues.empty() && s.leading_real() < -tol;
  return s;
}

Vector left_null_vector(const DecomposedModel& model, const Vector& h_tilde, double tol) {
  const Matrix f = model.F(h_tilde);
  const auto n = f.rows();
  Eigen::JacobiSVD<Matrix> svd(f.transpose(), Eigen::ComputeFullV);
  const Vector& sv = svd.singularValues();
  const double scale = 1.0 + (sv.size() ? sv[0] : 0.0);
  if (sv[n - 1] > tol * scale) {
    std::ostringstream os;
    os << "F(h~) has no kernel (smallest singular value " << sv[n - 1] << ")";
    throw NumericalError(os.str());
  }
  if (n > 1 && sv[n - 2] <= tol * scale) throw NumericalError("kernel of F(h~) has dimension > 1");

  Vector h = svd.matrixV().col(n - 1);
  if (h.sum() < 0.0) h = -h;
  const double hmax = h.cwiseAbs().maxCoeff();
  if (h.minCoeff() < -tol * hmax) throw NumericalError("left null vector of F(h~) has no nonnegative representative");
  h = h.cwiseMax(0.0);
  const double norm = h.dot(h_tilde);
  if (!(norm > 0.0)) throw NumericalError("left null vector is orthogonal to h~");
  return h / norm;
}

std::optional<double> check_primitivity(const DecomposedModel& model, const Vector& h_tilde) {
  const Matrix f = model.F(h_tilde);
  for (double t0 : {1.0, 2.0, 4.0, 8.0}) {
    const Matrix e = (t0 * f).exp();
    if ((e.array() > 0.0).all()) return t0;
  }
  return std::nullopt;
}

Matrix pair_effective_sizes(const DecomposedModel& model, const Vector& h_tilde) {
  const Matrix aa = model.C(h_tilde).contract(h_tilde);
  const auto n = h_tilde.size();
  Matrix ne(n, n);
  for (Eigen::Index x = 0; x < n; ++x) {
    for (Eigen::Index y = 0; y < n; ++y) {
      ne(x, y) = aa(x, y) == 0.0 ? std::numeric_limits<double>::infinity()
                                 : h_tilde[x] * h_tilde[y] / aa(x, y);
    }
  }
  return ne;
}

SigmaSquared sigma_squared_both(const DecomposedModel& model, const Vector& h_tilde, const Vector& h,
                                double rel_tol) {
  const Matrix aa = model.C(h_tilde).contract(h_tilde);
  SigmaSquared s;
  s.quadratic_form = h.dot(aa * h);

  const Vector pi = h_tilde.cwiseProduct(h);
  const Matrix ne = pair_effective_sizes(model, h_tilde);
  double sum = 0.0;
  for (Eigen::Index x = 0; x < ne.rows(); ++x) {
    for (Eigen::Index y = 0; y < ne.cols(); ++y) {
      if (std::isinf(ne(x, y))) continue;
      sum += pi[x] * pi[y] / ne(x, y);
    }
  }
  s.ancestral_sum = sum;
  const double denom = std::max(std::abs(s.quadratic_form), std::numeric_limits<double>::min());
  s.relative_gap = s.quadratic_form == sum ? 0.0 : std::abs(s.quadratic_form - sum) / denom;
  if (s.relative_gap > rel_tol) {
    std::ostringstream os;
    os << "Sigma^2 formulas disagree: <h, aa* h> = " << s.quadratic_form
       << ", sum Pi Pi / n_e = " << sum;
    throw ConsistencyError(os.str());
  }
  return s;
}

double sigma_squared(const DecomposedModel& model, const Vector& h_tilde, const Vector& h) {
  return sigma_squared_both(model, h_tilde, h).quadratic_form;
}

double effective_population_size(double sigma_sq, double N) {
  if (!(sigma_sq > 0.0)) {
    throw NumericalError("Sigma^2 must be positive to define N_e = N / Sigma^2 (model has no genetic drift)");
  }
  return N / sigma_sq;
}

CensusBound census_bound_check(const DecomposedModel& model, const EquilibriumReport& report, double N) {
  CensusBound out;
  out.n_e = effective_population_size(report.sigma_sq, N);
  const Matrix aa = model.C(report.h_tilde).contract(report.h_tilde);
  Eigen::FullPivLU<Matrix> lu(aa);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) return out;
  out.bound = report.h_tilde.dot(lu.solve(report.h_tilde)) * N;
  out.holds = out.n_e <= *out.bound * (1.0 + 1e-12);
  return out;
}

EquilibriumReport analyze(const DecomposedModel& model, const Vector& guess, const FixedPointOptions& options) {
  EquilibriumReport r;
  r.h_tilde = find_fixed_point(model, guess, options);
  const Spectrum spec = stability_spectrum(model, r.h_tilde);
  r.jacobian_eigenvalues = spec.eigenvalues;
  r.stable = spec.stable;
  r.primitivity_t0 = check_primitivity(model, r.h_tilde);
  r.h = left_null_vector(model, r.h_tilde);
  r.pi = r.h_tilde.cwiseProduct(r.h);
  r.n_e = pair_effective_sizes(model, r.h_tilde);
  const SigmaSquared s = sigma_squared_both(model, r.h_tilde, r.h);
  r.sigma_sq = s.quadratic_form;
  r.sigma_sq_ancestral = s.ancestral_sum;

  const Matrix f = model.F(r.h_tilde);
  r.mean_matrix = f;
  Eigen::EigenSolver<Matrix> es(f, false);
  const double fscale = 1.0 + inf_norm(f);
  double gap = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const auto lambda = es.eigenvalues()[i];
    if (std::abs(lambda) > 1e-8 * fscale) gap = std::min(gap, std::abs(lambda.real()));
  }
  r.perron_gap = gap;
  return r;
}

Box default_admissible_box(const EquilibriumReport& report) {
  const auto n = report.h_tilde.size();
  return Box{Vector::Zero(n), Vector::Constant(n, 10.0 * report.h_tilde.maxCoeff())};
}

}  // namespace effpop
