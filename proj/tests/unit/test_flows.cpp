#include <doctest.h>

#include "effpop/equilibrium.hpp"
#include "effpop/flows.hpp"
#include "effpop/zoo.hpp"

#include <cmath>
#include <random>

using namespace effpop;

namespace {

ZooEntry logistic() {
  return local_branching(1, [](double x) { return 1.0 - x; }, [](double) { return 1.0; });
}

double logistic_solution(double v0, double t) { return v0 * std::exp(t) / (1.0 - v0 + v0 * std::exp(t)); }

}  // namespace

TEST_CASE("total flow follows the logistic closed form") {
  const ZooEntry z = logistic();
  const EquilibriumReport r = analyze(z.model, z.guess);
  for (double v0 : {0.05, 0.5, 3.0}) {
    FlowOptions o = flow_options_for(r);
    o.record = true;
    const FlowResult f = integrate_total_flow(z.model, Vector::Constant(1, v0), Horizon::fixed(4.0), o);
    CHECK(f.limit[0] == doctest::Approx(logistic_solution(v0, 4.0)).epsilon(1e-8));
    REQUIRE(f.times.size() > 2);
    for (std::size_t i = 0; i < f.times.size(); ++i) {
      CHECK(f.states[i][0] == doctest::Approx(logistic_solution(v0, f.times[i])).epsilon(1e-7));
    }
    const FlowResult c = integrate_total_flow(z.model, Vector::Constant(1, v0), Horizon::converged(), o);
    CHECK(c.converged);
    CHECK(c.limit[0] == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("reproductive value map of the logistic model is 1 / v0") {
  // W' = (1 - v) W integrates to W_t = w0 v_t / v0, so theta(v0, w0) = w0 / v0.
  const ZooEntry z = logistic();
  const EquilibriumReport r = analyze(z.model, z.guess);
  for (double v0 : {0.1, 0.7, 2.5}) {
    const Vector H = reproductive_value_map(z.model, r, Vector::Constant(1, v0));
    CHECK(H[0] == doctest::Approx(1.0 / v0).epsilon(1e-8));
    const double q = theta_by_quadrature(z.model, r, Vector::Constant(1, v0), Vector::Constant(1, 0.3),
                                         flow_options_for(r));
    CHECK(q == doctest::Approx(0.3 / v0).epsilon(1e-7));
  }
}

TEST_CASE("projection on the Lotka-Volterra model satisfies its identities") {
  const ZooEntry z = lotka_volterra();
  const EquilibriumReport r = analyze(z.model, z.guess);
  const Vector Hh = reproductive_value_map(z.model, r, r.h_tilde);
  CHECK((Hh - r.h).norm() < 1e-8);

  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    CompositionMatrix u(2, 3);
    for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = 4.0 * unit(gen);
    const ProjectionResult p = katzenberger_projection(z.model, r, u);
    CHECK(p.theta_sum_residual < 1e-8);
    CHECK(p.H_of_v.dot(column_sum(u)) == doctest::Approx(1.0).epsilon(1e-8));
    // pi^j = <H(S(u)), u^j> h~.
    for (Eigen::Index j = 0; j < 3; ++j) {
      CHECK(p.theta[j] == doctest::Approx(p.H_of_v.dot(u.col(j))).epsilon(1e-7));
    }
    // The quadrature representation agrees with the transported limit.
    const double q = theta_by_quadrature(z.model, r, column_sum(u), u.col(0), flow_options_for(r));
    CHECK(q == doctest::Approx(p.theta[0]).epsilon(1e-6));
    // theta is constant along the fraction flow.
    const CompositionMatrix moved = integrate_fraction_flow(z.model, u, 1.0, flow_options_for(r));
    const ProjectionResult pm = katzenberger_projection(z.model, r, moved);
    CHECK((pm.theta - p.theta).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("the fraction flow sums to the total flow") {
  const ZooEntry z = two_sex();
  const EquilibriumReport r = analyze(z.model, z.guess);
  CompositionMatrix u(2, 2);
  u << 0.3, 1.1, 2.0, 0.4;
  const CompositionMatrix ut = integrate_fraction_flow(z.model, u, 2.0, flow_options_for(r));
  const FlowResult tot = integrate_total_flow(z.model, column_sum(u), Horizon::fixed(2.0), flow_options_for(r));
  CHECK((column_sum(ut) - tot.limit).norm() < 1e-8);
}

TEST_CASE("points of Gamma are fixed by the projection") {
  const ZooEntry z = lotka_volterra();
  const EquilibriumReport r = analyze(z.model, z.guess);
  const Vector th = (Vector(3) << 0.2, 0.5, 0.3).finished();
  const CompositionMatrix u = r.h_tilde * th.transpose();
  const ProjectionResult p = katzenberger_projection(z.model, r, u);
  CHECK((p.theta - th).norm() < 1e-9);
  CHECK(pf_deviation(u, r.h, r.h_tilde).norm() < 1e-12);
  CHECK((pf_projection(u, r.h, r.h_tilde) - u).norm() < 1e-12);
  const CompositionMatrix zdev = pf_deviation(Matrix::Random(2, 3).cwiseAbs(), r.h, r.h_tilde);
  CHECK((zdev.transpose() * r.h).norm() < 1e-12);
}

TEST_CASE("gradient of theta is orthogonal to the drift and has the closed form on Gamma") {
  const ZooEntry z = lotka_volterra();
  const EquilibriumReport r = analyze(z.model, z.guess);
  CompositionMatrix off(2, 2);
  off << 0.8, 1.5, 3.0, 4.0;
  const GradientCheck g = theta_gradient_check(z.model, r, off);
  for (double o : g.drift_orthogonality) CHECK(o < 1e-6);
  for (const auto& row : g.invariance_deviation)
    for (double d : row) CHECK(d < 1e-6);
  CHECK(g.dh_formula_max_abs_diff < 1e-6);
  CHECK_FALSE(g.on_gamma_max_abs_diff.has_value());

  const CompositionMatrix on = r.h_tilde * (Vector(2) << 0.35, 0.65).finished().transpose();
  const GradientCheck gg = theta_gradient_check(z.model, r, on);
  REQUIRE(gg.on_gamma_max_abs_diff.has_value());
  CHECK(*gg.on_gamma_max_abs_diff < 1e-7);
}

TEST_CASE("second-order identity on Gamma for the two-sex model") {
  const ZooEntry z = two_sex();
  const EquilibriumReport r = analyze(z.model, z.guess);
  const CompositionMatrix on = r.h_tilde * (Vector(2) << 0.3, 0.7).finished().transpose();
  const TraceCheck t = trace_identity_check(z.model, r, on);
  for (double rel : t.relative_trace) CHECK(rel < 1e-4);
  CHECK(t.covariance_max_rel_error < 1e-5);
  CHECK(t.wright_fisher_covariance(0, 0) == doctest::Approx(r.sigma_sq * 0.3 * 0.7));
}

TEST_CASE("a start outside the basin is reported") {
  const ZooEntry z = lotka_volterra();
  const EquilibriumReport r = analyze(z.model, z.guess);
  CompositionMatrix u(2, 1);
  u << 0.0, 0.0;
  CHECK_THROWS_AS(katzenberger_projection(z.model, r, u), ConvergenceError);
}
