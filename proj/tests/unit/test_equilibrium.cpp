#include <doctest.h>

#include "effpop/equilibrium.hpp"
#include "effpop/zoo.hpp"

#include <cmath>

using namespace effpop;

namespace {

// Lotka-Volterra equilibrium by Cramer's rule on the two nullclines.
Vector lv_equilibrium(const LotkaVolterraParams& p) {
  const double det = p.b11 * p.b22 - p.b12 * p.b21;
  Vector v(2);
  v << (-p.b0 * p.b22 + p.b12 * p.b0) / det, (-p.b11 * p.b0 + p.b21 * p.b0) / det;
  return v;
}

// Left null vector of a 2x2 matrix [[a, b], [c, d]] with zero determinant,
// normalised against w.
Vector left_null_2x2(const Matrix& f, const Vector& w) {
  Vector h(2);
  h << f(1, 0), -f(0, 0);
  if (std::abs(h[0]) + std::abs(h[1]) == 0.0) h << f(1, 1), -f(0, 1);
  return h / h.dot(w);
}

}  // namespace

TEST_CASE("Lotka-Volterra equilibrium, reproductive values and Sigma^2 match hand formulas") {
  for (double alpha : {0.05, 0.1}) {
    for (double beta : {0.02, 0.1}) {
      LotkaVolterraParams p;
      p.alpha = alpha;
      p.beta = beta;
      const ZooEntry z = lotka_volterra(p);
      const EquilibriumReport r = analyze(z.model, z.guess);
      const Vector ht = lv_equilibrium(p);
      CHECK((r.h_tilde - ht).norm() < 1e-10);

      Matrix f(2, 2);
      f << p.b0 + p.b11 * ht[0] + (p.b12 - alpha) * ht[1], alpha * ht[0],
           beta * ht[1], p.b0 + p.b22 * ht[1] + (p.b21 - beta) * ht[0];
      CHECK((r.mean_matrix - f).norm() < 1e-12);
      const Vector h = left_null_2x2(f, ht);
      CHECK((r.h - h).norm() < 1e-10);

      const double aa11 = 2.0 * ht[0] * (p.b0 + alpha * ht[1]);
      const double aa22 = 2.0 * ht[1] * (p.b0 + beta * ht[0]);
      const double s2 = h[0] * h[0] * aa11 + h[1] * h[1] * aa22;
      CHECK(r.sigma_sq == doctest::Approx(s2).epsilon(1e-10));
      CHECK(r.sigma_sq_ancestral == doctest::Approx(s2).epsilon(1e-10));
      CHECK(r.stable);
    }
  }
}

TEST_CASE("Sigma^2 does not depend on the decomposition for the drift") {
  // Different (alpha, beta) give the same drift but different fraction noise;
  // the equilibrium must not move.
  LotkaVolterraParams a, b;
  b.alpha = 0.03;
  b.beta = 0.07;
  const EquilibriumReport ra = analyze(lotka_volterra(a).model, Vector::Ones(2));
  const EquilibriumReport rb = analyze(lotka_volterra(b).model, Vector::Ones(2));
  CHECK((ra.h_tilde - rb.h_tilde).norm() < 1e-10);
}

TEST_CASE("the Lotka-Volterra reference point has the published spectrum") {
  const ZooEntry z = lotka_volterra();
  const EquilibriumReport r = analyze(z.model, z.guess);
  CHECK(r.h_tilde[0] == doctest::Approx(20.0 / 7.0).epsilon(1e-12));
  CHECK(r.h_tilde[1] == doctest::Approx(60.0 / 7.0).epsilon(1e-12));
  // Jacobian of the drift at h~: diag(h~) B with B the interaction matrix.
  Matrix j(2, 2);
  j << -0.2 * r.h_tilde[0], -0.05 * r.h_tilde[0], -0.05 * r.h_tilde[1], -0.1 * r.h_tilde[1];
  const double tr = j.trace(), det = j.determinant();
  const double disc = std::sqrt(tr * tr - 4.0 * det);
  REQUIRE(r.jacobian_eigenvalues.size() == 2);
  CHECK(r.jacobian_eigenvalues[0].real() == doctest::Approx((tr + disc) / 2.0).epsilon(1e-10));
  CHECK(r.jacobian_eigenvalues[1].real() == doctest::Approx((tr - disc) / 2.0).epsilon(1e-10));
  CHECK(r.primitivity_t0.has_value());
  CHECK(r.pi.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(drift_jacobian(z.model, r.h_tilde).isApprox(j, 1e-10));
}

TEST_CASE("Newton with pseudo-transient continuation reaches h~ from remote guesses") {
  const ZooEntry z = lotka_volterra();
  const std::vector<Vector> guesses{Vector::Constant(2, 0.01), Vector::Constant(2, 50.0), (Vector(2) << 30.0, 0.1).finished()};
  for (const Vector& g : guesses) {
    const Vector v = find_fixed_point(z.model, g);
    CHECK((v - z.closed_forms->h_tilde).norm() < 1e-9);
  }
  CHECK_THROWS_AS(find_fixed_point(z.model, Vector::Ones(3)), ConfigError);
  CHECK_THROWS_AS(find_fixed_point(z.model, Vector::Zero(2)), ConfigError);
}

TEST_CASE("two-sex model matches its closed forms derived from the drift") {
  for (double p : {0.2, 0.5, 0.7}) {
    for (double alpha : {0.05, 0.125, 0.4}) {
      const ZooEntry z = two_sex(p, alpha);
      const EquilibriumReport r = analyze(z.model, z.guess);
      // Balancing births p m f / 2 against deaths alpha (m + f)^2 m / 4.
      const double n = 2.0 * p * (1.0 - p) / alpha;
      const Vector ht = (Vector(2) << p * n, (1.0 - p) * n).finished();
      CHECK((r.h_tilde - ht).norm() < 1e-8 * ht.norm());
      const Vector h = left_null_2x2(r.mean_matrix, ht);
      CHECK((r.h - h).norm() < 1e-8 * h.norm());
      const double m = ht[0], f = ht[1], tot2 = n * n;
      const double aa_m = p * f * m + 0.5 * alpha * m * tot2;
      const double aa_f = (1.0 - p) * f * m + 0.5 * alpha * f * tot2;
      const double s2 = h[0] * h[0] * aa_m + h[1] * h[1] * aa_f;
      CHECK(r.sigma_sq == doctest::Approx(s2).epsilon(1e-8));
      CHECK(z.closed_forms->inverse_ne(1000.0) == doctest::Approx(r.sigma_sq / 1000.0).epsilon(1e-8));
    }
  }
}

TEST_CASE("two-site branching with symmetric migration") {
  const double mig = 0.3;
  Matrix m(2, 2);
  m << -mig, mig, mig, -mig;
  const ZooEntry z = local_branching(2, [](double x) { return 1.0 - x; }, [](double) { return 2.0; }, m);
  const EquilibriumReport r = analyze(z.model, z.guess);
  CHECK((r.h_tilde - Vector::Ones(2)).norm() < 1e-10);
  CHECK((r.h - Vector::Constant(2, 0.5)).norm() < 1e-10);
  // aa*(h~) = diag(g h~) = 2 I.
  CHECK(r.sigma_sq == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(std::isinf(r.n_e(0, 1)));
  CHECK(r.n_e(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("single-class model is handled") {
  const ZooEntry z = make_zoo_entry("local_branching");
  const EquilibriumReport r = analyze(z.model, z.guess);
  CHECK(r.h_tilde[0] == doctest::Approx(1.0));
  CHECK(r.h[0] == doctest::Approx(1.0));
  CHECK(r.sigma_sq == doctest::Approx(1.0));
  const CensusBound cb = census_bound_check(z.model, r, 100.0);
  REQUIRE(cb.bound);
  CHECK(*cb.bound == doctest::Approx(100.0));
  CHECK(cb.holds);
}

TEST_CASE("a model without noise has no effective size") {
  const ZooEntry z = local_branching(1, [](double x) { return 1.0 - x; }, [](double) { return 0.0; });
  const EquilibriumReport r = analyze(z.model, z.guess);
  CHECK(r.sigma_sq == 0.0);
  CHECK_THROWS_AS(effective_population_size(r.sigma_sq, 100.0), NumericalError);
}

TEST_CASE("census bound holds for the Lotka-Volterra and two-sex models") {
  for (const ZooEntry& z : {lotka_volterra(), two_sex()}) {
    const EquilibriumReport r = analyze(z.model, z.guess);
    const CensusBound cb = census_bound_check(z.model, r, 500.0);
    REQUIRE(cb.bound);
    CHECK(cb.holds);
    CHECK(cb.n_e == doctest::Approx(500.0 / r.sigma_sq));
  }
}

TEST_CASE("zoo factory validates names and parameters") {
  CHECK_THROWS_AS(make_zoo_entry("nope"), ConfigError);
  CHECK_THROWS_AS(make_zoo_entry("two_sex", {{"q", 1.0}}), ConfigError);
  CHECK_THROWS_AS(make_zoo_entry("two_sex", {{"p", 1.5}}), ConfigError);
  const ZooEntry lb = make_zoo_entry("local_branching", {{"size", 2}, {"r", "2 - x"}, {"migration", {{-0.1, 0.1}, {0.1, -0.1}}}});
  const EquilibriumReport r = analyze(lb.model, lb.guess);
  CHECK((r.h_tilde - Vector::Constant(2, 2.0)).norm() < 1e-10);
}
