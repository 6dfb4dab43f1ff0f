#include <doctest.h>

#include "effpop/equilibrium.hpp"
#include "effpop/sde.hpp"
#include "effpop/zoo.hpp"

#include <cmath>

using namespace effpop;

namespace {

struct Moments {
  double mean = 0.0;
  double var = 0.0;
  double se() const { return std::sqrt(var / n); }
  double n = 0.0;
};

Moments moments(const std::vector<double>& x) {
  Moments m;
  m.n = static_cast<double>(x.size());
  for (double v : x) m.mean += v;
  m.mean /= m.n;
  for (double v : x) m.var += (v - m.mean) * (v - m.mean);
  m.var /= m.n - 1.0;
  return m;
}

}  // namespace

TEST_CASE("without noise the total process is the Euler scheme for the logistic ODE") {
  const ZooEntry z = local_branching(1, [](double x) { return 1.0 - x; }, [](double) { return 0.0; });
  SimulationConfig c;
  c.N = 100.0;
  c.dt = 1e-4;
  c.t_end = 3.0;
  c.max_records = 4;
  const Trajectory tr = simulate_total(z.model, Vector::Constant(1, 0.2), c);
  const double exact = 0.2 * std::exp(3.0) / (0.8 + 0.2 * std::exp(3.0));
  CHECK(tr.states.back()(0, 0) == doctest::Approx(exact).epsilon(1e-3));
  CHECK(tr.times.back() == doctest::Approx(3.0));
}

TEST_CASE("Feller branching diffusion has the exact mean and variance") {
  // dV = r V dt + sqrt(g V / N) dW: E V_t = V0 e^{rt},
  // Var V_t = g V0 e^{rt} (e^{rt} - 1) / (r N).
  const double r = 0.5, g = 1.0, N = 50.0, v0 = 1.0, t = 1.0;
  const ZooEntry z = local_branching(1, [r](double) { return r; }, [g](double) { return g; });
  SimulationConfig c;
  c.N = N;
  c.dt = 1e-3;
  c.t_end = t;
  c.replicates = 4000;
  c.seed = 11;
  c.max_records = 2;
  const auto runs = simulate_total_batch(z.model, Vector::Constant(1, v0), c);
  std::vector<double> end;
  for (const auto& tr : runs) end.push_back(tr.states.back()(0, 0));
  const Moments m = moments(end);
  const double mean = v0 * std::exp(r * t);
  const double var = g * v0 * std::exp(r * t) * (std::exp(r * t) - 1.0) / (r * N);
  CHECK(std::abs(m.mean - mean) < 4.0 * m.se());
  // The sample variance has relative SE about sqrt(2 / n) for near-Gaussian data.
  CHECK(m.var == doctest::Approx(var).epsilon(4.0 * std::sqrt(2.0 / 4000.0) + 0.01));
}

TEST_CASE("replicates are reproducible and independent of the thread count") {
  const ZooEntry z = lotka_volterra();
  SimulationConfig c;
  c.K = 3;
  c.t_end = 1.0;
  c.replicates = 6;
  c.seed = 99;
  c.threads = 1;
  const CompositionMatrix u0 = equal_split(Vector::Ones(2), 3);
  const auto a = simulate_fractions_batch(z.model, u0, c);
  c.threads = 3;
  const auto b = simulate_fractions_batch(z.model, u0, c);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].states.back() == b[i].states.back());
  CHECK(a[0].states.back() != a[1].states.back());
  const Trajectory single = simulate_fractions(z.model, u0, c, 4);
  CHECK(single.states.back() == a[4].states.back());
}

TEST_CASE("fraction columns stay nonnegative under both boundary policies") {
  const ZooEntry z = lotka_volterra();
  for (BoundaryPolicy p : {BoundaryPolicy::full_truncation, BoundaryPolicy::reflect}) {
    SimulationConfig c;
    c.N = 5.0;
    c.K = 4;
    c.t_end = 5.0;
    c.boundary = p;
    c.seed = 1;
    const Trajectory tr = simulate_fractions(z.model, equal_split(Vector::Ones(2), 4), c);
    for (const Matrix& s : tr.states) CHECK(s.minCoeff() >= 0.0);
  }
  CHECK(boundary_policy_from_string(to_string(BoundaryPolicy::reflect)) == BoundaryPolicy::reflect);
  CHECK(clock_from_string("evolutionary") == Clock::evolutionary);
  CHECK_THROWS_AS(boundary_policy_from_string("absorb"), ConfigError);
}

TEST_CASE("Wright-Fisher reference has martingale mean and exponential heterozygosity") {
  const Vector th0 = (Vector(2) << 0.3, 0.7).finished();
  const auto runs = simulate_wright_fisher_batch(th0, 1e-3, 0.5, 8, 4000, 2);
  std::vector<double> first, het;
  for (const auto& tr : runs) {
    const Matrix& s = tr.states.back();
    CHECK(s.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.minCoeff() >= 0.0);
    first.push_back(s(0, 0));
    het.push_back(2.0 * s(0, 0) * s(1, 0));
  }
  const Moments m = moments(first), h = moments(het);
  CHECK(std::abs(m.mean - 0.3) < 4.0 * m.se());
  CHECK(std::abs(h.mean - 2.0 * 0.21 * std::exp(-0.5)) < 4.0 * h.se());
}

TEST_CASE("theta_hat normalises clipped proportions") {
  Matrix u(2, 3);
  u << 1.0, 2.0, -5.0, 3.0, 0.0, 0.0;
  const Vector h = Vector::Ones(2);
  const Vector th = theta_hat(u, h);
  CHECK(th[0] == doctest::Approx(4.0 / 6.0));
  CHECK(th[2] == 0.0);
  CHECK_THROWS_AS(theta_hat(Matrix::Zero(2, 2), h), NumericalError);
}

TEST_CASE("rescaled process maps the evolutionary clock and needs drift") {
  const ZooEntry z = lotka_volterra();
  const EquilibriumReport r = analyze(z.model, z.guess);
  CHECK(burn_in_time(r, 200.0) == doctest::Approx(10.0 * std::log(200.0) / (3.0 / 7.0)));
  SimulationConfig c;
  c.K = 2;
  c.t_end = 0.2;
  c.seed = 3;
  c.clock = Clock::evolutionary;
  RescaledOptions o;
  o.probe_times = {0.0, 0.1, 0.2};
  const RescaledTrajectory tr = rescaled_fraction_process(z.model, r, equal_split(r.h_tilde, 2), c, o);
  REQUIRE(tr.times.size() == 3);
  CHECK(tr.times[2] == doctest::Approx(0.2).epsilon(1e-3));
  for (Eigen::Index i = 0; i < tr.theta.rows(); ++i) CHECK(tr.theta.row(i).sum() == doctest::Approx(1.0));

  const ZooEntry silent = local_branching(1, [](double x) { return 1.0 - x; }, [](double) { return 0.0; });
  const EquilibriumReport rs = analyze(silent.model, silent.guess);
  try {
    rescaled_fraction_process(silent.model, rs, Matrix::Constant(1, 2, 0.5), c);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("N_e") != std::string::npos);
  }
}
