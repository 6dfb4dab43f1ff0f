#include <doctest.h>

#include "effpop/coalescent.hpp"
#include "effpop/equilibrium.hpp"
#include "effpop/ibm.hpp"
#include "effpop/model.hpp"
#include "effpop/zoo.hpp"

#include <cmath>

using namespace effpop;

namespace {

RateSpec single_class(double birth, double death) {
  RateSpec s;
  s.space = TypeSpace({"a"});
  if (birth > 0.0) s.events.push_back({0, (Eigen::VectorXi(1) << 2).finished(), [birth](const Vector&) { return birth; }, "birth"});
  if (death > 0.0) s.events.push_back({0, Eigen::VectorXi::Zero(1), [death](const Vector&) { return death; }, "death"});
  return s;
}

}  // namespace

TEST_CASE("rates reproduce the Lotka-Volterra mean matrix and covariance tensor") {
  LotkaVolterraParams p;
  const RateSpec spec = lotka_volterra_rates(p);
  const ZooEntry z = lotka_volterra(p);
  const auto points = sample_box(Box{Vector::Constant(2, 0.1), Vector::Constant(2, 12.0)}, 20, 2);
  for (const Vector& v : points) {
    Matrix f(2, 2);
    f << p.b0 + p.b11 * v[0] + (p.b12 - p.alpha) * v[1], p.alpha * v[0],
         p.beta * v[1], p.b0 + p.b22 * v[1] + (p.b21 - p.beta) * v[0];
    CHECK((mean_matrix_from_rates(spec, v) - f).cwiseAbs().maxCoeff() < 1e-12);
    // Birth and death contribute +1 each to the diagonal slice of the parent's
    // class; a cross-birth by z adds one individual of the other class.
    const CovarianceTensor c = covariance_tensor_from_rates(spec, v);
    const double d1 = -p.b11 * v[0] - (p.b12 - p.alpha) * v[1];
    const double d2 = -p.b22 * v[1] - (p.b21 - p.beta) * v[0];
    CHECK(c(0, 0, 0) == doctest::Approx(p.b0 + d1).epsilon(1e-12));
    CHECK(c(1, 1, 0) == doctest::Approx(p.beta * v[1]).epsilon(1e-12));
    CHECK(c(0, 0, 1) == doctest::Approx(p.alpha * v[0]).epsilon(1e-12));
    CHECK(c(1, 1, 1) == doctest::Approx(p.b0 + d2).epsilon(1e-12));
    CHECK(c(0, 1, 0) == 0.0);
    CHECK(c(0, 1, 1) == 0.0);
  }
  const CorrespondenceReport rep = diffusion_consistency(spec, z.model, points);
  CHECK(rep.algebraic_match);
  CHECK(rep.ok());
}

TEST_CASE("model built from rates satisfies the decomposition requirements") {
  const DecomposedModel m = model_from_rates(lotka_volterra_rates());
  const auto points = sample_box(Box{Vector::Constant(2, 0.1), Vector::Constant(2, 8.0)}, 10, 4);
  CHECK(check_assumptions(m, points).all_pass());
}

TEST_CASE("pure death chain is binomial thinning") {
  const double mu = 0.7, t = 1.0;
  const int n0 = 50;
  const RateSpec spec = single_class(0.0, mu);
  double sum = 0.0, sum2 = 0.0;
  const int reps = 3000;
  for (int r = 0; r < reps; ++r) {
    const IbmTrajectory tr = gillespie(spec, 50.0, Eigen::VectorXi::Constant(1, n0), t, 21, {}, static_cast<std::uint32_t>(r));
    const double n = tr.counts.back()[0];
    sum += n;
    sum2 += n * n;
  }
  const double p = std::exp(-mu * t);
  const double mean = sum / reps, var = sum2 / reps - mean * mean;
  CHECK(std::abs(mean - n0 * p) < 4.0 * std::sqrt(n0 * p * (1 - p) / reps));
  CHECK(var == doctest::Approx(n0 * p * (1 - p)).epsilon(0.1));
}

TEST_CASE("Yule process grows at the birth rate and extinction is recorded") {
  const RateSpec yule = single_class(1.0, 0.0);
  double sum = 0.0;
  const int reps = 2000;
  for (int r = 0; r < reps; ++r) {
    sum += gillespie(yule, 10.0, Eigen::VectorXi::Constant(1, 5), 1.0, 3, {}, static_cast<std::uint32_t>(r)).counts.back()[0];
  }
  // Var of a Yule population from 5 is 5 e^t (e^t - 1).
  const double se = std::sqrt(5.0 * std::exp(1.0) * (std::exp(1.0) - 1.0) / reps);
  CHECK(std::abs(sum / reps - 5.0 * std::exp(1.0)) < 4.0 * se);

  const IbmTrajectory dead = gillespie(single_class(0.0, 5.0), 10.0, Eigen::VectorXi::Constant(1, 2), 100.0, 1);
  CHECK(dead.extinct);
  CHECK(dead.extinction_time < 100.0);
  CHECK(dead.counts.back()[0] == 0);
}

TEST_CASE("Gillespie runs are reproducible and reject negative rates") {
  const RateSpec spec = lotka_volterra_rates();
  GillespieOptions o;
  o.record_every = 0.5;
  const Eigen::VectorXi v0 = (Eigen::VectorXi(2) << 50, 150).finished();
  const IbmTrajectory a = gillespie(spec, 20.0, v0, 5.0, 7, o, 2);
  const IbmTrajectory b = gillespie(spec, 20.0, v0, 5.0, 7, o, 2);
  CHECK(a.events == b.events);
  CHECK(a.counts.back() == b.counts.back());
  CHECK(a.times.size() == 11);

  RateSpec bad = single_class(1.0, 0.0);
  bad.events[0].rate = [](const Vector&) { return -1.0; };
  CHECK_THROWS_AS(gillespie(bad, 1.0, Eigen::VectorXi::Constant(1, 3), 1.0, 0), NumericalError);
}

TEST_CASE("single-class coalescence time is N n_e") {
  const ZooEntry z = make_zoo_entry("local_branching");
  const EquilibriumReport r = analyze(z.model, z.guess);
  const CoalescentRates rates = build_rates(r, 300.0);
  CHECK(expected_pair_coalescence_time(rates) == doctest::Approx(300.0).epsilon(1e-12));
  const PairSample s = simulate_pair(rates, 5, 4000);
  CHECK(std::abs(s.mean - 300.0) < 4.0 * s.standard_error);
  // Exponential holding time: coefficient of variation 1.
  CHECK(s.coefficient_of_variation == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("two symmetric sites solve by first-step analysis") {
  // Same-site pairs coalesce at 2 / N and split at 0.6; split pairs rejoin at
  // 0.6. Hence T_same = N and T_split = N + 1 / 0.6.
  const double mig = 0.3, N = 400.0;
  Matrix m(2, 2);
  m << -mig, mig, mig, -mig;
  const ZooEntry z = local_branching(2, [](double x) { return 1.0 - x; }, [](double) { return 2.0; }, m);
  const EquilibriumReport r = analyze(z.model, z.guess);
  const CoalescentRates rates = build_rates(r, N);
  CHECK(rates.migration(0, 1) == doctest::Approx(mig));
  CHECK(rates.coalescence(0, 0) == doctest::Approx(2.0 / N));
  CHECK(rates.coalescence(0, 1) == 0.0);
  CHECK(rates.stationarity_residual < 1e-12);
  const PairChain chain = pair_chain(rates);
  CHECK(chain.states.size() == 3);
  for (Eigen::Index i = 0; i < chain.generator.rows(); ++i) {
    CHECK(chain.generator.row(i).sum() == doctest::Approx(-chain.coalescence_rate[i]));
  }
  Vector same(3), split(3);
  same.setZero();
  split.setZero();
  same[chain.index(0, 0)] = 1.0;
  split[chain.index(1, 0)] = 1.0;
  CHECK(expected_pair_coalescence_time(rates, same) == doctest::Approx(N).epsilon(1e-10));
  CHECK(expected_pair_coalescence_time(rates, split) == doctest::Approx(N + 1.0 / 0.6).epsilon(1e-10));
  CHECK(expected_pair_coalescence_time(rates) == doctest::Approx(N + 0.5 / 0.6).epsilon(1e-10));
}

TEST_CASE("coalescent timescale matches N / Sigma^2 on the Lotka-Volterra and two-sex models") {
  for (const ZooEntry& z : {lotka_volterra(), two_sex()}) {
    const EquilibriumReport r = analyze(z.model, z.guess);
    const double N = 1e4;
    const double t = expected_pair_coalescence_time(build_rates(r, N));
    CHECK(std::abs(t * r.sigma_sq / N - 1.0) < 0.05);
    const PairSample s = simulate_pair(build_rates(r, 200.0), 9, 3000);
    CHECK(std::abs(s.mean - expected_pair_coalescence_time(build_rates(r, 200.0))) < 4.0 * s.standard_error);
  }
}

TEST_CASE("a chain that cannot coalesce is singular") {
  const ZooEntry z = local_branching(1, [](double x) { return 1.0 - x; }, [](double) { return 0.0; });
  const EquilibriumReport r = analyze(z.model, z.guess);
  CHECK_THROWS_AS(expected_pair_coalescence_time(build_rates(r, 100.0)), NumericalError);
}
