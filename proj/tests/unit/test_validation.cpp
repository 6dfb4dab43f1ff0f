#include <doctest.h>

#include "effpop/equilibrium.hpp"
#include "effpop/sde.hpp"
#include "effpop/validation.hpp"
#include "effpop/zoo.hpp"

#include <cmath>
#include <random>

using namespace effpop;

TEST_CASE("decay fit recovers the rate of exact exponential data") {
  const std::vector<double> times{0.25, 0.5, 1.0};
  std::vector<Matrix> reps;
  // Two deterministic "replicates" with 2 theta (1 - theta) = 0.5 e^{-1.3 t}.
  for (int r = 0; r < 2; ++r) {
    Matrix th(3, 2);
    for (int i = 0; i < 3; ++i) {
      const double het = 0.5 * std::exp(-1.3 * times[static_cast<std::size_t>(i)]);
      const double a = 0.5 * (1.0 + std::sqrt(1.0 - 2.0 * het));
      th(i, 0) = r == 0 ? a : 1.0 - a;
      th(i, 1) = 1.0 - th(i, 0);
    }
    reps.push_back(th);
  }
  const DecayFit fit = fit_heterozygosity_decay(times, reps);
  CHECK(fit.rate == doctest::Approx(1.3).epsilon(1e-10));
}

TEST_CASE("moment gates accept equal samples and reject a shifted one") {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> n01;
  std::vector<double> a, b, shifted;
  for (int i = 0; i < 2000; ++i) {
    a.push_back(n01(gen));
    b.push_back(n01(gen));
    shifted.push_back(n01(gen) + 0.5);
  }
  const MomentGate same = compare_moments("same", a, a);
  CHECK(same.mean_z == 0.0);
  CHECK(same.passed);
  CHECK(compare_moments("b", a, b).passed);
  CHECK_FALSE(compare_moments("shift", a, shifted).passed);
}

TEST_CASE("increment covariance regression has unit slope on Wright-Fisher paths") {
  const Vector th0 = Vector::Constant(2, 0.5);
  const auto runs = simulate_wright_fisher_batch(th0, 1e-3, 0.2, 17, 1500, 11);
  std::vector<Matrix> samples;
  for (const auto& tr : runs) {
    Matrix m(static_cast<Eigen::Index>(tr.states.size()), 2);
    for (std::size_t i = 0; i < tr.states.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = tr.states[i].transpose();
    samples.push_back(m);
  }
  const CovarianceRegression reg = regress_increment_covariance(samples, 0.02);
  CHECK(reg.slope == doctest::Approx(1.0).epsilon(0.1));
  CHECK(reg.diagonal_mean_product > 0.0);
  CHECK(reg.offdiagonal_mean_product < 0.0);
}

TEST_CASE("Wright-Fisher reference passes its own harness") {
  HeterozygosityOptions h;
  h.replicates = 2000;
  h.tolerance = 0.1;
  const TestReport hr = heterozygosity_decay_test_wf(h);
  CHECK_MESSAGE(hr.passed, to_json(hr).dump());
  FixationOptions f;
  f.replicates = 500;
  const TestReport fr = fixation_probability_test_wf(f);
  CHECK_MESSAGE(fr.passed, to_json(fr).dump());
  CHECK(to_json(fr).at("name").get<std::string>().find("fixation") != std::string::npos);
}

TEST_CASE("consistency harness on a small Lotka-Volterra run") {
  const ZooEntry z = lotka_volterra();
  const EquilibriumReport r = analyze(z.model, z.guess);
  ConsistencyOptions o;
  o.replicates = 150;
  o.times = {0.1};
  const TestReport rep = consistency_exchangeability_test(z.model, r, equal_split(Vector::Ones(2), 3), o);
  CHECK(rep.statistic >= 0.0);
  CHECK(rep.details.contains("gates"));
  // With the identity permutation and shared seeds the permuted run is the base run.
  o.permutation = {0, 1, 2};
  o.independent_seeds = false;
  const TestReport same = consistency_exchangeability_test(z.model, r, equal_split(Vector::Ones(2), 3), o);
  for (const auto& g : same.details["gates"]) {
    if (g["label"].get<std::string>().rfind("permute", 0) == 0) CHECK(g["mean_z"].get<double>() == 0.0);
  }
}

TEST_CASE("stability diagnostics and median") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  const ZooEntry z = lotka_volterra();
  const EquilibriumReport r = analyze(z.model, z.guess);
  SimulationConfig c;
  c.K = 2;
  c.t_end = 20.0;
  c.N = 1e6;
  const Trajectory tr = simulate_fractions(z.model, equal_split(Vector::Ones(2), 2), c);
  const StabilitySeries s = stability_diagnostics(tr, r);
  CHECK(s.total_deviation.front() > 1.0);
  CHECK(s.total_deviation.back() < 0.05);
  CHECK(s.dist_gamma.back() < 0.05);
}
