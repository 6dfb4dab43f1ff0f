// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
// `effpop_acceptance 3 8` runs only the listed criteria.

#include "effpop/coalescent.hpp"
#include "effpop/equilibrium.hpp"
#include "effpop/flows.hpp"
#include "effpop/ibm.hpp"
#include "effpop/parallel.hpp"
#include "effpop/validation.hpp"
#include "effpop/zoo.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

using namespace effpop;

namespace {

struct Outcome {
  bool passed = false;
  std::string summary;
};

double relative(double got, double want) { return std::abs(got - want) / std::max(std::abs(want), 1e-300); }

double max_relative(const Vector& got, const Vector& want) {
  return (got - want).cwiseAbs().maxCoeff() / std::max(want.cwiseAbs().maxCoeff(), 1e-300);
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(4);
  os << x;
  return os.str();
}

Outcome fixed_point() {
  const ZooEntry z = make_zoo_entry("lotka_volterra");
  const EquilibriumReport r = analyze(z.model, z.guess);
  const double err = std::max(std::abs(r.h_tilde[0] - 2.857143), std::abs(r.h_tilde[1] - 8.571429));
  return {err <= 1e-6, "h~ = (" + fmt(r.h_tilde[0]) + ", " + fmt(r.h_tilde[1]) + "), max |diff| = " + fmt(err)};
}

Outcome sigma_dual() {
  double worst = 0.0;
  std::string names;
  for (const std::string& name : zoo_names()) {
    const ZooEntry z = make_zoo_entry(name);
    const Vector ht = find_fixed_point(z.model, z.guess);
    const Vector h = left_null_vector(z.model, ht);
    const SigmaSquared s = sigma_squared_both(z.model, ht, h, 1.0);
    worst = std::max(worst, s.relative_gap);
    names += (names.empty() ? "" : ", ") + name;
  }
  return {worst <= 1e-10, "max relative gap " + fmt(worst) + " over " + names};
}

Outcome two_sex_grid() {
  double worst = 0.0;
  const double N = 1000.0;
  for (double p : {0.2, 0.35, 0.5, 0.65, 0.8}) {
    for (double alpha : {0.05, 0.1, 0.125, 0.25, 0.5}) {
      const ZooEntry z = two_sex(p, alpha);
      const EquilibriumReport r = analyze(z.model, z.guess);
      const ClosedForms& cf = *z.closed_forms;
      worst = std::max({worst, max_relative(r.h_tilde, cf.h_tilde), max_relative(r.h, cf.h),
                        relative(r.sigma_sq, cf.sigma_sq), relative(r.sigma_sq / N, cf.inverse_ne(N))});
    }
  }
  return {worst <= 1e-8, "max relative error " + fmt(worst) + " over 25 (p, alpha) points"};
}

Outcome projection_identities() {
  const ZooEntry z = make_zoo_entry("lotka_volterra");
  const EquilibriumReport r = analyze(z.model, z.guess);
  const FlowOptions opts = flow_options_for(r);
  const double hh = (reproductive_value_map(z.model, r, r.h_tilde, opts, 1.0) - r.h).norm();

  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> unit(0.02, 1.0);
  const int K = 3;
  double pairing = 0.0, invariance = 0.0, sum = 0.0;
  for (int point = 0; point < 50; ++point) {
    CompositionMatrix u(2, K);
    for (Eigen::Index x = 0; x < 2; ++x)
      for (Eigen::Index k = 0; k < K; ++k) u(x, k) = 2.0 * r.h_tilde[x] * unit(gen) / K;
    const Vector v0 = column_sum(u);
    const Vector H = reproductive_value_map(z.model, r, v0, opts, 1.0);
    pairing = std::max(pairing, std::abs(H.dot(v0) - 1.0));
    const ProjectionResult p = katzenberger_projection(z.model, r, u, opts, 1.0);
    sum = std::max(sum, p.theta_sum_residual);
    for (double t : {0.5, 1.0, 5.0}) {
      const CompositionMatrix moved = integrate_fraction_flow(z.model, u, t, opts);
      const ProjectionResult pm = katzenberger_projection(z.model, r, moved, opts, 1.0);
      invariance = std::max(invariance, (pm.theta - p.theta).cwiseAbs().maxCoeff());
    }
  }
  const bool ok = pairing <= 1e-8 && hh <= 1e-8 && invariance <= 1e-6 && sum <= 1e-8;
  return {ok, "|<H,v0>-1| " + fmt(pairing) + ", ||H(h~)-h|| " + fmt(hh) + ", invariance " + fmt(invariance) +
                  ", |sum theta - 1| " + fmt(sum)};
}

Outcome second_order() {
  const ZooEntry z = make_zoo_entry("lotka_volterra");
  const EquilibriumReport r = analyze(z.model, z.guess);
  std::mt19937_64 gen(7);
  std::gamma_distribution<double> gamma(1.0, 1.0);
  double trace = 0.0, cov = 0.0;
  for (int point = 0; point < 10; ++point) {
    Vector th(3);
    for (Eigen::Index k = 0; k < 3; ++k) th[k] = 0.05 + gamma(gen);
    th /= th.sum();
    const TraceCheck t = trace_identity_check(z.model, r, r.h_tilde * th.transpose());
    for (double x : t.relative_trace) trace = std::max(trace, x);
    cov = std::max(cov, t.covariance_max_rel_error);
  }
  return {trace <= 1e-4 && cov <= 1e-5,
          "max relative trace " + fmt(trace) + ", covariance vs Wright-Fisher " + fmt(cov) + " on 10 points"};
}

Outcome heterozygosity() {
  const ZooEntry z = make_zoo_entry("lotka_volterra");
  const EquilibriumReport r = analyze(z.model, z.guess);
  HeterozygosityOptions o;
  o.N = 2000.0;
  o.replicates = 2000;
  o.theta0 = Vector::Constant(2, 0.5);
  o.tolerance = 0.10;
  const TestReport lv = heterozygosity_decay_test(z.model, r, o);
  o.tolerance = 0.05;
  const TestReport wf = heterozygosity_decay_test_wf(o);
  return {lv.passed && wf.passed, "rate " + fmt(lv.statistic) + " (gate 10%), Wright-Fisher " + fmt(wf.statistic) +
                                      " (gate 5%), 2000 replicates, N = 2000"};
}

Outcome fixation() {
  const ZooEntry z = make_zoo_entry("lotka_volterra");
  const EquilibriumReport r = analyze(z.model, z.guess);
  FixationOptions o;
  o.replicates = 2000;
  const TestReport t = fixation_probability_test(z.model, r, o);
  return {t.passed, "frequency " + fmt(t.statistic) + " in [" + fmt(t.lower) + ", " + fmt(t.upper) + "], " +
                        std::to_string(t.details.value("excluded_runs", std::size_t{0})) + " runs excluded, N = " +
                        fmt(o.N)};
}

Outcome coalescent() {
  double worst = 0.0;
  for (const std::string& name : zoo_names()) {
    const ZooEntry z = make_zoo_entry(name);
    const EquilibriumReport r = analyze(z.model, z.guess);
    const double t = expected_pair_coalescence_time(build_rates(r, 1e4));
    worst = std::max(worst, std::abs(t * r.sigma_sq / 1e4 - 1.0));
  }
  return {worst < 0.05, "max |T Sigma^2 / N - 1| = " + fmt(worst) + " at N = 1e4 over all zoo models"};
}

Outcome ibm() {
  const ZooEntry z = make_zoo_entry("lotka_volterra");
  const EquilibriumReport r = analyze(z.model, z.guess);
  const RateSpec spec = *z.rates;
  const auto points = sample_box(default_admissible_box(r), 20, 9);
  const CorrespondenceReport alg = diffusion_consistency(spec, z.model, points, 1e-12);

  // Design fixed in advance: 20 independent chains at N = 200, each run for
  // 150 time units with the first 30 discarded. The standard error comes from
  // the spread of the per-chain time averages.
  const double N = 200.0;
  const std::size_t chains = 20;
  GillespieOptions g;
  g.burn_in = 30.0;
  Eigen::VectorXi start(2);
  for (Eigen::Index x = 0; x < 2; ++x) start[x] = static_cast<int>(std::lround(r.h_tilde[x] * N));
  std::vector<Vector> averages(chains);
  parallel_for(chains, [&](std::size_t c) {
    averages[c] = gillespie(spec, N, start, 150.0, 31, g, static_cast<std::uint32_t>(c)).time_average;
  }, 0);
  Vector mean = Vector::Zero(2), sq = Vector::Zero(2);
  for (const Vector& a : averages) {
    mean += a;
    sq += a.cwiseAbs2();
  }
  mean /= static_cast<double>(chains);
  const Vector var = (sq - static_cast<double>(chains) * mean.cwiseAbs2()) / static_cast<double>(chains - 1);
  const Vector se = (var / static_cast<double>(chains)).cwiseSqrt();
  const Vector z_score = (mean - r.h_tilde).cwiseQuotient(se);
  const bool within = z_score.cwiseAbs().maxCoeff() <= 3.0;
  return {alg.algebraic_match && within,
          "F diff " + fmt(alg.max_mean_diff) + ", C diff " + fmt(alg.max_covariance_diff) + "; time average (" +
              fmt(mean[0]) + ", " + fmt(mean[1]) + ") vs h~, z = (" + fmt(z_score[0]) + ", " + fmt(z_score[1]) + ")"};
}

Outcome consistency() {
  const ZooEntry z = make_zoo_entry("lotka_volterra");
  const EquilibriumReport r = analyze(z.model, z.guess);
  ConsistencyOptions o;
  o.replicates = 1000;
  const TestReport t = consistency_exchangeability_test(z.model, r, equal_split(r.h_tilde, 3), o);
  return {t.passed, "largest |z| = " + fmt(t.statistic) + " over merge and permutation gates, 1000 replicates"};
}

struct Criterion {
  int id;
  std::string title;
  double time_limit;  // seconds; 0 when only a rough budget is given
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  app.add_option("criteria", only, "criterion numbers to run (default: all)");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria{
      {1, "Lotka-Volterra fixed point", 1.0, fixed_point},
      {2, "Sigma^2 dual formula", 1.0, sigma_dual},
      {3, "two-sex closed forms", 5.0, two_sex_grid},
      {4, "projection identities", 30.0, projection_identities},
      {5, "second-order identity on Gamma", 120.0, second_order},
      {6, "heterozygosity decay", 0.0, heterozygosity},
      {7, "fixation probability", 0.0, fixation},
      {8, "coalescent timescale", 1.0, coalescent},
      {9, "individual-based correspondence", 60.0, ibm},
      {10, "consistency and exchangeability", 0.0, consistency},
  };
  const std::set<int> selected(only.begin(), only.end());

  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.time_limit > 0.0 && secs >= c.time_limit) {
      o.passed = false;
      o.summary += "; over time limit " + fmt(c.time_limit) + " s";
    }
    failures += o.passed ? 0 : 1;
    std::printf("%s criterion %d (%s): %s [%.2f s]\n", o.passed ? "PASS" : "FAIL", c.id, c.title.c_str(),
                o.summary.c_str(), secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
