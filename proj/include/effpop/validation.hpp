#pragma once

#include "effpop/core.hpp"
#include "effpop/equilibrium.hpp"
#include "effpop/model.hpp"
#include "effpop/sde.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace effpop {

/// Outcome of one statistical gate. The gate is lower <= statistic <= upper;
/// thresholds are fixed before the data are looked at and stored with the result.
struct TestReport {
  std::string name;
  double statistic = 0.0;
  double expected = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool passed = false;
  std::size_t replicates = 0;
  std::uint64_t seed = 0;
  nlohmann::json details = nlohmann::json::object();
};

nlohmann::json to_json(const TestReport& r);

/// Mean heterozygosity 1 - sum_k theta_k^2 across replicates at each time,
/// and the decay rate from an ordinary least-squares fit of its logarithm.
struct DecayFit {
  std::vector<double> times;
  std::vector<double> mean_heterozygosity;
  std::vector<double> standard_error;
  double rate = 0.0;
  double intercept = 0.0;
};

/// theta_by_replicate[r] has one row per entry of `times`.
DecayFit fit_heterozygosity_decay(const std::vector<double>& times, const std::vector<Matrix>& theta_by_replicate);

struct HeterozygosityOptions {
  double N = 2000.0;
  Vector theta0 = Vector::Constant(2, 0.5);
  std::size_t replicates = 2000;
  std::uint64_t seed = 1;
  std::vector<double> times{0.0, 0.25, 0.5, 1.0};
  double tolerance = 0.10;  // gate |rate - 1| <= tolerance
  double dt = 0.0;          // ecological step, 0 for the default
  std::size_t threads = 0;
};

/// Rescaled fraction process from U0 = theta0 (x) h~; fits the decay of mean
/// heterozygosity on the evolutionary clock. Wright-Fisher predicts rate 1.
TestReport heterozygosity_decay_test(const DecomposedModel& model, const EquilibriumReport& report,
                                     const HeterozygosityOptions& options);

/// The same harness on the reference Wright-Fisher diffusion (step `wf_dt`).
TestReport heterozygosity_decay_test_wf(const HeterozygosityOptions& options, double wf_dt = 1e-3);

struct FixationOptions {
  double N = 2000.0;
  Vector theta0 = (Vector(2) << 0.2, 0.8).finished();
  std::size_t replicates = 2000;
  std::uint64_t seed = 2;
  double epsilon = 0.02;   // quasi-fixation: theta^k > 1 - epsilon
  double horizon = 10.0;   // evolutionary time cap
  double dt = 0.0;
  std::size_t fraction = 0;  // the fraction whose fixation frequency is gated
  std::size_t threads = 0;
};

/// Gate: empirical fixation frequency of `fraction` within 3 binomial standard
/// errors of theta0[fraction]. Runs that do not quasi-fix by the horizon are
/// excluded and counted in the details.
TestReport fixation_probability_test(const DecomposedModel& model, const EquilibriumReport& report,
                                     const FixationOptions& options);
TestReport fixation_probability_test_wf(const FixationOptions& options, double wf_dt = 1e-3);

struct CovarianceOptions {
  double N = 2000.0;
  Vector theta0 = Vector::Constant(2, 0.5);
  std::size_t replicates = 500;
  std::uint64_t seed = 3;
  double window = 0.02;      // evolutionary length of each increment
  std::size_t windows = 10;
  double tolerance = 0.15;   // gate |slope - 1| <= tolerance
  double dt = 0.0;
  std::size_t threads = 0;
};

/// Regresses the products of theta increments d theta^k d theta^k' on
/// (1_{k=k'} - theta^k') theta^k window through the origin.
TestReport covariance_structure_test(const DecomposedModel& model, const EquilibriumReport& report,
                                     const CovarianceOptions& options);

/// Increment covariance regression on sampled proportions (rows = times, equally spaced by `window`).
struct CovarianceRegression {
  double slope = 0.0;
  double diagonal_mean_product = 0.0;
  double offdiagonal_mean_product = 0.0;
  std::size_t samples = 0;
};
CovarianceRegression regress_increment_covariance(const std::vector<Matrix>& theta_by_replicate, double window);

/// Two-sample comparison of means and variances with 3-sigma gates.
struct MomentGate {
  std::string label;
  double mean_a = 0.0, mean_b = 0.0, mean_z = 0.0;
  double var_a = 0.0, var_b = 0.0, var_z = 0.0;
  bool passed = false;
};
MomentGate compare_moments(const std::string& label, const std::vector<double>& a, const std::vector<double>& b,
                           double z_gate = 3.0);

struct ConsistencyOptions {
  double N = 200.0;
  std::size_t replicates = 1000;
  std::uint64_t seed = 4;
  std::vector<double> times{0.1, 0.25, 0.5};
  /// Column permutation for the exchangeability half; empty selects a cyclic shift.
  std::vector<std::size_t> permutation;
  /// When false, the permuted run reuses the base seed (with the identity
  /// permutation this reproduces the base statistics exactly).
  bool independent_seeds = true;
  double dt = 0.0;
  std::size_t threads = 0;
};

/// (a) Consistency: merging the last two of K fractions agrees in law with
/// running K - 1 fractions from the merged start. (b) Exchangeability:
/// permuting the columns of U0 permutes the law of theta. Moment gates at
/// 3 sigma for every coordinate and time; statistic = largest |z|.
TestReport consistency_exchangeability_test(const DecomposedModel& model, const EquilibriumReport& report,
                                            const CompositionMatrix& u0, const ConsistencyOptions& options);

struct StabilitySeries {
  std::vector<double> times;
  std::vector<double> total_deviation;  // ||S(U) - h~||
  std::vector<double> max_deviation;    // max_k ||Z^k||
  std::vector<double> dist_gamma;       // ||U - theta (x) h~|| with theta clipped to the simplex
};

StabilitySeries stability_diagnostics(const Trajectory& trajectory, const EquilibriumReport& report);
StabilitySeries stability_diagnostics(const RescaledTrajectory& trajectory);

double median(std::vector<double> values);

}  // namespace effpop
