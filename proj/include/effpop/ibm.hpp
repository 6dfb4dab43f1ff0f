#pragma once

#include "effpop/core.hpp"
#include "effpop/model.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace effpop {

/// One reproduction event of an individual of class `parent`: the parent is
/// replaced by `offspring` (a count vector over E) at per-capita rate
/// rate(v), where v is the rescaled state V / N.
struct BirthEvent {
  std::size_t parent = 0;
  Eigen::VectorXi offspring;
  std::function<double(const Vector& v)> rate;
  std::string label;
};

struct RateSpec {
  TypeSpace space;
  std::vector<BirthEvent> events;

  std::size_t dim() const noexcept { return space.size(); }
};

/// F(v)_xy = sum over events with parent y of rate (n_x - delta_xy).
///
/// The parent index is the column, so the large-population drift of the
/// counts is F(v) v and F_xy is the rate at which one y-individual adds
/// x-individuals.
Matrix mean_matrix_from_rates(const RateSpec& spec, const Vector& v);

/// C(v)_{xy,z} = sum over events with parent z of rate (n_x - delta_zx)(n_y - delta_zy).
CovarianceTensor covariance_tensor_from_rates(const RateSpec& spec, const Vector& v);

/// A DecomposedModel whose F and C come from the rates. The noise factor is
/// the symmetric square root of C(v)w.
DecomposedModel model_from_rates(const RateSpec& spec, std::string name = "rates");

struct IbmTrajectory {
  std::vector<double> times;             // recording grid
  std::vector<Eigen::VectorXi> counts;   // state at each grid time
  Vector time_average;                   // (1/T) int V_t / N dt over [t_burn, t_end]
  std::uint64_t events = 0;
  bool extinct = false;
  double extinction_time = 0.0;
};

struct GillespieOptions {
  double record_every = 0.0;  // 0 records only the endpoints
  double burn_in = 0.0;       // excluded from time_average
  std::uint64_t max_events = 2'000'000'000ULL;
};

/// Direct-method stochastic simulation of the population with per-individual
/// rates rate(V / N). Extinction stops the run and is recorded, not an error.
/// Throws NumericalError on negative or non-finite rates.
IbmTrajectory gillespie(const RateSpec& spec, double N, const Eigen::VectorXi& v0_counts, double t_end,
                        std::uint64_t seed, const GillespieOptions& options = {}, std::uint32_t stream = 0);

struct CorrespondencePoint {
  Vector point;
  double mean_max_abs_diff = 0.0;
  double covariance_max_abs_diff = 0.0;
};

struct CorrespondenceReport {
  std::vector<CorrespondencePoint> points;
  double max_mean_diff = 0.0;
  double max_covariance_diff = 0.0;
  double tol = 0.0;
  bool algebraic_match = false;

  // Matched-moment comparison of V_t / N (Gillespie) against the SDE at one (N, t).
  bool moments_checked = false;
  Vector ibm_mean, ibm_se, sde_mean, sde_se;
  double max_mean_z = 0.0;
  bool moments_match = false;

  bool ok() const { return algebraic_match && (!moments_checked || moments_match); }
};

struct MomentComparison {
  double N = 100.0;
  double t = 1.0;
  Vector v0;
  std::size_t replicates = 200;
  std::uint64_t seed = 0;
};

/// Checks that the rates reproduce model.F and model.C at the sample points and,
/// when `moments` is given, that V_t / N from the Gillespie chain and from the
/// total-population SDE have means within 3 standard errors at one (N, t).
CorrespondenceReport diffusion_consistency(const RateSpec& spec, const DecomposedModel& model,
                                           const std::vector<Vector>& sample_points, double tol = 1e-12,
                                           const MomentComparison* moments = nullptr);

}  // namespace effpop
