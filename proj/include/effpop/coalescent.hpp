#pragma once

#include "effpop/core.hpp"
#include "effpop/equilibrium.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace effpop {

/// Rates of the two-lineage structured coalescent at equilibrium.
///
/// migration(x, y) is the rate at which a single lineage sitting in class x
/// jumps to class y (x != y): F(h~)_xy h~_y / h~_x. The diagonal is zero.
/// coalescence(x, y) = 1 / (N n_e(x, y)) is the rate at which two lineages in
/// classes x and y merge; zero where n_e is infinite.
struct CoalescentRates {
  Matrix migration;
  Matrix coalescence;
  Vector pi;  // stationary law of one lineage
  double N = 0.0;
  double stationarity_residual = 0.0;  // ||Pi Q||_inf for the migration generator Q
};

/// Throws ConsistencyError when Pi is not stationary for the migration chain
/// (beyond 1e-10 relative), which signals a broken equilibrium report.
CoalescentRates build_rates(const EquilibriumReport& report, double N);

/// The lineage-pair chain on unordered pairs {x, y} plus the coalesced state.
struct PairChain {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> states;  // x <= y
  Matrix generator;  // among transient states; row sums = -(coalescence rate)
  Vector coalescence_rate;

  Eigen::Index index(Eigen::Index x, Eigen::Index y) const;
};

PairChain pair_chain(const CoalescentRates& rates);

/// Pi (x) Pi mapped to unordered pairs: weight Pi_x^2 on {x, x} and
/// 2 Pi_x Pi_y on {x, y}.
Vector stationary_pair_start(const CoalescentRates& rates);

/// Exact E[T] from the first-step equations -Q T = 1, averaged over `start`
/// (default: stationary_pair_start). Throws NumericalError on a singular
/// system, e.g. a reducible chain with no coalescence in some closed class.
double expected_pair_coalescence_time(const CoalescentRates& rates, const std::optional<Vector>& start = std::nullopt);

struct PairSample {
  std::vector<double> times;
  std::vector<bool> crossed;  // coalescence happened with the lineages in different classes
  double mean = 0.0;
  double standard_error = 0.0;
  double coefficient_of_variation = 0.0;
  std::size_t crossed_count = 0;
};

/// Gillespie simulation of the pair chain, one counter-based stream per replicate.
PairSample simulate_pair(const CoalescentRates& rates, std::uint64_t seed, std::size_t replicates,
                         const std::optional<Vector>& start = std::nullopt, std::size_t threads = 0);

}  // namespace effpop
