#pragma once

#include "effpop/core.hpp"
#include "effpop/equilibrium.hpp"
#include "effpop/model.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace effpop {

enum class BoundaryPolicy {
  full_truncation,  // negative parts zeroed inside sigma and after every step
  reflect,          // sigma arguments clipped, post-step state reflected at 0
};

enum class Clock { ecological, evolutionary };

std::string to_string(BoundaryPolicy p);
std::string to_string(Clock c);
BoundaryPolicy boundary_policy_from_string(const std::string& s);
Clock clock_from_string(const std::string& s);

struct SimulationConfig {
  double N = 200.0;
  std::size_t K = 1;
  /// Step on the ecological clock; 0 selects 0.01 / max(1, ||F(v_ref)||) with
  /// v_ref = h~ when an equilibrium is known and the initial state otherwise.
  double dt = 0.0;
  double t_end = 1.0;
  Clock clock = Clock::ecological;
  std::uint64_t seed = 0;
  std::size_t replicates = 1;
  BoundaryPolicy boundary = BoundaryPolicy::full_truncation;
  std::size_t max_records = 2048;
  std::size_t threads = 0;  // 0: hardware concurrency
};

/// 0.01 / max(1, ||F(v_ref)||_F).
double default_time_step(const DecomposedModel& model, const Vector& v_ref);

struct Trajectory {
  std::size_t replicate = 0;
  std::uint64_t seed = 0;
  Clock clock = Clock::ecological;
  std::vector<double> times;
  std::vector<Matrix> states;  // E x K for fractions, E x 1 for totals, K x 1 for Wright-Fisher
};

/// Euler-Maruyama for dU^k = F(S(U)) U^k dt + N^{-1/2} sigma(S(U), U^k) dW^k
/// with independent Brownian motions per fraction. One replicate; the stream
/// is keyed by (seed, replicate, fraction). Ecological clock only.
Trajectory simulate_fractions(const DecomposedModel& model, const CompositionMatrix& u0,
                              const SimulationConfig& config, std::size_t replicate = 0);

/// dV = b(V) dt + N^{-1/2} a(V) dW with a(V) = sigma(V, V), one Brownian motion.
Trajectory simulate_total(const DecomposedModel& model, const Vector& v0, const SimulationConfig& config,
                          std::size_t replicate = 0);

/// All replicates of the two simulators above, run in parallel.
std::vector<Trajectory> simulate_fractions_batch(const DecomposedModel& model, const CompositionMatrix& u0,
                                                 const SimulationConfig& config);
std::vector<Trajectory> simulate_total_batch(const DecomposedModel& model, const Vector& v0,
                                             const SimulationConfig& config);

/// Reference Wright-Fisher diffusion on the K-simplex: Euler steps with noise
/// factor diag(sqrt(theta)) - theta sqrt(theta)^T (whose square is
/// diag(theta) - theta theta^T), then clip-and-renormalize.
Trajectory simulate_wright_fisher(const Vector& theta0, double dt, double t_end, std::uint64_t seed,
                                  std::size_t replicate = 0, std::size_t max_records = 2048);
std::vector<Trajectory> simulate_wright_fisher_batch(const Vector& theta0, double dt, double t_end,
                                                     std::uint64_t seed, std::size_t replicates,
                                                     std::size_t max_records = 2048, std::size_t threads = 0);

/// Fraction proportions <U^k, h> normalised to sum to one.
Vector theta_hat(const CompositionMatrix& u, const Vector& h);

/// Samples of the fraction process on the evolutionary clock (time t
/// corresponds to ecological time t_burn + t N / Sigma^2).
struct RescaledTrajectory {
  std::size_t replicate = 0;
  std::uint64_t seed = 0;
  double burn_in = 0.0;            // ecological time discarded before t = 0
  std::vector<double> times;       // evolutionary
  Matrix theta;                    // rows = times, columns = K
  std::vector<double> total_deviation;  // ||S(U) - h~||_2
  std::vector<double> max_deviation;    // max_k ||Z^k||_2
  std::vector<double> dist_gamma;       // ||U - theta (x) h~||_F
  std::optional<double> stopped_at;     // evolutionary time the stop rule fired
  Vector final_theta;
};

struct RescaledOptions {
  /// Evolutionary probe times in [0, t_end]; empty selects an even grid of
  /// config.max_records points.
  std::vector<double> probe_times;
  bool burn_in = true;
  /// Optional early stop, evaluated on theta_hat every `stop_check_steps` steps.
  std::function<bool(const Vector& theta)> stop;
  std::size_t stop_check_steps = 32;
};

/// Burn-in length on the ecological clock: 10 log(N) / |Re lambda_1|.
double burn_in_time(const EquilibriumReport& report, double N);

/// config.t_end is read on the evolutionary clock. Throws NumericalError if
/// Sigma^2 <= 0, since the evolutionary clock is then undefined.
RescaledTrajectory rescaled_fraction_process(const DecomposedModel& model, const EquilibriumReport& report,
                                             const CompositionMatrix& u0, const SimulationConfig& config,
                                             const RescaledOptions& options = {}, std::size_t replicate = 0);
std::vector<RescaledTrajectory> rescaled_fraction_batch(const DecomposedModel& model,
                                                        const EquilibriumReport& report,
                                                        const CompositionMatrix& u0, const SimulationConfig& config,
                                                        const RescaledOptions& options = {});

}  // namespace effpop
