#include "effpop/sde.hpp"

#include "effpop/parallel.hpp"
#include "effpop/rng.hpp"

#include <algorithm>
#include <cmath>
#include <boost/random/normal_distribution.hpp>
#include <sstream>

namespace effpop {

std::string to_string(BoundaryPolicy p) {
  return p == BoundaryPolicy::full_truncation ? "full_truncation" : "reflect";
}

std::string to_string(Clock c) { return c == Clock::ecological ? "ecological" : "evolutionary"; }

BoundaryPolicy boundary_policy_from_string(const std::string& s) {
  if (s == "full_truncation" || s == "full-truncation") return BoundaryPolicy::full_truncation;
  if (s == "reflect" || s == "reflect-at-zero" || s == "reflect_at_zero") return BoundaryPolicy::reflect;
  throw ConfigError("unknown boundary_policy '" + s + "' (expected full_truncation or reflect)");
}

Clock clock_from_string(const std::string& s) {
  if (s == "ecological") return Clock::ecological;
  if (s == "evolutionary") return Clock::evolutionary;
  throw ConfigError("unknown clock '" + s + "' (expected ecological or evolutionary)");
}

double default_time_step(const DecomposedModel& model, const Vector& v_ref) {
  return 0.01 / std::max(1.0, model.F(v_ref).norm());
}

namespace {

void validate(const SimulationConfig& c) {
  if (!(c.N > 0.0)) throw ConfigError("N must be positive");
  if (c.dt < 0.0 || !std::isfinite(c.dt)) throw ConfigError("dt must be positive (or 0 for the default)");
  if (!(c.t_end >= 0.0)) throw ConfigError("t_end must be nonnegative");
  if (c.max_records < 2) throw ConfigError("max_records must be at least 2");
}

/// Euler-Maruyama step for the fraction system, allocation-free after
/// construction. Each fraction draws from its own counter-based stream.
class FractionStepper {
 public:
  FractionStepper(const DecomposedModel& model, double N, double dt, BoundaryPolicy policy, Eigen::Index k,
                  std::uint64_t seed, std::size_t replicate, bool total_stream = false)
      : model_(model), dt_(dt), scale_(std::sqrt(dt / N)), policy_(policy) {
    const auto n = static_cast<Eigen::Index>(model.dim());
    for (Eigen::Index j = 0; j < k; ++j) {
      const std::uint32_t tag = total_stream ? kTotalStream : static_cast<std::uint32_t>(j);
      engines_.emplace_back(seed, static_cast<std::uint32_t>(replicate), tag);
    }
    normals_.resize(static_cast<std::size_t>(k));
    s_.resize(n);
    w_.resize(n);
    xi_.resize(n);
    noise_.resize(n);
    drift_.resize(n, k);
  }

  void step(Matrix& u) {
    s_ = u.rowwise().sum();
    s_ = s_.cwiseMax(0.0);
    model_.mean_matrix(s_, f_);
    drift_.noalias() = f_ * u;
    for (Eigen::Index j = 0; j < u.cols(); ++j) {
      w_ = u.col(j).cwiseMax(0.0);
      model_.noise_factor(s_, w_, sigma_);
      auto& gen = engines_[static_cast<std::size_t>(j)];
      auto& normal = normals_[static_cast<std::size_t>(j)];
      for (Eigen::Index i = 0; i < xi_.size(); ++i) xi_[i] = normal(gen);
      noise_.noalias() = sigma_ * xi_;
      u.col(j) += scale_ * noise_;
    }
    u += dt_ * drift_;
    if (policy_ == BoundaryPolicy::full_truncation) {
      u = u.cwiseMax(0.0);
    } else {
      u = u.cwiseAbs();
    }
  }

 private:
  const DecomposedModel& model_;
  double dt_;
  double scale_;
  BoundaryPolicy policy_;
  std::vector<Philox4x32> engines_;
  std::vector<boost::random::normal_distribution<double>> normals_;
  Vector s_, w_, xi_, noise_;
  Matrix f_, sigma_, drift_;
};

void check_state(const Matrix& u, std::size_t step, std::uint64_t seed, std::size_t replicate) {
  if (!u.allFinite()) {
    std::ostringstream os;
    os << "simulation produced a non-finite state at step " << step << " (seed " << seed << ", replicate "
       << replicate << ")";
    throw NumericalError(os.str());
  }
}

struct Grid {
  std::size_t steps = 0;
  double dt = 0.0;
  std::size_t stride = 1;
};

Grid make_grid(double t_end, double dt, std::size_t max_records) {
  Grid g;
  g.steps = t_end > 0.0 ? static_cast<std::size_t>(std::ceil(t_end / dt - 1e-9)) : 0;
  g.dt = g.steps > 0 ? t_end / static_cast<double>(g.steps) : dt;
  g.stride = std::max<std::size_t>(1, (g.steps + max_records - 2) / (max_records - 1));
  return g;
}

Trajectory run_matrix_process(const DecomposedModel& model, Matrix u, const SimulationConfig& config,
                              std::size_t replicate, bool total_stream) {
  validate(config);
  if (config.clock != Clock::ecological) {
    throw ConfigError("the evolutionary clock needs Sigma^2; use the rescaled fraction process");
  }
  if ((u.array() < 0.0).any()) throw ConfigError("initial state must be nonnegative");
  const double dt = config.dt > 0.0 ? config.dt : default_time_step(model, u.rowwise().sum());
  const Grid grid = make_grid(config.t_end, dt, config.max_records);
  FractionStepper stepper(model, config.N, grid.dt, config.boundary, u.cols(), config.seed, replicate, total_stream);

  Trajectory tr;
  tr.replicate = replicate;
  tr.seed = config.seed;
  tr.clock = Clock::ecological;
  tr.times.push_back(0.0);
  tr.states.push_back(u);
  for (std::size_t i = 1; i <= grid.steps; ++i) {
    stepper.step(u);
    check_state(u, i, config.seed, replicate);
    if (i % grid.stride == 0 || i == grid.steps) {
      tr.times.push_back(static_cast<double>(i) * grid.dt);
      tr.states.push_back(u);
    }
  }
  return tr;
}

}  // namespace

Trajectory simulate_fractions(const DecomposedModel& model, const CompositionMatrix& u0,
                              const SimulationConfig& config, std::size_t replicate) {
  return run_matrix_process(model, u0, config, replicate, false);
}

Trajectory simulate_total(const DecomposedModel& model, const Vector& v0, const SimulationConfig& config,
                          std::size_t replicate) {
  return run_matrix_process(model, Matrix(v0), config, replicate, true);
}

std::vector<Trajectory> simulate_fractions_batch(const DecomposedModel& model, const CompositionMatrix& u0,
                                                 const SimulationConfig& config) {
  std::vector<Trajectory> out(config.replicates);
  parallel_for(config.replicates, [&](std::size_t r) { out[r] = simulate_fractions(model, u0, config, r); },
               config.threads);
  return out;
}

std::vector<Trajectory> simulate_total_batch(const DecomposedModel& model, const Vector& v0,
                                             const SimulationConfig& config) {
  std::vector<Trajectory> out(config.replicates);
  parallel_for(config.replicates, [&](std::size_t r) { out[r] = simulate_total(model, v0, config, r); },
               config.threads);
  return out;
}

Trajectory simulate_wright_fisher(const Vector& theta0, double dt, double t_end, std::uint64_t seed,
                                  std::size_t replicate, std::size_t max_records) {
  if (theta0.size() == 0 || (theta0.array() < 0.0).any() || std::abs(theta0.sum() - 1.0) > 1e-9) {
    throw ConfigError("theta0 must lie on the simplex");
  }
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  const Grid grid = make_grid(t_end, dt, std::max<std::size_t>(max_records, 2));
  const auto k = theta0.size();
  Philox4x32 gen(seed, static_cast<std::uint32_t>(replicate), 0);
  boost::random::normal_distribution<double> normal;
  Vector theta = theta0, root(k), xi(k), step(k);
  const double sq = std::sqrt(grid.dt);

  Trajectory tr;
  tr.replicate = replicate;
  tr.seed = seed;
  tr.clock = Clock::evolutionary;
  tr.times.push_back(0.0);
  tr.states.push_back(theta);
  for (std::size_t i = 1; i <= grid.steps; ++i) {
    root = theta.cwiseSqrt();
    for (Eigen::Index j = 0; j < k; ++j) xi[j] = normal(gen);
    // (diag(sqrt theta) - theta sqrt(theta)^T) xi
    step = root.cwiseProduct(xi) - theta * root.dot(xi);
    theta += sq * step;
    theta = theta.cwiseMax(0.0);
    theta /= theta.sum();
    if (i % grid.stride == 0 || i == grid.steps) {
      tr.times.push_back(static_cast<double>(i) * grid.dt);
      tr.states.push_back(theta);
    }
  }
  return tr;
}

std::vector<Trajectory> simulate_wright_fisher_batch(const Vector& theta0, double dt, double t_end,
                                                     std::uint64_t seed, std::size_t replicates,
                                                     std::size_t max_records, std::size_t threads) {
  std::vector<Trajectory> out(replicates);
  parallel_for(replicates,
               [&](std::size_t r) { out[r] = simulate_wright_fisher(theta0, dt, t_end, seed, r, max_records); },
               threads);
  return out;
}

Vector theta_hat(const CompositionMatrix& u, const Vector& h) {
  Vector t = (u.transpose() * h).cwiseMax(0.0);
  const double total = t.sum();
  if (!(total > 0.0)) throw NumericalError("all fractions are extinct; proportions are undefined");
  return t / total;
}

double burn_in_time(const EquilibriumReport& report, double N) {
  const double rate = std::abs(report.leading_real());
  if (!(rate > 0.0)) throw NumericalError("burn-in needs a strictly stable equilibrium");
  return 10.0 * std::log(std::max(N, 1.0)) / rate;
}

RescaledTrajectory rescaled_fraction_process(const DecomposedModel& model, const EquilibriumReport& report,
                                             const CompositionMatrix& u0, const SimulationConfig& config,
                                             const RescaledOptions& options, std::size_t replicate) {
  validate(config);
  if (!(report.sigma_sq > 0.0)) {
    throw NumericalError("Sigma^2 must be positive for the evolutionary clock t N / Sigma^2 (N_e = N / Sigma^2)");
  }
  if ((u0.array() < 0.0).any()) throw ConfigError("initial composition must be nonnegative");
  const double dt = config.dt > 0.0 ? config.dt : default_time_step(model, report.h_tilde);
  const double per_unit = config.N / report.sigma_sq;  // ecological time per evolutionary unit
  const double burn = options.burn_in ? burn_in_time(report, config.N) : 0.0;
  const auto burn_steps = static_cast<std::size_t>(std::ceil(burn / dt));

  std::vector<double> probes = options.probe_times;
  if (probes.empty()) {
    const std::size_t n = config.max_records;
    for (std::size_t i = 0; i < n; ++i) probes.push_back(config.t_end * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  std::sort(probes.begin(), probes.end());
  std::vector<std::size_t> probe_steps;
  for (double t : probes) {
    if (t < 0.0 || t > config.t_end * (1.0 + 1e-12)) throw ConfigError("probe time outside [0, t_end]");
    probe_steps.push_back(burn_steps + static_cast<std::size_t>(std::llround(t * per_unit / dt)));
  }
  const std::size_t last_step = burn_steps + static_cast<std::size_t>(std::llround(config.t_end * per_unit / dt));

  FractionStepper stepper(model, config.N, dt, config.boundary, u0.cols(), config.seed, replicate);
  Matrix u = u0;
  const auto k = u0.cols();

  RescaledTrajectory out;
  out.replicate = replicate;
  out.seed = config.seed;
  out.burn_in = static_cast<double>(burn_steps) * dt;
  out.theta.resize(static_cast<Eigen::Index>(probes.size()), k);

  auto evo_time = [&](std::size_t step) {
    return (static_cast<double>(step) - static_cast<double>(burn_steps)) * dt / per_unit;
  };
  auto record = [&](std::size_t row, std::size_t step) {
    const Vector th = theta_hat(u, report.h);
    out.times.push_back(evo_time(step));
    out.theta.row(static_cast<Eigen::Index>(row)) = th.transpose();
    out.total_deviation.push_back((u.rowwise().sum() - report.h_tilde).norm());
    double zmax = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      zmax = std::max(zmax, (u.col(j) - u.col(j).dot(report.h) * report.h_tilde).norm());
    }
    out.max_deviation.push_back(zmax);
    out.dist_gamma.push_back((u - report.h_tilde * th.transpose()).norm());
  };

  std::size_t next_probe = 0;
  std::size_t step = 0;
  while (next_probe < probe_steps.size() && probe_steps[next_probe] == 0) record(next_probe++, 0);
  while (step < last_step) {
    stepper.step(u);
    ++step;
    check_state(u, step, config.seed, replicate);
    while (next_probe < probe_steps.size() && probe_steps[next_probe] == step) record(next_probe++, step);
    if (options.stop && step >= burn_steps && (step - burn_steps) % options.stop_check_steps == 0) {
      if (options.stop(theta_hat(u, report.h))) {
        out.stopped_at = evo_time(step);
        break;
      }
    }
  }
  out.theta.conservativeResize(static_cast<Eigen::Index>(next_probe), k);
  out.final_theta = theta_hat(u, report.h);
  return out;
}

std::vector<RescaledTrajectory> rescaled_fraction_batch(const DecomposedModel& model,
                                                        const EquilibriumReport& report,
                                                        const CompositionMatrix& u0, const SimulationConfig& config,
                                                        const RescaledOptions& options) {
  std::vector<RescaledTrajectory> out(config.replicates);
  parallel_for(config.replicates,
               [&](std::size_t r) { out[r] = rescaled_fraction_process(model, report, u0, config, options, r); },
               config.threads);
  return out;
}

}  // namespace effpop
