#include "effpop/validation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace effpop {

nlohmann::json to_json(const TestReport& r) {
  return {{"name", r.name},         {"statistic", r.statistic},   {"expected", r.expected},
          {"gate", {r.lower, r.upper}}, {"passed", r.passed},       {"replicates", r.replicates},
          {"seed", r.seed},         {"details", r.details}};
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  double m = values[mid];
  if (values.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid)));
  }
  return m;
}

DecayFit fit_heterozygosity_decay(const std::vector<double>& times, const std::vector<Matrix>& theta_by_replicate) {
  if (times.size() < 2) throw ConfigError("the decay fit needs at least two times");
  if (theta_by_replicate.size() < 2) throw NumericalError("the decay fit needs at least two replicates");
  DecayFit fit;
  fit.times = times;
  const double n = static_cast<double>(theta_by_replicate.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    double sum = 0.0, sq = 0.0;
    for (const Matrix& th : theta_by_replicate) {
      if (th.rows() <= static_cast<Eigen::Index>(i)) throw NumericalError("replicate is missing a probe time");
      const double het = 1.0 - th.row(static_cast<Eigen::Index>(i)).squaredNorm();
      sum += het;
      sq += het * het;
    }
    const double mean = sum / n;
    const double var = std::max(0.0, (sq - n * mean * mean) / (n - 1.0));
    if (!(mean > 0.0)) throw NumericalError("mean heterozygosity vanished; too few segregating replicates");
    fit.mean_heterozygosity.push_back(mean);
    fit.standard_error.push_back(std::sqrt(var / n));
  }
  const double tbar = std::accumulate(times.begin(), times.end(), 0.0) / static_cast<double>(times.size());
  double ybar = 0.0;
  for (double m : fit.mean_heterozygosity) ybar += std::log(m);
  ybar /= static_cast<double>(times.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    sxy += (times[i] - tbar) * (std::log(fit.mean_heterozygosity[i]) - ybar);
    sxx += (times[i] - tbar) * (times[i] - tbar);
  }
  const double slope = sxy / sxx;
  fit.rate = -slope;
  fit.intercept = ybar - slope * tbar;
  return fit;
}

namespace {

TestReport decay_report(const std::string& name, const DecayFit& fit, const HeterozygosityOptions& o) {
  TestReport r;
  r.name = name;
  r.statistic = fit.rate;
  r.expected = 1.0;
  r.lower = 1.0 - o.tolerance;
  r.upper = 1.0 + o.tolerance;
  r.passed = r.statistic >= r.lower && r.statistic <= r.upper;
  r.replicates = o.replicates;
  r.seed = o.seed;
  r.details = {{"times", fit.times},
               {"mean_heterozygosity", fit.mean_heterozygosity},
               {"standard_error", fit.standard_error},
               {"intercept", fit.intercept},
               {"N", o.N}};
  return r;
}

/// States of Wright-Fisher replicates at the requested times (on the dt grid).
std::vector<Matrix> wright_fisher_samples(const Vector& theta0, const std::vector<double>& times, double dt,
                                          std::uint64_t seed, std::size_t replicates, std::size_t threads) {
  const double t_end = *std::max_element(times.begin(), times.end());
  const auto steps = static_cast<std::size_t>(std::ceil(t_end / dt - 1e-9));
  const std::vector<Trajectory> runs =
      simulate_wright_fisher_batch(theta0, dt, t_end, seed, replicates, steps + 1, threads);
  std::vector<Matrix> out;
  out.reserve(replicates);
  for (const Trajectory& tr : runs) {
    Matrix th(static_cast<Eigen::Index>(times.size()), theta0.size());
    for (std::size_t i = 0; i < times.size(); ++i) {
      const auto it = std::lower_bound(tr.times.begin(), tr.times.end(), times[i] - 1e-9);
      const auto idx = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - tr.times.begin(),
                                                                        static_cast<std::ptrdiff_t>(tr.times.size() - 1)));
      th.row(static_cast<Eigen::Index>(i)) = tr.states[idx].col(0).transpose();
    }
    out.push_back(std::move(th));
  }
  return out;
}

SimulationConfig rescaled_config(double N, std::size_t K, double t_end, std::uint64_t seed, std::size_t replicates,
                                 double dt, std::size_t threads) {
  SimulationConfig c;
  c.N = N;
  c.K = K;
  c.t_end = t_end;
  c.clock = Clock::evolutionary;
  c.seed = seed;
  c.replicates = replicates;
  c.dt = dt;
  c.threads = threads;
  return c;
}

CompositionMatrix on_gamma(const Vector& h_tilde, const Vector& theta) { return h_tilde * theta.transpose(); }

void check_simplex(const Vector& theta) {
  if (theta.size() < 1 || (theta.array() < 0.0).any() || std::abs(theta.sum() - 1.0) > 1e-9) {
    throw ConfigError("theta0 must lie on the simplex");
  }
}

}  // namespace

TestReport heterozygosity_decay_test(const DecomposedModel& model, const EquilibriumReport& report,
                                     const HeterozygosityOptions& o) {
  check_simplex(o.theta0);
  const double t_end = *std::max_element(o.times.begin(), o.times.end());
  const SimulationConfig cfg =
      rescaled_config(o.N, static_cast<std::size_t>(o.theta0.size()), t_end, o.seed, o.replicates, o.dt, o.threads);
  RescaledOptions ro;
  ro.probe_times = o.times;
  const auto runs = rescaled_fraction_batch(model, report, on_gamma(report.h_tilde, o.theta0), cfg, ro);
  std::vector<Matrix> theta;
  theta.reserve(runs.size());
  for (const auto& tr : runs) theta.push_back(tr.theta);
  TestReport r = decay_report("heterozygosity_decay[" + model.name + "]", fit_heterozygosity_decay(o.times, theta), o);
  r.details["sigma_sq"] = report.sigma_sq;
  r.details["N_e"] = o.N / report.sigma_sq;
  return r;
}

TestReport heterozygosity_decay_test_wf(const HeterozygosityOptions& o, double wf_dt) {
  check_simplex(o.theta0);
  const auto theta = wright_fisher_samples(o.theta0, o.times, wf_dt, o.seed, o.replicates, o.threads);
  TestReport r = decay_report("heterozygosity_decay[wright_fisher]", fit_heterozygosity_decay(o.times, theta), o);
  r.details["wf_dt"] = wf_dt;
  return r;
}

namespace {

TestReport fixation_report(const std::string& name, const std::vector<std::optional<std::size_t>>& fixed,
                           const FixationOptions& o) {
  std::size_t n_fixed = 0, hits = 0;
  for (const auto& f : fixed) {
    if (!f) continue;
    ++n_fixed;
    hits += *f == o.fraction ? 1 : 0;
  }
  const double p0 = o.theta0[static_cast<Eigen::Index>(o.fraction)];
  TestReport r;
  r.name = name;
  r.expected = p0;
  r.replicates = o.replicates;
  r.seed = o.seed;
  if (n_fixed == 0) {
    r.statistic = std::numeric_limits<double>::quiet_NaN();
    r.passed = false;
    r.details = {{"error", "no replicate reached quasi-fixation"}};
    return r;
  }
  const double se = std::sqrt(p0 * (1.0 - p0) / static_cast<double>(n_fixed));
  r.statistic = static_cast<double>(hits) / static_cast<double>(n_fixed);
  r.lower = p0 - 3.0 * se;
  r.upper = p0 + 3.0 * se;
  r.passed = r.statistic >= r.lower - 1e-15 && r.statistic <= r.upper + 1e-15;
  r.details = {{"fixed_runs", n_fixed},
               {"excluded_runs", fixed.size() - n_fixed},
               {"binomial_se", se},
               {"epsilon", o.epsilon},
               {"horizon", o.horizon},
               // For a martingale stopped at the first exit from [eps, 1 - eps] (K = 2).
               {"epsilon_adjusted_expectation", (p0 - o.epsilon) / (1.0 - 2.0 * o.epsilon)}};
  return r;
}

std::optional<std::size_t> fixed_class(const Vector& theta, double epsilon) {
  Eigen::Index k = 0;
  if (theta.maxCoeff(&k) > 1.0 - epsilon) return static_cast<std::size_t>(k);
  return std::nullopt;
}

}  // namespace

TestReport fixation_probability_test(const DecomposedModel& model, const EquilibriumReport& report,
                                     const FixationOptions& o) {
  check_simplex(o.theta0);
  if (o.fraction >= static_cast<std::size_t>(o.theta0.size())) throw ConfigError("fraction index out of range");
  const SimulationConfig cfg = rescaled_config(o.N, static_cast<std::size_t>(o.theta0.size()), o.horizon, o.seed,
                                               o.replicates, o.dt, o.threads);
  RescaledOptions ro;
  ro.probe_times = {0.0};
  const double eps = o.epsilon;
  ro.stop = [eps](const Vector& th) { return th.maxCoeff() > 1.0 - eps; };
  const auto runs = rescaled_fraction_batch(model, report, on_gamma(report.h_tilde, o.theta0), cfg, ro);
  std::vector<std::optional<std::size_t>> fixed;
  std::vector<double> stop_times;
  for (const auto& tr : runs) {
    fixed.push_back(tr.stopped_at ? fixed_class(tr.final_theta, eps) : std::nullopt);
    if (tr.stopped_at) stop_times.push_back(*tr.stopped_at);
  }
  TestReport r = fixation_report("fixation_probability[" + model.name + "]", fixed, o);
  r.details["median_fixation_time"] = median(stop_times);
  r.details["N"] = o.N;
  return r;
}

TestReport fixation_probability_test_wf(const FixationOptions& o, double wf_dt) {
  check_simplex(o.theta0);
  std::vector<std::optional<std::size_t>> fixed(o.replicates);
  const auto steps = static_cast<std::size_t>(std::ceil(o.horizon / wf_dt));
  const auto runs = simulate_wright_fisher_batch(o.theta0, wf_dt, o.horizon, o.seed, o.replicates, steps + 1, o.threads);
  for (std::size_t r = 0; r < runs.size(); ++r) {
    for (const Matrix& s : runs[r].states) {
      if (auto k = fixed_class(s.col(0), o.epsilon)) {
        fixed[r] = k;
        break;
      }
    }
  }
  return fixation_report("fixation_probability[wright_fisher]", fixed, o);
}

CovarianceRegression regress_increment_covariance(const std::vector<Matrix>& theta_by_replicate, double window) {
  CovarianceRegression out;
  double sxy = 0.0, sxx = 0.0, diag = 0.0, off = 0.0;
  std::size_t n_diag = 0, n_off = 0;
  for (const Matrix& th : theta_by_replicate) {
    for (Eigen::Index i = 0; i + 1 < th.rows(); ++i) {
      const Vector t0 = th.row(i).transpose();
      const Vector d = (th.row(i + 1) - th.row(i)).transpose();
      for (Eigen::Index k = 0; k < th.cols(); ++k) {
        for (Eigen::Index l = 0; l < th.cols(); ++l) {
          const double x = ((k == l ? 1.0 : 0.0) - t0[l]) * t0[k] * window;
          const double y = d[k] * d[l];
          sxy += x * y;
          sxx += x * x;
          if (k == l) {
            diag += y;
            ++n_diag;
          } else {
            off += y;
            ++n_off;
          }
        }
      }
      ++out.samples;
    }
  }
  out.slope = sxx > 0.0 ? sxy / sxx : std::numeric_limits<double>::quiet_NaN();
  out.diagonal_mean_product = n_diag ? diag / static_cast<double>(n_diag) : 0.0;
  out.offdiagonal_mean_product = n_off ? off / static_cast<double>(n_off) : 0.0;
  return out;
}

TestReport covariance_structure_test(const DecomposedModel& model, const EquilibriumReport& report,
                                     const CovarianceOptions& o) {
  check_simplex(o.theta0);
  std::vector<double> probes;
  for (std::size_t i = 0; i <= o.windows; ++i) probes.push_back(o.window * static_cast<double>(i));
  const SimulationConfig cfg = rescaled_config(o.N, static_cast<std::size_t>(o.theta0.size()), probes.back(), o.seed,
                                               o.replicates, o.dt, o.threads);
  RescaledOptions ro;
  ro.probe_times = probes;
  const auto runs = rescaled_fraction_batch(model, report, on_gamma(report.h_tilde, o.theta0), cfg, ro);
  std::vector<Matrix> theta;
  for (const auto& tr : runs) theta.push_back(tr.theta);
  const CovarianceRegression reg = regress_increment_covariance(theta, o.window);

  TestReport r;
  r.name = "covariance_structure[" + model.name + "]";
  r.statistic = reg.slope;
  r.expected = 1.0;
  r.lower = 1.0 - o.tolerance;
  r.upper = 1.0 + o.tolerance;
  const bool signs = o.theta0.size() < 2 || (reg.diagonal_mean_product > 0.0 && reg.offdiagonal_mean_product < 0.0);
  r.passed = reg.slope >= r.lower && reg.slope <= r.upper && signs;
  r.replicates = o.replicates;
  r.seed = o.seed;
  r.details = {{"window", o.window},
               {"windows", o.windows},
               {"increments", reg.samples},
               {"diagonal_mean_product", reg.diagonal_mean_product},
               {"offdiagonal_mean_product", reg.offdiagonal_mean_product},
               {"sign_structure_ok", signs},
               {"N", o.N}};
  return r;
}

MomentGate compare_moments(const std::string& label, const std::vector<double>& a, const std::vector<double>& b,
                           double z_gate) {
  auto moments = [](const std::vector<double>& x, double& mean, double& var, double& var_se, double& mean_se) {
    const double n = static_cast<double>(x.size());
    mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double m2 = 0.0, m4 = 0.0;
    for (double v : x) {
      const double d = v - mean;
      m2 += d * d;
      m4 += d * d * d * d;
    }
    var = m2 / (n - 1.0);
    mean_se = std::sqrt(var / n);
    var_se = std::sqrt(std::max(0.0, m4 / n - (m2 / n) * (m2 / n)) / n);
  };
  if (a.size() < 2 || b.size() < 2) throw ConfigError("moment comparison needs at least two samples per side");
  MomentGate g;
  g.label = label;
  double va_se, vb_se, ma_se, mb_se;
  moments(a, g.mean_a, g.var_a, va_se, ma_se);
  moments(b, g.mean_b, g.var_b, vb_se, mb_se);
  auto z = [](double x, double y, double sx, double sy) {
    const double s = std::hypot(sx, sy);
    if (s > 0.0) return (x - y) / s;
    return x == y ? 0.0 : std::numeric_limits<double>::infinity();
  };
  g.mean_z = z(g.mean_a, g.mean_b, ma_se, mb_se);
  g.var_z = z(g.var_a, g.var_b, va_se, vb_se);
  g.passed = std::abs(g.mean_z) <= z_gate && std::abs(g.var_z) <= z_gate;
  return g;
}

TestReport consistency_exchangeability_test(const DecomposedModel& model, const EquilibriumReport& report,
                                            const CompositionMatrix& u0, const ConsistencyOptions& o) {
  const auto K = static_cast<std::size_t>(u0.cols());
  if (K < 2) throw ConfigError("consistency test needs K >= 2");
  std::vector<std::size_t> perm = o.permutation;
  if (perm.empty()) {
    for (std::size_t k = 0; k < K; ++k) perm.push_back((k + 1) % K);
  }
  {
    std::vector<std::size_t> sorted = perm;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t k = 0; k < K; ++k)
      if (sorted.size() != K || sorted[k] != k) throw ConfigError("permutation is not a permutation of 0..K-1");
  }
  const double t_end = *std::max_element(o.times.begin(), o.times.end());
  RescaledOptions ro;
  ro.probe_times = o.times;

  auto run = [&](const CompositionMatrix& start, std::uint64_t seed) {
    const SimulationConfig cfg =
        rescaled_config(o.N, static_cast<std::size_t>(start.cols()), t_end, seed, o.replicates, o.dt, o.threads);
    return rescaled_fraction_batch(model, report, start, cfg, ro);
  };

  CompositionMatrix merged(u0.rows(), static_cast<Eigen::Index>(K - 1));
  merged.leftCols(static_cast<Eigen::Index>(K - 2)) = u0.leftCols(static_cast<Eigen::Index>(K - 2));
  merged.col(static_cast<Eigen::Index>(K - 2)) = u0.col(static_cast<Eigen::Index>(K - 2)) + u0.col(static_cast<Eigen::Index>(K - 1));
  CompositionMatrix permuted(u0.rows(), u0.cols());
  for (std::size_t k = 0; k < K; ++k) permuted.col(static_cast<Eigen::Index>(k)) = u0.col(static_cast<Eigen::Index>(perm[k]));

  const auto base = run(u0, o.seed);
  const auto merged_runs = run(merged, o.independent_seeds ? o.seed + 1 : o.seed);
  const auto permuted_runs = run(permuted, o.independent_seeds ? o.seed + 2 : o.seed);

  auto column = [](const std::vector<RescaledTrajectory>& runs, std::size_t time, auto&& coordinate) {
    std::vector<double> out;
    out.reserve(runs.size());
    for (const auto& tr : runs) out.push_back(coordinate(tr.theta.row(static_cast<Eigen::Index>(time))));
    return out;
  };

  std::vector<MomentGate> gates;
  for (std::size_t i = 0; i < o.times.size(); ++i) {
    const std::string at = "t=" + std::to_string(o.times[i]);
    const auto a = column(base, i, [K](const auto& row) { return row(K - 2) + row(K - 1); });
    const auto b = column(merged_runs, i, [K](const auto& row) { return row(K - 2); });
    gates.push_back(compare_moments("merge " + at, a, b));
    for (std::size_t k = 0; k < K; ++k) {
      const std::size_t src = perm[k];
      const auto x = column(base, i, [src](const auto& row) { return row(src); });
      const auto y = column(permuted_runs, i, [k](const auto& row) { return row(k); });
      gates.push_back(compare_moments("permute k=" + std::to_string(k) + " " + at, x, y));
    }
  }

  TestReport r;
  r.name = "consistency_exchangeability[" + model.name + "]";
  r.expected = 0.0;
  r.lower = 0.0;
  r.upper = 3.0;
  r.replicates = o.replicates;
  r.seed = o.seed;
  double worst = 0.0;
  bool all = true;
  nlohmann::json list = nlohmann::json::array();
  for (const MomentGate& g : gates) {
    worst = std::max({worst, std::abs(g.mean_z), std::abs(g.var_z)});
    all = all && g.passed;
    list.push_back({{"label", g.label},
                    {"mean", {g.mean_a, g.mean_b}},
                    {"mean_z", g.mean_z},
                    {"variance", {g.var_a, g.var_b}},
                    {"variance_z", g.var_z},
                    {"passed", g.passed}});
  }
  r.statistic = worst;
  r.passed = all;
  r.details = {{"gates", list}, {"permutation", perm}, {"N", o.N}, {"times", o.times}};
  return r;
}

StabilitySeries stability_diagnostics(const Trajectory& trajectory, const EquilibriumReport& report) {
  StabilitySeries s;
  for (std::size_t i = 0; i < trajectory.states.size(); ++i) {
    const Matrix& u = trajectory.states[i];
    s.times.push_back(trajectory.times[i]);
    s.total_deviation.push_back((u.rowwise().sum() - report.h_tilde).norm());
    double z = 0.0;
    for (Eigen::Index k = 0; k < u.cols(); ++k) z = std::max(z, (u.col(k) - u.col(k).dot(report.h) * report.h_tilde).norm());
    s.max_deviation.push_back(z);
    s.dist_gamma.push_back((u - report.h_tilde * theta_hat(u, report.h).transpose()).norm());
  }
  return s;
}

StabilitySeries stability_diagnostics(const RescaledTrajectory& trajectory) {
  StabilitySeries s;
  s.times = trajectory.times;
  s.total_deviation = trajectory.total_deviation;
  s.max_deviation = trajectory.max_deviation;
  s.dist_gamma = trajectory.dist_gamma;
  return s;
}

}  // namespace effpop
