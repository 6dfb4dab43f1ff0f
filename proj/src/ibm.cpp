#include "effpop/ibm.hpp"

#include "effpop/parallel.hpp"
#include "effpop/rng.hpp"
#include "effpop/sde.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>
#include <sstream>

namespace effpop {

namespace {

void check_event(const RateSpec& spec, const BirthEvent& e) {
  if (e.parent >= spec.dim()) throw ConfigError("event parent index out of range");
  if (static_cast<std::size_t>(e.offspring.size()) != spec.dim()) {
    throw ConfigError("event offspring vector has the wrong dimension");
  }
  if ((e.offspring.array() < 0).any()) throw ConfigError("offspring counts must be nonnegative");
  if (!e.rate) throw ConfigError("event has no rate function");
}

double evaluate_rate(const BirthEvent& e, const Vector& v) {
  const double r = e.rate(v);
  if (!std::isfinite(r) || r < 0.0) {
    std::ostringstream os;
    os << "event '" << e.label << "' has invalid rate " << r;
    throw NumericalError(os.str());
  }
  return r;
}

}  // namespace

Matrix mean_matrix_from_rates(const RateSpec& spec, const Vector& v) {
  const auto n = static_cast<Eigen::Index>(spec.dim());
  Matrix f = Matrix::Zero(n, n);
  for (const BirthEvent& e : spec.events) {
    check_event(spec, e);
    const double r = evaluate_rate(e, v);
    const auto y = static_cast<Eigen::Index>(e.parent);
    for (Eigen::Index x = 0; x < n; ++x) f(x, y) += r * (e.offspring[x] - (x == y ? 1 : 0));
  }
  return f;
}

CovarianceTensor covariance_tensor_from_rates(const RateSpec& spec, const Vector& v) {
  const auto n = static_cast<Eigen::Index>(spec.dim());
  CovarianceTensor c(spec.dim());
  for (const BirthEvent& e : spec.events) {
    check_event(spec, e);
    const double r = evaluate_rate(e, v);
    const auto z = static_cast<Eigen::Index>(e.parent);
    Vector jump(n);
    for (Eigen::Index x = 0; x < n; ++x) jump[x] = e.offspring[x] - (x == z ? 1.0 : 0.0);
    c.slice(e.parent).noalias() += r * jump * jump.transpose();
  }
  return c;
}

DecomposedModel model_from_rates(const RateSpec& spec, std::string name) {
  for (const BirthEvent& e : spec.events) check_event(spec, e);
  DecomposedModel m;
  m.name = std::move(name);
  m.space = spec.space;
  m.mean_matrix = [spec](const Vector& v, Matrix& out) { out = mean_matrix_from_rates(spec, v); };
  m.covariance_tensor = [spec](const Vector& v, CovarianceTensor& out) { out = covariance_tensor_from_rates(spec, v); };
  m.noise_factor = [spec](const Vector& v, const Vector& w, Matrix& out) {
    const Matrix cw = covariance_tensor_from_rates(spec, v).contract(w.cwiseMax(0.0));
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (cw + cw.transpose()));
    out = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
          es.eigenvectors().transpose();
  };
  return m;
}

IbmTrajectory gillespie(const RateSpec& spec, double N, const Eigen::VectorXi& v0_counts, double t_end,
                        std::uint64_t seed, const GillespieOptions& options, std::uint32_t stream) {
  if (!(N > 0.0)) throw ConfigError("N must be positive");
  if (static_cast<std::size_t>(v0_counts.size()) != spec.dim()) throw ConfigError("initial counts have the wrong dimension");
  if ((v0_counts.array() < 0).any()) throw ConfigError("initial counts must be nonnegative");
  for (const BirthEvent& e : spec.events) check_event(spec, e);

  const auto n = static_cast<Eigen::Index>(spec.dim());
  Philox4x32 gen(seed, stream, kAuxStream);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Eigen::VectorXi counts = v0_counts;
  Vector v(n);
  std::vector<double> propensity(spec.events.size());
  std::vector<Eigen::VectorXi> jumps;
  for (const BirthEvent& e : spec.events) {
    Eigen::VectorXi j = e.offspring;
    j[static_cast<Eigen::Index>(e.parent)] -= 1;
    jumps.push_back(std::move(j));
  }

  IbmTrajectory tr;
  Vector integral = Vector::Zero(n);
  double t = 0.0;
  double next_record = 0.0;
  const bool grid = options.record_every > 0.0;
  auto record_until = [&](double upto) {
    while (grid && next_record <= upto && next_record <= t_end) {
      tr.times.push_back(next_record);
      tr.counts.push_back(counts);
      next_record += options.record_every;
    }
  };
  auto accumulate = [&](double from, double to) {
    const double a = std::max(from, options.burn_in);
    const double b = std::min(to, t_end);
    if (b > a) integral += (b - a) * counts.cast<double>() / N;
  };

  if (!grid) {
    tr.times.push_back(0.0);
    tr.counts.push_back(counts);
  }
  while (t < t_end) {
    v = counts.cast<double>() / N;
    double total = 0.0;
    for (std::size_t i = 0; i < spec.events.size(); ++i) {
      const BirthEvent& e = spec.events[i];
      const int parents = counts[static_cast<Eigen::Index>(e.parent)];
      propensity[i] = parents > 0 ? parents * evaluate_rate(e, v) : 0.0;
      total += propensity[i];
    }
    if (!std::isfinite(total)) throw NumericalError("total event rate overflowed");
    if (total <= 0.0) {
      if (counts.sum() == 0 && !tr.extinct) {
        tr.extinct = true;
        tr.extinction_time = t;
      }
      record_until(t_end);
      accumulate(t, t_end);
      t = t_end;
      break;
    }
    const double wait = -std::log1p(-unit(gen)) / total;
    const double t_next = t + wait;
    record_until(std::min(t_next, t_end));
    accumulate(t, t_next);
    if (t_next >= t_end) {
      t = t_end;
      break;
    }
    double pick = unit(gen) * total;
    std::size_t chosen = spec.events.size() - 1;
    for (std::size_t i = 0; i < spec.events.size(); ++i) {
      if (pick < propensity[i]) {
        chosen = i;
        break;
      }
      pick -= propensity[i];
    }
    while (propensity[chosen] <= 0.0 && chosen > 0) --chosen;
    counts += jumps[chosen];
    t = t_next;
    if (++tr.events >= options.max_events) throw NumericalError("Gillespie run exceeded max_events");
    if (counts.sum() == 0) {
      tr.extinct = true;
      tr.extinction_time = t;
    }
  }
  if (!grid) {
    tr.times.push_back(t_end);
    tr.counts.push_back(counts);
  }
  const double window = t_end - std::min(options.burn_in, t_end);
  tr.time_average = window > 0.0 ? Vector(integral / window) : Vector(counts.cast<double>() / N);
  return tr;
}

CorrespondenceReport diffusion_consistency(const RateSpec& spec, const DecomposedModel& model,
                                           const std::vector<Vector>& sample_points, double tol,
                                           const MomentComparison* moments) {
  CorrespondenceReport report;
  report.tol = tol;
  for (const Vector& v : sample_points) {
    CorrespondencePoint p;
    p.point = v;
    const Matrix f_rates = mean_matrix_from_rates(spec, v);
    const Matrix f_model = model.F(v);
    p.mean_max_abs_diff = (f_rates - f_model).cwiseAbs().maxCoeff() / (1.0 + f_model.cwiseAbs().maxCoeff());
    const CovarianceTensor c_rates = covariance_tensor_from_rates(spec, v);
    const CovarianceTensor c_model = model.C(v);
    double cdiff = 0.0;
    for (std::size_t z = 0; z < spec.dim(); ++z) {
      const double scale = 1.0 + c_model.slice(z).cwiseAbs().maxCoeff();
      cdiff = std::max(cdiff, (c_rates.slice(z) - c_model.slice(z)).cwiseAbs().maxCoeff() / scale);
    }
    p.covariance_max_abs_diff = cdiff;
    report.max_mean_diff = std::max(report.max_mean_diff, p.mean_max_abs_diff);
    report.max_covariance_diff = std::max(report.max_covariance_diff, cdiff);
    report.points.push_back(std::move(p));
  }
  report.algebraic_match = report.max_mean_diff <= tol && report.max_covariance_diff <= tol;

  if (moments) {
    const auto n = static_cast<Eigen::Index>(spec.dim());
    const std::size_t reps = moments->replicates;
    if (reps < 2) throw ConfigError("moment comparison needs at least two replicates");
    Eigen::VectorXi counts0(n);
    for (Eigen::Index x = 0; x < n; ++x) counts0[x] = static_cast<int>(std::llround(moments->v0[x] * moments->N));
    const Vector v0 = counts0.cast<double>() / moments->N;

    std::vector<Vector> ibm(reps), sde(reps);
    SimulationConfig cfg;
    cfg.N = moments->N;
    cfg.t_end = moments->t;
    cfg.seed = moments->seed;
    cfg.max_records = 2;
    parallel_for(reps, [&](std::size_t r) {
      const IbmTrajectory tr = gillespie(spec, moments->N, counts0, moments->t, moments->seed, {},
                                         static_cast<std::uint32_t>(r));
      ibm[r] = tr.counts.back().cast<double>() / moments->N;
      sde[r] = simulate_total(model, v0, cfg, r).states.back().col(0);
    });
    auto mean_se = [&](const std::vector<Vector>& xs, Vector& mean, Vector& se) {
      mean = Vector::Zero(n);
      for (const Vector& x : xs) mean += x;
      mean /= static_cast<double>(xs.size());
      Vector var = Vector::Zero(n);
      for (const Vector& x : xs) var += (x - mean).cwiseAbs2();
      var /= static_cast<double>(xs.size() - 1);
      se = (var / static_cast<double>(xs.size())).cwiseSqrt();
    };
    mean_se(ibm, report.ibm_mean, report.ibm_se);
    mean_se(sde, report.sde_mean, report.sde_se);
    double zmax = 0.0;
    for (Eigen::Index x = 0; x < n; ++x) {
      const double se = std::hypot(report.ibm_se[x], report.sde_se[x]);
      const double diff = std::abs(report.ibm_mean[x] - report.sde_mean[x]);
      zmax = std::max(zmax, se > 0.0 ? diff / se : (diff > 0.0 ? INFINITY : 0.0));
    }
    report.moments_checked = true;
    report.max_mean_z = zmax;
    report.moments_match = zmax <= 3.0;
  }
  return report;
}

}  // namespace effpop
