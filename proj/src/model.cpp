#include "effpop/model.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>
#include <sstream>
#include <utility>

namespace effpop {

namespace {

std::string format_vector(const Vector& v) {
  std::ostringstream os;
  os << "(";
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << ")";
  return os.str();
}

double min_symmetric_eigenvalue(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace

Matrix DecomposedModel::F(const Vector& v) const {
  Matrix out;
  mean_matrix(v, out);
  return out;
}

CovarianceTensor DecomposedModel::C(const Vector& v) const {
  CovarianceTensor out(dim());
  covariance_tensor(v, out);
  return out;
}

Matrix DecomposedModel::sigma(const Vector& v, const Vector& w) const {
  Matrix out;
  noise_factor(v, w, out);
  return out;
}

Vector drift(const DecomposedModel& model, const Vector& v) {
  const Matrix f = model.F(v);
  if (!f.allFinite()) throw EvaluationError("non-finite mean matrix F(v) at v = " + format_vector(v), v);
  return f * v;
}

Matrix total_covariance(const DecomposedModel& model, const Vector& v, double tol) {
  const Matrix aa = model.C(v).contract(v);
  if (!aa.allFinite()) throw EvaluationError("non-finite C(v)v at v = " + format_vector(v), v);
  const double scale = 1.0 + aa.cwiseAbs().maxCoeff();
  if (min_symmetric_eigenvalue(aa) < -tol * scale) {
    throw ModelError("aa*(v) = C(v)v is not positive semidefinite at v = " + format_vector(v));
  }
  return aa;
}

Matrix fraction_covariance(const DecomposedModel& model, const Vector& v, const Vector& w,
                           double tol) {
  const Matrix cw = model.C(v).contract(w);
  const Matrix s = model.sigma(v, w);
  const double residual = (s * s.transpose() - cw).norm();
  if (residual > tol * (1.0 + cw.norm())) {
    std::ostringstream os;
    os << "sigma(v,w)sigma*(v,w) differs from C(v)w by " << residual << " at v = "
       << format_vector(v) << ", w = " << format_vector(w);
    throw ModelError(os.str());
  }
  return cw;
}

NoiseDecomposition build_sigma_from_a(DiffusionFn a, std::size_t dim,
                                      const std::vector<Vector>& boundary_checks, double tol) {
  for (const Vector& v : boundary_checks) {
    const Matrix av = a(v);
    for (Eigen::Index y = 0; y < v.size(); ++y) {
      if (v[y] == 0.0 && av.col(y).cwiseAbs().maxCoeff() > tol) {
        throw ModelError("diffusion matrix has a nonzero column " + std::to_string(y) +
                         " where v_y = 0, at v = " + format_vector(v));
      }
    }
  }

  auto scaled = [a, dim](const Vector& v) {
    Matrix av = a(v);
    const auto n = static_cast<Eigen::Index>(dim);
    for (Eigen::Index y = 0; y < n; ++y) {
      if (v[y] > 0.0) {
        av.col(y) /= std::sqrt(v[y]);
      } else {
        av.col(y).setZero();
      }
    }
    return av;
  };

  NoiseDecomposition out;
  out.scaled_factor = scaled;
  out.noise_factor = [scaled](const Vector& v, const Vector& w, Matrix& m) {
    m = scaled(v);
    for (Eigen::Index y = 0; y < w.size(); ++y) m.col(y) *= std::sqrt(std::max(w[y], 0.0));
  };
  out.covariance_tensor = [scaled, dim](const Vector& v, CovarianceTensor& c) {
    const Matrix A = scaled(v);
    c.set_zero(dim);
    for (std::size_t z = 0; z < dim; ++z) {
      const auto zi = static_cast<Eigen::Index>(z);
      c.slice(z).noalias() = A.col(zi) * A.col(zi).transpose();
    }
  };
  return out;
}

bool ValidationReport::all_pass() const { return failures() == 0; }

std::size_t ValidationReport::failures() const {
  std::size_t n = 0;
  for (const auto& p : points) n += p.ok() ? 0 : 1;
  return n;
}

ValidationReport check_assumptions(const DecomposedModel& model,
                                   const std::vector<Vector>& sample_points, double tol,
                                   unsigned long long seed) {
  ValidationReport report;
  report.tol = tol;
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto n = static_cast<Eigen::Index>(model.dim());

  for (const Vector& v : sample_points) {
    PointCheck pc;
    pc.point = v;

    Vector w(n), w1(n), w2(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      w[i] = unit(gen) * (1.0 + v[i]);
      w1[i] = unit(gen) * (1.0 + v[i]);
      w2[i] = unit(gen) * (1.0 + v[i]);
    }
    const double alpha = 2.0 * unit(gen) - 1.0;
    const double beta = 2.0 * unit(gen) - 1.0;

    const CovarianceTensor c = model.C(v);
    const Matrix cw = c.contract(w);
    const Matrix s = model.sigma(v, w);
    pc.decomposition_residual = (s * s.transpose() - cw).norm() / (1.0 + cw.norm());
    pc.decomposition_ok = std::isfinite(pc.decomposition_residual) && pc.decomposition_residual <= tol;

    const Matrix lhs = c.contract(alpha * w1 + beta * w2);
    const Matrix rhs = alpha * c.contract(w1) + beta * c.contract(w2);
    pc.linearity_residual = (lhs - rhs).norm() / (1.0 + rhs.norm());
    pc.linearity_ok = pc.linearity_residual <= tol;

    const Matrix f = model.F(v);
    double min_off = 0.0;
    bool first = true;
    for (Eigen::Index x = 0; x < n; ++x) {
      for (Eigen::Index y = 0; y < n; ++y) {
        if (x == y) continue;
        min_off = first ? f(x, y) : std::min(min_off, f(x, y));
        first = false;
      }
    }
    pc.min_offdiagonal = min_off;
    pc.metzler_ok = f.allFinite() && min_off >= -tol;

    const Matrix aa = c.contract(v);
    pc.min_eigenvalue = min_symmetric_eigenvalue(aa);
    pc.psd_ok = pc.min_eigenvalue >= -tol * (1.0 + aa.cwiseAbs().maxCoeff());

    report.points.push_back(std::move(pc));
  }
  return report;
}

DecomposedModel scaled_noise(const DecomposedModel& model, double factor) {
  DecomposedModel out = model;
  out.name = model.name + " (noise x" + std::to_string(factor) + ")";
  const auto noise = model.noise_factor;
  const auto cov = model.covariance_tensor;
  out.noise_factor = [noise, factor](const Vector& v, const Vector& w, Matrix& m) {
    noise(v, w, m);
    m *= factor;
  };
  out.covariance_tensor = [cov, factor](const Vector& v, CovarianceTensor& c) {
    cov(v, c);
    for (std::size_t z = 0; z < c.dim(); ++z) c.slice(z) *= factor * factor;
  };
  return out;
}

std::vector<Vector> sample_box(const Box& box, std::size_t count, unsigned long long seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Vector> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Vector v(box.lower.size());
    for (Eigen::Index j = 0; j < v.size(); ++j) {
      v[j] = box.lower[j] + unit(gen) * (box.upper[j] - box.lower[j]);
    }
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace effpop
