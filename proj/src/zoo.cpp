#include "effpop/zoo.hpp"

#include "effpop/expression.hpp"

#include <cmath>
#include <set>

namespace effpop {

namespace {

Vector lv_equilibrium(const LotkaVolterraParams& p) {
  Eigen::Matrix2d a;
  a << p.b11, p.b12, p.b21, p.b22;
  const Eigen::Vector2d rhs(-p.b0, -p.b0);
  const Eigen::Vector2d v = a.fullPivLu().solve(rhs);
  return Vector(v);
}

void require_demographic_signs(const LotkaVolterraParams& p) {
  if (p.b0 < 0.0 || p.b11 > 0.0 || p.b12 - p.alpha > 0.0 || p.b22 > 0.0 || p.b21 - p.beta > 0.0) {
    throw ConfigError(
        "Lotka-Volterra event rates need b0 >= 0 and b11, b12 - alpha, b22, b21 - beta <= 0");
  }
}

}  // namespace

ZooEntry lotka_volterra(const LotkaVolterraParams& p) {
  if (!(p.alpha > 0.0) || !(p.beta > 0.0)) throw ConfigError("lotka_volterra needs alpha, beta > 0");
  if (p.noise != "demographic" && p.noise != "local") {
    throw ConfigError("lotka_volterra noise must be \"demographic\" or \"local\"");
  }
  if (p.noise == "local" && !(p.g >= 0.0)) throw ConfigError("lotka_volterra local noise needs g >= 0");
  if (p.noise == "demographic") require_demographic_signs(p);

  ZooEntry z;
  z.name = "lotka_volterra";
  z.parameters = {{"b0", p.b0}, {"b11", p.b11},     {"b12", p.b12},   {"b22", p.b22}, {"b21", p.b21},
                  {"alpha", p.alpha}, {"beta", p.beta}, {"noise", p.noise}, {"g", p.g}};
  z.guess = Vector::Ones(2);

  DecomposedModel& m = z.model;
  m.name = "lotka_volterra";
  m.space = TypeSpace({"v1", "v2"});
  m.mean_matrix = [p](const Vector& v, Matrix& out) {
    out.resize(2, 2);
    out(0, 0) = p.b0 + p.b11 * v[0] + (p.b12 - p.alpha) * v[1];
    out(0, 1) = p.alpha * v[0];
    out(1, 0) = p.beta * v[1];
    out(1, 1) = p.b0 + p.b22 * v[1] + (p.b21 - p.beta) * v[0];
  };
  m.drift_jacobian = [p](const Vector& v, Matrix& out) {
    out.resize(2, 2);
    out(0, 0) = p.b0 + 2.0 * p.b11 * v[0] + p.b12 * v[1];
    out(0, 1) = p.b12 * v[0];
    out(1, 0) = p.b21 * v[1];
    out(1, 1) = p.b0 + 2.0 * p.b22 * v[1] + p.b21 * v[0];
  };

  if (p.noise == "demographic") {
    // Slice z collects the squared jumps of the events with parent z.
    m.covariance_tensor = [p](const Vector& v, CovarianceTensor& c) {
      c.set_zero(2);
      const double d1 = -p.b11 * v[0] - (p.b12 - p.alpha) * v[1];
      const double d2 = -p.b22 * v[1] - (p.b21 - p.beta) * v[0];
      c(0, 0, 0) = p.b0 + d1;
      c(1, 1, 0) = p.beta * v[1];
      c(0, 0, 1) = p.alpha * v[0];
      c(1, 1, 1) = p.b0 + d2;
    };
    m.noise_factor = [p](const Vector& v, const Vector& w, Matrix& out) {
      const double d1 = -p.b11 * v[0] - (p.b12 - p.alpha) * v[1];
      const double d2 = -p.b22 * v[1] - (p.b21 - p.beta) * v[0];
      const double w1 = std::max(w[0], 0.0), w2 = std::max(w[1], 0.0);
      out.setZero(2, 2);
      out(0, 0) = std::sqrt(std::max(0.0, (p.b0 + d1) * w1 + p.alpha * v[0] * w2));
      out(1, 1) = std::sqrt(std::max(0.0, p.beta * v[1] * w1 + (p.b0 + d2) * w2));
    };
  } else {
    const double g = p.g;
    NoiseDecomposition nd = build_sigma_from_a(
        [g](const Vector& v) {
          Matrix a = Matrix::Zero(2, 2);
          a(0, 0) = std::sqrt(g * std::max(v[0], 0.0));
          a(1, 1) = std::sqrt(g * std::max(v[1], 0.0));
          return a;
        },
        2, {Vector::Unit(2, 0), Vector::Unit(2, 1)});
    m.noise_factor = nd.noise_factor;
    m.covariance_tensor = nd.covariance_tensor;
  }

  const Vector ht = lv_equilibrium(p);
  if ((ht.array() > 0.0).all()) {
    ClosedForms cf;
    cf.h_tilde = ht;
    // h^T F(h~) = 0 reduces to h2 beta = h1 alpha; then <h, h~> = 1.
    const double h1 = 1.0 / (ht[0] + p.alpha * ht[1] / p.beta);
    cf.h = Vector(2);
    cf.h << h1, p.alpha * h1 / p.beta;
    Vector aa(2);
    if (p.noise == "demographic") {
      aa << 2.0 * ht[0] * (p.b0 + p.alpha * ht[1]), 2.0 * ht[1] * (p.b0 + p.beta * ht[0]);
    } else {
      aa << p.g * ht[0], p.g * ht[1];
    }
    cf.sigma_sq = cf.h.cwiseAbs2().dot(aa);
    const double s2 = cf.sigma_sq;
    cf.inverse_ne = [s2](double N) { return s2 / N; };
    z.closed_forms = cf;
  }
  if (p.noise == "demographic") z.rates = lotka_volterra_rates(p);
  return z;
}

RateSpec lotka_volterra_rates(const LotkaVolterraParams& p) {
  require_demographic_signs(p);
  RateSpec spec;
  spec.space = TypeSpace({"v1", "v2"});
  auto offspring = [](int a, int b) {
    Eigen::VectorXi n(2);
    n << a, b;
    return n;
  };
  spec.events.push_back({0, offspring(2, 0), [p](const Vector&) { return p.b0; }, "birth 1"});
  spec.events.push_back(
      {0, offspring(0, 0), [p](const Vector& v) { return -p.b11 * v[0] - (p.b12 - p.alpha) * v[1]; }, "death 1"});
  spec.events.push_back({0, offspring(1, 1), [p](const Vector& v) { return p.beta * v[1]; }, "cross-birth 1"});
  spec.events.push_back({1, offspring(0, 2), [p](const Vector&) { return p.b0; }, "birth 2"});
  spec.events.push_back(
      {1, offspring(0, 0), [p](const Vector& v) { return -p.b22 * v[1] - (p.b21 - p.beta) * v[0]; }, "death 2"});
  spec.events.push_back({1, offspring(1, 1), [p](const Vector& v) { return p.alpha * v[0]; }, "cross-birth 2"});
  return spec;
}

ZooEntry two_sex(double p, double alpha) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("two_sex needs 0 < p < 1");
  if (!(alpha > 0.0)) throw ConfigError("two_sex needs alpha > 0");

  ZooEntry z;
  z.name = "two_sex";
  z.parameters = {{"p", p}, {"alpha", alpha}};
  DecomposedModel& m = z.model;
  m.name = "two_sex";
  m.space = TypeSpace({"m", "f"});
  m.mean_matrix = [p, alpha](const Vector& v, Matrix& out) {
    const double males = v[0], females = v[1];
    const double death = 0.25 * alpha * (males + females) * (males + females);
    out.resize(2, 2);
    out(0, 0) = -death + 0.5 * p * females / 2.0;
    out(0, 1) = 0.5 * p * males / 2.0;
    out(1, 0) = 0.5 * (1.0 - p) * females / 2.0;
    out(1, 1) = -death + 0.5 * (1.0 - p) * males / 2.0;
  };
  NoiseDecomposition nd = build_sigma_from_a(
      [p, alpha](const Vector& v) {
        const double males = std::max(v[0], 0.0), females = std::max(v[1], 0.0);
        const double total2 = (males + females) * (males + females);
        Matrix a = Matrix::Zero(2, 2);
        a(0, 0) = std::sqrt(p * females * males + 0.5 * alpha * males * total2);
        a(1, 1) = std::sqrt((1.0 - p) * females * males + 0.5 * alpha * females * total2);
        return a;
      },
      2, {Vector::Unit(2, 0), Vector::Unit(2, 1)});
  m.noise_factor = nd.noise_factor;
  m.covariance_tensor = nd.covariance_tensor;

  const double n_eq = 2.0 * p * (1.0 - p) / alpha;
  const double m_eq = p * n_eq, f_eq = (1.0 - p) * n_eq;
  z.guess = Vector::Constant(2, 0.5 * n_eq);

  ClosedForms cf;
  cf.h_tilde = Vector(2);
  cf.h_tilde << m_eq, f_eq;
  cf.h = Vector(2);
  cf.h << 1.0 / (2.0 * m_eq), 1.0 / (2.0 * f_eq);
  cf.sigma_sq = (1.0 / (4.0 * m_eq) + 1.0 / (4.0 * f_eq)) * (p * (1.0 - p) + 0.5 * alpha * n_eq) * n_eq;
  cf.inverse_ne = [p, alpha, n_eq, m_eq, f_eq](double N) {
    const double s2 = p * (1.0 - p) * n_eq / 2.0 + alpha * (n_eq / 2.0) * (n_eq / 2.0);
    const double males = N * m_eq / 2.0, females = N * f_eq / 2.0;
    return s2 * (1.0 / (4.0 * males) + 1.0 / (4.0 * females));
  };
  z.closed_forms = cf;
  return z;
}

ZooEntry local_branching(std::size_t size, std::function<double(double)> r, std::function<double(double)> g,
                         const std::optional<Matrix>& migration) {
  if (size == 0) throw ConfigError("local_branching needs at least one site");
  if (!r || !g) throw ConfigError("local_branching needs r and g");
  const auto n = static_cast<Eigen::Index>(size);
  Matrix mig = migration ? *migration : Matrix::Zero(n, n);
  if (mig.rows() != n || mig.cols() != n) throw ConfigError("migration matrix has the wrong shape");

  ZooEntry z;
  z.name = "local_branching";
  z.guess = Vector::Constant(n, 0.5);
  DecomposedModel& m = z.model;
  m.name = "local_branching";
  m.space = TypeSpace::numbered(size);
  m.mean_matrix = [r, mig](const Vector& v, Matrix& out) {
    out = mig;
    for (Eigen::Index x = 0; x < v.size(); ++x) out(x, x) += r(v[x]);
  };
  m.covariance_tensor = [g, size](const Vector& v, CovarianceTensor& c) {
    c.set_zero(size);
    for (std::size_t x = 0; x < size; ++x) c(x, x, x) = g(v[static_cast<Eigen::Index>(x)]);
  };
  m.noise_factor = [g](const Vector& v, const Vector& w, Matrix& out) {
    out.setZero(v.size(), v.size());
    for (Eigen::Index x = 0; x < v.size(); ++x) out(x, x) = std::sqrt(std::max(0.0, g(v[x]) * std::max(w[x], 0.0)));
  };
  return z;
}

std::vector<std::string> zoo_names() { return {"lotka_volterra", "two_sex", "local_branching"}; }

namespace {

void reject_unknown(const nlohmann::json& params, const std::set<std::string>& known, const std::string& model) {
  if (!params.is_object()) throw ConfigError(model + ": parameters must be a table/object");
  for (const auto& [key, value] : params.items()) {
    (void)value;
    if (!known.count(key)) throw ConfigError(model + ": unknown parameter '" + key + "'");
  }
}

double number(const nlohmann::json& params, const std::string& key, double fallback, const std::string& model) {
  if (!params.contains(key)) return fallback;
  const auto& v = params.at(key);
  if (!v.is_number()) throw ConfigError(model + "." + key + " must be a number");
  return v.get<double>();
}

}  // namespace

ZooEntry make_zoo_entry(const std::string& name, const nlohmann::json& parameters) {
  const nlohmann::json params = parameters.is_null() ? nlohmann::json::object() : parameters;
  if (name == "lotka_volterra") {
    reject_unknown(params, {"b0", "b11", "b12", "b22", "b21", "alpha", "beta", "noise", "g"}, name);
    LotkaVolterraParams p;
    p.b0 = number(params, "b0", p.b0, name);
    p.b11 = number(params, "b11", p.b11, name);
    p.b12 = number(params, "b12", p.b12, name);
    p.b22 = number(params, "b22", p.b22, name);
    p.b21 = number(params, "b21", p.b21, name);
    p.alpha = number(params, "alpha", p.alpha, name);
    p.beta = number(params, "beta", p.beta, name);
    p.g = number(params, "g", p.g, name);
    if (params.contains("noise")) {
      if (!params["noise"].is_string()) throw ConfigError(name + ".noise must be a string");
      p.noise = params["noise"].get<std::string>();
    }
    return lotka_volterra(p);
  }
  if (name == "two_sex") {
    reject_unknown(params, {"p", "alpha"}, name);
    return two_sex(number(params, "p", 0.5, name), number(params, "alpha", 0.125, name));
  }
  if (name == "local_branching") {
    reject_unknown(params, {"size", "r", "g", "migration"}, name);
    const auto size = static_cast<std::size_t>(number(params, "size", 1.0, name));
    auto expr = [&](const char* key, const char* fallback) {
      const std::string text = params.contains(key) ? params.at(key).get<std::string>() : std::string(fallback);
      return Expression::parse(text, {"x"});
    };
    const Expression r = expr("r", "1 - x");
    const Expression g = expr("g", "1");
    std::optional<Matrix> mig;
    if (params.contains("migration")) {
      const auto& rows = params.at("migration");
      if (!rows.is_array() || rows.size() != size) throw ConfigError(name + ".migration must be a size x size array");
      Matrix mm(static_cast<Eigen::Index>(size), static_cast<Eigen::Index>(size));
      for (std::size_t i = 0; i < size; ++i) {
        if (!rows[i].is_array() || rows[i].size() != size) throw ConfigError(name + ".migration must be a size x size array");
        for (std::size_t j = 0; j < size; ++j) mm(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j].get<double>();
      }
      mig = mm;
    }
    ZooEntry z = local_branching(size, [r](double x) { return r(x); }, [g](double x) { return g(x); }, mig);
    z.parameters = {{"size", size}, {"r", r.text()}, {"g", g.text()}};
    if (mig) z.parameters["migration"] = params.at("migration");
    return z;
  }
  std::string list;
  for (const auto& n : zoo_names()) list += (list.empty() ? "" : ", ") + n;
  throw ConfigError("unknown model '" + name + "'; available: " + list);
}

CompositionMatrix equal_split(const Vector& v0, std::size_t K) {
  if (K == 0) throw ConfigError("K must be positive");
  return v0.replicate(1, static_cast<Eigen::Index>(K)) / static_cast<double>(K);
}

}  // namespace effpop
