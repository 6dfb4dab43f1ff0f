#pragma once

#include "effpop/core.hpp"
#include "effpop/ibm.hpp"
#include "effpop/model.hpp"

#include <json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace effpop {

/// Exact equilibrium quantities for models where they are known in closed form.
struct ClosedForms {
  Vector h_tilde;
  Vector h;
  double sigma_sq = 0.0;
  /// 1 / N_e as a function of N.
  std::function<double(double N)> inverse_ne;
};

struct ZooEntry {
  std::string name;
  nlohmann::json parameters;  // the resolved parameter set, defaults filled in
  DecomposedModel model;
  Vector guess;  // positive starting point for the fixed-point solver
  std::optional<ClosedForms> closed_forms;
  std::optional<RateSpec> rates;  // individual-based realisation, when one exists
};

/// Competitive Lotka-Volterra with the decomposition family
///
///   F(v) = [ b0 + b11 v1 + (b12 - alpha) v2    alpha v1                        ]
///          [ beta v2                           b0 + b22 v2 + (b21 - beta) v1   ]
///
/// Every (alpha, beta) gives the same drift. Noise options:
///   "demographic": the covariance of the birth / death / cross-birth event set
///                  returned by lotka_volterra_rates, so the SDE is the
///                  diffusion limit of that individual-based model;
///   "local":       a_xx(v) = sqrt(g v_x), i.e. C_{xy,z} = delta_xz delta_yz g.
struct LotkaVolterraParams {
  double b0 = 1.0;
  double b11 = -0.2;
  double b12 = -0.05;
  double b22 = -0.1;
  double b21 = -0.05;
  double alpha = 0.1;
  double beta = 0.1;
  std::string noise = "demographic";
  double g = 1.0;
};

ZooEntry lotka_volterra(const LotkaVolterraParams& p = {});

/// Per parent of class 1: birth (offspring 2 e1) at rate b0, death at rate
/// -b11 v1 - (b12 - alpha) v2, and cross-birth (offspring e1 + e2) at rate
/// beta v2; mirrored for class 2 with alpha v1. Requires b0 >= 0 and
/// b11, b12 - alpha, b22, b21 - beta <= 0 so that all rates are nonnegative.
RateSpec lotka_volterra_rates(const LotkaVolterraParams& p = {});

/// Two-sex diploid model on E = {m, f} with mating rate 1/N, male birth
/// probability p and death rate alpha (f + m)^2 / N^2.
ZooEntry two_sex(double p = 0.5, double alpha = 0.125);

/// F(v) = diag(r(v_x)) + migration and C_{xy,z}(v) = delta_xz delta_yz g(v_z).
ZooEntry local_branching(std::size_t size, std::function<double(double)> r, std::function<double(double)> g,
                         const std::optional<Matrix>& migration = std::nullopt);

/// Names accepted by make_zoo_entry.
std::vector<std::string> zoo_names();

/// Builds a zoo model from a parameter object. Unknown names and parameters
/// throw ConfigError. local_branching reads r and g as expressions in x.
ZooEntry make_zoo_entry(const std::string& name, const nlohmann::json& parameters = nlohmann::json::object());

/// Equal split U0^k = V0 / K of V0 = (1, 1), the starting composition used for
/// the Lotka-Volterra figure runs.
CompositionMatrix equal_split(const Vector& v0, std::size_t K);

}  // namespace effpop
