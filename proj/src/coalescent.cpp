#include "effpop/coalescent.hpp"

#include "effpop/parallel.hpp"
#include "effpop/rng.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace effpop {

CoalescentRates build_rates(const EquilibriumReport& report, double N) {
  if (!(N > 0.0)) throw ConfigError("N must be positive");
  const auto n = report.h_tilde.size();
  CoalescentRates r;
  r.N = N;
  r.pi = report.pi;
  r.migration = Matrix::Zero(n, n);
  r.coalescence = Matrix::Zero(n, n);
  for (Eigen::Index x = 0; x < n; ++x) {
    for (Eigen::Index y = 0; y < n; ++y) {
      if (x != y) r.migration(x, y) = report.mean_matrix(x, y) * report.h_tilde[y] / report.h_tilde[x];
      const double ne = report.n_e(x, y);
      r.coalescence(x, y) = std::isinf(ne) ? 0.0 : 1.0 / (N * ne);
    }
  }
  Matrix q = r.migration;
  for (Eigen::Index x = 0; x < n; ++x) q(x, x) = -r.migration.row(x).sum();
  const Vector balance = q.transpose() * r.pi;
  r.stationarity_residual = n > 0 ? balance.cwiseAbs().maxCoeff() : 0.0;
  const double scale = 1.0 + (n > 0 ? q.cwiseAbs().maxCoeff() : 0.0);
  if (r.stationarity_residual > 1e-10 * scale) {
    std::ostringstream os;
    os << "Pi is not stationary for the lineage migration chain (residual " << r.stationarity_residual << ")";
    throw ConsistencyError(os.str());
  }
  return r;
}

Eigen::Index PairChain::index(Eigen::Index x, Eigen::Index y) const {
  if (x > y) std::swap(x, y);
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (states[i].first == x && states[i].second == y) return static_cast<Eigen::Index>(i);
  }
  return -1;
}

PairChain pair_chain(const CoalescentRates& rates) {
  const auto n = rates.migration.rows();
  PairChain chain;
  for (Eigen::Index x = 0; x < n; ++x)
    for (Eigen::Index y = x; y < n; ++y) chain.states.emplace_back(x, y);
  const auto s = static_cast<Eigen::Index>(chain.states.size());
  chain.generator = Matrix::Zero(s, s);
  chain.coalescence_rate = Vector::Zero(s);
  for (Eigen::Index i = 0; i < s; ++i) {
    const auto [x, y] = chain.states[static_cast<std::size_t>(i)];
    double out = 0.0;
    // Either lineage moves; when both sit in x the two moves lead to the same pair.
    for (Eigen::Index z = 0; z < n; ++z) {
      if (z != x) {
        const double rate = rates.migration(x, z);
        chain.generator(i, chain.index(z, y)) += rate;
        out += rate;
      }
      if (z != y) {
        const double rate = rates.migration(y, z);
        chain.generator(i, chain.index(x, z)) += rate;
        out += rate;
      }
    }
    chain.coalescence_rate[i] = rates.coalescence(x, y);
    chain.generator(i, i) -= out + chain.coalescence_rate[i];
  }
  return chain;
}

Vector stationary_pair_start(const CoalescentRates& rates) {
  const PairChain chain = pair_chain(rates);
  Vector p(static_cast<Eigen::Index>(chain.states.size()));
  for (std::size_t i = 0; i < chain.states.size(); ++i) {
    const auto [x, y] = chain.states[i];
    p[static_cast<Eigen::Index>(i)] = (x == y ? 1.0 : 2.0) * rates.pi[x] * rates.pi[y];
  }
  return p;
}

double expected_pair_coalescence_time(const CoalescentRates& rates, const std::optional<Vector>& start) {
  const PairChain chain = pair_chain(rates);
  const Vector p = start ? *start : stationary_pair_start(rates);
  if (p.size() != static_cast<Eigen::Index>(chain.states.size())) throw ConfigError("start law has the wrong size");
  Eigen::FullPivLU<Matrix> lu(-chain.generator);
  if (!lu.isInvertible()) {
    throw NumericalError("pair coalescence system is singular (some class of lineage pairs never coalesces)");
  }
  const Vector t = lu.solve(Vector::Ones(p.size()));
  if (!t.allFinite() || (t.array() < 0.0).any()) throw NumericalError("pair coalescence system is ill-conditioned");
  return p.dot(t);
}

PairSample simulate_pair(const CoalescentRates& rates, std::uint64_t seed, std::size_t replicates,
                         const std::optional<Vector>& start, std::size_t threads) {
  if (replicates == 0) throw ConfigError("replicates must be positive");
  const PairChain chain = pair_chain(rates);
  const Vector p = start ? *start : stationary_pair_start(rates);
  const auto s = static_cast<Eigen::Index>(chain.states.size());

  PairSample out;
  out.times.resize(replicates);
  std::vector<char> crossed(replicates, 0);
  parallel_for(
      replicates,
      [&](std::size_t r) {
        Philox4x32 gen(seed, static_cast<std::uint32_t>(r), kAuxStream);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        auto draw = [&](const auto& weight, Eigen::Index count, double total) {
          double u = unit(gen) * total;
          for (Eigen::Index j = 0; j < count; ++j) {
            const double w = weight(j);
            if (u < w) return j;
            u -= w;
          }
          for (Eigen::Index j = count - 1; j >= 0; --j)
            if (weight(j) > 0.0) return j;
          return count - 1;
        };
        Eigen::Index state = draw([&](Eigen::Index j) { return p[j]; }, s, p.sum());
        double t = 0.0;
        while (true) {
          const double total = -chain.generator(state, state);
          if (!(total > 0.0)) throw NumericalError("pair chain is stuck in a state that never coalesces");
          t += -std::log1p(-unit(gen)) / total;
          // Column s stands for the coalesced state.
          const Eigen::Index next = draw(
              [&](Eigen::Index j) {
                if (j == s) return chain.coalescence_rate[state];
                return j == state ? 0.0 : chain.generator(state, j);
              },
              s + 1, total);
          if (next == s) {
            const auto [x, y] = chain.states[static_cast<std::size_t>(state)];
            crossed[r] = x != y;
            break;
          }
          state = next;
        }
        out.times[r] = t;
      },
      threads);

  const double n = static_cast<double>(replicates);
  double sum = 0.0, sq = 0.0;
  for (double t : out.times) sum += t;
  out.mean = sum / n;
  for (double t : out.times) sq += (t - out.mean) * (t - out.mean);
  const double var = replicates > 1 ? sq / (n - 1.0) : 0.0;
  out.standard_error = std::sqrt(var / n);
  out.coefficient_of_variation = out.mean > 0.0 ? std::sqrt(var) / out.mean : 0.0;
  out.crossed.assign(crossed.begin(), crossed.end());
  for (char c : crossed) out.crossed_count += c ? 1 : 0;
  return out;
}

}  // namespace effpop
