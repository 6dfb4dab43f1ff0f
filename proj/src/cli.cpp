#include "effpop/cli.hpp"

#include "effpop/coalescent.hpp"
#include "effpop/config.hpp"
#include "effpop/equilibrium.hpp"
#include "effpop/expression.hpp"
#include "effpop/flows.hpp"
#include "effpop/ibm.hpp"
#include "effpop/parallel.hpp"
#include "effpop/sde.hpp"
#include "effpop/validation.hpp"
#include "effpop/zoo.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

namespace effpop {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replicates;
  std::string out_dir;
  std::string format = "json";
  std::string model_name;
  std::string u0_path;
  std::string kind;
  std::vector<std::string> tests;
};

/// Everything a subcommand needs: the merged configuration and where to write.
class Run {
 public:
  Run(std::string command, const GlobalOptions& g, std::ostream& out, std::ostream& err)
      : command_(std::move(command)), g_(g), out_(out), err_(err) {
    config_ = g.config_path.empty() ? json::object() : load_config(g.config_path);
    if (!config_.is_object()) throw ConfigError("configuration root must be a table");
    if (!g.model_name.empty()) config_["model"]["name"] = g.model_name;
    if (g.seed) config_["simulation"]["seed"] = *g.seed;
    if (g.replicates) config_["simulation"]["replicates"] = *g.replicates;
    hash_ = config_hash(config_);
    sim_ = simulation_config_from_json(config_.value("simulation", json::object()));
  }

  const json& config() const { return config_; }
  json section(const std::string& name) const {
    const json s = config_.value(name, json::object());
    if (!s.is_object()) throw ConfigError(name + ": expected a table");
    return s;
  }
  const SimulationConfig& sim() const { return sim_; }
  Provenance provenance() const { return {command_, hash_, sim_.seed}; }

  ZooEntry model() const {
    const json m = section("model");
    if (!m.contains("name")) throw ConfigError("model.name is required (use --model or a [model] table)");
    if (!m["name"].is_string()) throw ConfigError("model.name: expected a string");
    return make_zoo_entry(m["name"].get<std::string>(), m.value("parameters", json::object()));
  }

  EquilibriumReport analyze(const ZooEntry& z) const {
    Vector guess = z.guess;
    const json m = section("model");
    if (m.contains("guess")) guess = vector_from(m["guess"], "model.guess");
    return effpop::analyze(z.model, guess);
  }

  void write_json(const std::string& name, json doc) const {
    doc["provenance"] = provenance_json(provenance());
    emit(name, doc.dump(2) + "\n");
  }

  void write_csv(const std::string& name, const std::string& body) const {
    std::ostringstream os;
    write_provenance_comment(os, provenance());
    os << body;
    emit(name, os.str());
  }

  bool to_directory() const { return !g_.out_dir.empty(); }
  const GlobalOptions& options() const { return g_; }
  std::ostream& out() const { return out_; }
  std::ostream& err() const { return err_; }

  static Vector vector_from(const json& j, const std::string& where) {
    if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a nonempty array of numbers");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
      if (!j[i].is_number()) throw ConfigError(where + "[" + std::to_string(i) + "]: expected a number");
      v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    }
    return v;
  }

  static Matrix matrix_from(const json& j, const std::string& where) {
    if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected an array of rows");
    const Vector first = vector_from(j[0], where + "[0]");
    Matrix m(static_cast<Eigen::Index>(j.size()), first.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
      const Vector row = vector_from(j[i], where + "[" + std::to_string(i) + "]");
      if (row.size() != first.size()) throw ConfigError(where + ": ragged rows");
      m.row(static_cast<Eigen::Index>(i)) = row.transpose();
    }
    return m;
  }

 private:
  void emit(const std::string& name, const std::string& content) const {
    if (g_.out_dir.empty()) {
      out_ << content;
      return;
    }
    fs::create_directories(g_.out_dir);
    const fs::path path = fs::path(g_.out_dir) / name;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write '" + path.string() + "'");
    f << content;
    out_ << "wrote " << path.string() << "\n";
  }

  std::string command_;
  const GlobalOptions& g_;
  std::ostream& out_;
  std::ostream& err_;
  json config_;
  std::string hash_;
  SimulationConfig sim_;
};

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double x = m(i, j);
      row.push_back(std::isfinite(x) ? json(x) : json(nullptr));
    }
    rows.push_back(row);
  }
  return rows;
}

json report_json(const ZooEntry& z, const EquilibriumReport& r, double N) {
  json eig = json::array();
  for (const auto& e : r.jacobian_eigenvalues) eig.push_back({e.real(), e.imag()});
  json doc = {{"model", z.name},
              {"parameters", z.parameters},
              {"labels", z.model.space.labels()},
              {"h_tilde", vector_json(r.h_tilde)},
              {"h", vector_json(r.h)},
              {"eigenvalues", eig},
              {"stable", r.stable},
              {"pi", vector_json(r.pi)},
              {"n_e", matrix_json(r.n_e)},
              {"sigma_sq", r.sigma_sq},
              {"sigma_sq_ancestral", r.sigma_sq_ancestral},
              {"N", N}};
  doc["primitivity_t0"] = r.primitivity_t0 ? json(*r.primitivity_t0) : json(nullptr);
  doc["N_e"] = r.sigma_sq > 0.0 ? json(effective_population_size(r.sigma_sq, N)) : json(nullptr);
  if (r.sigma_sq > 0.0) {
    const CensusBound cb = census_bound_check(z.model, r, N);
    doc["census_bound"] = {{"bound", cb.bound ? json(*cb.bound) : json(nullptr)}, {"holds", cb.holds}};
  } else {
    doc["census_bound"] = nullptr;
  }
  if (z.closed_forms) {
    const ClosedForms& cf = *z.closed_forms;
    doc["closed_forms"] = {{"h_tilde", vector_json(cf.h_tilde)},
                           {"h", vector_json(cf.h)},
                           {"sigma_sq", cf.sigma_sq},
                           {"inverse_N_e", cf.inverse_ne(N)}};
  }
  return doc;
}

int cmd_analyze(const Run& run) {
  const ZooEntry z = run.model();
  const EquilibriumReport r = run.analyze(z);
  run.write_json("analyze.json", report_json(z, r, run.sim().N));
  return kExitOk;
}

CompositionMatrix initial_composition(const Run& run, const json& section, const ZooEntry& z,
                                      const EquilibriumReport& r, std::size_t K, const std::string& where) {
  if (!run.options().u0_path.empty()) return read_matrix_csv(run.options().u0_path);
  if (section.contains("u0")) return Run::matrix_from(section["u0"], where + ".u0");
  if (section.contains("theta0")) {
    const Vector th = Run::vector_from(section["theta0"], where + ".theta0");
    return r.h_tilde * th.transpose();
  }
  const Vector v0 = section.contains("v0") ? Run::vector_from(section["v0"], where + ".v0") : r.h_tilde;
  if (static_cast<std::size_t>(v0.size()) != z.model.dim()) throw ConfigError(where + ".v0: wrong dimension");
  return equal_split(v0, K);
}

int cmd_project(const Run& run) {
  const ZooEntry z = run.model();
  const EquilibriumReport r = run.analyze(z);
  const json sec = run.section("project");
  const CompositionMatrix u0 = initial_composition(run, sec, z, r, run.sim().K, "project");
  if (static_cast<std::size_t>(u0.rows()) != z.model.dim()) {
    throw ConfigError("U0 must have one row per class (" + std::to_string(z.model.dim()) + ")");
  }
  const ProjectionResult p = katzenberger_projection(z.model, r, u0);
  json doc = {{"model", z.name},
              {"u0", matrix_json(u0)},
              {"pi", matrix_json(p.pi)},
              {"theta", vector_json(p.theta)},
              {"H", vector_json(p.H_of_v)},
              {"theta_sum_residual", p.theta_sum_residual},
              {"colinearity_residual", p.colinearity_residual}};
  run.write_json("project.json", doc);
  return kExitOk;
}

std::string trajectory_csv(const std::vector<Trajectory>& runs, const std::vector<std::string>& labels,
                           std::size_t K, bool wright_fisher) {
  std::ostringstream os;
  os << "replicate,time,clock";
  if (wright_fisher) {
    for (std::size_t k = 0; k < K; ++k) os << ",theta_" << k + 1;
  } else {
    for (std::size_t k = 0; k < K; ++k)
      for (const auto& l : labels) os << ",u_" << l << "_" << k + 1;
  }
  os << "\n";
  for (const Trajectory& tr : runs) {
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
      os << tr.replicate << "," << format_number(tr.times[i]) << "," << to_string(tr.clock);
      const Matrix& s = tr.states[i];
      for (Eigen::Index k = 0; k < s.cols(); ++k)
        for (Eigen::Index x = 0; x < s.rows(); ++x) os << "," << format_number(s(x, k));
      os << "\n";
    }
  }
  return os.str();
}

std::string rescaled_csv(const std::vector<RescaledTrajectory>& runs, std::size_t K) {
  std::ostringstream os;
  os << "replicate,time,clock";
  for (std::size_t k = 0; k < K; ++k) os << ",theta_" << k + 1;
  os << ",total_deviation,max_deviation,dist_gamma\n";
  for (const RescaledTrajectory& tr : runs) {
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
      os << tr.replicate << "," << format_number(tr.times[i]) << ",evolutionary";
      for (Eigen::Index k = 0; k < tr.theta.cols(); ++k) os << "," << format_number(tr.theta(static_cast<Eigen::Index>(i), k));
      os << "," << format_number(tr.total_deviation[i]) << "," << format_number(tr.max_deviation[i]) << ","
         << format_number(tr.dist_gamma[i]) << "\n";
    }
  }
  return os.str();
}

json trajectories_json(const std::vector<Trajectory>& runs) {
  json list = json::array();
  for (const Trajectory& tr : runs) {
    json states = json::array();
    for (const Matrix& s : tr.states) states.push_back(matrix_json(s));
    list.push_back({{"replicate", tr.replicate}, {"clock", to_string(tr.clock)}, {"times", tr.times}, {"states", states}});
  }
  return list;
}

int cmd_simulate(const Run& run) {
  const json sec = run.section("simulate");
  std::string kind = run.options().kind.empty() ? sec.value("kind", std::string("fractions")) : run.options().kind;
  const SimulationConfig& cfg = run.sim();
  const bool as_json = run.options().format == "json";

  if (kind == "wright_fisher") {
    const Vector th = sec.contains("theta0") ? Run::vector_from(sec["theta0"], "simulate.theta0")
                                             : Vector::Constant(static_cast<Eigen::Index>(cfg.K), 1.0 / static_cast<double>(cfg.K));
    const double dt = cfg.dt > 0.0 ? cfg.dt : 1e-3;
    const auto runs = simulate_wright_fisher_batch(th, dt, cfg.t_end, cfg.seed, cfg.replicates, cfg.max_records, cfg.threads);
    if (as_json) {
      run.write_json("simulate.json", {{"kind", kind}, {"trajectories", trajectories_json(runs)}});
    } else {
      run.write_csv("simulate.csv", trajectory_csv(runs, {}, static_cast<std::size_t>(th.size()), true));
    }
    return kExitOk;
  }

  const ZooEntry z = run.model();
  const EquilibriumReport r = run.analyze(z);
  const auto& labels = z.model.space.labels();
  if (kind == "fractions" || kind == "rescaled") {
    const CompositionMatrix u0 = initial_composition(run, sec, z, r, cfg.K, "simulate");
    if (kind == "fractions") {
      const auto runs = simulate_fractions_batch(z.model, u0, cfg);
      if (as_json) {
        run.write_json("simulate.json", {{"kind", kind}, {"labels", labels}, {"trajectories", trajectories_json(runs)}});
      } else {
        run.write_csv("simulate.csv", trajectory_csv(runs, labels, static_cast<std::size_t>(u0.cols()), false));
      }
      return kExitOk;
    }
    SimulationConfig evo = cfg;
    evo.clock = Clock::evolutionary;
    RescaledOptions ro;
    ro.burn_in = sec.value("burn_in", true);
    const auto runs = rescaled_fraction_batch(z.model, r, u0, evo, ro);
    if (as_json) {
      json list = json::array();
      for (const auto& tr : runs) {
        list.push_back({{"replicate", tr.replicate}, {"times", tr.times}, {"theta", matrix_json(tr.theta)},
                        {"total_deviation", tr.total_deviation}, {"max_deviation", tr.max_deviation},
                        {"dist_gamma", tr.dist_gamma}, {"burn_in", tr.burn_in}});
      }
      run.write_json("simulate.json", {{"kind", kind}, {"sigma_sq", r.sigma_sq}, {"trajectories", list}});
    } else {
      run.write_csv("simulate.csv", rescaled_csv(runs, static_cast<std::size_t>(u0.cols())));
    }
    return kExitOk;
  }
  if (kind == "total") {
    const Vector v0 = sec.contains("v0") ? Run::vector_from(sec["v0"], "simulate.v0") : r.h_tilde;
    const auto runs = simulate_total_batch(z.model, v0, cfg);
    if (as_json) {
      run.write_json("simulate.json", {{"kind", kind}, {"labels", labels}, {"trajectories", trajectories_json(runs)}});
    } else {
      run.write_csv("simulate.csv", trajectory_csv(runs, labels, 1, false));
    }
    return kExitOk;
  }
  throw ConfigError("simulate.kind: unknown kind '" + kind + "' (fractions, rescaled, total, wright_fisher)");
}

RateSpec rates_from_config(const json& sec, const ZooEntry& z) {
  if (!sec.contains("events")) {
    if (!z.rates) throw ConfigError("ibm.events is required for model '" + z.name + "' (no built-in event set)");
    return *z.rates;
  }
  RateSpec spec;
  spec.space = z.model.space;
  const auto& labels = spec.space.labels();
  const json& events = sec["events"];
  if (!events.is_array()) throw ConfigError("ibm.events: expected an array of tables");
  for (std::size_t i = 0; i < events.size(); ++i) {
    const std::string where = "ibm.events[" + std::to_string(i) + "]";
    const json& e = events[i];
    if (!e.is_object() || !e.contains("parent") || !e.contains("offspring") || !e.contains("rate")) {
      throw ConfigError(where + ": needs parent, offspring and rate");
    }
    BirthEvent ev;
    if (e["parent"].is_string()) {
      const auto it = std::find(labels.begin(), labels.end(), e["parent"].get<std::string>());
      if (it == labels.end()) throw ConfigError(where + ".parent: unknown class");
      ev.parent = static_cast<std::size_t>(it - labels.begin());
    } else if (e["parent"].is_number_integer()) {
      ev.parent = e["parent"].get<std::size_t>();
    } else {
      throw ConfigError(where + ".parent: expected a class label or index");
    }
    const Vector n = Run::vector_from(e["offspring"], where + ".offspring");
    ev.offspring = n.cast<int>();
    if (!e["rate"].is_string() && !e["rate"].is_number()) throw ConfigError(where + ".rate: expected an expression");
    const std::string text = e["rate"].is_string() ? e["rate"].get<std::string>() : format_number(e["rate"].get<double>());
    // Rates may name classes by label or as v1..vn.
    std::vector<std::string> vars = labels;
    std::vector<std::size_t> source(labels.size());
    for (std::size_t x = 0; x < labels.size(); ++x) source[x] = x;
    for (std::size_t x = 0; x < labels.size(); ++x) {
      const std::string alias = "v" + std::to_string(x + 1);
      if (std::find(vars.begin(), vars.end(), alias) != vars.end()) continue;
      vars.push_back(alias);
      source.push_back(x);
    }
    if (vars.size() > 64) throw ConfigError("too many classes for rate expressions");
    const Expression expr = Expression::parse(text, vars);
    ev.rate = [expr, source](const Vector& v) {
      std::array<double, 64> buf{};
      for (std::size_t i = 0; i < source.size(); ++i) buf[i] = v[static_cast<Eigen::Index>(source[i])];
      return expr(std::span<const double>(buf.data(), source.size()));
    };
    ev.label = e.value("label", where);
    spec.events.push_back(std::move(ev));
  }
  return spec;
}

int cmd_ibm(const Run& run) {
  const ZooEntry z = run.model();
  const json sec = run.section("ibm");
  const RateSpec spec = rates_from_config(sec, z);
  const SimulationConfig& cfg = run.sim();
  const double N = sec.value("N", cfg.N);
  const double t_end = sec.value("t_end", cfg.t_end);
  GillespieOptions go;
  go.record_every = sec.value("record_every", t_end / 100.0);
  go.burn_in = sec.value("burn_in", 0.0);
  Vector v0;
  if (sec.contains("v0")) {
    v0 = Run::vector_from(sec["v0"], "ibm.v0");
  } else {
    v0 = run.analyze(z).h_tilde;
  }
  if (static_cast<std::size_t>(v0.size()) != spec.dim()) throw ConfigError("ibm.v0: wrong dimension");
  Eigen::VectorXi counts(v0.size());
  for (Eigen::Index x = 0; x < v0.size(); ++x) counts[x] = static_cast<int>(std::llround(v0[x] * N));

  std::vector<IbmTrajectory> runs(cfg.replicates);
  parallel_for(cfg.replicates, [&](std::size_t r) {
    runs[r] = gillespie(spec, N, counts, t_end, cfg.seed, go, static_cast<std::uint32_t>(r));
  }, cfg.threads);

  const auto& labels = spec.space.labels();
  if (run.options().format == "csv") {
    std::ostringstream os;
    os << "replicate,time";
    for (const auto& l : labels) os << ",count_" << l;
    os << "\n";
    for (std::size_t r = 0; r < runs.size(); ++r) {
      for (std::size_t i = 0; i < runs[r].times.size(); ++i) {
        os << r << "," << format_number(runs[r].times[i]);
        for (Eigen::Index x = 0; x < runs[r].counts[i].size(); ++x) os << "," << runs[r].counts[i][x];
        os << "\n";
      }
    }
    run.write_csv("ibm.csv", os.str());
    return kExitOk;
  }
  json list = json::array();
  for (std::size_t r = 0; r < runs.size(); ++r) {
    list.push_back({{"replicate", r},
                    {"time_average", vector_json(runs[r].time_average)},
                    {"events", runs[r].events},
                    {"extinct", runs[r].extinct},
                    {"final_counts", std::vector<int>(runs[r].counts.back().data(),
                                                      runs[r].counts.back().data() + runs[r].counts.back().size())}});
  }
  run.write_json("ibm.json", {{"model", z.name}, {"N", N}, {"t_end", t_end}, {"burn_in", go.burn_in}, {"replicates", list}});
  return kExitOk;
}

int cmd_coalesce(const Run& run) {
  const ZooEntry z = run.model();
  const EquilibriumReport r = run.analyze(z);
  const json sec = run.section("coalesce");
  const double N = sec.value("N", run.sim().N);
  const CoalescentRates rates = build_rates(r, N);
  const double exact = expected_pair_coalescence_time(rates);
  const PairSample mc = simulate_pair(rates, run.sim().seed, run.sim().replicates, std::nullopt, run.sim().threads);
  json doc = {{"model", z.name},
              {"N", N},
              {"sigma_sq", r.sigma_sq},
              {"migration", matrix_json(rates.migration)},
              {"coalescence", matrix_json(rates.coalescence)},
              {"exact_expectation", exact},
              {"mc_mean", mc.mean},
              {"mc_se", mc.standard_error},
              {"mc_replicates", run.sim().replicates},
              {"crossed_coalescences", mc.crossed_count},
              {"ratio_to_N_over_sigma_sq", exact * r.sigma_sq / N}};
  run.write_json("coalesce.json", doc);
  return kExitOk;
}

int cmd_validate(const Run& run) {
  const json sec = run.section("validate");
  std::vector<std::string> tests = run.options().tests;
  if (tests.empty()) {
    tests = sec.value("tests", std::vector<std::string>{"heterozygosity_wf", "fixation_wf"});
  }
  const SimulationConfig& cfg = run.sim();
  std::optional<ZooEntry> z;
  std::optional<EquilibriumReport> rep;
  auto model = [&]() -> std::pair<const ZooEntry&, const EquilibriumReport&> {
    if (!z) {
      z = run.model();
      rep = run.analyze(*z);
    }
    return {*z, *rep};
  };
  auto opts = [&](const std::string& name) { return sec.value(name, json::object()); };

  std::vector<TestReport> reports;
  for (const std::string& t : tests) {
    const json o = opts(t);
    if (t == "heterozygosity" || t == "heterozygosity_wf") {
      HeterozygosityOptions h;
      h.N = o.value("N", cfg.N);
      h.replicates = o.value("replicates", cfg.replicates);
      h.seed = o.value("seed", cfg.seed);
      h.dt = o.value("dt", cfg.dt);
      h.threads = cfg.threads;
      if (o.contains("theta0")) h.theta0 = Run::vector_from(o["theta0"], "validate." + t + ".theta0");
      if (o.contains("times")) h.times = o["times"].get<std::vector<double>>();
      if (t == "heterozygosity") {
        h.tolerance = o.value("tolerance", 0.10);
        auto [zz, rr] = model();
        reports.push_back(heterozygosity_decay_test(zz.model, rr, h));
      } else {
        h.tolerance = o.value("tolerance", 0.05);
        reports.push_back(heterozygosity_decay_test_wf(h, o.value("wf_dt", 1e-3)));
      }
    } else if (t == "fixation" || t == "fixation_wf") {
      FixationOptions f;
      f.N = o.value("N", cfg.N);
      f.replicates = o.value("replicates", cfg.replicates);
      f.seed = o.value("seed", cfg.seed);
      f.dt = o.value("dt", cfg.dt);
      f.epsilon = o.value("epsilon", f.epsilon);
      f.horizon = o.value("horizon", f.horizon);
      f.threads = cfg.threads;
      if (o.contains("theta0")) f.theta0 = Run::vector_from(o["theta0"], "validate." + t + ".theta0");
      if (t == "fixation") {
        auto [zz, rr] = model();
        reports.push_back(fixation_probability_test(zz.model, rr, f));
      } else {
        reports.push_back(fixation_probability_test_wf(f, o.value("wf_dt", 1e-3)));
      }
    } else if (t == "covariance") {
      CovarianceOptions c;
      c.N = o.value("N", cfg.N);
      c.replicates = o.value("replicates", cfg.replicates);
      c.seed = o.value("seed", cfg.seed);
      c.dt = o.value("dt", cfg.dt);
      c.window = o.value("window", c.window);
      c.windows = o.value("windows", c.windows);
      c.threads = cfg.threads;
      if (o.contains("theta0")) c.theta0 = Run::vector_from(o["theta0"], "validate.covariance.theta0");
      auto [zz, rr] = model();
      reports.push_back(covariance_structure_test(zz.model, rr, c));
    } else if (t == "consistency") {
      ConsistencyOptions c;
      c.N = o.value("N", cfg.N);
      c.replicates = o.value("replicates", cfg.replicates);
      c.seed = o.value("seed", cfg.seed);
      c.dt = o.value("dt", cfg.dt);
      c.threads = cfg.threads;
      if (o.contains("times")) c.times = o["times"].get<std::vector<double>>();
      auto [zz, rr] = model();
      const std::size_t K = o.value("K", std::size_t{3});
      const CompositionMatrix u0 = o.contains("u0") ? Run::matrix_from(o["u0"], "validate.consistency.u0")
                                                    : equal_split(Vector::Ones(static_cast<Eigen::Index>(zz.model.dim())), K);
      reports.push_back(consistency_exchangeability_test(zz.model, rr, u0, c));
    } else {
      throw ConfigError("validate.tests: unknown test '" + t +
                        "' (heterozygosity, heterozygosity_wf, fixation, fixation_wf, covariance, consistency)");
    }
  }

  json list = json::array();
  bool all = true;
  for (const TestReport& r : reports) {
    list.push_back(to_json(r));
    all = all && r.passed;
  }
  run.write_json("validate.json", {{"reports", list}});
  std::ostream& os = run.to_directory() ? run.out() : run.err();
  os << std::left << std::setw(44) << "test" << std::setw(14) << "statistic" << std::setw(28) << "gate" << "result\n";
  for (const TestReport& r : reports) {
    std::ostringstream gate;
    gate << "[" << r.lower << ", " << r.upper << "]";
    os << std::setw(44) << r.name << std::setw(14) << r.statistic << std::setw(28) << gate.str()
       << (r.passed ? "PASS" : "FAIL") << "\n";
  }
  return all ? kExitOk : kExitGateFailure;
}

int cmd_reproduce_figure(const Run& run, const std::string& figure) {
  if (figure != "1") throw ConfigError("only figure 1 is available");
  if (!run.to_directory()) throw ConfigError("reproduce-figure needs --out DIR");
  LotkaVolterraParams params;
  const ZooEntry z = lotka_volterra(params);
  const EquilibriumReport r = effpop::analyze(z.model, z.guess);
  const json sec = run.section("figure");
  const double N = sec.value("N", 200.0);
  const std::size_t K = sec.value("K", std::size_t{5});
  const double t_ecological = sec.value("t_ecological", 100.0);
  const double t_evolutionary = sec.value("t_evolutionary", 3.0);
  const std::uint64_t seed = run.sim().seed;
  const CompositionMatrix u0 = equal_split(Vector::Ones(2), K);

  {
    std::ostringstream os;
    os << "type,h_tilde,h,pi\n";
    for (Eigen::Index x = 0; x < 2; ++x) {
      os << z.model.space.label(static_cast<std::size_t>(x)) << "," << format_number(r.h_tilde[x]) << ","
         << format_number(r.h[x]) << "," << format_number(r.pi[x]) << "\n";
    }
    run.write_csv("equilibrium.csv", os.str());
  }

  SimulationConfig eco;
  eco.N = N;
  eco.K = K;
  eco.t_end = t_ecological;
  eco.seed = seed;
  const Trajectory tr = simulate_fractions(z.model, u0, eco);
  {
    std::ostringstream totals, fractions;
    totals << "time,v1,v2\n";
    fractions << "time";
    for (std::size_t k = 0; k < K; ++k) fractions << ",u_v1_" << k + 1 << ",u_v2_" << k + 1;
    fractions << "\n";
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
      const Vector s = column_sum(tr.states[i]);
      totals << format_number(tr.times[i]) << "," << format_number(s[0]) << "," << format_number(s[1]) << "\n";
      fractions << format_number(tr.times[i]);
      for (Eigen::Index k = 0; k < tr.states[i].cols(); ++k)
        fractions << "," << format_number(tr.states[i](0, k)) << "," << format_number(tr.states[i](1, k));
      fractions << "\n";
    }
    run.write_csv("totals_ecological.csv", totals.str());
    run.write_csv("fractions_ecological.csv", fractions.str());
  }

  SimulationConfig evo = eco;
  evo.clock = Clock::evolutionary;
  evo.t_end = t_evolutionary;
  RescaledOptions ro;
  ro.burn_in = sec.value("burn_in", false);
  const RescaledTrajectory rt = rescaled_fraction_process(z.model, r, u0, evo, ro);
  run.write_csv("proportions_evolutionary.csv", rescaled_csv({rt}, K));

  std::vector<double> v1, v2;
  for (const Matrix& s : tr.states) {
    v1.push_back(s.row(0).sum());
    v2.push_back(s.row(1).sum());
  }
  json summary = {{"h_tilde", vector_json(r.h_tilde)},
                  {"sigma_sq", r.sigma_sq},
                  {"N", N},
                  {"N_e", effective_population_size(r.sigma_sq, N)},
                  {"K", K},
                  {"median_totals", {median(v1), median(v2)}},
                  {"burn_in_ecological", rt.burn_in}};
  run.write_json("summary.json", summary);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Effective population size and Wright-Fisher limits for decomposable population models", "effpop"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  GlobalOptions g;
  std::uint64_t seed = 0;
  std::size_t replicates = 0;
  std::string figure = "1";
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", g.config_path, "TOML or JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "base seed (overrides simulation.seed)");
    sub->add_option("--replicates", replicates, "replicate count (overrides simulation.replicates)");
    sub->add_option("--out", g.out_dir, "output directory (default: standard output)");
    sub->add_option("--format", g.format, "output format")->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--model", g.model_name, "zoo model name (overrides model.name)");
  };

  auto* analyze = app.add_subcommand("analyze", "equilibrium, reproductive values, Sigma^2 and N_e");
  auto* project = app.add_subcommand("project", "Katzenberger projection of a composition matrix");
  auto* simulate = app.add_subcommand("simulate", "fraction, total or Wright-Fisher trajectories");
  auto* ibm = app.add_subcommand("ibm", "individual-based (Gillespie) simulation");
  auto* coalesce = app.add_subcommand("coalesce", "two-lineage structured coalescent");
  auto* validate = app.add_subcommand("validate", "statistical checks of the Wright-Fisher limit");
  auto* figure_cmd = app.add_subcommand("reproduce-figure", "data behind the Lotka-Volterra figure");
  for (auto* sub : {analyze, project, simulate, ibm, coalesce, validate, figure_cmd}) add_common(sub);
  project->add_option("--u0", g.u0_path, "CSV with rows = classes, columns = fractions")->check(CLI::ExistingFile);
  simulate->add_option("--u0", g.u0_path, "CSV initial composition")->check(CLI::ExistingFile);
  simulate->add_option("--kind", g.kind, "fractions, rescaled, total or wright_fisher");
  validate->add_option("--test", g.tests, "tests to run (repeatable)");
  figure_cmd->add_option("--figure", figure, "figure number");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  if (analyze->count("--seed") + project->count("--seed") + simulate->count("--seed") + ibm->count("--seed") +
      coalesce->count("--seed") + validate->count("--seed") + figure_cmd->count("--seed") > 0) {
    g.seed = seed;
  }
  if (analyze->count("--replicates") + project->count("--replicates") + simulate->count("--replicates") +
      ibm->count("--replicates") + coalesce->count("--replicates") + validate->count("--replicates") +
      figure_cmd->count("--replicates") > 0) {
    g.replicates = replicates;
  }
  const bool csv_default = simulate->parsed() && simulate->count("--format") == 0;
  if (csv_default) g.format = "csv";

  try {
    if (analyze->parsed()) return cmd_analyze(Run("analyze", g, out, err));
    if (project->parsed()) return cmd_project(Run("project", g, out, err));
    if (simulate->parsed()) return cmd_simulate(Run("simulate", g, out, err));
    if (ibm->parsed()) return cmd_ibm(Run("ibm", g, out, err));
    if (coalesce->parsed()) return cmd_coalesce(Run("coalesce", g, out, err));
    if (validate->parsed()) return cmd_validate(Run("validate", g, out, err));
    if (figure_cmd->parsed()) return cmd_reproduce_figure(Run("reproduce-figure", g, out, err), figure);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const nlohmann::json::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitUsage;
}

}  // namespace effpop
