#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fsim/discrete_space.hpp"
#include "fsim/error.hpp"
#include "fsim/estimators.hpp"
#include "fsim/kernels.hpp"
#include "fsim/simulator.hpp"

namespace fsim {

using nlohmann::json;

// ---------------------------------------------------------------- strict reader

namespace detail {

/// View of one JSON object that rejects keys outside `allowed` and reports
/// every failure with its dotted path.
class Reader {
 public:
  Reader(const json& j, std::string path, std::initializer_list<const char*> allowed) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) fail("", "expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j.items())
      if (!ok.count(k)) fail(k, "unknown key");
  }

  bool has(const char* k) const { return j_.contains(k); }
  std::string at_path(const char* k) const { return path_.empty() ? std::string(k) : path_ + "." + k; }

  const json& raw(const char* k) const {
    if (!has(k)) fail(k, "missing required key");
    return j_.at(k);
  }

  double number(const char* k) const {
    const auto& v = raw(k);
    if (!v.is_number()) fail(k, "expected a number");
    return v.get<double>();
  }
  double number(const char* k, double def) const { return has(k) ? number(k) : def; }
  std::optional<double> maybe_number(const char* k) const {
    if (!has(k)) return std::nullopt;
    return number(k);
  }

  std::uint64_t count(const char* k) const {
    const auto& v = raw(k);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) fail(k, "expected a nonnegative integer");
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  }
  std::uint64_t count(const char* k, std::uint64_t def) const { return has(k) ? count(k) : def; }

  int integer(const char* k) const {
    const auto& v = raw(k);
    if (!v.is_number_integer()) fail(k, "expected an integer");
    return v.get<int>();
  }

  bool boolean(const char* k, bool def) const {
    if (!has(k)) return def;
    const auto& v = raw(k);
    if (!v.is_boolean()) fail(k, "expected true or false");
    return v.get<bool>();
  }

  std::string string(const char* k) const {
    const auto& v = raw(k);
    if (!v.is_string()) fail(k, "expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const char* k) const {
    const auto& v = raw(k);
    if (!v.is_array()) fail(k, "expected an array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) fail(k, "expected an array of numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }

  [[noreturn]] void fail(const std::string& k, const std::string& msg) const {
    const std::string where = k.empty() ? (path_.empty() ? "<root>" : path_) : (path_.empty() ? k : path_ + "." + k);
    throw Error(ErrorCode::ConfigInvalid, where + ": " + msg);
  }

 private:
  const json& j_;
  std::string path_;
};

inline Point point_of(const json& a, int d, const std::string& path) {
  if (!a.is_array() || static_cast<int>(a.size()) != d)
    throw Error(ErrorCode::ConfigInvalid, path + ": expected " + std::to_string(d) + " coordinates");
  Point p{};
  for (int k = 0; k < d; ++k) {
    if (!a[static_cast<std::size_t>(k)].is_number()) throw Error(ErrorCode::ConfigInvalid, path + ": expected numbers");
    p[k] = a[static_cast<std::size_t>(k)].get<double>();
  }
  return p;
}

/// Runs `f`, rewrapping library argument errors as configuration errors.
template <class F>
auto config_guard(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigInvalid) throw;
    if (e.code() == ErrorCode::IoFailure) throw;
    throw Error(ErrorCode::ConfigInvalid, path + ": " + e.what());
  }
}

}  // namespace detail

// ---------------------------------------------------------------- sections

struct SimulationSection {
  SimConfig sim;
  std::size_t replicas = 1;
  unsigned threads = 0;
};

struct AnalysisSection {
  std::vector<Box> windows;  // empty: the whole window
  std::size_t pair_bins = 10;
  std::optional<double> pair_rmax;
  std::optional<double> margin;
  std::vector<ThetaFunction> thetas;
  int max_moment_order = 3;
  std::optional<double> kappa_reference;
  double envelope_slack = 0.1;
  double z = 3.0;
};

struct AnalyticsSection {
  std::optional<double> alpha0;
  std::optional<double> alpha1;
  std::optional<double> alpha2;
  double kappa = 1.0;
  double kappa_prime = 0.5;
  double epsilon = 0.1;
  double r = 0.5;
  double h = 0.5;
  double horizon = 5.0;
  std::optional<double> omega;
  std::size_t samples = 10000;
  double sample_mean = 5.0;
  double sample_side = 4.0;
  std::uint64_t seed = 1;
};

struct MasterSection {
  DiscreteSpace space{1};
  int max_size = 4;
  double time = 1.0;
  double dt = 0.0;  // 0 selects the default step
  std::vector<double> report_times;
  Multiset initial;
};

struct RunConfig {
  json source;
  std::filesystem::path base_dir;
  std::optional<ModelParams> model;
  std::optional<SimulationSection> simulation;
  std::optional<AnalysisSection> analysis;
  std::optional<AnalyticsSection> analytics;
  std::optional<MasterSection> master;

  const ModelParams& require_model() const {
    if (!model) throw Error(ErrorCode::ConfigInvalid, "model: section required");
    return *model;
  }
  const SimulationSection& require_simulation() const {
    if (!simulation) throw Error(ErrorCode::ConfigInvalid, "simulation: section required");
    return *simulation;
  }
  const AnalyticsSection& require_analytics() const {
    if (!analytics) throw Error(ErrorCode::ConfigInvalid, "analytics: section required");
    return *analytics;
  }
  const MasterSection& require_master() const {
    if (!master) throw Error(ErrorCode::ConfigInvalid, "master: section required");
    return *master;
  }
  AnalysisSection analysis_or_default() const { return analysis.value_or(AnalysisSection{}); }

  /// Replaces the master seed in both the parsed and the source form.
  void override_seed(std::uint64_t seed) {
    if (!simulation) throw Error(ErrorCode::ConfigInvalid, "simulation: section required for a seed override");
    simulation->sim.seed = seed;
    source["simulation"]["seed"] = seed;
  }
};

// ---------------------------------------------------------------- parsers

inline RadialKernel parse_kernel(const json& j, const std::string& path, const std::filesystem::path& base) {
  if (!j.is_object() || !j.contains("shape") || !j.at("shape").is_string())
    throw Error(ErrorCode::ConfigInvalid, path + ".shape: missing kernel shape");
  const std::string shape = j.at("shape").get<std::string>();
  return detail::config_guard(path, [&] {
    if (shape == "gaussian") {
      detail::Reader r(j, path, {"shape", "amplitude", "scale", "cutoff"});
      return RadialKernel::gaussian(r.number("amplitude"), r.number("scale"), r.number("cutoff"));
    }
    if (shape == "tophat") {
      detail::Reader r(j, path, {"shape", "amplitude", "cutoff"});
      return RadialKernel::tophat(r.number("amplitude"), r.number("cutoff"));
    }
    if (shape == "exponential") {
      detail::Reader r(j, path, {"shape", "amplitude", "scale", "cutoff"});
      return RadialKernel::exponential(r.number("amplitude"), r.number("scale"), r.number("cutoff"));
    }
    if (shape == "tabulated") {
      detail::Reader r(j, path, {"shape", "radii", "values", "cutoff"});
      return RadialKernel::tabulated(r.numbers("radii"), r.numbers("values"), r.maybe_number("cutoff"));
    }
    if (shape == "csv") {
      detail::Reader r(j, path, {"shape", "path", "cutoff"});
      std::filesystem::path file = r.string("path");
      if (file.is_relative()) file = base / file;
      return RadialKernel::from_csv(file.string(), r.maybe_number("cutoff"));
    }
    if (shape == "dirac") {
      detail::Reader r(j, path, {"shape", "mass"});
      return RadialKernel::dirac(r.number("mass", 1.0));
    }
    if (shape == "zero") {
      detail::Reader r(j, path, {"shape"});
      return RadialKernel::zero();
    }
    throw Error(ErrorCode::ConfigInvalid, path + ".shape: unknown kernel shape '" + shape + "'");
  });
}

inline MortalityField parse_mortality(const json& j, const std::string& path, int d) {
  if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string())
    throw Error(ErrorCode::ConfigInvalid, path + ".kind: missing mortality kind");
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "constant") {
    detail::Reader r(j, path, {"kind", "value"});
    const double v = r.number("value");
    if (!(v >= 0.0)) r.fail("value", "mortality must be >= 0");
    return MortalityField::constant(v);
  }
  if (kind == "grid") {
    detail::Reader r(j, path, {"kind", "values", "cells_per_axis", "extent"});
    auto values = r.numbers("values");
    for (double v : values)
      if (!(v >= 0.0)) r.fail("values", "mortality must be >= 0");
    const int cells = static_cast<int>(r.count("cells_per_axis"));
    const double extent = r.number("extent");
    return detail::config_guard(path, [&] { return MortalityField::grid(std::move(values), cells, extent, d); });
  }
  throw Error(ErrorCode::ConfigInvalid, path + ".kind: unknown mortality kind '" + kind + "'");
}

inline FissionKernel parse_fission(const json& j, const std::string& path, int d, const std::filesystem::path& base) {
  detail::Reader r(j, path, {"variant", "total_mass", "dispersal", "mollifier"});
  const std::string variant = r.string("variant");
  const double sigma = r.number("mollifier", 0.0);
  if (!(sigma >= 0.0)) r.fail("mollifier", "must be >= 0");
  if (variant == "none") {
    if (r.has("total_mass") || r.has("dispersal")) r.fail("variant", "'none' takes no mass or dispersal");
    return FissionKernel::none(d);
  }
  const double mass = r.number("total_mass");
  if (!(mass >= 0.0) || !std::isfinite(mass)) r.fail("total_mass", "must be finite and >= 0");
  const auto q = parse_kernel(r.raw("dispersal"), r.at_path("dispersal"), base);
  return detail::config_guard(path, [&] {
    FissionKernel f = [&] {
      if (variant == "factorized") return FissionKernel::factorized(mass, q, d);
      if (variant == "bolker_pacala") return FissionKernel::bolker_pacala(mass, q, d);
      throw Error(ErrorCode::ConfigInvalid, path + ".variant: unknown fission variant '" + variant + "'");
    }();
    return sigma > 0.0 ? mollify(f, sigma) : f;
  });
}

inline ModelParams parse_model(const json& j, const std::filesystem::path& base) {
  detail::Reader r(j, "model", {"dimension", "mortality", "competition", "fission"});
  ModelParams p;
  p.dim = r.integer("dimension");
  if (p.dim < 1 || p.dim > 3) r.fail("dimension", "must be 1, 2 or 3");
  p.mortality = parse_mortality(r.raw("mortality"), "model.mortality", p.dim);
  p.competition = parse_kernel(r.raw("competition"), "model.competition", base);
  p.fission = parse_fission(r.raw("fission"), "model.fission", p.dim, base);
  const auto rep = validate_params(p);
  if (!rep.well_formed())
    throw Error(ErrorCode::ConfigInvalid, "model: " + std::string(to_string(rep.errors.front())));
  return p;
}

inline InitialCondition parse_initial(const json& j, const std::string& path, int d) {
  if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string())
    throw Error(ErrorCode::ConfigInvalid, path + ".kind: missing initial kind");
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "poisson") {
    detail::Reader r(j, path, {"kind", "kappa"});
    const double k = r.number("kappa");
    if (!(k >= 0.0)) r.fail("kappa", "must be >= 0");
    return InitialCondition::poisson(k);
  }
  if (kind == "points") {
    detail::Reader r(j, path, {"kind", "points"});
    const auto& a = r.raw("points");
    if (!a.is_array()) r.fail("points", "expected an array of points");
    std::vector<Point> pts;
    for (std::size_t i = 0; i < a.size(); ++i)
      pts.push_back(detail::point_of(a[i], d, path + ".points[" + std::to_string(i) + "]"));
    return InitialCondition::explicit_points(std::move(pts));
  }
  throw Error(ErrorCode::ConfigInvalid, path + ".kind: unknown initial kind '" + kind + "'");
}

inline SimulationSection parse_simulation(const json& j, int d) {
  detail::Reader r(j, "simulation", {"window", "end_time", "replicas", "seed", "snapshots", "initial", "guard",
                                     "threads", "record_events"});
  SimulationSection s;
  s.sim.side = r.number("window");
  s.sim.end_time = r.number("end_time");
  s.replicas = r.count("replicas", 1);
  if (s.replicas == 0) r.fail("replicas", "must be >= 1");
  s.sim.seed = r.count("seed", 0);
  if (r.has("snapshots")) s.sim.snapshot_times = r.numbers("snapshots");
  for (double t : s.sim.snapshot_times)
    if (t > s.sim.end_time) r.fail("snapshots", "snapshot time beyond end_time");
  s.sim.initial = r.has("initial") ? parse_initial(r.raw("initial"), "simulation.initial", d) : InitialCondition::poisson(1.0);
  s.sim.guard = r.count("guard", 1'000'000);
  s.threads = static_cast<unsigned>(r.count("threads", 0));
  s.sim.record_events = r.boolean("record_events", true);
  detail::config_guard("simulation", [&] {
    s.sim.validate();
    return 0;
  });
  for (const auto& x : s.sim.initial.points)
    for (int k = 0; k < d; ++k)
      if (!(x[k] >= 0.0 && x[k] < s.sim.side)) r.fail("initial", "point outside the window");
  return s;
}

inline AnalysisSection parse_analysis(const json& j, int d) {
  detail::Reader r(j, "analysis", {"windows", "pair_bins", "pair_rmax", "margin", "thetas", "max_moment_order",
                                   "kappa_reference", "envelope_slack", "z"});
  AnalysisSection a;
  if (r.has("windows")) {
    const auto& w = r.raw("windows");
    if (!w.is_array()) r.fail("windows", "expected an array");
    for (std::size_t i = 0; i < w.size(); ++i) {
      const std::string p = "analysis.windows[" + std::to_string(i) + "]";
      detail::Reader wr(w[i], p, {"lo", "hi"});
      Box b{detail::point_of(wr.raw("lo"), d, p + ".lo"), detail::point_of(wr.raw("hi"), d, p + ".hi")};
      if (!(b.volume(d) > 0.0)) wr.fail("hi", "window must have positive volume");
      a.windows.push_back(b);
    }
  }
  a.pair_bins = r.count("pair_bins", 10);
  if (a.pair_bins == 0) r.fail("pair_bins", "must be >= 1");
  a.pair_rmax = r.maybe_number("pair_rmax");
  if (a.pair_rmax && !(*a.pair_rmax > 0.0)) r.fail("pair_rmax", "must be positive");
  a.margin = r.maybe_number("margin");
  if (r.has("thetas")) {
    const auto& t = r.raw("thetas");
    if (!t.is_array()) r.fail("thetas", "expected an array");
    for (std::size_t i = 0; i < t.size(); ++i) {
      const std::string p = "analysis.thetas[" + std::to_string(i) + "]";
      const auto& ti = t[i];
      if (!ti.is_object() || !ti.contains("kind") || !ti.at("kind").is_string())
        throw Error(ErrorCode::ConfigInvalid, p + ".kind: missing theta kind");
      const std::string kind = ti.at("kind").get<std::string>();
      if (kind == "zero") detail::Reader(ti, p, {"kind"});
      else if (kind == "box") detail::Reader(ti, p, {"kind", "value", "lo", "hi"});
      else if (kind == "bump") detail::Reader(ti, p, {"kind", "depth", "center", "radius"});
      a.thetas.push_back(detail::config_guard(p, [&] {
        try {
          return ThetaFunction::from_json(ti, d);
        } catch (const json::exception& e) {
          throw Error(ErrorCode::ConfigInvalid, p + ": " + e.what());
        }
      }));
    }
  }
  a.max_moment_order = static_cast<int>(r.count("max_moment_order", 3));
  if (a.max_moment_order < 1) r.fail("max_moment_order", "must be >= 1");
  a.kappa_reference = r.maybe_number("kappa_reference");
  a.envelope_slack = r.number("envelope_slack", 0.1);
  a.z = r.number("z", 3.0);
  if (!(a.z > 0.0)) r.fail("z", "must be positive");
  return a;
}

inline AnalyticsSection parse_analytics(const json& j) {
  detail::Reader r(j, "analytics", {"alpha0", "alpha1", "alpha2", "kappa", "kappa_prime", "epsilon", "r", "h",
                                    "horizon", "omega", "samples", "sample_mean", "sample_side", "seed"});
  AnalyticsSection a;
  a.alpha0 = r.maybe_number("alpha0");
  a.alpha1 = r.maybe_number("alpha1");
  a.alpha2 = r.maybe_number("alpha2");
  if (a.alpha1.has_value() != a.alpha2.has_value()) r.fail("alpha1", "alpha1 and alpha2 go together");
  a.kappa = r.number("kappa", a.kappa);
  a.kappa_prime = r.number("kappa_prime", a.kappa_prime);
  a.epsilon = r.number("epsilon", a.epsilon);
  a.r = r.number("r", a.r);
  a.h = r.number("h", a.h);
  a.horizon = r.number("horizon", a.horizon);
  a.omega = r.maybe_number("omega");
  a.samples = r.count("samples", a.samples);
  a.sample_mean = r.number("sample_mean", a.sample_mean);
  a.sample_side = r.number("sample_side", a.sample_side);
  a.seed = r.count("seed", a.seed);
  if (!(a.epsilon > 0.0)) r.fail("epsilon", "must be positive");
  if (!(a.r > 0.0)) r.fail("r", "must be positive");
  if (!(a.h > 0.0)) r.fail("h", "must be positive");
  if (!(a.horizon > 0.0)) r.fail("horizon", "must be positive");
  return a;
}

inline DiscreteSpace parse_discrete_model(const json& j) {
  if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string())
    throw Error(ErrorCode::ConfigInvalid, "master.model.kind: missing model kind");
  const std::string kind = j.at("kind").get<std::string>();
  const std::string path = "master.model";
  if (kind == "ring") {
    detail::Reader r(j, path, {"kind", "sites", "mortality", "a_self", "a_near", "b_mass"});
    const int sites = static_cast<int>(r.count("sites"));
    if (sites < 1) r.fail("sites", "must be >= 1");
    auto s = ring_space(sites, r.number("mortality"), r.number("a_self"), r.number("a_near"), r.number("b_mass"));
    detail::config_guard(path, [&] {
      s.validate();
      return 0;
    });
    return s;
  }
  if (kind == "explicit") {
    detail::Reader r(j, path, {"kind", "mortality", "competition", "fission"});
    const auto m = r.numbers("mortality");
    const int sites = static_cast<int>(m.size());
    if (sites < 1) r.fail("mortality", "need at least one site");
    DiscreteSpace s(sites);
    for (int x = 0; x < sites; ++x) s.set_mortality(x, m[static_cast<std::size_t>(x)]);
    const auto& a = r.raw("competition");
    const auto& b = r.raw("fission");
    auto square = [&](const json& v, const char* key) {
      if (!v.is_array() || static_cast<int>(v.size()) != sites) r.fail(key, "expected " + std::to_string(sites) + " rows");
      for (const auto& row : v)
        if (!row.is_array() || static_cast<int>(row.size()) != sites) r.fail(key, "rows must have one entry per site");
    };
    square(a, "competition");
    if (!b.is_array() || static_cast<int>(b.size()) != sites) r.fail("fission", "expected one matrix per parent site");
    for (const auto& mat : b) square(mat, "fission");
    // write both triangles so asymmetric input is caught by validate()
    for (int x = 0; x < sites; ++x)
      for (int y = 0; y < sites; ++y) {
        const auto& v = a[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)];
        if (!v.is_number()) r.fail("competition", "expected numbers");
        if (y >= x) s.set_competition(x, y, v.get<double>());
      }
    for (int x = 0; x < sites; ++x)
      for (int j2 = 0; j2 < sites; ++j2)
        for (int k = j2; k < sites; ++k) {
          const auto& v = b[static_cast<std::size_t>(x)][static_cast<std::size_t>(j2)][static_cast<std::size_t>(k)];
          if (!v.is_number()) r.fail("fission", "expected numbers");
          s.set_fission(x, j2, k, v.get<double>());
        }
    for (int x = 0; x < sites; ++x)
      for (int y = 0; y < x; ++y)
        if (a[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)].get<double>() != s.competition(x, y))
          r.fail("competition", "matrix must be symmetric");
    for (int x = 0; x < sites; ++x)
      for (int j2 = 0; j2 < sites; ++j2)
        for (int k = 0; k < j2; ++k)
          if (b[static_cast<std::size_t>(x)][static_cast<std::size_t>(j2)][static_cast<std::size_t>(k)].get<double>() !=
              s.fission(x, j2, k))
            r.fail("fission", "offspring pairs must be symmetric");
    detail::config_guard(path, [&] {
      s.validate();
      return 0;
    });
    return s;
  }
  throw Error(ErrorCode::ConfigInvalid, path + ".kind: unknown model kind '" + kind + "'");
}

inline MasterSection parse_master(const json& j) {
  detail::Reader r(j, "master", {"model", "max_size", "time", "dt", "report_times", "initial"});
  MasterSection m;
  m.space = parse_discrete_model(r.raw("model"));
  m.max_size = static_cast<int>(r.count("max_size"));
  m.time = r.number("time");
  if (!(m.time >= 0.0)) r.fail("time", "must be >= 0");
  m.dt = r.number("dt", 0.0);
  if (!(m.dt >= 0.0)) r.fail("dt", "must be >= 0");
  if (r.has("report_times")) m.report_times = r.numbers("report_times");
  for (std::size_t i = 0; i < m.report_times.size(); ++i)
    if (m.report_times[i] < 0.0 || m.report_times[i] > m.time || (i > 0 && m.report_times[i] < m.report_times[i - 1]))
      r.fail("report_times", "must be sorted within [0, time]");
  if (r.has("initial")) {
    const auto& a = r.raw("initial");
    if (!a.is_array()) r.fail("initial", "expected an array of site indices");
    for (const auto& v : a) {
      if (!v.is_number_integer() || v.get<long>() < 0 || v.get<long>() >= m.space.sites()) r.fail("initial", "site index out of range");
      m.initial.push_back(v.get<int>());
    }
    std::sort(m.initial.begin(), m.initial.end());
  }
  if (static_cast<int>(m.initial.size()) > m.max_size) r.fail("initial", "initial state exceeds max_size");
  return m;
}

/// Validates the whole document before returning; relative kernel table
/// paths resolve against `base_dir`.
inline RunConfig parse_config(const json& j, const std::filesystem::path& base_dir = ".") {
  detail::Reader r(j, "", {"model", "simulation", "analysis", "analytics", "master"});
  RunConfig c;
  c.source = j;
  c.base_dir = base_dir;
  if (r.has("model")) c.model = parse_model(r.raw("model"), base_dir);
  const int d = c.model ? c.model->dim : 1;
  if (r.has("simulation")) {
    if (!c.model) r.fail("simulation", "requires a model section");
    c.simulation = parse_simulation(r.raw("simulation"), d);
  }
  if (r.has("analysis")) {
    if (!c.model) r.fail("analysis", "requires a model section");
    c.analysis = parse_analysis(r.raw("analysis"), d);
  }
  if (r.has("analytics")) c.analytics = parse_analytics(r.raw("analytics"));
  if (r.has("master")) c.master = parse_master(r.raw("master"));
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigInvalid, path.string() + ": " + e.what());
  }
  return parse_config(j, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

// ---------------------------------------------------------------- hashing

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex;
  s.width(16);
  s.fill('0');
  s << v;
  return s.str();
}

/// Hash of the canonical (key-sorted, compact) config with the master seed
/// removed, so replicas of a study share it across seeds.
inline std::string params_hash(const RunConfig& c) {
  json j = c.source;
  if (j.contains("simulation") && j["simulation"].is_object()) j["simulation"].erase("seed");
  return hex64(fnv1a(j.dump()));
}

// ---------------------------------------------------------------- schema

namespace detail {

inline json num(const std::string& desc) { return {{"type", "number"}, {"description", desc}}; }
inline json uint_(const std::string& desc) { return {{"type", "integer"}, {"minimum", 0}, {"description", desc}}; }
inline json numarr(const std::string& desc) {
  return {{"type", "array"}, {"items", {{"type", "number"}}}, {"description", desc}};
}
inline json object(json props, std::vector<std::string> required) {
  return {{"type", "object"}, {"properties", std::move(props)}, {"required", std::move(required)},
          {"additionalProperties", false}};
}
inline json tagged(const char* tag, const std::string& value, json props, std::vector<std::string> required) {
  props[tag] = {{"const", value}};
  required.insert(required.begin(), tag);
  return object(std::move(props), std::move(required));
}

}  // namespace detail

/// JSON Schema (draft 2020-12) of the run configuration.
inline json config_schema() {
  using namespace detail;
  const json coords = {{"type", "array"}, {"items", {{"type", "number"}}}, {"minItems", 1}, {"maxItems", 3}};
  const json kernel = {
      {"oneOf",
       {tagged("shape", "gaussian", {{"amplitude", num("peak value")}, {"scale", num("length scale")},
                                     {"cutoff", num("support radius")}},
               {"amplitude", "scale", "cutoff"}),
        tagged("shape", "tophat", {{"amplitude", num("value on the ball")}, {"cutoff", num("support radius")}},
               {"amplitude", "cutoff"}),
        tagged("shape", "exponential", {{"amplitude", num("peak value")}, {"scale", num("decay length")},
                                        {"cutoff", num("support radius")}},
               {"amplitude", "scale", "cutoff"}),
        tagged("shape", "tabulated", {{"radii", numarr("radii, starting at 0, increasing")},
                                      {"values", numarr("kernel values at the radii")},
                                      {"cutoff", num("support radius")}},
               {"radii", "values"}),
        tagged("shape", "csv", {{"path", {{"type", "string"}, {"description", "two-column CSV (radius, value)"}}},
                                {"cutoff", num("support radius")}},
               {"path"}),
        tagged("shape", "dirac", {{"mass", num("total mass at the origin")}}, {}),
        tagged("shape", "zero", json::object(), {})}}};
  const json mortality = {
      {"oneOf",
       {tagged("kind", "constant", {{"value", num("mortality rate, 1/time")}}, {"value"}),
        tagged("kind", "grid", {{"values", numarr("row-major cell values, 1/time")},
                                {"cells_per_axis", uint_("cells along each axis")},
                                {"extent", num("grid side length")}},
               {"values", "cells_per_axis", "extent"})}}};
  const json fission = object({{"variant", {{"enum", {"factorized", "bolker_pacala", "none"}}}},
                               {"total_mass", num("<b>, fission rate per particle, 1/time")},
                               {"dispersal", kernel},
                               {"mollifier", num("sigma of the offspring mollifier, 0 disables")}},
                              {"variant"});
  const json model = object({{"dimension", {{"type", "integer"}, {"minimum", 1}, {"maximum", 3}}},
                             {"mortality", mortality},
                             {"competition", kernel},
                             {"fission", fission}},
                            {"dimension", "mortality", "competition", "fission"});
  const json initial = {
      {"oneOf",
       {tagged("kind", "poisson", {{"kappa", num("intensity, particles per unit volume")}}, {"kappa"}),
        tagged("kind", "points", {{"points", {{"type", "array"}, {"items", coords}}}}, {"points"})}}};
  const json simulation = object({{"window", num("torus side length")},
                                  {"end_time", num("simulated time")},
                                  {"replicas", uint_("independent replicas")},
                                  {"seed", uint_("master seed")},
                                  {"snapshots", numarr("sorted snapshot times")},
                                  {"initial", initial},
                                  {"guard", uint_("population cap per replica")},
                                  {"threads", uint_("worker threads, 0 = hardware")},
                                  {"record_events", {{"type", "boolean"}}}},
                                 {"window", "end_time"});
  const json theta = {
      {"oneOf",
       {tagged("kind", "zero", json::object(), {}),
        tagged("kind", "box", {{"value", num("value in (-1, 0]")}, {"lo", coords}, {"hi", coords}},
               {"value", "lo", "hi"}),
        tagged("kind", "bump", {{"depth", num("value at the centre, in (-1, 0]")}, {"center", coords},
                                {"radius", num("support radius")}},
               {"depth", "center", "radius"})}}};
  const json analysis = object(
      {{"windows", {{"type", "array"}, {"items", object({{"lo", coords}, {"hi", coords}}, {"lo", "hi"})}}},
       {"pair_bins", uint_("pair-correlation bins")},
       {"pair_rmax", num("largest pair distance")},
       {"margin", num("minus-sampling margin")},
       {"thetas", {{"type", "array"}, {"items", theta}}},
       {"max_moment_order", uint_("highest factorial moment order")},
       {"kappa_reference", num("Poisson reference intensity")},
       {"envelope_slack", num("added to log of the initial intensity")},
       {"z", num("standard errors in the envelope test")}},
      {});
  const json analytics = object({{"alpha0", num("initial scale level")},
                                 {"alpha1", num("inner scale level")},
                                 {"alpha2", num("outer scale level")},
                                 {"kappa", num("exponential moment parameter")},
                                 {"kappa_prime", num("smaller moment parameter")},
                                 {"epsilon", num("slack in the Riemann bound")},
                                 {"r", num("initial competition radius")},
                                 {"h", num("initial cell size")},
                                 {"horizon", num("time the schedule must cover")},
                                 {"omega", num("requested omega, at most the certified value")},
                                 {"samples", uint_("Monte Carlo configurations")},
                                 {"sample_mean", num("mean configuration size")},
                                 {"sample_side", num("side of the sampling box")},
                                 {"seed", uint_("Monte Carlo seed")}},
                                {});
  const json square = {{"type", "array"}, {"items", numarr("row")}};
  const json discrete = {
      {"oneOf",
       {tagged("kind", "ring", {{"sites", uint_("ring size")}, {"mortality", num("per-site mortality")},
                                {"a_self", num("same-site competition")}, {"a_near", num("neighbour competition")},
                                {"b_mass", num("fission rate per particle")}},
               {"sites", "mortality", "a_self", "a_near", "b_mass"}),
        tagged("kind", "explicit", {{"mortality", numarr("per-site mortality")}, {"competition", square},
                                    {"fission", {{"type", "array"}, {"items", square}}}},
               {"mortality", "competition", "fission"})}}};
  const json master = object({{"model", discrete},
                              {"max_size", uint_("largest retained configuration size")},
                              {"time", num("integration time")},
                              {"dt", num("RK4 step, 0 = automatic")},
                              {"report_times", numarr("times at which the law is reported")},
                              {"initial", {{"type", "array"}, {"items", {{"type", "integer"}, {"minimum", 0}}}}}},
                             {"model", "max_size", "time"});
  json root = object({{"model", model},
                      {"simulation", simulation},
                      {"analysis", analysis},
                      {"analytics", analytics},
                      {"master", master}},
                     {});
  root["$schema"] = "https://json-schema.org/draft/2020-12/schema";
  root["title"] = "fsim run configuration";
  return root;
}

}  // namespace fsim
