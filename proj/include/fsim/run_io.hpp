#pragma once

#include <boost/version.hpp>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "fsim/config.hpp"
#include "fsim/error.hpp"
#include "fsim/estimators.hpp"
#include "fsim/simulator.hpp"

namespace fsim {

inline constexpr const char* library_version = "1.0.0";

namespace fs = std::filesystem;

// ---------------------------------------------------------------- files

inline void write_text(const fs::path& p, const std::string& text) {
  std::error_code ec;
  fs::create_directories(p.parent_path(), ec);
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + p.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + p.string());
}

inline void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

inline json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorCode::MissingData, "cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MissingData, p.string() + ": " + e.what());
  }
}

/// UTC timestamp as YYYYmmddTHHMMSSZ.
inline std::string utc_stamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

/// Creates `<out>/<tag>-<stamp>-<hash8>`, suffixed -1, -2, ... when taken.
inline fs::path make_run_dir(const fs::path& out, const std::string& tag, const std::string& hash) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + out.string() + ": " + ec.message());
  const std::string base = tag + "-" + utc_stamp() + "-" + hash.substr(0, 8);
  for (int k = 0; k < 10000; ++k) {
    const fs::path p = out / (k == 0 ? base : base + "-" + std::to_string(k));
    if (fs::create_directory(p, ec)) return p;
    if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + p.string() + ": " + ec.message());
  }
  throw Error(ErrorCode::IoFailure, "no free run directory under " + out.string());
}

inline std::string replica_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu", i);
  return buf;
}

inline json versions() {
  return {{"fsim", library_version},
          {"boost", std::to_string(BOOST_VERSION / 100000) + "." + std::to_string(BOOST_VERSION / 100 % 1000) + "." +
                        std::to_string(BOOST_VERSION % 100)},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
#if defined(__clang__)
          {"compiler", std::string("clang ") + __clang_version__},
#elif defined(__GNUC__)
          {"compiler", std::string("gcc ") + __VERSION__},
#else
          {"compiler", "unknown"},
#endif
          {"cxx", static_cast<long>(__cplusplus)}};
}

// ---------------------------------------------------------------- sidecar

/// Units and column definitions of every file a subcommand can emit.
inline json output_schema() {
  auto col = [](const char* unit, const char* def) { return json{{"unit", unit}, {"definition", def}}; };
  return {
      {"trajectories/trajectory_NNNNN.csv",
       {{"format", "csv"},
        {"columns",
         {{"t", col("time", "snapshot time")},
          {"id", col("1", "particle id, unique within a replica")},
          {"x1..xd", col("length", "position in the torus [0, window)^d")}}}}},
      {"events/events_NNNNN.csv",
       {{"format", "csv"},
        {"columns",
         {{"t", col("time", "event time")},
          {"kind", col("1", "death or fission")},
          {"parent_x1..d", col("length", "position of the dying or splitting particle")},
          {"y1_x1..d", col("length", "first offspring, empty for deaths")},
          {"y2_x1..d", col("length", "second offspring, empty for deaths")},
          {"population", col("1", "population after the event")}}}}},
      {"ensemble.json",
       {{"format", "json"},
        {"fields",
         {{"snapshots[].time", col("time", "snapshot time")},
          {"snapshots[].mean_count", col("1", "replica mean of the population N")},
          {"snapshots[].stderr_count", col("1", "standard error of mean_count")},
          {"snapshots[].chi_moments", col("1", "replica means of (1 + N)^m for m = 0..4")},
          {"guard_tripped", col("1", "replicas stopped by the population guard")},
          {"extinct", col("1", "replicas that reached the empty configuration")}}}}},
      {"analysis.json",
       {{"format", "json"},
        {"fields",
         {{"snapshots[].windows[].intensity.intensity", col("1/length^d", "mean count per unit volume of the window")},
          {"snapshots[].windows[].intensity.stderr", col("1/length^d", "standard error across replicas")},
          {"snapshots[].windows[].factorial_moments.moments[m-1]",
           col("1", "E[N(N-1)...(N-m+1)] for the count N in the window")},
          {"snapshots[].windows[].factorial_moments.poisson[m-1]", col("1", "(kappa |window|)^m")},
          {"snapshots[].windows[].factorial_moments.stderr[m-1]", col("1", "standard error of each moment")},
          {"snapshots[].windows[].factorial_moments.envelope_ref[m-1]",
           col("1", "(kappa_t |window|)^m with kappa_t = exp(alpha0 + c t)")},
          {"snapshots[].windows[].poisson_gof.p_value", col("1", "chi-square p-value of counts against Poisson")},
          {"snapshots[].bogoliubov[].value", col("1", "replica mean of prod (1 + theta(x))")},
          {"snapshots[].bogoliubov[].truncated_order2",
           col("1", "1 + sum theta + (1/2) sum_{x != y} theta theta, replica mean")},
          {"envelope.alpha0", col("1", "log of the initial intensity plus slack")},
          {"envelope.c", col("1/time", "<b> + upsilon - m_*")}}}}},
      {"pair_correlation_S.csv",
       {{"format", "csv"},
        {"columns",
         {{"r", col("length", "bin centre")},
          {"k2", col("1/length^(2d)", "second correlation function estimate, minus-sampled")},
          {"stderr", col("1/length^(2d)", "standard error across replicas")}}}}},
      {"constants.json",
       {{"format", "json"},
        {"fields",
         {{"certificate.omega", col("1", "domination constant")},
          {"certificate.upsilon", col("1/time", "domination offset")},
          {"time_bounds.T", col("time", "existence horizon between two scale levels")},
          {"time_bounds.tau", col("time", "T / 3")},
          {"schedule.steps[].T", col("time", "continuation step length")},
          {"schedule.steps[].alpha_star", col("1", "scale level after the step")}}}}},
      {"schedule.csv",
       {{"format", "csv"},
        {"columns",
         {{"n", col("1", "step index")},
          {"T_n", col("time", "step length")},
          {"alpha_star_n", col("1", "scale level after step n")},
          {"alpha_n", col("1", "outer level of step n")},
          {"sum_T", col("time", "covered horizon")}}}}},
      {"marginal_T.csv",
       {{"format", "csv"},
        {"columns",
         {{"n", col("1", "population size")}, {"p", col("1", "probability of N = n at the report time")}}}}},
      {"master.json",
       {{"format", "json"},
        {"fields",
         {{"reports[].total", col("1", "total probability including the sink")},
          {"reports[].leak", col("1", "probability in the truncation sink")},
          {"reports[].moments", col("1", "E[(1 + N)^m], m = 0..4, sink excluded")}}}}},
      {"verify.json",
       {{"format", "json"}, {"fields", {{"checks[].value", col("1", "measured residual or statistic")},
                                         {"checks[].tolerance", col("1", "pass threshold")}}}}}};
}

// ---------------------------------------------------------------- simulate

struct SimulateResult {
  fs::path dir;
  json manifest;
};

/// Runs the ensemble and writes trajectories, ensemble.json, a copy of the
/// config, the sidecar schema and the manifest into a fresh run directory.
inline SimulateResult write_simulation(const RunConfig& cfg, const fs::path& out) {
  const ModelParams& p = cfg.require_model();
  const SimulationSection& s = cfg.require_simulation();
  const std::string hash = params_hash(cfg);
  const Ensemble e = replicate(s.sim, p, s.replicas, s.threads);
  SimulateResult res;
  res.dir = make_run_dir(out, "simulate", hash);
  json reps = json::array();
  for (std::size_t i = 0; i < e.size(); ++i) {
    const auto& tr = e.runs[i];
    const std::string name = replica_name(i);
    std::ostringstream snap;
    write_snapshots_csv(snap, tr);
    write_text(res.dir / "trajectories" / ("trajectory_" + name + ".csv"), snap.str());
    if (s.sim.record_events) {
      std::ostringstream ev;
      write_events_csv(ev, tr);
      write_text(res.dir / "events" / ("events_" + name + ".csv"), ev.str());
    }
    reps.push_back({{"index", i}, {"seed", tr.seed}, {"status", to_string(tr.status)}, {"stop_time", tr.stop_time},
                    {"events", tr.stats.events}, {"null_events", tr.stats.null_events},
                    {"snapshots", tr.snapshots.size()}, {"final_population", tr.final_state.positions.size()}});
  }
  write_json(res.dir / "ensemble.json", ensemble_summary(e));
  write_json(res.dir / "config.json", cfg.source);
  write_json(res.dir / "schema.json", output_schema());
  res.manifest = {{"subcommand", "simulate"},
                  {"created", utc_stamp()},
                  {"params_hash", hash},
                  {"master_seed", s.sim.seed},
                  {"seed_rule", "replica i uses derive_seed(master_seed, i), splitmix64"},
                  {"replicas", s.replicas},
                  {"dim", p.dim},
                  {"window", s.sim.side},
                  {"end_time", s.sim.end_time},
                  {"snapshot_times", s.sim.snapshot_times},
                  {"versions", versions()},
                  {"config", cfg.source},
                  {"runs", reps}};
  write_json(res.dir / "manifest.json", res.manifest);
  return res;
}

// ---------------------------------------------------------------- load

struct LoadedRun {
  json manifest;
  int dim = 1;
  double side = 1.0;
  std::vector<double> snapshot_times;
  std::vector<PointSample> samples;  // one per snapshot time
};

/// Reads the manifest and trajectory CSVs of a simulate directory. Replicas
/// stopped before a snapshot time are left out of that sample.
inline LoadedRun load_run(const fs::path& dir) {
  LoadedRun lr;
  lr.manifest = read_json(dir / "manifest.json");
  try {
    lr.dim = lr.manifest.at("dim").get<int>();
    lr.side = lr.manifest.at("window").get<double>();
    lr.snapshot_times = lr.manifest.at("snapshot_times").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MissingData, "manifest lacks run metadata: " + std::string(e.what()));
  }
  const auto& runs = lr.manifest.at("runs");
  const std::size_t ns = lr.snapshot_times.size();
  lr.samples.resize(ns);
  for (std::size_t s = 0; s < ns; ++s) lr.samples[s] = PointSample{lr.dim, lr.side, lr.snapshot_times[s], {}};
  for (const auto& r : runs) {
    const auto i = r.at("index").get<std::size_t>();
    const auto have = r.at("snapshots").get<std::size_t>();
    const fs::path file = dir / "trajectories" / ("trajectory_" + replica_name(i) + ".csv");
    std::ifstream in(file);
    if (!in) throw Error(ErrorCode::MissingData, "missing " + file.string());
    std::vector<std::vector<Point>> per(ns);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream ss(line);
      std::string cell;
      std::vector<double> v;
      while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
      if (static_cast<int>(v.size()) != 2 + lr.dim) throw Error(ErrorCode::MissingData, "malformed row in " + file.string());
      std::size_t best = 0;
      for (std::size_t s = 1; s < ns; ++s)
        if (std::abs(lr.snapshot_times[s] - v[0]) < std::abs(lr.snapshot_times[best] - v[0])) best = s;
      Point x{};
      for (int k = 0; k < lr.dim; ++k) x[k] = v[static_cast<std::size_t>(2 + k)];
      per[best].push_back(x);
    }
    for (std::size_t s = 0; s < std::min(have, ns); ++s) lr.samples[s].configs.push_back(std::move(per[s]));
  }
  return lr;
}

}  // namespace fsim
