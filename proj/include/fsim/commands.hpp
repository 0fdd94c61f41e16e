#pragma once

#include <cmath>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>

#include "fsim/analytics.hpp"
#include "fsim/config.hpp"
#include "fsim/estimators.hpp"
#include "fsim/master_equation.hpp"
#include "fsim/run_io.hpp"
#include "fsim/verify.hpp"

namespace fsim {

enum ExitCode : int { exit_ok = 0, exit_internal = 1, exit_degenerate = 2, exit_verification = 3 };

/// Input-side failures map to 2, everything else to 1.
inline int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::ConfigInvalid:
    case ErrorCode::MissingData:
    case ErrorCode::NoAdmissibleR:
    case ErrorCode::EmptyWindow:
    case ErrorCode::NoPairs:
    case ErrorCode::AlphaTooSmall:
    case ErrorCode::BadOmega:
    case ErrorCode::RiemannBoundFailed:
      return exit_degenerate;
    default:
      return exit_internal;
  }
}

struct CommandResult {
  int exit_code = exit_ok;
  fs::path dir;
  json report;
  std::string message;
};

// ---------------------------------------------------------------- shared

/// Intensity of the initial condition: kappa, or points per unit volume.
inline double initial_intensity(const SimulationSection& s, int d) {
  if (s.sim.initial.kind == InitialKind::poisson) return s.sim.initial.kappa;
  return static_cast<double>(s.sim.initial.points.size()) / std::pow(s.sim.side, d);
}

/// Envelope kappa_t = exp(alpha0 + c t), c = <b> + upsilon - m_*, with
/// upsilon from the domination certificate and alpha0 = log kappa0 + slack.
struct EnvelopePlan {
  std::optional<DominationCertificate> certificate;
  double alpha0 = 0.0;
  double c = 0.0;
  double threshold = 0.0;  // -log omega
  bool meets_threshold = false;
  std::string note;

  double kappa_at(double t) const { return std::exp(alpha0 + c * t); }
};

inline void to_json(json& j, const EnvelopePlan& e) {
  j = {{"alpha0", e.alpha0}, {"c", e.c}, {"threshold", e.threshold}, {"meets_threshold", e.meets_threshold},
       {"note", e.note}};
  if (e.certificate) j["certificate"] = *e.certificate;
}

inline std::optional<EnvelopePlan> envelope_plan(const ModelParams& p, const AnalyticsSection& an, double kappa0,
                                                 double slack) {
  if (!(kappa0 > 0.0)) return std::nullopt;
  EnvelopePlan e;
  try {
    e.certificate = domination_certificate(p.competition, p.fission, p.dim, an.epsilon, an.r, an.h, an.omega);
  } catch (const Error&) {
    return std::nullopt;
  }
  const auto sc = scale_constants(p.constants(), e.certificate->upsilon);
  e.alpha0 = std::log(kappa0) + slack;
  e.c = sc.b_mass + sc.upsilon - sc.m_lower;
  e.threshold = -std::log(e.certificate->omega);
  e.meets_threshold = e.alpha0 > e.threshold;
  e.note = e.meets_threshold ? "alpha0 exceeds -log omega: envelope covered by the comparison bound"
                             : "alpha0 below -log omega: envelope is a heuristic check, not certified";
  return e;
}

// ---------------------------------------------------------------- simulate

inline CommandResult cmd_simulate(const RunConfig& cfg, const fs::path& out) {
  CommandResult r;
  const auto res = write_simulation(cfg, out);
  r.dir = res.dir;
  r.report = res.manifest;
  r.message = "wrote " + std::to_string(cfg.require_simulation().replicas) + " replicas to " + res.dir.string();
  return r;
}

// ---------------------------------------------------------------- analyze

inline CommandResult cmd_analyze(const fs::path& run_dir, const RunConfig& cfg, const fs::path& out) {
  CommandResult r;
  const LoadedRun lr = load_run(run_dir);
  const ModelParams& p = cfg.require_model();
  if (p.dim != lr.dim) throw Error(ErrorCode::ConfigInvalid, "model.dimension does not match the run");
  const AnalysisSection a = cfg.analysis_or_default();
  const std::string hash = params_hash(cfg);
  r.dir = make_run_dir(out, "analyze", hash);
  json meta = {{"subcommand", "analyze"}, {"created", utc_stamp()}, {"run_dir", fs::absolute(run_dir).string()},
               {"params_hash", hash}, {"run_params_hash", lr.manifest.value("params_hash", "")},
               {"versions", versions()}, {"config", cfg.source}};
  write_json(r.dir / "schema.json", output_schema());

  std::size_t total_replicas = 0;
  for (const auto& s : lr.samples) total_replicas += s.replicas();
  if (lr.samples.empty() || total_replicas == 0) {
    r.report = {{"status", "NoData"},
                {"reason", lr.samples.empty() ? "the run has no snapshot times" : "no replica reached a snapshot"}};
    write_json(r.dir / "analysis.json", r.report);
    write_json(r.dir / "manifest.json", meta);
    r.exit_code = exit_degenerate;
    r.message = "NoData: " + r.report["reason"].get<std::string>();
    return r;
  }

  const int d = lr.dim;
  const double side = lr.side;
  double kappa0 = 0.0;
  if (cfg.simulation) kappa0 = initial_intensity(*cfg.simulation, d);
  else if (lr.manifest.contains("config")) kappa0 = initial_intensity(parse_config(lr.manifest["config"], cfg.base_dir).require_simulation(), d);
  const double kappa_ref = a.kappa_reference.value_or(kappa0);
  const auto plan = envelope_plan(p, cfg.analytics.value_or(AnalyticsSection{}), kappa0, a.envelope_slack);

  std::vector<Box> windows = a.windows;
  if (windows.empty()) windows.push_back(Box::cube(0.0, side, d));
  const double rmax = a.pair_rmax.value_or(std::min(side / 4.0, std::max(p.competition.cutoff(), side / 10.0)));
  const double margin = std::max(a.margin.value_or(std::max(rmax, p.competition.cutoff())), rmax);
  const auto edges = uniform_edges(rmax, a.pair_bins);

  json snaps = json::array();
  for (std::size_t si = 0; si < lr.samples.size(); ++si) {
    const PointSample& s = lr.samples[si];
    json row = {{"index", si}, {"time", s.time}, {"replicas", s.replicas()}};
    if (s.replicas() == 0) {
      row["status"] = "NoData";
      snaps.push_back(row);
      continue;
    }
    std::optional<double> env;
    if (plan) env = plan->kappa_at(s.time);
    json wins = json::array();
    for (const auto& b : windows) {
      json w;
      try {
        check_box(b, s);
        w["intensity"] = intensity(s, b);
        w["factorial_moments"] = factorial_moments(s, b, a.max_moment_order, kappa_ref, env, a.z);
        w["poisson_gof"] = poisson_count_gof(window_counts(s, b), kappa_ref * b.volume(d));
      } catch (const Error& e) {
        w["error"] = e.what();
      }
      std::vector<double> lo(b.lo.begin(), b.lo.begin() + d), hi(b.hi.begin(), b.hi.begin() + d);
      w["window"] = {{"lo", lo}, {"hi", hi}};
      wins.push_back(w);
    }
    row["windows"] = wins;
    if (env) row["kappa_t"] = *env;
    try {
      const auto pc = pair_correlation(s, edges, margin);
      row["pair_correlation"] = pc;
      std::ostringstream csv;
      write_pair_correlation_csv(csv, pc);
      write_text(r.dir / ("pair_correlation_" + std::to_string(si) + ".csv"), csv.str());
    } catch (const Error& e) {
      row["pair_correlation"] = {{"error", e.what()}};
    }
    json fun = json::array();
    for (const auto& th : a.thetas) fun.push_back(bogoliubov_functional(s, th));
    row["bogoliubov"] = fun;
    snaps.push_back(row);
  }
  r.report = {{"status", "ok"}, {"kappa_reference", kappa_ref}, {"initial_intensity", kappa0},
              {"pair_rmax", rmax}, {"margin", margin}, {"snapshots", snaps}};
  if (plan) r.report["envelope"] = *plan;
  else r.report["envelope"] = {{"note", "no certificate for this model; envelope check skipped"}};
  write_json(r.dir / "analysis.json", r.report);
  write_json(r.dir / "manifest.json", meta);
  r.message = "analysed " + std::to_string(lr.samples.size()) + " snapshot times into " + r.dir.string();
  return r;
}

// ---------------------------------------------------------------- master

inline CommandResult cmd_master(const RunConfig& cfg, const fs::path& out) {
  CommandResult r;
  const MasterSection& m = cfg.require_master();
  const std::string hash = params_hash(cfg);
  const auto ss = enumerate_states(m.space.sites(), m.max_size);
  const auto q = build_generator(m.space, ss);
  r.dir = make_run_dir(out, "master", hash);
  std::vector<double> times = m.report_times;
  if (times.empty() || times.back() < m.time) times.push_back(m.time);
  DistributionVector p = point_mass(ss, m.initial);
  double t = 0.0;
  ClipAudit audit;
  json reports = json::array();
  for (std::size_t k = 0; k < times.size(); ++k) {
    const auto ev = evolve(p, q, times[k] - t, m.dt);
    p = ev.state;
    t = times[k];
    audit.steps += ev.audit.steps;
    audit.clipped_entries += ev.audit.clipped_entries;
    audit.clipped_mass += ev.audit.clipped_mass;
    audit.most_negative = std::min(audit.most_negative, ev.audit.most_negative);
    const auto marg = count_marginal(p, ss);
    std::ostringstream csv;
    csv << "n,p\n";
    csv.precision(17);
    for (std::size_t n = 0; n < marg.size(); ++n) csv << n << ',' << marg[n] << '\n';
    const std::string name = "marginal_" + std::to_string(k) + ".csv";
    write_text(r.dir / name, csv.str());
    reports.push_back({{"time", t}, {"total", p.total()}, {"leak", leak(p, ss)}, {"dt", ev.dt},
                       {"moments", moments(p, ss, 4)}, {"marginal_file", name}});
  }
  r.report = {{"states", ss.size()},
              {"sites", ss.sites()},
              {"max_size", ss.max_size()},
              {"nonzeros", q.nonzeros()},
              {"max_exit_rate", q.max_exit_rate()},
              {"audit",
               {{"steps", audit.steps}, {"clipped_entries", audit.clipped_entries},
                {"clipped_mass", audit.clipped_mass}, {"most_negative", audit.most_negative}}},
              {"reports", reports}};
  write_json(r.dir / "master.json", r.report);
  write_json(r.dir / "schema.json", output_schema());
  write_json(r.dir / "manifest.json", {{"subcommand", "master"}, {"created", utc_stamp()}, {"params_hash", hash},
                                       {"versions", versions()}, {"config", cfg.source}});
  r.message = "integrated " + std::to_string(ss.size()) + " states to t = " + std::to_string(m.time);
  return r;
}

// ---------------------------------------------------------------- constants

inline CommandResult cmd_constants(const RunConfig& cfg, const fs::path& out) {
  CommandResult r;
  const ModelParams& p = cfg.require_model();
  const AnalyticsSection an = cfg.analytics.value_or(AnalyticsSection{});
  const std::string hash = params_hash(cfg);
  r.dir = make_run_dir(out, "constants", hash);
  write_json(r.dir / "schema.json", output_schema());
  write_json(r.dir / "manifest.json", {{"subcommand", "constants"}, {"created", utc_stamp()}, {"params_hash", hash},
                                       {"versions", versions()}, {"config", cfg.source}});
  const auto validation = validate_params(p);
  json items = json::array();
  for (const auto& it : validation.items)
    items.push_back({{"label", it.label}, {"passed", it.passed}, {"message", it.message}});
  json bundle = {{"assumptions", items}};

  DominationCertificate cert;
  try {
    cert = domination_certificate(p.competition, p.fission, p.dim, an.epsilon, an.r, an.h, an.omega);
  } catch (const Error& e) {
    std::string guidance;
    if (e.code() == ErrorCode::NoAdmissibleR)
      guidance = "the competition kernel must be positive on a ball around the origin; no radius r, r/2, ... "
                 "starting at analytics.r gives inf a > 0";
    else if (e.code() == ErrorCode::RiemannBoundFailed)
      guidance = "beta is too singular for the cell bound; increase analytics.epsilon or smooth the dispersal kernel";
    else
      guidance = "requested analytics.omega exceeds the certified value";
    bundle["error"] = {{"code", std::string(to_string(e.code()))}, {"message", e.what()}, {"guidance", guidance}};
    write_json(r.dir / "constants.json", bundle);
    r.report = bundle;
    r.exit_code = exit_code_for(e.code());
    r.message = std::string(e.what()) + "; " + guidance;
    return r;
  }
  const auto sc = scale_constants(p.constants(), cert.upsilon);
  const double omega = cert.omega;
  const double threshold = -std::log(omega);
  double alpha0;
  std::string alpha_note;
  if (an.alpha0) {
    alpha0 = *an.alpha0;
    alpha_note = "from analytics.alpha0";
  } else {
    double k0 = 0.0;
    if (cfg.simulation) k0 = initial_intensity(*cfg.simulation, p.dim);
    const double slack = cfg.analysis_or_default().envelope_slack;
    alpha0 = k0 > 0.0 ? std::log(k0) + slack : threshold + 0.1;
    alpha_note = k0 > 0.0 ? "log of the initial intensity plus slack" : "-log omega + 0.1";
    if (!(alpha0 > threshold)) {
      alpha0 = threshold + 0.1;
      alpha_note = "raised to -log omega + 0.1";
    }
  }
  if (!(alpha0 > threshold)) {
    bundle["certificate"] = cert;
    bundle["error"] = {{"code", "AlphaTooSmall"},
                       {"message", "alpha0 = " + std::to_string(alpha0) + " does not exceed -log omega = " +
                                       std::to_string(threshold)},
                       {"guidance", "raise analytics.alpha0 above -log omega"}};
    write_json(r.dir / "constants.json", bundle);
    r.report = bundle;
    r.exit_code = exit_degenerate;
    r.message = bundle["error"]["message"].get<std::string>();
    return r;
  }
  const double a1 = an.alpha1.value_or(alpha0);
  const double a2 = an.alpha2.value_or(a1 + optimal_gap(sc, a1));
  const auto bounds = time_bounds(sc, a1, a2, an.kappa, an.kappa_prime);
  const auto sched = schedule(alpha0, sc, omega, an.horizon);
  const auto regime = dispersal_regime(p.competition, p.fission);
  const auto growth = growth_and_envelope(sc, omega, alpha0, an.horizon);
  Rng rng(an.seed);
  const auto samples = random_configurations(an.samples, an.sample_mean, an.sample_side, p.dim, rng);
  const auto check = verify_domination(cert.pair(), p.competition, p.fission, p.dim, samples);

  bundle["scale_constants"] = sc;
  bundle["certificate"] = cert;
  bundle["certificate_check"] = check;
  bundle["alpha0"] = {{"value", alpha0}, {"threshold", threshold}, {"source", alpha_note}};
  bundle["time_bounds"] = bounds;
  bundle["schedule"] = sched;
  bundle["regime"] = regime;
  bundle["growth"] = growth;
  write_json(r.dir / "constants.json", bundle);
  std::ostringstream csv;
  write_schedule_csv(csv, sched);
  write_text(r.dir / "schedule.csv", csv.str());
  r.report = bundle;
  r.message = "omega = " + std::to_string(omega) + ", upsilon = " + std::to_string(cert.upsilon) + ", " +
              std::to_string(sched.steps.size()) + " schedule steps";
  if (!check.passed()) {
    r.exit_code = exit_verification;
    r.message += "; certificate failed on sampled configurations";
  }
  return r;
}

// ---------------------------------------------------------------- verify

inline CommandResult cmd_verify(const std::string& level, const fs::path& out, const VerifyOptions& opt = {}) {
  CommandResult r;
  const auto rep = run_verify(level, opt);
  r.dir = make_run_dir(out, "verify", hex64(fnv1a(level)));
  r.report = rep;
  write_json(r.dir / "verify.json", r.report);
  write_json(r.dir / "schema.json", output_schema());
  write_json(r.dir / "manifest.json",
             {{"subcommand", "verify"}, {"level", level}, {"created", utc_stamp()}, {"versions", versions()}});
  std::ostringstream msg;
  for (const auto& c : rep.checks)
    msg << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.value << " (tol " << c.tolerance << ") " << c.detail
        << "\n";
  r.message = msg.str();
  r.exit_code = rep.passed() ? exit_ok : exit_verification;
  return r;
}

}  // namespace fsim
