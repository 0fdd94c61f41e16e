#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "fsim/configuration.hpp"
#include "fsim/discrete_space.hpp"
#include "fsim/error.hpp"
#include "fsim/kernels.hpp"
#include "fsim/rng.hpp"

namespace fsim {

enum class EventKind { death, fission };

inline std::string_view to_string(EventKind k) noexcept { return k == EventKind::death ? "death" : "fission"; }

struct EventRecord {
  double time = 0.0;
  EventKind kind = EventKind::death;
  Point parent{};
  Point offspring1{};  // fission only
  Point offspring2{};
  std::size_t population = 0;  // after the event
};

struct Snapshot {
  double time = 0.0;
  std::vector<std::uint64_t> ids;
  std::vector<Point> positions;
};

enum class InitialKind { poisson, points };

struct InitialCondition {
  InitialKind kind = InitialKind::poisson;
  double kappa = 1.0;         // intensity for poisson
  std::vector<Point> points;  // for points

  static InitialCondition poisson(double kappa) { return {InitialKind::poisson, kappa, {}}; }
  static InitialCondition explicit_points(std::vector<Point> pts) {
    return {InitialKind::points, 0.0, std::move(pts)};
  }
};

struct SimConfig {
  double side = 10.0;  // torus [0, side)^d
  double end_time = 1.0;
  InitialCondition initial = InitialCondition::poisson(1.0);
  std::uint64_t seed = 0;
  std::vector<double> snapshot_times;
  std::size_t guard = 1'000'000;
  bool record_events = true;

  void validate() const {
    if (!(end_time >= 0.0)) throw Error(ErrorCode::InvalidArgument, "end time must be >= 0");
    if (guard == 0) throw Error(ErrorCode::InvalidArgument, "guard must be positive");
    if (!(side > 0.0)) throw Error(ErrorCode::InvalidArgument, "window side must be positive");
    if (initial.kind == InitialKind::poisson && !(initial.kappa >= 0.0))
      throw Error(ErrorCode::InvalidArgument, "initial intensity must be >= 0");
    for (std::size_t i = 0; i < snapshot_times.size(); ++i)
      if (snapshot_times[i] < 0.0 || (i > 0 && snapshot_times[i] < snapshot_times[i - 1]))
        throw Error(ErrorCode::InvalidArgument, "snapshot times must be nonnegative and sorted");
  }
};

enum class RunStatus { completed, extinct, guard_tripped };

inline std::string_view to_string(RunStatus s) noexcept {
  switch (s) {
    case RunStatus::completed: return "completed";
    case RunStatus::extinct: return "extinct";
    case RunStatus::guard_tripped: return "guard_tripped";
  }
  return "unknown";
}

struct RunStats {
  std::size_t events = 0;
  std::size_t null_events = 0;  // rejected mollified fissions
  double wall_seconds = 0.0;
};

struct Trajectory {
  std::uint64_t seed = 0;
  int dim = 1;
  std::vector<EventRecord> events;
  std::vector<Snapshot> snapshots;
  Snapshot initial;
  Snapshot final_state;
  RunStatus status = RunStatus::completed;
  double stop_time = 0.0;
  RunStats stats;
};

// ---------------------------------------------------------------- engine

/// Direct-method jump loop. `Model` supplies size(), total_rate() and
/// fire(time, rng) -> optional event (nullopt for a thinned event).
/// `clock(t, inclusive)` is called before the state changes at time t.
template <class Model, class OnEvent, class Clock>
RunStatus gillespie(Model& model, double t_end, Rng& rng, std::size_t guard, RunStats& stats, double& stop,
                    OnEvent&& on_event, Clock&& clock) {
  double t = 0.0;
  std::exponential_distribution<double> expo(1.0);
  while (true) {
    const double rate = model.total_rate();
    if (model.size() == 0 || !(rate > 0.0)) {
      clock(t_end, true);
      stop = t_end;
      return model.size() == 0 ? RunStatus::extinct : RunStatus::completed;
    }
    const double tn = t + expo(rng) / rate;
    if (tn > t_end) {
      clock(t_end, true);
      stop = t_end;
      return RunStatus::completed;
    }
    clock(tn, false);
    t = tn;
    auto ev = model.fire(t, rng);
    if (!ev) {
      ++stats.null_events;
      continue;
    }
    ++stats.events;
    on_event(*ev);
    if (model.size() > guard) {
      stop = t;
      return RunStatus::guard_tripped;
    }
  }
}

/// Continuum model on the torus: deaths drawn from the rate tree, fissions
/// uniformly over particles with offspring wrapped into the window.
class ContinuumModel {
 public:
  ContinuumModel(const ModelParams& p, const TorusWindow& w) : config_(p, w) {}

  Configuration& configuration() noexcept { return config_; }
  const Configuration& configuration() const noexcept { return config_; }
  std::size_t size() const noexcept { return config_.size(); }
  double total_rate() const noexcept { return config_.total_rate(); }

  std::optional<EventRecord> fire(double time, Rng& rng) {
    const double death = config_.death_total();
    const double u = uniform01(rng) * config_.total_rate();
    EventRecord ev;
    ev.time = time;
    if (u < death) {
      const std::size_t i = config_.pick_death(u);
      ev.kind = EventKind::death;
      ev.parent = config_.position(i);
      config_.remove(i);
    } else {
      const std::size_t n = config_.size();
      const double b = config_.params().fission.total_mass();
      auto i = static_cast<std::size_t>((u - death) / b);
      if (i >= n) i = n - 1;
      const Point x = config_.position(i);
      const TorusWindow& w = config_.window();
      const Point c = w.center();
      auto kids = config_.params().fission.sample(x - c, rng);
      if (!kids) return std::nullopt;
      ev.kind = EventKind::fission;
      ev.parent = x;
      ev.offspring1 = w.wrap(kids->first + c);
      ev.offspring2 = w.wrap(kids->second + c);
      config_.remove(i);
      config_.insert(ev.offspring1);
      config_.insert(ev.offspring2);
    }
    ev.population = config_.size();
    return ev;
  }

 private:
  Configuration config_;
};

inline TorusWindow make_window(const ModelParams& p, double side) {
  const double cell = p.competition.is_zero() ? 0.0 : p.competition.cutoff();
  return TorusWindow(side, p.dim, cell);
}

inline Snapshot take_snapshot(const Configuration& c, double t) {
  return {t, c.ids(), c.positions()};
}

/// Poisson(kappa L^d) count with i.i.d. uniform positions.
inline std::vector<Point> poisson_points(double kappa, const TorusWindow& w, Rng& rng) {
  std::poisson_distribution<long long> pois(kappa * w.volume());
  const auto n = static_cast<std::size_t>(kappa > 0.0 ? pois(rng) : 0);
  std::vector<Point> pts(n);
  for (auto& x : pts) {
    x = Point{0.0, 0.0, 0.0};
    for (int k = 0; k < w.dimension(); ++k) x[k] = w.side() * uniform01(rng);
    x = w.wrap(x);
  }
  return pts;
}

/// One trajectory from `c.seed`. A tripped guard is reported in the status
/// with the partial trajectory.
inline Trajectory run(const SimConfig& c, const ModelParams& p) {
  c.validate();
  const auto start = std::chrono::steady_clock::now();
  Trajectory tr;
  tr.seed = c.seed;
  tr.dim = p.dim;
  Rng rng(c.seed);
  const TorusWindow w = make_window(p, c.side);
  ContinuumModel model(p, w);
  Configuration& cfg = model.configuration();
  const auto init = c.initial.kind == InitialKind::poisson ? poisson_points(c.initial.kappa, w, rng) : c.initial.points;
  if (init.size() > c.guard) throw Error(ErrorCode::GuardTripped, "initial population exceeds the guard");
  for (const auto& x : init) cfg.insert(x);
  tr.initial = take_snapshot(cfg, 0.0);
  std::size_t next_snap = 0;
  auto clock = [&](double t, bool inclusive) {
    while (next_snap < c.snapshot_times.size() &&
           (c.snapshot_times[next_snap] < t || (inclusive && c.snapshot_times[next_snap] <= t))) {
      tr.snapshots.push_back(take_snapshot(cfg, c.snapshot_times[next_snap]));
      ++next_snap;
    }
  };
  auto on_event = [&](const EventRecord& ev) {
    if (c.record_events) tr.events.push_back(ev);
  };
  tr.status = gillespie(model, c.end_time, rng, c.guard, tr.stats, tr.stop_time, on_event, clock);
  tr.final_state = take_snapshot(cfg, tr.stop_time);
  tr.stats.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return tr;
}

/// Runs `n` independent copies of `f(i)` filling slot i; assignment to
/// threads does not affect the results.
template <class Result, class F>
std::vector<Result> parallel_replicas(std::size_t n, unsigned threads, F&& f) {
  std::vector<Result> out(n);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out[i] = f(i);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
        return;
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failed) std::rethrow_exception(failure);
  return out;
}

struct Ensemble {
  std::uint64_t master_seed = 0;
  int dim = 1;
  double side = 0.0;
  std::vector<double> snapshot_times;
  std::vector<Trajectory> runs;

  std::size_t size() const noexcept { return runs.size(); }
};

/// Replica i runs with seed derive_seed(c.seed, i).
inline Ensemble replicate(const SimConfig& c, const ModelParams& p, std::size_t n, unsigned threads = 0) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "need at least one replica");
  c.validate();
  Ensemble e;
  e.master_seed = c.seed;
  e.dim = p.dim;
  e.side = c.side;
  e.snapshot_times = c.snapshot_times;
  e.runs = parallel_replicas<Trajectory>(n, threads, [&](std::size_t i) {
    SimConfig ci = c;
    ci.seed = derive_seed(c.seed, i);
    return run(ci, p);
  });
  return e;
}

/// Per snapshot time: mean and standard error of N and the first four
/// moments of (1 + N).
inline nlohmann::json ensemble_summary(const Ensemble& e) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t s = 0; s < e.snapshot_times.size(); ++s) {
    std::vector<double> mom(5, 0.0);
    double sum = 0.0, sum2 = 0.0;
    std::size_t count = 0;
    for (const auto& r : e.runs) {
      if (s >= r.snapshots.size()) continue;
      const double n = static_cast<double>(r.snapshots[s].positions.size());
      sum += n;
      sum2 += n * n;
      double pw = 1.0;
      for (auto& m : mom) {
        m += pw;
        pw *= 1.0 + n;
      }
      ++count;
    }
    const double k = static_cast<double>(std::max<std::size_t>(count, 1));
    const double mean = sum / k;
    const double var = count > 1 ? (sum2 - k * mean * mean) / (k - 1.0) : 0.0;
    for (auto& m : mom) m /= k;
    rows.push_back({{"time", e.snapshot_times[s]}, {"replicas", count}, {"mean_count", mean},
                    {"stderr_count", std::sqrt(std::max(var, 0.0) / k)}, {"chi_moments", mom}});
  }
  std::size_t tripped = 0, extinct = 0;
  for (const auto& r : e.runs) {
    tripped += r.status == RunStatus::guard_tripped;
    extinct += r.status == RunStatus::extinct;
  }
  return {{"master_seed", e.master_seed}, {"replicas", e.size()}, {"dim", e.dim}, {"side", e.side},
          {"guard_tripped", tripped}, {"extinct", extinct}, {"snapshots", rows}};
}

inline void write_events_csv(std::ostream& out, const Trajectory& tr) {
  const int d = tr.dim;
  out << "t,kind";
  for (const char* tag : {"parent_x", "y1_x", "y2_x"})
    for (int k = 1; k <= d; ++k) out << ',' << tag << k;
  out << ",population\n";
  out.precision(17);
  for (const auto& ev : tr.events) {
    out << ev.time << ',' << to_string(ev.kind);
    for (int k = 0; k < d; ++k) out << ',' << ev.parent[k];
    for (const Point* y : {&ev.offspring1, &ev.offspring2})
      for (int k = 0; k < d; ++k) {
        out << ',';
        if (ev.kind == EventKind::fission) out << (*y)[k];
      }
    out << ',' << ev.population << '\n';
  }
}

inline void write_snapshot_rows(std::ostream& out, const Snapshot& s, int d) {
  for (std::size_t i = 0; i < s.positions.size(); ++i) {
    out << s.time << ',' << s.ids[i];
    for (int k = 0; k < d; ++k) out << ',' << s.positions[i][k];
    out << '\n';
  }
}

/// Header t,id,x1..xd followed by every snapshot of the trajectory.
inline void write_snapshots_csv(std::ostream& out, const Trajectory& tr) {
  out << "t,id";
  for (int k = 1; k <= tr.dim; ++k) out << ",x" << k;
  out << '\n';
  out.precision(17);
  for (const auto& s : tr.snapshots) write_snapshot_rows(out, s, tr.dim);
}

// ---------------------------------------------------------------- sites

/// The same jump dynamics on a finite site set: particles at sites,
/// pairwise competition a(x, y) and fission tensor b(x | j, k).
class SiteModel {
 public:
  struct Event {
    double time = 0.0;
    EventKind kind = EventKind::death;
    int parent = 0;
    int y1 = 0, y2 = 0;
  };

  SiteModel(const DiscreteSpace& s, const Multiset& eta) : space_(&s), n_(static_cast<std::size_t>(s.sites()), 0) {
    const int m = s.sites();
    offspring_cdf_.resize(static_cast<std::size_t>(m));
    mass_.resize(static_cast<std::size_t>(m));
    for (int x = 0; x < m; ++x) {
      auto& cdf = offspring_cdf_[static_cast<std::size_t>(x)];
      double acc = 0.0;
      for (int j = 0; j < m; ++j)
        for (int k = 0; k < m; ++k) cdf.push_back(acc += s.fission(x, j, k));
      mass_[static_cast<std::size_t>(x)] = acc;
    }
    for (int x : eta) {
      if (x < 0 || x >= m) throw Error(ErrorCode::BadIndex, "site out of range");
      ++n_[static_cast<std::size_t>(x)];
      ++size_;
    }
  }

  std::size_t size() const noexcept { return size_; }
  const std::vector<int>& occupation() const noexcept { return n_; }

  Multiset state() const {
    Multiset eta;
    for (std::size_t x = 0; x < n_.size(); ++x) eta.insert(eta.end(), static_cast<std::size_t>(n_[x]), static_cast<int>(x));
    return eta;
  }

  /// Death rate of one particle at x and the site totals.
  double site_death(int x) const {
    const auto ux = static_cast<std::size_t>(x);
    if (n_[ux] == 0) return 0.0;
    double comp = -space_->competition(x, x);
    for (std::size_t y = 0; y < n_.size(); ++y) comp += n_[y] * space_->competition(x, static_cast<int>(y));
    return n_[ux] * (space_->mortality(x) + comp);
  }

  double total_rate() const {
    double s = 0.0;
    for (std::size_t x = 0; x < n_.size(); ++x)
      if (n_[x]) s += site_death(static_cast<int>(x)) + n_[x] * mass_[x];
    return s;
  }

  std::optional<Event> fire(double time, Rng& rng) {
    double u = uniform01(rng) * total_rate();
    Event ev;
    ev.time = time;
    int last = -1;
    for (std::size_t x = 0; x < n_.size(); ++x) {
      if (!n_[x]) continue;
      last = static_cast<int>(x);
      const double d = site_death(last);
      if (u < d) {
        ev.kind = EventKind::death;
        ev.parent = last;
        --n_[x];
        --size_;
        return ev;
      }
      u -= d;
      const double f = n_[x] * mass_[x];
      if (u < f) return fission(last, u / n_[x], ev);
      u -= f;
    }
    // Round-off spill: attribute to the last occupied site's fission.
    return mass_[static_cast<std::size_t>(last)] > 0.0
               ? fission(last, mass_[static_cast<std::size_t>(last)] * (1.0 - 1e-16), ev)
               : std::optional<Event>(std::nullopt);
  }

 private:
  std::optional<Event> fission(int x, double v, Event& ev) {
    const auto& cdf = offspring_cdf_[static_cast<std::size_t>(x)];
    auto idx = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), v) - cdf.begin());
    idx = std::min(idx, cdf.size() - 1);
    const int m = static_cast<int>(n_.size());
    ev.kind = EventKind::fission;
    ev.parent = x;
    ev.y1 = static_cast<int>(idx) / m;
    ev.y2 = static_cast<int>(idx) % m;
    --n_[static_cast<std::size_t>(x)];
    ++n_[static_cast<std::size_t>(ev.y1)];
    ++n_[static_cast<std::size_t>(ev.y2)];
    ++size_;
    return ev;
  }

  const DiscreteSpace* space_;
  std::vector<int> n_;
  std::size_t size_ = 0;
  std::vector<std::vector<double>> offspring_cdf_;
  std::vector<double> mass_;
};

struct SiteRun {
  Multiset final_state;
  RunStatus status = RunStatus::completed;
  RunStats stats;
};

inline SiteRun run_sites(const DiscreteSpace& s, const Multiset& eta0, double t_end, std::uint64_t seed,
                         std::size_t guard = 1'000'000) {
  if (!(t_end >= 0.0)) throw Error(ErrorCode::InvalidArgument, "end time must be >= 0");
  Rng rng(seed);
  SiteModel model(s, eta0);
  SiteRun out;
  double stop = 0.0;
  out.status = gillespie(model, t_end, rng, guard, out.stats, stop, [](const SiteModel::Event&) {},
                         [](double, bool) {});
  out.final_state = model.state();
  return out;
}

/// Final particle counts of `n` replicas seeded by derive_seed(master, i).
inline std::vector<std::size_t> replicate_site_counts(const DiscreteSpace& s, const Multiset& eta0, double t_end,
                                                      std::uint64_t master, std::size_t n, unsigned threads = 0) {
  return parallel_replicas<std::size_t>(
      n, threads, [&](std::size_t i) { return run_sites(s, eta0, t_end, derive_seed(master, i)).final_state.size(); });
}

}  // namespace fsim
