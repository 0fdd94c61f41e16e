#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "fsim/master_equation.hpp"
#include "fsim/simulator.hpp"
#include "stats_oracles.hpp"
#include "test_models.hpp"

using namespace fsim;

namespace {

ModelParams model(int d, double m, const RadialKernel& a, double b, double disp_scale = 0.3) {
  ModelParams p;
  p.dim = d;
  p.mortality = MortalityField::constant(m);
  p.competition = a;
  p.fission = FissionKernel::factorized(b, RadialKernel::gaussian(1.0, disp_scale, 3.0 * disp_scale), d);
  return p;
}

SimConfig config(double side, double t, InitialCondition init, std::uint64_t seed) {
  SimConfig c;
  c.side = side;
  c.end_time = t;
  c.initial = std::move(init);
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Simulator, EndTimeZeroKeepsInitialCondition) {
  const auto p = model(2, 1.0, RadialKernel::gaussian(0.5, 0.3, 1.0), 1.0);
  const auto tr = run(config(8.0, 0.0, InitialCondition::poisson(1.0), 3), p);
  EXPECT_TRUE(tr.events.empty());
  EXPECT_EQ(tr.final_state.positions, tr.initial.positions);
  EXPECT_GT(tr.initial.positions.size(), 0u);
}

TEST(Simulator, SingleParticleLifetimeIsExponential) {
  const double m = 1.3;
  const auto p = model(1, m, RadialKernel::zero(), 0.0);
  std::vector<double> life;
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const auto tr = run(config(4.0, 1e3, InitialCondition::explicit_points({Point{1.0, 0, 0}}), derive_seed(1, i)), p);
    ASSERT_EQ(tr.events.size(), 1u);
    EXPECT_EQ(tr.events[0].kind, EventKind::death);
    life.push_back(tr.events[0].time);
  }
  EXPECT_GT(oracle::ks_one_sample_pvalue(life, [m](double t) { return 1.0 - std::exp(-m * t); }), 0.01);
}

TEST(Simulator, PureFissionIncrementsByOne) {
  const auto p = model(2, 0.0, RadialKernel::zero(), 1.0);
  std::vector<Point> init;
  for (int i = 0; i < 5; ++i) init.push_back({1.0 + i, 2.0, 0.0});
  const auto tr = run(config(10.0, 1.5, InitialCondition::explicit_points(init), 9), p);
  ASSERT_FALSE(tr.events.empty());
  std::size_t n = 5;
  for (const auto& ev : tr.events) {
    EXPECT_EQ(ev.kind, EventKind::fission);
    EXPECT_EQ(ev.population, ++n);
  }
  EXPECT_EQ(tr.final_state.positions.size(), n);
}

TEST(Simulator, TwoParticleDeathProbability) {
  const double m = 0.4, b = 0.7, u = 0.5;
  const auto a = RadialKernel::gaussian(1.0, 0.5, 1.5);
  const auto p = model(1, m, a, b);
  const Point x0{2.0, 0, 0}, x1{2.0 + u, 0, 0};
  const double psi = 2 * (m + a(u)) + 2 * b;
  const double expect = (m + a(u)) / psi;
  const int trials = 40000;
  int first_dies = 0;
  for (int i = 0; i < trials; ++i) {
    auto c = config(6.0, 1e3, InitialCondition::explicit_points({x0, x1}), derive_seed(2, i));
    c.guard = 3;
    const auto tr = run(c, p);
    const auto& ev = tr.events.at(0);
    if (ev.kind == EventKind::death && ev.parent == x0) ++first_dies;
  }
  const double se = std::sqrt(expect * (1 - expect) / trials);
  EXPECT_NEAR(static_cast<double>(first_dies) / trials, expect, 4 * se);
}

TEST(Simulator, BranchingMean) {
  const auto p = model(1, 0.0, RadialKernel::zero(), 1.0);
  std::vector<Point> init;
  for (int i = 0; i < 10; ++i) init.push_back({5.0 * i, 0, 0});
  auto c = config(50.0, 1.0, InitialCondition::explicit_points(init), 17);
  c.record_events = false;
  const auto e = replicate(c, p, 10000);
  double s = 0, s2 = 0;
  for (const auto& r : e.runs) {
    const double n = static_cast<double>(r.final_state.positions.size());
    s += n;
    s2 += n * n;
  }
  const double k = static_cast<double>(e.size()), mean = s / k;
  const double se = std::sqrt((s2 / k - mean * mean) / (k - 1));
  EXPECT_NEAR(mean, 10 * std::numbers::e, 3 * se);
}

TEST(Simulator, PureDeathPoissonThinning) {
  const double kappa = 2.0, m = 1.0, side = 10.0, t = 1.0;
  const auto p = model(1, m, RadialKernel::zero(), 0.0);
  auto c = config(side, t, InitialCondition::poisson(kappa), 5);
  c.record_events = false;
  c.snapshot_times = {0.0, 0.5, 1.0};
  const auto e = replicate(c, p, 10000);
  for (std::size_t s = 0; s < c.snapshot_times.size(); ++s) {
    std::vector<std::size_t> counts;
    double sum = 0, sum2 = 0;
    for (const auto& r : e.runs) {
      counts.push_back(r.snapshots.at(s).positions.size());
      sum += static_cast<double>(counts.back());
      sum2 += static_cast<double>(counts.back() * counts.back());
    }
    const double k = static_cast<double>(counts.size()), mean = sum / k;
    const double se = std::sqrt((sum2 / k - mean * mean) / (k - 1)) / side;
    const double lam = kappa * std::exp(-m * c.snapshot_times[s]);
    EXPECT_NEAR(mean / side, lam, 3 * se);
    EXPECT_GT(oracle::poisson_chi2_pvalue(counts, lam * side), 0.01);
  }
}

TEST(Simulator, ReplicateDeterminism) {
  const auto p = model(2, 0.5, RadialKernel::gaussian(0.3, 0.3, 0.9), 0.6);
  auto c = config(6.0, 1.0, InitialCondition::poisson(1.0), 77);
  c.snapshot_times = {0.25, 0.5, 1.0};
  const auto one = replicate(c, p, 1);
  auto c0 = c;
  c0.seed = derive_seed(77, 0);
  const auto direct = run(c0, p);
  ASSERT_EQ(one.runs[0].events.size(), direct.events.size());
  for (std::size_t i = 0; i < direct.events.size(); ++i) {
    EXPECT_EQ(one.runs[0].events[i].time, direct.events[i].time);
    EXPECT_EQ(one.runs[0].events[i].parent, direct.events[i].parent);
  }
  const auto a = replicate(c, p, 40, 1), b = replicate(c, p, 40, 4);
  EXPECT_EQ(ensemble_summary(a).dump(), ensemble_summary(b).dump());
  EXPECT_EQ(ensemble_summary(a).dump(), ensemble_summary(replicate(c, p, 40, 3)).dump());
}

TEST(Simulator, PureDeathEnsembleIntensity) {
  const double kappa = 2.0, m = 1.0, side = 20.0;
  const auto p = model(1, m, RadialKernel::zero(), 0.0);
  auto c = config(side, 2.0, InitialCondition::poisson(kappa), 8);
  c.record_events = false;
  c.snapshot_times = {0.5, 1.0, 2.0};
  const auto j = ensemble_summary(replicate(c, p, 10000));
  for (std::size_t s = 0; s < 3; ++s) {
    const auto& row = j["snapshots"][s];
    const double mean = row["mean_count"].get<double>() / side;
    const double se = row["stderr_count"].get<double>() / side;
    EXPECT_NEAR(mean, kappa * std::exp(-m * c.snapshot_times[s]), 3 * se);
  }
}

TEST(Simulator, RateBookkeepingAndEventInvariants) {
  const auto p = model(2, 0.3, RadialKernel::gaussian(0.4, 0.3, 0.9), 0.8, 0.4);
  const TorusWindow w = make_window(p, 5.0);
  ContinuumModel sim(p, w);
  Rng rng(12);
  for (const auto& x : poisson_points(2.0, w, rng)) sim.configuration().insert(x);
  double t = 0.0, last = -1.0;
  std::size_t prev = sim.size();
  for (int step = 0; step < 2000 && sim.size() > 0; ++step) {
    t += 0.01;
    auto ev = sim.fire(t, rng);
    ASSERT_TRUE(ev);
    EXPECT_GT(ev->time, last);
    last = ev->time;
    const long diff = static_cast<long>(ev->population) - static_cast<long>(prev);
    EXPECT_EQ(diff, ev->kind == EventKind::fission ? 1 : -1);
    prev = ev->population;
    if (step % 50 == 0) {
      Configuration fresh(p, w);
      for (const auto& x : sim.configuration().positions()) fresh.insert(x);
      const double psi = fresh.energies().total;
      EXPECT_NEAR(sim.total_rate(), psi, 1e-9 * std::max(1.0, psi));
    }
  }
}

TEST(Simulator, GuardTripReturnsPartialTrajectory) {
  const auto p = model(1, 0.0, RadialKernel::zero(), 1.0);
  auto c = config(10.0, 100.0, InitialCondition::explicit_points({Point{1.0, 0, 0}}), 4);
  c.guard = 50;
  const auto tr = run(c, p);
  EXPECT_EQ(tr.status, RunStatus::guard_tripped);
  EXPECT_EQ(tr.final_state.positions.size(), 51u);
  EXPECT_LT(tr.stop_time, 100.0);
}

TEST(Simulator, SnapshotsAndCsv) {
  const auto p = model(2, 0.5, RadialKernel::gaussian(0.3, 0.3, 0.9), 0.6);
  auto c = config(6.0, 1.0, InitialCondition::poisson(1.0), 21);
  c.snapshot_times = {0.0, 0.3, 1.0};
  const auto tr = run(c, p);
  ASSERT_EQ(tr.snapshots.size(), 3u);
  EXPECT_EQ(tr.snapshots[0].positions, tr.initial.positions);
  EXPECT_EQ(tr.snapshots[2].positions, tr.final_state.positions);
  std::ostringstream ev, sn;
  write_events_csv(ev, tr);
  write_snapshots_csv(sn, tr);
  EXPECT_EQ(ev.str().rfind("t,kind,parent_x1,parent_x2,y1_x1,y1_x2,y2_x1,y2_x2,population\n", 0), 0u);
  EXPECT_EQ(sn.str().rfind("t,id,x1,x2\n", 0), 0u);
}

TEST(Simulator, ExtinctionStopsEarly) {
  const auto p = model(1, 5.0, RadialKernel::zero(), 0.0);
  auto c = config(4.0, 50.0, InitialCondition::explicit_points({Point{1.0, 0, 0}}), 1);
  c.snapshot_times = {40.0};
  const auto tr = run(c, p);
  EXPECT_EQ(tr.status, RunStatus::extinct);
  ASSERT_EQ(tr.snapshots.size(), 1u);
  EXPECT_TRUE(tr.snapshots[0].positions.empty());
}

TEST(Simulator, MollifiedFissionThinsEvents) {
  auto p = model(1, 0.0, RadialKernel::zero(), 1.0);
  p.fission = mollify(p.fission, 0.5);
  auto c = config(10.0, 2.0, InitialCondition::explicit_points({Point{5.0, 0, 0}, Point{9.5, 0, 0}}), 6);
  const auto tr = run(c, p);
  EXPECT_GT(tr.stats.null_events, 0u);
  for (const auto& x : tr.final_state.positions) EXPECT_TRUE(TorusWindow(10.0, 1, 0.0).contains(x));
}

TEST(Simulator, InvalidConfig) {
  const auto p = model(1, 1.0, RadialKernel::zero(), 0.0);
  auto c = config(4.0, -1.0, InitialCondition::poisson(1.0), 1);
  EXPECT_THROW(run(c, p), Error);
  c.end_time = 1.0;
  c.guard = 0;
  EXPECT_THROW(run(c, p), Error);
}

TEST(SiteSimulator, MatchesMasterEquationLaw) {
  const auto s = fixture::ring_space(5, 1.0, 0.2, 0.1, 0.15);
  const auto ss = enumerate_states(5, 6);
  const Multiset eta0{0, 2};
  const auto ev = evolve(point_mass(ss, eta0), build_generator(s, ss), 0.5);
  const auto law = count_marginal(ev.state, ss);
  const std::size_t n = 100000;
  const auto counts = replicate_site_counts(s, eta0, 0.5, 99, n);
  std::vector<double> freq(law.size() + 1, 0.0);
  for (auto c : counts) freq[std::min(c, law.size())] += 1.0 / static_cast<double>(n);
  double tv = 0.5 * freq.back();
  for (std::size_t k = 0; k < law.size(); ++k) tv += 0.5 * std::abs(freq[k] - law[k]);
  EXPECT_LT(tv, 0.02);
  // chi_m moments agree within 3 standard errors
  const auto mom = moments(ev.state, ss, 4);
  for (int m = 1; m <= 4; ++m) {
    double s1 = 0, s2 = 0;
    for (auto c : counts) {
      const double v = std::pow(1.0 + static_cast<double>(c), m);
      s1 += v;
      s2 += v * v;
    }
    const double k = static_cast<double>(n), mean = s1 / k;
    const double se = std::sqrt((s2 / k - mean * mean) / (k - 1));
    EXPECT_NEAR(mean, mom[static_cast<std::size_t>(m)], 3 * se + 1e-6) << m;
  }
}

TEST(SiteSimulator, RatesMatchDiscreteSpace) {
  const auto s = fixture::random_space(3, 4);
  const Multiset eta{0, 0, 1, 2, 2, 2};
  SiteModel sm(s, eta);
  EXPECT_NEAR(sm.total_rate(), s.psi(eta), 1e-12);
  EXPECT_EQ(sm.state(), eta);
}
