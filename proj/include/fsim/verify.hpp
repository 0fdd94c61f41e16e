#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "fsim/analytics.hpp"
#include "fsim/gamma0.hpp"
#include "fsim/master_equation.hpp"
#include "fsim/simulator.hpp"

namespace fsim {

struct Check {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

inline void to_json(nlohmann::json& j, const Check& c) {
  j = {{"name", c.name}, {"value", c.value}, {"tolerance", c.tolerance}, {"passed", c.passed},
       {"detail", c.detail}, {"seconds", c.seconds}};
}

struct VerifyReport {
  std::string level;
  std::vector<Check> checks;

  bool passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return true;
  }
};

inline void to_json(nlohmann::json& j, const VerifyReport& r) {
  j = {{"level", r.level}, {"passed", r.passed()}, {"checks", r.checks}};
}

struct VerifyOptions {
  /// Applied to every generator before it is checked or integrated.
  std::function<void(GeneratorMatrix&)> generator_hook;
  std::size_t tv_replicas = 100000;
  std::size_t domination_samples = 10000;
  unsigned threads = 0;
};

namespace detail {

inline DiscreteSpace random_space(int sites, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, scale);
  DiscreteSpace s(sites);
  for (int x = 0; x < sites; ++x) {
    s.set_mortality(x, u(rng));
    for (int y = x; y < sites; ++y) s.set_competition(x, y, u(rng));
    for (int j = 0; j < sites; ++j)
      for (int k = j; k < sites; ++k) s.set_fission(x, j, k, u(rng) / (sites * sites));
  }
  return s;
}

inline Gamma0Function random_measure(int sites, int max_size, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Gamma0Function mu(sites, max_size);
  double total = 0.0;
  for (auto& v : mu.values()) total += (v = u(rng));
  mu *= 1.0 / total;
  return mu;
}

inline Gamma0Function random_function(int sites, int max_size, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Gamma0Function g(sites, max_size);
  for (auto& v : g.values()) v = u(rng);
  return g;
}

inline Check timed(const std::string& name, double tol, const std::function<std::pair<double, std::string>()>& f,
                   bool below_is_pass = true) {
  const auto start = std::chrono::steady_clock::now();
  Check c;
  c.name = name;
  c.tolerance = tol;
  auto [v, detail] = f();
  c.value = v;
  c.detail = std::move(detail);
  c.passed = below_is_pass ? (std::isfinite(v) && v < tol) : (std::isfinite(v) && v >= tol);
  c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return c;
}

}  // namespace detail

// ---------------------------------------------------------------- Gamma0 identities

/// Worst |<<L^Delta k_mu, e(theta)>> - sum (L F^theta) mu| over random
/// (model, mu, theta) at the given sites and cap.
inline Check check_duality(std::size_t trials = 100, int sites = 3, int n_max = 3, std::uint64_t seed = 1) {
  return detail::timed("duality L^Delta vs L", 1e-12, [&] {
    double worst = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
      Rng rng(derive_seed(seed, t));
      const auto s = detail::random_space(sites, derive_seed(seed + 1, t));
      const auto mu = detail::random_measure(sites, n_max, rng);
      std::vector<double> theta(static_cast<std::size_t>(sites));
      for (auto& v : theta) v = -0.999 * uniform01(rng);
      const auto k = correlation_of_measure(mu, n_max + 2);
      const auto lk = apply_l_delta(k, s, n_max + 1);
      const double lhs = pairing(lebesgue_poisson_exponential(theta, n_max + 1), lk);
      const auto lf = apply_generator(coherent_observable(theta, n_max + 1), s, n_max);
      double rhs = 0.0;
      for (std::size_t i = 0; i < mu.size(); ++i) rhs += lf[i] * mu[i];
      worst = std::max(worst, std::abs(lhs - rhs));
    }
    return std::pair{worst, std::to_string(trials) + " random (mu, theta) at M=" + std::to_string(sites) +
                                ", N=" + std::to_string(n_max)};
  });
}

/// sum_{eta <= gamma} prod g = (1 + g(x)) sum_{eta <= gamma - x} prod g,
/// exhaustively over |gamma| <= max_size.
inline Check check_product_identity(int sites = 3, int max_size = 6, std::uint64_t seed = 2) {
  return detail::timed("K-transform product splitting", 1e-12, [&] {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    double worst = 0.0;
    std::size_t cases = 0;
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<double> gv(static_cast<std::size_t>(sites));
      for (auto& v : gv) v = u(rng);
      const auto g = Gamma0Function::from(sites, max_size, [&](const Multiset& e) {
        double p = 1.0;
        for (int x : e) p *= gv[static_cast<std::size_t>(x)];
        return p;
      });
      const MultisetIndex all(sites, max_size);
      for (const auto& gamma : all.states())
        for (std::size_t p = 0; p < gamma.size(); ++p) {
          const double lhs = k_transform(g, gamma);
          const double rhs = (1.0 + gv[static_cast<std::size_t>(gamma[p])]) * k_transform(g, without_particle(gamma, p));
          worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
          ++cases;
        }
    }
    return std::pair{worst, std::to_string(cases) + " cases, |gamma| <= " + std::to_string(max_size)};
  });
}

/// Lebesgue-Poisson splitting of a three-argument function, for every
/// cap 0..n_max.
inline Check check_lp_splitting(int sites = 3, int n_max = 5, std::uint64_t seed = 3) {
  return detail::timed("Lebesgue-Poisson splitting", 1e-12, [&] {
    double worst = 0.0;
    for (int cap = 0; cap <= n_max; ++cap) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(cap)));
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      std::map<std::tuple<Multiset, Multiset, Multiset>, double> table;
      auto G = [&](const Multiset& a, const Multiset& b, const Multiset& c) {
        auto [it, fresh] = table.try_emplace({a, b, c}, 0.0);
        if (fresh) it->second = u(rng);
        return it->second;
      };
      const MultisetIndex idx(sites, cap);
      double lhs = 0.0;
      for (const auto& eta : idx.states()) {
        const std::size_t n = eta.size();
        double inner = 0.0;
        for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
          Multiset xi, rest;
          for (std::size_t b = 0; b < n; ++b) ((mask >> b) & 1 ? xi : rest).push_back(eta[b]);
          inner += G(xi, eta, rest);
        }
        lhs += lp_weight(eta) * inner;
      }
      double rhs = 0.0;
      for (const auto& xi : idx.states())
        for (const auto& eta : idx.states()) {
          if (static_cast<int>(xi.size() + eta.size()) > cap) continue;
          rhs += lp_weight(xi) * lp_weight(eta) * G(xi, merge(eta, xi), eta);
        }
      worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
    }
    return std::pair{worst, "caps 0.." + std::to_string(n_max)};
  });
}

/// sum_gamma (KG)(gamma) mu(gamma) = <<G, k_mu>>.
inline Check check_pairing(int sites = 3, int n_max = 5, std::uint64_t seed = 4) {
  return detail::timed("pairing with correlation function", 1e-12, [&] {
    double worst = 0.0;
    for (int cap = 1; cap <= n_max; ++cap) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(cap)));
      const auto mu = detail::random_measure(sites, cap, rng);
      const auto k = correlation_of_measure(mu);
      for (int ng = 0; ng <= cap; ++ng) {
        const auto g = detail::random_function(sites, ng, rng);
        double lhs = 0.0;
        for (std::size_t i = 0; i < mu.size(); ++i) lhs += k_transform(g, mu.state(i)) * mu[i];
        worst = std::max(worst, std::abs(lhs - pairing(g, k)));
      }
    }
    return std::pair{worst, "caps 1.." + std::to_string(n_max)};
  });
}

/// |KG(gamma)| <= C_G (1 + |gamma cap Lambda|)^{N_G} for G supported on
/// a region Lambda; reports the worst excess (<= 0 passes).
inline Check check_k_bound(int max_size = 6, std::uint64_t seed = 5) {
  Check c = detail::timed("K-transform growth bound", 1e-12, [&] {
    Rng rng(seed);
    const int m = 4;
    const std::vector<bool> lambda{true, false, true, false};
    double worst = -std::numeric_limits<double>::infinity();
    for (int ng = 0; ng <= 3; ++ng) {
      auto g = detail::random_function(m, ng, rng);
      double cg = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        bool inside = true;
        for (int x : g.state(i)) inside = inside && lambda[static_cast<std::size_t>(x)];
        if (!inside) g[i] = 0.0;
        cg = std::max(cg, std::abs(g[i]));
      }
      const MultisetIndex all(m, max_size);
      for (const auto& gamma : all.states()) {
        int local = 0;
        for (int x : gamma) local += lambda[static_cast<std::size_t>(x)];
        worst = std::max(worst, std::abs(k_transform(g, gamma)) - cg * std::pow(1.0 + local, ng));
      }
    }
    return std::pair{worst, "excess over the bound, |gamma| <= " + std::to_string(max_size)};
  });
  return c;
}

// ---------------------------------------------------------------- master equation

/// Largest |column sum|; the detail names the worst column.
inline Check check_generator_columns(const GeneratorMatrix& q, const StateSpace& ss) {
  return detail::timed("generator column sums", 1e-12, [&] {
    double worst = 0.0;
    std::size_t at = 0;
    for (std::size_t j = 0; j < q.size(); ++j) {
      const double s = std::abs(q.column_sum(j));
      if (s > worst) {
        worst = s;
        at = j;
      }
    }
    std::string state = ss.is_sink(at) ? "sink" : "{";
    if (!ss.is_sink(at)) {
      for (std::size_t i = 0; i < ss.state(at).size(); ++i) state += (i ? "," : "") + std::to_string(ss.state(at)[i]);
      state += "}";
    }
    return std::pair{worst, "column-sum diagnostic: worst column " + std::to_string(at) + " (state " + state +
                                ") sums to " + std::to_string(worst)};
  });
}

inline DiscreteSpace verification_ring() { return ring_space(5, 1.0, 0.2, 0.1, 0.15); }

/// Mass conservation and leak over t = 1 on the ring model, M = 5, N = 6.
inline std::vector<Check> check_master(const VerifyOptions& opt) {
  const auto s = verification_ring();
  const auto ss = enumerate_states(5, 6);
  auto q = build_generator(s, ss);
  if (opt.generator_hook) opt.generator_hook(q);
  std::vector<Check> out;
  out.push_back(check_generator_columns(q, ss));
  Evolution ev;
  out.push_back(detail::timed("master equation mass conservation", 1e-9, [&] {
    ev = evolve(point_mass(ss, {0}), q, 1.0);
    return std::pair{std::abs(ev.state.total() - 1.0), "|total - 1| at t = 1, M=5, N=6"};
  }));
  out.push_back(detail::timed("master equation truncation leak", 1e-6,
                              [&] { return std::pair{ev.leak, "sink mass at t = 1"}; }));
  out.push_back(detail::timed("master equation positivity", 1e-12, [&] {
    return std::pair{std::max(0.0, -ev.audit.most_negative), "most negative entry before clipping"};
  }));
  return out;
}

/// Total variation between site-simulator counts and the master-equation
/// law of N_t at t = 0.5.
inline Check check_tv(const VerifyOptions& opt) {
  return detail::timed("simulator vs master equation TV", 0.02, [&] {
    const auto s = verification_ring();
    const auto ss = enumerate_states(5, 6);
    auto q = build_generator(s, ss);
    if (opt.generator_hook) opt.generator_hook(q);
    const Multiset eta0{0, 2};
    const auto law = count_marginal(evolve(point_mass(ss, eta0), q, 0.5).state, ss);
    const auto counts = replicate_site_counts(s, eta0, 0.5, 99, opt.tv_replicas, opt.threads);
    std::vector<double> freq(law.size() + 1, 0.0);
    for (auto c : counts) freq[std::min(c, law.size())] += 1.0 / static_cast<double>(counts.size());
    double tv = 0.5 * freq.back();
    for (std::size_t k = 0; k < law.size(); ++k) tv += 0.5 * std::abs(freq[k] - law[k]);
    return std::pair{tv, std::to_string(opt.tv_replicas) + " replicas, t = 0.5"};
  });
}

// ---------------------------------------------------------------- analytics

inline Check check_lambert(std::size_t points = 1000) {
  return detail::timed("Lambert W residual", 1e-12, [&] {
    double worst = 0.0;
    const double lo = -std::exp(-1.0);
    for (std::size_t i = 0; i < points; ++i) {
      const double u = static_cast<double>(i) / static_cast<double>(points - 1);
      // half the points on the branch interval, half log-spaced to 1e6
      const double x = i < points / 2 ? lo + (0.0 - lo) * (2.0 * u) : std::pow(10.0, -6.0 + 12.0 * (2.0 * u - 1.0));
      worst = std::max(worst, lambert_residual(x, lambert_w0(x)) / std::max(1.0, std::abs(x)));
    }
    return std::pair{worst, std::to_string(points) + " points on [-1/e, 1e6], relative to max(1, |x|)"};
  });
}

/// Closed-form maximum of T(., alpha1) against a golden-section search.
inline Check check_tmax(std::size_t sets = 20, std::uint64_t seed = 6) {
  return detail::timed("T_max vs numerical argmax", 1e-6, [&] {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0.1, 3.0), al(-2.0, 2.0);
    double worst = 0.0;
    for (std::size_t i = 0; i < sets; ++i) {
      ScaleConstants c;
      c.a_mass = u(rng);
      c.b_mass = u(rng);
      c.upsilon = u(rng);
      const double a1 = al(rng);
      auto f = [&](double a2) { return time_bound(c, a2, a1); };
      const double g = (std::sqrt(5.0) - 1.0) / 2.0;
      double a = a1 + 1e-12, b = a1 + 30.0, x = b - g * (b - a), y = a + g * (b - a);
      for (int it = 0; it < 200; ++it) {
        if (f(x) > f(y)) b = y; else a = x;
        x = b - g * (b - a);
        y = a + g * (b - a);
      }
      worst = std::max(worst, std::abs(f(0.5 * (a + b)) - max_time_bound(c, a1)));
    }
    return std::pair{worst, std::to_string(sets) + " parameter sets"};
  });
}

/// Recursion identities, coverage and monotonicity for random c >= 0.
inline Check check_schedule(std::size_t sets = 10, std::uint64_t seed = 7) {
  return detail::timed("continuation schedule", 1.0, [&] {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0.2, 2.0);
    std::size_t bad = 0;
    for (std::size_t i = 0; i < sets; ++i) {
      ScaleConstants p;
      p.a_mass = u(rng);
      p.b_mass = u(rng);
      p.upsilon = u(rng);
      // every other set sits at c = 0; sum T_n grows like log(n) / c, so c stays small
      const double c = i % 2 == 0 ? 0.0 : 0.5 * uniform01(rng);
      p.m_lower = p.b_mass + p.upsilon - c;
      const double omega = 0.5, alpha0 = -std::log(omega) + 0.1;
      const auto s = schedule(alpha0, p, omega, 5.0);
      double prev = alpha0, sum = 0.0;
      for (std::size_t n = 0; n < s.steps.size(); ++n) {
        const auto& st = s.steps[n];
        const double T = max_time_bound(p, prev) / 3.0;
        sum += T;
        if (st.T != T || st.alpha_star != prev + s.c * T || st.alpha != prev + optimal_gap(p, prev) ||
            st.covered != sum)
          ++bad;
        if (s.c > 0.0 && n > 0 && !(st.T < s.steps[n - 1].T && st.alpha_star > s.steps[n - 1].alpha_star)) ++bad;
        prev = st.alpha_star;
      }
      if (!(s.covered() >= 5.0)) ++bad;
    }
    return std::pair{static_cast<double>(bad), std::to_string(sets) + " parameter sets, horizon 5; value counts failures"};
  });
}

/// Certificate on the reference Gaussian model, checked on random
/// configurations at the certified and at a rescaled omega.
inline std::vector<Check> check_domination(const VerifyOptions& opt) {
  std::vector<Check> out;
  for (int d = 1; d <= 2; ++d) {
    const auto a = RadialKernel::gaussian(1.0, 0.5, 1.5);
    const auto f = FissionKernel::factorized(0.8, RadialKernel::gaussian(1.0, 0.4, 1.2), d);
    DominationCertificate c;
    try {
      c = domination_certificate(a, f, d, 0.2, 0.4, 0.5);
    } catch (const Error& e) {
      Check fail;
      fail.name = "domination certificate d=" + std::to_string(d);
      fail.value = 1.0;
      fail.detail = e.what();
      out.push_back(fail);
      continue;
    }
    Rng rng(derive_seed(11, static_cast<std::uint64_t>(d)));
    const auto samples = random_configurations(opt.domination_samples, 30.0, d == 1 ? 6.0 : 3.0, d, rng);
    out.push_back(detail::timed("domination certificate d=" + std::to_string(d), 1.0, [&] {
      const auto rep = verify_domination(c.pair(), a, f, d, samples);
      return std::pair{static_cast<double>(rep.violations),
                       "violations in " + std::to_string(samples.size()) + " configurations, omega = " +
                           std::to_string(c.omega)};
    }));
    out.push_back(detail::timed("rescaled certificate d=" + std::to_string(d), 1.0, [&] {
      const double w = c.omega / 4;
      const auto rep = verify_domination({w, rescale_upsilon(c.omega, c.upsilon, w)}, a, f, d, samples);
      return std::pair{static_cast<double>(rep.violations), "violations at omega / 4"};
    }));
  }
  return out;
}

// ---------------------------------------------------------------- suites

/// quick: identities, master-equation conservation, analytics and the
/// domination Monte Carlo. full: adds the simulator TV comparison.
inline VerifyReport run_verify(const std::string& level, const VerifyOptions& opt = {}) {
  if (level != "quick" && level != "full") throw Error(ErrorCode::InvalidArgument, "level must be quick or full");
  VerifyReport r;
  r.level = level;
  r.checks.push_back(check_duality());
  r.checks.push_back(check_product_identity());
  r.checks.push_back(check_lp_splitting());
  r.checks.push_back(check_pairing());
  r.checks.push_back(check_k_bound());
  for (auto& c : check_master(opt)) r.checks.push_back(std::move(c));
  r.checks.push_back(check_lambert());
  r.checks.push_back(check_tmax());
  r.checks.push_back(check_schedule());
  for (auto& c : check_domination(opt)) r.checks.push_back(std::move(c));
  if (level == "full") r.checks.push_back(check_tv(opt));
  return r;
}

}  // namespace fsim
