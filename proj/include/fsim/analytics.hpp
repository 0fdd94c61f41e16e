#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fsim/error.hpp"
#include "fsim/geometry.hpp"
#include "fsim/kernels.hpp"
#include "fsim/rng.hpp"

namespace fsim {

// ---------------------------------------------------------------- Lambert W

/// Principal branch W0 on [-1/e, inf) by Halley iteration. Initial guess:
/// the branch-point series in p = sqrt(2(ex+1)) for x < -0.25, the Winitzki
/// logarithmic form for x < 3, and L1 - L2 + L2/L1 beyond.
inline double lambert_w0(double x) {
  constexpr double inv_e = 1.0 / std::numbers::e;
  if (std::isnan(x)) throw Error(ErrorCode::OutOfDomain, "lambert_w0 of NaN");
  if (x < -inv_e) {
    if (x > -inv_e - 4.0 * std::numeric_limits<double>::epsilon()) return -1.0;
    throw Error(ErrorCode::OutOfDomain, "lambert_w0 requires x >= -1/e");
  }
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return x;
  double w;
  if (x < -0.25) {
    const double p = std::sqrt(std::max(0.0, 2.0 * (std::numbers::e * x + 1.0)));
    w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p;
  } else if (x < 3.0) {
    const double l = std::log1p(x);
    w = l * (1.0 - std::log1p(l) / (2.0 + l));
  } else {
    const double l1 = std::log(x), l2 = std::log(l1);
    w = l1 - l2 + l2 / l1;
  }
  for (int it = 0; it < 64; ++it) {
    const double ew = std::exp(w);
    const double f = w * ew - x;
    const double wp1 = w + 1.0;
    if (wp1 == 0.0) break;
    const double denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
    if (denom == 0.0 || !std::isfinite(denom)) break;
    const double step = f / denom;
    w -= step;
    if (std::abs(step) <= 4.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(w))) break;
  }
  return std::max(w, -1.0);
}

/// |W e^W - x| evaluated in extended precision.
inline double lambert_residual(double x, double w) {
  const long double lw = w;
  return static_cast<double>(std::abs(lw * std::exp(lw) - static_cast<long double>(x)));
}

// ---------------------------------------------------------------- constants

/// Scalar model constants entering the time bounds and the schedule.
struct ScaleConstants {
  double a_mass = 0.0;    // <a>
  double b_mass = 0.0;    // <b>
  double upsilon = 0.0;   // domination offset
  double beta_sup = 0.0;  // beta*
  double m_lower = 0.0;   // m_*
  double m_upper = 0.0;   // m*
  double a_sup = 0.0;     // a*
};

inline ScaleConstants scale_constants(const ModelConstants& c, double upsilon) {
  return {c.a_mass, c.b_mass, upsilon, c.beta_sup, c.m_lower, c.m_upper, c.a_sup};
}

inline void to_json(nlohmann::json& j, const ScaleConstants& c) {
  j = {{"a_mass", c.a_mass}, {"b_mass", c.b_mass}, {"upsilon", c.upsilon}, {"beta_sup", c.beta_sup},
       {"m_lower", c.m_lower}, {"m_upper", c.m_upper}, {"a_sup", c.a_sup}};
}

// ---------------------------------------------------------------- time bounds

/// T(a2, a1) = (a2 - a1) / (2<b> + upsilon + <a> e^{a2}).
inline double time_bound(const ScaleConstants& c, double alpha2, double alpha1) {
  if (!(alpha2 > alpha1)) throw Error(ErrorCode::BadOrdering, "time bound requires alpha2 > alpha1");
  return (alpha2 - alpha1) / (2.0 * c.b_mass + c.upsilon + c.a_mass * std::exp(alpha2));
}

/// varpi(alpha; B_upsilon) = 2<b> + upsilon + <a> e^alpha.
inline double varpi_b(const ScaleConstants& c, double alpha) {
  return 2.0 * c.b_mass + c.upsilon + c.a_mass * std::exp(alpha);
}

/// varpi(alpha; B_{2,upsilon}) = 2<b> + upsilon.
inline double varpi_b2(const ScaleConstants& c) { return 2.0 * c.b_mass + c.upsilon; }

/// delta(alpha) = 1 + W(((2<b> + upsilon)/<a>) e^{-alpha-1}); the maximiser
/// of a2 -> T(a2, alpha) is alpha + delta(alpha).
inline double optimal_gap(const ScaleConstants& c, double alpha) {
  if (!(c.a_mass > 0.0)) throw Error(ErrorCode::InvalidArgument, "<a> must be positive");
  return 1.0 + lambert_w0(varpi_b2(c) / c.a_mass * std::exp(-alpha - 1.0));
}

/// T_max(alpha) = e^{-alpha - delta(alpha)} / <a>.
inline double max_time_bound(const ScaleConstants& c, double alpha) {
  return std::exp(-alpha - optimal_gap(c, alpha)) / c.a_mass;
}

/// T(kappa, kappa') = ((kappa - kappa') / <b>) e^{-kappa}.
inline double moment_horizon(double b_mass, double kappa, double kappa_p) {
  if (!(kappa > kappa_p) || !(kappa_p > 0.0))
    throw Error(ErrorCode::BadOrdering, "moment horizon requires kappa > kappa' > 0");
  if (!(b_mass > 0.0)) return std::numeric_limits<double>::infinity();
  return (kappa - kappa_p) / b_mass * std::exp(-kappa);
}

struct TimeBoundReport {
  double alpha1 = 0.0, alpha2 = 0.0;
  double T = 0.0;
  double tau = 0.0;  // T / 3
  double varpi_b = 0.0, varpi_b2 = 0.0;
  double delta = 0.0;
  double T_max = 0.0;
  double kappa = 0.0, kappa_p = 0.0;
  double T_kappa = 0.0;
};

inline TimeBoundReport time_bounds(const ScaleConstants& c, double alpha1, double alpha2, double kappa,
                                   double kappa_p) {
  TimeBoundReport r;
  r.alpha1 = alpha1;
  r.alpha2 = alpha2;
  r.T = time_bound(c, alpha2, alpha1);
  r.tau = r.T / 3.0;
  r.varpi_b = varpi_b(c, alpha2);
  r.varpi_b2 = varpi_b2(c);
  r.delta = optimal_gap(c, alpha1);
  r.T_max = max_time_bound(c, alpha1);
  r.kappa = kappa;
  r.kappa_p = kappa_p;
  r.T_kappa = moment_horizon(c.b_mass, kappa, kappa_p);
  return r;
}

inline void to_json(nlohmann::json& j, const TimeBoundReport& r) {
  j = {{"alpha1", r.alpha1}, {"alpha2", r.alpha2}, {"T", r.T}, {"tau", r.tau},
       {"varpi_B", r.varpi_b}, {"varpi_B2", r.varpi_b2}, {"delta", r.delta}, {"T_max", r.T_max},
       {"kappa", r.kappa}, {"kappa_prime", r.kappa_p}, {"T_kappa", r.T_kappa}};
}

// ---------------------------------------------------------------- domination

/// Densest ball-packing fraction in R^d; 1 for d > 3 (an upper bound).
inline double packing_constant(int d) {
  switch (d) {
    case 1: return 1.0;
    case 2: return std::numbers::pi / std::sqrt(12.0);
    case 3: return std::numbers::pi / std::sqrt(18.0);
    default: return 1.0;
  }
}

/// g_d(h, r) = (Delta(d)/c_d) ((h + 2r)/(h r))^d with c_d the unit-ball volume.
inline double packing_factor(int d, double h, double r) {
  return packing_constant(d) / unit_ball_volume(d) * std::pow((h + 2.0 * r) / (h * r), d);
}

struct DominationPair {
  double omega = 0.0;
  double upsilon = 0.0;
};

struct DominationCertificate {
  int dim = 1;
  double epsilon = 0.0;
  double h = 0.0;            // cell side meeting the Riemann bound
  double r = 0.0;            // radius with a_r > 0
  double a_r = 0.0;          // inf of a over the ball of radius 2r
  double a_r_margin = 0.0;   // subtracted continuity margin (0: exact)
  double riemann_sum = 0.0;  // h^d sum_l beta_l
  double b_mass = 0.0;
  double beta_sup = 0.0;
  double packing = 0.0;  // g_d(h, r)
  double delta = 0.0;
  double omega = 0.0;
  double upsilon = 0.0;
  int h_halvings = 0;
  int r_halvings = 0;

  DominationPair pair() const { return {omega, upsilon}; }
};

inline void to_json(nlohmann::json& j, const DominationCertificate& c) {
  j = {{"dim", c.dim}, {"epsilon", c.epsilon}, {"h", c.h}, {"r", c.r}, {"a_r", c.a_r},
       {"a_r_margin", c.a_r_margin}, {"riemann_sum", c.riemann_sum}, {"b_mass", c.b_mass},
       {"beta_sup", c.beta_sup}, {"packing_constant", packing_constant(c.dim)},
       {"ball_volume", unit_ball_volume(c.dim)}, {"g_d", c.packing}, {"delta", c.delta},
       {"omega", c.omega}, {"upsilon", c.upsilon}, {"h_halvings", c.h_halvings},
       {"r_halvings", c.r_halvings}};
}

namespace detail {

/// h^d sum of beta suprema over the cubic cells [i h, (i+1) h) covering the
/// support of beta. Reflection symmetry reduces the sum to one orthant.
/// Returns nullopt when the grid would exceed `max_cells` cells.
inline std::optional<double> upper_riemann_sum(const FissionKernel& f, int d, double h,
                                               std::size_t max_cells = 200'000'000) {
  const double R = f.beta_support();
  const auto n = static_cast<std::size_t>(std::ceil(R / h)) + 1;
  double cells = 1.0;
  for (int k = 0; k < d; ++k) cells *= static_cast<double>(n);
  if (cells > static_cast<double>(max_cells)) return std::nullopt;
  const bool mono = f.beta_nonincreasing();
  auto sup_cell = [&](double lo2, double hi2) {
    const double lo = std::sqrt(lo2);
    if (lo > R) return 0.0;
    return mono ? f.beta(lo) : f.beta_sup_on_shell(lo, std::sqrt(hi2));
  };
  double total = 0.0;
  std::vector<std::size_t> idx(static_cast<std::size_t>(d), 0);
  while (true) {
    double lo2 = 0.0, hi2 = 0.0;
    for (int k = 0; k < d; ++k) {
      const double i = static_cast<double>(idx[static_cast<std::size_t>(k)]);
      lo2 += i * i;
      hi2 += (i + 1.0) * (i + 1.0);
    }
    total += sup_cell(lo2 * h * h, hi2 * h * h);
    int k = 0;
    for (; k < d; ++k) {
      auto& c = idx[static_cast<std::size_t>(k)];
      if (++c < n) break;
      c = 0;
    }
    if (k == d) break;
  }
  return std::pow(2.0, d) * std::pow(h, d) * total;
}

}  // namespace detail

/// Cell-decomposition construction of (omega, upsilon) with
/// upsilon |eta| + E^a(eta) >= omega E^b(eta). The radius is halved until
/// a_r > 0 and the cell side is halved until the upper Riemann sum of beta
/// is within <b> + eps; `omega` defaults to a_r / delta and upsilon = 2 delta omega.
inline DominationCertificate domination_certificate(const RadialKernel& a, const FissionKernel& f, int d,
                                                    double eps, double r, double h,
                                                    std::optional<double> omega = std::nullopt) {
  check_dimension(d);
  if (!(eps > 0.0) || !(r > 0.0) || !(h > 0.0))
    throw Error(ErrorCode::InvalidArgument, "eps, r and h must be positive");
  DominationCertificate c;
  c.dim = d;
  c.epsilon = eps;
  c.b_mass = f.total_mass();
  c.beta_sup = f.beta_sup();

  for (int k = 0; k <= 40; ++k, r *= 0.5) {
    const double ar = a.inf_on_ball(2.0 * r);
    if (ar > 0.0 && std::isfinite(ar)) {
      c.r = r;
      c.a_r = ar;
      c.r_halvings = k;
      break;
    }
  }
  if (!(c.a_r > 0.0)) throw Error(ErrorCode::NoAdmissibleR, "a vanishes on every probed ball K_{2r}(0)");

  if (!std::isfinite(c.beta_sup))
    throw Error(ErrorCode::RiemannBoundFailed, "beta is unbounded (singular dispersal)");
  const double support = f.beta_support();
  const double h_min = support > 0.0 ? support / 1024.0 : h;
  const double target = c.b_mass + eps;
  bool ok = false;
  for (int k = 0;; ++k, h *= 0.5) {
    const auto s = support > 0.0 && c.b_mass > 0.0 ? detail::upper_riemann_sum(f, d, h) : std::optional<double>(0.0);
    if (!s) break;
    if (*s <= target) {
      c.h = h;
      c.riemann_sum = *s;
      c.h_halvings = k;
      ok = true;
      break;
    }
    if (h * 0.5 < h_min) break;
  }
  if (!ok) throw Error(ErrorCode::RiemannBoundFailed, "upper Riemann sum of beta stays above <b> + eps");

  c.packing = packing_factor(d, c.h, c.r);
  c.delta = std::max(c.beta_sup, target * c.packing);
  const double omega_max = c.a_r / c.delta;
  c.omega = omega.value_or(omega_max);
  if (!(c.omega > 0.0) || c.omega > omega_max * (1.0 + 1e-15))
    throw Error(ErrorCode::BadOmega, "requested omega exceeds a_r / delta");
  c.upsilon = 2.0 * c.delta * c.omega;
  return c;
}

/// upsilon = upsilon0 omega / omega0 for 0 < omega <= omega0.
inline double rescale_upsilon(double omega0, double upsilon0, double omega) {
  if (!(omega > 0.0) || !(omega <= omega0)) throw Error(ErrorCode::BadOmega, "rescaling needs 0 < omega <= omega0");
  return upsilon0 * omega / omega0;
}

/// Phi_omega(eta) = sum_x sum_{y != x} [a(x - y) - omega beta(x - y)].
inline double phi_omega(const std::vector<Point>& eta, const RadialKernel& a, const FissionKernel& f, int d,
                        double omega) {
  double s = 0.0;
  for (std::size_t i = 0; i < eta.size(); ++i)
    for (std::size_t j = i + 1; j < eta.size(); ++j) {
      Point u{};
      for (int k = 0; k < d; ++k) u[k] = eta[i][k] - eta[j][k];
      const double dist = norm(u, d);
      s += 2.0 * (a(dist) - omega * f.beta(dist));
    }
  return s;
}

struct DominationReport {
  std::size_t samples = 0;
  std::size_t violations = 0;
  double min_ratio = std::numeric_limits<double>::infinity();  // min (Phi + upsilon |eta|)/|eta|
  bool passed() const { return violations == 0; }
};

inline void to_json(nlohmann::json& j, const DominationReport& r) {
  j = {{"samples", r.samples}, {"violations", r.violations},
       {"min_ratio", std::isfinite(r.min_ratio) ? nlohmann::json(r.min_ratio) : nlohmann::json(nullptr)},
       {"passed", r.passed()}};
}

inline DominationReport verify_domination(const DominationPair& pr, const RadialKernel& a, const FissionKernel& f,
                                          int d, const std::vector<std::vector<Point>>& samples) {
  DominationReport rep;
  for (const auto& eta : samples) {
    ++rep.samples;
    if (eta.empty()) continue;
    const double n = static_cast<double>(eta.size());
    const double u = phi_omega(eta, a, f, d, pr.omega) + pr.upsilon * n;
    rep.min_ratio = std::min(rep.min_ratio, u / n);
    if (u < 0.0) ++rep.violations;
  }
  return rep;
}

/// Poisson-sized uniform configurations in the cube [0, side)^d.
inline std::vector<std::vector<Point>> random_configurations(std::size_t count, double mean_size, double side, int d,
                                                             Rng& rng) {
  std::poisson_distribution<int> pois(mean_size);
  std::vector<std::vector<Point>> out(count);
  for (auto& eta : out) {
    eta.resize(static_cast<std::size_t>(pois(rng)));
    for (auto& x : eta)
      for (int k = 0; k < d; ++k) x[k] = side * uniform01(rng);
  }
  return out;
}

// ---------------------------------------------------------------- growth

struct GrowthEnvelope {
  double c = 0.0;          // <b> + upsilon - m_*
  bool invariant = false;  // m_* > <b>
  bool boundary_case = false;  // m_* == <b>: invariant under short dispersal only
  double alpha_t = 0.0;        // alpha0 + c t
  double kappa_t = 0.0;        // e^{alpha_t}
  double k0_norm = 1.0;

  /// r_t(n) = ||k_0|| e^{alpha_t n}.
  double envelope(std::size_t n) const { return k0_norm * std::exp(alpha_t * static_cast<double>(n)); }
};

inline void to_json(nlohmann::json& j, const GrowthEnvelope& g) {
  j = {{"c", g.c}, {"invariant", g.invariant}, {"boundary_case", g.boundary_case}, {"alpha_t", g.alpha_t},
       {"kappa_t", g.kappa_t}, {"k0_norm", g.k0_norm},
       {"envelope", "r_t(eta) = k0_norm * exp(alpha_t * |eta|)"}};
}

inline GrowthEnvelope growth_and_envelope(const ScaleConstants& p, double omega, double alpha0, double t,
                                          double k0_norm = 1.0) {
  if (!(omega > 0.0)) throw Error(ErrorCode::BadOmega, "omega must be positive");
  if (!(alpha0 > -std::log(omega)))
    throw Error(ErrorCode::AlphaTooSmall, "alpha0 must exceed -log omega = " + std::to_string(-std::log(omega)));
  GrowthEnvelope g;
  g.c = p.b_mass + p.upsilon - p.m_lower;
  g.invariant = p.m_lower > p.b_mass;
  g.boundary_case = p.m_lower == p.b_mass;
  g.alpha_t = alpha0 + g.c * t;
  g.kappa_t = std::exp(g.alpha_t);
  g.k0_norm = k0_norm;
  return g;
}

// ---------------------------------------------------------------- schedule

struct ScheduleStep {
  std::size_t n = 0;
  double T = 0.0;           // T_n
  double alpha_star = 0.0;  // alpha*_n
  double alpha = 0.0;       // alpha_n
  double covered = 0.0;     // T_1 + ... + T_n
};

struct Schedule {
  double alpha0 = 0.0;
  double c = 0.0;
  double horizon = 0.0;
  std::vector<ScheduleStep> steps;

  double covered() const { return steps.empty() ? 0.0 : steps.back().covered; }
};

/// T_n = T_max(a*_{n-1})/3, a*_n = a*_{n-1} + c T_n, a_n = a*_{n-1} + delta(a*_{n-1}),
/// with a*_0 = alpha0, until the partial sums reach `horizon`.
inline Schedule schedule(double alpha0, const ScaleConstants& p, double omega, double horizon,
                         std::size_t max_steps = 1'000'000) {
  if (!(horizon > 0.0)) throw Error(ErrorCode::InvalidArgument, "horizon must be positive");
  if (!(omega > 0.0)) throw Error(ErrorCode::BadOmega, "omega must be positive");
  if (!(alpha0 > -std::log(omega)))
    throw Error(ErrorCode::AlphaTooSmall, "alpha0 must exceed -log omega = " + std::to_string(-std::log(omega)));
  Schedule s;
  s.alpha0 = alpha0;
  s.c = p.b_mass + p.upsilon - p.m_lower;
  s.horizon = horizon;
  double prev = alpha0, sum = 0.0;
  while (sum < horizon) {
    if (s.steps.size() >= max_steps)
      throw Error(ErrorCode::HorizonNotReached,
                  "stopped after " + std::to_string(max_steps) + " steps covering " + std::to_string(sum) +
                      " of " + std::to_string(horizon) + " (alpha* = " + std::to_string(prev) + ")");
    ScheduleStep st;
    st.n = s.steps.size() + 1;
    st.T = max_time_bound(p, prev) / 3.0;
    st.alpha_star = prev + s.c * st.T;
    st.alpha = prev + optimal_gap(p, prev);
    if (!(st.alpha_star < st.alpha))
      throw Error(ErrorCode::InvalidArgument, "alpha*_n >= alpha_n at step " + std::to_string(st.n));
    const double next = sum + st.T;
    if (!(next > sum))
      throw Error(ErrorCode::HorizonNotReached, "partial sums stalled at " + std::to_string(sum));
    sum = next;
    st.covered = sum;
    prev = st.alpha_star;
    s.steps.push_back(st);
  }
  return s;
}

inline void to_json(nlohmann::json& j, const Schedule& s) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& st : s.steps)
    rows.push_back({{"n", st.n}, {"T", st.T}, {"alpha_star", st.alpha_star}, {"alpha", st.alpha},
                    {"covered", st.covered}});
  j = {{"alpha0", s.alpha0}, {"c", s.c}, {"horizon", s.horizon}, {"covered", s.covered()},
       {"count", s.steps.size()}, {"steps", rows}};
}

inline void write_schedule_csv(std::ostream& out, const Schedule& s) {
  out << "n,T_n,alpha_star_n,alpha_n,sum_T\n";
  out.precision(17);
  for (const auto& st : s.steps)
    out << st.n << ',' << st.T << ',' << st.alpha_star << ',' << st.alpha << ',' << st.covered << '\n';
}

// ---------------------------------------------------------------- regime

enum class DispersalRegime { short_range, long_range };

inline std::string_view to_string(DispersalRegime r) noexcept {
  return r == DispersalRegime::short_range ? "short" : "long";
}

struct RegimeReport {
  DispersalRegime regime = DispersalRegime::short_range;
  double omega = 0.0;    // min of a/beta over grid points with beta > 0
  double witness = 0.0;  // radius attaining the minimum
  std::size_t nodes = 0;
  std::string note = "grid heuristic: a >= omega beta checked on sampled radii only";
};

inline void to_json(nlohmann::json& j, const RegimeReport& r) {
  j = {{"regime", std::string(to_string(r.regime))},
       {"omega", std::isfinite(r.omega) ? nlohmann::json(r.omega) : nlohmann::json(nullptr)},
       {"witness", r.witness}, {"nodes", r.nodes}, {"note", r.note}};
}

/// Classifies a >= omega beta on an `nodes`-point radial grid over the
/// support of beta: short with the largest grid-certified omega, or long
/// with the radius where a/beta is smallest.
inline RegimeReport dispersal_regime(const RadialKernel& a, const FissionKernel& f, std::size_t nodes = 4097) {
  if (nodes < 2) throw Error(ErrorCode::InvalidArgument, "grid needs at least two nodes");
  RegimeReport rep;
  rep.nodes = nodes;
  rep.omega = std::numeric_limits<double>::infinity();
  const double R = f.beta_support();
  for (std::size_t i = 0; i < nodes; ++i) {
    const double u = R * static_cast<double>(i) / static_cast<double>(nodes - 1);
    const double b = f.beta(u);
    if (!(b > 0.0)) continue;
    const double ratio = std::isfinite(b) ? a(u) / b : 0.0;
    if (ratio < rep.omega) {
      rep.omega = ratio;
      rep.witness = u;
    }
  }
  rep.regime = rep.omega > 0.0 ? DispersalRegime::short_range : DispersalRegime::long_range;
  return rep;
}

// ---------------------------------------------------------------- norm bound

/// Operator-norm bound of L^Delta from K_{alpha'} to K_alpha:
/// 4 (m* + <b> + a* + beta* e^{-alpha'}) / (e^2 (alpha - alpha')^2)
///   + (<a> e^{alpha'} + 2 <b>) / (e (alpha - alpha')).
inline double l_delta_norm_bound(const ScaleConstants& c, double alpha, double alpha_p) {
  if (!(alpha > alpha_p)) throw Error(ErrorCode::BadOrdering, "norm bound requires alpha > alpha'");
  const double g = alpha - alpha_p;
  constexpr double e = std::numbers::e;
  return 4.0 * (c.m_upper + c.b_mass + c.a_sup + c.beta_sup * std::exp(-alpha_p)) / (e * e * g * g) +
         (c.a_mass * std::exp(alpha_p) + 2.0 * c.b_mass) / (e * g);
}

}  // namespace fsim
