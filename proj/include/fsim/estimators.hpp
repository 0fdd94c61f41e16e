#pragma once

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fsim/error.hpp"
#include "fsim/geometry.hpp"
#include "fsim/rng.hpp"
#include "fsim/simulator.hpp"

namespace fsim {

/// Point patterns from independent replicas observed at one time.
struct PointSample {
  int dim = 1;
  double side = 1.0;
  double time = 0.0;
  std::vector<std::vector<Point>> configs;

  std::size_t replicas() const noexcept { return configs.size(); }
};

inline PointSample snapshot_sample(const Ensemble& e, std::size_t snapshot) {
  if (snapshot >= e.snapshot_times.size()) throw Error(ErrorCode::MissingData, "no such snapshot");
  PointSample s{e.dim, e.side, e.snapshot_times[snapshot], {}};
  s.configs.reserve(e.size());
  for (const auto& r : e.runs) {
    if (snapshot >= r.snapshots.size()) throw Error(ErrorCode::MissingData, "replica lacks the snapshot");
    s.configs.push_back(r.snapshots[snapshot].positions);
  }
  return s;
}

inline PointSample final_sample(const Ensemble& e) {
  PointSample s{e.dim, e.side, 0.0, {}};
  for (const auto& r : e.runs) {
    s.configs.push_back(r.final_state.positions);
    s.time = r.final_state.time;
  }
  return s;
}

/// Axis-aligned box [lo, hi) in the first d coordinates.
struct Box {
  Point lo{};
  Point hi{};

  static Box cube(double a, double b, int d) {
    Box x;
    for (int k = 0; k < d; ++k) {
      x.lo[k] = a;
      x.hi[k] = b;
    }
    return x;
  }

  double volume(int d) const {
    double v = 1.0;
    for (int k = 0; k < d; ++k) v *= std::max(0.0, hi[k] - lo[k]);
    return v;
  }

  bool contains(const Point& x, int d) const noexcept {
    for (int k = 0; k < d; ++k)
      if (!(x[k] >= lo[k] && x[k] < hi[k])) return false;
    return true;
  }
};

inline void check_box(const Box& b, const PointSample& s) {
  if (!(b.volume(s.dim) > 0.0)) throw Error(ErrorCode::EmptyWindow, "estimation window has zero volume");
  for (int k = 0; k < s.dim; ++k)
    if (b.lo[k] < 0.0 || b.hi[k] > s.side) throw Error(ErrorCode::EmptyWindow, "estimation window leaves the torus");
}

/// Per-replica observations keyed by replica index. Merging is a union and
/// every reduction runs in index order, so any grouping of partial tallies
/// gives bitwise-identical results.
template <class Obs>
struct Tally {
  std::map<std::size_t, Obs> obs;

  void add(std::size_t i, Obs o) {
    if (!obs.emplace(i, std::move(o)).second) throw Error(ErrorCode::InvalidArgument, "replica tallied twice");
  }
  Tally& merge(const Tally& other) {
    for (const auto& [i, o] : other.obs) add(i, o);
    return *this;
  }
  std::size_t size() const noexcept { return obs.size(); }
};

struct MeanEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

template <class Range, class F>
MeanEstimate mean_and_stderr(const Range& obs, F&& value) {
  double s = 0.0, s2 = 0.0;
  std::size_t n = 0;
  for (const auto& [i, o] : obs) {
    const double v = value(o);
    s += v;
    s2 += v * v;
    ++n;
  }
  if (n == 0) return {};
  const double k = static_cast<double>(n), mean = s / k;
  const double var = n > 1 ? std::max(0.0, (s2 - k * mean * mean) / (k - 1.0)) : 0.0;
  return {mean, std::sqrt(var / k)};
}

inline std::size_t count_in(const std::vector<Point>& eta, const Box& b, int d) {
  std::size_t n = 0;
  for (const auto& x : eta) n += b.contains(x, d);
  return n;
}

// ---------------------------------------------------------------- intensity

struct IntensityEstimate {
  double value = 0.0;
  double std_error = 0.0;
  double volume = 0.0;
  std::size_t replicas = 0;
};

inline void to_json(nlohmann::json& j, const IntensityEstimate& e) {
  j = {{"intensity", e.value}, {"stderr", e.std_error}, {"volume", e.volume}, {"replicas", e.replicas}};
}

inline Tally<std::size_t> intensity_tally(const PointSample& s, const Box& b, std::size_t first = 0,
                                          std::size_t last = static_cast<std::size_t>(-1)) {
  check_box(b, s);
  Tally<std::size_t> t;
  for (std::size_t i = first; i < std::min(last, s.replicas()); ++i) t.add(i, count_in(s.configs[i], b, s.dim));
  return t;
}

inline IntensityEstimate finish_intensity(const Tally<std::size_t>& t, double volume) {
  const auto m = mean_and_stderr(t.obs, [](std::size_t n) { return static_cast<double>(n); });
  return {m.mean / volume, m.std_error / volume, volume, t.size()};
}

/// Mean count in the box over replicas divided by its volume.
inline IntensityEstimate intensity(const PointSample& s, const Box& b) {
  return finish_intensity(intensity_tally(s, b), b.volume(s.dim));
}

// ---------------------------------------------------------------- pair correlation

struct PairCorrelationEstimate {
  std::vector<double> edges;   // bin edges, size bins + 1
  std::vector<double> k2;      // per bin
  std::vector<double> std_error;  // per bin
  double k1 = 0.0;
  double k1_stderr = 0.0;
  double inner_volume = 0.0;
  std::size_t replicas = 0;
};

inline void to_json(nlohmann::json& j, const PairCorrelationEstimate& e) {
  j = {{"edges", e.edges}, {"k2", e.k2}, {"stderr", e.std_error}, {"k1", e.k1}, {"k1_stderr", e.k1_stderr},
       {"inner_volume", e.inner_volume}, {"replicas", e.replicas}};
}

inline void write_pair_correlation_csv(std::ostream& out, const PairCorrelationEstimate& e) {
  out << "r,k2,stderr\n";
  out.precision(17);
  for (std::size_t b = 0; b < e.k2.size(); ++b)
    out << 0.5 * (e.edges[b] + e.edges[b + 1]) << ',' << e.k2[b] << ',' << e.std_error[b] << '\n';
}

inline double shell_volume(int d, double r0, double r1) {
  return unit_ball_volume(d) * (std::pow(r1, d) - std::pow(r0, d));
}

struct PairObs {
  std::size_t inner = 0;            // points of the inner window
  std::vector<std::size_t> counts;  // ordered pairs per bin
};

/// Ordered pairs (x, y) with x in the inner window [margin, L - margin)^d
/// and |x - y| in each bin; margin >= the largest edge keeps every such y
/// inside the box without wrapping.
inline Tally<PairObs> pair_tally(const PointSample& s, const std::vector<double>& edges, double margin,
                                 std::size_t first = 0, std::size_t last = static_cast<std::size_t>(-1)) {
  if (edges.size() < 2 || !std::is_sorted(edges.begin(), edges.end()) || edges.front() < 0.0)
    throw Error(ErrorCode::InvalidArgument, "bin edges must be sorted, nonnegative, at least two");
  if (margin < edges.back()) throw Error(ErrorCode::InvalidArgument, "minus-sampling margin below the largest edge");
  const Box inner = Box::cube(margin, s.side - margin, s.dim);
  if (!(inner.volume(s.dim) > 0.0)) throw Error(ErrorCode::EmptyWindow, "margin leaves no inner window");
  const std::size_t bins = edges.size() - 1;
  Tally<PairObs> t;
  for (std::size_t i = first; i < std::min(last, s.replicas()); ++i) {
    const auto& eta = s.configs[i];
    PairObs o;
    o.counts.assign(bins, 0);
    for (std::size_t a = 0; a < eta.size(); ++a) {
      if (!inner.contains(eta[a], s.dim)) continue;
      ++o.inner;
      for (std::size_t b = 0; b < eta.size(); ++b) {
        if (a == b) continue;
        const double r = norm(eta[b] - eta[a], s.dim);
        if (r < edges.front() || r >= edges.back()) continue;
        const auto it = std::upper_bound(edges.begin(), edges.end(), r);
        ++o.counts[static_cast<std::size_t>(it - edges.begin()) - 1];
      }
    }
    t.add(i, std::move(o));
  }
  return t;
}

inline PairCorrelationEstimate finish_pair_correlation(const Tally<PairObs>& t, const std::vector<double>& edges,
                                                       int d, double inner_volume) {
  PairCorrelationEstimate e;
  e.edges = edges;
  e.inner_volume = inner_volume;
  e.replicas = t.size();
  const std::size_t bins = edges.size() - 1;
  for (std::size_t b = 0; b < bins; ++b) {
    const double norm_b = inner_volume * shell_volume(d, edges[b], edges[b + 1]);
    const auto m = mean_and_stderr(t.obs, [b](const PairObs& o) { return static_cast<double>(o.counts[b]); });
    e.k2.push_back(m.mean / norm_b);
    e.std_error.push_back(m.std_error / norm_b);
  }
  const auto m1 = mean_and_stderr(t.obs, [](const PairObs& o) { return static_cast<double>(o.inner); });
  e.k1 = m1.mean / inner_volume;
  e.k1_stderr = m1.std_error / inner_volume;
  return e;
}

/// k^(2) on radial bins by minus-sampling; `margin` defaults to the largest edge.
inline PairCorrelationEstimate pair_correlation(const PointSample& s, const std::vector<double>& edges,
                                                std::optional<double> margin = std::nullopt) {
  const bool any_pair =
      std::any_of(s.configs.begin(), s.configs.end(), [](const auto& eta) { return eta.size() >= 2; });
  if (!any_pair) throw Error(ErrorCode::NoPairs, "no replica holds two particles");
  const double mg = margin.value_or(edges.empty() ? 0.0 : edges.back());
  const auto t = pair_tally(s, edges, mg);
  return finish_pair_correlation(t, edges, s.dim, Box::cube(mg, s.side - mg, s.dim).volume(s.dim));
}

inline std::vector<double> uniform_edges(double r_max, std::size_t bins) {
  std::vector<double> e(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) e[i] = r_max * static_cast<double>(i) / static_cast<double>(bins);
  return e;
}

// ---------------------------------------------------------------- factorial moments

struct FactorialMomentReport {
  Box window;
  double volume = 0.0;
  std::size_t replicas = 0;
  std::vector<double> moments;  // orders 1..m_max
  std::vector<double> std_error;
  std::vector<double> poisson;       // (kappa |Lambda|)^m
  std::optional<double> envelope;    // kappa-hat
  std::vector<double> envelope_ref;  // (kappa-hat |Lambda|)^m
  std::vector<bool> violations;      // moment - z se > envelope_ref
  double z = 3.0;

  bool any_violation() const { return std::find(violations.begin(), violations.end(), true) != violations.end(); }
};

inline void to_json(nlohmann::json& j, const FactorialMomentReport& r) {
  j = {{"volume", r.volume}, {"replicas", r.replicas}, {"moments", r.moments}, {"stderr", r.std_error},
       {"poisson", r.poisson}, {"z", r.z}, {"violations", r.violations}};
  j["envelope_kappa"] = r.envelope ? nlohmann::json(*r.envelope) : nlohmann::json(nullptr);
  j["envelope_ref"] = r.envelope_ref;
}

inline double falling_factorial(std::size_t n, int m) {
  double v = 1.0;
  for (int k = 0; k < m; ++k) v *= static_cast<double>(n) - k;
  return std::max(v, 0.0);
}

/// E[N(N-1)...(N-m+1)] for N the count in the box, m = 1..m_max, with the
/// Poisson reference at `kappa` and optional envelope flags at `envelope`.
inline FactorialMomentReport factorial_moments(const PointSample& s, const Box& b, int m_max, double kappa,
                                               std::optional<double> envelope = std::nullopt, double z = 3.0) {
  if (m_max < 1) throw Error(ErrorCode::InvalidArgument, "m_max must be >= 1");
  const auto t = intensity_tally(s, b);
  FactorialMomentReport r;
  r.window = b;
  r.volume = b.volume(s.dim);
  r.replicas = t.size();
  r.envelope = envelope;
  r.z = z;
  for (int m = 1; m <= m_max; ++m) {
    const auto e = mean_and_stderr(t.obs, [m](std::size_t n) { return falling_factorial(n, m); });
    r.moments.push_back(e.mean);
    r.std_error.push_back(e.std_error);
    r.poisson.push_back(std::pow(kappa * r.volume, m));
    if (envelope) {
      r.envelope_ref.push_back(std::pow(*envelope * r.volume, m));
      r.violations.push_back(e.mean - z * e.std_error > r.envelope_ref.back());
    }
  }
  return r;
}

// ---------------------------------------------------------------- theta / functional

/// Compactly supported theta with values in (-1, 0]: a constant on a box or
/// a smooth bump depth (1 - |x - c|^2 / R^2)^2 inside the ball B(c, R).
class ThetaFunction {
 public:
  enum class Kind { zero, box, bump };

  static ThetaFunction zero() { return ThetaFunction(); }

  static ThetaFunction box(double value, const Box& support) {
    if (!(value > -1.0 && value <= 0.0)) throw Error(ErrorCode::InvalidArgument, "theta must lie in (-1, 0]");
    ThetaFunction t;
    t.kind_ = Kind::box;
    t.value_ = value;
    t.box_ = support;
    return t;
  }

  static ThetaFunction bump(double depth, const Point& center, double radius) {
    if (!(depth > -1.0 && depth <= 0.0)) throw Error(ErrorCode::InvalidArgument, "theta must lie in (-1, 0]");
    if (!(radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "bump radius must be positive");
    ThetaFunction t;
    t.kind_ = Kind::bump;
    t.value_ = depth;
    t.center_ = center;
    t.radius_ = radius;
    return t;
  }

  Kind kind() const noexcept { return kind_; }
  double depth() const noexcept { return value_; }

  double operator()(const Point& x, int d) const noexcept {
    switch (kind_) {
      case Kind::zero: return 0.0;
      case Kind::box: return box_.contains(x, d) ? value_ : 0.0;
      case Kind::bump: {
        const double q = squared_norm(x - center_, d) / (radius_ * radius_);
        return q < 1.0 ? value_ * (1.0 - q) * (1.0 - q) : 0.0;
      }
    }
    return 0.0;
  }

  /// Bounding box of the support.
  Box support(int d) const {
    if (kind_ == Kind::box) return box_;
    Box b;
    for (int k = 0; k < d; ++k) {
      b.lo[k] = center_[k] - radius_;
      b.hi[k] = center_[k] + radius_;
    }
    return b;
  }

  /// Range and support check at `n` random points of an enlarged support box.
  bool check(int d, std::size_t n, Rng& rng) const {
    if (kind_ == Kind::zero) return true;
    const Box s = support(d);
    for (std::size_t i = 0; i < n; ++i) {
      Point x{};
      for (int k = 0; k < d; ++k) {
        const double w = s.hi[k] - s.lo[k];
        x[k] = s.lo[k] - 0.5 * w + 2.0 * w * uniform01(rng);
      }
      const double v = (*this)(x, d);
      if (!(v > -1.0 && v <= 0.0)) return false;
      if (v != 0.0 && !s.contains(x, d)) return false;
    }
    return true;
  }

  static ThetaFunction from_json(const nlohmann::json& j, int d) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "zero") return zero();
    auto point = [d](const nlohmann::json& a) {
      Point p{};
      if (!a.is_array() || static_cast<int>(a.size()) != d)
        throw Error(ErrorCode::ConfigInvalid, "theta coordinates must have the model dimension");
      for (int k = 0; k < d; ++k) p[k] = a[static_cast<std::size_t>(k)].get<double>();
      return p;
    };
    if (kind == "box") {
      Box b;
      b.lo = point(j.at("lo"));
      b.hi = point(j.at("hi"));
      return box(j.at("value").get<double>(), b);
    }
    if (kind == "bump") return bump(j.at("depth").get<double>(), point(j.at("center")), j.at("radius").get<double>());
    throw Error(ErrorCode::ConfigInvalid, "unknown theta kind '" + kind + "'");
  }

 private:
  Kind kind_ = Kind::zero;
  double value_ = 0.0;
  Box box_;
  Point center_{};
  double radius_ = 1.0;
};

struct FunctionalObs {
  double product = 1.0;  // prod (1 + theta(x))
  double linear = 0.0;   // sum theta(x)
  double pair = 0.0;     // sum_{x != y} theta(x) theta(y)
};

struct BogoliubovEstimate {
  double value = 1.0;
  double std_error = 0.0;
  double truncated = 1.0;  // 1 + int k1 theta + (1/2) int int k2 theta theta
  double truncated_stderr = 0.0;
  std::size_t replicas = 0;
};

inline void to_json(nlohmann::json& j, const BogoliubovEstimate& e) {
  j = {{"value", e.value}, {"stderr", e.std_error}, {"truncated_order2", e.truncated},
       {"truncated_stderr", e.truncated_stderr}, {"replicas", e.replicas}};
}

inline Tally<FunctionalObs> functional_tally(const PointSample& s, const ThetaFunction& th, std::size_t first = 0,
                                             std::size_t last = static_cast<std::size_t>(-1)) {
  Tally<FunctionalObs> t;
  for (std::size_t i = first; i < std::min(last, s.replicas()); ++i) {
    FunctionalObs o;
    double sq = 0.0;
    for (const auto& x : s.configs[i]) {
      const double v = th(x, s.dim);
      o.product *= 1.0 + v;
      o.linear += v;
      sq += v * v;
    }
    o.pair = o.linear * o.linear - sq;
    t.add(i, o);
  }
  return t;
}

inline BogoliubovEstimate finish_functional(const Tally<FunctionalObs>& t) {
  BogoliubovEstimate e;
  e.replicas = t.size();
  if (t.size() == 0) return e;
  const auto f = mean_and_stderr(t.obs, [](const FunctionalObs& o) { return o.product; });
  const auto tr = mean_and_stderr(t.obs, [](const FunctionalObs& o) { return 1.0 + o.linear + 0.5 * o.pair; });
  e.value = f.mean;
  e.std_error = f.std_error;
  e.truncated = tr.mean;
  e.truncated_stderr = tr.std_error;
  return e;
}

/// Replica average of F^theta(gamma) = prod (1 + theta(x)) with its
/// order-2 truncation.
inline BogoliubovEstimate bogoliubov_functional(const PointSample& s, const ThetaFunction& th) {
  return finish_functional(functional_tally(s, th));
}

// ---------------------------------------------------------------- Poisson fit

struct GoodnessOfFit {
  double statistic = 0.0;
  std::size_t dof = 0;
  double p_value = 1.0;
  std::size_t classes = 0;
};

inline void to_json(nlohmann::json& j, const GoodnessOfFit& g) {
  j = {{"statistic", g.statistic}, {"dof", g.dof}, {"p_value", g.p_value}, {"classes", g.classes}};
}

/// Pearson chi-square of counts against Poisson(mean); classes are merged
/// left to right until each expects at least `min_expected`.
inline GoodnessOfFit poisson_count_gof(const std::vector<std::size_t>& counts, double mean,
                                       double min_expected = 5.0) {
  GoodnessOfFit g;
  if (counts.empty() || !(mean > 0.0)) return g;
  const std::size_t top = *std::max_element(counts.begin(), counts.end());
  std::vector<double> obs(top + 1, 0.0);
  for (auto c : counts) obs[c] += 1.0;
  const double n = static_cast<double>(counts.size());
  std::vector<double> expected(top + 1);
  double logp = -mean, tail = 1.0;
  for (std::size_t k = 0; k <= top; ++k) {
    const double p = std::exp(logp);
    expected[k] = n * p;
    tail -= p;
    logp += std::log(mean) - std::log(static_cast<double>(k + 1));
  }
  expected[top] += n * std::max(tail, 0.0);
  std::vector<std::pair<double, double>> cls;
  double eo = 0.0, ee = 0.0;
  for (std::size_t k = 0; k <= top; ++k) {
    eo += obs[k];
    ee += expected[k];
    if (ee >= min_expected) {
      cls.emplace_back(eo, ee);
      eo = ee = 0.0;
    }
  }
  if (ee > 0.0 || eo > 0.0) {
    if (cls.empty()) cls.emplace_back(eo, ee);
    else {
      cls.back().first += eo;
      cls.back().second += ee;
    }
  }
  g.classes = cls.size();
  if (cls.size() < 2) return g;
  for (const auto& [o, e] : cls) g.statistic += (o - e) * (o - e) / e;
  g.dof = cls.size() - 1;
  boost::math::chi_squared dist(static_cast<double>(g.dof));
  g.p_value = boost::math::cdf(boost::math::complement(dist, g.statistic));
  return g;
}

inline std::vector<std::size_t> window_counts(const PointSample& s, const Box& b) {
  check_box(b, s);
  std::vector<std::size_t> c;
  c.reserve(s.replicas());
  for (const auto& eta : s.configs) c.push_back(count_in(eta, b, s.dim));
  return c;
}

}  // namespace fsim
