#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "fsim/error.hpp"

namespace fsim {

/// Finite configuration over sites 0..M-1 with repetitions, stored as a
/// sorted list of site indices (one entry per particle).
using Multiset = std::vector<int>;

inline Multiset with_site(Multiset eta, int site) {
  eta.insert(std::upper_bound(eta.begin(), eta.end(), site), site);
  return eta;
}

/// eta with the particle at position i removed.
inline Multiset without_particle(Multiset eta, std::size_t i) {
  eta.erase(eta.begin() + static_cast<std::ptrdiff_t>(i));
  return eta;
}

inline Multiset merge(const Multiset& a, const Multiset& b) {
  Multiset out;
  out.reserve(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

inline std::vector<int> occupation(const Multiset& eta, int sites) {
  std::vector<int> n(static_cast<std::size_t>(sites), 0);
  for (int s : eta) ++n[static_cast<std::size_t>(s)];
  return n;
}

inline double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

inline double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return std::round(r);
}

/// Lebesgue-Poisson weight 1 / prod n_s! of a multiset; summing w(eta) G(eta)
/// over multisets equals the ordered-tuple series with 1/n! prefactors.
inline double lp_weight(const Multiset& eta) {
  double w = 1.0;
  std::size_t i = 0;
  while (i < eta.size()) {
    std::size_t j = i;
    while (j < eta.size() && eta[j] == eta[i]) ++j;
    w /= factorial(static_cast<int>(j - i));
    i = j;
  }
  return w;
}

/// Enumeration of all multisets of size <= N over M sites, ordered by size
/// and then lexicographically.
class MultisetIndex {
 public:
  static constexpr std::size_t default_limit = 1000000;

  MultisetIndex(int sites, int max_size, std::size_t limit = default_limit) : sites_(sites), max_size_(max_size) {
    if (sites < 1) throw Error(ErrorCode::InvalidArgument, "need at least one site");
    if (max_size < 0) throw Error(ErrorCode::InvalidArgument, "negative size cap");
    const double n = count(sites, max_size);
    if (n > static_cast<double>(limit))
      throw Error(ErrorCode::SizeOverflow, std::to_string(n) + " states exceed the limit " + std::to_string(limit));
    offsets_.push_back(0);
    Multiset cur;
    for (int size = 0; size <= max_size; ++size) {
      cur.assign(static_cast<std::size_t>(size), 0);
      for (;;) {
        lookup_.emplace(cur, states_.size());
        states_.push_back(cur);
        // next nondecreasing sequence
        int k = size - 1;
        while (k >= 0 && cur[static_cast<std::size_t>(k)] == sites - 1) --k;
        if (k < 0) break;
        const int v = cur[static_cast<std::size_t>(k)] + 1;
        for (int j = k; j < size; ++j) cur[static_cast<std::size_t>(j)] = v;
      }
      offsets_.push_back(states_.size());
    }
  }

  /// Number of multisets of size <= N over M sites.
  static double count(int sites, int max_size) {
    double c = 0.0;
    for (int n = 0; n <= max_size; ++n) c += binomial(sites + n - 1, n);
    return c;
  }

  int sites() const noexcept { return sites_; }
  int max_size() const noexcept { return max_size_; }
  std::size_t size() const noexcept { return states_.size(); }
  const Multiset& at(std::size_t i) const { return states_.at(i); }
  const std::vector<Multiset>& states() const noexcept { return states_; }

  /// Index range [begin, end) of multisets with exactly n particles.
  std::size_t begin_of_size(int n) const { return offsets_.at(static_cast<std::size_t>(n)); }
  std::size_t end_of_size(int n) const { return offsets_.at(static_cast<std::size_t>(n) + 1); }

  bool contains(const Multiset& eta) const { return lookup_.count(eta) != 0; }

  std::size_t index(const Multiset& eta) const {
    const auto it = lookup_.find(eta);
    if (it == lookup_.end()) {
      if (static_cast<int>(eta.size()) > max_size_)
        throw Error(ErrorCode::TruncationOverflow, "multiset of size " + std::to_string(eta.size()) +
                                                       " beyond the cap " + std::to_string(max_size_));
      throw Error(ErrorCode::BadIndex, "multiset has a site outside 0.." + std::to_string(sites_ - 1));
    }
    return it->second;
  }

 private:
  int sites_;
  int max_size_;
  std::vector<Multiset> states_;
  std::vector<std::size_t> offsets_;
  std::map<Multiset, std::size_t> lookup_;
};

/// Site-lattice surrogate of (m, a, b): integrals over R^d become sums over
/// sites. b(x | j, k) is stored per ordered offspring pair and must be
/// symmetric in (j, k); its row mass sum_{j,k} b(x|j,k) is <b>_x.
class DiscreteSpace {
 public:
  explicit DiscreteSpace(int sites)
      : sites_(sites),
        m_(static_cast<std::size_t>(sites), 0.0),
        a_(static_cast<std::size_t>(sites * sites), 0.0),
        b_(static_cast<std::size_t>(sites * sites * sites), 0.0) {
    if (sites < 1) throw Error(ErrorCode::InvalidArgument, "need at least one site");
  }

  int sites() const noexcept { return sites_; }

  double mortality(int x) const { return m_[static_cast<std::size_t>(x)]; }
  double competition(int x, int y) const { return a_[idx(x, y)]; }
  double fission(int x, int j, int k) const { return b_[idx(x, j, k)]; }

  void set_mortality(int x, double v) { m_.at(static_cast<std::size_t>(x)) = v; }
  /// Sets a(x,y) = a(y,x) = v.
  void set_competition(int x, int y, double v) {
    a_.at(idx(x, y)) = v;
    a_.at(idx(y, x)) = v;
  }
  /// Sets b(x|j,k) = b(x|k,j) = v.
  void set_fission(int x, int j, int k, double v) {
    b_.at(idx(x, j, k)) = v;
    b_.at(idx(x, k, j)) = v;
  }

  double row_mass(int x) const {
    double s = 0.0;
    for (int j = 0; j < sites_; ++j)
      for (int k = 0; k < sites_; ++k) s += fission(x, j, k);
    return s;
  }

  /// beta(j, k) = sum_x b(x | j, k).
  double beta(int j, int k) const {
    double s = 0.0;
    for (int x = 0; x < sites_; ++x) s += fission(x, j, k);
    return s;
  }

  double max_row_mass() const {
    double best = 0.0;
    for (int x = 0; x < sites_; ++x) best = std::max(best, row_mass(x));
    return best;
  }

  /// E^a(x, eta) = sum_{y in eta} a(x, y).
  double competition_from(int x, const Multiset& eta) const {
    double s = 0.0;
    for (int y : eta) s += competition(x, y);
    return s;
  }

  /// Death rate of the particle at position i of eta.
  double death_rate(const Multiset& eta, std::size_t i) const {
    const int x = eta[i];
    return mortality(x) + competition_from(x, eta) - competition(x, x);
  }

  double mortality_total(const Multiset& eta) const {
    double s = 0.0;
    for (int x : eta) s += mortality(x);
    return s;
  }

  /// E^a(eta) as an ordered pair sum over distinct particles.
  double competition_total(const Multiset& eta) const {
    double s = 0.0;
    for (std::size_t i = 0; i < eta.size(); ++i) s += death_rate(eta, i) - mortality(eta[i]);
    return s;
  }

  double fission_total(const Multiset& eta) const {
    double s = 0.0;
    for (int x : eta) s += row_mass(x);
    return s;
  }

  /// Psi(eta) = M(eta) + E^a(eta) + sum_x <b>_x.
  double psi(const Multiset& eta) const {
    double s = 0.0;
    for (std::size_t i = 0; i < eta.size(); ++i) s += death_rate(eta, i) + row_mass(eta[i]);
    return s;
  }

  /// Throws InvalidArgument unless a is symmetric, everything is finite and
  /// nonnegative, and b is symmetric in the offspring pair.
  void validate() const {
    for (double v : m_)
      if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorCode::NegativeKernel, "mortality must be finite and >= 0");
    for (int x = 0; x < sites_; ++x)
      for (int y = 0; y < sites_; ++y) {
        const double v = competition(x, y);
        if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorCode::NegativeKernel, "competition must be >= 0");
        if (v != competition(y, x)) throw Error(ErrorCode::InvalidArgument, "competition matrix not symmetric");
        for (int k = 0; k < sites_; ++k) {
          const double b = fission(x, y, k);
          if (!(b >= 0.0) || !std::isfinite(b)) throw Error(ErrorCode::NegativeKernel, "fission must be >= 0");
          if (b != fission(x, k, y)) throw Error(ErrorCode::InvalidArgument, "fission tensor not symmetric");
        }
      }
  }

 private:
  std::size_t idx(int x, int y) const {
    check(x);
    check(y);
    return static_cast<std::size_t>(x * sites_ + y);
  }
  std::size_t idx(int x, int j, int k) const {
    check(x);
    check(j);
    check(k);
    return static_cast<std::size_t>((x * sites_ + j) * sites_ + k);
  }
  void check(int s) const {
    if (s < 0 || s >= sites_) throw Error(ErrorCode::BadIndex, "site " + std::to_string(s) + " out of range");
  }

  int sites_;
  std::vector<double> m_;
  std::vector<double> a_;
  std::vector<double> b_;
};

/// Ring of sites with nearest-neighbour competition and factorized fission
/// dispersing offspring to {x-1, x, x+1} with weights (1/4, 1/2, 1/4).
inline DiscreteSpace ring_space(int sites, double m, double a_self, double a_near, double b_mass) {
  DiscreteSpace s(sites);
  auto wrap = [&](int x) { return ((x % sites) + sites) % sites; };
  std::vector<double> q(static_cast<std::size_t>(sites), 0.0);
  for (int x = 0; x < sites; ++x) {
    s.set_mortality(x, m);
    s.set_competition(x, x, a_self);
    if (sites > 1) s.set_competition(x, wrap(x + 1), a_near);
    std::fill(q.begin(), q.end(), 0.0);
    q[static_cast<std::size_t>(wrap(x - 1))] += 0.25;
    q[static_cast<std::size_t>(x)] += 0.5;
    q[static_cast<std::size_t>(wrap(x + 1))] += 0.25;
    for (int j = 0; j < sites; ++j)
      for (int k = j; k < sites; ++k)
        s.set_fission(x, j, k, b_mass * q[static_cast<std::size_t>(j)] * q[static_cast<std::size_t>(k)]);
  }
  return s;
}

}  // namespace fsim
