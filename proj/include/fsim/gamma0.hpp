#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "fsim/discrete_space.hpp"
#include "fsim/error.hpp"

namespace fsim {

/// Real function on multisets of size <= max_size over a finite site set.
///
/// Functions of bounded support (G, densities R, measures) are read as zero
/// above max_size. Correlation functions k are only known up to max_size,
/// so operators that need k above it throw TruncationOverflow.
class Gamma0Function {
 public:
  Gamma0Function(int sites, int max_size)
      : index_(std::make_shared<MultisetIndex>(sites, max_size)), values_(index_->size(), 0.0) {}

  explicit Gamma0Function(std::shared_ptr<const MultisetIndex> index)
      : index_(std::move(index)), values_(index_->size(), 0.0) {}

  template <class F>
  static Gamma0Function from(int sites, int max_size, F&& f) {
    Gamma0Function g(sites, max_size);
    for (std::size_t i = 0; i < g.size(); ++i) g.values_[i] = f(g.state(i));
    return g;
  }

  int sites() const noexcept { return index_->sites(); }
  int max_size() const noexcept { return index_->max_size(); }
  std::size_t size() const noexcept { return values_.size(); }
  const MultisetIndex& index() const noexcept { return *index_; }
  const std::shared_ptr<const MultisetIndex>& shared_index() const noexcept { return index_; }
  const Multiset& state(std::size_t i) const { return index_->at(i); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  /// Value at eta; TruncationOverflow above max_size.
  double operator()(const Multiset& eta) const { return values_[index_->index(eta)]; }
  double& at(const Multiset& eta) { return values_[index_->index(eta)]; }

  /// Value at eta with the bounded-support convention (zero above max_size).
  double value_or_zero(const Multiset& eta) const {
    if (static_cast<int>(eta.size()) > max_size()) return 0.0;
    return (*this)(eta);
  }

  /// Same function on a different size cap: truncated, or padded with zeros.
  Gamma0Function resized(int max_size) const {
    Gamma0Function g(sites(), max_size);
    for (std::size_t i = 0; i < g.size(); ++i) g.values_[i] = value_or_zero(g.state(i));
    return g;
  }

  Gamma0Function& operator*=(double c) {
    for (double& v : values_) v *= c;
    return *this;
  }

  nlohmann::json to_json() const {
    nlohmann::json entries = nlohmann::json::array();
    for (std::size_t i = 0; i < size(); ++i) entries.push_back({{"state", state(i)}, {"value", values_[i]}});
    return {{"sites", sites()}, {"max_size", max_size()}, {"values", entries}};
  }

  static Gamma0Function from_json(const nlohmann::json& j) {
    Gamma0Function g(j.at("sites").get<int>(), j.at("max_size").get<int>());
    for (const auto& e : j.at("values")) g.at(e.at("state").get<Multiset>()) = e.at("value").get<double>();
    return g;
  }

 private:
  std::shared_ptr<const MultisetIndex> index_;
  std::vector<double> values_;
};

namespace detail {

inline void require_same_sites(const Gamma0Function& f, int sites) {
  if (f.sites() != sites) throw Error(ErrorCode::InvalidArgument, "site counts differ");
}

inline void require_cap(const Gamma0Function& f, int needed, const char* what) {
  if (f.max_size() < needed)
    throw Error(ErrorCode::TruncationOverflow, std::string(what) + " needs values up to size " +
                                                   std::to_string(needed) + ", have " + std::to_string(f.max_size()));
}

// Calls f(xi, multiplicity) for every sub-multiset xi of gamma, where the
// multiplicity counts the labeled sub-configurations prod C(n_s, l_s).
template <class F>
void for_each_submultiset(const Multiset& gamma, F&& f) {
  std::vector<std::pair<int, int>> groups;  // (site, count)
  for (int s : gamma) {
    if (groups.empty() || groups.back().first != s) groups.emplace_back(s, 0);
    ++groups.back().second;
  }
  std::vector<int> take(groups.size(), 0);
  Multiset xi;
  for (;;) {
    xi.clear();
    double mult = 1.0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      xi.insert(xi.end(), static_cast<std::size_t>(take[g]), groups[g].first);
      mult *= binomial(groups[g].second, take[g]);
    }
    f(static_cast<const Multiset&>(xi), mult);
    std::size_t g = 0;
    while (g < groups.size() && take[g] == groups[g].second) take[g++] = 0;
    if (g == groups.size()) break;
    ++take[g];
  }
}

}  // namespace detail

/// sum_eta w(eta) G(eta) over |eta| <= n_max.
inline double lp_sum(const Gamma0Function& g, int n_max) {
  detail::require_cap(g, n_max, "lp_sum");
  double s = 0.0;
  for (std::size_t i = 0; i < g.index().end_of_size(n_max); ++i) s += lp_weight(g.state(i)) * g[i];
  return s;
}

inline double lp_sum(const Gamma0Function& g) { return lp_sum(g, g.max_size()); }

/// <<G, k>> = sum_eta w(eta) G(eta) k(eta), with G of bounded support.
inline double pairing(const Gamma0Function& g, const Gamma0Function& k) {
  detail::require_same_sites(k, g.sites());
  detail::require_cap(k, g.max_size(), "pairing");
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) s += lp_weight(g.state(i)) * g[i] * k(g.state(i));
  return s;
}

/// (KG)(gamma) = sum over sub-configurations of gamma. Repeated sites count
/// as distinct particles.
inline double k_transform(const Gamma0Function& g, const Multiset& gamma) {
  double s = 0.0;
  detail::for_each_submultiset(gamma, [&](const Multiset& xi, double mult) { s += mult * g.value_or_zero(xi); });
  return s;
}

/// KG tabulated on every multiset of size <= n.
inline Gamma0Function k_transform(const Gamma0Function& g, int n) {
  Gamma0Function out(g.sites(), n);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = k_transform(g, out.state(i));
  return out;
}

/// G with KG = H on the domain of H.
inline Gamma0Function inverse_k_transform(const Gamma0Function& h) {
  Gamma0Function out(h.shared_index());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Multiset& eta = out.state(i);
    double s = 0.0;
    detail::for_each_submultiset(eta, [&](const Multiset& xi, double mult) {
      const bool odd = (eta.size() - xi.size()) % 2 == 1;
      s += (odd ? -mult : mult) * h(xi);
    });
    out[i] = s;
  }
  return out;
}

/// R = mu / w for a measure given by its point masses.
inline Gamma0Function density_of_measure(const Gamma0Function& mu) {
  Gamma0Function r(mu.shared_index());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = mu[i] / lp_weight(mu.state(i));
  return r;
}

inline Gamma0Function measure_of_density(const Gamma0Function& r) {
  Gamma0Function mu(r.shared_index());
  for (std::size_t i = 0; i < mu.size(); ++i) mu[i] = r[i] * lp_weight(r.state(i));
  return mu;
}

/// k(eta) = sum_xi w(xi) R(eta + xi), R of bounded support; tabulated up to
/// `max_size` (default: the support of R; entries above it are zero).
inline Gamma0Function correlation_from_density(const Gamma0Function& r, int max_size = -1) {
  if (max_size < 0) max_size = r.max_size();
  Gamma0Function k(r.sites(), max_size);
  const int n_r = r.max_size();
  for (std::size_t i = 0; i < k.size(); ++i) {
    const Multiset& eta = k.state(i);
    const int room = n_r - static_cast<int>(eta.size());
    if (room < 0) continue;
    double s = 0.0;
    for (std::size_t j = 0; j < r.index().end_of_size(room); ++j) {
      const Multiset& xi = r.state(j);
      s += lp_weight(xi) * r(merge(eta, xi));
    }
    k[i] = s;
  }
  return k;
}

/// Inverse of correlation_from_density: R(eta) = sum_xi w(xi) (-1)^|xi| k(eta + xi),
/// with k read as zero above its cap.
inline Gamma0Function density_from_correlation(const Gamma0Function& k) {
  Gamma0Function r(k.shared_index());
  const int n_k = k.max_size();
  for (std::size_t i = 0; i < r.size(); ++i) {
    const Multiset& eta = r.state(i);
    const int room = n_k - static_cast<int>(eta.size());
    double s = 0.0;
    for (std::size_t j = 0; j < k.index().end_of_size(room); ++j) {
      const Multiset& xi = k.state(j);
      const double term = lp_weight(xi) * k(merge(eta, xi));
      s += xi.size() % 2 == 1 ? -term : term;
    }
    r[i] = s;
  }
  return r;
}

/// k_mu for a finitely supported measure mu (point masses per multiset).
inline Gamma0Function correlation_of_measure(const Gamma0Function& mu, int max_size = -1) {
  return correlation_from_density(density_of_measure(mu), max_size);
}

/// e(theta; eta) = prod theta(x).
inline Gamma0Function lebesgue_poisson_exponential(const std::vector<double>& theta, int max_size) {
  return Gamma0Function::from(static_cast<int>(theta.size()), max_size, [&](const Multiset& eta) {
    double p = 1.0;
    for (int x : eta) p *= theta[static_cast<std::size_t>(x)];
    return p;
  });
}

/// F^theta(gamma) = prod (1 + theta(x)).
inline Gamma0Function coherent_observable(const std::vector<double>& theta, int max_size) {
  return Gamma0Function::from(static_cast<int>(theta.size()), max_size, [&](const Multiset& eta) {
    double p = 1.0;
    for (int x : eta) p *= 1.0 + theta[static_cast<std::size_t>(x)];
    return p;
  });
}

/// (LF)(gamma) on |gamma| <= out_max; F must be known up to out_max + 1.
inline Gamma0Function apply_generator(const Gamma0Function& f, const DiscreteSpace& s, int out_max = -1) {
  detail::require_same_sites(f, s.sites());
  if (out_max < 0) out_max = f.max_size() - 1;
  if (out_max < 0) throw Error(ErrorCode::TruncationOverflow, "generator needs F beyond size 0");
  detail::require_cap(f, out_max + 1, "apply_generator");
  const int m = s.sites();
  Gamma0Function out(m, out_max);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Multiset& g = out.state(i);
    const double fg = f(g);
    double r = 0.0;
    for (std::size_t p = 0; p < g.size(); ++p) {
      const Multiset rest = without_particle(g, p);
      r += s.death_rate(g, p) * (f(rest) - fg);
      const int x = g[p];
      for (int j = 0; j < m; ++j)
        for (int k = 0; k < m; ++k) {
          const double b = s.fission(x, j, k);
          if (b != 0.0) r += b * (f(with_site(with_site(rest, j), k)) - fg);
        }
    }
    out[i] = r;
  }
  return out;
}

/// Forward (Fokker-Planck) action on a finitely supported measure mu; the
/// result lives on sizes <= mu.max_size() + 1 and satisfies
/// sum (LF) mu = sum F (L* mu).
inline Gamma0Function apply_fokker_planck(const Gamma0Function& mu, const DiscreteSpace& s) {
  detail::require_same_sites(mu, s.sites());
  const int m = s.sites();
  Gamma0Function out(m, mu.max_size() + 1);
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double w = mu[i];
    if (w == 0.0) continue;
    const Multiset& g = mu.state(i);
    out.at(g) -= s.psi(g) * w;
    for (std::size_t p = 0; p < g.size(); ++p) {
      const Multiset rest = without_particle(g, p);
      out.at(rest) += s.death_rate(g, p) * w;
      const int x = g[p];
      for (int j = 0; j < m; ++j)
        for (int k = 0; k < m; ++k) {
          const double b = s.fission(x, j, k);
          if (b != 0.0) out.at(with_site(with_site(rest, j), k)) += b * w;
        }
    }
  }
  return out;
}

/// The four parts of (L^Delta k)(eta).
struct LDeltaTerms {
  double a1 = 0.0;  // -Psi(eta) k(eta)
  double a2 = 0.0;  // fission merging two particles of eta into a parent
  double b1 = 0.0;  // competition from a particle outside eta
  double b2 = 0.0;  // fission with one offspring in eta
  double total() const noexcept { return a1 + a2 + b1 + b2; }
};

inline LDeltaTerms l_delta_terms(const Gamma0Function& k, const DiscreteSpace& s, const Multiset& eta) {
  detail::require_same_sites(k, s.sites());
  detail::require_cap(k, static_cast<int>(eta.size()) + 1, "apply_l_delta");
  const int m = s.sites();
  const std::size_t n = eta.size();
  LDeltaTerms t;
  t.a1 = -s.psi(eta) * k(eta);
  for (int x = 0; x < m; ++x) {
    for (std::size_t i1 = 0; i1 < n; ++i1)
      for (std::size_t i2 = 0; i2 < n; ++i2) {
        if (i1 == i2) continue;
        const double b = s.fission(x, eta[i1], eta[i2]);
        if (b == 0.0) continue;
        Multiset rest = without_particle(eta, std::max(i1, i2));
        rest = without_particle(rest, std::min(i1, i2));
        t.a2 += b * k(with_site(rest, x));
      }
    t.b1 -= k(with_site(eta, x)) * s.competition_from(x, eta);
    for (std::size_t i1 = 0; i1 < n; ++i1) {
      double mass = 0.0;
      for (int y2 = 0; y2 < m; ++y2) mass += s.fission(x, eta[i1], y2);
      if (mass != 0.0) t.b2 += 2.0 * mass * k(with_site(without_particle(eta, i1), x));
    }
  }
  return t;
}

/// L^Delta k on sizes <= out_max (default k.max_size() - 1).
inline Gamma0Function apply_l_delta(const Gamma0Function& k, const DiscreteSpace& s, int out_max = -1) {
  if (out_max < 0) out_max = k.max_size() - 1;
  if (out_max < 0) throw Error(ErrorCode::TruncationOverflow, "L^Delta needs k beyond size 0");
  detail::require_cap(k, out_max + 1, "apply_l_delta");
  Gamma0Function out(k.sites(), out_max);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = l_delta_terms(k, s, out.state(i)).total();
  return out;
}

/// ||k||_alpha = max e^{-alpha |eta|} |k(eta)|.
inline double k_alpha_norm(const Gamma0Function& k, double alpha) {
  double best = 0.0;
  for (std::size_t i = 0; i < k.size(); ++i)
    best = std::max(best, std::exp(-alpha * static_cast<double>(k.state(i).size())) * std::abs(k[i]));
  return best;
}

struct LocalTruncation {
  Gamma0Function density;      // R^{Lambda,N}
  Gamma0Function correlation;  // q_0^{Lambda,N}
};

/// Projection of the density R onto configurations inside `region`
/// (sites outside are integrated out), cut at N particles, and its
/// correlation function. q_0 coincides with k 1_{Lambda} 1_{|eta|<=N} once
/// N covers the support of R.
inline LocalTruncation local_truncation(const Gamma0Function& r, const std::vector<bool>& region, int n) {
  if (static_cast<int>(region.size()) != r.sites())
    throw Error(ErrorCode::InvalidArgument, "region mask has the wrong length");
  if (n < 0) throw Error(ErrorCode::InvalidArgument, "negative truncation size");
  auto inside = [&](const Multiset& eta) {
    for (int x : eta)
      if (!region[static_cast<std::size_t>(x)]) return false;
    return true;
  };
  Gamma0Function local(r.shared_index());
  for (std::size_t i = 0; i < r.size(); ++i) {
    const Multiset& gamma = r.state(i);
    Multiset in, out;
    for (int x : gamma) (region[static_cast<std::size_t>(x)] ? in : out).push_back(x);
    local.at(in) += lp_weight(out) * r[i];
  }
  Gamma0Function cut(r.shared_index());
  for (std::size_t i = 0; i < r.size(); ++i) {
    const Multiset& eta = r.state(i);
    if (static_cast<int>(eta.size()) <= n && inside(eta)) cut[i] = local[i];
  }
  Gamma0Function q = correlation_from_density(cut);
  return {std::move(cut), std::move(q)};
}

}  // namespace fsim
