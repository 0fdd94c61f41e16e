#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <ostream>
#include <string>
#include <vector>

#include "fsim/discrete_space.hpp"
#include "fsim/error.hpp"

namespace fsim {

/// Multisets of size <= N over M sites plus one absorbing overflow state.
class StateSpace {
 public:
  StateSpace(int sites, int max_size, std::size_t limit = MultisetIndex::default_limit)
      : index_(std::make_shared<MultisetIndex>(sites, max_size, limit > 0 ? limit - 1 : 0)) {}

  int sites() const noexcept { return index_->sites(); }
  int max_size() const noexcept { return index_->max_size(); }
  /// Number of states including the sink.
  std::size_t size() const noexcept { return index_->size() + 1; }
  std::size_t sink() const noexcept { return index_->size(); }
  bool is_sink(std::size_t i) const noexcept { return i == sink(); }
  const Multiset& state(std::size_t i) const { return index_->at(i); }
  std::size_t index(const Multiset& eta) const { return index_->index(eta); }
  const MultisetIndex& multisets() const noexcept { return *index_; }

 private:
  std::shared_ptr<MultisetIndex> index_;
};

/// Throws SizeOverflow when the space would exceed `limit` states.
inline StateSpace enumerate_states(int sites, int max_size, std::size_t limit = MultisetIndex::default_limit) {
  return StateSpace(sites, max_size, limit);
}

/// Sparse rate matrix in compressed-column form, columns indexed by the
/// source state, so that dP/dt = Q P.
class GeneratorMatrix {
 public:
  struct Entry {
    std::size_t row;
    double rate;
  };

  explicit GeneratorMatrix(std::size_t n) : start_(n + 1, 0) {}

  std::size_t size() const noexcept { return start_.size() - 1; }

  /// Appends column j; `off` lists (target, rate) with target != j.
  void set_column(std::size_t j, const std::map<std::size_t, double>& off) {
    if (j != filled_) throw Error(ErrorCode::InvalidArgument, "columns must be filled in order");
    double out = 0.0;
    for (const auto& [i, r] : off) {
      entries_.push_back({i, r});
      out += r;
    }
    entries_.push_back({j, -out});
    start_[j + 1] = entries_.size();
    ++filled_;
  }

  /// Entries of column j, the diagonal last.
  std::pair<const Entry*, const Entry*> column(std::size_t j) const {
    return {entries_.data() + start_[j], entries_.data() + start_[j + 1]};
  }

  double diagonal(std::size_t j) const { return entries_[start_[j + 1] - 1].rate; }

  double column_sum(std::size_t j) const {
    double s = 0.0;
    auto [b, e] = column(j);
    for (auto it = b; it != e; ++it) s += it->rate;
    return s;
  }

  double max_exit_rate() const {
    double best = 0.0;
    for (std::size_t j = 0; j < size(); ++j) best = std::max(best, std::abs(diagonal(j)));
    return best;
  }

  double entry(std::size_t i, std::size_t j) const {
    double s = 0.0;
    auto [b, e] = column(j);
    for (auto it = b; it != e; ++it)
      if (it->row == i) s += it->rate;
    return s;
  }

  /// out = Q p.
  void apply(const std::vector<double>& p, std::vector<double>& out) const {
    out.assign(size(), 0.0);
    for (std::size_t j = 0; j < size(); ++j) {
      const double pj = p[j];
      if (pj == 0.0) continue;
      for (std::size_t k = start_[j]; k < start_[j + 1]; ++k) out[entries_[k].row] += entries_[k].rate * pj;
    }
  }

  std::vector<std::vector<double>> dense() const {
    std::vector<std::vector<double>> q(size(), std::vector<double>(size(), 0.0));
    for (std::size_t j = 0; j < size(); ++j) {
      auto [b, e] = column(j);
      for (auto it = b; it != e; ++it) q[it->row][j] += it->rate;
    }
    return q;
  }

  std::size_t nonzeros() const noexcept { return entries_.size(); }

  /// Raw entry storage; exposed for diagnostics and fault injection.
  std::vector<Entry>& raw_entries() noexcept { return entries_; }

 private:
  std::vector<std::size_t> start_;
  std::vector<Entry> entries_;
  std::size_t filled_ = 0;
};

/// Death eta -> eta - x at rate m(x) + E^a(x, eta - x); fission
/// eta -> eta - x + {j, k} at rate b(x|j,k) + b(x|k,j) for j != k and
/// b(x|j,j) for j = k, so the total fission rate of x is <b>_x. Fission out
/// of size-N states goes to the sink.
inline GeneratorMatrix build_generator(const DiscreteSpace& s, const StateSpace& ss) {
  if (s.sites() != ss.sites()) throw Error(ErrorCode::InvalidArgument, "site counts differ");
  const int m = s.sites();
  GeneratorMatrix q(ss.size());
  std::map<std::size_t, double> col;
  for (std::size_t j = 0; j < ss.sink(); ++j) {
    col.clear();
    const Multiset& eta = ss.state(j);
    const bool full = static_cast<int>(eta.size()) == ss.max_size();
    for (std::size_t p = 0; p < eta.size(); ++p) {
      const Multiset rest = without_particle(eta, p);
      const double d = s.death_rate(eta, p);
      if (d != 0.0) col[ss.index(rest)] += d;
      const int x = eta[p];
      for (int a = 0; a < m; ++a)
        for (int b = a; b < m; ++b) {
          const double rate = a == b ? s.fission(x, a, a) : s.fission(x, a, b) + s.fission(x, b, a);
          if (rate == 0.0) continue;
          const std::size_t target = full ? ss.sink() : ss.index(with_site(with_site(rest, a), b));
          col[target] += rate;
        }
    }
    q.set_column(j, col);
  }
  col.clear();
  q.set_column(ss.sink(), col);
  return q;
}

struct DistributionVector {
  std::vector<double> p;
  double time = 0.0;

  double total() const {
    double s = 0.0;
    for (double v : p) s += v;
    return s;
  }
};

inline DistributionVector point_mass(const StateSpace& ss, const Multiset& eta) {
  DistributionVector d{std::vector<double>(ss.size(), 0.0), 0.0};
  d.p[ss.index(eta)] = 1.0;
  return d;
}

struct ClipAudit {
  std::size_t steps = 0;
  std::size_t clipped_entries = 0;
  double clipped_mass = 0.0;
  double most_negative = 0.0;  // smallest entry seen before clipping
};

struct Evolution {
  DistributionVector state;
  ClipAudit audit;
  double dt = 0.0;
  double leak = 0.0;
};

/// Fourth-order Runge-Kutta integration of dP/dt = Q P up to time t.
/// dt <= 0 selects 0.1 / max|Q_ii|.
inline Evolution evolve(const DistributionVector& p0, const GeneratorMatrix& q, double t, double dt = 0.0) {
  if (!(t >= 0.0)) throw Error(ErrorCode::InvalidArgument, "negative time");
  if (p0.p.size() != q.size()) throw Error(ErrorCode::InvalidArgument, "distribution and generator sizes differ");
  const double lam = q.max_exit_rate();
  if (dt <= 0.0) dt = lam > 0.0 ? 0.1 / lam : std::max(t, 1.0);
  if (dt * lam > 0.5)
    throw Error(ErrorCode::StepTooLarge, "dt * max|Q_ii| = " + std::to_string(dt * lam) + " exceeds 0.5");
  Evolution ev;
  ev.state = p0;
  const std::size_t steps = t == 0.0 ? 0 : static_cast<std::size_t>(std::ceil(t / dt - 1e-12));
  const double h = steps ? t / static_cast<double>(steps) : 0.0;
  ev.dt = h;
  std::vector<double>& p = ev.state.p;
  const std::size_t n = p.size();
  std::vector<double> k1, k2, k3, k4, tmp(n);
  for (std::size_t s = 0; s < steps; ++s) {
    q.apply(p, k1);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = p[i] + 0.5 * h * k1[i];
    q.apply(tmp, k2);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = p[i] + 0.5 * h * k2[i];
    q.apply(tmp, k3);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = p[i] + h * k3[i];
    q.apply(tmp, k4);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      if (p[i] < 0.0) {
        ev.audit.most_negative = std::min(ev.audit.most_negative, p[i]);
        if (p[i] > -1e-12) {
          ev.audit.clipped_mass += -p[i];
          ++ev.audit.clipped_entries;
          p[i] = 0.0;
        }
      }
    }
    ++ev.audit.steps;
  }
  ev.state.time = p0.time + t;
  ev.leak = p.back();
  return ev;
}

/// sum over retained states of chi(|eta|) P(eta) for chi_m(n) = (1+n)^m,
/// m = 0..m_max. The sink is excluded.
inline std::vector<double> moments(const DistributionVector& d, const StateSpace& ss, int m_max) {
  std::vector<double> out(static_cast<std::size_t>(m_max) + 1, 0.0);
  for (std::size_t i = 0; i < ss.sink(); ++i) {
    const double n1 = 1.0 + static_cast<double>(ss.state(i).size());
    double pw = 1.0;
    for (int m = 0; m <= m_max; ++m) {
      out[static_cast<std::size_t>(m)] += pw * d.p[i];
      pw *= n1;
    }
  }
  return out;
}

/// sum e^{kappa |eta|} P(eta), sink excluded.
inline double exp_moment(const DistributionVector& d, const StateSpace& ss, double kappa) {
  double s = 0.0;
  for (std::size_t i = 0; i < ss.sink(); ++i) s += std::exp(kappa * static_cast<double>(ss.state(i).size())) * d.p[i];
  return s;
}

inline double leak(const DistributionVector& d, const StateSpace& ss) { return d.p[ss.sink()]; }

/// Law of the particle number N on 0..max_size (sink excluded).
inline std::vector<double> count_marginal(const DistributionVector& d, const StateSpace& ss) {
  std::vector<double> out(static_cast<std::size_t>(ss.max_size()) + 1, 0.0);
  for (std::size_t i = 0; i < ss.sink(); ++i) out[ss.state(i).size()] += d.p[i];
  return out;
}

inline nlohmann::json to_json(const DistributionVector& d, const StateSpace& ss) {
  nlohmann::json states = nlohmann::json::array();
  for (std::size_t i = 0; i < ss.sink(); ++i) states.push_back({{"state", ss.state(i)}, {"p", d.p[i]}});
  return {{"time", d.time}, {"sites", ss.sites()}, {"max_size", ss.max_size()}, {"leak", leak(d, ss)},
          {"states", states}};
}

inline void write_marginal_csv(std::ostream& out, const DistributionVector& d, const StateSpace& ss) {
  out << "n,probability\n";
  const auto m = count_marginal(d, ss);
  out.precision(17);
  for (std::size_t n = 0; n < m.size(); ++n) out << n << ',' << m[n] << '\n';
  out << "overflow," << leak(d, ss) << '\n';
}

}  // namespace fsim
