#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "fsim/error.hpp"
#include "fsim/geometry.hpp"
#include "fsim/kernels.hpp"

namespace fsim {

/// Periodic box [0, L)^d split into a regular grid of neighbor cells.
class TorusWindow {
 public:
  TorusWindow() = default;

  /// `min_cell` is the smallest admissible neighbor-cell side (typically the
  /// competition cutoff); the actual side divides L evenly.
  TorusWindow(double side, int d, double min_cell) : side_(side), d_(d) {
    check_dimension(d);
    if (!(side > 0.0)) throw Error(ErrorCode::InvalidArgument, "window side must be positive");
    int n = 1;
    if (min_cell > 0.0) n = std::max(1, static_cast<int>(std::floor(side / min_cell)));
    else n = std::max(1, std::min(64, static_cast<int>(side)));
    n = std::min(n, 1024);
    cells_per_axis_ = n;
    cell_ = side / n;
  }

  double side() const noexcept { return side_; }
  int dimension() const noexcept { return d_; }
  int cells_per_axis() const noexcept { return cells_per_axis_; }
  double cell_size() const noexcept { return cell_; }
  double volume() const noexcept { return std::pow(side_, d_); }
  Point center() const noexcept {
    Point c{0.0, 0.0, 0.0};
    for (int k = 0; k < d_; ++k) c[k] = 0.5 * side_;
    return c;
  }

  std::size_t cell_count() const noexcept {
    std::size_t c = 1;
    for (int k = 0; k < d_; ++k) c *= static_cast<std::size_t>(cells_per_axis_);
    return c;
  }

  bool contains(const Point& x) const noexcept {
    for (int k = 0; k < d_; ++k)
      if (!(x[k] >= 0.0 && x[k] < side_)) return false;
    for (int k = d_; k < 3; ++k)
      if (x[k] != 0.0) return false;
    return true;
  }

  Point wrap(Point x) const noexcept {
    for (int k = 0; k < d_; ++k) {
      x[k] -= side_ * std::floor(x[k] / side_);
      if (x[k] >= side_) x[k] = 0.0;
    }
    for (int k = d_; k < 3; ++k) x[k] = 0.0;
    return x;
  }

  /// Minimum-image displacement y - x.
  Point displacement(const Point& x, const Point& y) const noexcept {
    Point u{0.0, 0.0, 0.0};
    for (int k = 0; k < d_; ++k) {
      double v = y[k] - x[k];
      v -= side_ * std::round(v / side_);
      u[k] = v;
    }
    return u;
  }

  double distance(const Point& x, const Point& y) const noexcept { return norm(displacement(x, y), d_); }

  std::array<int, 3> cell_coords(const Point& x) const noexcept {
    std::array<int, 3> c{0, 0, 0};
    for (int k = 0; k < d_; ++k) c[k] = std::min(cells_per_axis_ - 1, static_cast<int>(x[k] / cell_));
    return c;
  }

  std::size_t cell_index(const std::array<int, 3>& c) const noexcept {
    std::size_t idx = 0, stride = 1;
    for (int k = 0; k < d_; ++k) {
      idx += static_cast<std::size_t>(c[k]) * stride;
      stride *= static_cast<std::size_t>(cells_per_axis_);
    }
    return idx;
  }

  /// Distinct cells within `reach` cells of `c` along each axis, with
  /// periodic wrap. Each cell is reported once even when the grid is small.
  template <class F>
  void for_each_cell_near(const std::array<int, 3>& c, int reach, F&& f) const {
    const int n = cells_per_axis_;
    const int span = std::min(2 * reach + 1, n);
    const int lo = span == n ? 0 : -reach;
    std::array<int, 3> off{0, 0, 0};
    std::array<int, 3> cc{0, 0, 0};
    const int s1 = d_ >= 2 ? span : 1;
    const int s2 = d_ >= 3 ? span : 1;
    for (int i = 0; i < span; ++i)
      for (int j = 0; j < s1; ++j)
        for (int k = 0; k < s2; ++k) {
          off = {i, j, k};
          for (int a = 0; a < d_; ++a) {
            const int o = (span == n) ? off[a] : off[a] + lo;
            cc[a] = ((span == n ? o : c[a] + o) % n + n) % n;
          }
          f(cell_index(cc));
        }
  }

 private:
  double side_ = 1.0;
  int d_ = 1;
  int cells_per_axis_ = 1;
  double cell_ = 1.0;
};

struct Energies {
  double competition = 0.0;  // E^a
  double dispersal = 0.0;    // E^b
  double mortality = 0.0;    // M
  double total = 0.0;        // Psi
};

/// Kahan-compensated running sum.
struct CompensatedSum {
  double sum = 0.0;
  double carry = 0.0;

  void add(double v) noexcept {
    const double y = v - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
  double value() const noexcept { return sum; }
};

/// Finite configuration on a torus window with cached per-particle rates.
///
/// Particles live in dense storage indexed 0..size()-1; removal swaps the
/// last particle into the freed slot. Each particle also carries a unique
/// id that is never reused.
class Configuration {
 public:
  static constexpr std::uint64_t refresh_interval = 10000;

  Configuration(const ModelParams& params, const TorusWindow& window)
      : params_(&params), window_(window), cells_(window.cell_count()) {
    if (params.dim != window.dimension())
      throw Error(ErrorCode::InvalidArgument, "window and model dimensions differ");
    if (params.competition.cutoff() > 0.5 * window.side() && !params.competition.is_zero())
      throw Error(ErrorCode::InvalidArgument, "competition cutoff exceeds half the window side");
    b_ = params.fission.total_mass();
  }

  const ModelParams& params() const noexcept { return *params_; }
  const TorusWindow& window() const noexcept { return window_; }
  std::size_t size() const noexcept { return pos_.size(); }
  bool empty() const noexcept { return pos_.empty(); }
  const Point& position(std::size_t i) const { return pos_.at(i); }
  std::uint64_t id(std::size_t i) const { return ids_.at(i); }
  const std::vector<Point>& positions() const noexcept { return pos_; }
  const std::vector<std::uint64_t>& ids() const noexcept { return ids_; }

  double mortality(std::size_t i) const { return mort_.at(i); }
  double competition(std::size_t i) const { return comp_.at(i).value(); }
  double death_rate(std::size_t i) const { return mort_.at(i) + comp_.at(i).value(); }

  double death_total() const noexcept { return tree_.empty() ? 0.0 : tree_[1]; }
  double fission_total() const noexcept { return b_ * static_cast<double>(pos_.size()); }
  /// Psi(gamma) = M + E^a + <b>|gamma| from the cache.
  double total_rate() const noexcept { return death_total() + fission_total(); }

  std::size_t insert(const Point& x) {
    if (!window_.contains(x)) throw Error(ErrorCode::OutOfWindow, "point outside the window");
    const std::size_t i = pos_.size();
    pos_.push_back(x);
    ids_.push_back(next_id_++);
    mort_.push_back(params_->mortality(x));
    comp_.emplace_back();
    const std::size_t cell = window_.cell_index(window_.cell_coords(x));
    cell_of_.push_back(cell);
    slot_.push_back(cells_[cell].size());
    cells_[cell].push_back(i);
    ensure_tree_capacity();
    const RadialKernel& a = params_->competition;
    if (!a.is_zero()) {
      for_each_neighbor(x, a.cutoff(), i, [&](std::size_t j, double r) {
        const double v = a(r);
        if (v == 0.0) return;
        comp_[i].add(v);
        comp_[j].add(v);
        update_leaf(j);
      });
    }
    update_leaf(i);
    tick();
    return i;
  }

  /// Removes particle i. Returns the index of the particle that was moved
  /// into slot i (equal to the old last index), or size() when none moved.
  std::size_t remove(std::size_t i) {
    if (i >= pos_.size()) throw Error(ErrorCode::BadIndex, "particle index out of range");
    const RadialKernel& a = params_->competition;
    if (!a.is_zero()) {
      for_each_neighbor(pos_[i], a.cutoff(), i, [&](std::size_t j, double r) {
        const double v = a(r);
        if (v == 0.0) return;
        comp_[j].add(-v);
        update_leaf(j);
      });
    }
    // detach i from its cell
    detach_from_cell(i);
    const std::size_t last = pos_.size() - 1;
    std::size_t moved = pos_.size() - 1;
    if (i != last) {
      pos_[i] = pos_[last];
      ids_[i] = ids_[last];
      mort_[i] = mort_[last];
      comp_[i] = comp_[last];
      cell_of_[i] = cell_of_[last];
      slot_[i] = slot_[last];
      cells_[cell_of_[i]][slot_[i]] = i;
    }
    pos_.pop_back();
    ids_.pop_back();
    mort_.pop_back();
    comp_.pop_back();
    cell_of_.pop_back();
    slot_.pop_back();
    set_leaf(last, 0.0);
    if (i != last) update_leaf(i);
    if (pos_.empty()) {
      // exact zero for the empty configuration
      std::fill(tree_.begin(), tree_.end(), 0.0);
    }
    tick();
    return i == last ? pos_.size() : moved;
  }

  /// Index of the particle whose cumulative death-rate interval contains u,
  /// u in [0, death_total()).
  std::size_t pick_death(double u) const {
    std::size_t node = 1;
    while (node < leaves_) {
      const double left = tree_[2 * node];
      if (u < left) node = 2 * node;
      else {
        u -= left;
        node = 2 * node + 1;
      }
    }
    std::size_t idx = node - leaves_;
    if (idx >= pos_.size()) idx = pos_.size() - 1;
    return idx;
  }

  /// Calls f(j, distance) for every particle j != self with minimum-image
  /// distance <= radius.
  template <class F>
  void for_each_neighbor(const Point& x, double radius, std::size_t self, F&& f) const {
    const int reach = std::max(1, static_cast<int>(std::ceil(radius / window_.cell_size())));
    window_.for_each_cell_near(window_.cell_coords(x), reach, [&](std::size_t cell) {
      for (std::size_t j : cells_[cell]) {
        if (j == self) continue;
        const double r = window_.distance(x, pos_[j]);
        if (r <= radius) f(j, r);
      }
    });
  }

  /// Aggregates from the cache, with E^b from a fresh pair sum of beta.
  Energies energies() const {
    Energies e;
    CompensatedSum ea, m;
    for (std::size_t i = 0; i < pos_.size(); ++i) {
      ea.add(comp_[i].value());
      m.add(mort_[i]);
    }
    e.competition = ea.value();
    e.mortality = m.value();
    const FissionKernel& f = params_->fission;
    CompensatedSum eb;
    if (f.total_mass() > 0.0) {
      const double reach = f.beta_support();
      if (reach > 0.5 * window_.side()) {
        for (std::size_t i = 0; i < pos_.size(); ++i)
          for (std::size_t j = 0; j < pos_.size(); ++j)
            if (i != j) eb.add(f.beta(window_.distance(pos_[i], pos_[j])));
      } else {
        for (std::size_t i = 0; i < pos_.size(); ++i)
          for_each_neighbor(pos_[i], reach, i, [&](std::size_t, double r) { eb.add(f.beta(r)); });
      }
    }
    e.dispersal = eb.value();
    e.total = e.mortality + e.competition + b_ * static_cast<double>(pos_.size());
    return e;
  }

  /// Recomputes every cached rate from scratch.
  void refresh() {
    for (auto& c : comp_) c = CompensatedSum{};
    const RadialKernel& a = params_->competition;
    if (!a.is_zero()) {
      for (std::size_t i = 0; i < pos_.size(); ++i)
        for_each_neighbor(pos_[i], a.cutoff(), i, [&](std::size_t, double r) { comp_[i].add(a(r)); });
    }
    if (leaves_ == 0) {
      mutations_ = 0;
      return;
    }
    std::fill(tree_.begin(), tree_.end(), 0.0);
    for (std::size_t i = 0; i < pos_.size(); ++i) tree_[leaves_ + i] = mort_[i] + comp_[i].value();
    for (std::size_t n = leaves_ - 1; n >= 1; --n) tree_[n] = tree_[2 * n] + tree_[2 * n + 1];
    mutations_ = 0;
  }

  std::uint64_t next_id() const noexcept { return next_id_; }

 private:
  void detach_from_cell(std::size_t i) {
    auto& bucket = cells_[cell_of_[i]];
    const std::size_t s = slot_[i];
    const std::size_t back = bucket.back();
    bucket[s] = back;
    slot_[back] = s;
    bucket.pop_back();
  }

  void ensure_tree_capacity() {
    if (pos_.size() <= leaves_) return;
    std::size_t n = std::max<std::size_t>(leaves_, 16);
    while (n < pos_.size()) n *= 2;
    leaves_ = n;
    tree_.assign(2 * leaves_, 0.0);
    for (std::size_t i = 0; i + 1 < pos_.size(); ++i) tree_[leaves_ + i] = mort_[i] + comp_[i].value();
    for (std::size_t k = leaves_ - 1; k >= 1; --k) tree_[k] = tree_[2 * k] + tree_[2 * k + 1];
  }

  void set_leaf(std::size_t i, double v) {
    std::size_t node = leaves_ + i;
    tree_[node] = v;
    for (node /= 2; node >= 1; node /= 2) tree_[node] = tree_[2 * node] + tree_[2 * node + 1];
  }

  void update_leaf(std::size_t i) { set_leaf(i, mort_[i] + comp_[i].value()); }

  void tick() {
    if (++mutations_ >= refresh_interval) refresh();
  }

  const ModelParams* params_;
  TorusWindow window_;
  std::vector<std::vector<std::size_t>> cells_;
  double b_ = 0.0;

  std::vector<Point> pos_;
  std::vector<std::uint64_t> ids_;
  std::vector<double> mort_;
  std::vector<CompensatedSum> comp_;
  std::vector<std::size_t> cell_of_;
  std::vector<std::size_t> slot_;

  std::size_t leaves_ = 0;
  std::vector<double> tree_;
  std::uint64_t next_id_ = 0;
  std::uint64_t mutations_ = 0;
};

}  // namespace fsim
