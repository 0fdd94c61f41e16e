#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fsim/error.hpp"
#include "fsim/geometry.hpp"
#include "fsim/quadrature.hpp"
#include "fsim/rng.hpp"

namespace fsim {

enum class Shape { gaussian, tophat, exponential, tabulated, dirac };

inline std::string_view to_string(Shape s) noexcept {
  switch (s) {
    case Shape::gaussian: return "gaussian";
    case Shape::tophat: return "tophat";
    case Shape::exponential: return "exponential";
    case Shape::tabulated: return "tabulated";
    case Shape::dirac: return "dirac";
  }
  return "unknown";
}

/// Isotropic kernel k(x) = f(|x|) with compact support |x| <= cutoff.
///
/// gaussian:    amplitude * exp(-r^2 / (2 scale^2))
/// tophat:      amplitude
/// exponential: amplitude * exp(-r / scale)
/// tabulated:   piecewise-linear interpolation of (radius, value) nodes
/// dirac:       point mass `amplitude` at the origin (dispersal only)
class RadialKernel {
 public:
  RadialKernel() = default;

  static RadialKernel gaussian(double amplitude, double scale, double cutoff) {
    RadialKernel k;
    k.shape_ = Shape::gaussian;
    k.amplitude_ = amplitude;
    k.scale_ = scale;
    k.cutoff_ = cutoff;
    return k;
  }

  static RadialKernel tophat(double amplitude, double cutoff) {
    RadialKernel k;
    k.shape_ = Shape::tophat;
    k.amplitude_ = amplitude;
    k.cutoff_ = cutoff;
    return k;
  }

  static RadialKernel exponential(double amplitude, double scale, double cutoff) {
    RadialKernel k;
    k.shape_ = Shape::exponential;
    k.amplitude_ = amplitude;
    k.scale_ = scale;
    k.cutoff_ = cutoff;
    return k;
  }

  /// Nodes must have strictly increasing radii starting at 0. Without a
  /// declared cutoff the kernel fails validation with MissingCutoff.
  static RadialKernel tabulated(std::vector<double> radii, std::vector<double> values,
                                std::optional<double> cutoff) {
    if (radii.size() != values.size() || radii.size() < 2)
      throw Error(ErrorCode::InvalidArgument, "tabulated kernel needs >= 2 (radius, value) nodes");
    if (radii.front() != 0.0)
      throw Error(ErrorCode::InvalidArgument, "tabulated kernel radii must start at 0");
    for (std::size_t i = 1; i < radii.size(); ++i)
      if (!(radii[i] > radii[i - 1]))
        throw Error(ErrorCode::InvalidArgument, "tabulated kernel radii must be increasing");
    RadialKernel k;
    k.shape_ = Shape::tabulated;
    k.amplitude_ = 1.0;
    k.radii_ = std::move(radii);
    k.values_ = std::move(values);
    k.has_cutoff_ = cutoff.has_value();
    k.cutoff_ = cutoff.value_or(k.radii_.back());
    return k;
  }

  /// Two-column CSV (radius, value); lines starting with '#' and a
  /// non-numeric header line are skipped.
  static RadialKernel from_csv(const std::string& path, std::optional<double> cutoff) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open kernel table " + path);
    std::vector<double> r, v;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::replace(line.begin(), line.end(), ',', ' ');
      std::istringstream ss(line);
      double a = 0.0, b = 0.0;
      if (!(ss >> a >> b)) continue;
      r.push_back(a);
      v.push_back(b);
    }
    return tabulated(std::move(r), std::move(v), cutoff);
  }

  static RadialKernel dirac(double mass = 1.0) {
    RadialKernel k;
    k.shape_ = Shape::dirac;
    k.amplitude_ = mass;
    k.cutoff_ = 0.0;
    return k;
  }

  static RadialKernel zero() { return tophat(0.0, 0.0); }

  Shape shape() const noexcept { return shape_; }
  double amplitude() const noexcept { return amplitude_; }
  double scale() const noexcept { return scale_; }
  double cutoff() const noexcept { return cutoff_; }
  bool has_cutoff() const noexcept { return shape_ != Shape::tabulated || has_cutoff_; }
  const std::vector<double>& radii() const noexcept { return radii_; }
  const std::vector<double>& values() const noexcept { return values_; }

  double operator()(double r) const noexcept {
    if (r < 0.0) r = -r;
    if (r > cutoff_) return 0.0;
    switch (shape_) {
      case Shape::gaussian: return amplitude_ * std::exp(-0.5 * r * r / (scale_ * scale_));
      case Shape::tophat: return amplitude_;
      case Shape::exponential: return amplitude_ * std::exp(-r / scale_);
      case Shape::tabulated: return amplitude_ * interpolate(r);
      case Shape::dirac: return r == 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    }
    return 0.0;
  }

  double at(const Point& x, int d) const noexcept { return (*this)(norm(x, d)); }

  bool is_zero() const noexcept {
    if (amplitude_ == 0.0) return true;
    if (shape_ == Shape::dirac) return false;
    if (shape_ == Shape::tabulated)
      return std::all_of(values_.begin(), values_.end(), [](double v) { return v == 0.0; });
    return false;
  }

  bool radially_nonincreasing() const noexcept {
    if (shape_ != Shape::tabulated) return amplitude_ >= 0.0;
    for (std::size_t i = 1; i < values_.size(); ++i)
      if (values_[i] > values_[i - 1]) return false;
    return true;
  }

  bool nonnegative() const noexcept {
    if (shape_ != Shape::tabulated) return amplitude_ >= 0.0;
    return std::all_of(values_.begin(), values_.end(), [](double v) { return v >= 0.0; });
  }

  bool finite() const noexcept {
    if (!std::isfinite(amplitude_) || !std::isfinite(cutoff_)) return false;
    if ((shape_ == Shape::gaussian || shape_ == Shape::exponential) && !(scale_ > 0.0)) return false;
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

  double sup() const noexcept {
    if (shape_ == Shape::dirac) return std::numeric_limits<double>::infinity();
    return sup_on_shell(0.0, cutoff_);
  }

  /// sup of f(r) over lo <= r <= hi.
  double sup_on_shell(double lo, double hi) const noexcept {
    if (lo > cutoff_) return 0.0;
    hi = std::min(hi, cutoff_);
    if (shape_ == Shape::dirac) return lo == 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    if (shape_ != Shape::tabulated) return std::max((*this)(lo), (*this)(hi));
    double best = std::max((*this)(lo), (*this)(hi));
    for (std::size_t i = 0; i < radii_.size(); ++i)
      if (radii_[i] >= lo && radii_[i] <= hi) best = std::max(best, amplitude_ * values_[i]);
    return best;
  }

  /// inf of f over the closed ball |x| <= radius; exact for every shape
  /// (piecewise-linear tables attain extrema at nodes).
  double inf_on_ball(double radius) const noexcept {
    if (radius > cutoff_) return 0.0;
    if (shape_ == Shape::dirac) return radius == 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    if (shape_ != Shape::tabulated) return std::min((*this)(0.0), (*this)(radius));
    double best = (*this)(radius);
    for (std::size_t i = 0; i < radii_.size() && radii_[i] <= radius; ++i)
      best = std::min(best, amplitude_ * values_[i]);
    return best;
  }

  /// Integral of the kernel over R^d (closed form where available, exact
  /// piecewise polynomial integration for tables).
  double mass(int d) const {
    check_dimension(d);
    const double R = cutoff_;
    const double sd = unit_sphere_area(d);
    switch (shape_) {
      case Shape::dirac: return amplitude_;
      case Shape::tophat: return amplitude_ * unit_ball_volume(d) * std::pow(R, d);
      case Shape::gaussian: {
        const double s = scale_;
        const double z = R / (s * std::numbers::sqrt2);
        const double e = std::exp(-0.5 * R * R / (s * s));
        double radial = 0.0;
        if (d == 1) radial = s * std::sqrt(std::numbers::pi / 2.0) * std::erf(z);
        if (d == 2) radial = s * s * (1.0 - e);
        if (d == 3)
          radial = s * s * s * (std::sqrt(std::numbers::pi / 2.0) * std::erf(z) - (R / s) * e);
        return amplitude_ * sd * radial;
      }
      case Shape::exponential: {
        const double s = scale_;
        const double x = R / s;
        const double e = std::exp(-x);
        double g = 0.0;  // lower incomplete gamma(d, x)
        if (d == 1) g = -std::expm1(-x);
        if (d == 2) g = 1.0 - e * (1.0 + x);
        if (d == 3) g = 2.0 * (1.0 - e * (1.0 + x + 0.5 * x * x));
        return amplitude_ * sd * std::pow(s, d) * g;
      }
      case Shape::tabulated: {
        double total = 0.0;
        for (std::size_t i = 0; i + 1 < radii_.size(); ++i) {
          const double r0 = radii_[i];
          if (r0 >= R) break;
          const double r1 = std::min(radii_[i + 1], R);
          const double v0 = values_[i];
          const double v1 = interpolate(r1);
          const double slope = (v1 - v0) / (r1 - r0);
          const double c0 = v0 - slope * r0;
          total += c0 * (std::pow(r1, d) - std::pow(r0, d)) / d +
                   slope * (std::pow(r1, d + 1) - std::pow(r0, d + 1)) / (d + 1);
        }
        return amplitude_ * sd * total;
      }
    }
    return 0.0;
  }

  /// Mass of the untruncated profile lying beyond the cutoff (zero for
  /// shapes with intrinsic compact support).
  double truncated_mass(int d) const {
    if (shape_ != Shape::gaussian && shape_ != Shape::exponential) return 0.0;
    RadialKernel wide = *this;
    wide.cutoff_ = cutoff_ + 60.0 * scale_;
    return wide.mass(d) - mass(d);
  }

  RadialKernel scaled(double factor) const {
    RadialKernel k = *this;
    k.amplitude_ *= factor;
    return k;
  }

  /// Probability density with the same profile.
  RadialKernel normalized(int d) const {
    const double m = mass(d);
    if (!(m > 0.0) || !std::isfinite(m))
      throw Error(ErrorCode::NonFiniteMass, "cannot normalize a kernel with mass " + std::to_string(m));
    return scaled(1.0 / m);
  }

  /// Draw a displacement from the density proportional to this kernel.
  Point sample(int d, Rng& rng) const {
    Point out{0.0, 0.0, 0.0};
    if (shape_ == Shape::dirac || cutoff_ == 0.0) return out;
    const double r = sample_radius(d, rng);
    const Point u = random_direction(d, rng);
    for (int k = 0; k < d; ++k) out[k] = r * u[k];
    return out;
  }

  static Point random_direction(int d, Rng& rng) {
    Point u{0.0, 0.0, 0.0};
    if (d == 1) {
      u[0] = uniform01(rng) < 0.5 ? -1.0 : 1.0;
      return u;
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    double n2 = 0.0;
    do {
      n2 = 0.0;
      for (int k = 0; k < d; ++k) {
        u[k] = normal(rng);
        n2 += u[k] * u[k];
      }
    } while (n2 == 0.0);
    const double inv = 1.0 / std::sqrt(n2);
    for (int k = 0; k < d; ++k) u[k] *= inv;
    return u;
  }

 private:
  double interpolate(double r) const noexcept {
    if (r >= radii_.back()) return r == radii_.back() ? values_.back() : 0.0;
    const auto it = std::upper_bound(radii_.begin(), radii_.end(), r);
    const std::size_t i = static_cast<std::size_t>(it - radii_.begin()) - 1;
    const double t = (r - radii_[i]) / (radii_[i + 1] - radii_[i]);
    return values_[i] + t * (values_[i + 1] - values_[i]);
  }

  // Radius with density proportional to f(r) r^{d-1} on [0, cutoff].
  double sample_radius(int d, Rng& rng) const {
    const double R = cutoff_;
    switch (shape_) {
      case Shape::tophat: return R * std::pow(uniform01(rng), 1.0 / d);
      case Shape::gaussian: {
        std::normal_distribution<double> normal(0.0, scale_);
        for (;;) {
          double r2 = 0.0;
          for (int k = 0; k < d; ++k) {
            const double z = normal(rng);
            r2 += z * z;
          }
          if (r2 <= R * R) return std::sqrt(r2);
        }
      }
      case Shape::exponential: {
        std::exponential_distribution<double> expo(1.0 / scale_);
        for (;;) {
          double r = 0.0;
          for (int k = 0; k < d; ++k) r += expo(rng);
          if (r <= R) return r;
        }
      }
      case Shape::tabulated: return sample_tabulated_radius(d, rng);
      case Shape::dirac: return 0.0;
    }
    return 0.0;
  }

  double sample_tabulated_radius(int d, Rng& rng) const {
    // Pick a segment by exact mass, then rejection within it against the
    // segment maximum of f(r) r^{d-1}.
    std::vector<double> cum;
    std::vector<std::pair<double, double>> seg;
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < radii_.size() && radii_[i] < cutoff_; ++i) {
      const double r0 = radii_[i];
      const double r1 = std::min(radii_[i + 1], cutoff_);
      const double v0 = std::max(values_[i], 0.0);
      const double v1 = std::max(interpolate(r1), 0.0);
      const double slope = (v1 - v0) / (r1 - r0);
      const double c0 = v0 - slope * r0;
      total += c0 * (std::pow(r1, d) - std::pow(r0, d)) / d +
               slope * (std::pow(r1, d + 1) - std::pow(r0, d + 1)) / (d + 1);
      cum.push_back(total);
      seg.emplace_back(r0, r1);
    }
    const double u = uniform01(rng) * total;
    const std::size_t j = static_cast<std::size_t>(
        std::min<std::ptrdiff_t>(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin(),
                                 static_cast<std::ptrdiff_t>(cum.size()) - 1));
    const auto [r0, r1] = seg[j];
    const double fmax = std::max(std::max(interpolate(r0), interpolate(r1)), 0.0) *
                        std::pow(r1, d - 1);
    for (;;) {
      const double r = r0 + (r1 - r0) * uniform01(rng);
      if (uniform01(rng) * fmax <= std::max(interpolate(r), 0.0) * std::pow(r, d - 1)) return r;
    }
  }

  Shape shape_ = Shape::tophat;
  double amplitude_ = 0.0;
  double scale_ = 1.0;
  double cutoff_ = 0.0;
  bool has_cutoff_ = true;
  std::vector<double> radii_;
  std::vector<double> values_;
};

enum class FissionVariant { factorized, bolker_pacala };

inline std::string_view to_string(FissionVariant v) noexcept {
  return v == FissionVariant::factorized ? "factorized" : "bolker-pacala";
}

/// Translation-invariant fission kernel b(x | y1, y2) with total mass <b>.
///
/// factorized:    b(x|y1,y2) = <b> q(y1 - x) q(y2 - x)
/// bolker-pacala: offspring (x, x + xi), xi ~ q, order swapped uniformly;
///                beta = <b> q
///
/// With sigma > 0 the kernel is multiplied by exp(-sigma|y1|^2) exp(-sigma|y2|^2)
/// and sampled by rejection against the unmollified law.
class FissionKernel {
 public:
  static constexpr std::size_t beta_table_nodes = 513;

  FissionKernel() = default;

  static FissionKernel factorized(double total_mass, const RadialKernel& dispersal, int d) {
    return FissionKernel(FissionVariant::factorized, total_mass, dispersal, d);
  }

  static FissionKernel bolker_pacala(double total_mass, const RadialKernel& dispersal, int d) {
    return FissionKernel(FissionVariant::bolker_pacala, total_mass, dispersal, d);
  }

  static FissionKernel none(int d) { return factorized(0.0, RadialKernel::dirac(), d); }

  FissionVariant variant() const noexcept { return variant_; }
  double total_mass() const noexcept { return total_; }
  const RadialKernel& dispersal() const noexcept { return q_; }
  int dimension() const noexcept { return d_; }
  double sigma() const noexcept { return sigma_; }

  /// Radius beyond which beta vanishes.
  double beta_support() const noexcept {
    return variant_ == FissionVariant::factorized ? 2.0 * q_.cutoff() : q_.cutoff();
  }

  /// beta(u) = \int b(x | y1, y2) dx at |y1 - y2| = |u|.
  double beta(double u) const {
    u = std::abs(u);
    if (total_ == 0.0) return 0.0;
    if (u > beta_support()) return 0.0;
    if (variant_ == FissionVariant::bolker_pacala) return total_ * q_(u);
    if (q_.shape() == Shape::dirac)
      return u == 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    if (gaussian_closed_form()) {
      const double s2 = q_.scale() * q_.scale();
      return total_ * std::pow(4.0 * std::numbers::pi * s2, -0.5 * d_) * std::exp(-u * u / (4.0 * s2));
    }
    if (q_.shape() == Shape::tophat) return total_ * tophat_autocorrelation(u);
    return total_ * interpolate_table(u);
  }

  double beta(const Point& u) const { return beta(norm(u, d_)); }

  double beta_sup() const {
    if (total_ == 0.0) return 0.0;
    if (beta_nonincreasing()) return beta(0.0);
    double best = 0.0;
    for (double v : table_) best = std::max(best, v);
    return total_ * best;
  }

  /// sup of beta over lo <= |u| <= hi.
  double beta_sup_on_shell(double lo, double hi) const {
    if (lo > beta_support() || total_ == 0.0) return 0.0;
    hi = std::min(hi, beta_support());
    if (beta_nonincreasing()) return beta(lo);
    double best = std::max(beta(lo), beta(hi));
    const double step = beta_support() / static_cast<double>(beta_table_nodes - 1);
    for (std::size_t i = 0; i < table_.size(); ++i) {
      const double r = step * static_cast<double>(i);
      if (r >= lo && r <= hi) best = std::max(best, total_ * table_[i]);
    }
    return best;
  }

  bool beta_nonincreasing() const noexcept {
    if (variant_ == FissionVariant::bolker_pacala) return q_.radially_nonincreasing();
    if (gaussian_closed_form() || q_.shape() == Shape::tophat || q_.shape() == Shape::dirac) return true;
    for (std::size_t i = 1; i < table_.size(); ++i)
      if (table_[i] > table_[i - 1]) return false;
    return true;
  }

  /// Radial quadrature of beta over R^d; equals <b> up to quadrature error.
  double beta_mass() const {
    if (total_ == 0.0) return 0.0;
    if (q_.shape() == Shape::dirac && variant_ == FissionVariant::factorized) return total_;
    const double R = beta_support();
    const double sd = unit_sphere_area(d_);
    return sd * quad::adaptive_simpson([&](double r) { return beta(r) * std::pow(r, d_ - 1); }, 0.0, R,
                                       1e-13 * std::max(total_, 1.0), 50, 64);
  }

  /// Offspring pair from b(x|.,.)/<b> ignoring mollification.
  std::pair<Point, Point> sample_unmollified(const Point& x, Rng& rng) const {
    if (variant_ == FissionVariant::factorized) {
      const Point z1 = q_.sample(d_, rng);
      const Point z2 = q_.sample(d_, rng);
      return {x + z1, x + z2};
    }
    const Point xi = q_.sample(d_, rng);
    if (uniform01(rng) < 0.5) return {x, x + xi};
    return {x + xi, x};
  }

  /// Offspring pair distributed as b_sigma(x|.,.) normalized by <b>, with
  /// the rejected fraction reported as nullopt (a thinned event).
  std::optional<std::pair<Point, Point>> sample(const Point& x, Rng& rng) const {
    auto pair = sample_unmollified(x, rng);
    if (sigma_ == 0.0) return pair;
    const double accept = phi(pair.first) * phi(pair.second);
    if (uniform01(rng) < accept) return pair;
    return std::nullopt;
  }

  /// phi_sigma(y) = exp(-sigma |y|^2).
  double phi(const Point& y) const noexcept {
    return sigma_ == 0.0 ? 1.0 : std::exp(-sigma_ * squared_norm(y, d_));
  }

  /// \int\int b_sigma(x | y1, y2) dy1 dy2 by tensorized quadrature.
  double mass_at(const Point& x) const {
    if (sigma_ == 0.0 || total_ == 0.0) return total_;
    const double inner = smoothed_dispersal(x);
    if (variant_ == FissionVariant::factorized) return total_ * inner * inner;
    return total_ * phi(x) * inner;
  }

 private:
  friend FissionKernel mollify(const FissionKernel& f, double sigma);

  FissionKernel(FissionVariant v, double total, const RadialKernel& dispersal, int d)
      : variant_(v), total_(total), d_(d) {
    check_dimension(d);
    q_ = dispersal.shape() == Shape::dirac ? RadialKernel::dirac() : dispersal.normalized(d);
    if (variant_ == FissionVariant::factorized && !gaussian_closed_form() &&
        q_.shape() != Shape::tophat && q_.shape() != Shape::dirac)
      build_table();
  }

  bool gaussian_closed_form() const noexcept {
    if (q_.shape() != Shape::gaussian) return false;
    // Truncation invisible at double precision.
    return q_.cutoff() >= 9.0 * q_.scale();
  }

  // Overlap volume of two balls of radius R at distance u over (c_d R^d)^2.
  double tophat_autocorrelation(double u) const {
    const double R = q_.cutoff();
    if (u >= 2.0 * R) return 0.0;
    const double vol = unit_ball_volume(d_) * std::pow(R, d_);
    double overlap = 0.0;
    if (d_ == 1) overlap = 2.0 * R - u;
    if (d_ == 2) overlap = 2.0 * R * R * std::acos(u / (2.0 * R)) - 0.5 * u * std::sqrt(4.0 * R * R - u * u);
    if (d_ == 3) overlap = std::numbers::pi / 12.0 * (4.0 * R + u) * (2.0 * R - u) * (2.0 * R - u);
    return overlap / (vol * vol);
  }

  // (q * q)(u) for a normalized radial density by reduction to 1-d integrals.
  double autocorrelation_quadrature(double u) const {
    const double R = q_.cutoff();
    const double tol = (d_ == 1 ? 1e-12 : 1e-9) * std::max(q_(0.0) * q_(0.0), 1e-300) * std::pow(R, d_);
    if (d_ == 1) {
      return quad::adaptive_simpson([&](double z) { return q_(z) * q_(z + u); }, -R, R, tol, 40, 32);
    }
    if (d_ == 2) {
      return 2.0 * quad::adaptive_simpson(
                       [&](double r) {
                         const double inner = quad::adaptive_simpson(
                             [&](double ph) {
                               return q_(std::sqrt(std::max(r * r + u * u - 2.0 * r * u * std::cos(ph), 0.0)));
                             },
                             0.0, std::numbers::pi, tol, 18, 8);
                         return r * q_(r) * inner;
                       },
                       0.0, R, tol, 20, 16);
    }
    if (u == 0.0) {
      return 4.0 * std::numbers::pi *
             quad::adaptive_simpson([&](double r) { return r * r * q_(r) * q_(r); }, 0.0, R, tol, 40, 32);
    }
    return 2.0 * std::numbers::pi / u *
           quad::adaptive_simpson(
               [&](double r) {
                 const double inner = quad::adaptive_simpson([&](double s) { return s * q_(s); },
                                                             std::abs(u - r), std::min(u + r, R), tol, 18, 8);
                 return r * q_(r) * inner;
               },
               0.0, R, tol, 20, 16);
  }

  void build_table() {
    table_.resize(beta_table_nodes);
    const double step = beta_support() / static_cast<double>(beta_table_nodes - 1);
    for (std::size_t i = 0; i < beta_table_nodes; ++i)
      table_[i] = std::max(autocorrelation_quadrature(step * static_cast<double>(i)), 0.0);
    table_.back() = 0.0;
  }

  double interpolate_table(double u) const {
    const double step = beta_support() / static_cast<double>(beta_table_nodes - 1);
    const double pos = u / step;
    const std::size_t i = std::min(static_cast<std::size_t>(pos), beta_table_nodes - 2);
    const double t = pos - static_cast<double>(i);
    return table_[i] + t * (table_[i + 1] - table_[i]);
  }

  // \int q(z) phi_sigma(x + z) dz.
  double smoothed_dispersal(const Point& x) const {
    if (q_.shape() == Shape::dirac) return phi(x);
    const double R = q_.cutoff();
    return quad::cube_integral(
        [&](double a, double b, double c) {
          const Point z{a, b, c};
          return q_.at(z, d_) * phi(x + z);
        },
        d_, R, 1e-11, 18, 8);
  }

  FissionVariant variant_ = FissionVariant::factorized;
  double total_ = 0.0;
  RadialKernel q_ = RadialKernel::dirac();
  int d_ = 1;
  double sigma_ = 0.0;
  std::vector<double> table_;  // (q*q) on [0, beta_support], unit total mass
};

/// b_sigma(x|y1,y2) = b(x|y1,y2) phi_sigma(y1) phi_sigma(y2).
inline FissionKernel mollify(const FissionKernel& f, double sigma) {
  if (!(sigma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma must be >= 0");
  FissionKernel out = f;
  out.sigma_ = sigma;
  return out;
}

/// Intrinsic mortality m(x): a constant or a piecewise-constant grid over
/// the box [0, extent)^d.
class MortalityField {
 public:
  MortalityField() = default;

  static MortalityField constant(double value) {
    MortalityField m;
    m.values_ = {value};
    return m;
  }

  /// `cells_per_axis^d` values in row-major order (axis 0 fastest).
  static MortalityField grid(std::vector<double> values, int cells_per_axis, double extent, int d) {
    check_dimension(d);
    std::size_t expected = 1;
    for (int k = 0; k < d; ++k) expected *= static_cast<std::size_t>(cells_per_axis);
    if (cells_per_axis < 1 || values.size() != expected || !(extent > 0.0))
      throw Error(ErrorCode::InvalidArgument, "mortality grid has inconsistent shape");
    MortalityField m;
    m.values_ = std::move(values);
    m.cells_ = cells_per_axis;
    m.extent_ = extent;
    m.d_ = d;
    return m;
  }

  bool is_constant() const noexcept { return cells_ == 0; }
  const std::vector<double>& values() const noexcept { return values_; }

  double operator()(const Point& x) const noexcept {
    if (cells_ == 0) return values_[0];
    std::size_t idx = 0, stride = 1;
    for (int k = 0; k < d_; ++k) {
      double f = x[k] / extent_;
      f -= std::floor(f);
      auto c = static_cast<std::size_t>(f * cells_);
      if (c >= static_cast<std::size_t>(cells_)) c = static_cast<std::size_t>(cells_) - 1;
      idx += c * stride;
      stride *= static_cast<std::size_t>(cells_);
    }
    return values_[idx];
  }

  double upper() const noexcept { return *std::max_element(values_.begin(), values_.end()); }
  double lower() const noexcept { return *std::min_element(values_.begin(), values_.end()); }

 private:
  std::vector<double> values_{0.0};
  int cells_ = 0;
  double extent_ = 1.0;
  int d_ = 1;
};

/// Derived constants of the model ingredients.
struct ModelConstants {
  double a_sup = 0.0;        // a*
  double a_mass = 0.0;       // <a>
  double a_lower = 0.0;      // a_* on |x| <= r
  double r = 0.0;            // radius for a_*
  double b_mass = 0.0;       // <b>
  double beta_sup = 0.0;     // beta*
  double m_upper = 0.0;      // m*
  double m_lower = 0.0;      // m_*
  double a_truncated_mass = 0.0;
  double q_truncated_mass = 0.0;
};

struct ModelParams {
  MortalityField mortality;
  RadialKernel competition;
  FissionKernel fission;
  int dim = 1;

  ModelConstants constants() const {
    ModelConstants c;
    c.a_sup = competition.sup();
    c.a_mass = competition.mass(dim);
    c.r = assumption_radius();
    c.a_lower = c.r > 0.0 ? competition.inf_on_ball(c.r) : 0.0;
    c.b_mass = fission.total_mass();
    c.beta_sup = fission.beta_sup();
    c.m_upper = mortality.upper();
    c.m_lower = mortality.lower();
    c.a_truncated_mass = competition.truncated_mass(dim);
    c.q_truncated_mass = fission.dispersal().truncated_mass(dim);
    return c;
  }

  /// Radius used to report a_*: half the radius at which a first drops to
  /// half its peak (capped by the cutoff).
  double assumption_radius() const {
    const double peak = competition(0.0);
    if (!(peak > 0.0) || !std::isfinite(peak)) return 0.0;
    const double R = competition.cutoff();
    double lo = 0.0, hi = R;
    if (competition(R) >= 0.5 * peak) return 0.5 * R;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (competition.inf_on_ball(mid) >= 0.5 * peak) lo = mid; else hi = mid;
    }
    return 0.5 * lo;
  }
};

struct ValidationItem {
  std::string label;
  bool passed = false;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationItem> items;  // (i)..(iv)
  ModelConstants constants;
  std::vector<ErrorCode> errors;

  bool passed() const {
    return errors.empty() &&
           std::all_of(items.begin(), items.end(), [](const ValidationItem& i) { return i.passed; });
  }
  bool well_formed() const { return errors.empty(); }
  const ValidationItem& item(std::size_t i) const { return items.at(i); }
};

/// Checks the integrability, positivity and boundedness conditions on
/// (m, a, b) and reports the derived constants.
inline ValidationReport validate_params(const ModelParams& p) {
  ValidationReport rep;
  auto error = [&](ErrorCode c) {
    if (std::find(rep.errors.begin(), rep.errors.end(), c) == rep.errors.end()) rep.errors.push_back(c);
  };
  const RadialKernel& a = p.competition;
  const RadialKernel& q = p.fission.dispersal();
  if (!a.has_cutoff() || !q.has_cutoff()) error(ErrorCode::MissingCutoff);
  if (!a.finite() || !q.finite() || !std::isfinite(p.fission.total_mass())) error(ErrorCode::NonFiniteMass);
  if (!a.nonnegative() || !q.nonnegative() || p.fission.total_mass() < 0.0 || p.mortality.lower() < 0.0)
    error(ErrorCode::NegativeKernel);
  if (!rep.errors.empty()) {
    rep.items = {{"(i) a integrable and bounded", false, "malformed kernel"},
                 {"(ii) a >= a_* > 0 near the origin", false, "malformed kernel"},
                 {"(iii) b symmetric finite measure", false, "malformed kernel"},
                 {"(iv) beta bounded, integral <b>", false, "malformed kernel"}};
    return rep;
  }
  rep.constants = p.constants();
  const auto& c = rep.constants;
  if (!std::isfinite(c.a_mass) || !std::isfinite(c.a_sup)) error(ErrorCode::NonFiniteMass);

  const bool i_ok = std::isfinite(c.a_mass) && std::isfinite(c.a_sup);
  rep.items.push_back({"(i) a integrable and bounded", i_ok,
                       "a* = " + std::to_string(c.a_sup) + ", <a> = " + std::to_string(c.a_mass)});
  const bool ii_ok = c.r > 0.0 && c.a_lower > 0.0;
  rep.items.push_back({"(ii) a >= a_* > 0 near the origin", ii_ok,
                       ii_ok ? "a_* = " + std::to_string(c.a_lower) + " on |x| <= " + std::to_string(c.r)
                             : "no r with a_r > 0"});
  const bool iii_ok = std::isfinite(c.b_mass) && c.b_mass >= 0.0;
  rep.items.push_back({"(iii) b symmetric finite measure", iii_ok, "<b> = " + std::to_string(c.b_mass)});
  bool iv_ok = std::isfinite(c.beta_sup);
  std::string iv_msg = "beta* = " + std::to_string(c.beta_sup);
  if (iv_ok && c.b_mass > 0.0) {
    const double integral = p.fission.beta_mass();
    const double rel = std::abs(integral - c.b_mass) / c.b_mass;
    iv_msg += ", \\int beta = " + std::to_string(integral);
    if (rel > 1e-6) {
      iv_ok = false;
      iv_msg += " (mismatch)";
    }
  }
  rep.items.push_back({"(iv) beta bounded, integral <b>", iv_ok, iv_msg});
  return rep;
}

}  // namespace fsim
