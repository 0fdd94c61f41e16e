#pragma once

#include <array>
#include <cmath>
#include <numbers>

#include "fsim/error.hpp"

namespace fsim {

/// Position in R^d, d <= 3. Unused trailing coordinates are kept at zero.
using Point = std::array<double, 3>;

inline double norm(const Point& x, int d) noexcept {
  double s = 0.0;
  for (int k = 0; k < d; ++k) s += x[k] * x[k];
  return std::sqrt(s);
}

inline double squared_norm(const Point& x, int d) noexcept {
  double s = 0.0;
  for (int k = 0; k < d; ++k) s += x[k] * x[k];
  return s;
}

inline Point operator+(const Point& a, const Point& b) noexcept {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}

inline Point operator-(const Point& a, const Point& b) noexcept {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}

/// Surface area of the unit sphere S^{d-1}.
constexpr double unit_sphere_area(int d) noexcept {
  return d == 1 ? 2.0 : d == 2 ? 2.0 * std::numbers::pi : 4.0 * std::numbers::pi;
}

/// Volume c_d of the unit ball in R^d.
constexpr double unit_ball_volume(int d) noexcept {
  return d == 1 ? 2.0 : d == 2 ? std::numbers::pi : 4.0 * std::numbers::pi / 3.0;
}

inline void check_dimension(int d) {
  if (d < 1 || d > 3) throw Error(ErrorCode::InvalidArgument, "dimension must be 1, 2 or 3");
}

}  // namespace fsim
