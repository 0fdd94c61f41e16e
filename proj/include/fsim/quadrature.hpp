#pragma once

#include <cmath>
#include <functional>

namespace fsim::quad {

namespace detail {

template <class F>
double simpson_step(const F& f, double a, double fa, double b, double fb, double m, double fm,
                    double whole, double tol, int depth) {
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson_step(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1) +
         simpson_step(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

/// Adaptive Simpson quadrature of f over [a, b]. The interval is first split
/// into `pieces` panels so that narrow features are not missed by the
/// initial five-point sample.
template <class F>
double adaptive_simpson(const F& f, double a, double b, double abs_tol = 1e-12, int max_depth = 40,
                        int pieces = 16) {
  if (!(b > a)) return 0.0;
  const double h = (b - a) / pieces;
  double total = 0.0;
  for (int i = 0; i < pieces; ++i) {
    const double lo = a + i * h;
    const double hi = (i + 1 == pieces) ? b : lo + h;
    const double mid = 0.5 * (lo + hi);
    const double flo = f(lo), fhi = f(hi), fmid = f(mid);
    const double whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
    total += detail::simpson_step(f, lo, flo, hi, fhi, mid, fmid, whole, abs_tol / pieces, max_depth);
  }
  return total;
}

/// Tensorized adaptive Simpson over the cube [-half, half]^d, d in {1,2,3}.
/// `f` takes three coordinates; unused ones are passed as zero.
template <class F>
double cube_integral(const F& f, int d, double half, double abs_tol = 1e-9, int max_depth = 20,
                     int pieces = 8) {
  if (d == 1) {
    return adaptive_simpson([&](double x) { return f(x, 0.0, 0.0); }, -half, half, abs_tol,
                            max_depth, pieces);
  }
  if (d == 2) {
    return adaptive_simpson(
        [&](double x) {
          return adaptive_simpson([&](double y) { return f(x, y, 0.0); }, -half, half,
                                  abs_tol / (2.0 * half), max_depth, pieces);
        },
        -half, half, abs_tol, max_depth, pieces);
  }
  return adaptive_simpson(
      [&](double x) {
        return adaptive_simpson(
            [&](double y) {
              return adaptive_simpson([&](double z) { return f(x, y, z); }, -half, half,
                                      abs_tol / (4.0 * half * half), max_depth, pieces);
            },
            -half, half, abs_tol / (2.0 * half), max_depth, pieces);
      },
      -half, half, abs_tol, max_depth, pieces);
}

}  // namespace fsim::quad
