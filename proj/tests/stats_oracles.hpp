#pragma once

// Reference statistics used only by the test suites.

#include <algorithm>
#include <cmath>
#include <boost/math/special_functions/gamma.hpp>
#include <vector>

namespace oracle {

// Asymptotic Kolmogorov tail Q(lambda) = 2 sum (-1)^{j-1} exp(-2 j^2 lambda^2).
inline double kolmogorov_q(double lambda) {
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0;
  for (int j = 1; j <= 200; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += (j % 2 == 1 ? 1.0 : -1.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

inline double ks_pvalue(double dstat, double n_eff) {
  const double s = std::sqrt(n_eff);
  return kolmogorov_q((s + 0.12 + 0.11 / s) * dstat);
}

template <class Cdf>
double ks_one_sample_pvalue(std::vector<double> x, Cdf cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return ks_pvalue(d, n);
}

inline double ks_two_sample_pvalue(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  return ks_pvalue(d, na * nb / (na + nb));
}

// Pearson chi-square p-value of counts against Poisson(mean), pooling
// adjacent classes from both tails until each expects at least 5.
inline double poisson_chi2_pvalue(const std::vector<std::size_t>& counts, double mean) {
  const double n = static_cast<double>(counts.size());
  std::size_t top = 0;
  for (auto c : counts) top = std::max(top, c);
  std::vector<double> expect(top + 1), observe(top + 1, 0.0);
  double pk = std::exp(-mean), cum = 0.0;
  for (std::size_t k = 0; k <= top; ++k) {
    expect[k] = n * pk;
    cum += pk;
    pk *= mean / static_cast<double>(k + 1);
  }
  expect[top] += n * std::max(0.0, 1.0 - cum);
  for (auto c : counts) observe[c] += 1.0;
  std::vector<double> e, o;
  double ae = 0.0, ao = 0.0;
  for (std::size_t k = 0; k <= top; ++k) {
    ae += expect[k];
    ao += observe[k];
    if (ae >= 5.0) {
      e.push_back(ae);
      o.push_back(ao);
      ae = ao = 0.0;
    }
  }
  if (!e.empty()) {
    e.back() += ae;
    o.back() += ao;
  }
  while (e.size() > 1 && e.back() < 5.0) {
    e[e.size() - 2] += e.back();
    o[o.size() - 2] += o.back();
    e.pop_back();
    o.pop_back();
  }
  if (e.size() < 2) return 1.0;
  double stat = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) stat += (o[i] - e[i]) * (o[i] - e[i]) / e[i];
  const double dof = static_cast<double>(e.size() - 1);
  return boost::math::gamma_q(dof / 2.0, stat / 2.0);
}

}  // namespace oracle
