#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>
#include <vector>

#include "fsim/master_equation.hpp"

namespace oracle {

// Dense scaling-and-squaring exponential of Q t applied to p0.
inline std::vector<double> expm_oracle(const fsim::GeneratorMatrix& q, const std::vector<double>& p0, double t) {
  const auto d = q.dense();
  const auto n = static_cast<Eigen::Index>(d.size());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = d[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] * t;
  const Eigen::MatrixXd e = m.exp();
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = p0[static_cast<std::size_t>(i)];
  const Eigen::VectorXd r = e * v;
  return std::vector<double>(r.data(), r.data() + n);
}

}  // namespace oracle
