#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <vector>

#include "fsim/kernels.hpp"
#include "stats_oracles.hpp"

using namespace fsim;

namespace {

ModelParams gaussian_model(int d) {
  ModelParams p;
  p.dim = d;
  p.mortality = MortalityField::constant(0.5);
  p.competition = RadialKernel::gaussian(1.0, 1.0, 5.0);
  p.fission = FissionKernel::factorized(1.0, RadialKernel::gaussian(1.0, 0.5, 6.0), d);
  return p;
}

}  // namespace

TEST(RadialKernel, GaussianMassMatchesQuadrature) {
  const auto a = RadialKernel::gaussian(1.0, 1.0, 5.0);
  const double oracle = quad::adaptive_simpson([](double x) { return std::exp(-0.5 * x * x); }, -5.0, 5.0, 1e-14);
  EXPECT_NEAR(a.mass(1), oracle, 1e-12);
  EXPECT_NEAR(a.mass(1), std::sqrt(2.0 * std::numbers::pi) * std::erf(5.0 / std::sqrt(2.0)), 1e-12);
  // truncated mass is the tail beyond 5 sigma
  EXPECT_NEAR(a.truncated_mass(1), std::sqrt(2.0 * std::numbers::pi) * std::erfc(5.0 / std::sqrt(2.0)), 1e-12);
}

TEST(RadialKernel, MassesInHigherDimensions) {
  for (int d = 2; d <= 3; ++d) {
    for (const auto& k : {RadialKernel::gaussian(2.0, 0.7, 3.0), RadialKernel::exponential(1.5, 0.4, 2.0),
                          RadialKernel::tabulated({0.0, 0.5, 1.0}, {1.0, 0.6, 0.0}, 1.0)}) {
      // midpoint rule on a Cartesian grid
      const int n = d == 2 ? 1200 : 240;
      const double h = 2.0 * k.cutoff() / n;
      double oracle = 0.0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          for (int l = 0; l < (d == 3 ? n : 1); ++l) {
            const Point x{-k.cutoff() + (i + 0.5) * h, -k.cutoff() + (j + 0.5) * h,
                          d == 3 ? -k.cutoff() + (l + 0.5) * h : 0.0};
            oracle += k.at(x, d);
          }
      oracle *= std::pow(h, d);
      EXPECT_NEAR(k.mass(d), oracle, 3e-3 * oracle) << to_string(k.shape()) << " d=" << d;
    }
  }
}

TEST(RadialKernel, ExactZeroBeyondCutoffAndBounded) {
  const auto a = RadialKernel::exponential(2.0, 0.5, 1.5);
  EXPECT_EQ(a(1.5000001), 0.0);
  EXPECT_GT(a(1.5), 0.0);
  for (double r = 0.0; r < 2.0; r += 0.01) {
    EXPECT_GE(a(r), 0.0);
    EXPECT_LE(a(r), a.sup());
  }
  EXPECT_TRUE(a.radially_nonincreasing());
}

TEST(RadialKernel, TabulatedFromCsv) {
  const std::string path = testing::TempDir() + "/kernel_table.csv";
  {
    std::ofstream out(path);
    out << "r,value\n0,2\n1,1\n2,0\n";
  }
  const auto k = RadialKernel::from_csv(path, 2.0);
  EXPECT_DOUBLE_EQ(k(0.5), 1.5);
  EXPECT_NEAR(k.mass(1), 4.0, 1e-14);
  const auto missing = RadialKernel::from_csv(path, std::nullopt);
  EXPECT_FALSE(missing.has_cutoff());
}

TEST(Validate, GaussianCompetitionPasses) {
  const auto rep = validate_params(gaussian_model(1));
  EXPECT_TRUE(rep.passed());
  const double oracle = quad::adaptive_simpson([](double x) { return std::exp(-0.5 * x * x); }, -5.0, 5.0, 1e-14);
  EXPECT_NEAR(rep.constants.a_mass, oracle, 1e-10);
  EXPECT_DOUBLE_EQ(rep.constants.a_sup, 1.0);
  EXPECT_GT(rep.constants.a_lower, 0.0);
  EXPECT_DOUBLE_EQ(rep.constants.b_mass, 1.0);
}

TEST(Validate, ZeroCompetitionFailsItemTwo) {
  auto p = gaussian_model(1);
  p.competition = RadialKernel::zero();
  const auto rep = validate_params(p);
  EXPECT_TRUE(rep.well_formed());
  EXPECT_FALSE(rep.passed());
  EXPECT_TRUE(rep.item(0).passed);
  EXPECT_FALSE(rep.item(1).passed);
  EXPECT_NE(rep.item(1).message.find("no r with a_r > 0"), std::string::npos);
}

TEST(Validate, MalformedKernels) {
  auto p = gaussian_model(1);
  p.competition = RadialKernel::gaussian(-1.0, 1.0, 3.0);
  EXPECT_NE(std::find(validate_params(p).errors.begin(), validate_params(p).errors.end(), ErrorCode::NegativeKernel),
            validate_params(p).errors.end());
  p.competition = RadialKernel::tabulated({0.0, 1.0}, {1.0, 0.0}, std::nullopt);
  const auto rep = validate_params(p);
  EXPECT_EQ(rep.errors.front(), ErrorCode::MissingCutoff);
  p.competition = RadialKernel::gaussian(std::numeric_limits<double>::infinity(), 1.0, 3.0);
  const auto rep2 = validate_params(p);
  EXPECT_NE(std::find(rep2.errors.begin(), rep2.errors.end(), ErrorCode::NonFiniteMass), rep2.errors.end());
}

TEST(Validate, BolkerPacalaBetaIsScaledDispersal) {
  ModelParams p = gaussian_model(2);
  const auto q = RadialKernel::gaussian(1.0, 0.3, 3.0);
  p.fission = FissionKernel::bolker_pacala(1.5, q, 2);
  const auto rep = validate_params(p);
  EXPECT_TRUE(rep.passed());
  const auto qn = q.normalized(2);
  for (double u : {0.0, 0.2, 0.5, 1.0}) EXPECT_NEAR(p.fission.beta(u), 1.5 * qn(u), 1e-14);
  EXPECT_NEAR(p.fission.beta_mass(), 1.5, 1e-8);
}

TEST(Beta, FactorizedGaussianIsWiderGaussian) {
  for (int d = 1; d <= 3; ++d) {
    const double s = 0.5;
    const auto f = FissionKernel::factorized(2.0, RadialKernel::gaussian(1.0, s, 10.0), d);
    for (double u : {0.0, 0.3, 1.0, 2.0}) {
      const double oracle = 2.0 * std::pow(4.0 * std::numbers::pi * s * s, -0.5 * d) * std::exp(-u * u / (4 * s * s));
      EXPECT_NEAR(f.beta(u), oracle, 1e-12 * oracle) << d;
    }
    EXPECT_NEAR(f.beta_mass(), 2.0, 2e-8);
  }
}

TEST(Beta, GaussianCrossCheckByQuadrature) {
  // 1-d autocorrelation by direct quadrature
  const double s = 0.5;
  const auto q = RadialKernel::gaussian(1.0, s, 10.0).normalized(1);
  const auto f = FissionKernel::factorized(1.0, q, 1);
  for (double u : {0.0, 0.4, 1.3}) {
    const double direct = quad::adaptive_simpson([&](double z) { return q(z) * q(z + u); }, -10.0, 10.0, 1e-14);
    EXPECT_NEAR(f.beta(u), direct, 1e-10);
  }
}

TEST(Beta, VanishesBeyondTwiceTheCutoff) {
  const auto f = FissionKernel::factorized(1.0, RadialKernel::tophat(1.0, 0.5), 2);
  EXPECT_EQ(f.beta(1.0000001), 0.0);
  EXPECT_GT(f.beta(0.99), 0.0);
  const auto g = FissionKernel::factorized(1.0, RadialKernel::exponential(1.0, 0.3, 1.0), 2);
  EXPECT_EQ(g.beta(2.01), 0.0);
}

TEST(Beta, TophatIntegratesToTotalMass) {
  for (int d = 1; d <= 3; ++d) {
    const auto f = FissionKernel::factorized(1.3, RadialKernel::tophat(1.0, 0.8), d);
    EXPECT_NEAR(f.beta_mass(), 1.3, 1.3e-8) << d;
    // beta(0) = <b> \int q^2 = <b> / vol
    EXPECT_NEAR(f.beta(0.0), 1.3 / (unit_ball_volume(d) * std::pow(0.8, d)), 1e-12);
  }
}

TEST(Beta, TabulatedPathMatchesDirectConvolution) {
  const auto q = RadialKernel::exponential(1.0, 0.3, 1.2).normalized(1);
  const auto f = FissionKernel::factorized(1.0, q, 1);
  for (double u : {0.0, 0.21, 0.75, 1.9}) {
    const double direct = quad::adaptive_simpson([&](double z) { return q(z) * q(z + u); }, -1.2, 1.2, 1e-14, 40, 64);
    EXPECT_NEAR(f.beta(u), direct, 2e-4 * f.beta(0.0));
  }
  EXPECT_NEAR(f.beta_mass(), 1.0, 1e-4);
  for (int d = 2; d <= 3; ++d) {
    const auto fd = FissionKernel::factorized(1.0, RadialKernel::exponential(1.0, 0.3, 1.2), d);
    EXPECT_NEAR(fd.beta_mass(), 1.0, 2e-3) << d;
  }
}

TEST(Sampling, DiracDispersalSitsOnParent) {
  const auto f = FissionKernel::factorized(1.0, RadialKernel::dirac(), 2);
  Rng rng(1);
  const Point x{0.3, 0.7, 0.0};
  const auto [y1, y2] = f.sample_unmollified(x, rng);
  EXPECT_EQ(y1, x);
  EXPECT_EQ(y2, x);
}

TEST(Sampling, FactorizedGaussianMeanWithinClt) {
  const double s = 0.4;
  const auto f = FissionKernel::factorized(1.0, RadialKernel::gaussian(1.0, s, 10.0), 1);
  Rng rng(7);
  const int n = 100000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto [y1, y2] = f.sample_unmollified(Point{1.0, 0.0, 0.0}, rng);
    sum += y1[0] - 1.0;
    sum2 += (y2[0] - 1.0) * (y2[0] - 1.0);
  }
  EXPECT_LT(std::abs(sum / n), 4.0 * s / std::sqrt(n));
  EXPECT_NEAR(sum2 / n, s * s, 5.0 * s * s * std::sqrt(2.0 / n));
}

TEST(Sampling, BolkerPacalaOneOffspringAtParent) {
  const auto f = FissionKernel::bolker_pacala(1.0, RadialKernel::gaussian(1.0, 0.5, 3.0), 2);
  Rng rng(3);
  const Point x{0.1, 0.2, 0.0};
  for (int i = 0; i < 2000; ++i) {
    const auto [y1, y2] = f.sample_unmollified(x, rng);
    const double m = std::min(norm(y1 - x, 2), norm(y2 - x, 2));
    ASSERT_EQ(m, 0.0);
  }
}

TEST(Sampling, OffspringMarginalsExchangeable) {
  for (auto f : {FissionKernel::factorized(1.0, RadialKernel::exponential(1.0, 0.5, 3.0), 1),
                 FissionKernel::bolker_pacala(1.0, RadialKernel::gaussian(1.0, 0.5, 3.0), 1)}) {
    Rng rng(11);
    const int n = 100000;
    std::vector<double> a(n), b(n);
    for (int i = 0; i < n; ++i) {
      const auto [y1, y2] = f.sample_unmollified(Point{0.0, 0.0, 0.0}, rng);
      a[i] = y1[0];
      b[i] = y2[0];
    }
    EXPECT_GT(oracle::ks_two_sample_pvalue(a, b), 0.01);
  }
}

TEST(Sampling, TabulatedRadiusLaw) {
  // density proportional to (1 - r) on [0,1] in d = 1: CDF 2r - r^2 on |y|
  const auto q = RadialKernel::tabulated({0.0, 1.0}, {1.0, 0.0}, 1.0);
  Rng rng(5);
  std::vector<double> r(20000);
  for (auto& v : r) v = std::abs(q.sample(1, rng)[0]);
  EXPECT_GT(oracle::ks_one_sample_pvalue(r, [](double x) { return std::clamp(2 * x - x * x, 0.0, 1.0); }), 0.01);
}

TEST(Mollify, SigmaZeroIsIdentity) {
  const auto f = FissionKernel::factorized(1.0, RadialKernel::gaussian(1.0, 0.5, 5.0), 2);
  const auto g = mollify(f, 0.0);
  EXPECT_EQ(g.sigma(), 0.0);
  Rng r1(9), r2(9);
  for (int i = 0; i < 100; ++i) {
    const auto a = f.sample(Point{0.2, 0.1, 0.0}, r1);
    const auto b = g.sample(Point{0.2, 0.1, 0.0}, r2);
    ASSERT_TRUE(a && b);
    EXPECT_EQ(a->first, b->first);
    EXPECT_EQ(a->second, b->second);
  }
  EXPECT_DOUBLE_EQ(g.mass_at(Point{3.0, 0.0, 0.0}), 1.0);
  EXPECT_THROW(mollify(f, -1.0), Error);
}

TEST(Mollify, PhiAtOriginAndDeficitMass) {
  const auto f = FissionKernel::factorized(1.0, RadialKernel::gaussian(1.0, 0.5, 5.0), 1);
  const auto g = mollify(f, 0.3);
  EXPECT_EQ(g.phi(Point{0.0, 0.0, 0.0}), 1.0);
  for (double x : {0.0, 0.5, 2.0}) {
    const double m = g.mass_at(Point{x, 0.0, 0.0});
    // gaussian closed form: \int q(z) exp(-sigma (x+z)^2) dz
    const double s2 = 0.25, sig = 0.3;
    const double inner = std::exp(-sig * x * x / (1 + 2 * sig * s2)) / std::sqrt(1 + 2 * sig * s2);
    EXPECT_NEAR(m, inner * inner, 1e-8);
    EXPECT_LT(m, 1.0);
  }
}

TEST(Mollify, RejectionAcceptanceMatchesMass) {
  const auto g = mollify(FissionKernel::factorized(1.0, RadialKernel::gaussian(1.0, 0.5, 5.0), 1), 0.3);
  Rng rng(21);
  const int n = 50000;
  int accepted = 0;
  for (int i = 0; i < n; ++i) accepted += g.sample(Point{0.5, 0.0, 0.0}, rng).has_value();
  const double p = g.mass_at(Point{0.5, 0.0, 0.0});
  EXPECT_NEAR(static_cast<double>(accepted) / n, p, 4.0 * std::sqrt(p * (1 - p) / n));
}

TEST(Mortality, GridIsPeriodicAndBounded) {
  const auto m = MortalityField::grid({1.0, 2.0, 3.0, 4.0}, 2, 2.0, 2);
  EXPECT_DOUBLE_EQ(m(Point{0.5, 0.5, 0.0}), 1.0);
  EXPECT_DOUBLE_EQ(m(Point{1.5, 0.5, 0.0}), 2.0);
  EXPECT_DOUBLE_EQ(m(Point{0.5, 1.5, 0.0}), 3.0);
  EXPECT_DOUBLE_EQ(m(Point{2.5, 0.5, 0.0}), 1.0);
  EXPECT_DOUBLE_EQ(m.upper(), 4.0);
  EXPECT_DOUBLE_EQ(m.lower(), 1.0);
}

TEST(Constants, ConsistentWithComponents) {
  const auto p = gaussian_model(2);
  const auto c = p.constants();
  EXPECT_NEAR(c.a_mass, p.competition.mass(2), 1e-10 * c.a_mass);
  EXPECT_NEAR(c.beta_sup, p.fission.beta(0.0), 1e-10 * c.beta_sup);
  EXPECT_DOUBLE_EQ(c.m_upper, 0.5);
  EXPECT_DOUBLE_EQ(c.m_lower, 0.5);
}
