#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "fsim/gamma0.hpp"
#include "gamma0_oracles.hpp"
#include "test_models.hpp"

using namespace fsim;

namespace {

std::mt19937_64 rng_for(unsigned seed) { return std::mt19937_64(seed); }

}  // namespace

using namespace oracle;

TEST(MultisetIndex, CountsAndOrdering) {
  EXPECT_EQ(MultisetIndex(1, 2).size(), 3u);
  EXPECT_EQ(MultisetIndex(3, 2).size(), 10u);
  EXPECT_EQ(MultisetIndex(3, 0).size(), 1u);
  const MultisetIndex idx(3, 4);
  for (std::size_t i = 0; i < idx.size(); ++i) EXPECT_EQ(idx.index(idx.at(i)), i);
  EXPECT_EQ(idx.begin_of_size(2), 4u);
  EXPECT_THROW(idx.index({0, 0, 0, 0, 0}), Error);
  EXPECT_THROW(MultisetIndex(50, 10), Error);
}

TEST(LpWeight, InverseFactorialOfOccupations) {
  EXPECT_DOUBLE_EQ(lp_weight({}), 1.0);
  EXPECT_DOUBLE_EQ(lp_weight({0, 1, 2}), 1.0);
  EXPECT_DOUBLE_EQ(lp_weight({0, 0, 1, 2, 2, 2}), 1.0 / 12.0);
}

TEST(LpSum, IndicatorOfEmpty) {
  auto g = Gamma0Function(3, 4);
  g.at({}) = 1.0;
  EXPECT_DOUBLE_EQ(lp_sum(g, 4), 1.0);
}

TEST(LpSum, ProductIsPartialExponentialSeries) {
  const int m = 3, n = 6;
  const double z = 0.7;
  const auto g = Gamma0Function::from(m, n, [&](const Multiset& e) { return std::pow(z, e.size()); });
  double series = 0.0;
  for (int k = 0; k <= n; ++k) series += std::pow(m * z, k) / factorial(k);
  EXPECT_NEAR(lp_sum(g, n), series, 1e-12);
}

TEST(LpSum, SingletonsOnTwoSites) {
  auto g = Gamma0Function(2, 3);
  g.at({0}) = 0.25;
  g.at({1}) = -1.5;
  EXPECT_DOUBLE_EQ(lp_sum(g), -1.25);
}

TEST(LpSum, MatchesOrderedTupleSeries) {
  auto rng = rng_for(1);
  for (int m = 1; m <= 3; ++m) {
    const auto g = random_function(m, 5, rng);
    EXPECT_NEAR(lp_sum(g, 5), tuple_lp_sum(g, 5), 1e-12);
  }
}

TEST(KTransform, IndicatorOfEmptyIsOne) {
  auto g = Gamma0Function(3, 3);
  g.at({}) = 1.0;
  const MultisetIndex all(3, 6);
  for (const auto& gamma : all.states()) EXPECT_DOUBLE_EQ(k_transform(g, gamma), 1.0);
}

TEST(KTransform, ProductFactorizes) {
  auto rng = rng_for(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> gv(4);
  for (auto& v : gv) v = u(rng);
  const auto g = Gamma0Function::from(4, 4, [&](const Multiset& e) { return product(gv, e); });
  const MultisetIndex all(4, 4);
  for (const auto& gamma : all.states()) {
    double expect = 1.0;
    for (int x : gamma) expect *= 1.0 + gv[static_cast<std::size_t>(x)];
    EXPECT_NEAR(k_transform(g, gamma), expect, 1e-12);
  }
}

TEST(KTransform, MatchesLabeledSubsetOracle) {
  auto rng = rng_for(3);
  const auto g = random_function(3, 4, rng);
  const MultisetIndex all(3, 6);
  for (const auto& gamma : all.states())
    EXPECT_NEAR(k_transform(g, gamma), bitmask_k_transform(g, gamma), 1e-12);
}

TEST(KTransform, InverseRoundTrip) {
  auto rng = rng_for(4);
  const auto h = random_function(3, 5, rng);
  const auto g = inverse_k_transform(h);
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(k_transform(g, h.state(i)), h[i], 1e-12);
}

TEST(KTransform, BoundedSupportGrowthBound) {
  // |KG(gamma)| <= C_G (1 + |gamma cap Lambda_G|)^{N_G}
  auto rng = rng_for(5);
  const int m = 4;
  const std::vector<bool> lambda{true, false, true, false};
  for (int n_g = 0; n_g <= 3; ++n_g) {
    auto g = random_function(m, n_g, rng);
    double c_g = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      bool inside = true;
      for (int x : g.state(i)) inside = inside && lambda[static_cast<std::size_t>(x)];
      if (!inside) g[i] = 0.0;
      c_g = std::max(c_g, std::abs(g[i]));
    }
    const MultisetIndex all(m, 6);
    for (const auto& gamma : all.states()) {
      int local = 0;
      for (int x : gamma) local += lambda[static_cast<std::size_t>(x)];
      EXPECT_LE(std::abs(k_transform(g, gamma)), c_g * std::pow(1.0 + local, n_g) + 1e-12);
    }
  }
}

TEST(Identities, ProductSplitsOffOneParticle) {
  // sum_{eta <= gamma} prod g = (1 + g(x)) sum_{eta <= gamma - x} prod g
  auto rng = rng_for(6);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> gv(3);
    for (auto& v : gv) v = u(rng);
    const auto g = Gamma0Function::from(3, 6, [&](const Multiset& e) { return product(gv, e); });
    const MultisetIndex all(3, 6);
    for (const auto& gamma : all.states()) {
      for (std::size_t p = 0; p < gamma.size(); ++p) {
        const double lhs = k_transform(g, gamma);
        const double rhs = (1.0 + gv[static_cast<std::size_t>(gamma[p])]) * k_transform(g, without_particle(gamma, p));
        ASSERT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(lhs)));
      }
    }
  }
}

TEST(Identities, LebesguePoissonSplitting) {
  // sum_eta w(eta) sum_{xi <= eta} G(xi, eta, eta - xi)
  //   = sum_xi sum_eta w(xi) w(eta) G(xi, eta + xi, eta)
  const int m = 3;
  for (int n_max = 0; n_max <= 5; ++n_max) {
    auto rng = rng_for(100 + n_max);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::map<std::tuple<Multiset, Multiset, Multiset>, double> table;
    auto G = [&](const Multiset& a, const Multiset& b, const Multiset& c) {
      auto [it, fresh] = table.try_emplace({a, b, c}, 0.0);
      if (fresh) it->second = u(rng);
      return it->second;
    };
    const MultisetIndex idx(m, n_max);
    double lhs = 0.0;
    for (const auto& eta : idx.states()) {
      const std::size_t n = eta.size();
      double inner = 0.0;
      for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
        Multiset xi, rest;
        for (std::size_t b = 0; b < n; ++b) ((mask >> b) & 1 ? xi : rest).push_back(eta[b]);
        inner += G(xi, eta, rest);
      }
      lhs += lp_weight(eta) * inner;
    }
    double rhs = 0.0;
    for (const auto& xi : idx.states())
      for (const auto& eta : idx.states()) {
        if (static_cast<int>(xi.size() + eta.size()) > n_max) continue;
        rhs += lp_weight(xi) * lp_weight(eta) * G(xi, merge(eta, xi), eta);
      }
    EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(lhs))) << n_max;
  }
}

TEST(Identities, PairingMatchesKTransformExpectation) {
  // sum_gamma (KG)(gamma) mu(gamma) = <<G, k_mu>>
  for (int n_max = 1; n_max <= 5; ++n_max) {
    auto rng = rng_for(200 + n_max);
    const auto mu = fixture::random_measure(3, n_max, rng);
    const auto k = correlation_of_measure(mu);
    for (int n_g = 0; n_g <= n_max; ++n_g) {
      const auto g = random_function(3, n_g, rng);
      double lhs = 0.0;
      for (std::size_t i = 0; i < mu.size(); ++i) lhs += k_transform(g, mu.state(i)) * mu[i];
      EXPECT_NEAR(lhs, pairing(g, k), 1e-12);
    }
  }
}

TEST(Identities, PositiveKTransformGivesPositivePairing) {
  auto rng = rng_for(7);
  const int n = 4;
  for (int trial = 0; trial < 50; ++trial) {
    // G with KG >= 0 on every multiset up to n, built through the inverse map
    auto h = random_function(3, n, rng, 0.0, 1.0);
    if (trial % 2 == 0)
      for (auto& v : h.values()) v = v < 0.5 ? 0.0 : v;
    const auto g = inverse_k_transform(h);
    for (const auto& gamma : h.index().states()) ASSERT_GE(k_transform(g, gamma), -1e-12);
    const auto mu = fixture::random_measure(3, n, rng);
    EXPECT_GE(pairing(g, correlation_of_measure(mu)), -1e-12);
  }
}

TEST(Correlation, PointMassOnEmpty) {
  auto r = Gamma0Function(3, 4);
  r.at({}) = 1.0;
  const auto k = correlation_from_density(r);
  for (std::size_t i = 0; i < k.size(); ++i) EXPECT_EQ(k[i], i == 0 ? 1.0 : 0.0);
}

TEST(Correlation, DiscretePoissonProduct) {
  const int m = 3, n = 6;
  const double z = 0.4;
  const auto r = Gamma0Function::from(m, n, [&](const Multiset& e) { return std::exp(-m * z) * std::pow(z, e.size()); });
  const auto k = correlation_from_density(r);
  for (std::size_t i = 0; i < k.size(); ++i) {
    const int len = static_cast<int>(k.state(i).size());
    double partial = 0.0;
    for (int j = 0; j <= n - len; ++j) partial += std::pow(m * z, j) / factorial(j);
    EXPECT_NEAR(k[i], std::pow(z, len) * std::exp(-m * z) * partial, 1e-14);
  }
  // the untruncated identity k = z^|eta| is approached as the cap grows
  EXPECT_NEAR(k({}), 1.0, 1e-3);
  EXPECT_NEAR(k({0}) / z, 1.0, 1e-2);
}

TEST(Correlation, HandTableOnTwoSites) {
  auto r = Gamma0Function(2, 2);
  const double r0 = 0.1, ra = 0.2, rb = 0.3, raa = 0.4, rab = 0.5, rbb = 0.6;
  r.at({}) = r0;
  r.at({0}) = ra;
  r.at({1}) = rb;
  r.at({0, 0}) = raa;
  r.at({0, 1}) = rab;
  r.at({1, 1}) = rbb;
  const auto k = correlation_from_density(r);
  EXPECT_NEAR(k({}), r0 + ra + rb + raa / 2 + rab + rbb / 2, 1e-15);
  EXPECT_NEAR(k({0}), ra + raa + rab, 1e-15);
  EXPECT_NEAR(k({1}), rb + rab + rbb, 1e-15);
  EXPECT_NEAR(k({0, 0}), raa, 1e-15);
  EXPECT_NEAR(k({0, 1}), rab, 1e-15);
  EXPECT_NEAR(k({1, 1}), rbb, 1e-15);
  // k(empty) is the total mass of the corresponding measure
  EXPECT_NEAR(k({}), lp_sum(r), 1e-15);
}

TEST(Correlation, MatchesLabeledCountOracle) {
  auto rng = rng_for(8);
  const auto mu = fixture::random_measure(3, 5, rng);
  const auto k = correlation_of_measure(mu);
  const auto oracle = labeled_correlation(mu, 5);
  for (std::size_t i = 0; i < k.size(); ++i) EXPECT_NEAR(k[i], oracle[i], 1e-12);
}

TEST(Density, RoundTripRecoversRandomDensity) {
  auto rng = rng_for(9);
  const auto r = random_function(3, 4, rng, 0.0, 1.0);
  const auto back = density_from_correlation(correlation_from_density(r));
  for (std::size_t i = 0; i < r.size(); ++i) EXPECT_NEAR(back[i], r[i], 1e-12);
  const auto k = random_function(3, 4, rng);
  const auto again = correlation_from_density(density_from_correlation(k));
  for (std::size_t i = 0; i < k.size(); ++i) EXPECT_NEAR(again[i], k[i], 1e-12);
}

TEST(Density, IndicatorOfEmptyCorrelation) {
  auto k = Gamma0Function(3, 3);
  k.at({}) = 1.0;
  const auto r = density_from_correlation(k);
  for (std::size_t i = 0; i < r.size(); ++i) EXPECT_EQ(r[i], i == 0 ? 1.0 : 0.0);
}

TEST(Density, PoissonProductRoundTrip) {
  const auto k = Gamma0Function::from(3, 5, [](const Multiset& e) { return std::pow(0.3, e.size()); });
  const auto again = correlation_from_density(density_from_correlation(k));
  for (std::size_t i = 0; i < k.size(); ++i) EXPECT_NEAR(again[i], k[i], 1e-14);
}

TEST(Generator, ConstantsAreAnnihilated) {
  const auto s = fixture::random_space(3, 11);
  const auto f = Gamma0Function::from(3, 4, [](const Multiset&) { return 2.5; });
  const auto lf = apply_generator(f, s);
  for (double v : lf.values()) EXPECT_NEAR(v, 0.0, 1e-13);
}

TEST(Generator, CountingFunction) {
  const auto s = fixture::random_space(3, 12);
  const auto f = Gamma0Function::from(3, 5, [](const Multiset& e) { return static_cast<double>(e.size()); });
  const auto lf = apply_generator(f, s);
  for (std::size_t i = 0; i < lf.size(); ++i) {
    const auto& g = lf.state(i);
    EXPECT_NEAR(lf[i], -s.mortality_total(g) - s.competition_total(g) + s.fission_total(g), 1e-12);
  }
}

TEST(Generator, SingleSitePureDeath) {
  DiscreteSpace s(1);
  s.set_mortality(0, 0.7);
  const auto f = Gamma0Function::from(1, 3, [](const Multiset& e) { return e.size() == 1 ? 1.0 : 0.0; });
  const auto lf = apply_generator(f, s);
  EXPECT_DOUBLE_EQ(lf({0}), -0.7);
}

TEST(Generator, RequiresHeadroom) {
  const auto s = fixture::random_space(2, 13);
  const auto f = Gamma0Function(2, 3);
  EXPECT_THROW(apply_generator(f, s, 3), Error);
  EXPECT_NO_THROW(apply_generator(f, s, 2));
  try {
    apply_generator(f, s, 3);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TruncationOverflow);
  }
}

TEST(FokkerPlanck, EmptyIsStationary) {
  const auto s = fixture::random_space(3, 14);
  auto mu = Gamma0Function(3, 3);
  mu.at({}) = 1.0;
  const auto out = apply_fokker_planck(mu, s);
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(FokkerPlanck, SingletonFlows) {
  const auto s = fixture::random_space(2, 15);
  auto mu = Gamma0Function(2, 1);
  mu.at({1}) = 1.0;
  const auto out = apply_fokker_planck(mu, s);
  EXPECT_NEAR(out({}), s.mortality(1), 1e-15);
  EXPECT_NEAR(out({0, 0}), s.fission(1, 0, 0), 1e-15);
  EXPECT_NEAR(out({0, 1}), 2.0 * s.fission(1, 0, 1), 1e-15);
  EXPECT_NEAR(out({1, 1}), s.fission(1, 1, 1), 1e-15);
  EXPECT_NEAR(out({1}), -(s.mortality(1) + s.row_mass(1)), 1e-15);
  double total = 0.0;
  for (double v : out.values()) total += v;
  EXPECT_NEAR(total, 0.0, 1e-15);
}

TEST(FokkerPlanck, AdjointToGenerator) {
  for (int trial = 0; trial < 20; ++trial) {
    auto rng = rng_for(300 + trial);
    const auto s = fixture::random_space(3, 400 + trial);
    const auto mu = fixture::random_measure(3, 3, rng);
    const auto f = random_function(3, 4, rng);
    const auto lf = apply_generator(f, s, 3);
    const auto lmu = apply_fokker_planck(mu, s);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) lhs += lf[i] * mu[i];
    for (std::size_t i = 0; i < lmu.size(); ++i) rhs += f(lmu.state(i)) * lmu[i];
    EXPECT_NEAR(lhs, rhs, 1e-12);
  }
}

TEST(LDelta, VanishesOnEmpty) {
  auto rng = rng_for(16);
  const auto s = fixture::random_space(3, 17);
  for (int t = 0; t < 10; ++t) {
    const auto k = random_function(3, 4, rng);
    EXPECT_NEAR(apply_l_delta(k, s)({}), 0.0, 1e-13);
  }
}

TEST(LDelta, SingletonClosedFormForPoissonCorrelation) {
  const auto s = fixture::random_space(2, 18);
  const double z = 0.6;
  const auto k = Gamma0Function::from(2, 3, [&](const Multiset& e) { return std::pow(z, e.size()); });
  const auto lk = apply_l_delta(k, s);
  for (int y = 0; y < 2; ++y) {
    double comp = 0.0, offspring = 0.0;
    for (int x = 0; x < 2; ++x) {
      comp += s.competition(x, y);
      for (int y2 = 0; y2 < 2; ++y2) offspring += s.fission(x, y, y2);
    }
    const double expect = -(s.mortality(y) + s.row_mass(y)) * z - z * z * comp + 2.0 * z * offspring;
    EXPECT_NEAR(lk({y}), expect, 1e-14);
    const auto t = l_delta_terms(k, s, {y});
    EXPECT_EQ(t.a2, 0.0);
    EXPECT_NEAR(t.b1, -z * z * comp, 1e-15);
  }
}

TEST(LDelta, DualityWithGeneratorOnCoherentStates) {
  // <<L^Delta k_mu, e(theta)>> = sum_gamma (L F^theta)(gamma) mu(gamma)
  const int m = 3, n = 3;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    auto rng = rng_for(500 + trial);
    const auto s = fixture::random_space(m, 600 + trial);
    const auto mu = fixture::random_measure(m, n, rng);
    const auto theta = fixture::random_theta(m, rng);
    const auto k = correlation_of_measure(mu, n + 2);
    const auto lk = apply_l_delta(k, s, n + 1);
    const double lhs = pairing(lebesgue_poisson_exponential(theta, n + 1), lk);
    const auto lf = apply_generator(coherent_observable(theta, n + 1), s, n);
    double rhs = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) rhs += lf[i] * mu[i];
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(LDelta, ConservesTotalMass) {
  // k_t(empty) is the total mass, constant in time
  auto rng = rng_for(19);
  const auto s = fixture::random_space(3, 20);
  const auto mu = fixture::random_measure(3, 3, rng);
  EXPECT_NEAR(apply_l_delta(correlation_of_measure(mu, 5), s, 4)({}), 0.0, 1e-13);
}

TEST(LocalTruncation, FullRegionFullCapIsIdentity) {
  auto rng = rng_for(21);
  const auto r = random_function(3, 4, rng, 0.0, 1.0);
  const auto lt = local_truncation(r, {true, true, true}, 4);
  const auto k = correlation_from_density(r);
  for (std::size_t i = 0; i < r.size(); ++i) {
    EXPECT_DOUBLE_EQ(lt.density[i], r[i]);
    EXPECT_NEAR(lt.correlation[i], k[i], 1e-14);
  }
}

TEST(LocalTruncation, ZeroCapKeepsOnlyEmpty) {
  auto rng = rng_for(22);
  const auto r = random_function(3, 4, rng, 0.0, 1.0);
  const auto lt = local_truncation(r, {true, true, true}, 0);
  for (std::size_t i = 0; i < r.size(); ++i) {
    EXPECT_EQ(lt.density[i], i == 0 ? r({}) : 0.0);
    EXPECT_EQ(lt.correlation[i], i == 0 ? r({}) : 0.0);
  }
}

TEST(LocalTruncation, HalfRegionRestrictsCorrelation) {
  auto rng = rng_for(23);
  const std::vector<bool> region{true, false, true, false};
  const int n_max = 4;
  const auto r = random_function(4, n_max, rng, 0.0, 1.0);
  const auto k = correlation_from_density(r);
  auto inside = [&](const Multiset& e) {
    for (int x : e)
      if (!region[static_cast<std::size_t>(x)]) return false;
    return true;
  };
  // cap covering the support: q0 = k 1_Lambda
  const auto full = local_truncation(r, region, n_max);
  for (std::size_t i = 0; i < k.size(); ++i)
    EXPECT_NEAR(full.correlation[i], inside(k.state(i)) ? k[i] : 0.0, 1e-13);
  // smaller caps: explicit truncated double sum, and q0 <= k
  for (int n = 0; n < n_max; ++n) {
    const auto lt = local_truncation(r, region, n);
    for (std::size_t i = 0; i < k.size(); ++i) {
      const Multiset& eta = k.state(i);
      double expect = 0.0;
      if (inside(eta) && static_cast<int>(eta.size()) <= n) {
        for (const auto& xi : r.index().states()) {
          if (!inside(xi) || static_cast<int>(eta.size() + xi.size()) > n) continue;
          for (const auto& zeta : r.index().states()) {
            bool outside = true;
            for (int x : zeta) outside = outside && !region[static_cast<std::size_t>(x)];
            if (!outside) continue;
            const Multiset all = merge(merge(eta, xi), zeta);
            if (static_cast<int>(all.size()) > n_max) continue;
            expect += lp_weight(xi) * lp_weight(zeta) * r(all);
          }
        }
      }
      EXPECT_NEAR(lt.correlation[i], expect, 1e-13);
      EXPECT_LE(lt.correlation[i], k[i] + 1e-13);
    }
  }
}

TEST(KAlphaNorm, Examples) {
  const double z = 1.7;
  const auto k = Gamma0Function::from(3, 5, [&](const Multiset& e) { return std::pow(z, e.size()); });
  EXPECT_NEAR(k_alpha_norm(k, std::log(z)), 1.0, 1e-14);
  auto ind = Gamma0Function(3, 4);
  ind.at({}) = 1.0;
  for (double a : {-2.0, 0.0, 3.0}) EXPECT_DOUBLE_EQ(k_alpha_norm(ind, a), 1.0);
  auto rng = rng_for(24);
  auto r = random_function(3, 4, rng);
  const double base = k_alpha_norm(r, 0.3);
  r *= -2.5;
  EXPECT_NEAR(k_alpha_norm(r, 0.3), 2.5 * base, 1e-14);
}

TEST(Serialization, JsonRoundTrip) {
  auto rng = rng_for(25);
  const auto g = random_function(3, 3, rng);
  const auto j = g.to_json();
  EXPECT_EQ(j.at("values").at(4).at("state"), nlohmann::json::array({0, 0}));
  const auto h = Gamma0Function::from_json(j);
  EXPECT_EQ(h.values(), g.values());
}
