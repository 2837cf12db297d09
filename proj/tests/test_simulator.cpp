#include <gtest/gtest.h>

#include "slowfast/simulator.hpp"
#include "slowfast/stats.hpp"
#include "support.hpp"

using namespace slowfast;
using namespace testing_support;

namespace {

SpectralField rough_field(std::size_t n) {
  SpectralField u(n);
  for (std::size_t k = 1; k <= n; ++k) u[k - 1] = 1.0 / static_cast<double>(k);
  return u;
}

}  // namespace

TEST(StepScheme, CountsAndValidation) {
  EXPECT_EQ(step_count(1.0, 0.25), 4u);
  EXPECT_EQ(step_count(1.2, 0.03), 40u);
  EXPECT_THROW(step_count(1.0, 0.3), ConfigError);
  EXPECT_THROW(step_count(1.0, 0.0), ConfigError);
  EXPECT_THROW(validate_eps(1.5), ConfigError);
  EXPECT_THROW(validate_eps(1.0), ConfigError);
  EXPECT_THROW(validate_eps(0.0), ConfigError);
  const StepScheme s{0.03, 0.1};
  EXPECT_EQ(s.substeps(0.1), 3u);
  EXPECT_EQ(s.substeps(0.003), 100u);
}

TEST(SlowFast, DeterministicLinearCaseIsPureDecay) {
  ModelConfig c = custom_model(zero_drift, zero_drift, 0.0, 0.0, 0.0, 8);
  const SpectralField x0 = rough_field(8);
  const double eps = 0.05;
  SlowFastState s{x0, x0, 0.0, eps};
  NoiseStream w1(1), w2(2);
  const auto path = simulate_slow_fast(s, {0.01, 0.1}, 0.5, w1, w2, c);
  const SpectralField& x = path.x.back();
  const SpectralField& y = path.y.back();
  for (std::size_t k = 1; k <= 8; ++k) {
    EXPECT_NEAR(x.mode(k), std::exp(-c.eigs(k) * 0.5) * x0.mode(k), 1e-12);
    EXPECT_NEAR(y.mode(k), std::exp(-c.eigs(k) * 0.5 / eps) * x0.mode(k), 1e-12);
  }
}

TEST(SlowFast, ConstantDriftSingleStep) {
  const double cval = 0.7, dt = 0.02;
  ModelConfig c = custom_model([=](double, double) { return cval; }, zero_drift, 0.0, 1.0, 0.0, 8);
  const SpectralField x0 = rough_field(8);
  SlowFastState s{x0, SpectralField(8), 0.0, 0.1};
  NoiseStream w1(3), w2(4);
  const SlowFastState next = step_slow_fast(s, {dt, 0.1}, w1, w2, c);
  const SpectralField proj = direct_from_grid(std::vector<double>(c.m_points, cval), 8);
  for (std::size_t k = 1; k <= 8; ++k)
    EXPECT_NEAR(next.x.mode(k), std::exp(-c.eigs(k) * dt) * (x0.mode(k) + dt * proj.mode(k)), 1e-13);
  EXPECT_DOUBLE_EQ(next.t, dt);
}

TEST(SlowFast, BitIdenticalReruns) {
  const ModelConfig c = heat_example(0.1, 0.1, 16);
  auto run = [&] {
    NoiseStream w1 = NoiseStream::derive(9, 0, NoiseRole::slow);
    NoiseStream w2 = NoiseStream::derive(9, 0, NoiseRole::fast);
    return simulate_slow_fast({SpectralField(16), SpectralField(16), 0.0, 0.01}, {1e-2, 0.1}, 0.2,
                              w1, w2, c);
  };
  const auto a = run(), b = run();
  for (std::size_t i = 0; i < a.x.size(); ++i) {
    ASSERT_EQ(a.x[i].vector(), b.x[i].vector());
    ASSERT_EQ(a.y[i].vector(), b.y[i].vector());
  }
}

TEST(SlowFast, NonFiniteDriftIsIntegrationError) {
  ModelConfig c = custom_model([](double x, double) { return 1.0 / x; }, zero_drift, 1.0, 1.0, 0.0, 4);
  SlowFastState s{SpectralField(4), SpectralField(4), 0.0, 0.1};
  NoiseStream w1(1), w2(2);
  EXPECT_THROW(step_slow_fast(s, {0.01, 0.1}, w1, w2, c), IntegrationError);
}

TEST(Frozen, StationaryVarianceOfLinearFastEquation) {
  ModelConfig c = custom_model(zero_drift, zero_drift, 1.0, 1.0, 0.0, 8);
  const double horizon = 6.0;
  const std::size_t n = 2000;
  RunningStats v1, v2;
  for (std::size_t i = 0; i < n; ++i) {
    NoiseStream w2 = NoiseStream::derive(5, i, NoiseRole::fast);
    const auto path = simulate_frozen(SpectralField(8), SpectralField(8), horizon, 0.5, w2, c);
    v1.add(std::pow(path.back().mode(1), 2));
    v2.add(std::pow(path.back().mode(2), 2));
  }
  for (auto [k, st] : {std::pair<std::size_t, RunningStats*>{1, &v1}, {2, &v2}}) {
    const double lam = c.eigs(k);
    const double expected = c.q2(lam) * (-std::expm1(-2.0 * lam * horizon)) / (2.0 * lam);
    EXPECT_LT(std::fabs(st->mean() - expected), 4.0 * st->std_error()) << "mode " << k;
  }
}

TEST(Frozen, LinearContractionIsExactSemigroup) {
  ModelConfig c = custom_model(zero_drift, zero_drift, 1.0, 1.0, 0.0, 8);
  NoiseStream s(8);
  const SpectralField ya = random_field(s, 8), yb = random_field(s, 8);
  NoiseStream wa(12), wb(12);
  const auto pa = simulate_frozen(SpectralField(8), ya, 4.0, 0.1, wa, c);
  const auto pb = simulate_frozen(SpectralField(8), yb, 4.0, 0.1, wb, c);
  const double d0 = distance(ya, yb);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const double t = 0.1 * static_cast<double>(i);
    EXPECT_LE(distance(pa[i], pb[i]), std::exp(-c.eigs(1) * t) * d0 * (1 + 1e-12) + 1e-14);
  }
}

TEST(Frozen, HeatContractionWithSharedNoise) {
  const ModelConfig c = heat_example(0.1, 0.1, 32);
  NoiseStream s(31);
  for (int rep = 0; rep < 20; ++rep) {
    const SpectralField ya = random_field(s, 32, 2.0, 8), yb = random_field(s, 32, 2.0, 8);
    NoiseStream wa = NoiseStream::derive(40, rep, NoiseRole::fast), wb = wa;
    const auto pa = simulate_frozen(SpectralField(32), ya, 4.0, 0.01, wa, c);
    const auto pb = simulate_frozen(SpectralField(32), yb, 4.0, 0.01, wb, c);
    const double d0 = (ya - yb).squared_norm();
    for (double t : {1.0, 2.0, 4.0}) {
      const auto i = static_cast<std::size_t>(std::lround(t / 0.01));
      EXPECT_LE((pa[i] - pb[i]).squared_norm() / d0, std::exp(-c.spectral_gap() * t) * 1.1);
    }
  }
}

TEST(Averaged, ZeroDriftMatchesFrozenLinearUnderMatchedNoise) {
  ModelConfig c = custom_model(zero_drift, zero_drift, 0.8, 0.8, 0.0, 8);
  const SpectralField x0 = rough_field(8);
  NoiseStream w1(77), w2(77);
  const auto avg = simulate_averaged(x0, 1.0, 0.01, w1,
                                     [](const SpectralField& x) { return SpectralField(x.n_modes()); },
                                     c);
  const auto frz = simulate_frozen(SpectralField(8), x0, 1.0, 0.01, w2, c);
  ASSERT_EQ(avg.size(), frz.size());
  for (std::size_t i = 0; i < avg.size(); ++i) EXPECT_EQ(avg[i].vector(), frz[i].vector());
}

TEST(Averaged, ConstantDriftMeanMatchesLinearOde) {
  ModelConfig c = custom_model(zero_drift, zero_drift, 1.0, 1.0, 0.0, 8);
  const double cval = 2.0, horizon = 1.0, x1 = 0.5;
  const AveragedDrift bbar = [&](const SpectralField& x) {
    return cval * SpectralField::basis(x.n_modes(), 1);
  };
  SpectralField x0(8);
  x0[0] = x1;
  RunningStats m;
  for (std::size_t i = 0; i < 1000; ++i) {
    NoiseStream w1 = NoiseStream::derive(6, i, NoiseRole::slow);
    m.add(simulate_averaged(x0, horizon, 0.01, w1, bbar, c).back().mode(1));
  }
  const double lam = c.eigs(1);
  const double exact = std::exp(-lam * horizon) * x1 + cval * (1 - std::exp(-lam * horizon)) / lam;
  EXPECT_LT(std::fabs(m.mean() - exact), 3.0 * m.std_error());
}

TEST(Averaged, SecondMomentBounded) {
  const ModelConfig c = heat_example(0.1, 0.1, 16);
  const AveragedDrift bbar = [&](const SpectralField& x) {
    SpectralField b(x.n_modes());
    for (std::size_t k = 0; k < b.n_modes(); ++k) b[k] = std::sin(x[k]);
    return b;
  };
  for (double scale : {0.0, 2.0, 8.0}) {
    const SpectralField x0 = scale * rough_field(16);
    RunningStats sup;
    for (std::size_t i = 0; i < 100; ++i) {
      NoiseStream w1 = NoiseStream::derive(2, i, NoiseRole::slow);
      double m = 0.0;
      for (const auto& x : simulate_averaged(x0, 1.0, 0.01, w1, bbar, c)) m = std::max(m, x.squared_norm());
      sup.add(m);
    }
    // |bbar| <= sqrt(16) and the semigroup contracts, so |X|^2 <= 2(|x|+T|bbar|)^2 + 2 sup|conv|^2.
    EXPECT_LE(sup.mean(), 2.0 * std::pow(x0.norm() + 4.0, 2) + 2.0 * 4.0);
  }
}

TEST(Auxiliary, SingleBlockEqualsFrozenAtInitialState) {
  const ModelConfig c = heat_example(0.1, 0.1, 16);
  const double eps = 0.02, dt = 0.01, horizon = 0.2;
  const StepScheme scheme{dt, 0.1};
  NoiseStream s(3);
  const SpectralField x0 = random_field(s, 16), y0 = random_field(s, 16);
  NoiseStream w1(10), w2(11);
  const auto path = simulate_slow_fast({x0, y0, 0.0, eps}, scheme, horizon, w1, w2, c);
  NoiseStream a2(12), f2(12);
  const auto aux = simulate_auxiliary_fast(path.x, y0, horizon, scheme, eps, a2, c);
  const std::size_t nsub = scheme.substeps(eps);
  const double hf = dt / static_cast<double>(nsub);
  const auto frz = simulate_frozen(x0, y0, horizon / eps, hf / eps, f2, c);
  ASSERT_EQ(frz.size(), (aux.size() - 1) * nsub + 1);
  for (std::size_t i = 0; i < aux.size(); ++i) EXPECT_EQ(aux[i].vector(), frz[i * nsub].vector());
}

TEST(Auxiliary, FastDriftFreeOfSlowVariableReproducesFastPath) {
  ModelConfig c = custom_model([](double x, double y) { return std::sin(x + y); },
                               [](double, double y) { return 0.3 * std::cos(y); }, 1.0, 1.0, 0.3, 16);
  const StepScheme scheme{1.0 / 64, 0.1};
  NoiseStream w1(1), w2(2), a2(2);
  const auto path =
      simulate_slow_fast({rough_field(16), SpectralField(16), 0.0, 0.01}, scheme, 0.5, w1, w2, c);
  for (double delta : {1.0 / 64, 1.0 / 8}) {
    NoiseStream v2(2);
    const auto aux = simulate_auxiliary_fast(path.x, SpectralField(16), delta, scheme, 0.01, v2, c);
    for (std::size_t i = 0; i < aux.size(); ++i) ASSERT_EQ(aux[i].vector(), path.y[i].vector());
  }
  EXPECT_THROW(simulate_auxiliary_fast(path.x, SpectralField(16), 0.01, scheme, 0.01, a2, c),
               ConfigError);
}

// t^theta E||X_t||_theta^2 stays bounded from a rough start; the bound is
// the value observed for this seed with a 50% margin.
TEST(SlowFast, SmoothingFromRoughInitialState) {
  const ModelConfig c = heat_example(0.1, 0.1, 32);
  const double theta = 0.55, dt = 1e-3;
  const std::size_t n_paths = 40;
  const SpectralField x0 = 3.0 * rough_field(32);
  std::vector<RunningStats> m(1001);
  for (std::size_t i = 0; i < n_paths; ++i) {
    NoiseStream w1 = NoiseStream::derive(4, i, NoiseRole::slow);
    NoiseStream w2 = NoiseStream::derive(4, i, NoiseRole::fast);
    const auto p = simulate_slow_fast({x0, SpectralField(32), 0.0, 0.1}, {dt, 0.1}, 1.0, w1, w2, c);
    for (std::size_t j = 0; j < p.x.size(); ++j) m[j].add(std::pow(h_norm(p.x[j], c.eigs, theta), 2));
  }
  double worst = 0.0;
  for (std::size_t j = 1; j < m.size(); ++j)
    worst = std::max(worst, std::pow(dt * static_cast<double>(j), theta) * m[j].mean());
  EXPECT_LT(worst, 1.5 * 6.13);
  EXPECT_GT(worst, 0.0);
}
