#include <gtest/gtest.h>

#include "slowfast/averaging.hpp"
#include "support.hpp"

using namespace slowfast;
using namespace testing_support;

namespace {

AveragingParams quick_params(std::size_t replicas = 8) {
  AveragingParams p;
  p.burn_in = 10.0;
  p.avg_time = 50.0;
  p.dt = 0.05;
  p.replicas = replicas;
  return p;
}

// For F = 0 the frozen law is Gaussian with variance
// sigma^2(xi) = sum_k q_k / (2 lambda_k) e_k(xi)^2 at each grid point, so
// E cos(Y(xi)) = exp(-sigma^2(xi) / 2).
SpectralField cosine_oracle(const ModelConfig& c) {
  std::vector<double> g(c.m_points);
  for (std::size_t j = 0; j < c.m_points; ++j) {
    const double xi = GridField::node(j, c.m_points);
    double var = 0.0;
    for (std::size_t k = 1; k <= c.n_modes; ++k)
      var += c.q2(c.eigs(k)) / (2.0 * c.eigs(k)) * std::pow(basis_value(k, xi), 2);
    g[j] = std::exp(-0.5 * var);
  }
  return direct_from_grid(g, c.n_modes);
}

}  // namespace

TEST(AveragingParams, DefaultsAndValidation) {
  const ModelConfig c = heat_example(0.1, 0.1, 32);
  EXPECT_NEAR(AveragingParams::mixing_burn_in(c), 4.0 * 2.0 * std::log(1e3), 1e-12);
  const AveragingParams p = AveragingParams::defaults(c);
  EXPECT_GE(p.burn_in, AveragingParams::mixing_burn_in(c));
  EXPECT_NO_THROW(step_count(p.burn_in, p.dt));
  EXPECT_NO_THROW(step_count(p.avg_time, p.dt));
  AveragingParams bad = p;
  bad.replicas = 1;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(EstimateBbar, DriftFreeOfFastVariableIsExact) {
  ModelConfig c = custom_model([](double x, double) { return std::sin(x); }, zero_drift);
  NoiseStream s(2);
  const SpectralField x = random_field(s, c.n_modes, 2.0);
  const BbarEstimate e = estimate_bbar(x, quick_params(), c, 1);
  PseudospectralDrift b(c.drift_b, c.n_modes, c.m_points);
  EXPECT_LT(distance(e.value, b(x, SpectralField(c.n_modes))), 1e-13);
  EXPECT_LT(e.std_error, 1e-13);
}

TEST(EstimateBbar, LinearDriftAveragesToZero) {
  ModelConfig c = custom_model([](double, double y) { return y; }, zero_drift);
  const BbarEstimate e = estimate_bbar(SpectralField(c.n_modes), quick_params(), c, 3);
  EXPECT_GT(e.std_error, 0.0);
  EXPECT_LT(e.value.norm(), 4.0 * e.std_error);
}

TEST(EstimateBbar, GaussianCosineOracle) {
  ModelConfig c = custom_model([](double, double y) { return std::cos(y); }, zero_drift);
  const SpectralField oracle = cosine_oracle(c);
  for (auto strategy : {AveragingStrategy::time_average, AveragingStrategy::ensemble_at_horizon}) {
    AveragingParams p = quick_params(strategy == AveragingStrategy::time_average ? 8 : 400);
    p.strategy = strategy;
    const BbarEstimate e = estimate_bbar(SpectralField(c.n_modes), p, c, 5);
    for (std::size_t k = 0; k < 6; ++k)
      EXPECT_LT(std::fabs(e.value[k] - oracle[k]), 4.0 * e.mode_std_error[k] + 1e-12)
          << "mode " << k + 1;
  }
}

TEST(EstimateBbar, InitialStateIndependenceOnHeatModel) {
  const ModelConfig c = heat_example(0.1, 0.1, 32);
  AveragingParams p = AveragingParams::defaults(c);
  p.replicas = 6;
  NoiseStream s(8);
  const SpectralField y0 = random_field(s, 32, 3.0, 8);
  const BbarEstimate a = estimate_bbar(SpectralField(32), p, c, 10);
  const BbarEstimate b = estimate_bbar(SpectralField(32), p, c, 11, &y0);
  EXPECT_LT(distance(a.value, b.value), 3.0 * std::hypot(a.std_error, b.std_error));
  EXPECT_LE(a.value.norm(), c.drift_b_norm_bound());
  EXPECT_LE(b.value.norm(), c.drift_b_norm_bound());
}

TEST(EstimateBbar, RefusesWithoutSpectralGap) {
  ModelConfig c = heat_example(0.1, 0.1, 16);
  c.l_f = 1.2;
  EXPECT_THROW(estimate_bbar(SpectralField(16), quick_params(), c, 1), DomainError);
  EXPECT_THROW(bbar_oracle(quick_params(), c, 1), DomainError);
}

TEST(BbarOracle, MemoizesAndMatchesFreshEstimates) {
  const ModelConfig c = heat_example(0.1, 0.1, 16);
  AveragingParams p = quick_params(6);
  BbarOracle oracle = bbar_oracle(p, c, 4);
  NoiseStream s(1);
  const SpectralField x = random_field(s, 16, 1.0, 4);
  const BbarEstimate first = oracle.estimate(x);
  SpectralField nearby = x;
  nearby[12] += 0.3;  // outside the key modes
  nearby[0] += 1e-4;  // below the resolution
  const BbarEstimate again = oracle.estimate(nearby);
  EXPECT_EQ(first.value.vector(), again.value.vector());
  EXPECT_EQ(oracle.cache_size(), 1u);
  EXPECT_EQ(oracle.hits(), 1u);
  EXPECT_EQ(oracle.misses(), 1u);
  const BbarEstimate fresh = estimate_bbar(x, p, c, 999);
  EXPECT_LT(distance(first.value, fresh.value), 3.0 * std::hypot(first.std_error, fresh.std_error));
}

TEST(BbarOracle, RejectsZeroResolution) {
  const ModelConfig c = heat_example(0.1, 0.1, 16);
  OracleOptions opt;
  opt.resolution = 0.0;
  EXPECT_THROW(bbar_oracle(quick_params(), c, 1, opt), ConfigError);
  opt.cache = false;
  EXPECT_NO_THROW(bbar_oracle(quick_params(), c, 1, opt));
}

TEST(Mixing, LinearFastEquationDecaysAtFirstEigenvalue) {
  ModelConfig c = custom_model(zero_drift, zero_drift);
  MixingOptions opt;
  opt.coordinate_functionals = 1;
  opt.drift_functionals = false;
  const SpectralField y0 = 3.0 * SpectralField::basis(c.n_modes, 1);
  const MixingFit fit = mixing_diagnostic(SpectralField(c.n_modes), y0, c, 6.0, 400, 7, opt);
  ASSERT_EQ(fit.functionals.size(), 1u);
  ASSERT_TRUE(fit.functionals[0].informative);
  EXPECT_FALSE(fit.wide_ci);
  EXPECT_LT(std::fabs(fit.rate - c.eigs(1)), std::max(fit.ci_half_width, 0.05));
}

TEST(Mixing, ShortHorizonIsFlagged) {
  const ModelConfig c = heat_example(0.1, 0.1, 16);
  const SpectralField y0 = 2.0 * SpectralField::basis(16, 1);
  const MixingFit fit = mixing_diagnostic(SpectralField(16), y0, c, 1.0, 50, 3);
  EXPECT_TRUE(fit.wide_ci);
  EXPECT_FALSE(fit.note.empty());
}
