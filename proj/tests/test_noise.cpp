#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <set>

#include "slowfast/noise.hpp"
#include "slowfast/stats.hpp"
#include "support.hpp"

using namespace slowfast;
using namespace testing_support;

namespace {

// Variance of int_0^dt e^{-lambda (dt - s)} sqrt(q) dW_s by quadrature of the Ito isometry.
double isometry_variance(double lambda, double q, double dt) {
  auto f = [&](double s) { return q * std::exp(-2.0 * lambda * (dt - s)); };
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, dt, 15, 1e-15);
}

// Euler-Maruyama from 0 with `sub` substeps; returns samples of the endpoint.
std::vector<double> fine_euler(double lambda, double q, double dt, int sub, std::size_t n,
                               std::uint64_t seed) {
  NoiseStream s(seed);
  const double h = dt / sub, sq = std::sqrt(q * h);
  std::vector<double> out(n);
  for (auto& x : out) {
    double v = 0.0;
    for (int i = 0; i < sub; ++i) v += -lambda * v * h + sq * s.gaussian();
    x = v;
  }
  return out;
}

}  // namespace

TEST(ConvIncrementLaw, ClosedFormMatchesIsometryQuadrature) {
  const auto eigs = OperatorSpectrum::dirichlet_laplacian();
  const NoiseSpectrum q{1.0, 0.1};
  for (std::size_t k : {1, 2, 5, 17, 32})
    for (double dt : {1e-4, 1e-2, 0.1, 1.0}) {
      const auto law = conv_increment_law(k, dt, q, eigs);
      EXPECT_NEAR(law.decay, std::exp(-eigs(k) * dt), 1e-15);
      EXPECT_NEAR(law.stddev, std::sqrt(isometry_variance(eigs(k), q(eigs(k)), dt)), 1e-12);
    }
}

TEST(ConvIncrementLaw, LimitsAndErrors) {
  EXPECT_NEAR(std::pow(conv_increment_law(1.0, 1.0, 60.0).stddev, 2), 0.5, 1e-15);
  for (double dt : {1e-3, 1e-5}) {
    const double var = std::pow(conv_increment_law(3.0, 2.0, dt).stddev, 2);
    EXPECT_NEAR(var / (2.0 * dt), 1.0, 4.0 * dt);
  }
  EXPECT_THROW(conv_increment_law(1.0, 1.0, 0.0), DomainError);
  EXPECT_THROW(conv_increment_law(1.0, 1.0, -1.0), DomainError);
}

TEST(ConvIncrementLaw, TimeChangeIdentity) {
  for (double eps : {0.1, 0.01, 0.003})
    for (double lam : {1.0, 4.0, 100.0}) {
      const auto fast = conv_increment_law(lam / eps, 0.7 / eps, 0.01);
      const auto slow = conv_increment_law(lam, 0.7, 0.01 / eps);
      EXPECT_NEAR(fast.decay, slow.decay, 1e-12);
      EXPECT_NEAR(fast.stddev, slow.stddev, 1e-12);
    }
}

TEST(ConvIncrementLaw, FineEulerOracleVariance) {
  const double lambda = 4.0, q = std::pow(4.0, -0.1), dt = 0.1;
  const auto samples = fine_euler(lambda, q, dt, 500, 100000, 8);
  RunningStats sq;
  for (double x : samples) sq.add(x * x);
  const double closed = std::pow(conv_increment_law(lambda, q, dt).stddev, 2);
  EXPECT_LT(std::fabs(sq.mean() - closed), 3.0 * sq.std_error());
}

TEST(NoiseStream, DeterministicAndDistinct) {
  const auto eigs = OperatorSpectrum::dirichlet_laplacian();
  const NoiseSpectrum q{1.0, 0.1};
  NoiseStream a(42), b(42);
  EXPECT_EQ(sample_increments(a, 0.1, q, eigs, 8).vector(),
            sample_increments(b, 0.1, q, eigs, 8).vector());
  NoiseStream d1 = NoiseStream::derive(7, 3, NoiseRole::slow);
  NoiseStream d2 = NoiseStream::derive(7, 3, NoiseRole::slow);
  EXPECT_EQ(d1.gaussian(), d2.gaussian());
  NoiseStream i0 = NoiseStream::derive(7, 0, NoiseRole::slow);
  NoiseStream i1 = NoiseStream::derive(7, 1, NoiseRole::slow);
  EXPECT_NE(i0.gaussian(), i1.gaussian());
}

TEST(NoiseStream, DerivationIsCollisionFree) {
  std::set<std::uint64_t> seeds;
  const NoiseRole roles[] = {NoiseRole::slow, NoiseRole::fast, NoiseRole::initial,
                             NoiseRole::averaging, NoiseRole::sampling};
  for (std::uint64_t i = 0; i < 2000; ++i)
    for (NoiseRole r : roles) seeds.insert(NoiseStream::derive(5, i, r).seed());
  seeds.insert(NoiseStream::derive(5, 0xffffffffULL, NoiseRole::slow).seed());
  EXPECT_EQ(seeds.size(), 2000u * 5 + 1);
}

TEST(NoiseStream, ZeroSpectrumGivesZeroField) {
  NoiseStream s(1);
  const auto u = sample_increments(s, 0.1, NoiseSpectrum::none(),
                                   OperatorSpectrum::dirichlet_laplacian(), 6);
  EXPECT_EQ(u.squared_norm(), 0.0);
}

TEST(NoiseStream, IncrementMeansVanish) {
  const auto eigs = OperatorSpectrum::dirichlet_laplacian();
  const NoiseSpectrum q{1.0, 0.1};
  const std::size_t n = 4;
  ConvolutionSampler sampler(eigs, q, n, 0.1);
  NoiseStream s(11);
  std::vector<RunningStats> st(n);
  std::vector<double> buf(n);
  for (int i = 0; i < 100000; ++i) {
    sampler.sample(s, buf);
    for (std::size_t k = 0; k < n; ++k) st[k].add(buf[k]);
  }
  for (std::size_t k = 0; k < n; ++k) {
    EXPECT_LT(std::fabs(st[k].mean()), 4.0 * st[k].std_error());
    EXPECT_NEAR(st[k].stddev(), sampler.stddev()[k], 0.02 * sampler.stddev()[k]);
  }
}

TEST(NoiseStream, SlowAndFastRolesUncorrelated) {
  NoiseStream w1 = NoiseStream::derive(2024, 0, NoiseRole::slow);
  NoiseStream w2 = NoiseStream::derive(2024, 0, NoiseRole::fast);
  const int n = 100000;
  RunningStats prod;
  for (int i = 0; i < n; ++i) prod.add(w1.gaussian() * w2.gaussian());
  // The product of independent standard normals has unit variance.
  EXPECT_LT(std::fabs(prod.mean()), 4.0 / std::sqrt(n));
}
