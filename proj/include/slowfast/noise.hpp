#pragma once

// Per-mode exact sampling of stochastic convolutions int e^{(t-s)A} sqrt(Q) dW_s
// for Q diagonal in the sine basis, plus reproducible seeding.

#include <boost/random/normal_distribution.hpp>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "slowfast/errors.hpp"
#include "slowfast/spectral.hpp"

namespace slowfast {

/// Diagonal noise covariance q_k = amplitude * lambda_k^{-decay}.
/// For the -Laplacian spectrum, decay r gives q_k = k^{-2r}.
struct NoiseSpectrum {
  double amplitude = 1.0;
  double decay = 0.0;

  double operator()(double lambda) const {
    return amplitude == 0.0 ? 0.0 : amplitude * std::pow(lambda, -decay);
  }
  std::vector<double> intensities(const OperatorSpectrum& eigs, std::size_t n) const {
    std::vector<double> q(n);
    for (std::size_t k = 1; k <= n; ++k) q[k - 1] = (*this)(eigs(k));
    return q;
  }
  static NoiseSpectrum none() { return {0.0, 0.0}; }
};

/// Exact one-step law of the scalar OU mode dx = -lambda x dt + sqrt(q) dW.
struct OuTransition {
  double decay;   // e^{-lambda dt}
  double stddev;  // sqrt(q (1 - e^{-2 lambda dt}) / (2 lambda))
};

inline OuTransition conv_increment_law(double lambda, double q, double dt) {
  if (!(dt > 0.0)) throw DomainError("increment time step must be > 0");
  if (!(lambda > 0.0)) throw DomainError("eigenvalue must be > 0");
  const double var = q * (-std::expm1(-2.0 * lambda * dt)) / (2.0 * lambda);
  return {std::exp(-lambda * dt), std::sqrt(var)};
}

/// Mode-k law for the spectrum pair; k is 1-based.
inline OuTransition conv_increment_law(std::size_t k, double dt, const NoiseSpectrum& spectrum,
                                       const OperatorSpectrum& eigs) {
  const double lambda = eigs(k);
  return conv_increment_law(lambda, spectrum(lambda), dt);
}

/// Role tags separating independent noise sources derived from one root seed.
enum class NoiseRole : std::uint32_t {
  slow = 1,       // W^1
  fast = 2,       // W^2
  initial = 3,    // random initial data
  averaging = 4,  // frozen-equation replicas
  sampling = 5,   // random test points / pairs
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Seeded Gaussian source. Copying a stream copies its position, so a copy
/// replays exactly the draws the original will make.
class NoiseStream {
 public:
  explicit NoiseStream(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t draws() const { return draws_; }

  double gaussian() {
    ++draws_;
    return normal_(engine_);
  }
  double uniform() {
    ++draws_;
    return std::generate_canonical<double, 53>(engine_);
  }
  void fill_gaussian(std::span<double> out) {
    for (double& v : out) v = gaussian();
  }

  /// Independent stream for (trajectory index, role) under a root seed.
  /// The map (index, role) -> seed is injective for index < 2^32.
  static NoiseStream derive(std::uint64_t root, std::uint64_t index, NoiseRole role) {
    const std::uint64_t key =
        (index & 0xffffffffULL) | (static_cast<std::uint64_t>(role) << 32);
    // splitmix64 is a bijection, so distinct keys give distinct seeds.
    return NoiseStream(detail::splitmix64(key ^ detail::splitmix64(root)));
  }

 private:
  std::uint64_t seed_;
  std::uint64_t draws_ = 0;
  std::mt19937_64 engine_;
  boost::random::normal_distribution<double> normal_;
};

inline NoiseStream derive_substream(std::uint64_t root, std::uint64_t index, NoiseRole role) {
  return NoiseStream::derive(root, index, role);
}

/// Precomputed per-mode transition laws for a fixed step.
class ConvolutionSampler {
 public:
  ConvolutionSampler() = default;
  ConvolutionSampler(const OperatorSpectrum& eigs, const NoiseSpectrum& q, std::size_t n_modes,
                     double dt)
      : decay_(n_modes), stddev_(n_modes), dt_(dt) {
    for (std::size_t k = 1; k <= n_modes; ++k) {
      const auto law = conv_increment_law(k, dt, q, eigs);
      decay_[k - 1] = law.decay;
      stddev_[k - 1] = law.stddev;
    }
  }

  std::size_t n_modes() const { return decay_.size(); }
  double dt() const { return dt_; }
  std::span<const double> decay() const { return decay_; }
  std::span<const double> stddev() const { return stddev_; }

  /// One vector of independent convolution increments. Always consumes
  /// n_modes draws, also for zero-intensity modes.
  void sample(NoiseStream& stream, std::span<double> out) const {
    for (std::size_t i = 0; i < decay_.size(); ++i) out[i] = stddev_[i] * stream.gaussian();
  }

 private:
  std::vector<double> decay_;
  std::vector<double> stddev_;
  double dt_ = 0.0;
};

inline SpectralField sample_increments(NoiseStream& stream, double dt,
                                       const NoiseSpectrum& spectrum,
                                       const OperatorSpectrum& eigs, std::size_t n_modes) {
  ConvolutionSampler sampler(eigs, spectrum, n_modes, dt);
  SpectralField out(n_modes);
  sampler.sample(stream, out.coeffs());
  return out;
}

}  // namespace slowfast
