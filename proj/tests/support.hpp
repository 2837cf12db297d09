#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "slowfast/model.hpp"
#include "slowfast/noise.hpp"
#include "slowfast/spectral.hpp"

namespace testing_support {

using namespace slowfast;

inline double basis_value(std::size_t k, double xi) {
  return std::sqrt(2.0 / std::numbers::pi) * std::sin(static_cast<double>(k) * xi);
}

// O(NM) direct summation, independent of the FFT path.
inline std::vector<double> direct_to_grid(const SpectralField& u, std::size_t m) {
  std::vector<double> g(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    const double xi = std::numbers::pi * static_cast<double>(j + 1) / static_cast<double>(m + 1);
    for (std::size_t k = 1; k <= u.n_modes(); ++k) g[j] += u.mode(k) * basis_value(k, xi);
  }
  return g;
}

inline SpectralField direct_from_grid(const std::vector<double>& g, std::size_t n) {
  const std::size_t m = g.size();
  const double h = std::numbers::pi / static_cast<double>(m + 1);
  SpectralField u(n);
  for (std::size_t k = 1; k <= n; ++k) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += g[j] * basis_value(k, h * static_cast<double>(j + 1));
    u[k - 1] = h * s;
  }
  return u;
}

inline SpectralField random_field(NoiseStream& s, std::size_t n, double scale = 1.0,
                                  std::size_t active = 0) {
  SpectralField u(n);
  const std::size_t top = active ? std::min(active, n) : n;
  for (std::size_t k = 1; k <= top; ++k) u[k - 1] = scale * s.gaussian() / static_cast<double>(k);
  return u;
}

// Laplacian spectrum with pointwise drifts supplied by the caller.
template <class B, class F>
ModelConfig custom_model(B b, F f, double q1 = 1.0, double q2 = 1.0, double l_f = 0.0,
                         std::size_t n = 16) {
  ModelConfig c;
  c.name = "test";
  c.q1 = {q1, 0.1};
  c.q2 = {q2, 0.1};
  c.drift_b = b;
  c.drift_f = f;
  c.l_f = l_f;
  c.n_modes = n;
  c.m_points = 2 * n;
  return c;
}

inline double zero_drift(double, double) { return 0.0; }

}  // namespace testing_support
