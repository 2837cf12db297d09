#pragma once

// Finite sine-basis representation of H = L^2(0, pi) with Dirichlet
// boundary conditions, e_k(xi) = sqrt(2/pi) sin(k xi), and the diagonal
// operators built on it.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "slowfast/errors.hpp"

namespace slowfast {

/// Element of H truncated to modes 1..N. Index i of the storage holds mode i+1.
class SpectralField {
 public:
  SpectralField() = default;
  explicit SpectralField(std::size_t n_modes) : coeffs_(n_modes, 0.0) {}
  explicit SpectralField(std::vector<double> coeffs) : coeffs_(std::move(coeffs)) {}

  /// Unit vector e_k, k is 1-based.
  static SpectralField basis(std::size_t n_modes, std::size_t k) {
    if (k == 0 || k > n_modes) throw DimensionError("basis index out of range");
    SpectralField u(n_modes);
    u.coeffs_[k - 1] = 1.0;
    return u;
  }

  std::size_t n_modes() const { return coeffs_.size(); }
  double& operator[](std::size_t i) { return coeffs_[i]; }
  double operator[](std::size_t i) const { return coeffs_[i]; }
  /// 1-based mode accessor.
  double mode(std::size_t k) const { return coeffs_.at(k - 1); }

  std::span<double> coeffs() { return coeffs_; }
  std::span<const double> coeffs() const { return coeffs_; }
  const std::vector<double>& vector() const { return coeffs_; }

  double squared_norm() const {
    double s = 0.0;
    for (double c : coeffs_) s += c * c;
    return s;
  }
  /// |u| in H (Parseval).
  double norm() const { return std::sqrt(squared_norm()); }

  SpectralField& operator+=(const SpectralField& o) {
    check_same(o);
    for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += o.coeffs_[i];
    return *this;
  }
  SpectralField& operator-=(const SpectralField& o) {
    check_same(o);
    for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] -= o.coeffs_[i];
    return *this;
  }
  SpectralField& operator*=(double a) {
    for (double& c : coeffs_) c *= a;
    return *this;
  }
  friend SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
  friend SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
  friend SpectralField operator*(double s, SpectralField a) { return a *= s; }
  friend bool operator==(const SpectralField&, const SpectralField&) = default;

 private:
  void check_same(const SpectralField& o) const {
    if (o.coeffs_.size() != coeffs_.size()) throw DimensionError("mode counts differ");
  }

  std::vector<double> coeffs_;
};

inline double dot(const SpectralField& a, const SpectralField& b) {
  if (a.n_modes() != b.n_modes()) throw DimensionError("mode counts differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.n_modes(); ++i) s += a[i] * b[i];
  return s;
}

inline double distance(const SpectralField& a, const SpectralField& b) { return (a - b).norm(); }

/// Point values at the interior nodes xi_j = j pi / (M+1), j = 1..M.
class GridField {
 public:
  GridField() = default;
  explicit GridField(std::size_t m_points) : values_(m_points, 0.0) {}
  explicit GridField(std::vector<double> values) : values_(std::move(values)) {}

  std::size_t m_points() const { return values_.size(); }
  double& operator[](std::size_t j) { return values_[j]; }
  double operator[](std::size_t j) const { return values_[j]; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  /// Node of storage index j (0-based), i.e. xi_{j+1}.
  static double node(std::size_t j, std::size_t m_points) {
    return static_cast<double>(j + 1) * std::numbers::pi / static_cast<double>(m_points + 1);
  }
  double node(std::size_t j) const { return node(j, values_.size()); }

  /// Trapezoidal inner product (pi/(M+1)) sum_j u_j v_j; exact for band-limited pairs.
  friend double quadrature_dot(const GridField& u, const GridField& v) {
    if (u.m_points() != v.m_points()) throw DimensionError("grid sizes differ");
    double s = 0.0;
    for (std::size_t j = 0; j < u.m_points(); ++j) s += u[j] * v[j];
    return s * std::numbers::pi / static_cast<double>(u.m_points() + 1);
  }

 private:
  std::vector<double> values_;
};

/// Spectrum of -A following the law lambda_k = scale * k^growth.
///
/// The law (not only a truncated vector) is kept so that series over the
/// full spectrum can be bounded analytically beyond any truncation.
class OperatorSpectrum {
 public:
  OperatorSpectrum(double scale, double growth) : scale_(scale), growth_(growth) {
    if (!(scale > 0.0)) throw ConfigError("eigenvalue scale must be > 0");
    if (!(growth >= 0.0)) throw ConfigError("eigenvalues must be nondecreasing (growth >= 0)");
  }
  /// -Laplacian on (0, pi): lambda_k = k^2.
  static OperatorSpectrum dirichlet_laplacian() { return {1.0, 2.0}; }

  /// lambda_k, k is 1-based.
  double operator()(std::size_t k) const {
    return scale_ * std::pow(static_cast<double>(k), growth_);
  }
  double first() const { return scale_; }
  double scale() const { return scale_; }
  double growth() const { return growth_; }
  bool unbounded() const { return growth_ > 0.0; }

  std::vector<double> eigenvalues(std::size_t n) const {
    std::vector<double> out(n);
    for (std::size_t k = 1; k <= n; ++k) out[k - 1] = (*this)(k);
    return out;
  }

 private:
  double scale_;
  double growth_;
};

namespace detail {

// r2r plans are created once per size and never destroyed; fftw_execute_r2r
// on a finished plan is thread-safe.
inline fftw_plan rodft00_plan(std::size_t m) {
  static std::mutex mutex;
  static std::map<std::size_t, fftw_plan> plans;
  std::lock_guard lock(mutex);
  auto it = plans.find(m);
  if (it != plans.end()) return it->second;
  std::vector<double> in(m), out(m);
  fftw_plan p = fftw_plan_r2r_1d(static_cast<int>(m), in.data(), out.data(), FFTW_RODFT00,
                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
  plans.emplace(m, p);
  return p;
}

}  // namespace detail

/// Orthogonal DST-I pair between N sine coefficients and M interior grid values.
class SineTransform {
 public:
  SineTransform(std::size_t n_modes, std::size_t m_points) : n_(n_modes), m_(m_points) {
    if (n_modes == 0) throw DimensionError("transform needs at least one mode");
    if (m_points < n_modes)
      throw DimensionError("grid of " + std::to_string(m_points) + " points cannot resolve " +
                           std::to_string(n_modes) + " modes (need M >= N)");
    plan_ = detail::rodft00_plan(m_);
    // RODFT00 computes 2 sum_j x_j sin(pi (j+1)(k+1)/(M+1)).
    to_grid_scale_ = 0.5 * std::sqrt(2.0 / std::numbers::pi);
    from_grid_scale_ = std::numbers::pi / static_cast<double>(m_ + 1) * to_grid_scale_;
  }

  std::size_t n_modes() const { return n_; }
  std::size_t m_points() const { return m_; }

  void to_grid(std::span<const double> coeffs, std::span<double> grid) const {
    if (coeffs.size() != n_ || grid.size() != m_) throw DimensionError("to_grid size mismatch");
    auto& buf = scratch();
    std::fill(buf.begin(), buf.end(), 0.0);
    std::copy(coeffs.begin(), coeffs.end(), buf.begin());
    fftw_execute_r2r(plan_, buf.data(), grid.data());
    for (double& g : grid) g *= to_grid_scale_;
  }

  void from_grid(std::span<const double> grid, std::span<double> coeffs) const {
    if (coeffs.size() != n_ || grid.size() != m_) throw DimensionError("from_grid size mismatch");
    auto& buf = scratch();
    auto& out = scratch_out();
    std::copy(grid.begin(), grid.end(), buf.begin());
    fftw_execute_r2r(plan_, buf.data(), out.data());
    for (std::size_t k = 0; k < n_; ++k) coeffs[k] = from_grid_scale_ * out[k];
  }

  GridField to_grid(const SpectralField& u) const {
    GridField g(m_);
    to_grid(u.coeffs(), g.values());
    return g;
  }
  SpectralField from_grid(const GridField& g) const {
    SpectralField u(n_);
    from_grid(g.values(), u.coeffs());
    return u;
  }

 private:
  std::vector<double>& scratch() const {
    thread_local std::vector<double> buf;
    buf.resize(m_);
    return buf;
  }
  std::vector<double>& scratch_out() const {
    thread_local std::vector<double> buf;
    buf.resize(m_);
    return buf;
  }

  std::size_t n_;
  std::size_t m_;
  fftw_plan plan_;
  double to_grid_scale_;
  double from_grid_scale_;
};

/// Projects grid samples onto the first n_modes sine modes.
inline SpectralField transform(const GridField& grid, std::size_t n_modes) {
  return SineTransform(n_modes, grid.m_points()).from_grid(grid);
}

inline GridField to_grid(const SpectralField& u, std::size_t m_points) {
  return SineTransform(u.n_modes(), m_points).to_grid(u);
}

/// ||u||_s = |(-A)^{s/2} u| = sqrt(sum lambda_k^s u_k^2).
inline double h_norm(const SpectralField& u, const OperatorSpectrum& eigs, double s) {
  double acc = 0.0;
  for (std::size_t i = 0; i < u.n_modes(); ++i) acc += std::pow(eigs(i + 1), s) * u[i] * u[i];
  return std::sqrt(acc);
}

/// e^{tA} u, coefficient-wise u_k -> e^{-lambda_k t} u_k.
inline SpectralField semigroup_apply(const SpectralField& u, const OperatorSpectrum& eigs,
                                     double t) {
  if (t < 0.0) throw DomainError("semigroup time must be >= 0");
  SpectralField out(u.n_modes());
  for (std::size_t i = 0; i < u.n_modes(); ++i) out[i] = std::exp(-eigs(i + 1) * t) * u[i];
  return out;
}

/// (-A)^{s/2} u.
inline SpectralField frac_power_apply(const SpectralField& u, const OperatorSpectrum& eigs,
                                      double s) {
  SpectralField out(u.n_modes());
  for (std::size_t i = 0; i < u.n_modes(); ++i) out[i] = std::pow(eigs(i + 1), 0.5 * s) * u[i];
  return out;
}

// Explicit constants for the analytic-semigroup estimates, from
// sup_{a>0} a^p e^{-a} = (p/e)^p applied mode by mode.

/// C_theta in ||e^{tA}u||_theta <= C_theta t^{-theta/2} |u|.
inline double smoothing_constant(double theta) {
  const double p = 0.5 * theta;
  return p == 0.0 ? 1.0 : std::pow(p / std::numbers::e, p);
}

/// C_theta in |e^{tA}u - e^{sA}u| <= C_theta (t-s)^theta s^{-theta} |u|, t > s > 0.
inline double time_holder_constant(double theta) {
  return theta == 0.0 ? 1.0 : std::pow(theta / std::numbers::e, theta);
}

}  // namespace slowfast
