#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "slowfast/errors.hpp"
#include "slowfast/expression.hpp"
#include "slowfast/noise.hpp"
#include "slowfast/spectral.hpp"

namespace slowfast {

/// Pointwise drift (x(xi), y(xi)) -> value, lifted to H x H -> H as a
/// composition (Nemytskii) operator.
using PointwiseDrift = std::function<double(double, double)>;

/// Drift acting on whole fields.
using FieldDrift = std::function<SpectralField(const SpectralField&, const SpectralField&)>;

/// Coefficients of dX = [AX + B(X,Y)]dt + sqrt(Q1) dW^1,
/// dY = eps^{-1}[AY + F(X,Y)]dt + eps^{-1/2} sqrt(Q2) dW^2
/// together with the declared regularity constants.
struct ModelConfig {
  std::string name = "custom";
  OperatorSpectrum eigs = OperatorSpectrum::dirichlet_laplacian();
  NoiseSpectrum q1;
  NoiseSpectrum q2;
  PointwiseDrift drift_b;
  PointwiseDrift drift_f;
  std::string drift_b_expr;
  std::string drift_f_expr;
  double alpha = 1.0;  // Hoelder index of B in x
  double beta = 1.0;   // Hoelder index of B in y
  double gamma = 1.0;  // Hoelder index of F in x
  double l_f = 0.0;    // Lipschitz constant of F in y
  double bound_b = 1.0;  // sup |B| pointwise
  double bound_f = 1.0;  // sup |F| pointwise
  std::size_t n_modes = 32;
  std::size_t m_points = 64;
  std::string constants_note = "declared";  // provenance of alpha, beta, gamma, L_F

  double lambda1() const { return eigs.first(); }
  /// lambda_1 - L_F; must be positive for the frozen equation to be ergodic.
  double spectral_gap() const { return eigs.first() - l_f; }
  /// Hoelder index alpha ^ (beta gamma) of the averaged drift.
  double averaged_holder_index() const { return std::min(alpha, beta * gamma); }
  /// Bound on |P_N B(x,y)| in H implied by the pointwise bound.
  double drift_b_norm_bound() const { return std::sqrt(std::numbers::pi) * bound_b; }

  void validate() const {
    auto in_unit = [](double v) { return v > 0.0 && v <= 1.0; };
    if (!in_unit(alpha) || !in_unit(beta) || !in_unit(gamma))
      throw ConfigError("Hoelder exponents alpha, beta, gamma must lie in (0, 1]");
    if (!(l_f >= 0.0)) throw ConfigError("l_f must be >= 0");
    if (!std::isfinite(bound_b) || !std::isfinite(bound_f) || bound_b < 0.0 || bound_f < 0.0)
      throw ConfigError("drift bounds must be finite and >= 0");
    if (n_modes == 0) throw ConfigError("n_modes must be >= 1");
    if (m_points < n_modes) throw ConfigError("m_points must be >= n_modes");
    if (!drift_b || !drift_f) throw ConfigError("both drifts B and F must be set");
  }
};

/// Noise decay exponents of the heat example must stay below this.
inline constexpr double kHeatNoiseDecayMax = 1.0 / 7.0;

/// Stochastic heat system on [0, pi]:
///   B(x,y) = sin(sqrt|x| + sqrt|y|),  F(x,y) = cos(sqrt|x| + |y|) / 2,
///   A = Laplacian, Q_i = (-A)^{-r_i}.
/// The Hoelder indices 1/2 follow from |sqrt u - sqrt v| <= sqrt|u - v| and
/// the 1-Lipschitz sin / cos.
inline ModelConfig heat_example(double r1, double r2, std::size_t n_modes) {
  auto check = [](const char* key, double r) {
    if (!(r > 0.0 && r < kHeatNoiseDecayMax)) {
      std::ostringstream msg;
      msg << key << " = " << r << " is outside (0, 1/7); the heat example needs r1, r2 in (0, 1/7)";
      throw ConfigError(msg.str());
    }
  };
  check("r1", r1);
  check("r2", r2);
  if (n_modes == 0) throw ConfigError("n_modes must be >= 1");

  ModelConfig c;
  c.name = "heat_example";
  c.eigs = OperatorSpectrum::dirichlet_laplacian();
  c.q1 = {1.0, r1};
  c.q2 = {1.0, r2};
  c.drift_b = [](double x, double y) {
    return std::sin(std::sqrt(std::fabs(x)) + std::sqrt(std::fabs(y)));
  };
  c.drift_f = [](double x, double y) {
    return 0.5 * std::cos(std::sqrt(std::fabs(x)) + std::fabs(y));
  };
  c.drift_b_expr = "sin(sqrt(abs(x)) + sqrt(abs(y)))";
  c.drift_f_expr = "0.5*cos(sqrt(abs(x)) + abs(y))";
  c.alpha = c.beta = c.gamma = 0.5;
  c.l_f = 0.5;
  c.bound_b = 1.0;
  c.bound_f = 0.5;
  c.constants_note =
      "derived: alpha = beta = gamma = 1/2 from |sqrt u - sqrt v| <= sqrt|u - v|, "
      "L_F = 1/2 from the 1-Lipschitz cosine";
  c.n_modes = n_modes;
  c.m_points = 2 * n_modes;
  return c;
}

/// Pseudospectral evaluation of a composition drift: coefficients -> grid,
/// pointwise map, grid -> coefficients (projection onto the first N modes).
class PseudospectralDrift {
 public:
  PseudospectralDrift(PointwiseDrift f, std::size_t n_modes, std::size_t m_points)
      : f_(std::move(f)), transform_(n_modes, m_points), xg_(m_points), yg_(m_points),
        out_(m_points) {}

  const SineTransform& transform() const { return transform_; }

  /// Drift with x given on the grid (frozen slow variable).
  void apply_on_grid(std::span<const double> x_grid, std::span<const double> y,
                     std::span<double> out) {
    transform_.to_grid(y, yg_);
    for (std::size_t j = 0; j < yg_.size(); ++j) {
      const double v = f_(x_grid[j], yg_[j]);
      if (!std::isfinite(v)) {
        std::ostringstream msg;
        msg << "non-finite drift value at grid point j=" << j + 1
            << " (xi=" << GridField::node(j, yg_.size()) << ", x=" << x_grid[j]
            << ", y=" << yg_[j] << ")";
        throw IntegrationError(msg.str());
      }
      out_[j] = v;
    }
    transform_.from_grid(out_, out);
  }

  void apply(std::span<const double> x, std::span<const double> y, std::span<double> out) {
    transform_.to_grid(x, xg_);
    apply_on_grid(xg_, y, out);
  }

  SpectralField operator()(const SpectralField& x, const SpectralField& y) {
    SpectralField out(x.n_modes());
    apply(x.coeffs(), y.coeffs(), out.coeffs());
    return out;
  }

 private:
  PointwiseDrift f_;
  SineTransform transform_;
  std::vector<double> xg_;
  std::vector<double> yg_;
  std::vector<double> out_;
};

/// Field-level drift for B or F of a model.
inline FieldDrift field_drift(const ModelConfig& config, bool slow_drift) {
  auto eval = std::make_shared<PseudospectralDrift>(slow_drift ? config.drift_b : config.drift_f,
                                                    config.n_modes, config.m_points);
  return [eval](const SpectralField& x, const SpectralField& y) { return (*eval)(x, y); };
}

}  // namespace slowfast
