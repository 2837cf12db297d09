#pragma once

// Exponential-Euler integrators in mild form. The linear part and the
// stochastic convolution are exact per mode; drifts are held at the start of
// each step and evaluated pseudospectrally.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slowfast/errors.hpp"
#include "slowfast/model.hpp"
#include "slowfast/noise.hpp"
#include "slowfast/spectral.hpp"

namespace slowfast {

struct SlowFastState {
  SpectralField x;  // slow component
  SpectralField y;  // fast component
  double t = 0.0;
  double eps = 0.1;
};

struct StepScheme {
  double dt_macro = 1e-3;
  /// Fast substep is eps * fast_substep_factor (before rounding to divide dt_macro).
  double fast_substep_factor = 0.1;

  void validate() const {
    if (!(dt_macro > 0.0)) throw ConfigError("dt must be > 0");
    if (!(fast_substep_factor > 0.0 && fast_substep_factor <= 1.0))
      throw ConfigError("fast_substep_factor must lie in (0, 1]");
  }
  std::size_t substeps(double eps) const {
    const double n = dt_macro / (eps * fast_substep_factor);
    return static_cast<std::size_t>(std::max(1.0, std::ceil(n - 1e-9)));
  }
};

inline void validate_eps(double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw ConfigError("eps must lie in (0, 1)");
}

/// Number of steps of size dt covering [0, T]; T must be a multiple of dt.
inline std::size_t step_count(double horizon, double dt) {
  if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
  if (!(horizon >= 0.0)) throw ConfigError("T must be >= 0");
  const double n = horizon / dt;
  const double r = std::round(n);
  if (std::fabs(n - r) > 1e-6 * std::max(1.0, n))
    throw ConfigError("T is not a multiple of dt");
  return static_cast<std::size_t>(r);
}

/// One exponential-Euler step of the frozen equation
///   dY = [AY + F(x, Y)] dt + sqrt(Q2) dW^2
/// with x supplied on the grid. The fast component of the slow-fast system
/// uses the same step with dt = h_f / eps (time change t -> t / eps).
class FrozenStepper {
 public:
  FrozenStepper(const ModelConfig& config, double dt)
      : drift_(config.drift_f, config.n_modes, config.m_points),
        noise_(config.eigs, config.q2, config.n_modes, dt), dt_(dt), fy_(config.n_modes),
        xi_(config.n_modes) {}

  double dt() const { return dt_; }
  const SineTransform& transform() const { return drift_.transform(); }

  void step(std::span<const double> x_grid, std::span<double> y, NoiseStream& w2) {
    drift_.apply_on_grid(x_grid, y, fy_);
    noise_.sample(w2, xi_);
    const auto decay = noise_.decay();
    for (std::size_t i = 0; i < y.size(); ++i)
      y[i] = decay[i] * (y[i] + dt_ * fy_[i]) + xi_[i];
  }

 private:
  PseudospectralDrift drift_;
  ConvolutionSampler noise_;
  double dt_;
  std::vector<double> fy_;
  std::vector<double> xi_;
};

/// Frozen-equation trajectory Y^{x,y0} at times 0, dt, ..., T.
inline std::vector<SpectralField> simulate_frozen(const SpectralField& x, const SpectralField& y0,
                                                  double horizon, double dt, NoiseStream& w2,
                                                  const ModelConfig& config) {
  config.validate();
  const std::size_t n = step_count(horizon, dt);
  FrozenStepper stepper(config, dt);
  const GridField xg = stepper.transform().to_grid(x);
  std::vector<SpectralField> path;
  path.reserve(n + 1);
  SpectralField y = y0;
  path.push_back(y);
  for (std::size_t i = 0; i < n; ++i) {
    stepper.step(xg.values(), y.coeffs(), w2);
    path.push_back(y);
  }
  return path;
}

/// Coupled slow-fast integrator.
///
/// Per macro step of size D with n = ceil(D / (eps h)) fast substeps h_f = D / n:
///   Y_{j+1} = e^{A h_f/eps}(Y_j + (h_f/eps) F(X, Y_j)) + conv(Q2/eps, A/eps, h_f),
///   X^+     = e^{AD}(X + D * mean_j B(X, Y_j)) + conv(Q1, A, D),
/// with X frozen at the macro-step start. With n = 1 the slow update uses
/// B(X, Y) at the step start; for n > 1 the substep mean resolves the fast
/// oscillation inside the macro step.
class SlowFastIntegrator {
 public:
  SlowFastIntegrator(const ModelConfig& config, StepScheme scheme, double eps)
      : config_(config), scheme_(scheme), eps_(eps) {
    config.validate();
    scheme.validate();
    validate_eps(eps);
    n_sub_ = scheme.substeps(eps);
    h_fast_ = scheme.dt_macro / static_cast<double>(n_sub_);
    fast_.emplace(config, h_fast_ / eps);
    slow_noise_ = ConvolutionSampler(config.eigs, config.q1, config.n_modes, scheme.dt_macro);
    const std::size_t m = config.m_points;
    xg_.resize(m);
    yg_.resize(m);
    bsum_.resize(m);
    bavg_.resize(config.n_modes);
    xi_.resize(config.n_modes);
  }

  std::size_t substeps() const { return n_sub_; }
  double fast_substep() const { return h_fast_; }
  double eps() const { return eps_; }
  const StepScheme& scheme() const { return scheme_; }

  /// Advances one macro step. Consumes n_modes draws of w1 and
  /// substeps() * n_modes draws of w2.
  void step(SlowFastState& s, NoiseStream& w1, NoiseStream& w2) {
    const SineTransform& tr = fast_->transform();
    tr.to_grid(s.x.coeffs(), xg_);
    advance_fast(xg_, s.y, w2, &bsum_);
    tr.from_grid(bsum_, bavg_);
    const double d = scheme_.dt_macro;
    const double inv_n = 1.0 / static_cast<double>(n_sub_);
    slow_noise_.sample(w1, xi_);
    const auto decay = slow_noise_.decay();
    for (std::size_t i = 0; i < bavg_.size(); ++i)
      s.x[i] = decay[i] * (s.x[i] + d * inv_n * bavg_[i]) + xi_[i];
    s.t += d;
  }

  /// Fast substeps of one macro step with the slow variable given on the grid.
  /// If b_accumulator is set it receives sum_j B(x, Y_j) on the grid.
  void advance_fast(std::span<const double> x_grid, SpectralField& y, NoiseStream& w2,
                    std::vector<double>* b_accumulator = nullptr) {
    const SineTransform& tr = fast_->transform();
    if (b_accumulator) std::fill(b_accumulator->begin(), b_accumulator->end(), 0.0);
    for (std::size_t j = 0; j < n_sub_; ++j) {
      if (b_accumulator) {
        tr.to_grid(y.coeffs(), yg_);
        for (std::size_t p = 0; p < yg_.size(); ++p) {
          const double b = config_.drift_b(x_grid[p], yg_[p]);
          if (!std::isfinite(b))
            throw IntegrationError("non-finite slow drift at grid point j=" +
                                   std::to_string(p + 1));
          (*b_accumulator)[p] += b;
        }
      }
      fast_->step(x_grid, y.coeffs(), w2);
    }
  }

 private:
  ModelConfig config_;
  StepScheme scheme_;
  double eps_;
  std::size_t n_sub_ = 1;
  double h_fast_ = 0.0;
  std::optional<FrozenStepper> fast_;
  ConvolutionSampler slow_noise_;
  std::vector<double> xg_, yg_, bsum_, bavg_, xi_;
};

inline SlowFastState step_slow_fast(const SlowFastState& state, const StepScheme& scheme,
                                    NoiseStream& w1, NoiseStream& w2, const ModelConfig& config) {
  SlowFastIntegrator integ(config, scheme, state.eps);
  SlowFastState next = state;
  integ.step(next, w1, w2);
  return next;
}

/// Path sampled on the macro grid t_i = i * dt_macro.
struct SlowFastPath {
  std::vector<double> t;
  std::vector<SpectralField> x;
  std::vector<SpectralField> y;
};

inline SlowFastPath simulate_slow_fast(const SlowFastState& initial, const StepScheme& scheme,
                                       double horizon, NoiseStream& w1, NoiseStream& w2,
                                       const ModelConfig& config) {
  SlowFastIntegrator integ(config, scheme, initial.eps);
  const std::size_t n = step_count(horizon, scheme.dt_macro);
  SlowFastPath path;
  path.t.reserve(n + 1);
  path.x.reserve(n + 1);
  path.y.reserve(n + 1);
  SlowFastState s = initial;
  path.t.push_back(s.t);
  path.x.push_back(s.x);
  path.y.push_back(s.y);
  for (std::size_t i = 0; i < n; ++i) {
    integ.step(s, w1, w2);
    path.t.push_back(s.t);
    path.x.push_back(s.x);
    path.y.push_back(s.y);
  }
  return path;
}

/// Averaged drift as a function of the slow state.
using AveragedDrift = std::function<SpectralField(const SpectralField&)>;

/// X^+ = e^{AD}(X + D Bbar(X)) + conv(Q1, A, D); one n_modes draw of w1 per
/// step, in the same order as SlowFastIntegrator::step.
inline std::vector<SpectralField> simulate_averaged(const SpectralField& x0, double horizon,
                                                    double dt, NoiseStream& w1,
                                                    const AveragedDrift& bbar,
                                                    const ModelConfig& config) {
  config.validate();
  const std::size_t n = step_count(horizon, dt);
  ConvolutionSampler noise(config.eigs, config.q1, config.n_modes, dt);
  std::vector<double> xi(config.n_modes);
  std::vector<SpectralField> path;
  path.reserve(n + 1);
  SpectralField x = x0;
  path.push_back(x);
  const auto decay = noise.decay();
  for (std::size_t i = 0; i < n; ++i) {
    const SpectralField b = bbar(x);
    if (b.n_modes() != x.n_modes()) throw DimensionError("averaged drift has wrong mode count");
    noise.sample(w1, xi);
    for (std::size_t k = 0; k < x.n_modes(); ++k) x[k] = decay[k] * (x[k] + dt * b[k]) + xi[k];
    path.push_back(x);
  }
  return path;
}

/// Auxiliary fast process: the fast dynamics with the slow argument frozen at
/// X_{k delta} on [k delta, (k+1) delta). Uses the same substep structure as
/// SlowFastIntegrator, so a copy of the W^2 stream driving the true fast
/// process replays identical increments.
inline std::vector<SpectralField> simulate_auxiliary_fast(
    const std::vector<SpectralField>& slow_path, const SpectralField& y0, double delta,
    const StepScheme& scheme, double eps, NoiseStream& w2, const ModelConfig& config) {
  if (slow_path.empty()) throw ConfigError("empty slow path");
  const double ratio = delta / scheme.dt_macro;
  const double r = std::round(ratio);
  if (!(delta > 0.0) || r < 1.0 || std::fabs(ratio - r) > 1e-9 * std::max(1.0, ratio))
    throw ConfigError("delta must be a positive multiple of the macro step");
  const auto block = static_cast<std::size_t>(r);
  SlowFastIntegrator integ(config, scheme, eps);
  SineTransform tr(config.n_modes, config.m_points);
  std::vector<double> xg(config.m_points);
  std::vector<SpectralField> out;
  out.reserve(slow_path.size());
  SpectralField y = y0;
  out.push_back(y);
  for (std::size_t i = 0; i + 1 < slow_path.size(); ++i) {
    if (i % block == 0) tr.to_grid(slow_path[i].coeffs(), xg);
    integ.advance_fast(xg, y, w2);
    out.push_back(y);
  }
  return out;
}

}  // namespace slowfast
