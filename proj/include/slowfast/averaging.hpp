#pragma once

// Estimation of the averaged drift Bbar(x) = int B(x, y) mu^x(dy) from the
// frozen equation, whose invariant measure mu^x is unique and exponentially
// mixing when lambda_1 - L_F > 0.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <vector>

#include "slowfast/errors.hpp"
#include "slowfast/model.hpp"
#include "slowfast/noise.hpp"
#include "slowfast/simulator.hpp"
#include "slowfast/stats.hpp"

namespace slowfast {

enum class AveragingStrategy { time_average, ensemble_at_horizon };

struct AveragingParams {
  double burn_in = 55.0;   // T_b
  double avg_time = 20.0;  // T_a
  double dt = 0.05;
  std::size_t replicas = 4;
  AveragingStrategy strategy = AveragingStrategy::time_average;

  /// Burn-in from the mixing bound C e^{-(lambda_1 - L_F) beta t / 2} <= tol,
  /// i.e. T_b = 2 log(1/tol) / ((lambda_1 - L_F) beta), with tol = 1e-3.
  static double mixing_burn_in(const ModelConfig& c, double tol = 1e-3) {
    return 2.0 / (c.spectral_gap() * c.beta) * std::log(1.0 / tol);
  }

  static AveragingParams defaults(const ModelConfig& c, double dt = 0.05) {
    AveragingParams p;
    p.burn_in = mixing_burn_in(c);
    p.align_to(dt);
    return p;
  }

  /// Sets dt and rounds the burn-in and averaging windows up to whole steps.
  void align_to(double step) {
    if (!(step > 0.0)) throw ConfigError("averaging dt must be > 0");
    dt = step;
    burn_in = std::ceil(burn_in / step - 1e-9) * step;
    avg_time = std::ceil(avg_time / step - 1e-9) * step;
  }

  void validate() const {
    if (!(burn_in >= 0.0)) throw ConfigError("burn-in time must be >= 0");
    if (!(dt > 0.0)) throw ConfigError("averaging dt must be > 0");
    if (strategy == AveragingStrategy::time_average && !(avg_time > 0.0))
      throw ConfigError("averaging time must be > 0");
    if (replicas < 2) throw ConfigError("at least 2 replicas are needed for an error bar");
  }
};

struct BbarEstimate {
  SpectralField x;
  SpectralField value;
  double std_error = 0.0;        // H-norm scale
  SpectralField mode_std_error;  // per coefficient
  AveragingParams params;
  std::uint64_t seed = 0;
};

inline void require_ergodic(const ModelConfig& config) {
  if (!(config.spectral_gap() > 0.0)) {
    std::ostringstream msg;
    msg << "lambda_1 - L_F = " << config.spectral_gap()
        << " <= 0: frozen equation not known to be ergodic, refusing to average";
    throw DomainError(msg.str());
  }
}

namespace detail {

/// Adds B(x, y) on the grid to acc.
inline void accumulate_drift(const ModelConfig& c, const SineTransform& tr,
                             std::span<const double> xg, std::span<const double> y,
                             std::vector<double>& yg, std::vector<double>& acc) {
  tr.to_grid(y, yg);
  for (std::size_t j = 0; j < yg.size(); ++j) acc[j] += c.drift_b(xg[j], yg[j]);
}

}  // namespace detail

/// Time average of B(x, Y^{x,y0}_t) over [T_b, T_b + T_a] (or B at T_b for the
/// ensemble strategy), replicated with independent W^2 streams derived from seed.
inline BbarEstimate estimate_bbar(const SpectralField& x, const AveragingParams& params,
                                  const ModelConfig& config, std::uint64_t seed,
                                  const SpectralField* y0 = nullptr) {
  config.validate();
  params.validate();
  require_ergodic(config);
  if (x.n_modes() != config.n_modes) throw DimensionError("x has wrong mode count");
  const std::size_t nb = step_count(params.burn_in, params.dt);
  const std::size_t na = params.strategy == AveragingStrategy::time_average
                             ? std::max<std::size_t>(1, step_count(params.avg_time, params.dt))
                             : 0;
  FrozenStepper stepper(config, params.dt);
  const SineTransform& tr = stepper.transform();
  const GridField xg = tr.to_grid(x);
  std::vector<double> yg(config.m_points), acc(config.m_points);
  std::vector<SpectralField> reps;
  reps.reserve(params.replicas);
  for (std::size_t r = 0; r < params.replicas; ++r) {
    NoiseStream w2 = NoiseStream::derive(seed, r, NoiseRole::averaging);
    SpectralField y = y0 ? *y0 : SpectralField(config.n_modes);
    for (std::size_t i = 0; i < nb; ++i) stepper.step(xg.values(), y.coeffs(), w2);
    std::fill(acc.begin(), acc.end(), 0.0);
    if (params.strategy == AveragingStrategy::time_average) {
      for (std::size_t i = 0; i < na; ++i) {
        detail::accumulate_drift(config, tr, xg.values(), y.coeffs(), yg, acc);
        stepper.step(xg.values(), y.coeffs(), w2);
      }
      for (double& a : acc) a /= static_cast<double>(na);
    } else {
      detail::accumulate_drift(config, tr, xg.values(), y.coeffs(), yg, acc);
    }
    SpectralField v(config.n_modes);
    tr.from_grid(acc, v.coeffs());
    reps.push_back(std::move(v));
  }
  BbarEstimate est;
  est.x = x;
  est.params = params;
  est.seed = seed;
  est.value = SpectralField(config.n_modes);
  for (const auto& v : reps) est.value += v;
  est.value *= 1.0 / static_cast<double>(reps.size());
  const double rr = static_cast<double>(reps.size());
  est.mode_std_error = SpectralField(config.n_modes);
  for (const auto& v : reps)
    for (std::size_t k = 0; k < config.n_modes; ++k) {
      const double d = v[k] - est.value[k];
      est.mode_std_error[k] += d * d;
    }
  double ss = 0.0;
  for (std::size_t k = 0; k < config.n_modes; ++k) {
    ss += est.mode_std_error[k];
    est.mode_std_error[k] = std::sqrt(est.mode_std_error[k] / (rr * (rr - 1.0)));
  }
  est.std_error = std::sqrt(ss / (rr * (rr - 1.0)));
  return est;
}

struct OracleOptions {
  double resolution = 1e-2;   // quantization of the key coordinates
  std::size_t key_modes = 8;  // leading modes entering the cache key
  bool cache = true;
  /// Reuse one seed for every evaluation; the estimator then is a
  /// deterministic function of x (used for difference quotients).
  bool common_random_numbers = false;
};

/// Memoized Bbar estimator usable as the drift of the averaged equation.
///
/// Without common random numbers each cache miss takes the next seed of a
/// counter sequence, so a single-threaded caller is reproducible. The cache
/// is shared under a mutex; on a race both writers hold statistically
/// equivalent values and the last one wins.
class BbarOracle {
 public:
  BbarOracle(ModelConfig config, AveragingParams params, std::uint64_t seed,
             OracleOptions options = {})
      : config_(std::move(config)), params_(params), seed_(seed), options_(options) {
    if (options_.cache && !(options_.resolution > 0.0))
      throw ConfigError("oracle cache resolution must be > 0 (0 means unbounded memory)");
    params_.validate();
    require_ergodic(config_);
  }
  BbarOracle(const BbarOracle& o)
      : config_(o.config_), params_(o.params_), seed_(o.seed_), options_(o.options_) {
    std::lock_guard lock(o.mutex_);
    cache_ = o.cache_;
    counter_ = o.counter_;
  }

  BbarEstimate estimate(const SpectralField& x) {
    std::vector<std::int64_t> key;
    if (options_.cache) {
      key = make_key(x);
      std::lock_guard lock(mutex_);
      auto it = cache_.find(key);
      if (it != cache_.end()) {
        ++hits_;
        return it->second;
      }
    }
    std::uint64_t s = seed_;
    {
      std::lock_guard lock(mutex_);
      ++misses_;
      if (!options_.common_random_numbers) s = detail::splitmix64(seed_ ^ detail::splitmix64(counter_++));
    }
    BbarEstimate est = estimate_bbar(x, params_, config_, s);
    if (options_.cache) {
      std::lock_guard lock(mutex_);
      cache_[key] = est;
    }
    return est;
  }

  SpectralField operator()(const SpectralField& x) { return estimate(x).value; }

  std::size_t cache_size() const {
    std::lock_guard lock(mutex_);
    return cache_.size();
  }
  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }
  const AveragingParams& params() const { return params_; }

 private:
  std::vector<std::int64_t> make_key(const SpectralField& x) const {
    const std::size_t n = std::min(options_.key_modes, x.n_modes());
    std::vector<std::int64_t> key(n);
    for (std::size_t i = 0; i < n; ++i)
      key[i] = static_cast<std::int64_t>(std::llround(x[i] / options_.resolution));
    return key;
  }

  ModelConfig config_;
  AveragingParams params_;
  std::uint64_t seed_;
  OracleOptions options_;
  mutable std::mutex mutex_;
  std::map<std::vector<std::int64_t>, BbarEstimate> cache_;
  std::uint64_t counter_ = 0;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

inline BbarOracle bbar_oracle(const AveragingParams& params, const ModelConfig& config,
                              std::uint64_t seed, OracleOptions options = {}) {
  return BbarOracle(config, params, seed, options);
}

struct MixingOptions {
  double dt = 0.05;
  double sample_interval = 0.25;
  std::size_t coordinate_functionals = 3;  // first K mode coordinates of Y
  bool drift_functionals = true;           // leading modes of B(x, Y)
  double equilibrium_time = 20.0;          // window after the horizon estimating mu^x(phi)
  double confidence = 0.95;
};

struct FunctionalFit {
  std::string name;
  bool informative = false;
  double rate = 0.0;
  double ci_half_width = std::numeric_limits<double>::infinity();
  std::size_t points = 0;
};

struct MixingFit {
  double rate = 0.0;  // slowest informative decay rate
  double ci_half_width = std::numeric_limits<double>::infinity();
  bool wide_ci = true;  // insufficient data: horizon too short or too few significant points
  std::string note;
  std::vector<FunctionalFit> functionals;
  std::vector<double> times;
};

/// Fits the exponential decay rate of |E phi(Y^{x,y0}_t) - mu^x(phi)| for the
/// test functionals.
inline MixingFit mixing_diagnostic(const SpectralField& x, const SpectralField& y0,
                                   const ModelConfig& config, double horizon,
                                   std::size_t n_replicas, std::uint64_t seed,
                                   const MixingOptions& opt = {}) {
  config.validate();
  require_ergodic(config);
  if (n_replicas < 2) throw ConfigError("mixing diagnostic needs >= 2 replicas");
  const std::size_t stride = step_count(opt.sample_interval, opt.dt);
  const std::size_t n_samples = step_count(horizon, opt.sample_interval);
  const std::size_t n_eq = step_count(opt.equilibrium_time, opt.dt);
  const std::size_t kc = std::min(opt.coordinate_functionals, config.n_modes);
  const std::size_t kd = opt.drift_functionals ? std::min<std::size_t>(2, config.n_modes) : 0;
  const std::size_t nf = kc + kd;

  FrozenStepper stepper(config, opt.dt);
  const SineTransform& tr = stepper.transform();
  const GridField xg = tr.to_grid(x);
  std::vector<double> yg(config.m_points), acc(config.m_points);
  SpectralField bcoef(config.n_modes);
  auto functionals = [&](const SpectralField& y, std::vector<double>& out) {
    for (std::size_t k = 0; k < kc; ++k) out[k] = y[k];
    if (kd > 0) {
      std::fill(acc.begin(), acc.end(), 0.0);
      detail::accumulate_drift(config, tr, xg.values(), y.coeffs(), yg, acc);
      tr.from_grid(acc, bcoef.coeffs());
      for (std::size_t k = 0; k < kd; ++k) out[kc + k] = bcoef[k];
    }
  };

  // stats[sample][functional] across replicas; eq[functional] pooled time average.
  std::vector<std::vector<RunningStats>> stats(n_samples + 1, std::vector<RunningStats>(nf));
  std::vector<RunningStats> eq(nf);
  std::vector<double> phi(nf), phi_eq(nf);
  for (std::size_t r = 0; r < n_replicas; ++r) {
    NoiseStream w2 = NoiseStream::derive(seed, r, NoiseRole::averaging);
    SpectralField y = y0;
    for (std::size_t s = 0; s <= n_samples; ++s) {
      functionals(y, phi);
      for (std::size_t f = 0; f < nf; ++f) stats[s][f].add(phi[f]);
      if (s == n_samples) break;
      for (std::size_t i = 0; i < stride; ++i) stepper.step(xg.values(), y.coeffs(), w2);
    }
    std::fill(phi_eq.begin(), phi_eq.end(), 0.0);
    for (std::size_t i = 0; i < n_eq; ++i) {
      stepper.step(xg.values(), y.coeffs(), w2);
      if (i % stride == 0) {
        functionals(y, phi);
        for (std::size_t f = 0; f < nf; ++f) eq[f].add(phi[f]);
      }
    }
  }

  MixingFit out;
  for (std::size_t s = 0; s <= n_samples; ++s)
    out.times.push_back(static_cast<double>(s) * opt.sample_interval);
  const double relaxation = 1.0 / config.spectral_gap();
  for (std::size_t f = 0; f < nf; ++f) {
    FunctionalFit fit;
    fit.name = f < kc ? "y_" + std::to_string(f + 1) : "B_" + std::to_string(f - kc + 1);
    const double mu = eq[f].mean();
    // Equilibrium samples are correlated; their stderr is only indicative.
    const double mu_err = eq[f].stddev() / std::sqrt(static_cast<double>(n_replicas));
    std::vector<double> ts, ls, sig;
    for (std::size_t s = 0; s <= n_samples; ++s) {
      const double dev = std::fabs(stats[s][f].mean() - mu);
      const double err = std::hypot(stats[s][f].std_error(), mu_err);
      if (dev > 3.0 * err && dev > 0.0) {
        ts.push_back(out.times[s]);
        ls.push_back(std::log(dev));
        sig.push_back(err / dev);
      } else {
        break;  // the signal has reached the noise floor
      }
    }
    fit.points = ts.size();
    if (ts.size() >= 3) {
      const LineFit lf = line_fit(ts, ls, sig, opt.confidence);
      fit.rate = -lf.slope;
      fit.ci_half_width = lf.ci_half_width;
      fit.informative = std::isfinite(lf.ci_half_width);
    }
    out.functionals.push_back(fit);
  }
  bool any = false;
  for (const auto& f : out.functionals) {
    if (!f.informative) continue;
    if (!any || f.rate < out.rate) {
      out.rate = f.rate;
      out.ci_half_width = f.ci_half_width;
    }
    any = true;
  }
  out.wide_ci = !any || horizon < relaxation;
  if (horizon < relaxation) {
    out.note = "horizon shorter than one relaxation time 1/(lambda_1 - L_F)";
    out.ci_half_width = std::numeric_limits<double>::infinity();
  } else if (!any) {
    out.note = "no functional decays above the noise floor for 3 samples";
  }
  return out;
}

}  // namespace slowfast
