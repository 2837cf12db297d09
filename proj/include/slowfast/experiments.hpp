#pragma once

// Monte-Carlo experiments with fitted exponents and CI-aware verdicts. Every
// experiment is a pure function of (config, params, seed): trajectories use
// streams derived from the seed and results are aggregated in index order.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "slowfast/averaging.hpp"
#include "slowfast/errors.hpp"
#include "slowfast/model.hpp"
#include "slowfast/noise.hpp"
#include "slowfast/simulator.hpp"
#include "slowfast/stats.hpp"

namespace slowfast {

using Json = nlohmann::ordered_json;

/// Exponent m theta / (m theta + 1), m = alpha ^ (beta gamma), and the
/// Khasminskii block size delta(eps) = eps^{1 / (m theta + 1)}.
struct RateTarget {
  double theta = 0.55;
  double alpha = 0.5;
  double beta = 0.5;
  double gamma = 0.5;

  static RateTarget from(const ModelConfig& c, double theta) {
    if (!(theta > 0.0 && theta < 1.0)) throw ConfigError("theta must lie in (0, 1)");
    return {theta, c.alpha, c.beta, c.gamma};
  }
  double holder_index() const { return std::min(alpha, beta * gamma); }
  double exponent() const {
    const double tm = theta * holder_index();
    return tm / (tm + 1.0);
  }
  double delta(double eps) const {
    validate_eps(eps);
    return std::pow(eps, 1.0 / (theta * holder_index() + 1.0));
  }
};

enum class Verdict { pass, fail, inconclusive };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::fail: return "fail";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "?";
}

struct ExperimentReport {
  std::string name;
  std::string parameter;  // meaning of the grid
  std::vector<double> grid;
  std::vector<double> estimates;
  std::vector<double> stderrs;
  std::optional<LineFit> fit;
  double target = std::numeric_limits<double>::quiet_NaN();     // theoretical reference
  double threshold = std::numeric_limits<double>::quiet_NaN();  // what the verdict tests against
  Verdict verdict = Verdict::inconclusive;
  std::uint64_t seed = 0;
  double wall_time_s = 0.0;
  std::vector<std::string> notes;
  Json details = Json::object();

  bool passed() const { return verdict == Verdict::pass; }

  Json to_json(bool include_wall_time = true) const {
    Json j;
    j["name"] = name;
    j["parameter"] = parameter;
    j["grid"] = grid;
    j["estimates"] = estimates;
    j["stderrs"] = stderrs;
    if (fit) {
      j["slope"] = fit->slope;
      j["slope_ci"] = {fit->lower(), fit->upper()};
    } else {
      j["slope"] = nullptr;
      j["slope_ci"] = nullptr;
    }
    j["target"] = target;
    j["threshold"] = threshold;
    j["verdict"] = to_string(verdict);
    j["seed"] = seed;
    if (include_wall_time) j["wall_time_s"] = wall_time_s;
    j["notes"] = notes;
    j["details"] = details;
    return j;
  }

  std::string to_csv() const {
    std::string out = (parameter.empty() ? std::string("x") : parameter) + ",estimate,stderr\n";
    for (std::size_t i = 0; i < grid.size(); ++i) {
      char line[128];
      std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g\n", grid[i],
                    i < estimates.size() ? estimates[i] : 0.0, i < stderrs.size() ? stderrs[i] : 0.0);
      out += line;
    }
    return out;
  }
};

/// Runs fn(i) for i < n on up to `threads` workers (0: hardware concurrency).
/// fn must write only to slot i of its outputs.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  unsigned t = threads ? threads : std::max(1U, std::thread::hardware_concurrency());
  t = static_cast<unsigned>(std::min<std::size_t>(t, n));
  if (t <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(t);
  for (unsigned w = 0; w < t; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += t) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct RatePoint {
  double scale;
  double estimate;
  double stderr_;
};

/// Weighted least squares of log(estimate) on log(scale), with log-space
/// errors stderr/estimate. Nonpositive estimates are dropped with a warning.
inline std::optional<LineFit> rate_fit(const std::vector<RatePoint>& points,
                                       double confidence = 0.95,
                                       std::vector<std::string>* warnings = nullptr) {
  std::vector<double> xs, ys, sig;
  for (const auto& p : points) {
    if (!(p.estimate > 0.0) || !(p.scale > 0.0)) {
      if (warnings) {
        std::ostringstream msg;
        msg << "dropped point at scale " << p.scale << " with nonpositive estimate " << p.estimate;
        warnings->push_back(msg.str());
      }
      continue;
    }
    xs.push_back(std::log(p.scale));
    ys.push_back(std::log(p.estimate));
    sig.push_back(p.stderr_ / p.estimate);
  }
  if (xs.size() < 3) {
    if (warnings) warnings->push_back("fewer than 3 usable points; no fit");
    return std::nullopt;
  }
  return line_fit(xs, ys, sig, confidence);
}

namespace detail {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline SpectralField or_zero(const SpectralField& u, std::size_t n) {
  return u.n_modes() == 0 ? SpectralField(n) : u;
}

inline void summarize(const std::vector<double>& samples, double& mean, double& se) {
  RunningStats s;
  for (double v : samples) s.add(v);
  mean = s.mean();
  se = s.std_error();
}

/// Mean and t-based CI lower bound of a paired sample.
inline double paired_lower(const std::vector<double>& a, const std::vector<double>& b,
                           double confidence, double* mean_out = nullptr) {
  RunningStats s;
  for (std::size_t i = 0; i < a.size(); ++i) s.add(a[i] - b[i]);
  if (mean_out) *mean_out = s.mean();
  return s.mean() - t_quantile(s.count() - 1, confidence) * s.std_error();
}

inline double paired_upper(const std::vector<double>& a, const std::vector<double>& b,
                           double confidence) {
  RunningStats s;
  for (std::size_t i = 0; i < a.size(); ++i) s.add(a[i] - b[i]);
  return s.mean() + t_quantile(s.count() - 1, confidence) * s.std_error();
}

inline void require_mc(std::size_t n_mc) {
  if (n_mc < 2) throw ConfigError("n_mc must be >= 2");
}

}  // namespace detail

// ---------------------------------------------------------------------------

struct StrongErrorParams {
  std::vector<double> eps_grid{0.1, 0.03, 0.01, 0.003};
  double horizon = 1.2;
  /// With dt = 0.03 every eps above gets an integral number of fast substeps
  /// of exactly 0.1 in frozen time, matching averaging.dt.
  double dt = 0.03;
  double fast_substep_factor = 0.1;
  std::size_t n_mc = 200;
  int moment = 1;  // p in E sup |X^eps - Xbar|^p
  double theta = 0.55;
  AveragingParams averaging;
  OracleOptions oracle;
  SpectralField x0;  // empty: zero
  double confidence = 0.95;
  std::uint64_t seed = 2024;
  unsigned threads = 0;

  static StrongErrorParams defaults(const ModelConfig& c) {
    StrongErrorParams p;
    p.averaging = AveragingParams::defaults(c, p.fast_substep_factor);
    return p;
  }
};

/// E sup_{t on the macro grid} |X^eps_t - Xbar_t|^p over coupled pairs. The
/// averaged path of MC index i is shared by all eps and consumes the same W^1
/// increments as every slow-fast path of that index.
inline ExperimentReport strong_error(const ModelConfig& config, const StrongErrorParams& prm) {
  detail::Stopwatch watch;
  config.validate();
  detail::require_mc(prm.n_mc);
  if (prm.moment < 1) throw ConfigError("moment p must be >= 1");
  if (prm.eps_grid.size() < 2) throw ConfigError("strong_error needs at least 2 eps values");
  for (double e : prm.eps_grid) validate_eps(e);
  const std::size_t ne = prm.eps_grid.size();
  const SpectralField x0 = detail::or_zero(prm.x0, config.n_modes);
  const StepScheme scheme{prm.dt, prm.fast_substep_factor};
  scheme.validate();
  const BbarOracle proto(config, prm.averaging, prm.seed, prm.oracle);

  std::vector<std::vector<double>> err(ne, std::vector<double>(prm.n_mc));
  std::vector<double> oracle_se(prm.n_mc);
  parallel_for(prm.n_mc, prm.threads, [&](std::size_t i) {
    BbarOracle oracle = proto;
    double worst_se = 0.0;
    AveragedDrift bbar = [&](const SpectralField& x) {
      const BbarEstimate e = oracle.estimate(x);
      worst_se = std::max(worst_se, e.std_error);
      return e.value;
    };
    NoiseStream w1 = NoiseStream::derive(prm.seed, i, NoiseRole::slow);
    const auto avg = simulate_averaged(x0, prm.horizon, prm.dt, w1, bbar, config);
    oracle_se[i] = worst_se;
    for (std::size_t e = 0; e < ne; ++e) {
      NoiseStream v1 = NoiseStream::derive(prm.seed, i, NoiseRole::slow);
      NoiseStream v2 = NoiseStream::derive(prm.seed, i, NoiseRole::fast);
      SlowFastState s0{x0, SpectralField(config.n_modes), 0.0, prm.eps_grid[e]};
      const SlowFastPath path = simulate_slow_fast(s0, scheme, prm.horizon, v1, v2, config);
      double sup = 0.0;
      for (std::size_t k = 0; k < avg.size(); ++k) sup = std::max(sup, distance(path.x[k], avg[k]));
      err[e][i] = std::pow(sup, prm.moment);
    }
  });

  ExperimentReport rep;
  rep.name = "strong_error";
  rep.parameter = "eps";
  rep.seed = prm.seed;
  rep.grid = prm.eps_grid;
  std::vector<RatePoint> pts;
  for (std::size_t e = 0; e < ne; ++e) {
    double m = 0, se = 0;
    detail::summarize(err[e], m, se);
    rep.estimates.push_back(m);
    rep.stderrs.push_back(se);
    pts.push_back({prm.eps_grid[e], m, se});
  }
  const RateTarget target = RateTarget::from(config, prm.theta);
  rep.target = prm.moment * target.exponent();
  rep.threshold = 0.0;
  rep.fit = rate_fit(pts, prm.confidence, &rep.notes);

  // Order the grid from large to small eps for the monotonicity check.
  std::vector<std::size_t> order(ne);
  for (std::size_t e = 0; e < ne; ++e) order[e] = e;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return prm.eps_grid[a] > prm.eps_grid[b]; });
  bool monotone = true, reversed = false;
  Json diffs = Json::array();
  for (std::size_t j = 0; j + 1 < ne; ++j) {
    const auto& big = err[order[j]];
    const auto& small = err[order[j + 1]];
    double mean = 0;
    const double lo = detail::paired_lower(big, small, prm.confidence, &mean);
    const double hi = detail::paired_upper(big, small, prm.confidence);
    monotone = monotone && lo > 0.0;
    reversed = reversed || hi < 0.0;
    diffs.push_back({{"eps_from", prm.eps_grid[order[j]]},
                     {"eps_to", prm.eps_grid[order[j + 1]]},
                     {"mean_decrease", mean},
                     {"ci", {lo, hi}}});
  }
  double max_oracle_se = 0.0;
  for (double s : oracle_se) max_oracle_se = std::max(max_oracle_se, s);
  rep.details["moment"] = prm.moment;
  rep.details["horizon"] = prm.horizon;
  rep.details["dt"] = prm.dt;
  rep.details["n_mc"] = prm.n_mc;
  rep.details["rate_exponent"] = target.exponent();
  rep.details["delta_rule"] = Json::array();
  for (double e : prm.eps_grid) rep.details["delta_rule"].push_back(target.delta(e));
  rep.details["paired_decrease"] = diffs;
  rep.details["monotone"] = monotone;
  rep.details["bbar_stderr_max"] = max_oracle_se;

  const bool slope_ok = rep.fit && rep.fit->lower() > 0.0;
  if (monotone && slope_ok) {
    rep.verdict = Verdict::pass;
  } else if (reversed || (rep.fit && rep.fit->upper() < 0.0)) {
    rep.verdict = Verdict::fail;
    rep.notes.push_back("error grows as eps decreases beyond the CI");
  } else {
    rep.verdict = Verdict::inconclusive;
    if (!monotone) rep.notes.push_back("error curve not strictly decreasing within CI");
    if (!slope_ok) rep.notes.push_back("slope CI does not exclude 0");
  }
  rep.notes.push_back("the target exponent is an upper-bound construction, reported not asserted");
  rep.wall_time_s = watch.seconds();
  return rep;
}

// ---------------------------------------------------------------------------

struct IncrementParams {
  double eps = 0.01;
  std::vector<double> delta_grid{1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128, 1.0 / 256};
  double horizon = 1.0;
  double dt = 1.0 / 1024;
  double fast_substep_factor = 0.1;
  std::size_t n_mc = 200;
  double theta = 0.55;
  double slack = 0.8;  // asserted slope >= slack * theoretical exponent
  SpectralField x0;
  double confidence = 0.95;
  std::uint64_t seed = 11;
  unsigned threads = 0;
};

namespace detail {

inline std::size_t block_of(double delta, double dt) {
  const double r = delta / dt;
  const double n = std::round(r);
  if (n < 1.0 || std::fabs(r - n) > 1e-9 * std::max(1.0, r))
    throw ConfigError("delta values must be multiples of dt");
  return static_cast<std::size_t>(n);
}

inline void slope_verdict(ExperimentReport& rep, double threshold) {
  rep.threshold = threshold;
  if (!rep.fit) {
    rep.verdict = Verdict::inconclusive;
    return;
  }
  if (rep.fit->lower() >= threshold) {
    rep.verdict = Verdict::pass;
  } else if (rep.fit->upper() < threshold) {
    rep.verdict = Verdict::fail;
  } else {
    rep.verdict = Verdict::inconclusive;
    rep.notes.push_back("slope CI straddles the threshold");
  }
}

}  // namespace detail

/// E int_0^T |X^eps_t - X^eps_{t(delta)}|^2 dt, t(delta) = floor(t / delta) delta.
inline ExperimentReport increment_scaling(const ModelConfig& config, const IncrementParams& prm) {
  detail::Stopwatch watch;
  config.validate();
  detail::require_mc(prm.n_mc);
  validate_eps(prm.eps);
  const StepScheme scheme{prm.dt, prm.fast_substep_factor};
  const SpectralField x0 = detail::or_zero(prm.x0, config.n_modes);
  std::vector<std::size_t> blocks;
  for (double d : prm.delta_grid) blocks.push_back(detail::block_of(d, prm.dt));
  const std::size_t nd = blocks.size();

  std::vector<std::vector<double>> val(nd, std::vector<double>(prm.n_mc));
  parallel_for(prm.n_mc, prm.threads, [&](std::size_t i) {
    NoiseStream w1 = NoiseStream::derive(prm.seed, i, NoiseRole::slow);
    NoiseStream w2 = NoiseStream::derive(prm.seed, i, NoiseRole::fast);
    SlowFastState s0{x0, SpectralField(config.n_modes), 0.0, prm.eps};
    const SlowFastPath path = simulate_slow_fast(s0, scheme, prm.horizon, w1, w2, config);
    const std::size_t n = path.x.size() - 1;
    for (std::size_t d = 0; d < nd; ++d) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k)
        s += (path.x[k] - path.x[k / blocks[d] * blocks[d]]).squared_norm();
      val[d][i] = s * prm.dt;
    }
  });

  ExperimentReport rep;
  rep.name = "increment_scaling";
  rep.parameter = "delta";
  rep.seed = prm.seed;
  rep.grid = prm.delta_grid;
  std::vector<RatePoint> pts;
  for (std::size_t d = 0; d < nd; ++d) {
    double m = 0, se = 0;
    detail::summarize(val[d], m, se);
    rep.estimates.push_back(m);
    rep.stderrs.push_back(se);
    pts.push_back({prm.delta_grid[d], m, se});
  }
  rep.target = prm.theta;
  rep.fit = rate_fit(pts, prm.confidence, &rep.notes);
  detail::slope_verdict(rep, prm.slack * prm.theta);
  rep.details["eps"] = prm.eps;
  rep.details["dt"] = prm.dt;
  rep.details["n_mc"] = prm.n_mc;
  rep.wall_time_s = watch.seconds();
  return rep;
}

// ---------------------------------------------------------------------------

struct AuxFastParams {
  double eps = 0.01;
  std::vector<double> delta_grid{1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128, 1.0 / 256};
  double horizon = 1.0;
  double dt = 1.0 / 1024;
  double fast_substep_factor = 0.1;
  std::size_t n_mc = 200;
  double theta = 0.55;
  double slack = 0.8;
  SpectralField x0;
  double confidence = 0.95;
  std::uint64_t seed = 13;
  unsigned threads = 0;
};

/// E int_0^T |Y^eps_t - Yhat^eps_t|^2 dt where Yhat freezes the slow argument
/// on blocks of length delta and replays the same W^2.
inline ExperimentReport aux_fast_error(const ModelConfig& config, const AuxFastParams& prm) {
  detail::Stopwatch watch;
  config.validate();
  detail::require_mc(prm.n_mc);
  validate_eps(prm.eps);
  const StepScheme scheme{prm.dt, prm.fast_substep_factor};
  const SpectralField x0 = detail::or_zero(prm.x0, config.n_modes);
  for (double d : prm.delta_grid) detail::block_of(d, prm.dt);
  const std::size_t nd = prm.delta_grid.size();

  std::vector<std::vector<double>> val(nd, std::vector<double>(prm.n_mc));
  parallel_for(prm.n_mc, prm.threads, [&](std::size_t i) {
    NoiseStream w1 = NoiseStream::derive(prm.seed, i, NoiseRole::slow);
    NoiseStream w2 = NoiseStream::derive(prm.seed, i, NoiseRole::fast);
    const SpectralField y0(config.n_modes);
    SlowFastState s0{x0, y0, 0.0, prm.eps};
    const SlowFastPath path = simulate_slow_fast(s0, scheme, prm.horizon, w1, w2, config);
    for (std::size_t d = 0; d < nd; ++d) {
      NoiseStream replay = NoiseStream::derive(prm.seed, i, NoiseRole::fast);
      const auto yhat = simulate_auxiliary_fast(path.x, y0, prm.delta_grid[d], scheme, prm.eps,
                                                replay, config);
      double s = 0.0;
      for (std::size_t k = 0; k + 1 < yhat.size(); ++k) s += (path.y[k] - yhat[k]).squared_norm();
      val[d][i] = s * prm.dt;
    }
  });

  ExperimentReport rep;
  rep.name = "aux_fast_error";
  rep.parameter = "delta";
  rep.seed = prm.seed;
  rep.grid = prm.delta_grid;
  std::vector<RatePoint> pts;
  bool all_zero = true;
  for (std::size_t d = 0; d < nd; ++d) {
    double m = 0, se = 0;
    detail::summarize(val[d], m, se);
    all_zero = all_zero && m == 0.0;
    rep.estimates.push_back(m);
    rep.stderrs.push_back(se);
    pts.push_back({prm.delta_grid[d], m, se});
  }
  rep.target = prm.theta * config.gamma;
  rep.details["eps"] = prm.eps;
  rep.details["dt"] = prm.dt;
  rep.details["n_mc"] = prm.n_mc;
  rep.details["identically_zero"] = all_zero;
  if (all_zero) {
    rep.threshold = prm.slack * rep.target;
    rep.verdict = Verdict::pass;
    rep.notes.push_back("error vanishes identically (fast drift independent of x)");
  } else {
    rep.fit = rate_fit(pts, prm.confidence, &rep.notes);
    detail::slope_verdict(rep, prm.slack * rep.target);
  }
  rep.wall_time_s = watch.seconds();
  return rep;
}

// ---------------------------------------------------------------------------

struct ContractionParams {
  SpectralField x;  // empty: zero
  std::vector<double> times{1.0, 2.0, 4.0};
  double dt = 0.01;
  std::size_t n_mc = 200;
  double tolerance = 0.1;
  double y_scale = 1.0;  // initial fast states ~ N(0, y_scale^2 / k^2) on 8 modes
  std::vector<double> dx_grid{0.05, 0.1, 0.2, 0.4};
  double plateau_time = 4.0;
  double plateau_stability = 4.0;
  std::uint64_t seed = 17;
  unsigned threads = 0;
};

/// Shared-noise pairs of the frozen equation.
/// (a) x1 = x2: pathwise |dY_t|^2 <= e^{-(lambda_1 - L_F) t} |dy_0|^2 (1 + tol).
/// (b) y1 = y2: plateau of E|dY_t|^2 over [T/2, T] against |dx|^{2 gamma}.
inline ExperimentReport contraction_test(const ModelConfig& config, const ContractionParams& prm) {
  detail::Stopwatch watch;
  config.validate();
  detail::require_mc(prm.n_mc);
  if (prm.times.empty()) throw ConfigError("contraction_test needs sample times");
  const double gap = config.spectral_gap();
  const SpectralField x = detail::or_zero(prm.x, config.n_modes);
  const double t_end = *std::max_element(prm.times.begin(), prm.times.end());
  const std::size_t n_steps = step_count(t_end, prm.dt);
  std::vector<std::size_t> at;
  for (double t : prm.times) at.push_back(step_count(t, prm.dt));
  const std::size_t nt = at.size();

  // ratio[t][i] = |dY_t|^2 / |dy0|^2
  std::vector<std::vector<double>> ratio(nt, std::vector<double>(prm.n_mc));
  parallel_for(prm.n_mc, prm.threads, [&](std::size_t i) {
    NoiseStream init = NoiseStream::derive(prm.seed, i, NoiseRole::initial);
    SpectralField y1(config.n_modes), y2(config.n_modes);
    for (std::size_t k = 1; k <= std::min<std::size_t>(8, config.n_modes); ++k) {
      y1[k - 1] = prm.y_scale * init.gaussian() / static_cast<double>(k);
      y2[k - 1] = prm.y_scale * init.gaussian() / static_cast<double>(k);
    }
    const double d0 = (y1 - y2).squared_norm();
    NoiseStream wa = NoiseStream::derive(prm.seed, i, NoiseRole::fast);
    NoiseStream wb = wa;
    FrozenStepper sa(config, prm.dt), sb(config, prm.dt);
    const GridField xg = sa.transform().to_grid(x);
    for (std::size_t s = 1; s <= n_steps; ++s) {
      sa.step(xg.values(), y1.coeffs(), wa);
      sb.step(xg.values(), y2.coeffs(), wb);
      for (std::size_t j = 0; j < nt; ++j)
        if (at[j] == s) ratio[j][i] = d0 > 0.0 ? (y1 - y2).squared_norm() / d0 : 0.0;
    }
  });

  ExperimentReport rep;
  rep.name = "contraction";
  rep.parameter = "t";
  rep.seed = prm.seed;
  rep.grid = prm.times;
  rep.target = gap;
  rep.threshold = 1.0 + prm.tolerance;
  bool pathwise = true;
  double worst = 0.0;
  std::size_t worst_path = 0;
  double worst_t = 0.0;
  for (std::size_t j = 0; j < nt; ++j) {
    double m = 0, se = 0;
    detail::summarize(ratio[j], m, se);
    rep.estimates.push_back(m);
    rep.stderrs.push_back(se);
    const double bound = std::exp(-gap * prm.times[j]);
    for (std::size_t i = 0; i < prm.n_mc; ++i) {
      const double rel = ratio[j][i] / bound;
      if (rel > worst) {
        worst = rel;
        worst_path = i;
        worst_t = prm.times[j];
      }
    }
  }
  pathwise = worst <= 1.0 + prm.tolerance;
  rep.details["bound"] = "exp(-(lambda_1 - L_F) t)";
  rep.details["worst_ratio_to_bound"] = worst;
  rep.details["worst_path"] = worst_path;
  rep.details["worst_t"] = worst_t;

  // (b) plateau against |dx|^{2 gamma}
  bool plateau_ok = true;
  if (!prm.dx_grid.empty()) {
    const std::size_t np = step_count(prm.plateau_time, prm.dt);
    const std::size_t half = np / 2;
    const std::size_t nx = prm.dx_grid.size();
    std::vector<std::vector<double>> plateau(nx, std::vector<double>(prm.n_mc));
    parallel_for(prm.n_mc, prm.threads, [&](std::size_t i) {
      for (std::size_t d = 0; d < nx; ++d) {
        SpectralField x2 = x;
        x2[0] += prm.dx_grid[d];
        NoiseStream wa = NoiseStream::derive(prm.seed, i, NoiseRole::sampling);
        NoiseStream wb = wa;
        FrozenStepper sa(config, prm.dt), sb(config, prm.dt);
        const GridField xg1 = sa.transform().to_grid(x), xg2 = sa.transform().to_grid(x2);
        SpectralField y1(config.n_modes), y2(config.n_modes);
        double acc = 0.0;
        for (std::size_t s = 1; s <= np; ++s) {
          sa.step(xg1.values(), y1.coeffs(), wa);
          sb.step(xg2.values(), y2.coeffs(), wb);
          if (s > half) acc += (y1 - y2).squared_norm();
        }
        plateau[d][i] = acc / static_cast<double>(np - half);
      }
    });
    Json rows = Json::array();
    std::vector<double> c;
    for (std::size_t d = 0; d < nx; ++d) {
      double m = 0, se = 0;
      detail::summarize(plateau[d], m, se);
      c.push_back(m / std::pow(prm.dx_grid[d], 2.0 * config.gamma));
      rows.push_back({{"dx", prm.dx_grid[d]}, {"plateau", m}, {"stderr", se}, {"constant", c.back()}});
    }
    const auto smallest = std::min_element(prm.dx_grid.begin(), prm.dx_grid.end()) - prm.dx_grid.begin();
    const auto largest = std::max_element(prm.dx_grid.begin(), prm.dx_grid.end()) - prm.dx_grid.begin();
    const double growth = c[static_cast<std::size_t>(largest)] > 0.0
                              ? c[static_cast<std::size_t>(smallest)] / c[static_cast<std::size_t>(largest)]
                              : 0.0;
    plateau_ok = growth <= prm.plateau_stability;
    rep.details["plateau"] = rows;
    rep.details["plateau_constant"] = *std::max_element(c.begin(), c.end());
    rep.details["plateau_constant_growth"] = growth;
    rep.details["plateau_ok"] = plateau_ok;
  }
  rep.details["pathwise_ok"] = pathwise;
  rep.verdict = pathwise && plateau_ok ? Verdict::pass : Verdict::fail;
  if (!pathwise) {
    std::ostringstream msg;
    msg << "pathwise bound violated: path " << worst_path << " at t=" << worst_t << " ratio " << worst;
    rep.notes.push_back(msg.str());
  }
  if (!plateau_ok) rep.notes.push_back("plateau constant grows as |dx| shrinks");
  rep.wall_time_s = watch.seconds();
  return rep;
}

// ---------------------------------------------------------------------------

struct CorrelationParams {
  SpectralField x;  // empty: zero
  double burn_in = 0.0;  // 0: mixing burn-in of the averaging module
  double dt = 0.05;
  double lag_step = 0.5;
  double max_lag_relaxations = 8.0;  // in units of 1/(lambda_1 - L_F)
  double record_time = 200.0;        // origins s per trajectory
  std::size_t n_mc = 32;
  double confidence = 0.95;
  std::uint64_t seed = 19;
  unsigned threads = 0;
};

/// Psi(lag) = E <B(x,Y_s) - Bbar(x), B(x,Y_{s+lag}) - Bbar(x)> in the
/// stationary regime, averaged over origins s; exponential rate fitted over
/// the lags where Psi is significant.
inline ExperimentReport correlation_decay(const ModelConfig& config, const CorrelationParams& prm) {
  detail::Stopwatch watch;
  config.validate();
  require_ergodic(config);
  detail::require_mc(prm.n_mc);
  const double gap = config.spectral_gap();
  const SpectralField x = detail::or_zero(prm.x, config.n_modes);
  const double burn = prm.burn_in > 0.0 ? prm.burn_in : AveragingParams::mixing_burn_in(config);
  const std::size_t nb = static_cast<std::size_t>(std::ceil(burn / prm.dt - 1e-9));
  const std::size_t stride = step_count(prm.lag_step, prm.dt);
  const double max_lag = std::round(prm.max_lag_relaxations / gap / prm.lag_step) * prm.lag_step;
  const std::size_t n_lags = step_count(max_lag, prm.lag_step) + 1;
  const std::size_t n_origins = step_count(prm.record_time, prm.lag_step);
  const std::size_t n_rec = n_origins + n_lags;

  std::vector<std::vector<double>> psi(n_lags, std::vector<double>(prm.n_mc));
  parallel_for(prm.n_mc, prm.threads, [&](std::size_t i) {
    NoiseStream w2 = NoiseStream::derive(prm.seed, i, NoiseRole::averaging);
    FrozenStepper stepper(config, prm.dt);
    const SineTransform& tr = stepper.transform();
    const GridField xg = tr.to_grid(x);
    SpectralField y(config.n_modes);
    for (std::size_t s = 0; s < nb; ++s) stepper.step(xg.values(), y.coeffs(), w2);
    std::vector<double> yg(config.m_points), acc(config.m_points);
    std::vector<SpectralField> rec;
    rec.reserve(n_rec);
    SpectralField mean(config.n_modes);
    for (std::size_t r = 0; r < n_rec; ++r) {
      std::fill(acc.begin(), acc.end(), 0.0);
      detail::accumulate_drift(config, tr, xg.values(), y.coeffs(), yg, acc);
      SpectralField b(config.n_modes);
      tr.from_grid(acc, b.coeffs());
      mean += b;
      rec.push_back(std::move(b));
      for (std::size_t s = 0; s < stride; ++s) stepper.step(xg.values(), y.coeffs(), w2);
    }
    mean *= 1.0 / static_cast<double>(n_rec);
    for (auto& b : rec) b -= mean;
    for (std::size_t l = 0; l < n_lags; ++l) {
      double s = 0.0;
      for (std::size_t o = 0; o < n_origins; ++o) s += dot(rec[o], rec[o + l]);
      psi[l][i] = s / static_cast<double>(n_origins);
    }
  });

  ExperimentReport rep;
  rep.name = "correlation_decay";
  rep.parameter = "lag";
  rep.seed = prm.seed;
  std::vector<double> ts, ls, sig;
  bool significant = true;
  for (std::size_t l = 0; l < n_lags; ++l) {
    double m = 0, se = 0;
    detail::summarize(psi[l], m, se);
    const double lag = static_cast<double>(l) * prm.lag_step;
    rep.grid.push_back(lag);
    rep.estimates.push_back(m);
    rep.stderrs.push_back(se);
    significant = significant && m > 3.0 * se && m > 0.0;
    if (significant) {
      ts.push_back(lag);
      ls.push_back(std::log(m));
      sig.push_back(se / m);
    }
  }
  rep.target = gap * config.beta / 2.0;
  rep.threshold = rep.target;
  rep.details["fit_points"] = ts.size();
  rep.details["max_lag"] = max_lag;
  if (ts.size() >= 3) {
    const LineFit lf = line_fit(ts, ls, sig, prm.confidence);
    rep.fit = lf;  // slope = -rate
    const double rate = -lf.slope;
    rep.details["rate"] = rate;
    rep.details["rate_ci"] = {rate - lf.ci_half_width, rate + lf.ci_half_width};
    rep.verdict = rate + lf.ci_half_width >= rep.threshold ? Verdict::pass : Verdict::fail;
  } else {
    rep.verdict = Verdict::inconclusive;
    rep.notes.push_back("fewer than 3 significant lags");
  }
  rep.details["lag0_variance"] = rep.estimates.front();
  rep.wall_time_s = watch.seconds();
  return rep;
}

// ---------------------------------------------------------------------------

struct MomentParams {
  std::vector<double> eps_grid{0.1, 0.01, 0.001};
  double horizon = 1.0;
  double dt = 1e-3;
  double fast_substep_factor = 0.1;
  double sample_interval = 0.05;
  std::size_t n_mc = 400;
  double max_spread = 0.2;
  SpectralField x0;
  SpectralField y0;
  std::uint64_t seed = 23;
  unsigned threads = 0;
};

/// sup_t E|Y^eps_t|^2 and sup_t E|X^eps_t|^2 per eps; spread across eps is
/// (max - min) / max.
inline ExperimentReport moment_sweep(const ModelConfig& config, const MomentParams& prm) {
  detail::Stopwatch watch;
  config.validate();
  detail::require_mc(prm.n_mc);
  const StepScheme scheme{prm.dt, prm.fast_substep_factor};
  const SpectralField x0 = detail::or_zero(prm.x0, config.n_modes);
  const SpectralField y0 = detail::or_zero(prm.y0, config.n_modes);
  const std::size_t n_steps = step_count(prm.horizon, prm.dt);
  const std::size_t stride = step_count(prm.sample_interval, prm.dt);
  const std::size_t n_samples = n_steps / stride + 1;
  const std::size_t ne = prm.eps_grid.size();
  for (double e : prm.eps_grid) validate_eps(e);

  // [eps][sample][path]
  std::vector<std::vector<std::vector<double>>> ym(
      ne, std::vector<std::vector<double>>(n_samples, std::vector<double>(prm.n_mc)));
  auto xm = ym;
  parallel_for(prm.n_mc, prm.threads, [&](std::size_t i) {
    for (std::size_t e = 0; e < ne; ++e) {
      NoiseStream w1 = NoiseStream::derive(prm.seed, i, NoiseRole::slow);
      NoiseStream w2 = NoiseStream::derive(prm.seed, i, NoiseRole::fast);
      SlowFastIntegrator integ(config, scheme, prm.eps_grid[e]);
      SlowFastState s{x0, y0, 0.0, prm.eps_grid[e]};
      for (std::size_t k = 0; k <= n_steps; ++k) {
        if (k % stride == 0) {
          ym[e][k / stride][i] = s.y.squared_norm();
          xm[e][k / stride][i] = s.x.squared_norm();
        }
        if (k < n_steps) integ.step(s, w1, w2);
      }
    }
  });

  ExperimentReport rep;
  rep.name = "moment_sweep";
  rep.parameter = "eps";
  rep.seed = prm.seed;
  rep.grid = prm.eps_grid;
  rep.threshold = prm.max_spread;
  std::vector<double> x_sup;
  Json rows = Json::array();
  bool finite = true;
  for (std::size_t e = 0; e < ne; ++e) {
    double best = -1.0, best_se = 0.0, xbest = -1.0, avg = 0.0;
    for (std::size_t s = 0; s < n_samples; ++s) {
      double m = 0, se = 0;
      detail::summarize(ym[e][s], m, se);
      if (m > best) {
        best = m;
        best_se = se;
      }
      if (s >= n_samples / 2) avg += m;
      double mx = 0, sx = 0;
      detail::summarize(xm[e][s], mx, sx);
      xbest = std::max(xbest, mx);
    }
    avg /= static_cast<double>(n_samples - n_samples / 2);
    finite = finite && std::isfinite(best) && std::isfinite(xbest);
    rep.estimates.push_back(best);
    rep.stderrs.push_back(best_se);
    x_sup.push_back(xbest);
    rows.push_back({{"eps", prm.eps_grid[e]},
                    {"sup_E_Y2", best},
                    {"late_mean_E_Y2", avg},
                    {"sup_E_X2", xbest}});
  }
  auto spread = [](const std::vector<double>& v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi > 0.0 ? (*hi - *lo) / *hi : 0.0;
  };
  const double sy = spread(rep.estimates), sx = spread(x_sup);
  rep.details["table"] = rows;
  rep.details["spread_Y"] = sy;
  rep.details["spread_X"] = sx;
  rep.verdict = finite && sy < prm.max_spread ? Verdict::pass : Verdict::fail;
  if (!finite) rep.notes.push_back("moments are not finite");
  rep.wall_time_s = watch.seconds();
  return rep;
}

// ---------------------------------------------------------------------------

struct ErgodicityParams {
  SpectralField x;         // empty: zero
  double y0_scale = 2.0;   // alternative initial fast state ~ N(0, scale^2 / k^2) on 8 modes
  AveragingParams averaging;
  double horizon = 16.0;   // mixing diagnostic
  std::size_t mixing_replicas = 200;
  MixingOptions mixing;
  std::uint64_t seed = 29;

  static ErgodicityParams defaults(const ModelConfig& c) {
    ErgodicityParams p;
    p.averaging = AveragingParams::defaults(c);
    p.averaging.replicas = 8;
    return p;
  }
};

/// Bbar(x) from y0 = 0 and from a random y0 must agree within 3 combined
/// standard errors; the mixing rate from the random y0 must reach
/// (lambda_1 - L_F) beta / 2 within its CI.
inline ExperimentReport ergodicity_test(const ModelConfig& config, const ErgodicityParams& prm) {
  detail::Stopwatch watch;
  config.validate();
  require_ergodic(config);
  const SpectralField x = detail::or_zero(prm.x, config.n_modes);
  NoiseStream init = NoiseStream::derive(prm.seed, 0, NoiseRole::initial);
  SpectralField y_alt(config.n_modes);
  for (std::size_t k = 1; k <= std::min<std::size_t>(8, config.n_modes); ++k)
    y_alt[k - 1] = prm.y0_scale * init.gaussian() / static_cast<double>(k);

  const BbarEstimate a = estimate_bbar(x, prm.averaging, config, detail::splitmix64(prm.seed));
  const BbarEstimate b =
      estimate_bbar(x, prm.averaging, config, detail::splitmix64(prm.seed + 1), &y_alt);
  const double diff = distance(a.value, b.value);
  const double combined = std::hypot(a.std_error, b.std_error);
  const bool agree = diff <= 3.0 * combined;

  const MixingFit mix = mixing_diagnostic(x, y_alt, config, prm.horizon, prm.mixing_replicas,
                                          prm.seed, prm.mixing);
  const double bound = config.spectral_gap() * config.beta / 2.0;
  const bool rate_ok = !mix.wide_ci && mix.rate + mix.ci_half_width >= bound;

  ExperimentReport rep;
  rep.name = "ergodicity";
  rep.parameter = "y0_norm";
  rep.seed = prm.seed;
  rep.grid = {0.0, y_alt.norm()};
  rep.estimates = {a.value.norm(), b.value.norm()};
  rep.stderrs = {a.std_error, b.std_error};
  rep.target = bound;
  rep.threshold = bound;
  rep.details["bbar_difference"] = diff;
  rep.details["combined_stderr"] = combined;
  rep.details["agree"] = agree;
  rep.details["mixing_rate"] = mix.rate;
  rep.details["mixing_ci_half_width"] = mix.ci_half_width;
  rep.details["mixing_wide_ci"] = mix.wide_ci;
  Json fns = Json::array();
  for (const auto& f : mix.functionals)
    fns.push_back({{"name", f.name},
                   {"informative", f.informative},
                   {"rate", f.rate},
                   {"ci_half_width", f.ci_half_width},
                   {"points", f.points}});
  rep.details["functionals"] = fns;
  if (!mix.note.empty()) rep.notes.push_back(mix.note);
  rep.verdict = agree && rate_ok ? Verdict::pass : Verdict::fail;
  rep.wall_time_s = watch.seconds();
  return rep;
}

// ---------------------------------------------------------------------------

struct HolderParams {
  std::size_t n_pairs = 200;
  std::size_t active_modes = 4;
  double scale = 1.0;
  double min_log10_sep = -2.0;  // |x - x'| = scale * 10^U(min, 0)
  double max_change = 0.25;
  AveragingParams averaging;
  std::uint64_t seed = 31;

  static HolderParams defaults(const ModelConfig& c) {
    HolderParams p;
    p.averaging = AveragingParams::defaults(c, 0.1);
    return p;
  }
};

/// max |Bbar(x) - Bbar(x')| / |x - x'|^{alpha ^ beta gamma} over n and 2n
/// random low-mode pairs (the 2n set extends the n set). The estimator uses
/// common random numbers so it is a deterministic function of x.
inline ExperimentReport holder_test(const ModelConfig& config, const HolderParams& prm) {
  detail::Stopwatch watch;
  config.validate();
  if (prm.n_pairs < 1) throw ConfigError("n_pairs must be >= 1");
  OracleOptions opt;
  opt.cache = false;
  opt.common_random_numbers = true;
  BbarOracle oracle(config, prm.averaging, prm.seed, opt);
  const double m = config.averaged_holder_index();
  const std::size_t active = std::min(prm.active_modes, config.n_modes);
  NoiseStream s = NoiseStream::derive(prm.seed, 0, NoiseRole::sampling);
  std::vector<double> q;
  for (std::size_t i = 0; i < 2 * prm.n_pairs; ++i) {
    SpectralField x(config.n_modes), u(config.n_modes);
    for (std::size_t k = 1; k <= active; ++k) {
      x[k - 1] = prm.scale * s.gaussian() / static_cast<double>(k);
      u[k - 1] = s.gaussian();
    }
    u *= 1.0 / u.norm();
    const double sep = prm.scale * std::pow(10.0, prm.min_log10_sep * s.uniform());
    const SpectralField x2 = x + sep * u;
    q.push_back(distance(oracle(x), oracle(x2)) / std::pow(sep, m));
  }
  const double q1 = *std::max_element(q.begin(), q.begin() + static_cast<std::ptrdiff_t>(prm.n_pairs));
  const double q2 = *std::max_element(q.begin(), q.end());
  const double change = q1 > 0.0 ? (q2 - q1) / q1 : 0.0;

  ExperimentReport rep;
  rep.name = "holder_bbar";
  rep.parameter = "n_pairs";
  rep.seed = prm.seed;
  rep.grid = {static_cast<double>(prm.n_pairs), static_cast<double>(2 * prm.n_pairs)};
  rep.estimates = {q1, q2};
  rep.stderrs = {0.0, 0.0};
  rep.target = m;
  rep.threshold = prm.max_change;
  rep.details["exponent"] = m;
  rep.details["relative_change"] = change;
  rep.verdict = std::isfinite(q2) && change < prm.max_change ? Verdict::pass : Verdict::fail;
  rep.wall_time_s = watch.seconds();
  return rep;
}

}  // namespace slowfast
