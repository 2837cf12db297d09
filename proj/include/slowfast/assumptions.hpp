#pragma once

// Numerical witnesses for the standing assumptions on a diagonal model:
// boundedness/Hoelder regularity of the drifts (A1), the spectrum (A2, A3),
// the stochastic-convolution integrals (A4), the Lambda_i(t) integrals (A5)
// and the spectral gap (A6).

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "slowfast/model.hpp"

namespace slowfast {

enum class CheckStatus { holds, fails, not_checkable };

inline const char* to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::holds: return "holds";
    case CheckStatus::fails: return "fails";
    case CheckStatus::not_checkable: return "not-checkable-numerically";
  }
  return "?";
}

/// sum_{k >= 1} term(k) whose tail behaves like coef * k^{-exponent}.
struct SeriesWitness {
  double exponent = 0.0;
  bool converges = false;
  std::size_t truncation = 0;
  double partial_sum = 0.0;      // sum_{k <= K} term(k)
  double tail_bound = 0.0;       // int_K^inf coef x^{-s} dx (upper bound of the tail)
  double value = 0.0;            // partial sum + Euler-Maclaurin tail
  double partial_sum_doubled = 0.0;  // sum_{k <= 2K}, divergence evidence
  double upper_bound() const { return partial_sum + tail_bound; }
};

/// Terms up to the truncation use `term`; the tail uses the power law, which
/// must dominate the terms for large k.
inline SeriesWitness series_witness(const std::function<double(std::size_t)>& term, double coef,
                                    double exponent, std::size_t truncation) {
  SeriesWitness w;
  w.exponent = exponent;
  w.truncation = truncation;
  // Convergence decided on the exponent with a little slack for rounding.
  w.converges = exponent > 1.0 + 1e-12;
  double s = 0.0;
  for (std::size_t k = 1; k <= truncation; ++k) s += term(k);
  w.partial_sum = s;
  if (w.converges) {
    const double kk = static_cast<double>(truncation);
    const double f = coef * std::pow(kk, -exponent);
    const double integral = f * kk / (exponent - 1.0);
    w.tail_bound = integral;
    const double d1 = -exponent * f / kk;
    const double d3 = -exponent * (exponent + 1.0) * (exponent + 2.0) * f / (kk * kk * kk);
    w.value = s + integral - 0.5 * f - d1 / 12.0 + d3 / 720.0;
    w.partial_sum_doubled = w.value;
  } else {
    double s2 = s;
    for (std::size_t k = truncation + 1; k <= 2 * truncation; ++k) s2 += term(k);
    w.partial_sum_doubled = s2;
    w.tail_bound = std::numeric_limits<double>::infinity();
    w.value = std::numeric_limits<double>::infinity();
  }
  return w;
}

/// Near-zero behaviour and value of int_0^inf e^{-lam t} N(t)^m dt with
/// N(t) = sup_k lambda_k^{extra} Lambda_k(t), Lambda_k(t) = e^{-lambda_k t} / sqrt(Q(t)_kk).
struct LambdaIntegralWitness {
  double near_zero_exponent = 0.0;  // N(t) ~ t^{-p} as t -> 0
  double power = 1.0;               // m
  bool converges = false;
  double split_time = 0.0;
  double head_bound = 0.0;  // bound on int_0^{t0}
  double body = 0.0;        // quadrature on [t0, t1]
  double tail_bound = 0.0;  // bound on int_{t1}^inf
  double value() const { return head_bound + body + tail_bound; }
};

namespace detail {

/// lambda^{extra} e^{-lambda t} / sqrt(q(lambda) (1 - e^{-2 lambda t}) / (2 lambda)).
inline double lambda_mode_norm(double lambda, double q, double t, double extra) {
  const double var = q * (-std::expm1(-2.0 * lambda * t)) / (2.0 * lambda);
  return std::pow(lambda, extra) * std::exp(-lambda * t) / std::sqrt(var);
}

}  // namespace detail

/// sup over the whole (infinite) spectrum of lambda_k^{extra} Lambda_k(t).
/// Per mode the value is t^{-p0} g(lambda_k t) with g unimodal, so the scan
/// stops once lambda_k t is past the mode of g.
/// With `peak` (the maximiser of g) only k = 1 and the two modes around
/// lambda_k t = peak are evaluated.
inline double lambda_operator_norm(const OperatorSpectrum& eigs, const NoiseSpectrum& q, double t,
                                   double extra, double peak = 0.0) {
  if (!(t > 0.0)) throw DomainError("Lambda(t) is defined for t > 0 only");
  const double p0 = extra + 0.5 * (1.0 + q.decay);
  if (peak > 0.0 && eigs.unbounded()) {
    const double kstar = std::pow(peak / (t * eigs.scale()), 1.0 / eigs.growth());
    const auto lo = static_cast<std::size_t>(std::max(1.0, std::floor(kstar)));
    double best = detail::lambda_mode_norm(eigs(1), q(eigs(1)), t, extra);
    for (std::size_t k : {lo, lo + 1})
      best = std::max(best, detail::lambda_mode_norm(eigs(k), q(eigs(k)), t, extra));
    return best;
  }
  const double s_stop = std::max(p0, 1.0) + 1.0;
  double best = 0.0;
  for (std::size_t k = 1;; ++k) {
    const double lam = eigs(k);
    best = std::max(best, detail::lambda_mode_norm(lam, q(lam), t, extra));
    if (lam * t > s_stop || !eigs.unbounded()) break;
  }
  return best;
}

inline LambdaIntegralWitness lambda_integral(const OperatorSpectrum& eigs, const NoiseSpectrum& q,
                                             double extra, double power, double lam) {
  LambdaIntegralWitness w;
  w.power = power;
  const double p0 = extra + 0.5 * (1.0 + q.decay);
  const double a = q.amplitude;
  // Near t = 0: N(t) <= C t^{-p}.
  double c_head = 0.0;
  double peak = 0.0;
  if (eigs.unbounded() && p0 >= 0.5) {
    w.near_zero_exponent = p0;
    // sup_s s^{p0} e^{-s} / sqrt((1 - e^{-2s})/2)
    auto neg_g = [p0](double s) {
      return -std::pow(s, p0) * std::exp(-s) / std::sqrt(-std::expm1(-2.0 * s) / 2.0);
    };
    const auto r = boost::math::tools::brent_find_minima(neg_g, 1e-8, 50.0, 40);
    c_head = -r.second / std::sqrt(a) * 1.0000001;
    peak = r.first;
  } else {
    // e^{-x}/sqrt(1-e^{-2x}) <= 1/sqrt(2x); the largest factor is at k = 1
    // (p0 <= 1/2) or all modes coincide (bounded spectrum).
    w.near_zero_exponent = 0.5;
    const double l1 = eigs.first();
    c_head = std::pow(l1, extra) * std::sqrt(2.0 * l1 / q(l1)) / std::sqrt(2.0 * l1);
  }
  const double pm = w.near_zero_exponent * power;
  w.converges = pm < 1.0 - 1e-12;
  if (!w.converges) {
    w.head_bound = std::numeric_limits<double>::infinity();
    return w;
  }
  const double t0 = 1e-6;
  w.split_time = t0;
  w.head_bound = std::pow(c_head, power) * std::pow(t0, 1.0 - pm) / (1.0 - pm);

  auto integrand = [&](double t) {
    return std::exp(-lam * t) * std::pow(lambda_operator_norm(eigs, q, t, extra, peak), power);
  };
  // Beyond t1 every mode is in the decreasing part of g and e^{-lam t} is tiny.
  const double s_stop = std::max(p0, 1.0) + 1.0;
  const double t1 = std::max(s_stop / eigs.first(), 60.0 / lam);
  const int panels = 80;
  double body = 0.0;
  for (int i = 0; i < panels; ++i) {
    const double lo = t0 * std::pow(t1 / t0, static_cast<double>(i) / panels);
    const double hi = t0 * std::pow(t1 / t0, static_cast<double>(i + 1) / panels);
    body += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, lo, hi, 8,
                                                                          1e-12);
  }
  w.body = body;
  w.tail_bound = std::pow(lambda_operator_norm(eigs, q, t1, extra, peak), power) *
                 std::exp(-lam * t1) / lam;
  return w;
}

struct AssumptionCheck {
  std::string id;
  CheckStatus status = CheckStatus::not_checkable;
  std::string detail;
  double witness = 0.0;  // the finite value backing "holds"
};

struct AssumptionReport {
  double theta = 0.0;
  double zeta = 0.0;                    // A3 witness
  double theta_max = 0.0;               // A4 admissible interval (0, theta_max)
  double kappa1 = 0.0;                  // A5 witness
  double kappa2 = 0.0;                  // A5 witness
  double gap = 0.0;                     // lambda_1 - L_F
  SeriesWitness a3;
  SeriesWitness a41, a42, a43;
  SeriesWitness trace_q1, trace_q2;
  LambdaIntegralWitness a50_1, a50_2, a51;
  double holder_quotient_b = 0.0;
  double holder_quotient_f = 0.0;
  double lipschitz_quotient_f = 0.0;
  std::vector<AssumptionCheck> checks;

  const AssumptionCheck* find(const std::string& id) const {
    for (const auto& c : checks)
      if (c.id == id) return &c;
    return nullptr;
  }
  CheckStatus status(const std::string& id) const {
    const auto* c = find(id);
    return c ? c->status : CheckStatus::not_checkable;
  }
  bool all_hold() const {
    return std::all_of(checks.begin(), checks.end(),
                       [](const AssumptionCheck& c) { return c.status == CheckStatus::holds; });
  }
};

struct FieldPair {
  SpectralField x1, y1, x2, y2;
};
using PairSampler = std::function<FieldPair(NoiseStream&)>;

/// Random fields with coefficients N(0, scale^2 / k^2) on the first `active` modes.
inline PairSampler low_mode_pair_sampler(std::size_t n_modes, std::size_t active, double scale) {
  return [=](NoiseStream& s) {
    auto draw = [&] {
      SpectralField u(n_modes);
      for (std::size_t k = 1; k <= std::min(active, n_modes); ++k)
        u[k - 1] = scale * s.gaussian() / static_cast<double>(k);
      return u;
    };
    FieldPair p;
    p.x1 = draw();
    p.y1 = draw();
    p.x2 = draw();
    p.y2 = draw();
    return p;
  };
}

/// max over sampled pairs of |f(x1,y1) - f(x2,y2)| / (|x1-x2|^alpha + |y1-y2|^beta).
inline double empirical_holder(const FieldDrift& f, double alpha, double beta,
                               std::size_t n_pairs, const PairSampler& sampler,
                               NoiseStream& stream) {
  double worst = 0.0;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const FieldPair p = sampler(stream);
    const double num = distance(f(p.x1, p.y1), f(p.x2, p.y2));
    const double den =
        std::pow(distance(p.x1, p.x2), alpha) + std::pow(distance(p.y1, p.y2), beta);
    if (den > 0.0) worst = std::max(worst, num / den);
  }
  return worst;
}

struct AssumptionOptions {
  double horizon = 1.0;             // T in the A4 integrals
  std::size_t truncation = 4096;    // exact terms before the analytic tail
  double resolvent_lambda = 1.0;    // lambda in the A5 integrals
  std::size_t holder_pairs = 200;
  std::uint64_t seed = 7;
};

/// Evaluates A1-A6 for a model with power-law spectrum and noise.
inline AssumptionReport check_assumptions(const ModelConfig& config, double theta,
                                          const AssumptionOptions& opt = {}) {
  if (!(theta > 0.0 && theta < 1.0)) throw ConfigError("theta must lie in (0, 1)");
  config.validate();
  AssumptionReport rep;
  rep.theta = theta;
  const auto& eigs = config.eigs;
  const double c = eigs.scale();
  const double a = eigs.growth();
  const double r1 = config.q1.decay;
  const double r2 = config.q2.decay;
  const double a1 = config.q1.amplitude;
  const double a2 = config.q2.amplitude;
  const std::size_t kt = opt.truncation;
  auto fmt = [](auto&&... parts) {
    std::ostringstream os;
    os.precision(10);
    (os << ... << parts);
    return os.str();
  };

  // A1: declared constants, spot-checked on random low-mode pairs.
  {
    AssumptionCheck chk{"A1", CheckStatus::holds, "", 0.0};
    NoiseStream stream = NoiseStream::derive(opt.seed, 0, NoiseRole::sampling);
    auto sampler = low_mode_pair_sampler(config.n_modes, 8, 1.0);
    PseudospectralDrift b(config.drift_b, config.n_modes, config.m_points);
    PseudospectralDrift f(config.drift_f, config.n_modes, config.m_points);
    SineTransform tr(config.n_modes, config.m_points);
    double sup_b = 0.0, sup_f = 0.0, qb = 0.0, qf = 0.0, lf = 0.0;
    for (std::size_t i = 0; i < opt.holder_pairs; ++i) {
      const FieldPair p = sampler(stream);
      const GridField xg = tr.to_grid(p.x1), yg = tr.to_grid(p.y1);
      for (std::size_t j = 0; j < xg.m_points(); ++j) {
        sup_b = std::max(sup_b, std::fabs(config.drift_b(xg[j], yg[j])));
        sup_f = std::max(sup_f, std::fabs(config.drift_f(xg[j], yg[j])));
      }
      const double dx = distance(p.x1, p.x2), dy = distance(p.y1, p.y2);
      const double db = distance(b(p.x1, p.y1), b(p.x2, p.y2));
      const double df = distance(f(p.x1, p.y1), f(p.x2, p.y2));
      qb = std::max(qb, db / (std::pow(dx, config.alpha) + std::pow(dy, config.beta)));
      qf = std::max(qf, df / (std::pow(dx, config.gamma) + dy));
      // Lipschitz in y at fixed x: exact bound after projection.
      if (dy > 0.0) lf = std::max(lf, distance(f(p.x1, p.y1), f(p.x1, p.y2)) / dy);
    }
    rep.holder_quotient_b = qb;
    rep.holder_quotient_f = qf;
    rep.lipschitz_quotient_f = lf;
    chk.witness = std::max(qb, qf);
    const bool bounded = sup_b <= config.bound_b * (1 + 1e-12) && sup_f <= config.bound_f * (1 + 1e-12);
    const bool lipschitz = lf <= config.l_f * (1 + 1e-9) + 1e-12;
    const bool finite = std::isfinite(qb) && std::isfinite(qf);
    if (!(bounded && lipschitz && finite)) chk.status = CheckStatus::fails;
    chk.detail = fmt("declared alpha=", config.alpha, " beta=", config.beta,
                     " gamma=", config.gamma, " L_F=", config.l_f, "; sampled sup|B|=", sup_b,
                     " sup|F|=", sup_f, ", Hoelder quotients B=", qb, " F=", qf,
                     ", Lipschitz-in-y quotient F=", lf);
    rep.checks.push_back(chk);
  }

  // A2: lambda_k > 0 nondecreasing, unbounded.
  {
    AssumptionCheck chk{"A2", eigs.unbounded() ? CheckStatus::holds : CheckStatus::fails, "",
                        eigs.first()};
    chk.detail = fmt("lambda_k = ", c, " k^", a, (eigs.unbounded() ? " (increasing to infinity)"
                                                                    : " (bounded spectrum)"));
    rep.checks.push_back(chk);
  }

  // A3: sum lambda_k^{zeta-1} < inf needs a (1 - zeta) > 1.
  {
    const double zeta_max = a > 1.0 ? 1.0 - 1.0 / a : 0.0;
    rep.zeta = a > 1.0 ? 0.5 * zeta_max : 0.5;
    const double z = rep.zeta;
    rep.a3 = series_witness([&](std::size_t k) { return std::pow(eigs(k), z - 1.0); },
                            std::pow(c, z - 1.0), a * (1.0 - z), kt);
    AssumptionCheck chk{"A3", rep.a3.converges ? CheckStatus::holds : CheckStatus::fails, "",
                        rep.a3.value};
    chk.detail = rep.a3.converges
                     ? fmt("zeta=", z, " in (0, ", zeta_max, "): sum lambda_k^{zeta-1} = ",
                           rep.a3.value, " (partial ", rep.a3.partial_sum, " + tail <= ",
                           rep.a3.tail_bound, ")")
                     : fmt("divergent for every zeta in (0,1): term exponent ", a * (1.0 - z),
                           " <= 1; partial sums ", rep.a3.partial_sum, " (K=", kt, "), ",
                           rep.a3.partial_sum_doubled, " (K=", 2 * kt, ")");
    rep.checks.push_back(chk);
  }

  // A4: stochastic-convolution integrals, closed form per mode.
  {
    const double big_t = opt.horizon;
    rep.theta_max = a > 0.0 ? std::min(1.0, r1 + 1.0 - 1.0 / a) : 0.0;
    const double s_a4 = a * (r1 + 1.0 - theta);
    const double g1 = std::tgamma(1.0 - theta);
    rep.a41 = series_witness(
        [&](std::size_t k) {
          const double lam = eigs(k);
          const double x = 2.0 * lam * big_t;
          return config.q1(lam) * std::pow(2.0 * lam, theta - 1.0) *
                 boost::math::tgamma_lower(1.0 - theta, x);
        },
        a1 * std::pow(c, -r1) * std::pow(2.0 * c, theta - 1.0) * g1, s_a4, kt);
    rep.a42 = series_witness(
        [&](std::size_t k) {
          const double lam = eigs(k);
          return config.q1(lam) * std::pow(lam, theta) * (-std::expm1(-2.0 * lam * big_t)) /
                 (2.0 * lam);
        },
        0.5 * a1 * std::pow(c, theta - 1.0 - r1), s_a4, kt);
    rep.a43 = series_witness(
        [&](std::size_t k) {
          const double lam = eigs(k);
          return config.q2(lam) / (2.0 * lam);
        },
        0.5 * a2 * std::pow(c, -1.0 - r2), a * (1.0 + r2), kt);
    const bool zero_q2 = a2 == 0.0;
    auto add = [&](const char* id, const SeriesWitness& w, const char* what) {
      AssumptionCheck chk{id, w.converges ? CheckStatus::holds : CheckStatus::fails, "", w.value};
      chk.detail = w.converges
                       ? fmt(what, " = ", w.value, " (partial ", w.partial_sum, " + tail <= ",
                             w.tail_bound, ", term exponent ", w.exponent, ")")
                       : fmt(what, " diverges: term exponent ", w.exponent,
                             " <= 1; partial sums ", w.partial_sum, " -> ",
                             w.partial_sum_doubled);
      rep.checks.push_back(chk);
    };
    add("A41", rep.a41, "int_0^T r^{-theta} |e^{rA} sqrt(Q1)|_HS^2 dr");
    add("A42", rep.a42, "int_0^T |(-A)^{theta/2} e^{rA} sqrt(Q1)|_HS^2 dr");
    if (zero_q2) {
      rep.checks.push_back({"A43", CheckStatus::holds, "Q2 = 0", 0.0});
    } else {
      add("A43", rep.a43, "int_0^inf |e^{rA} sqrt(Q2)|_HS^2 dr");
    }
  }

  // A5: Q_i(t) trace class, then the Lambda_i(t) integrals.
  {
    rep.trace_q1 = series_witness(
        [&](std::size_t k) { return config.q1(eigs(k)) / (2.0 * eigs(k)); },
        0.5 * a1 * std::pow(c, -1.0 - r1), a * (1.0 + r1), kt);
    rep.trace_q2 = series_witness(
        [&](std::size_t k) { return config.q2(eigs(k)) / (2.0 * eigs(k)); },
        0.5 * a2 * std::pow(c, -1.0 - r2), a * (1.0 + r2), kt);
    const double m = std::min({config.alpha, config.beta, config.gamma});
    rep.kappa1 = std::max(m, 1.0 - config.averaged_holder_index());
    rep.kappa2 = 0.5 * std::min(0.5, 0.5 * (1.0 - r1));
    AssumptionCheck chk{"A5", CheckStatus::holds, "", 0.0};
    if (a1 == 0.0 || a2 == 0.0) {
      chk.status = CheckStatus::fails;
      chk.detail = "degenerate noise: Q_i(t) not invertible, Lambda_i(t) undefined";
      rep.checks.push_back(chk);
    } else {
      const double lam = opt.resolvent_lambda;
      rep.a50_1 = lambda_integral(eigs, config.q1, 0.0, 1.0 + rep.kappa1, lam);
      rep.a50_2 = lambda_integral(eigs, config.q2, 0.0, 1.0 + rep.kappa1, lam);
      rep.a51 = lambda_integral(eigs, config.q1, rep.kappa2, 1.0, lam);
      const bool ok = rep.trace_q1.converges && rep.trace_q2.converges && rep.a50_1.converges &&
                      rep.a50_2.converges && rep.a51.converges;
      chk.status = ok ? CheckStatus::holds : CheckStatus::fails;
      chk.witness = std::max({rep.a50_1.value(), rep.a50_2.value(), rep.a51.value()});
      chk.detail = fmt("kappa1=", rep.kappa1, ": int e^{-t}|Lambda_1|^{1+kappa1} = ",
                       rep.a50_1.value(), " (t^-", rep.a50_1.near_zero_exponent * (1 + rep.kappa1),
                       "), int e^{-t}|Lambda_2|^{1+kappa1} = ", rep.a50_2.value(), " (t^-",
                       rep.a50_2.near_zero_exponent * (1 + rep.kappa1), "); kappa2=", rep.kappa2,
                       ": int e^{-t}|(-A)^kappa2 Lambda_1| = ", rep.a51.value(), " (t^-",
                       rep.a51.near_zero_exponent, "); tr Q1(inf) = ", rep.trace_q1.value,
                       ", tr Q2(inf) = ", rep.trace_q2.value);
      rep.checks.push_back(chk);
    }
  }

  // A6
  {
    rep.gap = config.spectral_gap();
    AssumptionCheck chk{"A6", rep.gap > 0.0 ? CheckStatus::holds : CheckStatus::fails, "", rep.gap};
    chk.detail = fmt("lambda_1 - L_F = ", eigs.first(), " - ", config.l_f, " = ", rep.gap);
    rep.checks.push_back(chk);
  }
  return rep;
}

}  // namespace slowfast
