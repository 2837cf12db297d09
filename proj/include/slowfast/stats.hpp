#pragma once

#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "slowfast/errors.hpp"

namespace slowfast {

/// Welford accumulator for mean and standard error.
class RunningStats {
 public:
  void add(double v) {
    ++n_;
    const double d = v - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (v - mean_);
  }
  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double stddev() const { return std::sqrt(variance()); }
  double std_error() const { return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0; }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
  double ci_half_width = 0.0;  // at the requested confidence
  std::size_t n_used = 0;
  double lower() const { return slope - ci_half_width; }
  double upper() const { return slope + ci_half_width; }
};

inline double t_quantile(std::size_t dof, double confidence) {
  if (dof == 0) return std::numeric_limits<double>::infinity();
  boost::math::students_t dist(static_cast<double>(dof));
  return boost::math::quantile(boost::math::complement(dist, 0.5 * (1.0 - confidence)));
}

/// Least squares y = a + b x. With sigmas (all > 0) the fit is weighted by
/// 1/sigma^2 and the slope error is inflated by sqrt(reduced chi^2) when the
/// scatter exceeds the stated errors; otherwise residual scatter is used.
inline LineFit line_fit(std::span<const double> xs, std::span<const double> ys,
                        std::span<const double> sigmas = {}, double confidence = 0.95) {
  const std::size_t n = xs.size();
  if (n != ys.size()) throw DimensionError("line_fit: x/y sizes differ");
  if (n < 3) throw ConfigError("line_fit needs at least 3 points");
  bool weighted = sigmas.size() == n;
  if (weighted)
    for (double s : sigmas)
      if (!(s > 0.0)) weighted = false;
  std::vector<double> w(n, 1.0);
  if (weighted)
    for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 / (sigmas[i] * sigmas[i]);
  double sw = 0, sx = 0, sy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sw += w[i];
    sx += w[i] * xs[i];
    sy += w[i] * ys[i];
  }
  const double xm = sx / sw, ym = sy / sw;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += w[i] * (xs[i] - xm) * (xs[i] - xm);
    sxy += w[i] * (xs[i] - xm) * (ys[i] - ym);
  }
  if (!(sxx > 0.0)) throw ConfigError("line_fit: abscissae are all equal");
  LineFit f;
  f.n_used = n;
  f.slope = sxy / sxx;
  f.intercept = ym - f.slope * xm;
  double chi2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = ys[i] - f.intercept - f.slope * xs[i];
    chi2 += w[i] * r * r;
  }
  const double dof = static_cast<double>(n - 2);
  if (weighted) {
    f.slope_stderr = std::sqrt(1.0 / sxx) * std::max(1.0, std::sqrt(chi2 / dof));
  } else {
    f.slope_stderr = std::sqrt(chi2 / dof / sxx);
  }
  f.ci_half_width = t_quantile(n - 2, confidence) * f.slope_stderr;
  return f;
}

}  // namespace slowfast
