#pragma once

// The elliptic equation lambda U - Lbar U = G at truncated dimension d <= 3,
// where Lbar is the OU generator (A, Q1) plus the averaged drift Bbar . D.
// U solves the fixed point
//   U = int_0^inf e^{-lambda t} T_t(<Bbar, DU> + G) dt,
// iterated from U_0 = 0. T_t and D T_t act on grid functions through tensor
// Gauss-Hermite quadrature against the exact OU transition; the gradient
// uses Gaussian integration by parts (Bismut weights).

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "slowfast/averaging.hpp"
#include "slowfast/errors.hpp"
#include "slowfast/model.hpp"

namespace slowfast {

inline constexpr std::size_t kMaxZvonkinDim = 3;
inline constexpr std::size_t kMaxZvonkinNodes = 2500;  // dense operators are nodes^2

using Point = std::vector<double>;

/// Grid function on the box prod_a [-R_a, R_a] with n nodes per axis and
/// n_out components per node. Multilinear interpolation; queries outside the
/// box are clamped to the boundary.
class TruncatedFunction {
 public:
  TruncatedFunction() = default;
  TruncatedFunction(std::vector<double> radius, std::size_t nodes_per_axis, std::size_t n_out)
      : radius_(std::move(radius)), n_(nodes_per_axis), n_out_(n_out) {
    const std::size_t d = radius_.size();
    if (d == 0 || d > kMaxZvonkinDim) throw DimensionError("truncated dimension must be 1, 2 or 3");
    if (n_ < 2) throw ConfigError("need at least 2 grid nodes per axis");
    if (n_out_ == 0) throw DimensionError("n_out must be >= 1");
    for (double r : radius_)
      if (!(r > 0.0)) throw ConfigError("box radius must be > 0");
    total_ = 1;
    for (std::size_t a = 0; a < d; ++a) total_ *= n_;
    values_.assign(total_ * n_out_, 0.0);
  }

  template <class Fn>
  static TruncatedFunction sample(std::vector<double> radius, std::size_t nodes_per_axis,
                                  std::size_t n_out, Fn&& fn) {
    TruncatedFunction f(std::move(radius), nodes_per_axis, n_out);
    Point p(f.dim());
    for (std::size_t i = 0; i < f.size(); ++i) {
      f.node(i, p);
      const std::vector<double> v = fn(p);
      if (v.size() != n_out) throw DimensionError("sampled function returned wrong arity");
      for (std::size_t c = 0; c < n_out; ++c) f.at(i, c) = v[c];
    }
    return f;
  }

  /// Same grid, new component count, zero values.
  TruncatedFunction like(std::size_t n_out) const {
    return TruncatedFunction(radius_, n_, n_out);
  }

  std::size_t dim() const { return radius_.size(); }
  std::size_t size() const { return total_; }
  std::size_t nodes_per_axis() const { return n_; }
  std::size_t n_out() const { return n_out_; }
  const std::vector<double>& radius() const { return radius_; }

  double coordinate(std::size_t a, std::size_t i) const {
    return -radius_[a] + 2.0 * radius_[a] * static_cast<double>(i) / static_cast<double>(n_ - 1);
  }
  void node(std::size_t index, Point& p) const {
    p.resize(dim());
    for (std::size_t a = 0; a < dim(); ++a) {
      p[a] = coordinate(a, index % n_);
      index /= n_;
    }
  }
  Point node(std::size_t index) const {
    Point p;
    node(index, p);
    return p;
  }

  double& at(std::size_t i, std::size_t c) { return values_[i * n_out_ + c]; }
  double at(std::size_t i, std::size_t c) const { return values_[i * n_out_ + c]; }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  /// Calls fn(node index, weight) for the 2^d interpolation corners of p.
  template <class Fn>
  void for_each_corner(const double* p, Fn&& fn) const {
    const std::size_t d = dim();
    std::array<std::size_t, kMaxZvonkinDim> lo{};
    std::array<double, kMaxZvonkinDim> fr{};
    const double last = static_cast<double>(n_ - 1);
    for (std::size_t a = 0; a < d; ++a) {
      double u = (p[a] + radius_[a]) / (2.0 * radius_[a]) * last;
      u = std::clamp(u, 0.0, last);
      const auto i0 = std::min(static_cast<std::size_t>(u), n_ - 2);
      lo[a] = i0;
      fr[a] = u - static_cast<double>(i0);
    }
    for (std::size_t mask = 0; mask < (std::size_t{1} << d); ++mask) {
      std::size_t idx = 0, stride = 1;
      double w = 1.0;
      for (std::size_t a = 0; a < d; ++a) {
        const bool up = (mask >> a) & 1U;
        idx += (lo[a] + (up ? 1 : 0)) * stride;
        w *= up ? fr[a] : 1.0 - fr[a];
        stride *= n_;
      }
      if (w != 0.0) fn(idx, w);
    }
  }

  std::vector<double> evaluate(const Point& p) const {
    if (p.size() != dim()) throw DimensionError("evaluation point has wrong dimension");
    std::vector<double> out(n_out_, 0.0);
    for_each_corner(p.data(), [&](std::size_t idx, double w) {
      for (std::size_t c = 0; c < n_out_; ++c) out[c] += w * at(idx, c);
    });
    return out;
  }
  double evaluate(const Point& p, std::size_t c) const { return evaluate(p)[c]; }

  double sup_norm() const {
    double s = 0.0;
    for (double v : values_) s = std::max(s, std::fabs(v));
    return s;
  }
  /// max over nodes of the Euclidean norm across components.
  double sup_vector_norm() const {
    double s = 0.0;
    for (std::size_t i = 0; i < total_; ++i) {
      double n2 = 0.0;
      for (std::size_t c = 0; c < n_out_; ++c) n2 += at(i, c) * at(i, c);
      s = std::max(s, std::sqrt(n2));
    }
    return s;
  }

  bool same_grid(const TruncatedFunction& o) const { return n_ == o.n_ && radius_ == o.radius_; }

 private:
  std::vector<double> radius_;
  std::size_t n_ = 0;
  std::size_t n_out_ = 0;
  std::size_t total_ = 0;
  std::vector<double> values_;
};

/// Diagonal OU transition of dZ = AZ dt + sqrt(Q1) dW on the first d modes.
struct OuKernel {
  std::vector<double> lambda;
  std::vector<double> q;

  static OuKernel from_config(const ModelConfig& config, std::size_t dim) {
    if (dim == 0 || dim > kMaxZvonkinDim) throw DimensionError("truncated dimension must be 1, 2 or 3");
    OuKernel k;
    for (std::size_t i = 1; i <= dim; ++i) {
      k.lambda.push_back(config.eigs(i));
      k.q.push_back(config.q1(config.eigs(i)));
    }
    return k;
  }

  std::size_t dim() const { return lambda.size(); }
  double mean_decay(std::size_t a, double t) const { return std::exp(-lambda[a] * t); }
  double variance(std::size_t a, double t) const {
    return q[a] * -std::expm1(-2.0 * lambda[a] * t) / (2.0 * lambda[a]);
  }
  double stationary_std(std::size_t a) const { return std::sqrt(q[a] / (2.0 * lambda[a])); }
  std::vector<double> default_radius(double widths = 4.0) const {
    std::vector<double> r;
    for (std::size_t a = 0; a < dim(); ++a) r.push_back(widths * stationary_std(a));
    return r;
  }
  void validate() const {
    if (lambda.empty() || lambda.size() != q.size()) throw DimensionError("malformed OU kernel");
    for (std::size_t a = 0; a < dim(); ++a)
      if (!(lambda[a] > 0.0) || !(q[a] > 0.0))
        throw DomainError("OU kernel needs lambda_k > 0 and q_k > 0");
  }
};

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

namespace detail {

/// Golub-Welsch: nodes and weights from the symmetric Jacobi matrix with
/// zero diagonal and the given off-diagonal; weights scaled to total mass mu0.
inline QuadratureRule golub_welsch(const std::vector<double>& offdiag, double mu0) {
  const auto n = static_cast<Eigen::Index>(offdiag.size() + 1);
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i + 1 < n; ++i) j(i, i + 1) = j(i + 1, i) = offdiag[static_cast<std::size_t>(i)];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
  QuadratureRule r;
  for (Eigen::Index i = 0; i < n; ++i) {
    r.nodes.push_back(es.eigenvalues()(i));
    const double v0 = es.eigenvectors()(0, i);
    r.weights.push_back(mu0 * v0 * v0);
  }
  return r;
}

}  // namespace detail

/// Gauss-Hermite rule for the standard normal: sum w_i f(z_i) ~ E f(Z).
inline QuadratureRule gauss_hermite(std::size_t order) {
  if (order < 3) throw ConfigError("Gauss-Hermite order must be >= 3");
  std::vector<double> off;
  for (std::size_t k = 1; k < order; ++k) off.push_back(std::sqrt(static_cast<double>(k)));
  QuadratureRule r = detail::golub_welsch(off, 1.0);
  // Symmetrize: the exact rule is odd-symmetric.
  const std::size_t n = order;
  for (std::size_t i = 0; i < n / 2; ++i) {
    const double z = 0.5 * (r.nodes[n - 1 - i] - r.nodes[i]);
    const double w = 0.5 * (r.weights[i] + r.weights[n - 1 - i]);
    r.nodes[i] = -z;
    r.nodes[n - 1 - i] = z;
    r.weights[i] = r.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) r.nodes[n / 2] = 0.0;
  return r;
}

/// Gauss-Legendre rule on [a, b].
inline QuadratureRule gauss_legendre(std::size_t order, double a, double b) {
  if (order < 1) throw ConfigError("Gauss-Legendre order must be >= 1");
  std::vector<double> off;
  for (std::size_t k = 1; k < order; ++k) {
    const double kk = static_cast<double>(k);
    off.push_back(kk / std::sqrt(4.0 * kk * kk - 1.0));
  }
  QuadratureRule r = order == 1 ? QuadratureRule{{0.0}, {2.0}} : detail::golub_welsch(off, 2.0);
  const double h = 0.5 * (b - a), c = 0.5 * (a + b);
  for (std::size_t i = 0; i < r.nodes.size(); ++i) {
    r.nodes[i] = c + h * r.nodes[i];
    r.weights[i] *= h;
  }
  return r;
}

/// Time nodes for int_0^{t_max}: geometric panels [t_max 2^{-j-1}, t_max 2^{-j}],
/// j < panels, plus [0, t_max 2^{-panels}], each with a Gauss-Legendre rule.
inline QuadratureRule log_time_quadrature(double t_max, std::size_t panels = 24,
                                          std::size_t order = 10) {
  if (!(t_max > 0.0)) throw ConfigError("t_max must be > 0");
  QuadratureRule out;
  auto append = [&](double a, double b) {
    const QuadratureRule r = gauss_legendre(order, a, b);
    out.nodes.insert(out.nodes.end(), r.nodes.begin(), r.nodes.end());
    out.weights.insert(out.weights.end(), r.weights.begin(), r.weights.end());
  };
  double hi = t_max;
  for (std::size_t j = 0; j < panels; ++j) {
    append(0.5 * hi, hi);
    hi *= 0.5;
  }
  append(0.0, hi);
  return out;
}

namespace detail {

struct TensorRule {
  std::vector<double> z;  // flattened, dim per point
  std::vector<double> w;
  std::size_t dim = 0;
};

inline TensorRule tensor_hermite(std::size_t dim, std::size_t order) {
  const QuadratureRule gh = gauss_hermite(order);
  TensorRule t;
  t.dim = dim;
  std::size_t total = 1;
  for (std::size_t a = 0; a < dim; ++a) total *= order;
  for (std::size_t i = 0; i < total; ++i) {
    std::size_t rem = i;
    double w = 1.0;
    for (std::size_t a = 0; a < dim; ++a) {
      t.z.push_back(gh.nodes[rem % order]);
      w *= gh.weights[rem % order];
      rem /= order;
    }
    t.w.push_back(w);
  }
  return t;
}

inline void require_time(double t, bool allow_zero) {
  if (allow_zero ? !(t >= 0.0) : !(t > 0.0)) {
    std::ostringstream msg;
    msg << "OU time t=" << t << (allow_zero ? " must be >= 0" : " must be > 0 (Lambda_t is singular at 0)");
    throw DomainError(msg.str());
  }
}

}  // namespace detail

using PointFunction = std::function<double(const Point&)>;

/// (T_t f)(x) = E f(e^{tA}x + xi), xi ~ N(0, Q1(t)), by tensor Gauss-Hermite.
inline double ou_expectation_at(const PointFunction& f, const Point& x, double t,
                                const OuKernel& kernel, std::size_t order = 20) {
  kernel.validate();
  detail::require_time(t, true);
  if (t == 0.0) return f(x);
  const std::size_t d = kernel.dim();
  const detail::TensorRule rule = detail::tensor_hermite(d, order);
  Point p(d);
  double s = 0.0;
  for (std::size_t q = 0; q < rule.w.size(); ++q) {
    for (std::size_t a = 0; a < d; ++a)
      p[a] = kernel.mean_decay(a, t) * x[a] + std::sqrt(kernel.variance(a, t)) * rule.z[q * d + a];
    s += rule.w[q] * f(p);
  }
  return s;
}

/// D_h (T_t f)(x) = E[f(m + xi) sum_k h_k e^{-lambda_k t} xi_k / var_k(t)].
inline double ou_gradient_at(const PointFunction& f, const Point& x, double t,
                             const OuKernel& kernel, const Point& h, std::size_t order = 20) {
  kernel.validate();
  detail::require_time(t, false);
  const std::size_t d = kernel.dim();
  if (h.size() != d || x.size() != d) throw DimensionError("point or direction has wrong dimension");
  const detail::TensorRule rule = detail::tensor_hermite(d, order);
  Point m(d), p(d);
  for (std::size_t a = 0; a < d; ++a) m[a] = kernel.mean_decay(a, t) * x[a];
  const double fm = f(m);
  double s = 0.0;
  for (std::size_t q = 0; q < rule.w.size(); ++q) {
    double weight = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
      const double sd = std::sqrt(kernel.variance(a, t));
      const double z = rule.z[q * d + a];
      p[a] = m[a] + sd * z;
      weight += h[a] * kernel.mean_decay(a, t) * z / sd;
    }
    s += rule.w[q] * (f(p) - fm) * weight;
  }
  return s;
}

/// Dense grid operators of T_t and its Bismut gradients, optionally
/// integrated against a time weight.
struct GridOperators {
  Eigen::MatrixXd semigroup;              // (T f)(x_i) = sum_j S(i, j) f_j
  std::vector<Eigen::MatrixXd> gradient;  // one per axis

  static GridOperators zero(std::size_t nodes, std::size_t dim) {
    GridOperators g;
    const auto n = static_cast<Eigen::Index>(nodes);
    g.semigroup = Eigen::MatrixXd::Zero(n, n);
    g.gradient.assign(dim, Eigen::MatrixXd::Zero(n, n));
    return g;
  }
};

namespace detail {

/// ops += weight * (T_t, D T_t) on the grid of `grid`.
inline void accumulate_ou_operators(GridOperators& ops, const TruncatedFunction& grid, double t,
                                    double weight, const OuKernel& kernel, const TensorRule& rule,
                                    bool with_gradient) {
  const std::size_t d = grid.dim();
  std::array<double, kMaxZvonkinDim> decay{}, sd{}, gscale{};
  for (std::size_t a = 0; a < d; ++a) {
    decay[a] = kernel.mean_decay(a, t);
    sd[a] = std::sqrt(kernel.variance(a, t));
    gscale[a] = decay[a] / sd[a];
  }
  Point x(d);
  std::array<double, kMaxZvonkinDim> p{};
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.node(i, x);
    const auto row = static_cast<Eigen::Index>(i);
    for (std::size_t q = 0; q < rule.w.size(); ++q) {
      const double* z = &rule.z[q * d];
      for (std::size_t a = 0; a < d; ++a) p[a] = decay[a] * x[a] + sd[a] * z[a];
      const double wq = weight * rule.w[q];
      grid.for_each_corner(p.data(), [&](std::size_t idx, double cw) {
        const auto col = static_cast<Eigen::Index>(idx);
        ops.semigroup(row, col) += wq * cw;
        if (with_gradient)
          for (std::size_t a = 0; a < d; ++a) ops.gradient[a](row, col) += wq * cw * z[a] * gscale[a];
      });
    }
  }
}

inline void check_grid(const TruncatedFunction& f, const OuKernel& kernel) {
  kernel.validate();
  if (f.dim() != kernel.dim()) throw DimensionError("grid and OU kernel dimensions differ");
  if (f.size() > kMaxZvonkinNodes)
    throw ConfigError("grid has " + std::to_string(f.size()) + " nodes; at most " +
                      std::to_string(kMaxZvonkinNodes) + " are supported");
}

inline TruncatedFunction apply_operator(const Eigen::MatrixXd& op, const TruncatedFunction& f) {
  TruncatedFunction out = f.like(f.n_out());
  const auto n = static_cast<Eigen::Index>(f.size());
  const auto c = static_cast<Eigen::Index>(f.n_out());
  // values are node-major: a (c x n) column-major view.
  Eigen::Map<const Eigen::MatrixXd> in(f.values().data(), c, n);
  Eigen::Map<Eigen::MatrixXd> res(out.values().data(), c, n);
  res.noalias() = in * op.transpose();
  return out;
}

}  // namespace detail

/// T_t f on the grid of f.
inline TruncatedFunction ou_semigroup_apply(const TruncatedFunction& f, double t,
                                            const OuKernel& kernel, std::size_t order = 16) {
  detail::check_grid(f, kernel);
  detail::require_time(t, true);
  if (t == 0.0) return f;
  GridOperators ops = GridOperators::zero(f.size(), 0);
  detail::accumulate_ou_operators(ops, f, t, 1.0, kernel, detail::tensor_hermite(f.dim(), order),
                                  false);
  return detail::apply_operator(ops.semigroup, f);
}

/// D_h T_t f on the grid of f (same component count as f).
inline TruncatedFunction ou_gradient_apply(const TruncatedFunction& f, double t,
                                           const OuKernel& kernel, const Point& h,
                                           std::size_t order = 16) {
  detail::check_grid(f, kernel);
  detail::require_time(t, false);
  if (h.size() != f.dim()) throw DimensionError("direction has wrong dimension");
  GridOperators ops = GridOperators::zero(f.size(), f.dim());
  detail::accumulate_ou_operators(ops, f, t, 1.0, kernel, detail::tensor_hermite(f.dim(), order),
                                  true);
  Eigen::MatrixXd dh = Eigen::MatrixXd::Zero(ops.semigroup.rows(), ops.semigroup.cols());
  for (std::size_t a = 0; a < f.dim(); ++a) dh += h[a] * ops.gradient[a];
  return detail::apply_operator(dh, f);
}

struct ResolventOptions {
  double t_max_relaxations = 40.0;  // t_max = this / lambda_1
  std::size_t panels = 24;
  std::size_t time_order = 10;
  std::size_t hermite_order = 0;  // 0: 16 / 10 / 6 for d = 1 / 2 / 3
};

inline std::size_t default_hermite_order(std::size_t dim) {
  return dim == 1 ? 16 : dim == 2 ? 10 : 6;
}

/// R = int_0^{t_max} e^{-lambda t} T_t dt and D R on the grid.
inline GridOperators resolvent_operators(const TruncatedFunction& grid, const OuKernel& kernel,
                                         double lambda, const ResolventOptions& opt = {}) {
  detail::check_grid(grid, kernel);
  if (!(lambda > 0.0)) throw DomainError("resolvent parameter lambda must be > 0");
  const double lambda1 = *std::min_element(kernel.lambda.begin(), kernel.lambda.end());
  const QuadratureRule tq = log_time_quadrature(opt.t_max_relaxations / lambda1, opt.panels,
                                                opt.time_order);
  const std::size_t order = opt.hermite_order ? opt.hermite_order : default_hermite_order(grid.dim());
  const detail::TensorRule rule = detail::tensor_hermite(grid.dim(), order);
  GridOperators ops = GridOperators::zero(grid.size(), grid.dim());
  for (std::size_t j = 0; j < tq.nodes.size(); ++j) {
    const double w = tq.weights[j] * std::exp(-lambda * tq.nodes[j]);
    if (w < 1e-300) continue;
    detail::accumulate_ou_operators(ops, grid, tq.nodes[j], w, kernel, rule, true);
  }
  return ops;
}

struct PicardOptions {
  std::size_t max_iter = 200;
  double tol = 1e-10;
  ResolventOptions resolvent;
  bool residual_check = true;  // re-evaluate the fixed point on a refined time rule
};

struct PicardResult {
  double lambda = 0.0;
  TruncatedFunction u;                // d components
  std::vector<TruncatedFunction> du;  // du[k]: d/dx_k of U, d components
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> changes;  // sup-norm change per iteration
  double contraction_ratio = 0.0;
  double residual = std::numeric_limits<double>::quiet_NaN();
  std::string message;

  double u_sup() const { return u.sup_norm(); }
  double du_sup() const {
    double s = 0.0;
    for (const auto& g : du) s = std::max(s, g.sup_norm());
    return s;
  }
};

namespace detail {

/// h_j = G_j + sum_k Bbar_k DU_{jk} on the grid.
inline TruncatedFunction picard_source(const TruncatedFunction& g, const TruncatedFunction& bbar,
                                       const std::vector<TruncatedFunction>& du) {
  TruncatedFunction h = g;
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = 0; j < g.n_out(); ++j)
      for (std::size_t k = 0; k < du.size(); ++k) h.at(i, j) += bbar.at(i, k) * du[k].at(i, j);
  return h;
}

inline double sup_difference(const TruncatedFunction& a, const TruncatedFunction& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i)
    s = std::max(s, std::fabs(a.values()[i] - b.values()[i]));
  return s;
}

}  // namespace detail

/// Picard iteration for U on the grid of G. G and bbar carry d components.
inline PicardResult picard_solve(const TruncatedFunction& g, const TruncatedFunction& bbar,
                                 double lambda, const OuKernel& kernel,
                                 const PicardOptions& opt = {}) {
  detail::check_grid(g, kernel);
  if (!g.same_grid(bbar)) throw DimensionError("G and Bbar must share a grid");
  if (bbar.n_out() != g.dim()) throw DimensionError("Bbar must have d components");
  const std::size_t d = g.dim();
  const GridOperators ops = resolvent_operators(g, kernel, lambda, opt.resolvent);

  PicardResult res;
  res.lambda = lambda;
  res.u = g.like(g.n_out());
  res.du.assign(d, g.like(g.n_out()));
  std::size_t growth = 0;
  for (std::size_t it = 1; it <= opt.max_iter; ++it) {
    const TruncatedFunction h = detail::picard_source(g, bbar, res.du);
    TruncatedFunction u = detail::apply_operator(ops.semigroup, h);
    for (std::size_t k = 0; k < d; ++k) res.du[k] = detail::apply_operator(ops.gradient[k], h);
    const double change = detail::sup_difference(u, res.u);
    res.u = std::move(u);
    res.iterations = it;
    if (!res.changes.empty()) {
      res.contraction_ratio = change / res.changes.back();
      growth = change > res.changes.back() ? growth + 1 : 0;
    }
    res.changes.push_back(change);
    if (change < opt.tol) {
      res.converged = true;
      break;
    }
    if (growth >= 3) {
      std::ostringstream msg;
      msg << "Picard iteration is not contracting at lambda=" << lambda
          << " (sup-norm change grew for 3 iterations, ratio " << res.contraction_ratio
          << "); increase lambda";
      res.message = msg.str();
      return res;
    }
  }
  if (!res.converged) {
    res.message = "Picard iteration hit max_iter without reaching tol";
    return res;
  }
  if (opt.residual_check) {
    ResolventOptions fine = opt.resolvent;
    fine.panels += 8;
    fine.time_order += 6;
    const GridOperators check = resolvent_operators(g, kernel, lambda, fine);
    const TruncatedFunction h = detail::picard_source(g, bbar, res.du);
    res.residual = detail::sup_difference(res.u, detail::apply_operator(check.semigroup, h));
  }
  return res;
}

/// Bbar restricted to the first d modes, estimated at every grid node
/// x = sum_a p_a e_a with higher slow modes zeroed. All nodes share one seed.
inline TruncatedFunction truncated_bbar(const ModelConfig& config, std::vector<double> radius,
                                        std::size_t nodes_per_axis,
                                        const AveragingParams& params, std::uint64_t seed) {
  const std::size_t d = radius.size();
  if (d > config.n_modes) throw DimensionError("truncated dimension exceeds n_modes");
  return TruncatedFunction::sample(std::move(radius), nodes_per_axis, d, [&](const Point& p) {
    SpectralField x(config.n_modes);
    for (std::size_t a = 0; a < d; ++a) x[a] = p[a];
    const BbarEstimate est = estimate_bbar(x, params, config, seed);
    return std::vector<double>(est.value.vector().begin(), est.value.vector().begin() +
                                                               static_cast<std::ptrdiff_t>(d));
  });
}

struct DLambdaRow {
  double lambda = 0.0;
  double u_sup = 0.0;
  double du_sup = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  double residual = 0.0;
};

inline std::vector<DLambdaRow> dlambda_curve(const TruncatedFunction& g,
                                             const TruncatedFunction& bbar, const OuKernel& kernel,
                                             const std::vector<double>& lambdas,
                                             const PicardOptions& opt = {}) {
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!(lambdas[i] > 0.0)) throw ConfigError("lambdas must be > 0");
    if (i > 0 && !(lambdas[i] > lambdas[i - 1])) throw ConfigError("lambdas must be increasing");
  }
  std::vector<DLambdaRow> rows;
  for (double lam : lambdas) {
    const PicardResult r = picard_solve(g, bbar, lam, kernel, opt);
    rows.push_back({lam, r.u_sup(), r.du_sup(), r.iterations, r.converged, r.residual});
  }
  return rows;
}

struct ZvonkinSetup {
  std::size_t dim = 1;
  std::size_t nodes_per_axis = 41;
  double box_widths = 4.0;  // radius in stationary standard deviations
  AveragingParams averaging;
  std::uint64_t seed = 1;
};

/// Truncated model problem with G = Bbar.
struct ZvonkinProblem {
  OuKernel kernel;
  TruncatedFunction bbar;
  TruncatedFunction g;
};

inline ZvonkinProblem zvonkin_problem(const ModelConfig& config, const ZvonkinSetup& setup) {
  ZvonkinProblem p;
  p.kernel = OuKernel::from_config(config, setup.dim);
  p.kernel.validate();
  p.bbar = truncated_bbar(config, p.kernel.default_radius(setup.box_widths), setup.nodes_per_axis,
                          setup.averaging, setup.seed);
  p.g = p.bbar;
  return p;
}

inline std::vector<DLambdaRow> dlambda_curve(const ModelConfig& config,
                                             const std::vector<double>& lambdas,
                                             const ZvonkinSetup& setup,
                                             const PicardOptions& opt = {}) {
  const ZvonkinProblem p = zvonkin_problem(config, setup);
  return dlambda_curve(p.g, p.bbar, p.kernel, lambdas, opt);
}

}  // namespace slowfast
