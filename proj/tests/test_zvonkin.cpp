#include <gtest/gtest.h>

#include "slowfast/zvonkin.hpp"

using namespace slowfast;

namespace {

const ModelConfig& heat() {
  static const ModelConfig c = heat_example(0.1, 0.1, 32);
  return c;
}

double double_factorial(int n) {
  double r = 1.0;
  for (int i = n; i > 1; i -= 2) r *= i;
  return r;
}

AveragingParams quick_averaging() {
  AveragingParams p;
  p.burn_in = 10.0;
  p.avg_time = 40.0;
  p.dt = 0.05;
  p.replicas = 4;
  return p;
}

TruncatedFunction linear_g(const std::vector<double>& radius, std::size_t nodes) {
  return TruncatedFunction::sample(radius, nodes, radius.size(), [](const Point& p) { return p; });
}

// Nodes well inside the box, where the clamped tails carry no Gaussian mass.
std::vector<std::size_t> inner_nodes(const TruncatedFunction& f, double frac) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const Point p = f.node(i);
    bool inside = true;
    for (std::size_t a = 0; a < p.size(); ++a)
      inside = inside && std::fabs(p[a]) <= frac * f.coordinate(a, f.nodes_per_axis() - 1) + 1e-12;
    if (inside) out.push_back(i);
  }
  return out;
}

}  // namespace

TEST(Quadrature, HermiteMomentsAreExact) {
  for (std::size_t order : {4, 10, 20}) {
    const QuadratureRule r = gauss_hermite(order);
    for (int p = 0; p < static_cast<int>(2 * order); ++p) {
      double s = 0.0;
      for (std::size_t i = 0; i < r.nodes.size(); ++i) s += r.weights[i] * std::pow(r.nodes[i], p);
      const double exact = p % 2 ? 0.0 : double_factorial(p - 1);
      // odd moments cancel terms of size ~ p!!
      EXPECT_NEAR(s, exact, 1e-10 * std::max(1.0, double_factorial(p))) << "order " << order << " power " << p;
    }
  }
}

TEST(Quadrature, LegendreIntegratesPolynomials) {
  for (std::size_t order : {1, 3, 8}) {
    const QuadratureRule r = gauss_legendre(order, -0.5, 2.0);
    for (int p = 0; p < static_cast<int>(2 * order); ++p) {
      double s = 0.0;
      for (std::size_t i = 0; i < r.nodes.size(); ++i) s += r.weights[i] * std::pow(r.nodes[i], p);
      const double exact = (std::pow(2.0, p + 1) - std::pow(-0.5, p + 1)) / (p + 1);
      EXPECT_NEAR(s, exact, 1e-13 * std::max(1.0, exact));
    }
  }
}

TEST(Quadrature, LogTimeRuleIntegratesExponentials) {
  const QuadratureRule r = log_time_quadrature(40.0);
  for (double lam : {1.0, 10.0, 100.0, 1000.0}) {
    double s = 0.0;
    for (std::size_t i = 0; i < r.nodes.size(); ++i) s += r.weights[i] * std::exp(-lam * r.nodes[i]);
    EXPECT_NEAR(s * lam, -std::expm1(-40.0 * lam), 1e-10) << lam;
  }
}

TEST(TruncatedFunction, MultilinearInterpolationIsExact) {
  auto f = [](const Point& p) { return std::vector<double>{1.0 + 2.0 * p[0] - p[1] + 0.5 * p[0] * p[1]}; };
  const TruncatedFunction g = TruncatedFunction::sample({2.0, 1.0}, 7, 1, f);
  NoiseStream s(4);
  for (int i = 0; i < 200; ++i) {
    const Point p{-2.0 + 4.0 * s.uniform(), -1.0 + 2.0 * s.uniform()};
    EXPECT_NEAR(g.evaluate(p, 0), f(p)[0], 1e-13);
  }
}

TEST(TruncatedFunction, ClampsOutsideTheBox) {
  const TruncatedFunction g = TruncatedFunction::sample({1.0}, 11, 1, [](const Point& p) {
    return std::vector<double>{p[0] * p[0] + p[0]};
  });
  EXPECT_DOUBLE_EQ(g.evaluate({5.0}, 0), 2.0);
  EXPECT_DOUBLE_EQ(g.evaluate({-3.0}, 0), 0.0);
  EXPECT_DOUBLE_EQ(g.sup_norm(), 2.0);
}

TEST(TruncatedFunction, RejectsBadShapes) {
  EXPECT_THROW(TruncatedFunction({1.0, 1.0, 1.0, 1.0}, 3, 1), DimensionError);
  EXPECT_THROW(TruncatedFunction({}, 3, 1), DimensionError);
  EXPECT_THROW(TruncatedFunction({1.0}, 1, 1), ConfigError);
  EXPECT_THROW(TruncatedFunction({-1.0}, 3, 1), ConfigError);
  EXPECT_THROW(OuKernel::from_config(heat(), 4), DimensionError);
}

TEST(OuExpectation, QuadraticClosedForm) {
  const OuKernel k = OuKernel::from_config(heat(), 2);
  auto f = [](const Point& p) { return p[0] * p[0] + 3.0 * p[1]; };
  for (double t : {0.05, 0.4, 2.0})
    for (double x : {-0.7, 0.0, 1.3}) {
      const double m0 = std::exp(-k.lambda[0] * t) * x, m1 = std::exp(-k.lambda[1] * t) * 0.2;
      const double exact = m0 * m0 + k.variance(0, t) + 3.0 * m1;
      EXPECT_NEAR(ou_expectation_at(f, {x, 0.2}, t, k), exact, 1e-12);
    }
  EXPECT_DOUBLE_EQ(ou_expectation_at(f, {0.5, 1.0}, 0.0, k), 3.25);
  EXPECT_THROW(ou_expectation_at(f, {0.5, 1.0}, -1.0, k), DomainError);
}

TEST(OuGradient, BismutFormulaMatchesFiniteDifferences) {
  const OuKernel k = OuKernel::from_config(heat(), 1);
  auto f = [](const Point& p) { return std::sin(p[0]) + 0.3 * p[0] * p[0]; };
  const double h = 1e-5;
  for (double t : {0.05, 0.3, 1.5})
    for (double x : {-1.0, 0.4, 2.0}) {
      const double fd =
          (ou_expectation_at(f, {x + h}, t, k, 40) - ou_expectation_at(f, {x - h}, t, k, 40)) / (2 * h);
      EXPECT_NEAR(ou_gradient_at(f, {x}, t, k, {1.0}, 40), fd, 1e-4) << t << " " << x;
    }
  auto sq = [](const Point& p) { return p[0] * p[0]; };
  EXPECT_NEAR(ou_gradient_at(sq, {0.8}, 0.3, k, {1.0}), 2.0 * std::exp(-0.6) * 0.8, 1e-12);
  EXPECT_THROW(ou_gradient_at(sq, {0.8}, 0.0, k, {1.0}), DomainError);
}

TEST(GridSemigroup, ClosedFormsAtInnerNodes) {
  const OuKernel k = OuKernel::from_config(heat(), 1);
  const auto radius = k.default_radius(10.0);
  const TruncatedFunction one = TruncatedFunction::sample(radius, 61, 1, [](const Point&) {
    return std::vector<double>{2.0};
  });
  const TruncatedFunction lin = linear_g(radius, 61);
  const TruncatedFunction sq = TruncatedFunction::sample(radius, 61, 1, [](const Point& p) {
    return std::vector<double>{p[0] * p[0]};
  });
  const double spacing = 2.0 * radius[0] / 60.0;
  const auto inner = inner_nodes(lin, 0.3);
  for (double t : {0.1, 0.5, 2.0}) {
    const TruncatedFunction c = ou_semigroup_apply(one, t, k);
    const TruncatedFunction l = ou_semigroup_apply(lin, t, k);
    const TruncatedFunction s = ou_semigroup_apply(sq, t, k);
    const TruncatedFunction dl = ou_gradient_apply(lin, t, k, {1.0});
    const TruncatedFunction dc = ou_gradient_apply(one, t, k, {1.0});
    const double decay = std::exp(-t);
    for (std::size_t i : inner) {
      const double x = lin.node(i)[0];
      EXPECT_NEAR(c.at(i, 0), 2.0, 1e-12);
      EXPECT_NEAR(l.at(i, 0), decay * x, 1e-12);
      // Piecewise-linear interpolation of x^2 overshoots by at most spacing^2 / 4.
      const double exact = decay * decay * x * x + k.variance(0, t);
      EXPECT_GE(s.at(i, 0), exact - 1e-12);
      EXPECT_LE(s.at(i, 0), exact + 0.25 * spacing * spacing);
      EXPECT_NEAR(dl.at(i, 0), decay, 1e-10);
      EXPECT_NEAR(dc.at(i, 0), 0.0, 1e-12);
    }
  }
  EXPECT_EQ(ou_semigroup_apply(lin, 0.0, k).values(), lin.values());
  EXPECT_THROW(ou_gradient_apply(lin, 0.0, k, {1.0}), DomainError);
  EXPECT_THROW(ou_semigroup_apply(lin, -0.1, k), DomainError);
}

TEST(Picard, ConstantSourceGivesConstantOverLambda) {
  const OuKernel k = OuKernel::from_config(heat(), 1);
  const auto radius = k.default_radius();
  const TruncatedFunction g = TruncatedFunction::sample(radius, 41, 1, [](const Point&) {
    return std::vector<double>{0.7};
  });
  for (double lam : {1.0, 10.0, 100.0}) {
    const PicardResult r = picard_solve(g, g, lam, k);
    ASSERT_TRUE(r.converged) << r.message;
    for (std::size_t i = 0; i < g.size(); ++i) {
      EXPECT_NEAR(r.u.at(i, 0), 0.7 / lam, 1e-9);
      EXPECT_NEAR(r.du[0].at(i, 0), 0.0, 1e-9);
    }
  }
}

// lambda U - L U - b DU = x with constant b has U = x / (lambda + lambda_1) + b / (lambda (lambda + lambda_1)).
TEST(Picard, LinearSourceClosedForm) {
  for (std::size_t d : {1, 2}) {
    const OuKernel k = OuKernel::from_config(heat(), d);
    const auto radius = k.default_radius(10.0);
    const std::size_t nodes = d == 1 ? 41 : 21;
    const TruncatedFunction g = linear_g(radius, nodes);
    for (double b : {0.0, 0.3}) {
      TruncatedFunction bbar = g.like(d);
      for (auto& v : bbar.values()) v = b;
      for (double lam : {1.0, 10.0, 100.0}) {
        const PicardResult r = picard_solve(g, bbar, lam, k);
        ASSERT_TRUE(r.converged) << r.message;
        for (std::size_t i : inner_nodes(g, 0.2)) {
          const Point p = g.node(i);
          for (std::size_t j = 0; j < d; ++j) {
            const double a = 1.0 / (lam + k.lambda[j]);
            EXPECT_NEAR(r.u.at(i, j), a * p[j] + b * a / lam, 1e-6) << d << " " << lam << " " << b;
            for (std::size_t m = 0; m < d; ++m)
              EXPECT_NEAR(r.du[m].at(i, j), m == j ? a : 0.0, 1e-6);
          }
        }
      }
    }
  }
}

TEST(Picard, HeatProblemConvergesAndIsBounded) {
  ZvonkinSetup setup;
  setup.averaging = quick_averaging();
  setup.seed = 5;
  const ZvonkinProblem p = zvonkin_problem(heat(), setup);
  const double g_sup = p.g.sup_norm(), b_sup = p.bbar.sup_vector_norm();
  EXPECT_GT(g_sup, 0.0);
  for (double lam : {1.0, 10.0, 100.0}) {
    const PicardResult r = picard_solve(p.g, p.bbar, lam, p.kernel);
    ASSERT_TRUE(r.converged) << r.message;
    EXPECT_LT(r.contraction_ratio, 1.0);
    EXPECT_LT(r.residual, 1e-2 * g_sup);
    EXPECT_LE(r.u_sup(), (b_sup * r.du_sup() + g_sup) / lam * (1.0 + 1e-9));
  }
}

TEST(Picard, DLambdaCurveDecreases) {
  ZvonkinSetup setup;
  setup.averaging = quick_averaging();
  const ZvonkinProblem p = zvonkin_problem(heat(), setup);
  const auto rows = dlambda_curve(p.g, p.bbar, p.kernel, {1.0, 3.0, 10.0, 30.0, 100.0});
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_LT(rows[i].u_sup, rows[i - 1].u_sup);
    EXPECT_LT(rows[i].du_sup, rows[i - 1].du_sup);
    EXPECT_TRUE(rows[i].converged);
  }
  EXPECT_THROW(dlambda_curve(p.g, p.bbar, p.kernel, {10.0, 1.0}), ConfigError);
  EXPECT_THROW(dlambda_curve(p.g, p.bbar, p.kernel, {0.0, 1.0}), ConfigError);
}

TEST(Picard, RejectsMismatchedInputs) {
  const OuKernel k = OuKernel::from_config(heat(), 1);
  const TruncatedFunction g = linear_g(k.default_radius(), 11);
  const TruncatedFunction other = linear_g(k.default_radius(), 13);
  EXPECT_THROW(picard_solve(g, other, 1.0, k), DimensionError);
  EXPECT_THROW(picard_solve(g, g, 0.0, k), DomainError);
}
