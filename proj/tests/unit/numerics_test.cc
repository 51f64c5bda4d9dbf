#include "cbfqp/numerics.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "test_util.h"

namespace cbfqp {
namespace {

using testing::VectorNear;

TEST(BoxTest, ContainsAndValidate) {
  const Box box{Vector{{-1.0, 0.0}}, Vector{{1.0, 2.0}}};
  EXPECT_NO_THROW(box.validate());
  EXPECT_TRUE(box.contains(Vector{{0.0, 1.0}}));
  EXPECT_TRUE(box.contains(Vector{{1.0, 2.0}}));
  EXPECT_FALSE(box.contains(Vector{{1.1, 1.0}}));
  EXPECT_THROW((Box{Vector{{0.0}}, Vector{{0.0}}}.validate()), ConfigurationError);
  EXPECT_THROW((Box{Vector{{0.0}}, Vector{{1.0, 2.0}}}.validate()), ConfigurationError);
  EXPECT_THROW((Box{Vector{{0.0}}, Vector{{INFINITY}}}.validate()), ConfigurationError);
}

TEST(BoxSamplerTest, DeterministicAndInside) {
  const Box box{Vector{{-3.0, 5.0}}, Vector{{-1.0, 9.0}}};
  BoxSampler a(box, 99);
  BoxSampler b(box, 99);
  BoxSampler c(box, 100);
  const auto xs = a.draw(500);
  const auto ys = b.draw(500);
  const auto zs = c.draw(500);
  bool differs = false;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    EXPECT_EQ(xs[i], ys[i]);
    EXPECT_TRUE(box.contains(xs[i]));
    differs = differs || xs[i] != zs[i];
  }
  EXPECT_TRUE(differs);
}

TEST(JacobianTest, MatchesAnalytic) {
  const ResidualFn fn = [](const Vector& x) {
    return Vector{{x(0) * x(0) * x(1), std::sin(x(0)) + x(1)}};
  };
  const Vector x{{0.7, -1.3}};
  Matrix exact(2, 2);
  exact << 2 * x(0) * x(1), x(0) * x(0), std::cos(x(0)), 1.0;
  EXPECT_LE((finite_difference_jacobian(fn, x) - exact).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(NewtonTest, SquareRootOfTwo) {
  const NewtonResult r = damped_newton(
      [](const Vector& x) { return Vector::Constant(1, x(0) * x(0) - 2.0); }, Vector{{1.0}});
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.x(0), std::sqrt(2.0), 1e-12);
}

TEST(NewtonTest, UnderdeterminedLandsOnCircle) {
  const NewtonResult r = damped_newton(
      [](const Vector& x) { return Vector::Constant(1, x.squaredNorm() - 1.0); },
      Vector{{3.0, 4.0}});
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.x.norm(), 1.0, 1e-12);
  // Minimum-norm steps stay on the ray through the start.
  EXPECT_TRUE(VectorNear(r.x, Vector{{0.6, 0.8}}, 1e-9));
}

TEST(NewtonTest, ProjectedOntoManifold) {
  // Root of x − 0.5 restricted to the unit circle.
  NewtonOptions opt;
  opt.project = [](const Vector& x) -> Vector { return x / x.norm(); };
  opt.tangent_basis = [](const Vector& x) -> Matrix { return Vector{{-x(1), x(0)}}; };
  const NewtonResult r = damped_newton(
      [](const Vector& x) { return Vector::Constant(1, x(0) - 0.5); }, Vector{{1.0, 1.0}}, opt);
  EXPECT_TRUE(r.converged);
  EXPECT_TRUE(VectorNear(r.x, Vector{{0.5, std::sqrt(0.75)}}, 1e-10));
}

TEST(NewtonTest, ReportsFailureWithoutRoot) {
  const NewtonResult r = damped_newton(
      [](const Vector& x) { return Vector::Constant(1, x(0) * x(0) + 1.0); }, Vector{{2.0}});
  EXPECT_FALSE(r.converged);
  EXPECT_NEAR(r.residual_norm, 1.0, 1e-6);
}

}  // namespace
}  // namespace cbfqp
