#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "cbfqp/errors.hpp"
#include "cbfqp/model.hpp"

namespace cbfqp {

/// Axis-aligned box [lower, upper].
struct Box {
  Vector lower;
  Vector upper;

  Eigen::Index dim() const { return lower.size(); }
  bool contains(const Vector& x) const {
    return ((x - lower).array() >= 0.0).all() && ((upper - x).array() >= 0.0).all();
  }
  void validate() const {
    if (lower.size() != upper.size() || lower.size() < 1) {
      throw ConfigurationError("box bounds have inconsistent dimensions");
    }
    if (!lower.allFinite() || !upper.allFinite()) {
      throw ConfigurationError("box bounds must be finite");
    }
    if (((upper - lower).array() <= 0.0).any()) {
      throw ConfigurationError("box upper bounds must exceed lower bounds");
    }
  }
};

/// Uniform draws from a box with a fixed-seed engine, so that every sampled
/// check is reproducible.
class BoxSampler {
 public:
  BoxSampler(Box box, std::uint64_t seed) : box_(std::move(box)), engine_(seed) {
    box_.validate();
  }
  Vector operator()() {
    Vector x(box_.dim());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      std::uniform_real_distribution<double> dist(box_.lower(i), box_.upper(i));
      x(i) = dist(engine_);
    }
    return x;
  }
  std::vector<Vector> draw(std::size_t count) {
    std::vector<Vector> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back((*this)());
    return out;
  }

 private:
  Box box_;
  std::mt19937_64 engine_;
};

using ResidualFn = std::function<Vector(const Vector&)>;

/// Central-difference Jacobian of `fn` at `x`.
inline Matrix finite_difference_jacobian(const ResidualFn& fn, const Vector& x,
                                         double step = 1e-6) {
  const Vector r0 = fn(x);
  Matrix jac(r0.size(), x.size());
  Vector xp = x;
  Vector xm = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double hj = step * std::max(1.0, std::abs(x(j)));
    xp(j) = x(j) + hj;
    xm(j) = x(j) - hj;
    jac.col(j) = (fn(xp) - fn(xm)) / (2.0 * hj);
    xp(j) = x(j);
    xm(j) = x(j);
  }
  return jac;
}

struct NewtonOptions {
  int max_iterations = 50;
  int max_halvings = 30;
  double fd_step = 1e-6;
  /// Stop once ‖r‖ drops to this value.
  double tolerance = 1e-12;
  /// Optional map applied after every step (e.g. projection onto a manifold).
  std::function<Vector(const Vector&)> project;
  /// Optional basis of admissible directions at a point; the step is
  /// restricted to its column span.
  std::function<Matrix(const Vector&)> tangent_basis;
};

struct NewtonResult {
  Vector x;
  double residual_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Damped Gauss-Newton on ‖r(x)‖: the step solves J dx = −r in the
/// minimum-norm least-squares sense (so rank-deficient Jacobians, e.g. on a
/// continuum of roots, still make progress) and is halved until the residual
/// norm decreases.
inline NewtonResult damped_newton(const ResidualFn& fn, Vector x, const NewtonOptions& opt = {}) {
  if (opt.project) x = opt.project(x);
  Vector r = fn(x);
  double norm = r.norm();
  NewtonResult res;
  for (int it = 0; it < opt.max_iterations && norm > opt.tolerance; ++it) {
    res.iterations = it + 1;
    Matrix jac = finite_difference_jacobian(fn, x, opt.fd_step);
    Vector dx;
    if (opt.tangent_basis) {
      const Matrix basis = opt.tangent_basis(x);
      const Matrix reduced = jac * basis;
      dx = basis * reduced.completeOrthogonalDecomposition().solve(-r);
    } else {
      dx = jac.completeOrthogonalDecomposition().solve(-r);
    }
    if (!dx.allFinite()) break;

    bool improved = false;
    double t = 1.0;
    for (int k = 0; k <= opt.max_halvings; ++k, t *= 0.5) {
      Vector trial = x + t * dx;
      if (opt.project) trial = opt.project(trial);
      if (!trial.allFinite()) continue;
      Vector r_trial;
      try {
        r_trial = fn(trial);
      } catch (const Error&) {
        continue;
      }
      const double n_trial = r_trial.norm();
      if (n_trial < norm) {
        x = std::move(trial);
        r = std::move(r_trial);
        norm = n_trial;
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }
  res.x = std::move(x);
  res.residual_norm = norm;
  res.converged = norm <= opt.tolerance;
  return res;
}

}  // namespace cbfqp
