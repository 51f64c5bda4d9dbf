#pragma once

// Brute-force reference solver for the CLF-CBF program: enumerate the four
// activity patterns, solve each equality-constrained problem with dense
// linear algebra, keep the primal/dual feasible candidates and return the
// cheapest. Shares no code path with the closed-form solver beyond LieData.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "cbfqp/closed_form_qp.hpp"

namespace cbfqp {

struct ActiveSetCandidate {
  bool clf_active = false;
  bool cbf_active = false;
  ControlInput u;
  double delta = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  bool feasible = false;
  double objective = std::numeric_limits<double>::infinity();
};

struct OracleTolerances {
  /// Primal and dual feasibility, scaled by the magnitude of the row data.
  double feasibility = 1e-9;
  /// Objective values closer than this (relative) count as ties; the pattern
  /// with fewer active rows wins.
  double objective_tie = 1e-12;
  double lgh_zero = 1e-7;
};

/// Solves every activity pattern in the order {}, {CBF}, {CLF}, {CLF, CBF}.
inline std::array<ActiveSetCandidate, 4> enumerate_active_sets(
    const LieData& lie, const QPWeight& p, const OracleTolerances& tol = {}) {
  detail::check_lie(lie);
  const Eigen::Index m = lie.m();
  const Eigen::Index dim = m + 1;  // z = (u, δ)

  // Constraints in the form A z ≤ b.
  Matrix A(2, dim);
  A.row(0) << lie.LgV, -1.0;
  A.row(1) << -lie.Lgh, 0.0;
  const Eigen::Vector2d rhs(-lie.FV, lie.Fh);

  Vector h_inv = Vector::Ones(dim);
  h_inv(m) = 1.0 / p.value();

  const std::array<std::array<bool, 2>, 4> patterns = {
      {{false, false}, {false, true}, {true, false}, {true, true}}};

  std::array<ActiveSetCandidate, 4> out;
  for (std::size_t k = 0; k < patterns.size(); ++k) {
    ActiveSetCandidate& cand = out[k];
    cand.clf_active = patterns[k][0];
    cand.cbf_active = patterns[k][1];

    std::vector<int> rows;
    if (cand.clf_active) rows.push_back(0);
    if (cand.cbf_active) rows.push_back(1);

    Vector z = Vector::Zero(dim);
    Eigen::Vector2d mu = Eigen::Vector2d::Zero();
    bool consistent = true;
    if (!rows.empty()) {
      const auto na = static_cast<Eigen::Index>(rows.size());
      Matrix As(na, dim);
      Vector bs(na);
      for (Eigen::Index i = 0; i < na; ++i) {
        As.row(i) = A.row(rows[i]);
        bs(i) = rhs(rows[i]);
      }
      // Stationarity H z + Asᵀ μ = 0 and A_s z = b_s give
      // (A_s H⁻¹ A_sᵀ) μ = −b_s. A rank-deficient Schur complement (active
      // CBF row with Lgh = 0) is solved in the minimum-norm sense, which
      // pins the free multiplier to 0.
      const Matrix schur = As * h_inv.asDiagonal() * As.transpose();
      const Eigen::CompleteOrthogonalDecomposition<Matrix> cod(schur);
      const Vector mu_s = cod.solve(-bs);
      z = -(h_inv.asDiagonal() * As.transpose() * mu_s);
      const double scale = 1.0 + bs.cwiseAbs().maxCoeff() + schur.cwiseAbs().maxCoeff();
      consistent = ((As * z - bs).cwiseAbs().maxCoeff() <= tol.feasibility * scale);
      for (Eigen::Index i = 0; i < na; ++i) mu(rows[i]) = mu_s(i);
    }

    cand.u = z.head(m);
    cand.delta = z(m);
    cand.lambda1 = mu(0);
    cand.lambda2 = mu(1);
    cand.objective = 0.5 * cand.u.squaredNorm() + 0.5 * p.value() * cand.delta * cand.delta;

    const Vector slack = A * z - rhs;  // ≤ 0 when feasible
    const double row_scale0 =
        1.0 + std::abs(rhs(0)) + A.row(0).norm() * z.norm();
    const double row_scale1 =
        1.0 + std::abs(rhs(1)) + A.row(1).norm() * z.norm();
    const bool primal = slack(0) <= tol.feasibility * row_scale0 &&
                        slack(1) <= tol.feasibility * row_scale1;
    const bool dual = mu(0) >= -tol.feasibility * (1.0 + std::abs(mu(0))) &&
                      mu(1) >= -tol.feasibility * (1.0 + std::abs(mu(1)));
    cand.feasible = consistent && primal && dual;
  }
  return out;
}

/// Reference solution of the same program. Throws InfeasibleError when no
/// activity pattern survives the feasibility filter.
inline QPSolution solve_oracle(const LieData& lie, const QPWeight& p,
                               const OracleTolerances& tol = {}) {
  const auto candidates = enumerate_active_sets(lie, p, tol);
  const ActiveSetCandidate* best = nullptr;
  for (const auto& cand : candidates) {
    if (!cand.feasible) continue;
    if (best == nullptr ||
        cand.objective < best->objective - tol.objective_tie * (1.0 + best->objective)) {
      best = &cand;
    }
  }
  if (best == nullptr) {
    throw InfeasibleError("no feasible activity pattern (FV=" + std::to_string(lie.FV) +
                          ", Fh=" + std::to_string(lie.Fh) + ")");
  }

  const bool lgh_zero = lie.Lgh.norm() <= tol.lgh_zero;
  QPSolution sol;
  sol.lie = lie;
  sol.u_star = best->u;
  sol.delta = best->delta;
  sol.lambda1 = best->lambda1;
  sol.lambda2 = best->lambda2;
  if (!best->clf_active && !best->cbf_active) {
    sol.region = RegionTag::kClfOffCbfOff;
  } else if (!best->clf_active) {
    sol.region = lgh_zero ? RegionTag::kClfOffCbfOn1 : RegionTag::kClfOffCbfOn2;
  } else if (!best->cbf_active) {
    sol.region = RegionTag::kClfOnCbfOff;
  } else {
    sol.region = lgh_zero ? RegionTag::kClfOnCbfOn1 : RegionTag::kClfOnCbfOn2;
  }
  return sol;
}

/// Worst violation of the KKT system of the program at `sol`: stationarity
/// in u and δ, primal and dual feasibility, complementary slackness.
inline double kkt_residual(const QPSolution& sol, const QPWeight& p) {
  const LieData& lie = sol.lie;
  const Vector stat_u = sol.u_star + sol.lambda1 * lie.LgV.transpose() -
                        sol.lambda2 * lie.Lgh.transpose();
  const double stat_delta = p.value() * sol.delta - sol.lambda1;
  const double clf_row = sol.clf_residual();  // ≤ 0
  const double cbf_row = sol.cbf_residual();  // ≥ 0
  double r = stat_u.cwiseAbs().maxCoeff();
  r = std::max(r, std::abs(stat_delta));
  r = std::max(r, std::max(0.0, clf_row));
  r = std::max(r, std::max(0.0, -cbf_row));
  r = std::max(r, std::max(0.0, -sol.lambda1));
  r = std::max(r, std::max(0.0, -sol.lambda2));
  r = std::max(r, std::abs(sol.lambda1 * clf_row));
  r = std::max(r, std::abs(sol.lambda2 * cbf_row));
  return r;
}

struct OracleComparison {
  std::size_t count = 0;
  double max_du = 0.0;      // ‖u_cf − u_oracle‖∞
  double max_ddelta = 0.0;  // |δ_cf − δ_oracle|
  double max_kkt = 0.0;     // KKT residual of the closed-form solution
  std::size_t region_mismatches = 0;
  State worst_state;        // state attaining the largest of the three
  double worst = 0.0;
};

/// Closed form against the oracle on every state of `sample`.
inline OracleComparison compare_with_oracle(const DynamicsModel& model,
                                            const CertificatePair& certs, const QPWeight& p,
                                            const std::vector<State>& sample) {
  OracleComparison out;
  for (const State& x : sample) {
    const LieData lie = lie_data(model, certs, x);
    const QPSolution cf = solve(lie, p);
    const QPSolution ref = solve_oracle(lie, p);
    const double du = (cf.u_star - ref.u_star).cwiseAbs().maxCoeff();
    const double dd = std::abs(cf.delta - ref.delta);
    const double kkt = kkt_residual(cf, p);
    out.max_du = std::max(out.max_du, du);
    out.max_ddelta = std::max(out.max_ddelta, dd);
    out.max_kkt = std::max(out.max_kkt, kkt);
    if (cf.region != ref.region) ++out.region_mismatches;
    const double w = std::max({du, dd, kkt});
    if (out.count == 0 || w > out.worst) {
      out.worst = w;
      out.worst_state = x;
    }
    ++out.count;
  }
  return out;
}

}  // namespace cbfqp
