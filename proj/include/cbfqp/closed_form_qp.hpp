#pragma once

// Exact piecewise solution of the CLF-CBF quadratic program
//
//   min_{u, δ}  ½‖u‖² + ½pδ²
//   s.t.        FV + LgV·u ≤ δ          (CLF row)
//               Fh + Lgh·u ≥ 0          (CBF row)
//
// obtained by solving the KKT system case by case. The state space splits
// into six domains according to which rows are active and whether Lgh
// vanishes; each domain has its own closed-form input and multipliers.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <string_view>

#include "cbfqp/model.hpp"

namespace cbfqp {

/// Slack penalty p > 0.
class QPWeight {
 public:
  explicit QPWeight(double p) : p_(p) {
    if (!(p > 0.0) || !std::isfinite(p)) {
      throw ConfigurationError("QP weight p must be positive and finite");
    }
  }
  double value() const { return p_; }
  double inverse() const { return 1.0 / p_; }

 private:
  double p_;
};

/// Activity pattern of the two rows. `1` suffixes mean the CBF row is active
/// with Lgh = 0, `2` suffixes the same with Lgh ≠ 0.
enum class RegionTag {
  kClfOffCbfOff,
  kClfOffCbfOn1,
  kClfOffCbfOn2,
  kClfOnCbfOff,
  kClfOnCbfOn1,
  kClfOnCbfOn2,
};

inline constexpr std::array<RegionTag, 6> kAllRegions = {
    RegionTag::kClfOffCbfOff, RegionTag::kClfOffCbfOn1, RegionTag::kClfOffCbfOn2,
    RegionTag::kClfOnCbfOff,  RegionTag::kClfOnCbfOn1,  RegionTag::kClfOnCbfOn2};

inline constexpr std::string_view to_string(RegionTag tag) {
  switch (tag) {
    case RegionTag::kClfOffCbfOff: return "ClfOff-CbfOff";
    case RegionTag::kClfOffCbfOn1: return "ClfOff-CbfOn1";
    case RegionTag::kClfOffCbfOn2: return "ClfOff-CbfOn2";
    case RegionTag::kClfOnCbfOff: return "ClfOn-CbfOff";
    case RegionTag::kClfOnCbfOn1: return "ClfOn-CbfOn1";
    case RegionTag::kClfOnCbfOn2: return "ClfOn-CbfOn2";
  }
  return "?";
}

inline constexpr bool clf_active(RegionTag tag) {
  return tag == RegionTag::kClfOnCbfOff || tag == RegionTag::kClfOnCbfOn1 ||
         tag == RegionTag::kClfOnCbfOn2;
}

inline constexpr bool cbf_active(RegionTag tag) {
  return tag != RegionTag::kClfOffCbfOff && tag != RegionTag::kClfOnCbfOff;
}

/// Numerical thresholds of the classifier.
struct QPTolerances {
  /// Slack applied to every defining inequality of the domains.
  double region_slack = 1e-10;
  /// ‖Lgh‖ at or below this is treated as Lgh = 0.
  double lgh_zero = 1e-7;
  /// Determinant floor for the doubly active multiplier system.
  double det_floor = 1e-14;
};

struct QPSolution {
  ControlInput u_star;
  double delta = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  RegionTag region = RegionTag::kClfOffCbfOff;
  LieData lie;

  /// FV + LgV·u − δ; non-positive when the CLF row holds.
  double clf_residual() const { return lie.FV + lie.LgV.dot(u_star) - delta; }
  /// Fh + Lgh·u; non-negative when the CBF row holds.
  double cbf_residual() const { return lie.Fh + lie.Lgh.dot(u_star); }
  double objective(const QPWeight& p) const {
    return 0.5 * u_star.squaredNorm() + 0.5 * p.value() * delta * delta;
  }
};

namespace detail {

/// Scalar products that every domain test is written in.
struct QPScalars {
  double a;  // LgV LgVᵀ
  double b;  // LgV Lghᵀ
  double c;  // Lgh Lghᵀ
  double lgh_norm;
  double gram;  // ac − b², as a sum of squared 2×2 minors
  double lambda1_num;  // FV c − Fh b
  double lambda2_num;  // FV b − Fh (1/p + a)
};

inline QPScalars qp_scalars(const LieData& lie, const QPWeight& p) {
  QPScalars s{};
  s.a = lie.LgV.squaredNorm();
  s.b = lie.LgV.dot(lie.Lgh);
  s.c = lie.Lgh.squaredNorm();
  s.lgh_norm = std::sqrt(s.c);
  // Lagrange's identity avoids the cancellation in ac − b² when LgV and Lgh
  // are nearly parallel.
  s.gram = 0.0;
  for (Eigen::Index i = 0; i < lie.LgV.size(); ++i) {
    for (Eigen::Index j = i + 1; j < lie.LgV.size(); ++j) {
      const double minor = lie.LgV(i) * lie.Lgh(j) - lie.LgV(j) * lie.Lgh(i);
      s.gram += minor * minor;
    }
  }
  s.lambda1_num = lie.FV * s.c - lie.Fh * s.b;
  s.lambda2_num = lie.FV * s.b - lie.Fh * (p.inverse() + s.a);
  return s;
}

inline void check_lie(const LieData& lie) {
  if (!lie.finite()) throw NumericDomainError("Lie data is not finite");
  if (lie.LgV.size() != lie.Lgh.size() || lie.LgV.size() < 1) {
    throw ConfigurationError("LgV and Lgh must have the same positive length");
  }
}

}  // namespace detail

/// Domain membership of one state. Domains are tested in the order of
/// `kAllRegions`. Strict inequalities of the domain definitions (FV < 0,
/// λ1 numerator < 0) must hold by a margin of `tol.region_slack`, the
/// non-strict ones are relaxed by it, so that boundary states such as the
/// origin (FV = 0) land in the CLF-active domains. States that fall between
/// the tightened tests are retried with the relaxed CLF-inactive tests.
inline RegionTag classify_region(const LieData& lie, const QPWeight& p,
                                 const QPTolerances& tol = {}) {
  detail::check_lie(lie);
  const auto s = detail::qp_scalars(lie, p);
  const double eps = tol.region_slack;
  const bool lgh_zero = s.lgh_norm <= tol.lgh_zero;
  const double FV = lie.FV;
  const double Fh = lie.Fh;

  if (FV < -eps && Fh > -eps) return RegionTag::kClfOffCbfOff;
  if (FV < -eps && std::abs(Fh) <= eps && lgh_zero) return RegionTag::kClfOffCbfOn1;
  if (!lgh_zero && Fh <= eps && s.lambda1_num < -eps) return RegionTag::kClfOffCbfOn2;
  if (FV > -eps && s.lambda2_num < eps) return RegionTag::kClfOnCbfOff;
  if (FV > -eps && std::abs(Fh) <= eps && lgh_zero) return RegionTag::kClfOnCbfOn1;
  if (!lgh_zero && s.lambda1_num >= -eps && s.lambda2_num >= -eps) {
    return RegionTag::kClfOnCbfOn2;
  }
  if (FV < eps && Fh > -eps) return RegionTag::kClfOffCbfOff;
  if (FV < eps && std::abs(Fh) <= eps && lgh_zero) return RegionTag::kClfOffCbfOn1;
  if (!lgh_zero && Fh <= eps && s.lambda1_num < eps) return RegionTag::kClfOffCbfOn2;
  throw InternalInconsistencyError(
      "no domain matches: FV=" + std::to_string(FV) + " Fh=" + std::to_string(Fh) +
      " |Lgh|=" + std::to_string(s.lgh_norm));
}

/// Closed-form minimizer, multipliers and slack (δ = λ1/p).
inline QPSolution solve(const LieData& lie, const QPWeight& p, const QPTolerances& tol = {}) {
  const RegionTag region = classify_region(lie, p, tol);
  const auto s = detail::qp_scalars(lie, p);

  QPSolution sol;
  sol.region = region;
  sol.lie = lie;
  sol.u_star = ControlInput::Zero(lie.m());

  switch (region) {
    case RegionTag::kClfOffCbfOff:
    case RegionTag::kClfOffCbfOn1:
      // Multiplier of an active row with Lgh = 0 is not unique; report 0.
      break;
    case RegionTag::kClfOffCbfOn2:
      sol.lambda2 = std::max(0.0, -lie.Fh / s.c);
      sol.u_star = sol.lambda2 * lie.Lgh.transpose();
      break;
    case RegionTag::kClfOnCbfOff:
    case RegionTag::kClfOnCbfOn1:
      sol.lambda1 = std::max(0.0, lie.FV / (p.inverse() + s.a));
      sol.u_star = -sol.lambda1 * lie.LgV.transpose();
      break;
    case RegionTag::kClfOnCbfOn2: {
      const double det = s.c * p.inverse() + s.gram;
      if (std::abs(det) < tol.det_floor) {
        throw InternalInconsistencyError("singular multiplier system with |Lgh|=" +
                                         std::to_string(s.lgh_norm));
      }
      // Same solution as λ1 = λ1num/Δ, λ2 = λ2num/Δ, evaluated in the frame
      // e = Lgh/‖Lgh‖, LgV = βe + LgV⊥. Where LgV and Lgh are nearly parallel
      // the multipliers are large and −λ1LgV + λ2Lgh cancels; here u is formed
      // from bounded terms instead. The CBF row fixes u·e = −Fh/‖Lgh‖ and the
      // slack solves δ(1 + p‖LgV⊥‖²) = FV + β·u·e.
      const RowVector e = lie.Lgh / s.lgh_norm;
      const double beta = lie.LgV.dot(e);
      RowVector perp = lie.LgV - beta * e;
      perp -= perp.dot(e) * e;  // second Gram-Schmidt pass; pδ·perp may be large
      const double ue = -lie.Fh / s.lgh_norm;
      const double delta =
          std::max(0.0, (lie.FV + beta * ue) / (1.0 + p.value() * perp.squaredNorm()));
      sol.u_star = (ue * e - p.value() * delta * perp).transpose();
      sol.lambda1 = p.value() * delta;
      sol.lambda2 = std::max(0.0, (ue + sol.lambda1 * beta) / s.lgh_norm);
      break;
    }
  }
  sol.delta = sol.lambda1 / p.value();
  return sol;
}

}  // namespace cbfqp
