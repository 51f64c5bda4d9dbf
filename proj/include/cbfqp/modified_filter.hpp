#pragma once

// Modified formulation: a CLF-compatible nominal feedback u_nom is folded into
// the drift, f′ = f + g·u_nom, and the QP only computes the correction u′.
// The applied input is u_nom + u′.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cbfqp/closed_form_qp.hpp"
#include "cbfqp/model.hpp"
#include "cbfqp/numerics.hpp"

namespace cbfqp {

enum class NominalProvenance { kUserSupplied, kSontag };

inline constexpr std::string_view to_string(NominalProvenance p) {
  return p == NominalProvenance::kSontag ? "sontag" : "user-supplied";
}

struct NominalController {
  std::function<ControlInput(const State&)> eval;
  NominalProvenance provenance = NominalProvenance::kUserSupplied;

  ControlInput operator()(const State& x) const {
    ControlInput u = eval(x);
    if (!u.allFinite()) throw NumericDomainError("nominal controller is not finite");
    return u;
  }

  /// u_nom(x) = K x.
  static NominalController linear(Matrix gain) {
    return {[gain = std::move(gain)](const State& x) -> ControlInput { return gain * x; },
            NominalProvenance::kUserSupplied};
  }
};

/// Seeded uniform sample over a box.
struct SamplingConfig {
  Box box;
  std::size_t count = 10000;
  std::uint64_t seed = 7;
};

struct NominalCheck {
  /// max over the sample of LfV + LgV·u_nom + γ(V).
  double worst = -std::numeric_limits<double>::infinity();
  State worst_state;
  std::size_t count = 0;
};

/// Evaluates the CLF condition for `nominal` on the sample. Does not throw on
/// violation; see `require_clf_compatible`.
inline NominalCheck check_nominal(const DynamicsModel& model, const CertificatePair& certs,
                                  const NominalController& nominal,
                                  const SamplingConfig& sampling) {
  BoxSampler sampler(sampling.box, sampling.seed);
  NominalCheck out;
  for (std::size_t i = 0; i < sampling.count; ++i) {
    const State x = sampler();
    const LieData lie = lie_data(model, certs, x);
    const double v = lie.FV + lie.LgV.dot(nominal(x));
    if (out.count == 0 || v > out.worst) {
      out.worst = v;
      out.worst_state = x;
    }
    ++out.count;
  }
  return out;
}

inline void require_clf_compatible(const DynamicsModel& model, const CertificatePair& certs,
                                   const NominalController& nominal,
                                   const SamplingConfig& sampling, double tol = 1e-8) {
  const NominalCheck chk = check_nominal(model, certs, nominal, sampling);
  if (chk.count > 0 && chk.worst > tol) {
    std::string where;
    for (Eigen::Index i = 0; i < chk.worst_state.size(); ++i) {
      where += (i ? "," : "") + std::to_string(chk.worst_state(i));
    }
    throw NominalRejectedError("nominal controller violates the CLF condition by " +
                               std::to_string(chk.worst) + " at (" + where + ")");
  }
}

/// Universal formula
///   u = −[(LfV + √(LfV² + ‖LgV‖⁴)) / ‖LgV‖²]·LgVᵀ,  u = 0 where ‖LgV‖ ≤ 1e-9.
inline ControlInput sontag_formula(const DynamicsModel& model, const CertificatePair& certs,
                                   const State& x) {
  const Vector grad_v = certs.clf.grad(x);
  const RowVector lgv = grad_v.transpose() * model.input_map(x);
  const double a = lgv.squaredNorm();
  if (std::sqrt(a) <= 1e-9) return ControlInput::Zero(model.m());
  const double lfv = grad_v.dot(model.drift(x));
  const double gain = (lfv + std::sqrt(lfv * lfv + a * a)) / a;
  return -gain * lgv.transpose();
}

/// Sontag feedback for the scenario, accepted only if it meets the CLF
/// condition (with the scenario's γ) on the sample.
inline NominalController sontag_nominal(const DynamicsModel& model, const CertificatePair& certs,
                                        const SamplingConfig& sampling) {
  NominalController nominal{
      [model, certs](const State& x) { return sontag_formula(model, certs, x); },
      NominalProvenance::kSontag};
  require_clf_compatible(model, certs, nominal, sampling);
  return nominal;
}

/// Plant with the nominal feedback absorbed into the drift.
class TransformedModel {
 public:
  TransformedModel(DynamicsModel base, NominalController nominal)
      : base_(std::move(base)),
        nominal_(std::move(nominal)),
        model_(base_.n(), base_.m(),
               [b = base_, u = nominal_](const State& x) -> Vector {
                 return b.drift(x) + b.input_map(x) * u(x);
               },
               [b = base_](const State& x) { return b.input_map(x); }) {
    if (!nominal_.eval) throw ConfigurationError("nominal controller is empty");
  }

  const DynamicsModel& base() const { return base_; }
  const NominalController& nominal() const { return nominal_; }
  /// The model ẋ = f′(x) + g(x)u′ on which the QP acts.
  const DynamicsModel& as_model() const { return model_; }

  Vector drift(const State& x) const { return model_.drift(x); }

 private:
  DynamicsModel base_;
  NominalController nominal_;
  DynamicsModel model_;
};

inline TransformedModel transform(const DynamicsModel& model, const NominalController& nominal) {
  return TransformedModel(model, nominal);
}

/// QP solution for the correction u′ on the transformed model.
inline QPSolution filtered_solution(const TransformedModel& tmodel, const CertificatePair& certs,
                                    const QPWeight& p, const State& x,
                                    const QPTolerances& tol = {}) {
  return solve(lie_data(tmodel.as_model(), certs, x), p, tol);
}

/// u_nom(x) + u′(x).
inline ControlInput filtered_control(const TransformedModel& tmodel, const CertificatePair& certs,
                                     const QPWeight& p, const State& x,
                                     const QPTolerances& tol = {}) {
  return tmodel.nominal()(x) + filtered_solution(tmodel, certs, p, x, tol).u_star;
}

struct LipschitzReport {
  /// Condition (i): Lgh bounded away from zero. Evidence is the smallest
  /// ‖Lgh‖ found by sampling followed by local minimization.
  bool condition_i = false;
  double min_lgh_norm = std::numeric_limits<double>::infinity();
  State min_lgh_state;
  /// Condition (ii): M = {Fh = 0, Lgh = 0} is empty. Evidence is the smallest
  /// ‖(Fh, Lgh)‖ found the same way.
  bool condition_ii = false;
  double min_m_residual = std::numeric_limits<double>::infinity();
  State min_m_state;
  std::size_t samples = 0;
};

namespace detail {

/// Indices of the `k` smallest entries.
inline std::vector<std::size_t> smallest(const std::vector<double>& v, std::size_t k) {
  std::vector<std::size_t> idx(v.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  idx.resize(k);
  return idx;
}

}  // namespace detail

/// Sampled evidence for the two sufficient conditions of local Lipschitz
/// continuity of u*. Advisory: sampling cannot prove emptiness.
inline LipschitzReport lipschitz_precondition(const DynamicsModel& model,
                                              const CertificatePair& certs,
                                              const SamplingConfig& sampling,
                                              double zero_tol = 1e-6, std::size_t seeds = 32) {
  if (sampling.count < 10000) {
    throw ConfigurationError("Lipschitz precondition needs at least 10^4 samples");
  }
  BoxSampler sampler(sampling.box, sampling.seed);
  const auto sample = sampler.draw(sampling.count);

  const ResidualFn lgh_fn = [&](const Vector& x) -> Vector {
    return lie_data(model, certs, x).Lgh.transpose();
  };
  const ResidualFn m_fn = [&](const Vector& x) -> Vector {
    const LieData lie = lie_data(model, certs, x);
    Vector r(1 + lie.m());
    r << lie.Fh, lie.Lgh.transpose();
    return r;
  };

  std::vector<double> lgh_norm(sample.size());
  std::vector<double> m_norm(sample.size());
  for (std::size_t i = 0; i < sample.size(); ++i) {
    lgh_norm[i] = lgh_fn(sample[i]).norm();
    m_norm[i] = m_fn(sample[i]).norm();
  }

  LipschitzReport rep;
  rep.samples = sample.size();
  const auto refine = [&](const ResidualFn& fn, const std::vector<double>& norms, double& best,
                          State& best_state) {
    for (std::size_t i : detail::smallest(norms, seeds)) {
      if (norms[i] < best) {
        best = norms[i];
        best_state = sample[i];
      }
      NewtonResult nr;
      try {
        nr = damped_newton(fn, sample[i]);
      } catch (const Error&) {
        continue;
      }
      if (nr.residual_norm < best) {
        best = nr.residual_norm;
        best_state = nr.x;
      }
    }
  };
  refine(lgh_fn, lgh_norm, rep.min_lgh_norm, rep.min_lgh_state);
  refine(m_fn, m_norm, rep.min_m_residual, rep.min_m_state);
  rep.condition_i = rep.min_lgh_norm > zero_tol;
  rep.condition_ii = rep.min_m_residual > zero_tol;
  return rep;
}

inline LipschitzReport lipschitz_precondition(const TransformedModel& tmodel,
                                              const CertificatePair& certs,
                                              const SamplingConfig& sampling) {
  return lipschitz_precondition(tmodel.as_model(), certs, sampling);
}

struct RoaOptions {
  Box box;
  /// Accepted samples per tested level.
  std::size_t min_accepted = 10000;
  /// Draw budget per level, as a multiple of `min_accepted`.
  std::size_t max_draw_factor = 1000;
  double relative_tolerance = 1e-3;
  int max_bisections = 80;
  std::uint64_t seed = 7;
};

struct RoaEstimate {
  double eta = 0.0;
  /// √(2η/c) when V = ½c‖x‖².
  std::optional<double> sampled_radius;
  std::size_t sample_count = 0;
  int levels_tested = 0;
  /// A point of the doubly active domain found at the smallest failing level.
  std::optional<State> blocking_point;
};

namespace detail {

/// Corner of `box` maximizing V; exact for convex V.
inline double box_sup(const ScalarCertificate& v, const Box& box) {
  const auto n = box.dim();
  double best = -std::numeric_limits<double>::infinity();
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    State x(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      x(i) = (mask >> i) & 1 ? box.upper(i) : box.lower(i);
    }
    best = std::max(best, v(x));
  }
  return best;
}

/// Bounding box of {½xᵀPx ≤ a} clipped to `box`; nullopt when empty.
inline std::optional<Box> level_box(const ScalarCertificate& v, double a, const Box& box) {
  if (!v.quadratic_form) return box;
  const Matrix p_inv = v.quadratic_form->inverse();
  Box out = box;
  for (Eigen::Index i = 0; i < box.dim(); ++i) {
    const double half = std::sqrt(2.0 * a * p_inv(i, i));
    out.lower(i) = std::max(box.lower(i), -half);
    out.upper(i) = std::min(box.upper(i), half);
    if (!(out.upper(i) > out.lower(i))) return std::nullopt;
  }
  return out;
}

inline std::optional<double> spherical_scale(const ScalarCertificate& v) {
  if (!v.quadratic_form) return std::nullopt;
  const Matrix& p = *v.quadratic_form;
  const double c = p(0, 0);
  if (!(c > 0.0)) return std::nullopt;
  const Matrix diff = p - c * Matrix::Identity(p.rows(), p.cols());
  if (diff.cwiseAbs().maxCoeff() > 1e-12 * c) return std::nullopt;
  return c;
}

}  // namespace detail

/// Largest level η such that the sampled set {V ≤ η} ∩ box contains no point
/// of the ClfOn-CbfOn2 domain of the transformed QP, found by bisection.
inline RoaEstimate estimate_roa(const TransformedModel& tmodel, const CertificatePair& certs,
                                const QPWeight& p, const RoaOptions& opt,
                                const QPTolerances& tol = {}) {
  opt.box.validate();
  const DynamicsModel& model = tmodel.as_model();
  RoaEstimate est;

  // Returns the first hit, or nullopt when the level is clean.
  const auto probe = [&](double level) -> std::optional<State> {
    const auto sub = detail::level_box(certs.clf, level, opt.box);
    if (!sub) {
      throw EstimateUnavailableError("level " + std::to_string(level) + " misses the box");
    }
    BoxSampler sampler(*sub, opt.seed);
    std::size_t accepted = 0;
    const std::size_t budget = opt.min_accepted * opt.max_draw_factor;
    for (std::size_t draws = 0; accepted < opt.min_accepted; ++draws) {
      if (draws >= budget) {
        throw EstimateUnavailableError("level " + std::to_string(level) +
                                       " could not be populated by rejection sampling");
      }
      const State x = sampler();
      if (certs.clf(x) > level) continue;
      ++accepted;
      if (classify_region(lie_data(model, certs, x), p, tol) == RegionTag::kClfOnCbfOn2) {
        est.sample_count += accepted;
        return x;
      }
    }
    est.sample_count += accepted;
    return std::nullopt;
  };

  double hi = detail::box_sup(certs.clf, opt.box);
  if (!(hi > 0.0) || !std::isfinite(hi)) {
    throw EstimateUnavailableError("V has no positive supremum on the box");
  }
  ++est.levels_tested;
  auto hit = probe(hi);
  if (!hit) {
    est.eta = hi;
  } else {
    est.blocking_point = hit;
    double lo = 0.0;
    for (int it = 0; it < opt.max_bisections && hi - lo > opt.relative_tolerance * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      ++est.levels_tested;
      hit = probe(mid);
      if (hit) {
        hi = mid;
        est.blocking_point = hit;
      } else {
        lo = mid;
      }
    }
    if (!(lo > 0.0)) {
      throw EstimateUnavailableError("doubly active domain reaches every sampled level");
    }
    est.eta = lo;
  }
  if (const auto c = detail::spherical_scale(certs.clf)) {
    est.sampled_radius = std::sqrt(2.0 * est.eta / *c);
  }
  return est;
}

}  // namespace cbfqp
