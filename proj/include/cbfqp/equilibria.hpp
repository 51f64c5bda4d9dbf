#pragma once

// Location and classification of closed-loop equilibria of ẋ = f + g·u*(x),
// plus the p-dependent results on interior equilibria: the interior
// existence test f = pγ(V)·g·LgVᵀ, the confinement radius and the boundary
// persistence conditions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "cbfqp/closed_form_qp.hpp"
#include "cbfqp/model.hpp"
#include "cbfqp/numerics.hpp"

namespace cbfqp {

enum class EquilibriumKind { kOrigin, kInterior, kBoundary1, kBoundary2 };

inline constexpr std::string_view to_string(EquilibriumKind kind) {
  switch (kind) {
    case EquilibriumKind::kOrigin: return "Origin";
    case EquilibriumKind::kInterior: return "Interior";
    case EquilibriumKind::kBoundary1: return "Boundary1";
    case EquilibriumKind::kBoundary2: return "Boundary2";
  }
  return "?";
}

struct EquilibriumReport {
  State location;
  EquilibriumKind kind = EquilibriumKind::kInterior;
  double residual_norm = 0.0;
  RegionTag region = RegionTag::kClfOnCbfOff;
  double p = 1.0;
  double h = 0.0;
  double lgh_norm = 0.0;
  /// Fh + Lgh·u* at the root; zero when the CBF row is active.
  double cbf_residual = 0.0;
};

/// Regular grid over a box used to seed the root searches.
struct SearchGrid {
  Box box;
  std::vector<int> resolution;  // points per axis, ≥ 8
  double refinement_tolerance = 1e-6;

  void validate() const {
    box.validate();
    if (static_cast<Eigen::Index>(resolution.size()) != box.dim()) {
      throw ConfigurationError("grid resolution must list one count per axis");
    }
    for (int r : resolution) {
      if (r < 8) throw ConfigurationError("grid resolution must be at least 8 per axis");
    }
  }

  static SearchGrid uniform(Box box, int points_per_axis, double tol = 1e-6) {
    SearchGrid g{std::move(box), {}, tol};
    g.resolution.assign(static_cast<std::size_t>(g.box.dim()), points_per_axis);
    return g;
  }
};

struct EquilibriumSearchOptions {
  double seed_threshold = 1e-1;
  double dedup_radius = 1e-4;
  double origin_radius = 1e-6;
  double interior_h_min = 1e-8;
  double boundary_h_tol = 1e-6;
  double anomaly_h = -1e-6;
  bool search_boundary = true;
  NewtonOptions newton{};
  QPTolerances qp{};
};

struct EquilibriumSearch {
  std::vector<EquilibriumReport> equilibria;
  /// Converged roots outside the safe set (h < −1e-6); never expected.
  std::vector<EquilibriumReport> anomalies;
  /// Seed locations whose refinement failed with no root found nearby.
  std::vector<State> unresolved;

  std::size_t count(EquilibriumKind kind) const {
    return static_cast<std::size_t>(std::count_if(
        equilibria.begin(), equilibria.end(),
        [kind](const EquilibriumReport& r) { return r.kind == kind; }));
  }
};

/// f(x) + g(x)·u*(x) for the original program at weight p.
inline Vector closed_loop_residual(const DynamicsModel& model, const CertificatePair& certs,
                                   const QPWeight& p, const State& x,
                                   const QPTolerances& tol = {}) {
  const QPSolution sol = solve(lie_data(model, certs, x), p, tol);
  return model.field(x, sol.u_star);
}

namespace detail {

/// Flattened n-dimensional grid with neighbor enumeration.
class GridIndex {
 public:
  explicit GridIndex(const SearchGrid& grid) : grid_(grid) {
    grid_.validate();
    const auto n = grid_.box.dim();
    strides_.resize(static_cast<std::size_t>(n));
    std::size_t stride = 1;
    for (Eigen::Index i = 0; i < n; ++i) {
      strides_[static_cast<std::size_t>(i)] = stride;
      stride *= static_cast<std::size_t>(grid_.resolution[static_cast<std::size_t>(i)]);
    }
    size_ = stride;
  }

  std::size_t size() const { return size_; }

  std::vector<int> multi(std::size_t flat) const {
    std::vector<int> idx(strides_.size());
    for (std::size_t i = strides_.size(); i-- > 0;) {
      idx[i] = static_cast<int>(flat / strides_[i]);
      flat %= strides_[i];
    }
    return idx;
  }

  State point(std::size_t flat) const {
    const auto idx = multi(flat);
    State x(grid_.box.dim());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto ei = static_cast<Eigen::Index>(i);
      const double t = static_cast<double>(idx[i]) / (grid_.resolution[i] - 1);
      x(ei) = grid_.box.lower(ei) + t * (grid_.box.upper(ei) - grid_.box.lower(ei));
    }
    return x;
  }

  double cell_diagonal() const {
    double sq = 0.0;
    for (std::size_t i = 0; i < strides_.size(); ++i) {
      const auto ei = static_cast<Eigen::Index>(i);
      const double w = (grid_.box.upper(ei) - grid_.box.lower(ei)) / (grid_.resolution[i] - 1);
      sq += w * w;
    }
    return std::sqrt(sq);
  }

  /// All nodes in the 3ⁿ block around `flat`, excluding `flat` itself.
  template <typename Visit>
  void for_each_neighbor(std::size_t flat, Visit&& visit) const {
    const auto base = multi(flat);
    const std::size_t n = base.size();
    std::vector<int> offset(n, -1);
    while (true) {
      bool inside = true;
      bool self = true;
      std::size_t nb = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const int c = base[i] + offset[i];
        if (c < 0 || c >= grid_.resolution[i]) inside = false;
        if (offset[i] != 0) self = false;
        nb += static_cast<std::size_t>(std::max(c, 0)) * strides_[i];
      }
      if (inside && !self) visit(nb);
      std::size_t k = 0;
      while (k < n && offset[k] == 1) offset[k++] = -1;
      if (k == n) break;
      ++offset[k];
    }
  }

  /// Axis neighbors only (2n of them at most).
  template <typename Visit>
  void for_each_axis_neighbor(std::size_t flat, Visit&& visit) const {
    const auto base = multi(flat);
    for (std::size_t i = 0; i < base.size(); ++i) {
      if (base[i] > 0) visit(flat - strides_[i]);
      if (base[i] + 1 < grid_.resolution[i]) visit(flat + strides_[i]);
    }
  }

 private:
  SearchGrid grid_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 0;
};

/// Indices whose value is ≤ every neighbor value and below `threshold`.
inline std::vector<std::size_t> local_minima(const GridIndex& index,
                                             const std::vector<double>& values,
                                             const std::vector<bool>& mask, double threshold) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!mask[i] || !(values[i] < threshold)) continue;
    bool is_min = true;
    index.for_each_neighbor(i, [&](std::size_t nb) {
      if (mask[nb] && values[nb] < values[i]) is_min = false;
    });
    if (is_min) out.push_back(i);
  }
  return out;
}

/// Newton iteration on h alone, moving along ∇h, to land on h = 0.
inline std::optional<State> project_to_boundary(const ScalarCertificate& cbf, State x,
                                                int max_iterations = 60) {
  for (int it = 0; it < max_iterations; ++it) {
    const double hv = cbf(x);
    const Vector grad = cbf.grad(x);
    const double gg = grad.squaredNorm();
    if (gg <= 1e-18) return std::nullopt;
    if (std::abs(hv) <= 1e-13 * (1.0 + x.norm())) return x;
    x -= (hv / gg) * grad;
  }
  if (std::abs(cbf(x)) <= 1e-9) return x;
  return std::nullopt;
}

/// Orthonormal basis of the tangent space {v : ∇h·v = 0}.
inline Matrix boundary_tangent_basis(const ScalarCertificate& cbf, const State& x) {
  const Vector grad = cbf.grad(x);
  const auto n = grad.size();
  if (n == 1) return Matrix::Zero(1, 1);
  Eigen::HouseholderQR<Matrix> qr(grad);
  const Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  return q.rightCols(n - 1);
}

inline bool lex_less(const State& a, const State& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a(i) < b(i)) return true;
    if (a(i) > b(i)) return false;
  }
  return false;
}

/// Sort by location, then merge roots closer than `radius` keeping the one
/// with the smaller residual.
template <typename T, typename LocationOf, typename ScoreOf>
std::vector<T> deduplicate(std::vector<T> items, double radius, LocationOf loc, ScoreOf score) {
  std::stable_sort(items.begin(), items.end(),
                   [&](const T& a, const T& b) { return lex_less(loc(a), loc(b)); });
  std::vector<T> kept;
  for (auto& item : items) {
    bool merged = false;
    for (auto& k : kept) {
      if ((loc(k) - loc(item)).norm() <= radius) {
        if (score(item) < score(k)) k = item;
        merged = true;
        break;
      }
    }
    if (!merged) kept.push_back(std::move(item));
  }
  return kept;
}

}  // namespace detail

/// Builds the report for a converged root. Returns nullopt when the root
/// lies outside the safe set by more than `opt.anomaly_h` (reported
/// separately by the caller).
inline EquilibriumReport classify_equilibrium(const DynamicsModel& model,
                                              const CertificatePair& certs, const QPWeight& p,
                                              const State& x,
                                              const EquilibriumSearchOptions& opt = {}) {
  const LieData lie = lie_data(model, certs, x);
  const QPSolution sol = solve(lie, p, opt.qp);
  EquilibriumReport rep;
  rep.location = x;
  rep.p = p.value();
  rep.region = sol.region;
  rep.h = lie.h;
  rep.lgh_norm = lie.Lgh.norm();
  rep.residual_norm = model.field(x, sol.u_star).norm();
  rep.cbf_residual = sol.cbf_residual();
  if (x.norm() <= opt.origin_radius) {
    rep.kind = EquilibriumKind::kOrigin;
  } else if (std::abs(lie.h) <= opt.boundary_h_tol) {
    rep.kind = rep.lgh_norm <= opt.qp.lgh_zero ? EquilibriumKind::kBoundary1
                                               : EquilibriumKind::kBoundary2;
  } else {
    rep.kind = EquilibriumKind::kInterior;
  }
  return rep;
}

/// Grid-seeded search for the roots of the closed-loop field.
///
/// Interior pass: every grid node whose residual norm is a local minimum
/// below `seed_threshold` (plus the origin) seeds damped Newton on the full
/// residual. Boundary pass: nodes whose cell straddles h = 0 are projected
/// onto the boundary and, where the projected residual is locally minimal,
/// refined by Newton restricted to the boundary manifold.
inline EquilibriumSearch find_equilibria(const DynamicsModel& model, const CertificatePair& certs,
                                         const QPWeight& p, const SearchGrid& grid,
                                         const EquilibriumSearchOptions& opt = {}) {
  const detail::GridIndex index(grid);
  const std::size_t total = index.size();

  const ResidualFn residual = [&](const Vector& x) {
    return closed_loop_residual(model, certs, p, x, opt.qp);
  };
  const auto safe_norm = [&](const Vector& x) {
    try {
      return residual(x).norm();
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  std::vector<State> points(total);
  std::vector<double> res_norm(total);
  std::vector<double> h_val(total);
  for (std::size_t i = 0; i < total; ++i) {
    points[i] = index.point(i);
    res_norm[i] = safe_norm(points[i]);
    h_val[i] = certs.cbf(points[i]);
  }

  struct Seed {
    State start;
    bool boundary;
    /// Residual below `seed_threshold`; failure to refine is then reported.
    bool flagged;
  };
  std::vector<Seed> seeds;
  const std::vector<bool> everywhere(total, true);
  for (std::size_t i : detail::local_minima(index, res_norm, everywhere, opt.seed_threshold)) {
    seeds.push_back({points[i], false, true});
  }
  const State origin = State::Zero(model.n());
  if (grid.box.contains(origin)) seeds.push_back({origin, false, true});

  if (opt.search_boundary) {
    std::vector<bool> straddles(total, false);
    std::vector<double> boundary_norm(total, std::numeric_limits<double>::infinity());
    std::vector<State> projected(total);
    for (std::size_t i = 0; i < total; ++i) {
      bool crosses = false;
      index.for_each_axis_neighbor(i, [&](std::size_t nb) {
        if ((h_val[i] >= 0.0) != (h_val[nb] >= 0.0)) crosses = true;
      });
      if (!crosses) continue;
      const auto on_boundary = detail::project_to_boundary(certs.cbf, points[i]);
      if (!on_boundary) continue;
      straddles[i] = true;
      projected[i] = *on_boundary;
      boundary_norm[i] = safe_norm(*on_boundary);
    }
    // Every local minimum along the boundary seeds a refinement; the
    // boundary residual is not small at the nearest grid crossing in general.
    for (std::size_t i : detail::local_minima(index, boundary_norm, straddles,
                                              std::numeric_limits<double>::infinity())) {
      seeds.push_back({projected[i], true, boundary_norm[i] < opt.seed_threshold});
    }
  }

  NewtonOptions boundary_newton = opt.newton;
  boundary_newton.project = [&](const Vector& x) -> Vector {
    const auto proj = detail::project_to_boundary(certs.cbf, x);
    return proj ? *proj : x;
  };
  boundary_newton.tangent_basis = [&](const Vector& x) {
    return detail::boundary_tangent_basis(certs.cbf, x);
  };

  std::vector<EquilibriumReport> roots;
  std::vector<EquilibriumReport> anomalies;
  std::vector<State> failed_seeds;
  const double box_margin = 1e-9 * (grid.box.upper - grid.box.lower).norm();
  for (const Seed& seed : seeds) {
    NewtonResult nr;
    try {
      nr = damped_newton(residual, seed.start, seed.boundary ? boundary_newton : opt.newton);
    } catch (const Error&) {
      if (seed.flagged) failed_seeds.push_back(seed.start);
      continue;
    }
    const bool in_box = ((nr.x - grid.box.lower).array() >= -box_margin).all() &&
                        ((grid.box.upper - nr.x).array() >= -box_margin).all();
    if (nr.residual_norm > grid.refinement_tolerance || !in_box) {
      if (seed.flagged) failed_seeds.push_back(seed.start);
      continue;
    }
    EquilibriumReport rep = classify_equilibrium(model, certs, p, nr.x, opt);
    if (rep.h < opt.anomaly_h) {
      anomalies.push_back(std::move(rep));
    } else {
      roots.push_back(std::move(rep));
    }
  }

  const auto loc = [](const EquilibriumReport& r) -> const State& { return r.location; };
  const auto score = [](const EquilibriumReport& r) { return r.residual_norm; };
  EquilibriumSearch out;
  out.equilibria = detail::deduplicate(std::move(roots), opt.dedup_radius, loc, score);
  out.anomalies = detail::deduplicate(std::move(anomalies), opt.dedup_radius, loc, score);

  const double explain_radius = 2.0 * index.cell_diagonal();
  for (const State& s : failed_seeds) {
    const bool explained = std::any_of(
        out.equilibria.begin(), out.equilibria.end(),
        [&](const EquilibriumReport& r) { return (r.location - s).norm() <= explain_radius; });
    if (!explained) out.unresolved.push_back(s);
  }
  out.unresolved = detail::deduplicate(
      std::move(out.unresolved), 0.5 * index.cell_diagonal(),
      [](const State& s) -> const State& { return s; }, [](const State&) { return 0.0; });
  return out;
}

struct InteriorCertificate {
  /// True when no non-origin interior state of the ClfOn-CbfOff domain
  /// satisfies f = pγ(V)·g·LgVᵀ on the searched grid.
  bool holds = true;
  std::vector<State> witnesses;
};

/// f − pγ(V)·g·LgVᵀ; its zeros inside the safe set and the ClfOn-CbfOff
/// domain are exactly the interior equilibria.
inline Vector interior_condition_residual(const DynamicsModel& model,
                                          const CertificatePair& certs, const QPWeight& p,
                                          const State& x) {
  const Vector f = model.drift(x);
  const Matrix g = model.input_map(x);
  const Vector grad_v = certs.clf.grad(x);
  const RowVector lgv = grad_v.transpose() * g;
  return f - p.value() * certs.gamma(certs.clf(x)) * (g * lgv.transpose());
}

inline InteriorCertificate interior_certificate(const DynamicsModel& model,
                                                const CertificatePair& certs, const QPWeight& p,
                                                const SearchGrid& grid,
                                                const EquilibriumSearchOptions& opt = {}) {
  const detail::GridIndex index(grid);
  const std::size_t total = index.size();
  const ResidualFn residual = [&](const Vector& x) {
    return interior_condition_residual(model, certs, p, x);
  };

  std::vector<State> points(total);
  std::vector<double> norms(total);
  std::vector<bool> interior(total);
  for (std::size_t i = 0; i < total; ++i) {
    points[i] = index.point(i);
    try {
      norms[i] = residual(points[i]).norm();
      interior[i] = certs.cbf(points[i]) > 0.0;
    } catch (const Error&) {
      norms[i] = std::numeric_limits<double>::infinity();
      interior[i] = false;
    }
  }

  std::vector<State> witnesses;
  // Every interior local minimum seeds a refinement: the scale of f − pγ(V)gLgVᵀ
  // differs from the closed-loop residual, so no absolute threshold is used.
  const double no_threshold = std::numeric_limits<double>::infinity();
  for (std::size_t i : detail::local_minima(index, norms, interior, no_threshold)) {
    NewtonResult nr;
    try {
      nr = damped_newton(residual, points[i], opt.newton);
    } catch (const Error&) {
      continue;
    }
    if (nr.residual_norm > grid.refinement_tolerance) continue;
    if (nr.x.norm() <= opt.dedup_radius) continue;  // the origin
    if (!grid.box.contains(nr.x)) continue;
    const LieData lie = lie_data(model, certs, nr.x);
    if (!(lie.h > opt.interior_h_min)) continue;
    if (classify_region(lie, p, opt.qp) != RegionTag::kClfOnCbfOff) continue;
    witnesses.push_back(nr.x);
  }
  InteriorCertificate out;
  out.witnesses = detail::deduplicate(
      std::move(witnesses), opt.dedup_radius, [](const State& s) -> const State& { return s; },
      [](const State&) { return 0.0; });
  out.holds = out.witnesses.empty();
  return out;
}

/// Radius γ1⁻¹(v̄/p) bounding every interior equilibrium, where
/// γ1(‖x‖) ≤ γ(V(x)) and v̄ = sup LfV / (LgV LgVᵀ). For v̄ ≤ 0 no non-origin
/// interior equilibrium can exist and the radius is 0.
inline double confinement_bound(double v_bar, const std::function<double(double)>& gamma1_inverse,
                                const QPWeight& p) {
  if (!std::isfinite(v_bar)) {
    throw BoundUnavailableError("confinement radius needs a finite sup ratio");
  }
  if (!gamma1_inverse) throw BoundUnavailableError("no inverse comparison function supplied");
  if (v_bar <= 0.0) return 0.0;
  const double r = gamma1_inverse(v_bar / p.value());
  if (!std::isfinite(r)) throw BoundUnavailableError("inverse comparison function not finite");
  return r;
}

struct SupRatioEstimate {
  /// Maximum of LfV / (LgV LgVᵀ) over the usable sample; a lower estimate
  /// of the true supremum.
  double value = -std::numeric_limits<double>::infinity();
  State argmax;
  std::size_t used = 0;
  std::size_t skipped = 0;
};

inline SupRatioEstimate sup_ratio_estimate(const DynamicsModel& model,
                                           const CertificatePair& certs,
                                           std::span<const State> sample,
                                           double lgv_floor = 1e-9) {
  SupRatioEstimate est;
  for (const State& x : sample) {
    const LieData lie = lie_data(model, certs, x);
    const double denom = lie.LgV.squaredNorm();
    if (x.norm() == 0.0 || std::sqrt(denom) <= lgv_floor) {
      ++est.skipped;
      continue;
    }
    const double ratio = lie.LfV / denom;
    if (est.used == 0 || ratio > est.value) {
      est.value = ratio;
      est.argmax = x;
    }
    ++est.used;
  }
  if (est.used == 0) {
    throw EstimateUnavailableError("every sampled state had a vanishing LgV");
  }
  return est;
}

inline SupRatioEstimate sup_ratio_estimate(const DynamicsModel& model,
                                           const CertificatePair& certs, const Box& box,
                                           std::size_t budget, std::uint64_t seed) {
  BoxSampler sampler(box, seed);
  const auto sample = sampler.draw(budget);
  return sup_ratio_estimate(model, certs, std::span<const State>(sample));
}

struct PersistenceCheck {
  /// All three conditions hold; the boundary equilibrium then exists for
  /// every p > 0.
  bool persistent = false;
  bool membership = false;         // root in the ClfOn-CbfOn2 domain at some probe p
  bool parallel_gradients = false; // ∇V = k∇h with k > 0
  bool drift_condition = false;    // Lfh ≤ 0
  std::optional<double> witness_p;
  double k = 0.0;
  double angle = 0.0;
  double lfh = 0.0;
};

struct PersistenceOptions {
  std::vector<double> probe_p = {0.1, 1.0, 10.0, 100.0};
  double boundary_tol = 1e-6;
  double residual_tol = 1e-6;
  double angle_tol = 1e-6;
  double lfh_tol = 1e-9;
  double gradient_floor = 1e-9;
};

inline PersistenceCheck boundary_persistence_check(const DynamicsModel& model,
                                                   const CertificatePair& certs,
                                                   const State& x_eq,
                                                   const PersistenceOptions& opt = {}) {
  const double hv = certs.cbf(x_eq);
  if (std::abs(hv) > opt.boundary_tol) {
    throw PreconditionError("state is not on the safe-set boundary (h=" + std::to_string(hv) +
                            ")");
  }
  const Vector grad_h = certs.cbf.grad(x_eq);
  const Vector grad_v = certs.clf.grad(x_eq);
  if (grad_h.norm() <= opt.gradient_floor) {
    throw IndeterminateError("barrier gradient vanishes at the candidate");
  }

  PersistenceCheck out;
  for (double pv : opt.probe_p) {
    const QPWeight p(pv);
    const LieData lie = lie_data(model, certs, x_eq);
    const QPSolution sol = solve(lie, p);
    const double res = model.field(x_eq, sol.u_star).norm();
    if (res <= opt.residual_tol && sol.region == RegionTag::kClfOnCbfOn2) {
      out.membership = true;
      out.witness_p = pv;
      break;
    }
  }

  const double gv = grad_v.norm();
  if (gv > 0.0) {
    const double cosine = std::clamp(grad_v.dot(grad_h) / (gv * grad_h.norm()), -1.0, 1.0);
    out.angle = std::acos(cosine);
    out.k = grad_v.dot(grad_h) / grad_h.squaredNorm();
    out.parallel_gradients = out.angle <= opt.angle_tol && out.k > 0.0;
  } else {
    out.angle = std::numbers::pi / 2;
  }

  out.lfh = grad_h.dot(model.drift(x_eq));
  out.drift_condition = out.lfh <= opt.lfh_tol;
  out.persistent = out.membership && out.parallel_gradients && out.drift_condition;
  return out;
}

}  // namespace cbfqp
