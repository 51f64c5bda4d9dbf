#pragma once

// Fixed-step RK4 integration of the closed loop under the original or the
// modified controller, with per-sample QP diagnostics.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cbfqp/closed_form_qp.hpp"
#include "cbfqp/modified_filter.hpp"
#include "cbfqp/scenarios.hpp"

namespace cbfqp {

enum class ControllerMode { kOriginal, kModified };

inline constexpr std::string_view to_string(ControllerMode mode) {
  return mode == ControllerMode::kOriginal ? "original" : "modified";
}

struct IntegratorConfig {
  double step = 1e-3;
  double horizon = 20.0;
  double convergence_radius = 1e-3;
  int convergence_window = 100;
  /// Trajectories dipping below h = −10·safety_tolerance are flagged.
  double safety_tolerance = 1e-3;

  void validate() const {
    if (!(step > 0.0) || !(horizon > 0.0) || !(convergence_radius > 0.0) ||
        convergence_window < 1 || !(safety_tolerance > 0.0)) {
      throw ConfigurationError("integrator settings must be positive");
    }
    if (step > horizon) throw ConfigurationError("integrator step exceeds the horizon");
  }
  int steps() const { return static_cast<int>(std::llround(horizon / step)); }
};

enum class TerminalKind { kHorizon, kConvergedTo, kSafetyAnomaly };

inline constexpr std::string_view to_string(TerminalKind kind) {
  switch (kind) {
    case TerminalKind::kHorizon: return "horizon";
    case TerminalKind::kConvergedTo: return "converged-to";
    case TerminalKind::kSafetyAnomaly: return "safety-anomaly";
  }
  return "?";
}

struct Trajectory {
  std::vector<double> times;
  std::vector<State> states;
  /// Applied input (u* for the original controller, u_nom + u′ otherwise).
  std::vector<ControlInput> inputs;
  std::vector<double> v_values;
  std::vector<double> h_values;
  std::vector<double> deltas;
  std::vector<double> lambda1;
  std::vector<double> lambda2;
  std::vector<RegionTag> regions;

  TerminalKind terminal = TerminalKind::kHorizon;
  /// Window mean when `terminal` is converged-to.
  State converged_to;
  /// Set when a controller evaluation failed; the trajectory stops there.
  std::string error;

  std::size_t size() const { return times.size(); }
  const State& final_state() const { return states.back(); }
  bool converged() const { return terminal == TerminalKind::kConvergedTo; }
  double min_h() const {
    double m = std::numeric_limits<double>::infinity();
    for (double h : h_values) m = std::min(m, h);
    return m;
  }
};

/// Feedback of one controller mode at one weight.
class ClosedLoop {
 public:
  struct Output {
    ControlInput u;
    QPSolution qp;
  };

  /// The modified mode uses the scenario's nominal controller, falling back
  /// to a verified Sontag feedback when none is given.
  ClosedLoop(const Scenario& scenario, ControllerMode mode, double p)
      : model_(scenario.model), certs_(scenario.certs), mode_(mode), p_(p) {
    if (mode_ == ControllerMode::kModified) {
      const NominalController nominal =
          scenario.nominal ? *scenario.nominal
                           : sontag_nominal(scenario.model, scenario.certs,
                                            SamplingConfig{scenario.box, 10000, 7});
      transformed_.emplace(scenario.model, nominal);
    }
  }

  Output operator()(const State& x) const {
    Output out;
    if (transformed_) {
      out.qp = filtered_solution(*transformed_, certs_, p_, x);
      out.u = transformed_->nominal()(x) + out.qp.u_star;
    } else {
      out.qp = solve(lie_data(model_, certs_, x), p_);
      out.u = out.qp.u_star;
    }
    return out;
  }

  Vector field(const State& x) const { return model_.field(x, (*this)(x).u); }

  const DynamicsModel& model() const { return model_; }
  const CertificatePair& certs() const { return certs_; }
  ControllerMode mode() const { return mode_; }
  const QPWeight& weight() const { return p_; }

  /// Model seen by the QP (transformed in the modified mode).
  const DynamicsModel& qp_model() const { return transformed_ ? transformed_->as_model() : model_; }

 private:
  DynamicsModel model_;
  CertificatePair certs_;
  ControllerMode mode_;
  QPWeight p_;
  std::optional<TransformedModel> transformed_;
};

inline Trajectory integrate(const ClosedLoop& loop, const State& x0,
                            const IntegratorConfig& cfg = {}) {
  cfg.validate();
  loop.model().check_state(x0);
  const int steps = cfg.steps();
  const double dt = cfg.step;

  Trajectory tr;
  const auto reserve = static_cast<std::size_t>(steps) + 1;
  tr.times.reserve(reserve);
  tr.states.reserve(reserve);
  tr.inputs.reserve(reserve);

  const auto record = [&](double t, const State& x, const ClosedLoop::Output& out) {
    tr.times.push_back(t);
    tr.states.push_back(x);
    tr.inputs.push_back(out.u);
    tr.v_values.push_back(out.qp.lie.V);
    tr.h_values.push_back(out.qp.lie.h);
    tr.deltas.push_back(out.qp.delta);
    tr.lambda1.push_back(out.qp.lambda1);
    tr.lambda2.push_back(out.qp.lambda2);
    tr.regions.push_back(out.qp.region);
  };

  State x = x0;
  try {
    ClosedLoop::Output out = loop(x);
    record(0.0, x, out);
    const DynamicsModel& model = loop.model();
    for (int k = 0; k < steps; ++k) {
      const Vector k1 = model.field(x, out.u);
      const Vector k2 = loop.field(x + 0.5 * dt * k1);
      const Vector k3 = loop.field(x + 0.5 * dt * k2);
      const Vector k4 = loop.field(x + dt * k3);
      x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      out = loop(x);
      record((k + 1) * dt, x, out);
    }
  } catch (const Error& e) {
    tr.error = e.what();
  }

  if (tr.min_h() < -10.0 * cfg.safety_tolerance) {
    tr.terminal = TerminalKind::kSafetyAnomaly;
  } else if (tr.error.empty() &&
             tr.states.size() >= static_cast<std::size_t>(cfg.convergence_window)) {
    const auto first = tr.states.end() - cfg.convergence_window;
    State mean = State::Zero(x0.size());
    for (auto it = first; it != tr.states.end(); ++it) mean += *it;
    mean /= cfg.convergence_window;
    bool settled = true;
    for (auto it = first; it != tr.states.end() && settled; ++it) {
      settled = (*it - mean).norm() <= cfg.convergence_radius;
    }
    if (settled) {
      tr.terminal = TerminalKind::kConvergedTo;
      tr.converged_to = mean;
    }
  }
  return tr;
}

inline Trajectory integrate(const Scenario& scenario, ControllerMode mode, double p,
                            const State& x0, const IntegratorConfig& cfg = {}) {
  return integrate(ClosedLoop(scenario, mode, p), x0, cfg);
}

/// Independent runs from each start, in order.
inline std::vector<Trajectory> batch(const Scenario& scenario, ControllerMode mode, double p,
                                     const std::vector<State>& starts,
                                     const IntegratorConfig& cfg = {}) {
  std::vector<Trajectory> out;
  if (starts.empty()) return out;
  const ClosedLoop loop(scenario, mode, p);
  out.reserve(starts.size());
  for (const State& x0 : starts) out.push_back(integrate(loop, x0, cfg));
  return out;
}

}  // namespace cbfqp
