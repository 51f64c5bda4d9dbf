#pragma once

// Control-affine plant  ẋ = f(x) + g(x)u  together with the Lyapunov/barrier
// certificate pair and the Lie-derivative data that every solver consumes.

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "cbfqp/errors.hpp"

namespace cbfqp {

using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Matrix = Eigen::MatrixXd;
using State = Eigen::VectorXd;
using ControlInput = Eigen::VectorXd;

namespace detail {

inline bool all_finite(const Eigen::Ref<const Matrix>& a) {
  return a.allFinite();
}

inline std::string dims(Eigen::Index rows, Eigen::Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

}  // namespace detail

/// Evaluators for the drift f and the input matrix g of ẋ = f(x) + g(x)u.
/// Every evaluation is checked for shape and finiteness.
class DynamicsModel {
 public:
  using DriftFn = std::function<Vector(const State&)>;
  using InputMapFn = std::function<Matrix(const State&)>;

  DynamicsModel(int n, int m, DriftFn drift, InputMapFn input_map)
      : n_(n), m_(m), drift_(std::move(drift)), input_map_(std::move(input_map)) {
    if (n_ < 1 || m_ < 1) {
      throw ConfigurationError("dynamics model needs n >= 1 and m >= 1, got n=" +
                               std::to_string(n_) + " m=" + std::to_string(m_));
    }
    if (!drift_ || !input_map_) {
      throw ConfigurationError("dynamics model requires both drift and input map");
    }
  }

  int n() const { return n_; }
  int m() const { return m_; }

  Vector drift(const State& x) const {
    check_state(x);
    Vector f = drift_(x);
    if (f.size() != n_) {
      throw ConfigurationError("drift returned " + std::to_string(f.size()) +
                               " entries, expected " + std::to_string(n_));
    }
    if (!f.allFinite()) throw NumericDomainError("drift is not finite");
    return f;
  }

  Matrix input_map(const State& x) const {
    check_state(x);
    Matrix g = input_map_(x);
    if (g.rows() != n_ || g.cols() != m_) {
      throw ConfigurationError("input map returned " + detail::dims(g.rows(), g.cols()) +
                               ", expected " + detail::dims(n_, m_));
    }
    if (!g.allFinite()) throw NumericDomainError("input map is not finite");
    return g;
  }

  /// f(x) + g(x)u.
  Vector field(const State& x, const ControlInput& u) const {
    if (u.size() != m_) {
      throw ConfigurationError("control input has " + std::to_string(u.size()) +
                               " entries, expected " + std::to_string(m_));
    }
    return drift(x) + input_map(x) * u;
  }

  void check_state(const State& x) const {
    if (x.size() != n_) {
      throw ConfigurationError("state has " + std::to_string(x.size()) +
                               " entries, expected " + std::to_string(n_));
    }
    if (!x.allFinite()) throw NumericDomainError("state is not finite");
  }

 private:
  int n_;
  int m_;
  DriftFn drift_;
  InputMapFn input_map_;
};

/// Scalar function of the state with an analytic gradient (V or h).
///
/// When the function is a pure quadratic form V = ½ xᵀPx, `quadratic_form`
/// carries P so that sublevel sets can be bounded in closed form.
struct ScalarCertificate {
  std::function<double(const State&)> value;
  std::function<Vector(const State&)> gradient;
  std::optional<Matrix> quadratic_form;

  double operator()(const State& x) const {
    const double v = value(x);
    if (!std::isfinite(v)) throw NumericDomainError("certificate value is not finite");
    return v;
  }

  Vector grad(const State& x) const {
    Vector d = gradient(x);
    if (d.size() != x.size()) {
      throw ConfigurationError("certificate gradient has " + std::to_string(d.size()) +
                               " entries, expected " + std::to_string(x.size()));
    }
    if (!d.allFinite()) throw NumericDomainError("certificate gradient is not finite");
    return d;
  }
};

enum class ComparisonKind { kClassK, kExtendedClassK };

/// Strictly increasing scalar map with value 0 at 0 (γ for the CLF, α for the
/// CBF).
struct ComparisonFunction {
  std::function<double(double)> eval;
  ComparisonKind kind = ComparisonKind::kExtendedClassK;

  double operator()(double s) const {
    const double v = eval(s);
    if (!std::isfinite(v)) throw NumericDomainError("comparison function is not finite");
    return v;
  }

  static ComparisonFunction linear(double slope, ComparisonKind kind) {
    if (!(slope > 0.0) || !std::isfinite(slope)) {
      throw ConfigurationError("linear comparison function needs a positive finite slope");
    }
    return {[slope](double s) { return slope * s; }, kind};
  }
};

/// CLF V with its class-K rate γ and CBF h with its extended class-K rate α.
struct CertificatePair {
  ScalarCertificate clf;
  ComparisonFunction gamma;
  ScalarCertificate cbf;
  ComparisonFunction alpha;
};

/// Certificate values and Lie derivatives at one state.
struct LieData {
  double V = 0.0;
  double h = 0.0;
  double LfV = 0.0;
  RowVector LgV;
  double FV = 0.0;  // LfV + γ(V)
  double Lfh = 0.0;
  RowVector Lgh;
  double Fh = 0.0;  // Lfh + α(h)

  Eigen::Index m() const { return LgV.size(); }
  bool finite() const {
    return std::isfinite(V) && std::isfinite(h) && std::isfinite(LfV) && std::isfinite(FV) &&
           std::isfinite(Lfh) && std::isfinite(Fh) && LgV.allFinite() && Lgh.allFinite();
  }
};

inline LieData lie_data(const DynamicsModel& model, const CertificatePair& certs,
                        const State& x) {
  const Vector f = model.drift(x);
  const Matrix g = model.input_map(x);
  const Vector grad_v = certs.clf.grad(x);
  const Vector grad_h = certs.cbf.grad(x);

  LieData d;
  d.V = certs.clf(x);
  d.h = certs.cbf(x);
  d.LfV = grad_v.dot(f);
  d.LgV = grad_v.transpose() * g;
  d.Lfh = grad_h.dot(f);
  d.Lgh = grad_h.transpose() * g;
  d.FV = d.LfV + certs.gamma(d.V);
  d.Fh = d.Lfh + certs.alpha(d.h);
  if (!d.finite()) throw NumericDomainError("Lie data is not finite");
  return d;
}

}  // namespace cbfqp
