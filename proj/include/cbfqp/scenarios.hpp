#pragma once

// Built-in example systems and a loader for scenario documents.

#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "cbfqp/model.hpp"
#include "cbfqp/modified_filter.hpp"
#include "cbfqp/numerics.hpp"

namespace cbfqp {

struct Scenario {
  std::string name;
  DynamicsModel model;
  CertificatePair certs;
  std::optional<NominalController> nominal;
  /// Inverse of a class-K γ1 with γ1(‖x‖) ≤ γ(V(x)); empty if unknown.
  std::function<double(double)> gamma1_inverse;
  /// Known value of sup LfV / (LgV LgVᵀ), if any.
  std::optional<double> v_bar;
  std::vector<double> p_defaults;
  std::vector<State> starts;
  Box box;

  int n() const { return model.n(); }
};

/// `count` points evenly spaced on the circle of `radius` (first at angle 0).
inline std::vector<State> ring_starts(int count, double radius) {
  std::vector<State> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int k = 0; k < count; ++k) {
    const double th = 2.0 * std::numbers::pi * k / count;
    out.push_back(State{{radius * std::cos(th), radius * std::sin(th)}});
  }
  return out;
}

inline Box square_box(double half_width, int n = 2) {
  return {Vector::Constant(n, -half_width), Vector::Constant(n, half_width)};
}

/// V = ½ xᵀPx.
inline ScalarCertificate quadratic_certificate(const Matrix& p) {
  return {[p](const State& x) { return 0.5 * x.dot(p * x); },
          [p](const State& x) -> Vector { return 0.5 * (p + p.transpose()) * x; }, p};
}

/// h = xᵀQx + lᵀx + c.
inline ScalarCertificate quadratic_barrier(const Matrix& q, const Vector& l, double c) {
  return {[q, l, c](const State& x) { return x.dot(q * x) + l.dot(x) + c; },
          [q, l](const State& x) -> Vector { return (q + q.transpose()) * x + l; }, std::nullopt};
}

/// Rejects certificate pairs with V(0) ≠ 0 or h(0) ≤ 0.
inline void check_scenario(const Scenario& s) {
  const State zero = State::Zero(s.model.n());
  const double v0 = s.certs.clf(zero);
  if (std::abs(v0) > 1e-12) {
    throw ScenarioError("scenario '" + s.name + "': V(0) = " + std::to_string(v0) + " != 0");
  }
  const double h0 = s.certs.cbf(zero);
  if (!(h0 > 0.0)) {
    throw ScenarioError("scenario '" + s.name + "': h(0) = " + std::to_string(h0) + " <= 0");
  }
  if (s.box.dim() != s.model.n()) {
    throw ScenarioError("scenario '" + s.name + "': box dimension does not match n");
  }
  for (const State& x0 : s.starts) {
    if (x0.size() != s.model.n()) {
      throw ScenarioError("scenario '" + s.name + "': start state has wrong dimension");
    }
  }
}

namespace scenarios {

// Obstacle ‖x − (0,4)‖ ≤ 2, written as h = ‖x‖² − 8x2 + 12.
inline ScalarCertificate disk_obstacle(double radius = 2.0) {
  return quadratic_barrier(Matrix::Identity(2, 2), Vector{{0.0, -8.0}}, 16.0 - radius * radius);
}

inline ScalarCertificate half_norm_squared() { return quadratic_certificate(Matrix::Identity(2, 2)); }

inline Scenario single_integrator(std::string name, double drift_sign) {
  DynamicsModel model(
      2, 2, [drift_sign](const State& x) -> Vector { return drift_sign * x; },
      [](const State&) -> Matrix { return Matrix::Identity(2, 2); });
  CertificatePair certs{half_norm_squared(),
                        ComparisonFunction::linear(1.0, ComparisonKind::kClassK), disk_obstacle(),
                        ComparisonFunction::linear(1.0, ComparisonKind::kExtendedClassK)};
  return {std::move(name), std::move(model), std::move(certs), std::nullopt, {}, std::nullopt,
          {1.0, 10.0, 100.0}, ring_starts(16, 6.0), square_box(8.0)};
}

/// ẋ = −x + u, V = ½‖x‖², disk obstacle.
inline Scenario example1() { return single_integrator("example1", -1.0); }

/// ẋ = (x2, x1) + (0, 1)u, V = ½x1² + ½(x2 + ½x1)², ellipsoidal safe set.
inline Scenario example2() {
  DynamicsModel model(
      2, 1, [](const State& x) -> Vector { return Vector{{x(1), x(0)}}; },
      [](const State&) -> Matrix { return Matrix{{0.0}, {1.0}}; });
  const Matrix p{{1.25, 0.5}, {0.5, 1.0}};
  const Matrix q{{-0.1, -0.075}, {-0.075, -0.1}};
  CertificatePair certs{quadratic_certificate(p),
                        ComparisonFunction::linear(3.0 / 7.0, ComparisonKind::kClassK),
                        quadratic_barrier(q, Vector::Zero(2), 4.9),
                        ComparisonFunction::linear(1.0, ComparisonKind::kExtendedClassK)};
  return {"example2", std::move(model), std::move(certs), std::nullopt, {}, std::nullopt,
          {0.1, 1.0, 10.0}, ring_starts(16, 5.0), square_box(15.0)};
}

/// ẋ = x + u with the example-1 certificates; γ1(r) = r²/2 and v̄ = 1.
inline Scenario example3() {
  Scenario s = single_integrator("example3", 1.0);
  s.gamma1_inverse = [](double v) { return std::sqrt(2.0 * v); };
  s.v_bar = 1.0;
  return s;
}

/// Example 3 with u_nom = −2x.
inline Scenario example5() {
  Scenario s = example3();
  s.name = "example5";
  s.nominal = NominalController::linear(-2.0 * Matrix::Identity(2, 2));
  s.p_defaults = {0.1, 1.0, 10.0};
  return s;
}

/// Example 5 with h ≡ 1 (no obstacle).
inline Scenario example5_noobstacle() {
  Scenario s = example5();
  s.name = "example5-noobstacle";
  s.certs.cbf = quadratic_barrier(Matrix::Zero(2, 2), Vector::Zero(2), 1.0);
  return s;
}

/// Example 2's plant with u_nom = −2x1 − x2.
inline Scenario example6() {
  Scenario s = example2();
  s.name = "example6";
  s.nominal = NominalController::linear(Matrix{{-2.0, -1.0}});
  return s;
}

}  // namespace scenarios

inline std::vector<std::string> builtin_scenario_names() {
  return {"example1", "example2", "example3", "example5", "example5-noobstacle", "example6"};
}

inline Scenario load_scenario(std::string_view name) {
  Scenario s = [&]() -> Scenario {
    if (name == "example1") return scenarios::example1();
    if (name == "example2") return scenarios::example2();
    if (name == "example3") return scenarios::example3();
    if (name == "example5") return scenarios::example5();
    if (name == "example5-noobstacle") return scenarios::example5_noobstacle();
    if (name == "example6") return scenarios::example6();
    throw ScenarioError("unknown scenario '" + std::string(name) + "'");
  }();
  check_scenario(s);
  return s;
}

// ---------------------------------------------------------------------------
// Scenario documents.
//
//   {
//     "name": "...", "n": 2, "m": 1,
//     "drift": [[{"coef": 1, "pow": [0, 1]}], [{"coef": 1, "pow": [1, 0]}]],
//     "input_map": [[0], [1]],            (constant, or entries as term lists)
//     "V": [[0.5, 0], [0, 0.5]],          (V = xᵀ V x)
//     "gamma": {"linear": 1},
//     "h": {"quadratic": [[..]], "linear": [..], "constant": 4.9},
//     "alpha": {"linear": 1},
//     "u_nom": [[-2, -1]],                (optional, u_nom = K x)
//     "p_defaults": [1], "starts": [[5, 0]], "box": [[-8, 8], [-8, 8]]
//   }
// ---------------------------------------------------------------------------

struct Monomial {
  double coef = 0.0;
  std::vector<int> pow;
};

/// Sum of monomials in the state.
struct Polynomial {
  std::vector<Monomial> terms;

  double operator()(const State& x) const {
    double total = 0.0;
    for (const auto& t : terms) {
      double v = t.coef;
      for (std::size_t i = 0; i < t.pow.size(); ++i) {
        v *= std::pow(x(static_cast<Eigen::Index>(i)), t.pow[i]);
      }
      total += v;
    }
    return total;
  }
};

namespace detail {

using nlohmann::json;

inline const json& require(const json& doc, const char* key) {
  if (!doc.is_object() || !doc.contains(key)) {
    throw ScenarioError(std::string("scenario document is missing '") + key + "'");
  }
  return doc.at(key);
}

inline double number(const json& j, const std::string& what) {
  if (!j.is_number()) throw ScenarioError(what + " must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ScenarioError(what + " must be finite");
  return v;
}

inline Vector vector_of(const json& j, Eigen::Index n, const std::string& what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n) {
    throw ScenarioError(what + " must be an array of " + std::to_string(n) + " numbers");
  }
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = number(j[static_cast<std::size_t>(i)], what);
  return v;
}

inline Matrix matrix_of(const json& j, Eigen::Index rows, Eigen::Index cols,
                        const std::string& what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
    throw ScenarioError(what + " must have " + std::to_string(rows) + " rows");
  }
  Matrix a(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    a.row(r) = vector_of(j[static_cast<std::size_t>(r)], cols, what).transpose();
  }
  return a;
}

inline Polynomial polynomial_of(const json& j, int n, const std::string& what) {
  Polynomial poly;
  if (j.is_number()) {
    poly.terms.push_back({number(j, what), std::vector<int>(static_cast<std::size_t>(n), 0)});
    return poly;
  }
  if (!j.is_array()) throw ScenarioError(what + " must be a number or a list of terms");
  for (const auto& term : j) {
    Monomial mono;
    mono.coef = number(require(term, "coef"), what + ".coef");
    const json& pw = require(term, "pow");
    if (!pw.is_array() || static_cast<int>(pw.size()) != n) {
      throw ScenarioError(what + ".pow must list " + std::to_string(n) + " exponents");
    }
    for (const auto& e : pw) {
      if (!e.is_number_integer() || e.get<int>() < 0) {
        throw ScenarioError(what + ".pow entries must be non-negative integers");
      }
      mono.pow.push_back(e.get<int>());
    }
    poly.terms.push_back(std::move(mono));
  }
  return poly;
}

inline ComparisonFunction comparison_of(const json& j, ComparisonKind kind,
                                        const std::string& what) {
  const double k = number(require(j, "linear"), what + ".linear");
  if (!(k > 0.0)) throw ScenarioError(what + ".linear must be positive");
  return ComparisonFunction::linear(k, kind);
}

}  // namespace detail

inline Scenario load_scenario_document(const nlohmann::json& doc) {
  using detail::require;
  const std::string name =
      doc.contains("name") && doc["name"].is_string() ? doc["name"].get<std::string>() : "custom";
  const auto& jn = require(doc, "n");
  const auto& jm = require(doc, "m");
  if (!jn.is_number_integer() || !jm.is_number_integer() || jn.get<int>() < 1 ||
      jm.get<int>() < 1) {
    throw ScenarioError("'n' and 'm' must be positive integers");
  }
  const int n = jn.get<int>();
  const int m = jm.get<int>();

  const auto& jdrift = require(doc, "drift");
  if (!jdrift.is_array() || static_cast<int>(jdrift.size()) != n) {
    throw ScenarioError("'drift' must list one polynomial per state");
  }
  std::vector<Polynomial> drift;
  for (int i = 0; i < n; ++i) {
    drift.push_back(detail::polynomial_of(jdrift[static_cast<std::size_t>(i)], n, "drift"));
  }

  const auto& jg = require(doc, "input_map");
  if (!jg.is_array() || static_cast<int>(jg.size()) != n) {
    throw ScenarioError("'input_map' must have n rows");
  }
  std::vector<Polynomial> gmap;
  for (const auto& row : jg) {
    if (!row.is_array() || static_cast<int>(row.size()) != m) {
      throw ScenarioError("'input_map' rows must have m entries");
    }
    for (const auto& e : row) gmap.push_back(detail::polynomial_of(e, n, "input_map"));
  }

  DynamicsModel model(
      n, m,
      [drift](const State& x) -> Vector {
        Vector f(static_cast<Eigen::Index>(drift.size()));
        for (std::size_t i = 0; i < drift.size(); ++i) f(static_cast<Eigen::Index>(i)) = drift[i](x);
        return f;
      },
      [gmap, n, m](const State& x) -> Matrix {
        Matrix g(n, m);
        for (int r = 0; r < n; ++r) {
          for (int c = 0; c < m; ++c) g(r, c) = gmap[static_cast<std::size_t>(r * m + c)](x);
        }
        return g;
      });

  const Matrix vq = detail::matrix_of(require(doc, "V"), n, n, "V");
  const Matrix p = vq + vq.transpose();  // xᵀQx = ½xᵀ(Q + Qᵀ)x
  if (Eigen::LLT<Matrix>(0.5 * (p + p.transpose())).info() != Eigen::Success) {
    throw ScenarioError("'V' must be positive definite");
  }

  const auto& jh = require(doc, "h");
  const Matrix hq = jh.contains("quadratic")
                        ? detail::matrix_of(jh["quadratic"], n, n, "h.quadratic")
                        : Matrix::Zero(n, n);
  const Vector hl =
      jh.contains("linear") ? detail::vector_of(jh["linear"], n, "h.linear") : Vector::Zero(n);
  const double hc = detail::number(require(jh, "constant"), "h.constant");

  CertificatePair certs{
      quadratic_certificate(p),
      detail::comparison_of(require(doc, "gamma"), ComparisonKind::kClassK, "gamma"),
      quadratic_barrier(hq, hl, hc),
      detail::comparison_of(require(doc, "alpha"), ComparisonKind::kExtendedClassK, "alpha")};

  std::optional<NominalController> nominal;
  if (doc.contains("u_nom")) {
    nominal = NominalController::linear(detail::matrix_of(doc["u_nom"], m, n, "u_nom"));
  }

  std::vector<double> p_defaults = {1.0};
  if (doc.contains("p_defaults")) {
    p_defaults.clear();
    for (const auto& v : doc["p_defaults"]) {
      const double pv = detail::number(v, "p_defaults");
      if (!(pv > 0.0)) throw ScenarioError("p_defaults entries must be positive");
      p_defaults.push_back(pv);
    }
  }

  std::vector<State> starts;
  if (doc.contains("starts")) {
    for (const auto& s : doc["starts"]) starts.push_back(detail::vector_of(s, n, "starts"));
  }

  const auto& jbox = require(doc, "box");
  if (!jbox.is_array() || static_cast<int>(jbox.size()) != n) {
    throw ScenarioError("'box' must list [lower, upper] for each axis");
  }
  Box box{Vector(n), Vector(n)};
  for (int i = 0; i < n; ++i) {
    const Vector b = detail::vector_of(jbox[static_cast<std::size_t>(i)], 2, "box");
    box.lower(i) = b(0);
    box.upper(i) = b(1);
  }
  try {
    box.validate();
  } catch (const ConfigurationError& e) {
    throw ScenarioError(e.what());
  }

  Scenario s{name,       std::move(model),      std::move(certs), std::move(nominal), {},
             std::nullopt, std::move(p_defaults), std::move(starts), std::move(box)};
  check_scenario(s);
  return s;
}

inline Scenario load_scenario_text(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ScenarioError(std::string("malformed scenario document: ") + e.what());
  }
  try {
    return load_scenario_document(doc);
  } catch (const nlohmann::json::exception& e) {
    throw ScenarioError(std::string("malformed scenario document: ") + e.what());
  }
}

/// Built-in name, or a path to a scenario document.
inline Scenario resolve_scenario(const std::string& name_or_path) {
  for (const auto& known : builtin_scenario_names()) {
    if (known == name_or_path) return load_scenario(name_or_path);
  }
  std::ifstream in(name_or_path);
  if (!in) throw ScenarioError("unknown scenario '" + name_or_path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return load_scenario_text(buf.str());
}

}  // namespace cbfqp
