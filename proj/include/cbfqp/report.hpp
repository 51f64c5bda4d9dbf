#pragma once

// CSV tables, SVG phase portraits and run manifests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cbfqp/equilibria.hpp"
#include "cbfqp/scenarios.hpp"
#include "cbfqp/simulator.hpp"

namespace cbfqp {

inline constexpr const char* kToolVersion = "0.1.0";

/// Shortest round-trippable-enough decimal form, locale independent.
inline std::string fmt(double v, int digits = 10) {
  if (v == 0.0) return "0";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

inline std::string fmt(const Vector& v, const char* sep = ",") {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += fmt(v(i));
  }
  return out;
}

// ----------------------------------------------------------------- CSV

inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr, int n, int m) {
  os << "t";
  for (int i = 1; i <= n; ++i) os << ",x" << i;
  for (int i = 1; i <= m; ++i) os << ",u" << i;
  os << ",V,h,delta,lambda1,lambda2,region\n";
  for (std::size_t k = 0; k < tr.size(); ++k) {
    os << fmt(tr.times[k], 12);
    for (Eigen::Index i = 0; i < tr.states[k].size(); ++i) os << ',' << fmt(tr.states[k](i), 12);
    for (Eigen::Index i = 0; i < tr.inputs[k].size(); ++i) os << ',' << fmt(tr.inputs[k](i), 12);
    os << ',' << fmt(tr.v_values[k], 12) << ',' << fmt(tr.h_values[k], 12) << ','
       << fmt(tr.deltas[k], 12) << ',' << fmt(tr.lambda1[k], 12) << ','
       << fmt(tr.lambda2[k], 12) << ',' << to_string(tr.regions[k]) << '\n';
  }
}

inline void write_equilibria_csv_header(std::ostream& os, int n) {
  os << "p,kind";
  for (int i = 1; i <= n; ++i) os << ",x" << i;
  os << ",residual,region,h,lgh_norm\n";
}

inline void write_equilibria_csv_rows(std::ostream& os,
                                      const std::vector<EquilibriumReport>& rows) {
  for (const auto& r : rows) {
    os << fmt(r.p) << ',' << to_string(r.kind);
    for (Eigen::Index i = 0; i < r.location.size(); ++i) os << ',' << fmt(r.location(i));
    os << ',' << fmt(r.residual_norm, 3) << ',' << to_string(r.region) << ',' << fmt(r.h)
       << ',' << fmt(r.lgh_norm) << '\n';
  }
}

// ----------------------------------------------------------------- SVG

struct PortraitOptions {
  int width = 640;
  int height = 640;
  int margin = 48;
  /// Obstacle raster cells per axis.
  int shade_resolution = 240;
  /// Points kept per trajectory polyline.
  std::size_t max_polyline_points = 1500;
  std::string title;
};

namespace detail {

class PlotFrame {
 public:
  PlotFrame(const Box& box, const PortraitOptions& opt) : box_(box), opt_(opt) {}
  double px(double x) const {
    return opt_.margin + (x - box_.lower(0)) / (box_.upper(0) - box_.lower(0)) *
                             (opt_.width - 2 * opt_.margin);
  }
  double py(double y) const {
    return opt_.margin + (box_.upper(1) - y) / (box_.upper(1) - box_.lower(1)) *
                             (opt_.height - 2 * opt_.margin);
  }

 private:
  Box box_;
  PortraitOptions opt_;
};

inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

/// Tick spacing from {1, 2, 5}·10^k giving roughly `target` ticks.
inline double tick_step(double span, int target = 8) {
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double f : {1.0, 2.0, 5.0, 10.0}) {
    if (f * mag >= raw) return f * mag;
  }
  return 10.0 * mag;
}

}  // namespace detail

/// Phase portrait of a planar scenario: shaded unsafe set {h < 0} with its
/// boundary, trajectories, start points and equilibrium markers.
inline std::string render_portrait(const Scenario& scenario,
                                   const std::vector<Trajectory>& trajectories,
                                   const std::vector<EquilibriumReport>& equilibria,
                                   const PortraitOptions& opt = {}) {
  if (scenario.n() != 2) throw ConfigurationError("phase portraits need a planar scenario");
  const Box& box = scenario.box;
  const detail::PlotFrame frame(box, opt);
  using detail::svg_num;
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << opt.width
     << "\" height=\"" << opt.height << "\" viewBox=\"0 0 " << opt.width << ' ' << opt.height
     << "\">\n"
     << "<rect x=\"0\" y=\"0\" width=\"" << opt.width << "\" height=\"" << opt.height
     << "\" fill=\"white\"/>\n";

  // Unsafe set: run-length rectangles of the raster, then the zero contour.
  const int res = opt.shade_resolution;
  const double dx = (box.upper(0) - box.lower(0)) / res;
  const double dy = (box.upper(1) - box.lower(1)) / res;
  os << "<g fill=\"#f4a6a6\" stroke=\"none\">\n";
  for (int j = 0; j < res; ++j) {
    const double y0 = box.lower(1) + j * dy;
    int i = 0;
    while (i < res) {
      const auto unsafe = [&](int ii) {
        return scenario.certs.cbf(State{{box.lower(0) + (ii + 0.5) * dx, y0 + 0.5 * dy}}) < 0.0;
      };
      if (!unsafe(i)) {
        ++i;
        continue;
      }
      int k = i;
      while (k < res && unsafe(k)) ++k;
      const double xa = frame.px(box.lower(0) + i * dx);
      const double xb = frame.px(box.lower(0) + k * dx);
      const double ya = frame.py(y0 + dy);
      const double yb = frame.py(y0);
      os << "<rect x=\"" << svg_num(xa) << "\" y=\"" << svg_num(ya) << "\" width=\""
         << svg_num(xb - xa + 0.3) << "\" height=\"" << svg_num(yb - ya + 0.3) << "\"/>\n";
      i = k;
    }
  }
  os << "</g>\n";

  {
    // Marching squares on the node grid.
    std::vector<double> h((res + 1) * (res + 1));
    const auto at = [&](int i, int j) -> double& { return h[j * (res + 1) + i]; };
    for (int j = 0; j <= res; ++j) {
      for (int i = 0; i <= res; ++i) {
        at(i, j) = scenario.certs.cbf(State{{box.lower(0) + i * dx, box.lower(1) + j * dy}});
      }
    }
    std::string path;
    const auto cross = [&](double xa, double ya, double ha, double xb, double yb, double hb) {
      const double t = ha / (ha - hb);
      return std::pair<double, double>{xa + t * (xb - xa), ya + t * (yb - ya)};
    };
    for (int j = 0; j < res; ++j) {
      for (int i = 0; i < res; ++i) {
        const double x0 = box.lower(0) + i * dx;
        const double y0 = box.lower(1) + j * dy;
        const double c[4] = {at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)};
        const double xs[4] = {x0, x0 + dx, x0 + dx, x0};
        const double ys[4] = {y0, y0, y0 + dy, y0 + dy};
        std::vector<std::pair<double, double>> pts;
        for (int e = 0; e < 4; ++e) {
          const int f = (e + 1) % 4;
          if ((c[e] < 0.0) != (c[f] < 0.0)) {
            pts.push_back(cross(xs[e], ys[e], c[e], xs[f], ys[f], c[f]));
          }
        }
        for (std::size_t k = 0; k + 1 < pts.size(); k += 2) {
          path += "M" + svg_num(frame.px(pts[k].first)) + " " + svg_num(frame.py(pts[k].second)) +
                  "L" + svg_num(frame.px(pts[k + 1].first)) + " " +
                  svg_num(frame.py(pts[k + 1].second));
        }
      }
    }
    if (!path.empty()) {
      os << "<path d=\"" << path << "\" fill=\"none\" stroke=\"#b22222\" stroke-width=\"1.2\"/>\n";
    }
  }

  // Axes and ticks.
  const double left = frame.px(box.lower(0));
  const double right = frame.px(box.upper(0));
  const double top = frame.py(box.upper(1));
  const double bottom = frame.py(box.lower(1));
  os << "<rect x=\"" << svg_num(left) << "\" y=\"" << svg_num(top) << "\" width=\""
     << svg_num(right - left) << "\" height=\"" << svg_num(bottom - top)
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"black\">\n";
  for (int axis = 0; axis < 2; ++axis) {
    const double lo = box.lower(axis);
    const double hi = box.upper(axis);
    const double step = detail::tick_step(hi - lo);
    for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step) {
      const double tv = std::abs(t) < 1e-12 * step ? 0.0 : t;
      if (axis == 0) {
        const double x = frame.px(tv);
        os << "<line x1=\"" << svg_num(x) << "\" y1=\"" << svg_num(bottom) << "\" x2=\""
           << svg_num(x) << "\" y2=\"" << svg_num(bottom + 5) << "\" stroke=\"black\"/>"
           << "<text x=\"" << svg_num(x) << "\" y=\"" << svg_num(bottom + 18)
           << "\" text-anchor=\"middle\">" << fmt(tv, 4) << "</text>\n";
      } else {
        const double y = frame.py(tv);
        os << "<line x1=\"" << svg_num(left - 5) << "\" y1=\"" << svg_num(y) << "\" x2=\""
           << svg_num(left) << "\" y2=\"" << svg_num(y) << "\" stroke=\"black\"/>"
           << "<text x=\"" << svg_num(left - 8) << "\" y=\"" << svg_num(y + 4)
           << "\" text-anchor=\"end\">" << fmt(tv, 4) << "</text>\n";
      }
    }
  }
  os << "<text x=\"" << svg_num(0.5 * (left + right)) << "\" y=\"" << svg_num(opt.height - 8.0)
     << "\" text-anchor=\"middle\">x1</text>\n"
     << "<text x=\"12\" y=\"" << svg_num(0.5 * (top + bottom))
     << "\" text-anchor=\"middle\" transform=\"rotate(-90 12 " << svg_num(0.5 * (top + bottom))
     << ")\">x2</text>\n";
  if (!opt.title.empty()) {
    os << "<text x=\"" << svg_num(0.5 * (left + right)) << "\" y=\"" << svg_num(top - 14)
       << "\" text-anchor=\"middle\" font-size=\"14\">" << opt.title << "</text>\n";
  }
  os << "</g>\n";

  // Trajectories, clipped to the plot area.
  os << "<defs><clipPath id=\"plot\"><rect x=\"" << svg_num(left) << "\" y=\"" << svg_num(top)
     << "\" width=\"" << svg_num(right - left) << "\" height=\"" << svg_num(bottom - top)
     << "\"/></clipPath></defs>\n";
  os << "<g clip-path=\"url(#plot)\" fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"1.1\">\n";
  for (const Trajectory& tr : trajectories) {
    if (tr.size() == 0) continue;
    const std::size_t stride = std::max<std::size_t>(1, tr.size() / opt.max_polyline_points);
    os << "<polyline points=\"";
    for (std::size_t k = 0; k < tr.size(); k += stride) {
      os << svg_num(frame.px(tr.states[k](0))) << ',' << svg_num(frame.py(tr.states[k](1)))
         << ' ';
    }
    const State& last = tr.final_state();
    os << svg_num(frame.px(last(0))) << ',' << svg_num(frame.py(last(1))) << "\"/>\n";
  }
  os << "</g>\n<g fill=\"#1f4e9c\">\n";
  for (const Trajectory& tr : trajectories) {
    if (tr.size() == 0) continue;
    os << "<circle cx=\"" << svg_num(frame.px(tr.states[0](0))) << "\" cy=\""
       << svg_num(frame.py(tr.states[0](1))) << "\" r=\"2.5\"/>\n";
  }
  os << "</g>\n<g stroke=\"black\" stroke-width=\"1\">\n";
  for (const auto& eq : equilibria) {
    if (!box.contains(eq.location)) continue;
    const char* fill = eq.kind == EquilibriumKind::kOrigin     ? "#2e8b57"
                       : eq.kind == EquilibriumKind::kInterior ? "#ff8c00"
                                                               : "#8b008b";
    os << "<circle cx=\"" << svg_num(frame.px(eq.location(0))) << "\" cy=\""
       << svg_num(frame.py(eq.location(1))) << "\" r=\"5\" fill=\"" << fill << "\"/>\n";
  }
  os << "</g>\n</svg>\n";
  return os.str();
}

// ----------------------------------------------------------------- manifest

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct RunManifest {
  std::string command;
  std::string scenario;
  std::vector<double> p_values;
  std::uint64_t seed = 0;
  /// Canonical text of every setting that influences the outputs.
  std::string config;
  std::vector<std::string> outputs;
  std::vector<std::string> notes;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["tool"] = "cbflab";
    j["tool_version"] = kToolVersion;
    j["command"] = command;
    j["scenario"] = scenario;
    j["p_values"] = p_values;
    j["seed"] = seed;
    j["config"] = config;
    j["config_hash"] = "fnv1a64:" + hex64(fnv1a(config));
    j["outputs"] = outputs;
    j["notes"] = notes;
    return j;
  }
};

}  // namespace cbfqp
