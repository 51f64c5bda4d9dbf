// Acceptance checks, one per criterion: `acceptance <n>` prints a single
// "AC<n> PASS|FAIL: ..." line and exits 0 on pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cbfqp/cbfqp.hpp"

namespace cbfqp {
namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[fail] " << what << "; ";
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// A named batch of simulated trajectories, shared by the safety check.
struct RunSet {
  std::string label;
  const Scenario* scenario;
  ControllerMode mode;
  double p;
  std::vector<State> starts;
};

const Scenario& cached(const std::string& name) {
  static std::map<std::string, Scenario> cache;
  auto it = cache.find(name);
  if (it == cache.end()) it = cache.emplace(name, load_scenario(name)).first;
  return it->second;
}

std::vector<RunSet> runs_for(int criterion) {
  std::vector<RunSet> out;
  switch (criterion) {
    case 2:
      for (double p : {0.1, 1.0, 10.0}) {
        out.push_back({"example2", &cached("example2"), ControllerMode::kOriginal, p,
                       cached("example2").starts});
      }
      break;
    case 3:
      for (double p : {0.1, 1.0, 10.0, 100.0}) {
        out.push_back({"example1", &cached("example1"), ControllerMode::kOriginal, p,
                       cached("example1").starts});
      }
      break;
    case 4:
      for (double p : {1.0, 10.0, 100.0}) {
        out.push_back({"example3", &cached("example3"), ControllerMode::kOriginal, p,
                       cached("example3").starts});
      }
      break;
    case 5:
      for (double p : {0.1, 1.0, 10.0}) {
        out.push_back({"example6", &cached("example6"), ControllerMode::kModified, p,
                       cached("example6").starts});
      }
      break;
    case 6:
      out.push_back({"example5", &cached("example5"), ControllerMode::kModified, 1.0,
                     cached("example5").starts});
      break;
    default:
      break;
  }
  return out;
}

std::vector<Trajectory> simulate(const RunSet& set, const IntegratorConfig& cfg = {}) {
  return batch(*set.scenario, set.mode, set.p, set.starts, cfg);
}

// ---------------------------------------------------------------------------

Verdict ac1() {
  Verdict v;
  const std::vector<std::string> names = {"example1", "example2", "example3", "example5",
                                          "example6"};
  for (const auto& name : names) {
    const auto t0 = Clock::now();
    const Scenario& s = cached(name);
    // Examples 5 and 6 are posed on the transformed plant.
    const DynamicsModel model = s.nominal ? transform(s.model, *s.nominal).as_model() : s.model;
    BoxSampler sampler(s.box, 7);
    const auto sample = sampler.draw(10000);
    double du = 0.0, dd = 0.0, kkt = 0.0;
    for (double p : {0.1, 1.0, 10.0, 100.0}) {
      const OracleComparison c = compare_with_oracle(model, s.certs, QPWeight(p), sample);
      du = std::max(du, c.max_du);
      dd = std::max(dd, c.max_ddelta);
      kkt = std::max(kkt, c.max_kkt);
    }
    const double secs = seconds_since(t0);
    v.detail << name << ": du=" << fmt(du, 3) << " dd=" << fmt(dd, 3) << " kkt=" << fmt(kkt, 3)
             << " t=" << fmt(secs, 3) << "s; ";
    v.require(du <= 1e-6 && dd <= 1e-6 && kkt <= 1e-8, name + " tolerance");
    v.require(secs <= 30.0, name + " runtime");
  }
  return v;
}

Verdict ac2() {
  Verdict v;
  const auto t0 = Clock::now();
  const Scenario& s = cached("example2");
  const SearchGrid grid = SearchGrid::uniform(s.box, 81);
  const auto check_pair = [&](double p, double expected) {
    const auto found = find_equilibria(s.model, s.certs, QPWeight(p), grid);
    std::vector<State> interior;
    for (const auto& r : found.equilibria) {
      if (r.kind == EquilibriumKind::kInterior) interior.push_back(r.location);
    }
    bool ok = interior.size() == 2;
    for (const State& x : interior) {
      ok = ok && std::abs(std::abs(x(0)) - expected) <= 1e-3 && std::abs(x(1)) <= 1e-3;
      v.detail << "p=" << fmt(p) << " root (" << fmt(x, ",") << "); ";
    }
    v.require(ok, "interior pair at p=" + fmt(p));
  };
  check_pair(1.0, std::sqrt(112.0 / 15.0));
  check_pair(10.0, std::sqrt(112.0 / 150.0));

  const auto holds = [&](double p) {
    return interior_certificate(s.model, s.certs, QPWeight(p), grid).holds;
  };
  const bool h01 = holds(0.1), h015 = holds(0.15), h016 = holds(0.16);
  v.detail << "certificate p=0.1:" << h01 << " p=0.15:" << h015 << " p=0.16:" << h016 << "; ";
  v.require(h01, "certificate at p=0.1");
  v.require(h015 && !h016, "certificate flip between 0.15 and 0.16");
  const double secs = seconds_since(t0);
  v.detail << "t=" << fmt(secs, 3) << "s";
  v.require(secs <= 60.0, "runtime");
  return v;
}

Verdict ac3() {
  Verdict v;
  const Scenario& s = cached("example1");
  const State top{{0.0, 6.0}};
  for (double p : {0.1, 1.0, 10.0, 100.0}) {
    const auto found = find_equilibria(s.model, s.certs, QPWeight(p), SearchGrid::uniform(s.box, 81));
    bool hit = false;
    for (const auto& r : found.equilibria) {
      if ((r.location - top).norm() <= 1e-6 && r.residual_norm <= 1e-6) {
        hit = true;
        v.detail << "p=" << fmt(p) << " residual=" << fmt(r.residual_norm, 3) << "; ";
      }
    }
    v.require(hit, "(0,6) at p=" + fmt(p));
  }
  const PersistenceCheck c = boundary_persistence_check(s.model, s.certs, top);
  v.detail << "persistent=" << c.persistent << " k=" << fmt(c.k) << " Lfh=" << fmt(c.lfh);
  v.require(c.persistent, "persistence check");
  return v;
}

Verdict ac4() {
  Verdict v;
  const Scenario& s = cached("example3");
  const auto sets = runs_for(4);
  for (const RunSet& set : sets) {
    const double p = set.p;
    const double bound = std::sqrt(2.0 / p);
    const QPWeight w(p);
    double worst_root = 0.0;
    std::size_t roots = 0;
    // The full box and a close-in box, so that small circles are resolved.
    for (const Box& box : {s.box, square_box(2.0)}) {
      const auto found = find_equilibria(s.model, s.certs, w, SearchGrid::uniform(box, 81));
      for (const auto& r : found.equilibria) {
        if (r.kind != EquilibriumKind::kInterior) continue;
        ++roots;
        worst_root = std::max(worst_root, r.location.norm());
      }
    }
    v.require(roots > 0 && worst_root <= bound + 1e-4, "interior roots within bound at p=" + fmt(p));

    double worst_end = 0.0;
    int excluded = 0;
    for (const Trajectory& tr : simulate(set)) {
      // Trajectories stalled on the obstacle boundary form the excluded family.
      if (std::abs(s.certs.cbf(tr.final_state())) <= 1e-3) {
        ++excluded;
        continue;
      }
      worst_end = std::max(worst_end, tr.final_state().norm());
    }
    v.detail << "p=" << fmt(p) << ": roots=" << roots << " max|root|=" << fmt(worst_root, 6)
             << " max|x(T)|=" << fmt(worst_end, 6) << " bound=" << fmt(bound, 6)
             << " boundary-family=" << excluded << "; ";
    v.require(worst_end <= bound + 0.05, "terminal points within bound at p=" + fmt(p));
  }
  return v;
}

Verdict ac5() {
  Verdict v;
  const Scenario& s = cached("example6");
  const TransformedModel t = transform(s.model, *s.nominal);
  for (const RunSet& set : runs_for(5)) {
    double worst_end = 0.0;
    double min_h = std::numeric_limits<double>::infinity();
    bool clean = true;
    for (const Trajectory& tr : simulate(set)) {
      clean = clean && tr.error.empty();
      worst_end = std::max(worst_end, tr.final_state().norm());
      min_h = std::min(min_h, tr.min_h());
    }
    const auto found =
        find_equilibria(t.as_model(), s.certs, QPWeight(set.p), SearchGrid::uniform(s.box, 81));
    const std::size_t interior = found.count(EquilibriumKind::kInterior);
    const std::size_t origin = found.count(EquilibriumKind::kOrigin);
    v.detail << "p=" << fmt(set.p) << ": max|x(T)|=" << fmt(worst_end, 3)
             << " min h=" << fmt(min_h, 6) << " interior=" << interior << " origin=" << origin
             << "; ";
    v.require(clean && worst_end <= 1e-3, "convergence at p=" + fmt(set.p));
    v.require(interior == 0 && origin == 1, "only the origin at p=" + fmt(set.p));
    v.require(min_h >= -1e-3, "safety at p=" + fmt(set.p));
  }
  return v;
}

Verdict ac6() {
  Verdict v;
  const auto t0 = Clock::now();
  const Scenario& s = cached("example5");
  const TransformedModel t = transform(s.model, *s.nominal);
  RoaOptions opt;
  opt.box = s.box;
  opt.seed = 7;
  const RoaEstimate est = estimate_roa(t, s.certs, QPWeight(1.0), opt);
  const double radius = std::sqrt(2.0 * est.eta);
  const double secs = seconds_since(t0);
  v.detail << "eta=" << fmt(est.eta, 6) << " radius=" << fmt(radius, 6)
           << " expected [3.2, 3.4]";
  if (est.blocking_point) v.detail << " blocking=(" << fmt(*est.blocking_point, ",") << ")";
  v.detail << " t=" << fmt(secs, 3) << "s";
  v.require(radius >= 3.2 && radius <= 3.4, "radius");
  v.require(secs <= 120.0, "runtime");
  return v;
}

Verdict ac7() {
  Verdict v;
  IntegratorConfig fine;
  fine.step = 0.5e-3;
  std::size_t total = 0, compared = 0;
  double min_h = std::numeric_limits<double>::infinity();
  double worst_shift = 0.0;
  for (int criterion = 2; criterion <= 6; ++criterion) {
    for (const RunSet& set : runs_for(criterion)) {
      std::vector<State> inside;
      for (const State& x0 : set.starts) {
        if (set.scenario->certs.cbf(x0) >= 0.0) inside.push_back(x0);
      }
      RunSet safe = set;
      safe.starts = inside;
      const auto coarse = simulate(safe);
      const auto halved = simulate(safe, fine);
      for (std::size_t i = 0; i < coarse.size(); ++i) {
        ++total;
        min_h = std::min({min_h, coarse[i].min_h(), halved[i].min_h()});
        // Terminal state x(T); the converged-to mean spans a fixed number of
        // steps and so covers a different time span after halving.
        if (coarse[i].converged() && halved[i].converged()) {
          ++compared;
          worst_shift = std::max(worst_shift,
                                 (coarse[i].final_state() - halved[i].final_state()).norm());
        }
      }
    }
  }
  v.detail << "trajectories=" << total << " min h=" << fmt(min_h, 6)
           << " converged pairs=" << compared << " max terminal shift=" << fmt(worst_shift, 3);
  v.require(min_h >= -1e-3, "forward invariance");
  v.require(worst_shift <= 1e-4, "step halving");
  return v;
}

Verdict ac8() {
  Verdict v;
  const Scenario& s2 = cached("example2");
  const LipschitzReport rep =
      lipschitz_precondition(s2.model, s2.certs, SamplingConfig{s2.box, 10000, 7});
  v.detail << "example2 condition(i)=" << rep.condition_i << " (min|Lgh|="
           << fmt(rep.min_lgh_norm, 3) << ") condition(ii)=" << rep.condition_ii
           << " (min|(Fh,Lgh)|=" << fmt(rep.min_m_residual, 4) << "); ";
  v.require(!rep.condition_i && rep.condition_ii, "Lipschitz precondition report");

  std::size_t checked = 0;
  for (const std::string& name : {std::string("example1"), std::string("example2"),
                                  std::string("example3"), std::string("example5"),
                                  std::string("example6")}) {
    const Scenario& s = cached(name);
    const DynamicsModel model = s.nominal ? transform(s.model, *s.nominal).as_model() : s.model;
    const bool origin_rests = model.drift(State::Zero(s.n())).norm() <= 1e-9;
    for (double p : {0.1, 1.0, 10.0, 100.0}) {
      const auto found =
          find_equilibria(model, s.certs, QPWeight(p), SearchGrid::uniform(s.box, 81));
      const bool origin_found = found.count(EquilibriumKind::kOrigin) == 1;
      v.require(origin_found == origin_rests, name + " origin iff f(0)=0 at p=" + fmt(p));
      v.require(found.anomalies.empty(), name + " unsafe root at p=" + fmt(p));
      for (const auto& r : found.equilibria) {
        ++checked;
        const std::string where = name + " p=" + fmt(p) + " (" + fmt(r.location, ",") + ")";
        v.require(clf_active(r.region), "Fact 1 " + where);
        v.require(r.h >= -1e-6, "Fact 2 " + where);
        if (std::abs(r.h) <= 1e-6) {
          // Active in the sense of a tight row; the multiplier may be 0 where
          // an interior family meets the boundary.
          v.require(std::abs(r.cbf_residual) <= 1e-6, "Fact 3 " + where);
        } else {
          v.require(!cbf_active(r.region), "Fact 3 interior " + where);
        }
      }
    }
  }
  v.detail << "equilibria checked=" << checked;
  return v;
}

}  // namespace
}  // namespace cbfqp

int main(int argc, char** argv) {
  using namespace cbfqp;
  if (argc != 2) {
    std::fprintf(stderr, "usage: acceptance <1-8>\n");
    return 2;
  }
  const int n = std::atoi(argv[1]);
  const std::vector<std::function<Verdict()>> checks = {ac1, ac2, ac3, ac4, ac5, ac6, ac7, ac8};
  if (n < 1 || n > static_cast<int>(checks.size())) {
    std::fprintf(stderr, "unknown criterion %s\n", argv[1]);
    return 2;
  }
  Verdict v;
  try {
    v = checks[static_cast<std::size_t>(n - 1)]();
  } catch (const std::exception& e) {
    v.pass = false;
    v.detail << "[error] " << e.what();
  }
  std::printf("AC%d %s: %s\n", n, v.pass ? "PASS" : "FAIL", v.detail.str().c_str());
  return v.pass ? 0 : 1;
}
