// cbflab: command-line front end for the CLF-CBF QP library.
//
//   cbflab solve       --scenario example3 --p 1 --x 1,0
//   cbflab simulate    --scenario example1 --mode original --p 1,10,100 --starts ring:16:r=6
//   cbflab equilibria  --scenario example2 --p 0.1,1,10
//   cbflab validate    --scenario example1 --p 1 --samples 10000 --seed 7
//   cbflab roa         --scenario example5 --p 1
//
// Exit codes: 0 ok, 1 usage, 2 scenario error, 3 solver inconsistency,
// 4 safety anomaly, 5 unresolved equilibrium cells, 6 validation breach,
// 7 region-of-attraction estimate unavailable.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cbfqp/cbfqp.hpp"

namespace {

namespace fs = std::filesystem;
using namespace cbfqp;

enum ExitCode {
  kOk = 0,
  kUsage = 1,
  kScenario = 2,
  kSolver = 3,
  kSafety = 4,
  kUnresolved = 5,
  kValidation = 6,
  kRoaUnavailable = 7,
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(item);
  return out;
}

double parse_double(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw UsageError("");
    return v;
  } catch (const std::exception&) {
    throw UsageError("cannot parse number '" + s + "'");
  }
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split(s, ',')) out.push_back(parse_double(item));
  return out;
}

State parse_state(const std::string& s, int n) {
  const auto v = parse_list(s);
  if (static_cast<int>(v.size()) != n) {
    throw UsageError("state '" + s + "' needs " + std::to_string(n) + " entries");
  }
  return Eigen::Map<const Vector>(v.data(), n);
}

/// "ring:<count>:r=<radius>" or "x,y;x,y;...".
std::vector<State> parse_starts(const std::string& s, int n) {
  if (s.rfind("ring:", 0) == 0) {
    const auto parts = split(s, ':');
    if (parts.size() != 3 || parts[2].rfind("r=", 0) != 0 || n != 2) {
      throw UsageError("ring starts look like ring:16:r=6 (planar scenarios only)");
    }
    return ring_starts(static_cast<int>(parse_double(parts[1])), parse_double(parts[2].substr(2)));
  }
  std::vector<State> out;
  for (const auto& item : split(s, ';')) {
    if (!item.empty()) out.push_back(parse_state(item, n));
  }
  return out;
}

/// "lo,hi;lo,hi".
Box parse_box(const std::string& s, int n) {
  const auto axes = split(s, ';');
  if (static_cast<int>(axes.size()) != n) throw UsageError("box needs one lo,hi pair per axis");
  Box box{Vector(n), Vector(n)};
  for (int i = 0; i < n; ++i) {
    const auto b = parse_list(axes[static_cast<std::size_t>(i)]);
    if (b.size() != 2) throw UsageError("box axis '" + axes[static_cast<std::size_t>(i)] + "'");
    box.lower(i) = b[0];
    box.upper(i) = b[1];
  }
  box.validate();
  return box;
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
  return out;
}

std::string p_tag(double p) {
  std::string s = fmt(p);
  for (char& c : s) {
    if (c == '.') c = '_';
  }
  return s;
}

struct Common {
  std::string scenario = "example1";
  std::string p_list;
  std::string out_dir = "cbflab-out";
  std::uint64_t seed = 7;
};

std::uint64_t effective_seed(std::uint64_t cli_seed) {
  if (const char* env = std::getenv("CBFLAB_SEED"); env != nullptr && *env != '\0') {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw UsageError(std::string("CBFLAB_SEED is not an unsigned integer: ") + env);
    }
  }
  return cli_seed;
}

std::vector<double> p_values(const Common& c, const Scenario& s) {
  const auto ps = c.p_list.empty() ? s.p_defaults : parse_list(c.p_list);
  for (double p : ps) (void)QPWeight(p);
  return ps;
}

void write_manifest(const fs::path& dir, const RunManifest& m) {
  std::ofstream out(dir / "manifest.json");
  out << m.to_json().dump(2) << '\n';
}

SearchGrid default_grid(const Box& box, int resolution) {
  return SearchGrid::uniform(box, resolution, 1e-6);
}

// ------------------------------------------------------------------ solve

int cmd_solve(const Common& c, const std::string& x_text) {
  const Scenario s = resolve_scenario(c.scenario);
  const State x = parse_state(x_text, s.n());
  for (double pv : p_values(c, s)) {
    const QPWeight p(pv);
    const QPSolution sol = solve(lie_data(s.model, s.certs, x), p);
    std::printf("scenario=%s p=%s x=(%s)\n", s.name.c_str(), fmt(pv).c_str(), fmt(x).c_str());
    std::printf("  u*        = (%s)\n", fmt(sol.u_star).c_str());
    std::printf("  delta     = %s\n", fmt(sol.delta).c_str());
    std::printf("  lambda1   = %s\n", fmt(sol.lambda1).c_str());
    std::printf("  lambda2   = %s\n", fmt(sol.lambda2).c_str());
    std::printf("  region    = %s\n", std::string(to_string(sol.region)).c_str());
    std::printf("  clf_row   = %s  (FV + LgV u - delta, <= 0)\n", fmt(sol.clf_residual()).c_str());
    std::printf("  cbf_row   = %s  (Fh + Lgh u, >= 0)\n", fmt(sol.cbf_residual()).c_str());
  }
  return kOk;
}

// ------------------------------------------------------------------ simulate

int cmd_simulate(const Common& c, const std::string& mode_text, const std::string& starts_text,
                 double step, double horizon, int resolution) {
  const Scenario s = resolve_scenario(c.scenario);
  ControllerMode mode;
  if (mode_text == "original") {
    mode = ControllerMode::kOriginal;
  } else if (mode_text == "modified") {
    mode = ControllerMode::kModified;
  } else {
    throw UsageError("--mode must be original or modified");
  }
  const auto ps = p_values(c, s);
  const auto starts = starts_text.empty() ? s.starts : parse_starts(starts_text, s.n());
  IntegratorConfig cfg;
  cfg.step = step;
  cfg.horizon = horizon;
  cfg.validate();

  const fs::path dir(c.out_dir);
  fs::create_directories(dir);
  RunManifest manifest;
  manifest.command = "simulate";
  manifest.scenario = s.name;
  manifest.p_values = ps;
  manifest.seed = c.seed;
  {
    std::ostringstream cfg_text;
    cfg_text << "simulate;scenario=" << c.scenario << ";mode=" << mode_text << ";p=" << join(ps)
             << ";step=" << fmt(step) << ";horizon=" << fmt(horizon) << ";starts=";
    for (const auto& x0 : starts) cfg_text << '(' << fmt(x0) << ')';
    cfg_text << ";grid=" << resolution;
    manifest.config = cfg_text.str();
  }

  bool anomaly = false;
  std::printf("%-8s %-5s %-24s %-14s %-28s %s\n", "p", "start", "x0", "terminal", "final",
              "min_h");
  for (double pv : ps) {
    const auto trajectories = batch(s, mode, pv, starts, cfg);
    for (std::size_t k = 0; k < trajectories.size(); ++k) {
      const Trajectory& tr = trajectories[k];
      const std::string name =
          s.name + "_" + mode_text + "_p" + p_tag(pv) + "_s" + std::to_string(k) + ".csv";
      std::ofstream csv(dir / name);
      write_trajectory_csv(csv, tr, s.n(), s.model.m());
      manifest.outputs.push_back(name);
      if (tr.terminal == TerminalKind::kSafetyAnomaly) {
        anomaly = true;
        manifest.notes.push_back("safety anomaly: p=" + fmt(pv) + " start " + std::to_string(k) +
                                 " min h=" + fmt(tr.min_h()));
      }
      if (!tr.error.empty()) {
        manifest.notes.push_back("truncated: p=" + fmt(pv) + " start " + std::to_string(k) +
                                 ": " + tr.error);
      }
      std::printf("%-8s %-5zu %-24s %-14s %-28s %s\n", fmt(pv).c_str(), k,
                  ("(" + fmt(starts[k]) + ")").c_str(),
                  std::string(to_string(tr.terminal)).c_str(),
                  ("(" + fmt(tr.final_state()) + ")").c_str(), fmt(tr.min_h(), 4).c_str());
    }

    if (s.n() == 2) {
      const ClosedLoop loop(s, mode, pv);
      std::vector<EquilibriumReport> marks;
      try {
        marks = find_equilibria(loop.qp_model(), s.certs, loop.weight(),
                                default_grid(s.box, resolution))
                    .equilibria;
      } catch (const Error& e) {
        manifest.notes.push_back(std::string("equilibrium markers skipped: ") + e.what());
      }
      PortraitOptions opt;
      opt.title = s.name + " (" + mode_text + "), p = " + fmt(pv);
      const std::string svg_name = s.name + "_" + mode_text + "_p" + p_tag(pv) + ".svg";
      std::ofstream svg(dir / svg_name);
      svg << render_portrait(s, trajectories, marks, opt);
      manifest.outputs.push_back(svg_name);
    }
  }
  write_manifest(dir, manifest);
  if (anomaly) {
    std::fprintf(stderr, "safety anomaly detected; see %s\n",
                 (dir / "manifest.json").string().c_str());
    return kSafety;
  }
  return kOk;
}

// ------------------------------------------------------------------ equilibria

int cmd_equilibria(const Common& c, const std::string& box_text, int resolution,
                   const std::string& mode_text) {
  const Scenario s = resolve_scenario(c.scenario);
  const auto ps = p_values(c, s);
  const Box box = box_text.empty() ? s.box : parse_box(box_text, s.n());
  if (mode_text != "original" && mode_text != "modified") {
    throw UsageError("--mode must be original or modified");
  }
  const ControllerMode mode =
      mode_text == "original" ? ControllerMode::kOriginal : ControllerMode::kModified;
  const SearchGrid grid = default_grid(box, resolution);

  const fs::path dir(c.out_dir);
  fs::create_directories(dir);
  const std::string csv_name = s.name + "_" + mode_text + "_equilibria.csv";
  std::ofstream csv(dir / csv_name);
  std::ostringstream table;
  write_equilibria_csv_header(table, s.n());

  RunManifest manifest;
  manifest.command = "equilibria";
  manifest.scenario = s.name;
  manifest.p_values = ps;
  manifest.seed = c.seed;
  manifest.config = "equilibria;scenario=" + c.scenario + ";mode=" + mode_text +
                    ";p=" + join(ps) + ";box=" + fmt(box.lower) + "/" + fmt(box.upper) +
                    ";resolution=" + std::to_string(resolution);
  manifest.outputs.push_back(csv_name);

  bool unresolved = false;
  std::vector<std::string> summary;
  for (double pv : ps) {
    const ClosedLoop loop(s, mode, pv);
    const auto search = find_equilibria(loop.qp_model(), s.certs, loop.weight(), grid);
    write_equilibria_csv_rows(table, search.equilibria);
    const auto cert = interior_certificate(loop.qp_model(), s.certs, loop.weight(), grid);
    std::string line = "p=" + fmt(pv) + ": origin=" +
                       std::to_string(search.count(EquilibriumKind::kOrigin)) +
                       " interior=" + std::to_string(search.count(EquilibriumKind::kInterior)) +
                       " boundary1=" + std::to_string(search.count(EquilibriumKind::kBoundary1)) +
                       " boundary2=" + std::to_string(search.count(EquilibriumKind::kBoundary2)) +
                       " interior_certificate=" + (cert.holds ? "true" : "false");
    for (const auto& w : cert.witnesses) line += " witness=(" + fmt(w) + ")";
    if (!search.anomalies.empty()) {
      line += " anomalies=" + std::to_string(search.anomalies.size());
      manifest.notes.push_back("p=" + fmt(pv) + ": root outside the safe set");
    }
    if (!search.unresolved.empty()) {
      unresolved = true;
      line += " unresolved=" + std::to_string(search.unresolved.size());
      for (const auto& u : search.unresolved) {
        manifest.notes.push_back("p=" + fmt(pv) + ": unresolved seed (" + fmt(u) + ")");
      }
    }
    summary.push_back(line);
  }
  csv << table.str();
  std::cout << table.str();
  for (const auto& line : summary) std::cout << "# " << line << '\n';
  manifest.notes.insert(manifest.notes.end(), summary.begin(), summary.end());
  write_manifest(dir, manifest);
  return unresolved ? kUnresolved : kOk;
}

// ------------------------------------------------------------------ validate

int cmd_validate(const Common& c, std::size_t samples) {
  const Scenario s = resolve_scenario(c.scenario);
  const auto ps = p_values(c, s);
  if (samples == 0) {
    std::printf("warning: --samples 0, nothing to compare (vacuous pass)\n");
    return kOk;
  }
  constexpr double kInputTol = 1e-6;
  constexpr double kSlackTol = 1e-6;
  constexpr double kKktTol = 1e-8;
  BoxSampler sampler(s.box, c.seed);
  const auto sample = sampler.draw(samples);
  bool pass = true;
  for (double pv : ps) {
    const auto cmp = compare_with_oracle(s.model, s.certs, QPWeight(pv), sample);
    const bool ok = cmp.max_du <= kInputTol && cmp.max_ddelta <= kSlackTol && cmp.max_kkt <= kKktTol;
    pass = pass && ok;
    std::printf("%s p=%s samples=%zu max|du|=%s max|ddelta|=%s max_kkt=%s region_mismatch=%zu\n",
                ok ? "PASS" : "FAIL", fmt(pv).c_str(), cmp.count, fmt(cmp.max_du, 3).c_str(),
                fmt(cmp.max_ddelta, 3).c_str(), fmt(cmp.max_kkt, 3).c_str(),
                cmp.region_mismatches);
    if (!ok) std::printf("  worst state (%s)\n", fmt(cmp.worst_state).c_str());
  }
  return pass ? kOk : kValidation;
}

// ------------------------------------------------------------------ roa

int cmd_roa(const Common& c, std::size_t samples) {
  const Scenario s = resolve_scenario(c.scenario);
  const auto ps = p_values(c, s);
  const NominalController nominal =
      s.nominal ? *s.nominal
                : sontag_nominal(s.model, s.certs, SamplingConfig{s.box, 10000, c.seed});
  const TransformedModel tmodel(s.model, nominal);
  RoaOptions opt;
  opt.box = s.box;
  opt.min_accepted = samples;
  opt.seed = c.seed;
  for (double pv : ps) {
    try {
      const RoaEstimate est = estimate_roa(tmodel, s.certs, QPWeight(pv), opt);
      std::printf("scenario=%s p=%s eta=%s", s.name.c_str(), fmt(pv).c_str(),
                  fmt(est.eta, 6).c_str());
      if (est.sampled_radius) std::printf(" radius=%s", fmt(*est.sampled_radius, 6).c_str());
      std::printf(" samples=%zu levels=%d", est.sample_count, est.levels_tested);
      if (est.blocking_point) std::printf(" blocking=(%s)", fmt(*est.blocking_point).c_str());
      std::printf("\n");
    } catch (const EstimateUnavailableError& e) {
      std::fprintf(stderr, "roa unavailable: %s\n", e.what());
      return kRoaUnavailable;
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CLF-CBF quadratic program safety filters: solve, simulate, analyze"};
  app.require_subcommand(1);
  Common common;
  const auto add_common = [&](CLI::App* sub, bool with_out) {
    sub->add_option("--scenario", common.scenario, "built-in name or scenario document path");
    sub->add_option("--p", common.p_list, "comma-separated QP weights (default: scenario's)");
    sub->add_option("--seed", common.seed, "sampling seed (CBFLAB_SEED overrides)");
    if (with_out) sub->add_option("--out", common.out_dir, "output directory");
  };

  std::string x_text;
  auto* solve_cmd = app.add_subcommand("solve", "closed-form QP solution at one state");
  add_common(solve_cmd, false);
  solve_cmd->add_option("--x", x_text, "state, e.g. 1,0")->required();

  std::string mode_text = "original";
  std::string starts_text;
  double step = 1e-3;
  double horizon = 20.0;
  int resolution = 81;
  auto* sim_cmd = app.add_subcommand("simulate", "closed-loop trajectories, CSV and SVG");
  add_common(sim_cmd, true);
  sim_cmd->add_option("--mode", mode_text, "original or modified");
  sim_cmd->add_option("--starts", starts_text, "ring:16:r=6 or x,y;x,y");
  sim_cmd->add_option("--step", step, "RK4 step");
  sim_cmd->add_option("--horizon", horizon, "final time");
  sim_cmd->add_option("--grid", resolution, "grid points per axis for equilibrium markers");

  std::string box_text;
  auto* eq_cmd = app.add_subcommand("equilibria", "locate and classify closed-loop equilibria");
  add_common(eq_cmd, true);
  eq_cmd->add_option("--box", box_text, "search box lo,hi;lo,hi (default: scenario's)");
  eq_cmd->add_option("--grid", resolution, "grid points per axis (>= 8)");
  eq_cmd->add_option("--mode", mode_text, "original or modified");

  std::size_t samples = 10000;
  auto* val_cmd = app.add_subcommand("validate", "closed form against the enumeration oracle");
  add_common(val_cmd, false);
  val_cmd->add_option("--samples", samples, "number of sampled states");

  std::size_t roa_samples = 10000;
  auto* roa_cmd = app.add_subcommand("roa", "region-of-attraction estimate");
  add_common(roa_cmd, false);
  roa_cmd->add_option("--samples", roa_samples, "accepted samples per tested level");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    common.seed = effective_seed(common.seed);
    if (*solve_cmd) return cmd_solve(common, x_text);
    if (*sim_cmd) return cmd_simulate(common, mode_text, starts_text, step, horizon, resolution);
    if (*eq_cmd) return cmd_equilibria(common, box_text, resolution, mode_text);
    if (*val_cmd) return cmd_validate(common, samples);
    if (*roa_cmd) return cmd_roa(common, roa_samples);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const ScenarioError& e) {
    std::fprintf(stderr, "scenario error: %s\n", e.what());
    return kScenario;
  } catch (const ConfigurationError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return kScenario;
  } catch (const NominalRejectedError& e) {
    std::fprintf(stderr, "nominal controller rejected: %s\n", e.what());
    return kScenario;
  } catch (const EstimateUnavailableError& e) {
    std::fprintf(stderr, "estimate unavailable: %s\n", e.what());
    return kRoaUnavailable;
  } catch (const Error& e) {
    std::fprintf(stderr, "solver error: %s\n", e.what());
    return kSolver;
  }
  return kUsage;
}
