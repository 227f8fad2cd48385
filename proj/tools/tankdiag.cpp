// tankdiag: command-line front end for the three-tank diagnosis workbench.
//
//   tankdiag simulate  (--scenario FILE | --builtin SET) [--out FILE]
//   tankdiag diagnose  (--scenario FILE | --builtin SET) [--method fdi|dx|ig|all] [--format text|csv]
//   tankdiag table1    [--format text|csv]
//   tankdiag signature
//   tankdiag graph     [--model FILE]
//
// Every subcommand accepts --config FILE and the per-knob overrides below.
// Exit codes: 0 ok, 1 usage, 2 parse error, 3 numeric failure.

#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tankdiag/tankdiag.hpp"

namespace {

using namespace tankdiag;

struct Overrides {
  std::string config_file;
  std::optional<double> dt, horizon, onset, magnitude_fraction, threshold_fraction, persistence, decided_at, dx_tol,
      noise;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App& app) {
    app.add_option("--config", config_file, "JSON configuration file")->check(CLI::ExistingFile);
    app.add_option("--dt", dt, "integration step [s]");
    app.add_option("--horizon", horizon, "simulated time [s]");
    app.add_option("--onset", onset, "fault onset for built-in scenarios [s]");
    app.add_option("--magnitude-fraction", magnitude_fraction, "built-in fault size, fraction of nominal");
    app.add_option("--threshold-fraction", threshold_fraction, "alarm threshold, fraction of nominal");
    app.add_option("--persistence", persistence, "alarm persistence window [s]");
    app.add_option("--decided-at", decided_at, "decision instant [s]");
    app.add_option("--dx-tol", dx_tol, "relative fit tolerance for DX refinement");
    app.add_option("--noise", noise, "measurement noise standard deviation");
    app.add_option("--seed", seed, "noise seed");
  }

  Config resolve() const {
    Config c;
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      if (!in) throw UsageError("cannot open config '" + config_file + "'");
      c = parse_config(in);
    }
    if (dt) c.dt = *dt;
    if (horizon) c.horizon = *horizon;
    if (onset) c.onset = *onset;
    if (magnitude_fraction) c.magnitude_fraction = *magnitude_fraction;
    if (threshold_fraction) c.threshold_fraction = *threshold_fraction;
    if (persistence) c.persistence = *persistence;
    if (decided_at) c.decided_at = *decided_at;
    if (dx_tol) c.dx.tol = *dx_tol;
    if (noise) c.noise.stddev = *noise;
    if (seed) c.noise.seed = *seed;
    c.validate();
    return c;
  }
};

FaultScenario load_scenario(const Workbench& wb, const std::string& file, const std::string& builtin) {
  if (!file.empty() && !builtin.empty()) throw UsageError("give either --scenario or --builtin, not both");
  if (!builtin.empty()) return wb.builtin_scenario(parse_set(builtin));
  if (file.empty()) throw UsageError("a scenario is required (--scenario FILE or --builtin SET)");
  std::ifstream in(file);
  if (!in) throw UsageError("cannot open scenario '" + file + "'");
  return parse_scenario(in);
}

void print_signature(const SignatureMatrix& m, std::ostream& os) {
  os << std::left << std::setw(6) << "fault";
  for (const auto& c : m.constraints) os << ' ' << std::setw(7) << c;
  os << '\n';
  for (std::size_t f = 0; f < m.faults.size(); ++f) {
    os << std::setw(6) << m.faults[f];
    for (std::size_t c = 0; c < m.constraints.size(); ++c) os << ' ' << std::setw(7) << (m.entries[f][c] ? "1" : "0");
    os << '\n';
  }
}

void print_graph(const InfluenceGraph& g, std::ostream& os) {
  os << "# nodes\n";
  for (const auto& n : g.nodes()) {
    os << n.id << ' ' << (n.kind == NodeKind::Input ? "input" : n.kind == NodeKind::Integrator ? "integrator" : "algebraic")
       << (n.measured ? " measured" : "");
    if (n.leak != 0.0) os << " leak=" << n.leak;
    os << '\n';
  }
  os << "# arcs src dst gain\n";
  for (const auto& a : g.arcs()) os << a.src << ' ' << a.dst << ' ' << a.gain << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Three-tank multiple-fault diagnosis workbench"};
  app.require_subcommand(1);

  Overrides ov;
  std::string scenario_file, builtin, out_file, method = "all", format = "text", model_file;

  auto* sim = app.add_subcommand("simulate", "simulate a scenario and write the measurement trace as CSV");
  sim->add_option("--scenario", scenario_file, "scenario file");
  sim->add_option("--builtin", builtin, "built-in fault set, e.g. \"{Msf1, Df2}\"");
  sim->add_option("--out", out_file, "output file (default stdout)");
  ov.attach(*sim);

  auto* diag = app.add_subcommand("diagnose", "simulate a scenario and run the diagnosers");
  diag->add_option("--scenario", scenario_file, "scenario file");
  diag->add_option("--builtin", builtin, "built-in fault set, e.g. \"{Msf1, Df2}\"");
  diag->add_option("--method", method, "fdi, dx, ig or all");
  diag->add_option("--format", format, "text or csv");
  ov.attach(*diag);

  auto* table = app.add_subcommand("table1", "run the 19 built-in scenarios");
  table->add_option("--format", format, "text or csv");
  ov.attach(*table);

  auto* sig = app.add_subcommand("signature", "print the fault signature matrix");
  ov.attach(*sig);

  auto* graph = app.add_subcommand("graph", "print the influence graph");
  graph->add_option("--model", model_file, "bond-graph description file (default: built-in three-tank model)");
  ov.attach(*graph);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*graph && !model_file.empty()) {
      std::ifstream in(model_file);
      if (!in) throw UsageError("cannot open model '" + model_file + "'");
      print_graph(derive_influence_graph(assign_causality(parse_bond_graph(in))), std::cout);
      return 0;
    }
    const Workbench wb(ov.resolve());
    if (*sim) {
      const auto trace = wb.simulate_scenario(load_scenario(wb, scenario_file, builtin));
      if (out_file.empty()) {
        render_trace_csv(trace, std::cout);
      } else {
        std::ofstream out(out_file);
        if (!out) throw UsageError("cannot write '" + out_file + "'");
        render_trace_csv(trace, out);
      }
    } else if (*diag) {
      const auto m = parse_method(method);
      const auto f = parse_format(format);
      ExperimentReport r;
      r.rows.push_back(run_scenario(wb, load_scenario(wb, scenario_file, builtin), m));
      render_report(r, f, std::cout);
    } else if (*table) {
      render_report(run_table1(wb), parse_format(format), std::cout);
    } else if (*sig) {
      print_signature(wb.signature(), std::cout);
    } else if (*graph) {
      print_graph(wb.graph(), std::cout);
    }
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
