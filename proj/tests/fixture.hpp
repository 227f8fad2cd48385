#pragma once

#include "tankdiag/tankdiag.hpp"

namespace testfx {

using namespace tankdiag;

/// Default three-tank plant, nominal run and detection settings shared by the tests.
struct Plant {
  BondGraphModel model = assign_causality(build_three_tank_model());
  StateSpace ss = derive_state_equations(model);
  InfluenceGraph graph = derive_influence_graph(model);
  Eigen::VectorXd x0 = steady_state(ss, ss.nominal_input);
  SimulationTrace nominal = simulate(ss, {}, 100.0, 0.01, x0);
  std::map<VarId, double> nominal_values = [this] {
    std::map<VarId, double> v;
    const Eigen::VectorXd y = ss.C * x0;
    for (Eigen::Index i = 0; i < y.size(); ++i) v[ss.outputs[static_cast<std::size_t>(i)]] = y(i);
    for (Eigen::Index i = 0; i < ss.nominal_input.size(); ++i) v[ss.inputs[static_cast<std::size_t>(i)]] = ss.nominal_input(i);
    return v;
  }();

  SimulationTrace run(const FaultScenario& sc) const { return simulate(ss, sc, 100.0, 0.01, x0); }

  AlarmState alarms(const FaultScenario& sc, double fraction = 0.05) const {
    return detect_alarms(compute_residuals(run(sc), nominal, graph), default_thresholds(graph, nominal_values, fraction),
                         0.5, 99.0);
  }

  /// Fault set with every member biased by `fraction` of its nominal value, onset 50 s.
  FaultScenario scenario(const FaultSet& targets, double fraction = 0.2) const {
    FaultScenario sc;
    for (const auto& t : canonical(targets)) sc.add(t, 50.0, fraction * nominal_values.at(t));
    return sc;
  }
};

inline const Plant& plant() {
  static const Plant p;
  return p;
}

}  // namespace testfx
