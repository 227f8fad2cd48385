#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tankdiag/bondgraph.hpp"
#include "tankdiag/common.hpp"

namespace tankdiag {

enum class FaultKind { ActuatorBias, SensorBias };

/// Additive step bias on an input flow (actuator) or on a measurement (sensor).
struct FaultSpec {
  VarId target;
  FaultKind kind;
  double onset;
  double magnitude;

  bool active_at(double t, double dt) const { return t >= onset - 1e-9 * dt; }
};

/// Flow sources are actuators; everything else is read by a sensor.
inline FaultKind default_fault_kind(const VarId& target) {
  return target.rfind("Msf", 0) == 0 || target.rfind("Sf", 0) == 0 ? FaultKind::ActuatorBias : FaultKind::SensorBias;
}

struct FaultScenario {
  std::string label;
  std::vector<FaultSpec> faults;

  void add(FaultSpec f) {
    if (f.target.empty()) throw ValidationError("fault without target");
    if (!(f.onset >= 0.0) || !std::isfinite(f.onset)) throw ValidationError("fault '" + f.target + "': onset must be >= 0");
    if (f.magnitude == 0.0 || !std::isfinite(f.magnitude))
      throw ValidationError("fault '" + f.target + "': magnitude must be finite and nonzero");
    if (f.kind != default_fault_kind(f.target))
      throw ValidationError("fault '" + f.target + "': kind does not match target");
    for (const auto& g : faults)
      if (g.target == f.target) throw ValidationError("two faults on '" + f.target + "'");
    faults.push_back(std::move(f));
  }

  void add(const VarId& target, double onset, double magnitude) {
    add(FaultSpec{target, default_fault_kind(target), onset, magnitude});
  }

  FaultSet targets() const {
    FaultSet s;
    for (const auto& f : faults) s.insert(f.target);
    return s;
  }
};

/// Grammar (UTF-8, '#' comments, blank lines ignored):
///   label: <text>
///   fault: target=<id> onset_s=<real> magnitude=<real>
inline FaultScenario parse_scenario(std::istream& in) {
  FaultScenario sc;
  std::string raw;
  int line_no = 0;
  bool have_label = false;
  while (std::getline(in, raw)) {
    ++line_no;
    if (auto h = raw.find('#'); h != std::string::npos) raw.erase(h);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw ParseError("expected 'label:' or 'fault:'", line_no);
    const std::string key = trim(line.substr(0, colon));
    const std::string rest = trim(line.substr(colon + 1));
    if (key == "label") {
      if (have_label) throw ParseError("duplicate label", line_no);
      sc.label = rest;
      have_label = true;
    } else if (key == "fault") {
      std::optional<std::string> target;
      std::optional<double> onset, magnitude;
      std::istringstream fs(rest);
      for (std::string kv; fs >> kv;) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ParseError("expected key=value, got '" + kv + "'", line_no);
        const std::string k = kv.substr(0, eq), v = kv.substr(eq + 1);
        auto number = [&]() {
          try {
            std::size_t used = 0;
            double d = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument("trailing");
            return d;
          } catch (const std::exception&) {
            throw ParseError("bad number '" + v + "' for " + k, line_no);
          }
        };
        if (k == "target") target = v;
        else if (k == "onset_s") onset = number();
        else if (k == "magnitude") magnitude = number();
        else throw ParseError("unknown fault field '" + k + "'", line_no);
      }
      if (!target || !onset || !magnitude) throw ParseError("fault needs target, onset_s and magnitude", line_no);
      try {
        sc.add(*target, *onset, *magnitude);
      } catch (const ValidationError& e) {
        throw ParseError(e.what(), line_no);
      }
    } else {
      throw ParseError("unknown key '" + key + "'", line_no);
    }
  }
  return sc;
}

/// Samples on a uniform grid. Row k of every matrix belongs to times[k].
struct SimulationTrace {
  std::vector<double> times;
  std::vector<std::string> state_ids, output_ids, input_ids;
  Eigen::MatrixXd true_state;    // steps x states
  Eigen::MatrixXd measurements;  // steps x outputs
  Eigen::MatrixXd commanded;     // steps x inputs
  Eigen::MatrixXd true_input;    // steps x inputs

  std::size_t size() const { return times.size(); }
  double dt() const { return times.size() > 1 ? times[1] - times[0] : 0.0; }

  /// Index of the last sample at or before t.
  std::size_t index_at(double t) const {
    if (times.empty()) throw ValidationError("empty trace");
    const double step = dt();
    if (t < times.front() - 1e-9) throw ValidationError("time before trace start");
    auto k = step > 0 ? static_cast<std::size_t>(std::floor((t - times.front()) / step + 1e-9)) : 0;
    return std::min(k, times.size() - 1);
  }

  Eigen::Index output(const std::string& id) const {
    auto it = std::find(output_ids.begin(), output_ids.end(), id);
    if (it == output_ids.end()) throw ValidationError("unknown output '" + id + "'");
    return it - output_ids.begin();
  }
};

struct NoiseConfig {
  double stddev = 0.0;
  std::uint64_t seed = 0;
};

/// Equilibrium x = -A^{-1} B u.
inline Eigen::VectorXd steady_state(const StateSpace& ss, const Eigen::VectorXd& u) {
  if (u.size() != ss.n_inputs()) throw ValidationError("input vector has wrong size");
  Eigen::FullPivLU<Eigen::MatrixXd> lu(ss.A);
  if (!lu.isInvertible()) throw NumericError("system matrix is singular; no unique equilibrium");
  return lu.solve(-ss.B * u);
}

/// Classic fixed-step RK4. Inputs are held constant over each step at their value
/// at the step start; faults switch on at the first sample t >= onset.
inline SimulationTrace simulate(const StateSpace& ss, const FaultScenario& scenario, double horizon, double dt,
                                const Eigen::VectorXd& x0, const NoiseConfig& noise = {}) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("dt must be > 0");
  if (!(horizon >= dt) || !std::isfinite(horizon)) throw ValidationError("horizon must be >= dt");
  if (x0.size() != ss.n_states()) throw ValidationError("initial state has wrong size");
  if (noise.stddev < 0.0) throw ValidationError("noise stddev must be >= 0");

  struct Bias {
    Eigen::Index index;
    const FaultSpec* spec;
  };
  std::vector<Bias> actuator, sensor;
  for (const auto& f : scenario.faults) {
    auto in = std::find(ss.inputs.begin(), ss.inputs.end(), f.target);
    auto out = std::find(ss.outputs.begin(), ss.outputs.end(), f.target);
    if (in != ss.inputs.end()) {
      if (f.kind != FaultKind::ActuatorBias) throw ValidationError("fault on input '" + f.target + "' must be an actuator bias");
      actuator.push_back({in - ss.inputs.begin(), &f});
    } else if (out != ss.outputs.end()) {
      if (f.kind != FaultKind::SensorBias) throw ValidationError("fault on sensor '" + f.target + "' must be a sensor bias");
      sensor.push_back({out - ss.outputs.begin(), &f});
    } else {
      throw ValidationError("fault target '" + f.target + "' is not a plant variable");
    }
  }

  const auto steps = static_cast<std::size_t>(std::floor(horizon / dt + 1e-9)) + 1;
  SimulationTrace tr;
  tr.state_ids = ss.states;
  tr.output_ids = ss.outputs;
  tr.input_ids = ss.inputs;
  tr.times.resize(steps);
  tr.true_state.resize(static_cast<Eigen::Index>(steps), ss.n_states());
  tr.measurements.resize(static_cast<Eigen::Index>(steps), ss.n_outputs());
  tr.commanded.resize(static_cast<Eigen::Index>(steps), ss.n_inputs());
  tr.true_input.resize(static_cast<Eigen::Index>(steps), ss.n_inputs());

  std::mt19937_64 rng(noise.seed);
  std::normal_distribution<double> gauss(0.0, noise.stddev > 0.0 ? noise.stddev : 1.0);

  Eigen::VectorXd x = x0;
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    const auto row = static_cast<Eigen::Index>(k);
    Eigen::VectorXd u = ss.nominal_input;
    for (const auto& a : actuator)
      if (a.spec->active_at(t, dt)) u(a.index) += a.spec->magnitude;
    Eigen::VectorXd y = ss.C * x + ss.D * u;
    for (const auto& s : sensor)
      if (s.spec->active_at(t, dt)) y(s.index) += s.spec->magnitude;
    if (noise.stddev > 0.0)
      for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += gauss(rng);

    tr.times[k] = t;
    tr.true_state.row(row) = x.transpose();
    tr.measurements.row(row) = y.transpose();
    tr.commanded.row(row) = ss.nominal_input.transpose();
    tr.true_input.row(row) = u.transpose();

    if (k + 1 == steps) break;
    const Eigen::VectorXd bu = ss.B * u;
    auto f = [&](const Eigen::VectorXd& s) -> Eigen::VectorXd { return ss.A * s + bu; };
    const Eigen::VectorXd k1 = f(x);
    const Eigen::VectorXd k2 = f(x + 0.5 * dt * k1);
    const Eigen::VectorXd k3 = f(x + 0.5 * dt * k2);
    const Eigen::VectorXd k4 = f(x + dt * k3);
    x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!x.allFinite()) throw NumericError("state became non-finite at step " + std::to_string(k + 1));
  }
  return tr;
}

}  // namespace tankdiag
