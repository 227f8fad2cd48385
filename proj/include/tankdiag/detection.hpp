#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tankdiag/bondgraph.hpp"
#include "tankdiag/common.hpp"
#include "tankdiag/plant.hpp"

namespace tankdiag {

/// One analytical redundancy relation per measured variable, read off its
/// influence-graph node equation:
///   integrator v:  r_v = scale * (dv/dt - sum(gain * parent) - leak * v)
///   algebraic v:   r_v = v - sum(gain * parent)
/// Inputs enter with their commanded values.
struct LocalConstraint {
  std::string id;        // "r_" + variable
  VarId variable;
  NodeKind kind;
  double scale;
  double leak;
  std::vector<InfluenceArc> terms;  // incoming arcs of the variable

  /// Every variable the formula mentions, including a derivative-only occurrence.
  FaultSet occurrences() const {
    FaultSet s{variable};
    for (const auto& a : terms) s.insert(a.src);
    return s;
  }

  /// Variables whose step bias still moves the residual once derivatives vanish.
  FaultSet steady_occurrences() const {
    FaultSet s;
    for (const auto& a : terms) s.insert(a.src);
    if (kind == NodeKind::Algebraic || leak != 0.0) s.insert(variable);
    return s;
  }

  /// d r / d(value of id) with all derivatives at zero.
  double steady_coefficient(const VarId& id) const {
    double c = 0.0;
    const double k = kind == NodeKind::Integrator ? scale : 1.0;
    for (const auto& a : terms)
      if (a.src == id) c -= k * a.gain;
    if (id == variable) c += kind == NodeKind::Integrator ? -scale * leak : 1.0;
    return c;
  }
};

inline std::vector<LocalConstraint> local_constraints(const InfluenceGraph& g) {
  std::vector<LocalConstraint> out;
  for (const auto& n : g.nodes()) {
    if (!n.measured) continue;
    out.push_back({"r_" + n.id, n.id, n.kind, n.scale, n.leak, g.in_arcs(n.id)});
  }
  return out;
}

struct ResidualTrace {
  std::vector<double> times;
  std::vector<VarId> global_ids;
  std::vector<std::string> local_ids;
  Eigen::MatrixXd global;  // steps x measured variables: y - y_nominal
  Eigen::MatrixXd local;   // steps x constraints

  Eigen::Index global_index(const VarId& id) const {
    auto it = std::find(global_ids.begin(), global_ids.end(), id);
    if (it == global_ids.end()) throw ValidationError("no global residual for '" + id + "'");
    return it - global_ids.begin();
  }
  Eigen::Index local_index(const std::string& id) const {
    auto it = std::find(local_ids.begin(), local_ids.end(), id);
    if (it == local_ids.end()) throw ValidationError("no local residual '" + id + "'");
    return it - local_ids.begin();
  }
  std::size_t index_at(double t) const {
    const double dt = times.size() > 1 ? times[1] - times[0] : 1.0;
    if (times.empty() || t < times.front() - 1e-9 || t > times.back() + 1e-9)
      throw ValidationError("time " + std::to_string(t) + " outside residual trace");
    return std::min(static_cast<std::size_t>(std::floor((t - times.front()) / dt + 1e-9)), times.size() - 1);
  }
};

/// Global residuals compare against the nominal run; local residuals are
/// evaluated on the faulty measurements alone (derivatives by backward difference).
inline ResidualTrace compute_residuals(const SimulationTrace& trace, const SimulationTrace& nominal,
                                       const InfluenceGraph& graph) {
  if (trace.size() != nominal.size() || trace.size() < 2) throw ValidationError("traces do not share a time grid");
  for (std::size_t k = 0; k < trace.size(); ++k)
    if (std::abs(trace.times[k] - nominal.times[k]) > 1e-9) throw ValidationError("traces do not share a time grid");
  if (trace.output_ids != nominal.output_ids) throw ValidationError("traces have different outputs");

  ResidualTrace r;
  r.times = trace.times;
  r.global_ids = graph.measured();
  const auto steps = static_cast<Eigen::Index>(trace.size());
  const double dt = trace.dt();
  r.global.resize(steps, static_cast<Eigen::Index>(r.global_ids.size()));
  for (std::size_t i = 0; i < r.global_ids.size(); ++i) {
    const auto c = trace.output(r.global_ids[i]);
    r.global.col(static_cast<Eigen::Index>(i)) = trace.measurements.col(c) - nominal.measurements.col(c);
  }

  auto value = [&](const VarId& id, Eigen::Index k) -> double {
    if (auto it = std::find(trace.input_ids.begin(), trace.input_ids.end(), id); it != trace.input_ids.end())
      return trace.commanded(k, it - trace.input_ids.begin());
    return trace.measurements(k, trace.output(id));
  };

  const auto cons = local_constraints(graph);
  r.local.resize(steps, static_cast<Eigen::Index>(cons.size()));
  for (std::size_t j = 0; j < cons.size(); ++j) {
    const auto& c = cons[j];
    r.local_ids.push_back(c.id);
    for (Eigen::Index k = 0; k < steps; ++k) {
      double rhs = 0.0;
      for (const auto& a : c.terms) rhs += a.gain * value(a.src, k);
      double res;
      if (c.kind == NodeKind::Integrator) {
        const double deriv = k == 0 ? 0.0 : (value(c.variable, k) - value(c.variable, k - 1)) / dt;
        res = c.scale * (deriv - rhs - c.leak * value(c.variable, k));
      } else {
        res = value(c.variable, k) - rhs;
      }
      r.local(k, static_cast<Eigen::Index>(j)) = res;
    }
  }
  return r;
}

struct Thresholds {
  std::map<VarId, double> global;
  std::map<std::string, double> local;
};

/// Global threshold: fraction of the variable's nominal value. Local threshold:
/// fraction of the smallest nonzero nominal flow term in the constraint.
/// Both are floored so that a zero nominal never yields a zero threshold.
inline Thresholds default_thresholds(const InfluenceGraph& g, const std::map<VarId, double>& nominal_values,
                                     double fraction, double floor = 1e-6) {
  if (!(fraction > 0.0)) throw ValidationError("threshold fraction must be > 0");
  auto nominal = [&](const VarId& id) {
    auto it = nominal_values.find(id);
    if (it == nominal_values.end()) throw ValidationError("no nominal value for '" + id + "'");
    return it->second;
  };
  Thresholds t;
  for (const auto& id : g.measured()) t.global[id] = std::max(fraction * std::abs(nominal(id)), floor);
  for (const auto& c : local_constraints(g)) {
    const double k = c.kind == NodeKind::Integrator ? c.scale : 1.0;
    double smallest = std::numeric_limits<double>::infinity();
    auto consider = [&](double term) {
      if (std::abs(term) > 1e-12) smallest = std::min(smallest, std::abs(term));
    };
    for (const auto& a : c.terms) consider(k * a.gain * nominal(a.src));
    if (c.kind == NodeKind::Algebraic) consider(nominal(c.variable));
    else consider(k * c.leak * nominal(c.variable));
    t.local[c.id] = std::isfinite(smallest) ? std::max(fraction * smallest, floor) : floor;
  }
  return t;
}

enum class Alarm { Normal, High, Low };

inline const char* to_string(Alarm a) {
  switch (a) {
    case Alarm::Normal: return "normal";
    case Alarm::High: return "high";
    case Alarm::Low: return "low";
  }
  return "?";
}

struct GlobalAlarm {
  Alarm state = Alarm::Normal;
  double value = 0.0;      // residual at the decision instant
  double threshold = 1.0;
  double step = 0.0;       // largest single-sample change of the residual up to the decision instant
};

struct LocalAlarm {
  bool violated = false;
  double value = 0.0;
  double threshold = 1.0;
};

struct AlarmState {
  std::map<VarId, GlobalAlarm> global;
  std::map<std::string, LocalAlarm> local;
  double decided_at = 0.0;

  Alarm alarm(const VarId& id) const {
    auto it = global.find(id);
    return it == global.end() ? Alarm::Normal : it->second.state;
  }
  bool alarmed(const VarId& id) const { return alarm(id) != Alarm::Normal; }

  FaultSet alarmed() const {
    FaultSet s;
    for (const auto& [id, a] : global)
      if (a.state != Alarm::Normal) s.insert(id);
    return s;
  }
  std::set<std::string> violated() const {
    std::set<std::string> s;
    for (const auto& [id, a] : local)
      if (a.violated) s.insert(id);
    return s;
  }
};

inline AlarmState detect_alarms(const ResidualTrace& r, const Thresholds& thresholds, double persistence,
                                double decided_at) {
  const double dt = r.times.size() > 1 ? r.times[1] - r.times[0] : 0.0;
  if (!(persistence >= dt - 1e-12)) throw ValidationError("persistence must be >= dt");
  const auto end = r.index_at(decided_at);
  if (decided_at - persistence < r.times.front() - 1e-9) throw ValidationError("persistence window starts before trace");
  const auto begin = r.index_at(decided_at - persistence);

  auto threshold_of = [](const auto& map, const std::string& id) {
    auto it = map.find(id);
    if (it == map.end()) throw ValidationError("no threshold for '" + id + "'");
    if (!(it->second > 0.0)) throw ValidationError("threshold for '" + id + "' must be > 0");
    return it->second;
  };

  AlarmState out;
  out.decided_at = decided_at;
  for (std::size_t i = 0; i < r.global_ids.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    GlobalAlarm a;
    a.threshold = threshold_of(thresholds.global, r.global_ids[i]);
    a.value = r.global(static_cast<Eigen::Index>(end), c);
    bool high = true, low = true;
    for (auto k = begin; k <= end; ++k) {
      const double v = r.global(static_cast<Eigen::Index>(k), c);
      high = high && v > a.threshold;
      low = low && v < -a.threshold;
    }
    a.state = high ? Alarm::High : low ? Alarm::Low : Alarm::Normal;
    for (std::size_t k = 1; k <= end; ++k) {
      const double d = r.global(static_cast<Eigen::Index>(k), c) - r.global(static_cast<Eigen::Index>(k - 1), c);
      if (std::abs(d) > std::abs(a.step)) a.step = d;
    }
    out.global[r.global_ids[i]] = a;
  }
  for (std::size_t j = 0; j < r.local_ids.size(); ++j) {
    const auto c = static_cast<Eigen::Index>(j);
    LocalAlarm a;
    a.threshold = threshold_of(thresholds.local, r.local_ids[j]);
    a.value = r.local(static_cast<Eigen::Index>(end), c);
    bool violated = true;
    for (auto k = begin; k <= end; ++k) violated = violated && std::abs(r.local(static_cast<Eigen::Index>(k), c)) > a.threshold;
    a.violated = violated;
    out.local[r.local_ids[j]] = a;
  }
  return out;
}

}  // namespace tankdiag
