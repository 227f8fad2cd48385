#pragma once

/// @file bondgraph.hpp
/// Bond-graph representation of linear hydraulic plants built from flow
/// sources, capacitive stores, resistors and 0/1 junctions. Provides the
/// sequential causality assignment, and the two derived views used
/// downstream: a state-space model (states = store efforts) and an
/// influence graph over the measured variables.

#include <cmath>
#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tankdiag/common.hpp"

namespace tankdiag {

enum class ElementKind { FlowSource, EffortStore, Resistor };
enum class JunctionKind { Zero, One };
enum class SensorKind { Effort, Flow };

/// Which end of a bond imposes the effort. The causal stroke sits at the other end.
enum class EffortSide { Unassigned, From, To };

inline const char* to_string(ElementKind k) {
  switch (k) {
    case ElementKind::FlowSource: return "Sf";
    case ElementKind::EffortStore: return "C";
    case ElementKind::Resistor: return "R";
  }
  return "?";
}

struct Element {
  std::string id;
  ElementKind kind;
  double parameter;
};

struct Junction {
  std::string id;
  JunctionKind kind;
  std::vector<std::size_t> bonds;  // indices into BondGraphModel::bonds(), in insertion order
};

/// Power flows from `from` to `to` (half-arrow at `to`).
struct Bond {
  std::string from;
  std::string to;
  EffortSide causality = EffortSide::Unassigned;
  std::string effort_var;
  std::string flow_var;
};

struct Sensor {
  std::string id;
  SensorKind kind;
  std::string junction;
};

/// Raised when causality cannot be assigned; names the junction (or element) where it failed.
class CausalityError : public ValidationError {
 public:
  CausalityError(const std::string& where, const std::string& why)
      : ValidationError("causality conflict at '" + where + "': " + why), where_(where) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

class BondGraphModel {
 public:
  void add_element(const std::string& id, ElementKind kind, double parameter) {
    check_new_id(id);
    if (!std::isfinite(parameter)) throw ValidationError("element '" + id + "': parameter is not finite");
    if (kind != ElementKind::FlowSource && !(parameter > 0.0))
      throw ValidationError("element '" + id + "': parameter must be > 0, got " + std::to_string(parameter));
    element_index_[id] = elements_.size();
    elements_.push_back({id, kind, parameter});
  }

  void add_junction(const std::string& id, JunctionKind kind) {
    check_new_id(id);
    junction_index_[id] = junctions_.size();
    junctions_.push_back({id, kind, {}});
  }

  void add_bond(const std::string& from, const std::string& to) {
    if (!has_node(from)) throw ValidationError("bond references unknown node '" + from + "'");
    if (!has_node(to)) throw ValidationError("bond references unknown node '" + to + "'");
    if (from == to) throw ValidationError("bond from '" + from + "' to itself");
    const std::size_t k = bonds_.size();
    const std::string n = std::to_string(k + 1);
    bonds_.push_back({from, to, EffortSide::Unassigned, "e" + n, "f" + n});
    for (const auto* end : {&from, &to}) {
      if (auto j = junction_index_.find(*end); j != junction_index_.end()) junctions_[j->second].bonds.push_back(k);
    }
  }

  void add_sensor(const std::string& id, SensorKind kind, const std::string& junction) {
    for (const auto& s : sensors_)
      if (s.id == id) throw ValidationError("duplicate sensor id '" + id + "'");
    auto j = junction_index_.find(junction);
    if (j == junction_index_.end()) throw ValidationError("sensor '" + id + "' on unknown junction '" + junction + "'");
    const auto jk = junctions_[j->second].kind;
    if (kind == SensorKind::Effort && jk != JunctionKind::Zero)
      throw ValidationError("effort sensor '" + id + "' must sit on a 0-junction");
    if (kind == SensorKind::Flow && jk != JunctionKind::One)
      throw ValidationError("flow sensor '" + id + "' must sit on a 1-junction");
    sensors_.push_back({id, kind, junction});
  }

  const std::vector<Element>& elements() const { return elements_; }
  const std::vector<Junction>& junctions() const { return junctions_; }
  const std::vector<Bond>& bonds() const { return bonds_; }
  std::vector<Bond>& bonds() { return bonds_; }
  const std::vector<Sensor>& sensors() const { return sensors_; }

  bool has_node(const std::string& id) const { return element_index_.count(id) || junction_index_.count(id); }
  const Element* element(const std::string& id) const {
    auto it = element_index_.find(id);
    return it == element_index_.end() ? nullptr : &elements_[it->second];
  }
  const Junction* junction(const std::string& id) const {
    auto it = junction_index_.find(id);
    return it == junction_index_.end() ? nullptr : &junctions_[it->second];
  }

  /// The single bond attached to a one-port element.
  std::size_t element_bond(const std::string& id) const {
    for (std::size_t k = 0; k < bonds_.size(); ++k)
      if (bonds_[k].from == id || bonds_[k].to == id) return k;
    throw ValidationError("element '" + id + "' has no bond");
  }

  /// Structural checks: one bond per element, connectivity.
  void validate() const {
    if (elements_.empty()) throw ValidationError("model has no elements");
    for (const auto& e : elements_) {
      int n = 0;
      for (const auto& b : bonds_) n += (b.from == e.id) + (b.to == e.id);
      if (n != 1) throw ValidationError("element '" + e.id + "' must have exactly one bond, has " + std::to_string(n));
    }
    std::map<std::string, std::vector<std::string>> adj;
    for (const auto& b : bonds_) {
      adj[b.from].push_back(b.to);
      adj[b.to].push_back(b.from);
    }
    std::set<std::string> seen;
    std::vector<std::string> stack{elements_.front().id};
    while (!stack.empty()) {
      auto n = stack.back();
      stack.pop_back();
      if (!seen.insert(n).second) continue;
      for (const auto& m : adj[n]) stack.push_back(m);
    }
    const std::size_t nodes = elements_.size() + junctions_.size();
    if (seen.size() != nodes) throw ValidationError("bond graph is not connected");
  }

  bool causality_assigned() const {
    return !bonds_.empty() && std::all_of(bonds_.begin(), bonds_.end(),
                                          [](const Bond& b) { return b.causality != EffortSide::Unassigned; });
  }

  std::size_t count(ElementKind k) const {
    return static_cast<std::size_t>(
        std::count_if(elements_.begin(), elements_.end(), [k](const Element& e) { return e.kind == k; }));
  }
  std::size_t count(SensorKind k) const {
    return static_cast<std::size_t>(
        std::count_if(sensors_.begin(), sensors_.end(), [k](const Sensor& s) { return s.kind == k; }));
  }

 private:
  void check_new_id(const std::string& id) const {
    if (id.empty()) throw ValidationError("empty node id");
    if (has_node(id)) throw ValidationError("duplicate node id '" + id + "'");
  }

  std::vector<Element> elements_;
  std::vector<Junction> junctions_;
  std::vector<Bond> bonds_;
  std::vector<Sensor> sensors_;
  std::map<std::string, std::size_t> element_index_;
  std::map<std::string, std::size_t> junction_index_;
};

struct ThreeTankParams {
  double C1 = 1.0, C2 = 1.0, C3 = 1.0;
  double R1 = 1.0, R2 = 1.0, R0 = 1.0;
  double Msf1 = 1.0, Msf2 = 1.0;
};

/// Three tanks in a row: Msf1 feeds tank 1, Msf2 feeds tank 3, valves 1 and 2
/// drain tanks 1 and 3 into tank 2, and the outlet R0 drains tank 2 to ambient.
inline BondGraphModel build_three_tank_model(const ThreeTankParams& p = {}) {
  for (auto [name, v] : {std::pair{"C1", p.C1}, {"C2", p.C2}, {"C3", p.C3}, {"R1", p.R1}, {"R2", p.R2}, {"R0", p.R0}})
    if (!(v > 0.0) || !std::isfinite(v))
      throw ValidationError(std::string("three-tank parameter ") + name + " must be > 0");

  BondGraphModel m;
  m.add_element("Msf1", ElementKind::FlowSource, p.Msf1);
  m.add_element("Msf2", ElementKind::FlowSource, p.Msf2);
  m.add_element("C1", ElementKind::EffortStore, p.C1);
  m.add_element("C2", ElementKind::EffortStore, p.C2);
  m.add_element("C3", ElementKind::EffortStore, p.C3);
  m.add_element("R1", ElementKind::Resistor, p.R1);
  m.add_element("R2", ElementKind::Resistor, p.R2);
  m.add_element("R0", ElementKind::Resistor, p.R0);
  m.add_junction("tank1", JunctionKind::Zero);
  m.add_junction("tank2", JunctionKind::Zero);
  m.add_junction("tank3", JunctionKind::Zero);
  m.add_junction("valve1", JunctionKind::One);
  m.add_junction("valve2", JunctionKind::One);

  m.add_bond("Msf1", "tank1");
  m.add_bond("tank1", "C1");
  m.add_bond("tank1", "valve1");
  m.add_bond("valve1", "R1");
  m.add_bond("valve1", "tank2");
  m.add_bond("tank2", "C2");
  m.add_bond("tank2", "R0");
  m.add_bond("Msf2", "tank3");
  m.add_bond("tank3", "C3");
  m.add_bond("tank3", "valve2");
  m.add_bond("valve2", "R2");
  m.add_bond("valve2", "tank2");

  m.add_sensor("De1", SensorKind::Effort, "tank1");
  m.add_sensor("De2", SensorKind::Effort, "tank2");
  m.add_sensor("De3", SensorKind::Effort, "tank3");
  m.add_sensor("Df1", SensorKind::Flow, "valve1");
  m.add_sensor("Df2", SensorKind::Flow, "valve2");
  m.validate();
  return m;
}

/// Text format, one item per line, '#' starts a comment:
///   Sf <id> <flow>      C <id> <capacitance>      R <id> <resistance>
///   0 <id>              1 <id>
///   bond <from> <to>
///   sensor <id> effort|flow <junction>
inline BondGraphModel parse_bond_graph(std::istream& in) {
  BondGraphModel m;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (auto h = raw.find('#'); h != std::string::npos) raw.erase(h);
    std::istringstream ls(raw);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    const std::string& kind = tok[0];
    auto need = [&](std::size_t n) {
      if (tok.size() != n)
        throw ParseError("'" + kind + "' expects " + std::to_string(n - 1) + " argument(s)", line_no);
    };
    try {
      if (kind == "Sf" || kind == "C" || kind == "R") {
        need(3);
        double v = 0.0;
        try {
          std::size_t used = 0;
          v = std::stod(tok[2], &used);
          if (used != tok[2].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
          throw ParseError("bad number '" + tok[2] + "'", line_no);
        }
        auto ek = kind == "Sf" ? ElementKind::FlowSource : kind == "C" ? ElementKind::EffortStore : ElementKind::Resistor;
        m.add_element(tok[1], ek, v);
      } else if (kind == "0" || kind == "1") {
        need(2);
        m.add_junction(tok[1], kind == "0" ? JunctionKind::Zero : JunctionKind::One);
      } else if (kind == "bond") {
        need(3);
        m.add_bond(tok[1], tok[2]);
      } else if (kind == "sensor") {
        need(4);
        if (tok[2] != "effort" && tok[2] != "flow") throw ParseError("sensor kind must be effort or flow", line_no);
        m.add_sensor(tok[1], tok[2] == "effort" ? SensorKind::Effort : SensorKind::Flow, tok[3]);
      } else if (kind == "Se" || kind == "I" || kind == "TF" || kind == "GY" || kind == "MSe" || kind == "MSf" ||
                 kind == "De" || kind == "Df") {
        throw ParseError("unsupported element '" + kind + "'", line_no);
      } else {
        throw ParseError("unknown item '" + kind + "'", line_no);
      }
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  m.validate();
  return m;
}

namespace detail {

inline const std::string& other_end(const Bond& b, const std::string& node) { return b.from == node ? b.to : b.from; }

inline EffortSide side_of(const Bond& b, const std::string& node) {
  return b.from == node ? EffortSide::From : EffortSide::To;
}

inline EffortSide opposite(EffortSide s) { return s == EffortSide::From ? EffortSide::To : EffortSide::From; }

inline bool sets_effort(const Bond& b, const std::string& node) {
  return b.causality != EffortSide::Unassigned && b.causality == side_of(b, node);
}

/// Power sign of bond b seen from node: +1 when the half-arrow points at it.
inline double power_sign(const Bond& b, const std::string& node) { return b.to == node ? 1.0 : -1.0; }

class CausalityAssigner {
 public:
  explicit CausalityAssigner(BondGraphModel& m) : m_(m) {}

  void run() {
    for (auto& b : m_.bonds()) b.causality = EffortSide::Unassigned;

    for (const auto& e : m_.elements())
      if (e.kind == ElementKind::FlowSource) set(m_.element_bond(e.id), e.id, false);
    propagate();

    for (const auto& e : m_.elements()) {
      if (e.kind != ElementKind::EffortStore) continue;
      const auto k = m_.element_bond(e.id);
      if (m_.bonds()[k].causality == EffortSide::Unassigned) {
        set(k, e.id, true);
        propagate();
      } else if (!sets_effort(m_.bonds()[k], e.id)) {
        throw CausalityError(e.id, "store forced into derivative causality");
      }
    }

    for (const auto& e : m_.elements()) {
      if (e.kind != ElementKind::Resistor) continue;
      const auto k = m_.element_bond(e.id);
      if (m_.bonds()[k].causality == EffortSide::Unassigned) {
        set(k, e.id, false);
        propagate();
      }
    }

    for (std::size_t k = 0; k < m_.bonds().size(); ++k) {
      if (m_.bonds()[k].causality == EffortSide::Unassigned) {
        m_.bonds()[k].causality = EffortSide::From;
        propagate();
      }
    }
    verify();
  }

 private:
  // node sets (or does not set) the effort on bond k
  void set(std::size_t k, const std::string& node, bool node_sets_effort) {
    auto& b = m_.bonds()[k];
    const auto want = node_sets_effort ? side_of(b, node) : opposite(side_of(b, node));
    if (b.causality == EffortSide::Unassigned) {
      b.causality = want;
      changed_ = true;
    } else if (b.causality != want) {
      throw CausalityError(node, "bond " + b.from + "->" + b.to + " already carries the opposite causality");
    }
  }

  void propagate() {
    do {
      changed_ = false;
      for (const auto& j : m_.junctions()) step(j);
      for (const auto& e : m_.elements()) check_element(e);
    } while (changed_);
  }

  // At a 0-junction exactly one bond brings the effort in; at a 1-junction exactly
  // one bond brings the flow in, i.e. the junction imposes effort on exactly one bond.
  void step(const Junction& j) {
    const bool zero = j.kind == JunctionKind::Zero;
    std::vector<std::size_t> deciding, unassigned;
    for (auto k : j.bonds) {
      const auto& b = m_.bonds()[k];
      if (b.causality == EffortSide::Unassigned) {
        unassigned.push_back(k);
        continue;
      }
      const bool junction_sets_effort = sets_effort(b, j.id);
      if (zero ? !junction_sets_effort : junction_sets_effort) deciding.push_back(k);
    }
    if (deciding.size() > 1)
      throw CausalityError(j.id, zero ? "more than one bond imposes effort on a 0-junction"
                                      : "more than one bond imposes flow on a 1-junction");
    if (deciding.size() == 1) {
      for (auto k : unassigned) set(k, j.id, zero);
    } else if (unassigned.size() == 1) {
      set(unassigned.front(), j.id, !zero);
    } else if (unassigned.empty() && !j.bonds.empty()) {
      throw CausalityError(j.id, zero ? "no bond imposes effort on the 0-junction"
                                      : "no bond imposes flow on the 1-junction");
    }
  }

  void check_element(const Element& e) {
    const auto k = m_.element_bond(e.id);
    auto& b = m_.bonds()[k];
    if (b.causality == EffortSide::Unassigned) return;
    if (e.kind == ElementKind::FlowSource && sets_effort(b, e.id))
      throw CausalityError(e.id, "flow source cannot impose effort");
  }

  void verify() const {
    for (const auto& j : m_.junctions()) {
      std::size_t n = 0;
      for (auto k : j.bonds) {
        const bool s = sets_effort(m_.bonds()[k], j.id);
        n += j.kind == JunctionKind::Zero ? !s : s;
      }
      if (n != 1) throw CausalityError(j.id, "junction causality invariant violated");
    }
    for (const auto& e : m_.elements()) {
      const auto& b = m_.bonds()[m_.element_bond(e.id)];
      if (e.kind == ElementKind::EffortStore && !sets_effort(b, e.id))
        throw CausalityError(e.id, "store in derivative causality");
    }
  }

  BondGraphModel& m_;
  bool changed_ = false;
};

}  // namespace detail

/// Sequential causality assignment: sources first, then stores in integral
/// causality, then resistors, each followed by propagation through junctions.
/// Idempotent; any previous marks are discarded.
inline BondGraphModel assign_causality(BondGraphModel model) {
  model.validate();
  detail::CausalityAssigner(model).run();
  return model;
}

using LinearExpr = std::map<std::string, double>;

namespace detail {

inline void accumulate(LinearExpr& into, const LinearExpr& e, double scale) {
  for (const auto& [k, v] : e) {
    into[k] += scale * v;
    if (into[k] == 0.0) into.erase(k);
  }
}

/// Expresses bond efforts and flows as linear combinations of symbols,
/// following the assigned causality. `effort_symbol`/`flow_symbol` decide
/// where expansion stops (states, inputs, or measured variables).
class CausalEvaluator {
 public:
  CausalEvaluator(const BondGraphModel& m, bool stop_at_sensors) : m_(m), stop_at_sensors_(stop_at_sensors) {
    for (const auto& s : m.sensors()) (s.kind == SensorKind::Effort ? effort_sensor_ : flow_sensor_)[s.junction] = s.id;
  }

  LinearExpr effort(std::size_t k) {
    guard g(*this, 2 * k);
    const auto& b = m_.bonds()[k];
    const std::string& setter = b.causality == EffortSide::From ? b.from : b.to;
    if (const auto* e = m_.element(setter)) {
      if (e->kind == ElementKind::EffortStore) return store_effort(*e);
      if (e->kind == ElementKind::Resistor) {
        LinearExpr out;
        accumulate(out, flow(k), e->parameter * power_sign(b, e->id));
        return out;
      }
      throw UsageError("flow source '" + e->id + "' cannot set effort");
    }
    return junction_effort(*m_.junction(setter), k);
  }

  LinearExpr flow(std::size_t k) {
    guard g(*this, 2 * k + 1);
    const auto& b = m_.bonds()[k];
    const std::string& setter = b.causality == EffortSide::From ? b.to : b.from;
    if (const auto* e = m_.element(setter)) {
      if (e->kind == ElementKind::FlowSource) return {{e->id, -power_sign(b, e->id)}};
      if (e->kind == ElementKind::Resistor) {
        LinearExpr out;
        accumulate(out, effort(k), power_sign(b, e->id) / e->parameter);
        return out;
      }
      throw UsageError("store '" + e->id + "' in derivative causality");
    }
    return junction_flow(*m_.junction(setter), k);
  }

  /// Effort common to a 0-junction, expanded one level even if it is measured.
  LinearExpr zero_junction_effort(const Junction& j) {
    for (auto k : j.bonds)
      if (!sets_effort(m_.bonds()[k], j.id)) return effort(k);
    throw UsageError("0-junction '" + j.id + "' has no effort input");
  }

  /// Flow common to a 1-junction, expanded one level even if it is measured.
  LinearExpr one_junction_flow(const Junction& j) {
    for (auto k : j.bonds)
      if (sets_effort(m_.bonds()[k], j.id)) return flow(k);
    throw UsageError("1-junction '" + j.id + "' has no flow input");
  }

  /// Net flow into a store's bond, seen from the store.
  LinearExpr store_inflow(const Element& c) {
    const auto k = m_.element_bond(c.id);
    LinearExpr out;
    accumulate(out, flow(k), power_sign(m_.bonds()[k], c.id));
    return out;
  }

  const std::map<std::string, std::string>& effort_sensors() const { return effort_sensor_; }

 private:
  struct guard {
    guard(CausalEvaluator& ev, std::size_t key) : ev_(ev), key_(key) {
      if (!ev_.active_.insert(key).second) throw NumericError("algebraic loop in bond graph");
    }
    ~guard() { ev_.active_.erase(key_); }
    CausalEvaluator& ev_;
    std::size_t key_;
  };

  std::string junction_of(const Element& e) const {
    const auto& b = m_.bonds()[m_.element_bond(e.id)];
    return other_end(b, e.id);
  }

  LinearExpr store_effort(const Element& c) {
    if (stop_at_sensors_) {
      if (auto it = effort_sensor_.find(junction_of(c)); it != effort_sensor_.end()) return {{it->second, 1.0}};
      throw UsageError("store '" + c.id + "' is not measured; the influence graph needs every store observed");
    }
    return {{c.id, 1.0}};
  }

  LinearExpr junction_effort(const Junction& j, std::size_t k) {
    if (j.kind == JunctionKind::Zero) {
      if (stop_at_sensors_)
        if (auto it = effort_sensor_.find(j.id); it != effort_sensor_.end()) return {{it->second, 1.0}};
      return zero_junction_effort(j);
    }
    // 1-junction: sum of signed efforts vanishes
    LinearExpr out;
    const double sk = power_sign(m_.bonds()[k], j.id);
    for (auto o : j.bonds)
      if (o != k) accumulate(out, effort(o), -power_sign(m_.bonds()[o], j.id) / sk);
    return out;
  }

  LinearExpr junction_flow(const Junction& j, std::size_t k) {
    if (j.kind == JunctionKind::One) {
      if (stop_at_sensors_)
        if (auto it = flow_sensor_.find(j.id); it != flow_sensor_.end()) return {{it->second, 1.0}};
      return one_junction_flow(j);
    }
    LinearExpr out;
    const double sk = power_sign(m_.bonds()[k], j.id);
    for (auto o : j.bonds)
      if (o != k) accumulate(out, flow(o), -power_sign(m_.bonds()[o], j.id) / sk);
    return out;
  }

  const BondGraphModel& m_;
  bool stop_at_sensors_;
  std::map<std::string, std::string> effort_sensor_;  // junction -> sensor id
  std::map<std::string, std::string> flow_sensor_;
  std::set<std::size_t> active_;
};

}  // namespace detail

/// dx/dt = A x + B u, y = C x + D u.
struct StateSpace {
  Eigen::MatrixXd A, B, C, D;
  std::vector<std::string> states;   // store element ids; x_i is the store's effort (pressure)
  std::vector<std::string> inputs;   // flow source ids
  std::vector<std::string> outputs;  // sensor ids
  Eigen::VectorXd nominal_input;

  Eigen::Index n_states() const { return A.rows(); }
  Eigen::Index n_inputs() const { return B.cols(); }
  Eigen::Index n_outputs() const { return C.rows(); }

  Eigen::Index output_index(const std::string& id) const {
    auto it = std::find(outputs.begin(), outputs.end(), id);
    if (it == outputs.end()) throw ValidationError("unknown output '" + id + "'");
    return it - outputs.begin();
  }
  Eigen::Index input_index(const std::string& id) const {
    auto it = std::find(inputs.begin(), inputs.end(), id);
    if (it == inputs.end()) throw ValidationError("unknown input '" + id + "'");
    return it - inputs.begin();
  }
};

inline StateSpace derive_state_equations(const BondGraphModel& model) {
  if (!model.causality_assigned()) throw UsageError("derive_state_equations: causality not assigned");
  StateSpace ss;
  for (const auto& e : model.elements()) {
    if (e.kind == ElementKind::EffortStore) ss.states.push_back(e.id);
    if (e.kind == ElementKind::FlowSource) ss.inputs.push_back(e.id);
  }
  for (const auto& s : model.sensors()) ss.outputs.push_back(s.id);
  const auto n = static_cast<Eigen::Index>(ss.states.size());
  const auto m = static_cast<Eigen::Index>(ss.inputs.size());
  const auto p = static_cast<Eigen::Index>(ss.outputs.size());
  ss.A = Eigen::MatrixXd::Zero(n, n);
  ss.B = Eigen::MatrixXd::Zero(n, m);
  ss.C = Eigen::MatrixXd::Zero(p, n);
  ss.D = Eigen::MatrixXd::Zero(p, m);
  ss.nominal_input = Eigen::VectorXd::Zero(m);
  for (Eigen::Index j = 0; j < m; ++j) ss.nominal_input(j) = model.element(ss.inputs[j])->parameter;

  auto place = [&](const LinearExpr& expr, Eigen::Index row, Eigen::MatrixXd& X, Eigen::MatrixXd& U, double scale) {
    for (const auto& [sym, c] : expr) {
      if (auto it = std::find(ss.states.begin(), ss.states.end(), sym); it != ss.states.end())
        X(row, it - ss.states.begin()) += scale * c;
      else if (auto iu = std::find(ss.inputs.begin(), ss.inputs.end(), sym); iu != ss.inputs.end())
        U(row, iu - ss.inputs.begin()) += scale * c;
      else
        throw NumericError("unexpected symbol '" + sym + "' in state equation");
    }
  };

  detail::CausalEvaluator ev(model, false);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& c = *model.element(ss.states[i]);
    place(ev.store_inflow(c), i, ss.A, ss.B, 1.0 / c.parameter);
  }
  for (Eigen::Index i = 0; i < p; ++i) {
    const auto& s = model.sensors()[i];
    const auto& j = *model.junction(s.junction);
    place(s.kind == SensorKind::Effort ? ev.zero_junction_effort(j) : ev.one_junction_flow(j), i, ss.C, ss.D, 1.0);
  }
  return ss;
}

enum class NodeKind { Input, Integrator, Algebraic };

struct InfluenceNode {
  std::string id;
  NodeKind kind;
  bool measured;
  double leak = 0.0;   // self-dependence coefficient in the node's own equation
  double scale = 1.0;  // capacitance for integrators (residuals in flow units), 1 otherwise
};

struct InfluenceArc {
  std::string src;
  std::string dst;
  double gain;
};

/// Directed graph over inputs and measured variables. Integrator nodes obey
/// d(v)/dt = sum(gain * parent) + leak * v; algebraic nodes v = sum(gain * parent).
class InfluenceGraph {
 public:
  InfluenceGraph() = default;
  InfluenceGraph(std::vector<InfluenceNode> nodes, std::vector<InfluenceArc> arcs)
      : nodes_(std::move(nodes)), arcs_(std::move(arcs)) {
    for (std::size_t i = 0; i < nodes_.size(); ++i) index_[nodes_[i].id] = i;
    for (const auto& a : arcs_) {
      if (!index_.count(a.src) || !index_.count(a.dst)) throw ValidationError("arc references unknown node");
      if (!std::isfinite(a.gain) || a.gain == 0.0) throw ValidationError("arc gain must be finite and nonzero");
    }
  }

  const std::vector<InfluenceNode>& nodes() const { return nodes_; }
  const std::vector<InfluenceArc>& arcs() const { return arcs_; }
  bool has(const std::string& id) const { return index_.count(id) != 0; }
  const InfluenceNode& node(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw ValidationError("unknown variable '" + id + "'");
    return nodes_[it->second];
  }

  std::optional<double> gain(const std::string& src, const std::string& dst) const {
    for (const auto& a : arcs_)
      if (a.src == src && a.dst == dst) return a.gain;
    return std::nullopt;
  }

  std::vector<InfluenceArc> in_arcs(const std::string& id) const {
    std::vector<InfluenceArc> out;
    for (const auto& a : arcs_)
      if (a.dst == id) out.push_back(a);
    return out;
  }
  std::vector<InfluenceArc> out_arcs(const std::string& id) const {
    std::vector<InfluenceArc> out;
    for (const auto& a : arcs_)
      if (a.src == id) out.push_back(a);
    return out;
  }
  std::size_t in_degree(const std::string& id) const { return in_arcs(id).size(); }

  std::vector<std::string> measured() const {
    std::vector<std::string> out;
    for (const auto& n : nodes_)
      if (n.measured) out.push_back(n.id);
    return out;
  }
  std::vector<std::string> inputs() const {
    std::vector<std::string> out;
    for (const auto& n : nodes_)
      if (n.kind == NodeKind::Input) out.push_back(n.id);
    return out;
  }

  /// Steady deviation of every measured variable (in measured() order) caused by a unit
  /// step on an input. Solves the node equations with all derivatives at zero.
  Eigen::VectorXd steady_response(const std::string& input) const {
    if (node(input).kind != NodeKind::Input) throw ValidationError("'" + input + "' is not an input");
    const auto ms = measured();
    const auto n = static_cast<Eigen::Index>(ms.size());
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    auto col = [&](const std::string& id) { return std::find(ms.begin(), ms.end(), id) - ms.begin(); };
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& v = node(ms[i]);
      // integrator: 0 = sum(g * parent) + leak * v;  algebraic: v - sum(g * parent) = 0
      const double sign = v.kind == NodeKind::Integrator ? 1.0 : -1.0;
      M(i, i) = v.kind == NodeKind::Integrator ? v.leak : 1.0;
      for (const auto& a : in_arcs(v.id)) {
        if (a.src == input) rhs(i) -= sign * a.gain;
        else if (node(a.src).measured) M(i, col(a.src)) += sign * a.gain;
      }
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
    if (!lu.isInvertible()) throw NumericError("influence graph has no unique steady state");
    return lu.solve(rhs);
  }

 private:
  std::vector<InfluenceNode> nodes_;
  std::vector<InfluenceArc> arcs_;
  std::map<std::string, std::size_t> index_;
};

/// Reduces the causal bond graph to relations among measured variables and
/// inputs: each sensor's defining equation is expanded along the causal
/// strokes until it reaches other sensors or sources.
inline InfluenceGraph derive_influence_graph(const BondGraphModel& model) {
  if (!model.causality_assigned()) throw UsageError("derive_influence_graph: causality not assigned");
  std::vector<InfluenceNode> nodes;
  std::vector<InfluenceArc> arcs;
  for (const auto& e : model.elements())
    if (e.kind == ElementKind::FlowSource) nodes.push_back({e.id, NodeKind::Input, false, 0.0, 1.0});

  detail::CausalEvaluator ev(model, true);
  for (const auto& s : model.sensors()) {
    const auto& j = *model.junction(s.junction);
    LinearExpr rhs;
    InfluenceNode node{s.id, NodeKind::Algebraic, true, 0.0, 1.0};
    if (s.kind == SensorKind::Effort) {
      const Element* store = nullptr;
      for (auto k : j.bonds) {
        const auto& b = model.bonds()[k];
        if (const auto* e = model.element(detail::other_end(b, j.id)); e && e->kind == ElementKind::EffortStore) store = e;
      }
      if (!store) throw UsageError("effort sensor '" + s.id + "' has no store on its junction");
      node.kind = NodeKind::Integrator;
      node.scale = store->parameter;
      detail::accumulate(rhs, ev.store_inflow(*store), 1.0 / store->parameter);
    } else {
      rhs = ev.one_junction_flow(j);
    }
    for (const auto& [sym, c] : rhs) {
      if (sym == s.id) node.leak += c;
      else arcs.push_back({sym, s.id, c});
    }
    nodes.push_back(node);
  }
  std::stable_sort(arcs.begin(), arcs.end(), [](const InfluenceArc& a, const InfluenceArc& b) {
    return variable_less(a.dst, b.dst) || (a.dst == b.dst && variable_less(a.src, b.src));
  });
  return InfluenceGraph(std::move(nodes), std::move(arcs));
}

}  // namespace tankdiag
