#pragma once

/// @file ig.hpp
/// Influence-graph localisation. Backward search from the alarmed variables
/// bounds the set of possible primary deviations; each survivor is forward
/// tested by propagating its deviation through the graph; the diagnosis is
/// the smallest set of accepted hypotheses that jointly reproduces every
/// global and local residual.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tankdiag/bondgraph.hpp"
#include "tankdiag/common.hpp"
#include "tankdiag/detection.hpp"

namespace tankdiag {

struct IgSettings {
  /// Predictions must match residuals within band * threshold.
  double band = 0.5;
};

namespace detail {

inline int alarm_sign(Alarm a) { return a == Alarm::High ? 1 : a == Alarm::Low ? -1 : 0; }

inline int sign_of(double v) { return v > 0 ? 1 : v < 0 ? -1 : 0; }

/// Tarjan's strongly connected components over `nodes` restricted to `arcs`.
inline std::vector<std::vector<VarId>> strongly_connected(const std::vector<VarId>& nodes,
                                                          const std::multimap<VarId, VarId>& succ) {
  std::map<VarId, int> index, low;
  std::set<VarId> on_stack;
  std::vector<VarId> stack;
  std::vector<std::vector<VarId>> out;
  int counter = 0;
  std::function<void(const VarId&)> visit = [&](const VarId& v) {
    index[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack.insert(v);
    auto [b, e] = succ.equal_range(v);
    for (auto it = b; it != e; ++it) {
      const auto& w = it->second;
      if (!index.count(w)) {
        visit(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack.count(w)) {
        low[v] = std::min(low[v], index[w]);
      }
    }
    if (low[v] == index[v]) {
      std::vector<VarId> comp;
      VarId w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack.erase(w);
        comp.push_back(w);
      } while (w != v);
      out.push_back(std::move(comp));
    }
  };
  for (const auto& v : nodes)
    if (!index.count(v)) visit(v);
  return out;
}

}  // namespace detail

/// Candidate primary deviations. Ancestors of each alarmed variable are walked
/// backwards; a walk stops at a measured variable that is normal. Candidates
/// are the alarmed variables of every strongly connected component of the
/// alarmed subgraph that has no alarmed predecessor outside itself, plus
/// every input reached without crossing a normal measured variable.
inline std::vector<VarId> backward_search(const InfluenceGraph& g, const AlarmState& alarms) {
  std::vector<VarId> alarmed;
  for (const auto& id : g.measured())
    if (alarms.alarmed(id)) alarmed.push_back(id);
  if (alarmed.empty()) return {};

  std::multimap<VarId, VarId> succ;
  for (const auto& a : g.arcs())
    if (alarms.alarmed(a.src) && alarms.alarmed(a.dst) && g.node(a.src).measured) succ.emplace(a.src, a.dst);

  std::set<VarId> out;
  for (const auto& comp : detail::strongly_connected(alarmed, succ)) {
    const std::set<VarId> inside(comp.begin(), comp.end());
    bool fed_from_outside = false;
    for (const auto& [src, dst] : succ)
      if (inside.count(dst) && !inside.count(src)) fed_from_outside = true;
    if (!fed_from_outside) out.insert(comp.begin(), comp.end());
  }

  std::set<VarId> visited;
  std::vector<VarId> stack(alarmed.begin(), alarmed.end());
  while (!stack.empty()) {
    const auto v = stack.back();
    stack.pop_back();
    if (!visited.insert(v).second) continue;
    for (const auto& a : g.in_arcs(v)) {
      const auto& p = g.node(a.src);
      if (p.kind == NodeKind::Input) out.insert(p.id);
      else if (p.measured && alarms.alarmed(p.id)) stack.push_back(p.id);
    }
  }
  std::vector<VarId> result(out.begin(), out.end());
  std::sort(result.begin(), result.end(), variable_less);
  return result;
}

struct Hypothesis {
  VarId source;
  bool accepted = false;
  double magnitude = 0.0;
  FaultSet explained;
  bool locally_confirmed = false;
  std::map<VarId, double> predicted;  // steady deviation of each measured variable
  std::string reason;                 // why it was rejected
};

namespace detail {

/// Precomputed linear views of the graph used by forward testing.
struct Propagation {
  std::vector<VarId> measured;
  std::map<VarId, Eigen::VectorXd> input_response;  // steady deviation per unit input step
  std::vector<LocalConstraint> constraints;
  Eigen::MatrixXd local;  // constraints x measured, steady coefficients

  explicit Propagation(const InfluenceGraph& g) : measured(g.measured()), constraints(local_constraints(g)) {
    for (const auto& in : g.inputs()) input_response[in] = g.steady_response(in);
    local.resize(static_cast<Eigen::Index>(constraints.size()), static_cast<Eigen::Index>(measured.size()));
    for (std::size_t j = 0; j < constraints.size(); ++j)
      for (std::size_t i = 0; i < measured.size(); ++i)
        local(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = constraints[j].steady_coefficient(measured[i]);
  }

  Eigen::Index index(const VarId& id) const {
    return std::find(measured.begin(), measured.end(), id) - measured.begin();
  }

  /// Deviation of every measured variable for a source of the given magnitude.
  Eigen::VectorXd effect(const VarId& source, double magnitude) const {
    if (auto it = input_response.find(source); it != input_response.end()) return magnitude * it->second;
    Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(measured.size()));
    e(index(source)) = magnitude;
    return e;
  }
};

inline const GlobalAlarm& global_of(const AlarmState& a, const VarId& id) {
  auto it = a.global.find(id);
  if (it == a.global.end()) throw ValidationError("alarm state has no entry for '" + id + "'");
  return it->second;
}

}  // namespace detail

/// Propagates one candidate's deviation and checks it against the alarms.
/// A sensor-located source must show an abrupt step in its own residual (a
/// physical variable downstream of stores cannot jump); its magnitude is
/// that step. An input's magnitude is inferred from the gradual part of its
/// measured successors' deviations through the steady gains.
inline Hypothesis forward_test(const InfluenceGraph& g, const VarId& source, const AlarmState& alarms,
                               const IgSettings& s = {}) {
  if (!g.has(source)) throw ValidationError("unknown source '" + source + "'");
  const detail::Propagation prop(g);
  Hypothesis h;
  h.source = source;
  const auto& node = g.node(source);

  if (node.kind == NodeKind::Input) {
    const auto& resp = prop.input_response.at(source);
    double num = 0.0, den = 0.0;
    for (const auto& a : g.out_arcs(source)) {
      if (!g.node(a.dst).measured) continue;
      const auto& ga = detail::global_of(alarms, a.dst);
      const double gain = resp(prop.index(a.dst));
      num += gain * (ga.value - ga.step);
      den += gain * gain;
    }
    h.magnitude = den > 0.0 ? num / den : 0.0;
  } else if (node.measured) {
    const auto& ga = detail::global_of(alarms, source);
    if (std::abs(ga.step) <= ga.threshold) {
      h.reason = "no abrupt deviation on " + source + "; its deviation is propagated, not primary";
      return h;
    }
    h.magnitude = ga.step;
  } else {
    h.reason = "unmeasured non-input node";
    return h;
  }

  const Eigen::VectorXd p = prop.effect(source, h.magnitude);
  bool significant = false;
  std::string contradicted;
  for (std::size_t i = 0; i < prop.measured.size(); ++i) {
    const auto& id = prop.measured[i];
    const double v = p(static_cast<Eigen::Index>(i));
    h.predicted[id] = v;
    const auto& ga = detail::global_of(alarms, id);
    if (std::abs(v) > s.band * ga.threshold) significant = true;
    if (ga.state == Alarm::Normal && std::abs(v) > (1.0 + s.band) * ga.threshold && contradicted.empty())
      contradicted = id;
    if (ga.state != Alarm::Normal && detail::sign_of(v) == detail::alarm_sign(ga.state) &&
        std::abs(v) > s.band * ga.threshold)
      h.explained.insert(id);
  }
  if (!contradicted.empty()) {
    h.explained.clear();
    h.reason = "predicts a deviation on " + contradicted + " which is normal";
    return h;
  }
  if (!significant) {
    h.reason = "no deviation attributable to " + source;
    return h;
  }

  std::set<std::string> predicted_violations;
  const Eigen::VectorXd lp = prop.local * p;
  for (std::size_t j = 0; j < prop.constraints.size(); ++j) {
    const auto& id = prop.constraints[j].id;
    auto it = alarms.local.find(id);
    const double thr = it == alarms.local.end() ? 0.0 : it->second.threshold;
    if (std::abs(lp(static_cast<Eigen::Index>(j))) > thr) predicted_violations.insert(id);
  }
  h.locally_confirmed = predicted_violations == alarms.violated();
  h.accepted = true;
  return h;
}

struct IgDiagnosis {
  FaultSet sources;
  std::map<VarId, FaultSet> cover;                       // per source: alarmed variables it accounts for
  std::map<VarId, std::map<VarId, double>> contribution;  // per source: fitted deviation per measured variable
  std::map<VarId, double> magnitudes;
  std::vector<VarId> candidates;
  std::vector<Hypothesis> hypotheses;
  std::vector<FaultSet> alternatives;  // other minimum-cardinality explanations, if any
  bool consistent = true;              // false when the fallback cover was used
};

namespace detail {

struct JointFit {
  bool ok = false;
  std::map<VarId, double> magnitudes;
  std::map<VarId, Eigen::VectorXd> contributions;
};

/// Sensor magnitudes are fixed at their steps, input magnitudes are least-squares
/// fitted to what remains; the joint prediction must reproduce every global and
/// local residual within the band and keep each hypothesis' sign.
inline JointFit joint_fit(const Propagation& prop, const AlarmState& alarms, const std::vector<Hypothesis>& set,
                          const IgSettings& s) {
  JointFit fit;
  const auto n = static_cast<Eigen::Index>(prop.measured.size());
  Eigen::VectorXd d(n), thr(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& ga = global_of(alarms, prop.measured[static_cast<std::size_t>(i)]);
    d(i) = ga.value;
    thr(i) = ga.threshold;
  }
  Eigen::VectorXd rest = d;
  std::vector<const Hypothesis*> inputs;
  for (const auto* h = set.data(); h != set.data() + set.size(); ++h) {
    if (prop.input_response.count(h->source)) {
      inputs.push_back(h);
      continue;
    }
    fit.magnitudes[h->source] = h->magnitude;
    fit.contributions[h->source] = prop.effect(h->source, h->magnitude);
    rest -= fit.contributions[h->source];
  }
  if (!inputs.empty()) {
    Eigen::MatrixXd G(n, static_cast<Eigen::Index>(inputs.size()));
    for (std::size_t j = 0; j < inputs.size(); ++j) G.col(static_cast<Eigen::Index>(j)) = prop.input_response.at(inputs[j]->source);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(G);
    if (qr.rank() < G.cols()) return fit;
    const Eigen::VectorXd a = qr.solve(rest);
    for (std::size_t j = 0; j < inputs.size(); ++j) {
      const auto& h = *inputs[j];
      const double m = a(static_cast<Eigen::Index>(j));
      if (sign_of(m) != sign_of(h.magnitude)) return fit;
      fit.magnitudes[h.source] = m;
      fit.contributions[h.source] = prop.effect(h.source, m);
    }
  }
  Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
  for (const auto& [id, c] : fit.contributions) {
    if (((c.array().abs() - s.band * thr.array()) > 0.0).count() == 0) return fit;  // negligible source
    p += c;
  }
  for (Eigen::Index i = 0; i < n; ++i)
    if (std::abs(d(i) - p(i)) > s.band * thr(i)) return fit;
  const Eigen::VectorXd lp = prop.local * p;
  for (std::size_t j = 0; j < prop.constraints.size(); ++j) {
    auto it = alarms.local.find(prop.constraints[j].id);
    if (it == alarms.local.end()) continue;
    if (std::abs(it->second.value - lp(static_cast<Eigen::Index>(j))) > s.band * it->second.threshold) return fit;
  }
  fit.ok = true;
  return fit;
}

}  // namespace detail

/// Backward search, forward test, then the minimum-cardinality set of accepted
/// hypotheses that jointly explains all residuals (ties: canonical
/// lexicographic order). If no such set exists, the smallest set of accepted
/// hypotheses covering the alarms is returned and any alarmed variable left
/// uncovered becomes a source itself.
inline IgDiagnosis ig_diagnose(const InfluenceGraph& g, const AlarmState& alarms, const IgSettings& s = {}) {
  IgDiagnosis out;
  const FaultSet alarmed = alarms.alarmed();
  if (alarmed.empty() && alarms.violated().empty()) return out;

  const detail::Propagation prop(g);
  out.candidates = backward_search(g, alarms);
  std::vector<Hypothesis> accepted;
  for (const auto& c : out.candidates) {
    out.hypotheses.push_back(forward_test(g, c, alarms, s));
    if (out.hypotheses.back().accepted) accepted.push_back(out.hypotheses.back());
  }

  const std::size_t n = accepted.size();
  for (std::size_t k = 1; k <= n && out.sources.empty(); ++k) {
    // subsets of size k in lexicographic order of the canonical hypothesis list
    std::vector<std::size_t> idx(k);
    for (std::size_t i = 0; i < k; ++i) idx[i] = i;
    while (true) {
      std::vector<Hypothesis> subset;
      for (auto i : idx) subset.push_back(accepted[i]);
      if (auto fit = detail::joint_fit(prop, alarms, subset, s); fit.ok) {
        FaultSet set;
        for (const auto& h : subset) set.insert(h.source);
        if (out.sources.empty()) {
          out.sources = set;
          out.magnitudes = fit.magnitudes;
          for (const auto& [id, c] : fit.contributions) {
            for (std::size_t i = 0; i < prop.measured.size(); ++i) {
              const auto& v = prop.measured[i];
              const double x = c(static_cast<Eigen::Index>(i));
              out.contribution[id][v] = x;
              if (alarmed.count(v) && std::abs(x) > s.band * detail::global_of(alarms, v).threshold) out.cover[id].insert(v);
            }
            out.cover[id];
          }
        } else {
          out.alternatives.push_back(set);
        }
      }
      std::size_t pos = k;
      while (pos > 0 && idx[pos - 1] == n - k + pos - 1) --pos;
      if (pos == 0) break;
      ++idx[pos - 1];
      for (std::size_t i = pos; i < k; ++i) idx[i] = idx[i - 1] + 1;
    }
  }
  if (!out.sources.empty()) return out;

  // No quantitative explanation: smallest qualitative cover.
  out.consistent = false;
  if (n >= 32) throw ValidationError("too many accepted hypotheses for exhaustive cover search");
  std::vector<std::size_t> best;
  std::size_t best_size = std::numeric_limits<std::size_t>::max();
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    std::vector<std::size_t> pick;
    FaultSet covered;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1U) {
        pick.push_back(i);
        covered.insert(accepted[i].explained.begin(), accepted[i].explained.end());
      }
    std::size_t size = pick.size();
    for (const auto& v : alarmed) size += !covered.count(v);
    if (size < best_size) {
      best_size = size;
      best = std::move(pick);
    }
  }
  FaultSet covered;
  for (auto i : best) {
    out.sources.insert(accepted[i].source);
    out.cover[accepted[i].source] = accepted[i].explained;
    covered.insert(accepted[i].explained.begin(), accepted[i].explained.end());
  }
  for (const auto& v : alarmed)
    if (!covered.count(v)) {
      out.sources.insert(v);
      out.cover[v] = {v};
    }
  return out;
}

}  // namespace tankdiag
