#pragma once

/// @file dx.hpp
/// Consistency-based diagnosis: each violated constraint yields a conflict
/// (the components its formula involves), diagnoses are hitting sets of the
/// conflicts, and linear fault models decide which hitting sets actually
/// reproduce the observed deviations.

#include <bit>
#include <cstdint>
#include <deque>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "tankdiag/common.hpp"
#include "tankdiag/detection.hpp"
#include "tankdiag/fdi.hpp"
#include "tankdiag/plant.hpp"

namespace tankdiag {

using ConflictSet = FaultSet;

/// One conflict per violated constraint, holding the faults its formula mentions.
inline std::vector<ConflictSet> compute_conflicts(const std::set<std::string>& violated, const SignatureMatrix& m) {
  std::vector<ConflictSet> out;
  for (const auto& c : m.constraints)
    if (violated.count(c)) out.push_back(m.column(c));
  return out;
}

inline std::vector<ConflictSet> compute_conflicts(const AlarmState& alarms, const SignatureMatrix& m) {
  return compute_conflicts(alarms.violated(), m);
}

namespace detail {

struct Universe {
  std::vector<VarId> ids;

  explicit Universe(std::vector<VarId> v) : ids(std::move(v)) {
    std::sort(ids.begin(), ids.end(), variable_less);
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (ids.size() > 64) throw ValidationError("hitting-set universe limited to 64 components");
  }

  std::uint64_t mask(const FaultSet& s) const {
    std::uint64_t m = 0;
    for (const auto& id : s) {
      auto it = std::find(ids.begin(), ids.end(), id);
      if (it == ids.end()) throw ValidationError("component '" + id + "' outside universe");
      m |= std::uint64_t{1} << (it - ids.begin());
    }
    return m;
  }

  FaultSet set(std::uint64_t m) const {
    FaultSet s;
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (m >> i & 1U) s.insert(ids[i]);
    return s;
  }
};

inline Universe universe_of(const std::vector<ConflictSet>& conflicts, const std::vector<VarId>& extra = {}) {
  std::vector<VarId> ids(extra);
  for (const auto& c : conflicts) ids.insert(ids.end(), c.begin(), c.end());
  return Universe(std::move(ids));
}

inline std::vector<FaultSet> sorted_sets(const Universe& u, const std::vector<std::uint64_t>& masks) {
  std::vector<FaultSet> out;
  for (auto m : masks) out.push_back(u.set(m));
  std::sort(out.begin(), out.end(), fault_set_less);
  return out;
}

}  // namespace detail

/// Reiter's HS-tree, explored breadth first. A node is closed when its path
/// repeats an earlier one or contains an already found hitting set; breadth-first
/// order then makes every hitting set found minimal. Output sorted by
/// (cardinality, canonical lexicographic order).
inline std::vector<FaultSet> minimal_hitting_sets(const std::vector<ConflictSet>& conflicts, std::size_t max_size = 7) {
  if (max_size < 1) throw ValidationError("max_size must be >= 1");
  for (const auto& c : conflicts)
    if (c.empty()) throw ValidationError("empty conflict set");
  const auto u = detail::universe_of(conflicts);
  std::vector<std::uint64_t> masks;
  for (const auto& c : conflicts) masks.push_back(u.mask(c));

  std::vector<std::uint64_t> found;
  std::unordered_set<std::uint64_t> seen{0};
  std::deque<std::uint64_t> queue{0};
  while (!queue.empty()) {
    const auto path = queue.front();
    queue.pop_front();
    if (std::any_of(found.begin(), found.end(), [path](std::uint64_t h) { return (h & path) == h; })) continue;
    auto label = std::find_if(masks.begin(), masks.end(), [path](std::uint64_t c) { return (c & path) == 0; });
    if (label == masks.end()) {
      found.push_back(path);
      continue;
    }
    if (static_cast<std::size_t>(std::popcount(path)) >= max_size) continue;
    for (std::uint64_t rest = *label; rest; rest &= rest - 1) {
      const auto child = path | (rest & -rest);
      if (seen.insert(child).second) queue.push_back(child);
    }
  }
  return detail::sorted_sets(u, found);
}

/// Every hitting set (minimal or not) drawn from `universe`, up to max_size.
inline std::vector<FaultSet> hitting_sets(const std::vector<ConflictSet>& conflicts, const std::vector<VarId>& universe,
                                          std::size_t max_size = 7) {
  const auto u = detail::universe_of(conflicts, universe);
  std::set<std::uint64_t> all;
  std::vector<std::uint64_t> frontier;
  for (const auto& s : minimal_hitting_sets(conflicts, max_size)) frontier.push_back(u.mask(s));
  while (!frontier.empty()) {
    std::vector<std::uint64_t> next;
    for (auto m : frontier) {
      if (!all.insert(m).second) continue;
      if (static_cast<std::size_t>(std::popcount(m)) >= max_size) continue;
      for (std::size_t i = 0; i < u.ids.size(); ++i)
        if (!(m >> i & 1U)) next.push_back(m | std::uint64_t{1} << i);
    }
    frontier = std::move(next);
  }
  return detail::sorted_sets(u, {all.begin(), all.end()});
}

/// Deviation of every measured variable, at the decision instant, produced by a unit bias.
struct FaultTemplate {
  VarId fault;
  Eigen::VectorXd deviation;
};

struct FaultTemplateSet {
  std::vector<VarId> measured;  // row order of every deviation vector
  std::vector<FaultTemplate> templates;

  const FaultTemplate& at(const VarId& id) const {
    for (const auto& t : templates)
      if (t.fault == id) return t;
    throw ValidationError("no fault template for '" + id + "'");
  }
};

struct TemplateSettings {
  double onset = 50.0;
  double horizon = 100.0;
  double dt = 0.01;
  double decided_at = 99.0;
};

/// One unit-bias simulation per input and per sensor, started from the nominal
/// equilibrium. Rejects template sets with collinear members (indistinguishable faults).
inline FaultTemplateSet build_fault_templates(const StateSpace& ss, const std::vector<VarId>& measured,
                                              const TemplateSettings& s = {}) {
  FaultTemplateSet out;
  out.measured = measured;
  const Eigen::VectorXd x0 = steady_state(ss, ss.nominal_input);
  const auto nominal = simulate(ss, {}, s.horizon, s.dt, x0);
  const auto k = static_cast<Eigen::Index>(nominal.index_at(s.decided_at));
  std::vector<VarId> faults(ss.inputs);
  faults.insert(faults.end(), ss.outputs.begin(), ss.outputs.end());
  std::sort(faults.begin(), faults.end(), variable_less);
  for (const auto& f : faults) {
    FaultScenario sc;
    sc.add(f, s.onset, 1.0);
    const auto tr = simulate(ss, sc, s.horizon, s.dt, x0);
    Eigen::VectorXd d(static_cast<Eigen::Index>(measured.size()));
    for (std::size_t i = 0; i < measured.size(); ++i) {
      const auto c = tr.output(measured[i]);
      d(static_cast<Eigen::Index>(i)) = tr.measurements(k, c) - nominal.measurements(k, c);
    }
    out.templates.push_back({f, d});
  }
  for (std::size_t i = 0; i < out.templates.size(); ++i) {
    for (std::size_t j = i + 1; j < out.templates.size(); ++j) {
      const auto& a = out.templates[i].deviation;
      const auto& b = out.templates[j].deviation;
      const double cosine = std::abs(a.dot(b)) / (a.norm() * b.norm());
      if (a.norm() == 0.0 || b.norm() == 0.0 || cosine > 1.0 - 1e-9)
        throw NumericError("fault templates of '" + out.templates[i].fault + "' and '" + out.templates[j].fault +
                           "' are collinear");
    }
  }
  return out;
}

struct CandidateFit {
  FaultSet candidate;
  bool accepted = false;
  double relative_residual = 0.0;
  std::vector<double> magnitudes;  // canonical order of the candidate's members
  std::string note;
};

struct DxDiagnosis {
  std::vector<FaultSet> diagnoses;
  std::vector<CandidateFit> fits;  // every candidate examined, in examination order
};

/// Least-squares fit of `observed` by the templates of one candidate.
inline CandidateFit fit_candidate(const FaultSet& candidate, const Eigen::VectorXd& observed,
                                  const FaultTemplateSet& templates, double tol) {
  CandidateFit fit{candidate, false, 0.0, {}, {}};
  const double norm = observed.norm();
  if (candidate.empty()) {
    fit.relative_residual = norm > 1e-12 ? 1.0 : 0.0;
    fit.accepted = fit.relative_residual < tol;
    return fit;
  }
  const auto members = canonical(candidate);
  Eigen::MatrixXd T(observed.size(), static_cast<Eigen::Index>(members.size()));
  for (std::size_t j = 0; j < members.size(); ++j) T.col(static_cast<Eigen::Index>(j)) = templates.at(members[j]).deviation;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(T);
  if (qr.rank() < T.cols()) {
    // magnitudes are not identifiable; the residual of the minimum-norm fit is still reported
    fit.note = "degenerate template submatrix";
    const Eigen::VectorXd c = T.completeOrthogonalDecomposition().solve(observed);
    fit.relative_residual = norm > 1e-12 ? (observed - T * c).norm() / norm : 0.0;
    return fit;
  }
  const Eigen::VectorXd c = qr.solve(observed);
  fit.magnitudes.assign(c.data(), c.data() + c.size());
  fit.relative_residual = norm > 1e-12 ? (observed - T * c).norm() / norm : 0.0;
  fit.accepted = fit.relative_residual < tol;
  return fit;
}

/// Walks candidates in the given order (expected: cardinality, then lexicographic)
/// and returns every accepted candidate of the smallest accepted cardinality.
inline DxDiagnosis refine_with_fault_models(const std::vector<FaultSet>& candidates, const Eigen::VectorXd& observed,
                                            const FaultTemplateSet& templates, double tol = 1e-3) {
  if (!(tol > 0.0)) throw ValidationError("tol must be > 0");
  if (observed.size() != static_cast<Eigen::Index>(templates.measured.size()))
    throw ValidationError("observed vector does not match template rows");
  DxDiagnosis d;
  std::optional<std::size_t> accepted_size;
  for (const auto& c : candidates) {
    if (accepted_size && c.size() > *accepted_size) break;
    auto fit = fit_candidate(c, observed, templates, tol);
    if (fit.accepted) {
      accepted_size = c.size();
      d.diagnoses.push_back(c);
    }
    d.fits.push_back(std::move(fit));
  }
  return d;
}

inline Eigen::VectorXd observed_deviation(const AlarmState& alarms, const std::vector<VarId>& measured) {
  Eigen::VectorXd d(static_cast<Eigen::Index>(measured.size()));
  for (std::size_t i = 0; i < measured.size(); ++i) {
    auto it = alarms.global.find(measured[i]);
    if (it == alarms.global.end()) throw ValidationError("no global residual for '" + measured[i] + "'");
    d(static_cast<Eigen::Index>(i)) = it->second.value;
  }
  return d;
}

struct DxSettings {
  double tol = 1e-3;
  std::size_t max_size = 7;
};

/// conflicts -> hitting sets (minimal ones and their supersets) -> fault-model refinement.
inline DxDiagnosis dx_diagnose(const AlarmState& alarms, const SignatureMatrix& m, const FaultTemplateSet& templates,
                               const DxSettings& s = {}) {
  const auto conflicts = compute_conflicts(alarms, m);
  const auto candidates = hitting_sets(conflicts, m.faults, s.max_size);
  return refine_with_fault_models(candidates, observed_deviation(alarms, templates.measured), templates, s.tol);
}

}  // namespace tankdiag
