#pragma once

#include <set>
#include <string>
#include <vector>

#include "tankdiag/bondgraph.hpp"
#include "tankdiag/common.hpp"
#include "tankdiag/detection.hpp"

namespace tankdiag {

/// Boolean fault-signature matrix: entry (f, r) is set when fault f appears in
/// the formula of constraint r.
struct SignatureMatrix {
  std::vector<VarId> faults;
  std::vector<std::string> constraints;
  std::vector<std::vector<bool>> entries;  // [fault][constraint]

  std::set<std::string> row(const VarId& fault) const {
    auto it = std::find(faults.begin(), faults.end(), fault);
    if (it == faults.end()) throw ValidationError("unknown fault '" + fault + "'");
    std::set<std::string> out;
    const auto& bits = entries[static_cast<std::size_t>(it - faults.begin())];
    for (std::size_t c = 0; c < constraints.size(); ++c)
      if (bits[c]) out.insert(constraints[c]);
    return out;
  }

  FaultSet column(const std::string& constraint) const {
    auto it = std::find(constraints.begin(), constraints.end(), constraint);
    if (it == constraints.end()) throw ValidationError("unknown constraint '" + constraint + "'");
    const auto c = static_cast<std::size_t>(it - constraints.begin());
    FaultSet out;
    for (std::size_t f = 0; f < faults.size(); ++f)
      if (entries[f][c]) out.insert(faults[f]);
    return out;
  }
};

inline SignatureMatrix build_signature_matrix(const InfluenceGraph& g) {
  SignatureMatrix m;
  for (const auto& id : g.inputs()) m.faults.push_back(id);
  for (const auto& id : g.measured()) m.faults.push_back(id);
  std::sort(m.faults.begin(), m.faults.end(), variable_less);
  const auto cons = local_constraints(g);
  for (const auto& c : cons) m.constraints.push_back(c.id);
  for (const auto& f : m.faults) {
    std::vector<bool> bits;
    for (const auto& c : cons) bits.push_back(c.occurrences().count(f) != 0);
    m.entries.push_back(std::move(bits));
  }
  return m;
}

enum class FdiVerdict { Exact, Ambiguous, NoMatch };

inline const char* to_string(FdiVerdict v) {
  switch (v) {
    case FdiVerdict::Exact: return "exact";
    case FdiVerdict::Ambiguous: return "ambiguous";
    case FdiVerdict::NoMatch: return "no-match";
  }
  return "?";
}

struct FdiDiagnosis {
  std::vector<FaultSet> candidates;
  FdiVerdict verdict = FdiVerdict::NoMatch;
};

/// Pattern matching of the violated-constraint vector against single rows,
/// then against unions of two rows. Signs are ignored; triples are never tried.
inline FdiDiagnosis fdi_diagnose(const std::set<std::string>& observed, const SignatureMatrix& m) {
  FdiDiagnosis d;
  if (observed.empty()) {
    d.verdict = FdiVerdict::Exact;
    d.candidates.push_back({});
    return d;
  }
  std::vector<std::set<std::string>> rows;
  for (const auto& f : m.faults) rows.push_back(m.row(f));

  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i] == observed) d.candidates.push_back({m.faults[i]});
  if (!d.candidates.empty()) {
    d.verdict = d.candidates.size() == 1 ? FdiVerdict::Exact : FdiVerdict::Ambiguous;
    std::sort(d.candidates.begin(), d.candidates.end(), fault_set_less);
    return d;
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      std::set<std::string> u = rows[i];
      u.insert(rows[j].begin(), rows[j].end());
      if (u == observed) d.candidates.push_back({m.faults[i], m.faults[j]});
    }
  }
  std::sort(d.candidates.begin(), d.candidates.end(), fault_set_less);
  d.verdict = d.candidates.empty() ? FdiVerdict::NoMatch : FdiVerdict::Ambiguous;
  return d;
}

inline FdiDiagnosis fdi_diagnose(const AlarmState& alarms, const SignatureMatrix& m) {
  return fdi_diagnose(alarms.violated(), m);
}

}  // namespace tankdiag
