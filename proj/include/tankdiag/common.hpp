#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tankdiag {

/// Bad argument or structurally invalid input.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values, singular systems, integration blow-up.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Text input (bond graph, scenario, config) that does not parse.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// Operation invoked in the wrong state or with an unknown option.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

using VarId = std::string;
using FaultSet = std::set<VarId>;

/// Canonical ordering of the three-tank variables; ids not listed sort after, by name.
inline int variable_rank(const VarId& id) {
  static const std::vector<std::string> order = {"Msf1", "Msf2", "De1", "De2",
                                                 "De3",  "Df1",  "Df2"};
  auto it = std::find(order.begin(), order.end(), id);
  return it == order.end() ? static_cast<int>(order.size()) : static_cast<int>(it - order.begin());
}

inline bool variable_less(const VarId& a, const VarId& b) {
  int ra = variable_rank(a), rb = variable_rank(b);
  return ra != rb ? ra < rb : a < b;
}

inline std::vector<VarId> canonical(const FaultSet& s) {
  std::vector<VarId> v(s.begin(), s.end());
  std::sort(v.begin(), v.end(), variable_less);
  return v;
}

/// Orders fault sets by cardinality, then lexicographically in canonical variable order.
inline bool fault_set_less(const FaultSet& a, const FaultSet& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  auto ca = canonical(a), cb = canonical(b);
  return std::lexicographical_compare(ca.begin(), ca.end(), cb.begin(), cb.end(), variable_less);
}

/// "{Msf1, Df2}"; the empty set prints as "{ }".
inline std::string format_set(const FaultSet& s) {
  if (s.empty()) return "{ }";
  std::ostringstream os;
  os << '{';
  bool first = true;
  for (const auto& id : canonical(s)) {
    if (!first) os << ", ";
    os << id;
    first = false;
  }
  os << '}';
  return os.str();
}

inline std::string format_sets(const std::vector<FaultSet>& sets) {
  if (sets.empty()) return "{ }";
  std::string out;
  for (const auto& s : sets) {
    if (!out.empty()) out += ' ';
    out += format_set(s);
  }
  return out;
}

/// Parses "{Msf1, Df2}" / "Msf1,Df2" into a set. Whitespace is ignored.
inline FaultSet parse_set(const std::string& text) {
  FaultSet out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.insert(cur);
    cur.clear();
  };
  for (char c : text) {
    if (c == '{' || c == '}' || c == ',' || std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else {
      cur += c;
    }
  }
  flush();
  return out;
}

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace tankdiag
