#pragma once

/// @file workbench.hpp
/// Experiment orchestration: configuration, the built-in scenario table,
/// one-call pipeline (simulate, detect, diagnose) and report rendering.

#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tankdiag/bondgraph.hpp"
#include "tankdiag/common.hpp"
#include "tankdiag/detection.hpp"
#include "tankdiag/dx.hpp"
#include "tankdiag/fdi.hpp"
#include "tankdiag/ig.hpp"
#include "tankdiag/plant.hpp"

namespace tankdiag {

struct Config {
  ThreeTankParams plant;
  double dt = 0.01;
  double horizon = 100.0;
  double onset = 50.0;
  double magnitude_fraction = 0.2;
  double threshold_fraction = 0.05;
  double persistence = 0.5;
  double decided_at = 99.0;
  DxSettings dx;
  IgSettings ig;
  NoiseConfig noise;

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(std::string(name) + " must be > 0");
    };
    positive(dt, "dt");
    positive(horizon, "horizon");
    positive(magnitude_fraction, "magnitude_fraction");
    positive(threshold_fraction, "threshold_fraction");
    positive(persistence, "persistence");
    positive(dx.tol, "dx.tol");
    positive(ig.band, "ig.band");
    if (!(onset >= 0.0) || onset >= horizon) throw ValidationError("onset must lie in [0, horizon)");
    if (!(decided_at > onset) || decided_at > horizon) throw ValidationError("decided_at must lie in (onset, horizon]");
    if (decided_at - persistence < 0.0) throw ValidationError("persistence window starts before t = 0");
    if (dx.max_size < 1) throw ValidationError("dx.max_size must be >= 1");
    if (noise.stddev < 0.0) throw ValidationError("noise.stddev must be >= 0");
  }
};

namespace detail {

inline int line_of_offset(const std::string& text, std::size_t offset) {
  int line = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) line += text[i] == '\n';
  return line;
}

inline void read_number(const nlohmann::json& j, const char* key, double& into) {
  if (!j.contains(key)) return;
  if (!j.at(key).is_number()) throw ValidationError(std::string("config: '") + key + "' must be a number");
  into = j.at(key).get<double>();
}

inline void reject_unknown(const nlohmann::json& j, const std::vector<std::string>& known, const std::string& where) {
  for (const auto& [k, v] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw ValidationError("config: unknown key '" + where + k + "'");
}

}  // namespace detail

/// JSON object; every key is optional and missing keys keep their defaults.
///   {"plant": {"C1":1, "C2":1, "C3":1, "R1":1, "R2":1, "R0":1, "Msf1":1, "Msf2":1},
///    "dt":0.01, "horizon":100, "onset":50, "magnitude_fraction":0.2,
///    "threshold_fraction":0.05, "persistence":0.5, "decided_at":99,
///    "dx": {"tol":1e-3, "max_size":7}, "ig": {"band":0.5},
///    "noise": {"stddev":0, "seed":0}}
inline Config parse_config(std::istream& in) {
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(e.what(), detail::line_of_offset(text, e.byte == 0 ? 0 : e.byte - 1));
  }
  if (!j.is_object()) throw ParseError("config must be a JSON object", 1);
  detail::reject_unknown(j,
                         {"plant", "dt", "horizon", "onset", "magnitude_fraction", "threshold_fraction", "persistence",
                          "decided_at", "dx", "ig", "noise"},
                         "");
  Config c;
  if (j.contains("plant")) {
    const auto& p = j.at("plant");
    detail::reject_unknown(p, {"C1", "C2", "C3", "R1", "R2", "R0", "Msf1", "Msf2"}, "plant.");
    detail::read_number(p, "C1", c.plant.C1);
    detail::read_number(p, "C2", c.plant.C2);
    detail::read_number(p, "C3", c.plant.C3);
    detail::read_number(p, "R1", c.plant.R1);
    detail::read_number(p, "R2", c.plant.R2);
    detail::read_number(p, "R0", c.plant.R0);
    detail::read_number(p, "Msf1", c.plant.Msf1);
    detail::read_number(p, "Msf2", c.plant.Msf2);
  }
  detail::read_number(j, "dt", c.dt);
  detail::read_number(j, "horizon", c.horizon);
  detail::read_number(j, "onset", c.onset);
  detail::read_number(j, "magnitude_fraction", c.magnitude_fraction);
  detail::read_number(j, "threshold_fraction", c.threshold_fraction);
  detail::read_number(j, "persistence", c.persistence);
  detail::read_number(j, "decided_at", c.decided_at);
  if (j.contains("dx")) {
    const auto& d = j.at("dx");
    detail::reject_unknown(d, {"tol", "max_size"}, "dx.");
    detail::read_number(d, "tol", c.dx.tol);
    if (d.contains("max_size")) {
      if (!d.at("max_size").is_number_unsigned()) throw ValidationError("config: 'dx.max_size' must be a positive integer");
      c.dx.max_size = d.at("max_size").get<std::size_t>();
    }
  }
  if (j.contains("ig")) {
    detail::reject_unknown(j.at("ig"), {"band"}, "ig.");
    detail::read_number(j.at("ig"), "band", c.ig.band);
  }
  if (j.contains("noise")) {
    const auto& n = j.at("noise");
    detail::reject_unknown(n, {"stddev", "seed"}, "noise.");
    detail::read_number(n, "stddev", c.noise.stddev);
    if (n.contains("seed")) {
      if (!n.at("seed").is_number_unsigned()) throw ValidationError("config: 'noise.seed' must be a non-negative integer");
      c.noise.seed = n.at("seed").get<std::uint64_t>();
    }
  }
  c.validate();
  return c;
}

/// The 19 injected fault sets of the reference experiment, in table order.
inline const std::vector<FaultSet>& builtin_fault_sets() {
  static const std::vector<FaultSet> sets = {
      {"Msf1"},
      {"Msf2"},
      {"De1"},
      {"De2"},
      {"De3"},
      {"Df1"},
      {"Df2"},
      {"Msf1", "Df2"},
      {"De1", "Df2"},
      {"De3", "Df2"},
      {"De1", "De3"},
      {"Df1", "Df2"},
      {"Msf1", "De1", "Df2"},
      {"De1", "De3", "Df2"},
      {"De1", "Df1", "Df2"},
      {"Msf1", "Msf2", "Df1"},
      {"Msf1", "Msf2", "Df1", "Df2"},
      {"Msf1", "Msf2", "Df1", "Df2", "De2"},
      {"Msf1", "Msf2", "De1", "De2", "Df1", "Df2"},
  };
  return sets;
}

/// Everything that depends only on the configuration: plant model, graph,
/// nominal run, thresholds, signature matrix and fault templates.
class Workbench {
 public:
  explicit Workbench(Config config) : config_(std::move(config)) {
    config_.validate();
    model_ = assign_causality(build_three_tank_model(config_.plant));
    ss_ = derive_state_equations(model_);
    graph_ = derive_influence_graph(model_);
    x0_ = steady_state(ss_, ss_.nominal_input);
    nominal_trace_ = simulate(ss_, {}, config_.horizon, config_.dt, x0_);
    const Eigen::VectorXd y0 = ss_.C * x0_ + ss_.D * ss_.nominal_input;
    for (Eigen::Index i = 0; i < y0.size(); ++i) nominal_[ss_.outputs[static_cast<std::size_t>(i)]] = y0(i);
    for (Eigen::Index i = 0; i < ss_.nominal_input.size(); ++i)
      nominal_[ss_.inputs[static_cast<std::size_t>(i)]] = ss_.nominal_input(i);
    thresholds_ = default_thresholds(graph_, nominal_, config_.threshold_fraction);
    matrix_ = build_signature_matrix(graph_);
    templates_ = build_fault_templates(ss_, graph_.measured(),
                                       {config_.onset, config_.horizon, config_.dt, config_.decided_at});
  }

  const Config& config() const { return config_; }
  const BondGraphModel& model() const { return model_; }
  const StateSpace& state_space() const { return ss_; }
  const InfluenceGraph& graph() const { return graph_; }
  const SignatureMatrix& signature() const { return matrix_; }
  const FaultTemplateSet& templates() const { return templates_; }
  const Thresholds& thresholds() const { return thresholds_; }
  const std::map<VarId, double>& nominal_values() const { return nominal_; }
  const Eigen::VectorXd& initial_state() const { return x0_; }

  /// Shared onset, magnitude = fraction of each target's nominal value.
  FaultScenario builtin_scenario(const FaultSet& targets) const {
    FaultScenario sc;
    sc.label = format_set(targets);
    for (const auto& t : canonical(targets)) {
      auto it = nominal_.find(t);
      if (it == nominal_.end()) throw ValidationError("unknown fault target '" + t + "'");
      const double base = std::abs(it->second) > 0.0 ? std::abs(it->second) : 1.0;
      sc.add(t, config_.onset, config_.magnitude_fraction * base);
    }
    return sc;
  }

  SimulationTrace simulate_scenario(const FaultScenario& sc) const {
    return simulate(ss_, sc, config_.horizon, config_.dt, x0_, config_.noise);
  }

  ResidualTrace residuals(const SimulationTrace& trace) const { return compute_residuals(trace, nominal_trace_, graph_); }

  AlarmState alarms(const SimulationTrace& trace) const {
    return detect_alarms(residuals(trace), thresholds_, config_.persistence, config_.decided_at);
  }

 private:
  Config config_;
  BondGraphModel model_;
  StateSpace ss_;
  InfluenceGraph graph_;
  Eigen::VectorXd x0_;
  SimulationTrace nominal_trace_;
  std::map<VarId, double> nominal_;
  Thresholds thresholds_;
  SignatureMatrix matrix_;
  FaultTemplateSet templates_;
};

enum class Method { Fdi, Dx, Ig, All };

inline Method parse_method(const std::string& s) {
  if (s == "fdi") return Method::Fdi;
  if (s == "dx") return Method::Dx;
  if (s == "ig") return Method::Ig;
  if (s == "all") return Method::All;
  throw UsageError("unknown method '" + s + "' (expected fdi, dx, ig or all)");
}

struct ReportRow {
  std::string label;
  FaultSet injected;
  std::optional<std::vector<FaultSet>> fdi, dx;  // candidate lists
  std::optional<FaultSet> ig;
  bool fdi_exact = false, dx_exact = false, ig_exact = false;
};

struct MethodRates {
  std::size_t single_exact = 0, single_total = 0, multiple_exact = 0, multiple_total = 0;
};

struct ExperimentReport {
  std::vector<ReportRow> rows;

  /// Exact-match counts over singleton and multi-fault rows; empty scenarios count in neither.
  MethodRates rates(Method m) const {
    MethodRates r;
    for (const auto& row : rows) {
      const bool exact = m == Method::Fdi ? row.fdi_exact : m == Method::Dx ? row.dx_exact : row.ig_exact;
      if (row.injected.size() == 1) {
        ++r.single_total;
        r.single_exact += exact;
      } else if (row.injected.size() > 1) {
        ++r.multiple_total;
        r.multiple_exact += exact;
      }
    }
    return r;
  }
};

inline ReportRow run_scenario(const Workbench& wb, const FaultScenario& sc, Method method = Method::All) {
  ReportRow row;
  row.label = sc.label.empty() ? format_set(sc.targets()) : sc.label;
  row.injected = sc.targets();
  const auto alarms = wb.alarms(wb.simulate_scenario(sc));
  auto single_equal = [&](const std::vector<FaultSet>& c) { return c.size() == 1 && c.front() == row.injected; };
  if (method == Method::Fdi || method == Method::All) {
    row.fdi = fdi_diagnose(alarms, wb.signature()).candidates;
    row.fdi_exact = single_equal(*row.fdi);
  }
  if (method == Method::Dx || method == Method::All) {
    row.dx = dx_diagnose(alarms, wb.signature(), wb.templates(), wb.config().dx).diagnoses;
    row.dx_exact = single_equal(*row.dx);
  }
  if (method == Method::Ig || method == Method::All) {
    row.ig = ig_diagnose(wb.graph(), alarms, wb.config().ig).sources;
    row.ig_exact = *row.ig == row.injected;
  }
  return row;
}

/// Built-in scenario given as a fault-set label such as "{Msf1, Df2}".
inline ReportRow run_scenario(const Workbench& wb, const std::string& builtin_label, Method method = Method::All) {
  return run_scenario(wb, wb.builtin_scenario(parse_set(builtin_label)), method);
}

inline ExperimentReport run_table1(const Workbench& wb) {
  ExperimentReport r;
  for (const auto& s : builtin_fault_sets()) r.rows.push_back(run_scenario(wb, wb.builtin_scenario(s)));
  return r;
}

inline ExperimentReport run_table1(const Config& c) { return run_table1(Workbench(c)); }

enum class ReportFormat { Text, Csv };

inline ReportFormat parse_format(const std::string& s) {
  if (s == "text" || s == "text-table") return ReportFormat::Text;
  if (s == "csv") return ReportFormat::Csv;
  throw UsageError("unknown format '" + s + "' (expected text or csv)");
}

namespace detail {

inline std::string percent(std::size_t num, std::size_t den) {
  if (den == 0) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * static_cast<double>(num) / static_cast<double>(den));
  return buf;
}

inline std::string cell(const std::optional<std::vector<FaultSet>>& v) { return v ? format_sets(*v) : "-"; }
inline std::string cell(const std::optional<FaultSet>& v) { return v ? format_set(*v) : "-"; }

inline std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + '"';
}

inline std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }

}  // namespace detail

inline void render_report(const ExperimentReport& r, ReportFormat f, std::ostream& os) {
  const std::vector<std::pair<const char*, Method>> methods = {{"FDI", Method::Fdi}, {"DX", Method::Dx}, {"IG", Method::Ig}};
  if (f == ReportFormat::Csv) {
    os << "index,injected,fdi,dx,ig,fdi_exact,dx_exact,ig_exact\n";
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
      const auto& row = r.rows[i];
      os << i + 1 << ',' << detail::csv_quote(format_set(row.injected)) << ',' << detail::csv_quote(detail::cell(row.fdi))
         << ',' << detail::csv_quote(detail::cell(row.dx)) << ',' << detail::csv_quote(detail::cell(row.ig)) << ','
         << row.fdi_exact << ',' << row.dx_exact << ',' << row.ig_exact << '\n';
    }
    os << "\nmethod,single_exact,single_total,single_rate,multiple_exact,multiple_total,multiple_rate\n";
    for (const auto& [name, m] : methods) {
      const auto q = r.rates(m);
      os << name << ',' << q.single_exact << ',' << q.single_total << ',' << detail::percent(q.single_exact, q.single_total)
         << ',' << q.multiple_exact << ',' << q.multiple_total << ','
         << detail::percent(q.multiple_exact, q.multiple_total) << '\n';
    }
    return;
  }

  std::vector<std::vector<std::string>> cells = {{"Injected", "FDI", "DX", "IG"}};
  for (const auto& row : r.rows) {
    auto mark = [](std::string s, bool ok) { return s + (ok ? "" : " *"); };
    cells.push_back({format_set(row.injected), row.fdi ? mark(detail::cell(row.fdi), row.fdi_exact) : "-",
                     row.dx ? mark(detail::cell(row.dx), row.dx_exact) : "-",
                     row.ig ? mark(detail::cell(row.ig), row.ig_exact) : "-"});
  }
  std::vector<std::size_t> width(4, 0);
  for (const auto& c : cells)
    for (std::size_t k = 0; k < 4; ++k) width[k] = std::max(width[k], c[k].size());
  for (const auto& c : cells) {
    std::string line;
    for (std::size_t k = 0; k < 4; ++k) line += (k ? " | " : "") + (k < 3 ? detail::pad(c[k], width[k]) : c[k]);
    os << line << '\n';
  }
  if (r.rows.empty()) return;
  os << "\n(* = not an exact match)\n";
  for (const auto& [name, m] : methods) {
    const auto q = r.rates(m);
    os << detail::pad(name, 4) << "single " << q.single_exact << '/' << q.single_total << " ("
       << detail::percent(q.single_exact, q.single_total) << ")  multiple " << q.multiple_exact << '/' << q.multiple_total
       << " (" << detail::percent(q.multiple_exact, q.multiple_total) << ")\n";
  }
}

inline std::string render_report(const ExperimentReport& r, ReportFormat f) {
  std::ostringstream os;
  render_report(r, f, os);
  return os.str();
}

/// time, then every measurement, then the true inputs.
inline void render_trace_csv(const SimulationTrace& t, std::ostream& os) {
  os << "time";
  for (const auto& id : t.output_ids) os << ',' << id;
  for (const auto& id : t.input_ids) os << ",u_" << id;
  os << '\n';
  char buf[64];
  for (std::size_t k = 0; k < t.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.4f", t.times[k]);
    os << buf;
    const auto r = static_cast<Eigen::Index>(k);
    for (Eigen::Index i = 0; i < t.measurements.cols(); ++i) {
      std::snprintf(buf, sizeof buf, ",%.9g", t.measurements(r, i));
      os << buf;
    }
    for (Eigen::Index i = 0; i < t.true_input.cols(); ++i) {
      std::snprintf(buf, sizeof buf, ",%.9g", t.true_input(r, i));
      os << buf;
    }
    os << '\n';
  }
}

}  // namespace tankdiag
