#include <sstream>

#include <gtest/gtest.h>

#include "tankdiag/workbench.hpp"

using namespace tankdiag;

namespace {

const Workbench& bench() {
  static const Workbench wb{Config{}};
  return wb;
}

const ExperimentReport& table() {
  static const ExperimentReport r = run_table1(bench());
  return r;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(Builtins, NineteenTableRows) {
  const auto& s = builtin_fault_sets();
  ASSERT_EQ(s.size(), 19u);
  std::size_t singles = 0;
  for (const auto& f : s) singles += f.size() == 1;
  EXPECT_EQ(singles, 7u);
  EXPECT_EQ(format_set(s[7]), "{Msf1, Df2}");
  EXPECT_EQ(format_set(s[16]), "{Msf1, Msf2, Df1, Df2}");
  EXPECT_EQ(format_set(s[18]), "{Msf1, Msf2, De1, De2, Df1, Df2}");
}

TEST(Builtins, SharedOnsetAndRelativeMagnitude) {
  const auto sc = bench().builtin_scenario({"Msf1", "De1", "Df2"});
  ASSERT_EQ(sc.faults.size(), 3u);
  for (const auto& f : sc.faults) EXPECT_DOUBLE_EQ(f.onset, 50.0);
  EXPECT_DOUBLE_EQ(sc.faults[0].magnitude, 0.2);  // Msf1 nominal 1
  EXPECT_DOUBLE_EQ(sc.faults[1].magnitude, 0.6);  // De1 nominal 3
  EXPECT_DOUBLE_EQ(sc.faults[2].magnitude, 0.2);  // Df2 nominal 1
  EXPECT_THROW(bench().builtin_scenario({"Zz"}), ValidationError);
}

TEST(RunScenario, SensorOnTankOneAllMethods) {
  const auto row = run_scenario(bench(), "{De1}", Method::All);
  ASSERT_TRUE(row.fdi && row.dx && row.ig);
  // the tank-1 sensor bias leaves only r_Df1 violated once the derivative has settled, which matches no FDI row
  EXPECT_FALSE(row.fdi_exact);
  EXPECT_EQ(*row.dx, std::vector<FaultSet>{{"De1"}});
  EXPECT_EQ(*row.ig, FaultSet{"De1"});
  EXPECT_TRUE(row.dx_exact && row.ig_exact);
}

TEST(RunScenario, EmptyScenario) {
  const auto row = run_scenario(bench(), FaultScenario{}, Method::All);
  EXPECT_EQ(*row.fdi, std::vector<FaultSet>{FaultSet{}});
  EXPECT_EQ(*row.dx, std::vector<FaultSet>{FaultSet{}});
  EXPECT_TRUE(row.ig->empty());
  EXPECT_TRUE(row.fdi_exact && row.dx_exact && row.ig_exact);
}

TEST(RunScenario, OnlyRequestedMethodRuns) {
  const auto row = run_scenario(bench(), "{Msf1, Msf2, Df1, Df2}", Method::Ig);
  EXPECT_FALSE(row.fdi);
  EXPECT_FALSE(row.dx);
  EXPECT_EQ(*row.ig, (FaultSet{"Msf1", "Msf2", "Df1", "Df2"}));
}

TEST(RunScenario, UnknownMethod) { EXPECT_THROW(parse_method("bayes"), UsageError); }

TEST(Table1, Rates) {
  const auto& r = table();
  ASSERT_EQ(r.rows.size(), 19u);
  const auto ig = r.rates(Method::Ig);
  EXPECT_EQ(ig.single_exact, 7u);
  EXPECT_GE(ig.multiple_exact, 11u);
  EXPECT_EQ(ig.multiple_total, 12u);
  EXPECT_LE(r.rates(Method::Fdi).multiple_exact, 3u);
  // rates are recomputed from the flags
  std::size_t dx_multi = 0;
  for (const auto& row : r.rows) dx_multi += row.injected.size() > 1 && row.dx_exact;
  EXPECT_EQ(r.rates(Method::Dx).multiple_exact, dx_multi);
}

TEST(Render, CsvRowCountAndSummary) {
  const auto csv = render_report(table(), ReportFormat::Csv);
  // header + 19 rows + blank + summary header + 3 methods
  EXPECT_EQ(count_lines(csv), 1u + 19u + 1u + 1u + 3u);
  EXPECT_NE(csv.find("IG,7,7,100.0%"), std::string::npos) << csv;
  EXPECT_NE(csv.find("\"{Msf1, Df2}\""), std::string::npos);
}

TEST(Render, TextHeaderOnlyForEmptyReport) {
  const auto text = render_report(ExperimentReport{}, ReportFormat::Text);
  EXPECT_EQ(count_lines(text), 1u);
  EXPECT_NE(text.find("Injected | FDI | DX | IG"), std::string::npos) << text;
}

TEST(Render, TextSummaryPercentages) {
  const auto text = render_report(table(), ReportFormat::Text);
  EXPECT_NE(text.find("FDI single 5/7 (71.4%)"), std::string::npos) << text;
  EXPECT_NE(text.find("IG  single 7/7 (100.0%)"), std::string::npos) << text;
}

TEST(Render, UnknownFormat) { EXPECT_THROW(parse_format("xml"), UsageError); }

TEST(Render, ByteDeterministic) {
  const auto a = render_report(run_table1(Config{}), ReportFormat::Csv);
  const auto b = render_report(run_table1(Config{}), ReportFormat::Csv);
  EXPECT_EQ(a, b);
}

TEST(ConfigFile, OverridesDefaults) {
  std::istringstream in(R"({"plant": {"R0": 2}, "threshold_fraction": 0.04, "dx": {"max_size": 5}, "noise": {"seed": 9}})");
  const auto c = parse_config(in);
  EXPECT_DOUBLE_EQ(c.plant.R0, 2.0);
  EXPECT_DOUBLE_EQ(c.plant.R1, 1.0);
  EXPECT_DOUBLE_EQ(c.threshold_fraction, 0.04);
  EXPECT_EQ(c.dx.max_size, 5u);
  EXPECT_EQ(c.noise.seed, 9u);
  EXPECT_DOUBLE_EQ(c.dt, 0.01);
}

TEST(ConfigFile, Errors) {
  std::istringstream broken("{\n  \"dt\": 0.01,\n  \"horizon\": ,\n}");
  try {
    parse_config(broken);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3);
  }
  std::istringstream unknown(R"({"dtt": 0.1})");
  EXPECT_THROW(parse_config(unknown), ValidationError);
  std::istringstream bad_value(R"({"decided_at": 120})");
  EXPECT_THROW(parse_config(bad_value), ValidationError);
  std::istringstream wrong_type(R"({"dt": "fast"})");
  EXPECT_THROW(parse_config(wrong_type), ValidationError);
}

TEST(Trace, CsvHasOneRowPerSample) {
  FaultScenario sc;
  sc.add("Df1", 1.0, 0.2);
  Config c;
  c.horizon = 2.0;
  c.onset = 1.0;
  c.decided_at = 2.0;
  const Workbench wb(c);
  std::ostringstream os;
  render_trace_csv(wb.simulate_scenario(sc), os);
  EXPECT_EQ(count_lines(os.str()), 1u + 201u);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "time,De1,De2,De3,Df1,Df2,u_Msf1,u_Msf2");
}
