#include <gtest/gtest.h>

#include "fixture.hpp"

using namespace tankdiag;
using testfx::plant;

namespace {

FaultScenario one(const std::string& target, double magnitude) {
  FaultScenario sc;
  sc.add(target, 50.0, magnitude);
  return sc;
}

double at(const ResidualTrace& r, bool global, const std::string& id, double t) {
  const auto k = static_cast<Eigen::Index>(r.index_at(t));
  return global ? r.global(k, r.global_index(id)) : r.local(k, r.local_index(id));
}

// Unit-parameter plant, inflow one raised by d: q0 = 2 + d, so p2 = 2 + d, p1 = p2 + 1 + d, p3 = p2 + 1.
std::map<std::string, double> msf1_steady_deviation(double d) {
  return {{"De1", 2 * d}, {"De2", d}, {"De3", d}, {"Df1", d}, {"Df2", 0.0}};
}

}  // namespace

TEST(LocalConstraints, FiveConstraintsWithDocumentedMembership) {
  const auto cons = local_constraints(plant().graph);
  ASSERT_EQ(cons.size(), 5u);
  std::map<std::string, FaultSet> got;
  for (const auto& c : cons) got[c.id] = c.occurrences();
  EXPECT_EQ(got["r_De1"], (FaultSet{"Msf1", "De1", "Df1"}));
  EXPECT_EQ(got["r_De2"], (FaultSet{"De2", "Df1", "Df2"}));
  EXPECT_EQ(got["r_De3"], (FaultSet{"Msf2", "De3", "Df2"}));
  EXPECT_EQ(got["r_Df1"], (FaultSet{"De1", "De2", "Df1"}));
  EXPECT_EQ(got["r_Df2"], (FaultSet{"De2", "De3", "Df2"}));
}

TEST(Residuals, NominalAgainstNominalIsZero) {
  const auto r = compute_residuals(plant().nominal, plant().nominal, plant().graph);
  EXPECT_EQ(r.global.cwiseAbs().maxCoeff(), 0.0);
  // nominal local residuals: the plant sits at equilibrium, only round-off remains
  EXPECT_LT(r.local.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Residuals, SensorBiasOnTankOne) {
  const auto r = compute_residuals(plant().run(one("De1", 0.5)), plant().nominal, plant().graph);
  EXPECT_NEAR(at(r, true, "De1", 99.0), 0.5, 1e-12);
  for (const auto* v : {"De2", "De3", "Df1", "Df2"}) EXPECT_EQ(at(r, true, v, 99.0), 0.0) << v;
  EXPECT_NEAR(at(r, false, "r_Df1", 99.0), -0.5, 1e-9);  // Df1 - (De1 - De2)/R1
  // tank balance sees the bias only through the derivative: a spike at onset, then nothing
  EXPECT_GT(std::abs(at(r, false, "r_De1", 50.0)), 10.0);
  for (double t = 75.0; t <= 100.0; t += 1.0) EXPECT_NEAR(at(r, false, "r_De1", t), 0.0, 1e-9);
}

TEST(Residuals, ActuatorBiasOnPumpOne) {
  const auto r = compute_residuals(plant().run(one("Msf1", 0.2)), plant().nominal, plant().graph);
  // r_De1 = C1 dDe1/dt - (u1_cmd - Df1) = Df1 - 1 at equilibrium, Df1 -> 1.2
  EXPECT_NEAR(at(r, false, "r_De1", 99.0), 0.2, 1e-4);
  EXPECT_NEAR(at(r, false, "r_Df1", 99.0), 0.0, 1e-12);
  for (const auto& [v, d] : msf1_steady_deviation(0.2)) EXPECT_NEAR(at(r, true, v, 99.0), d, 1e-4) << v;
}

TEST(Residuals, GridMismatchRejected) {
  const auto shorter = simulate(plant().ss, {}, 50.0, 0.01, plant().x0);
  EXPECT_THROW(compute_residuals(shorter, plant().nominal, plant().graph), ValidationError);
  const auto coarser = simulate(plant().ss, {}, 100.0, 0.02, plant().x0);
  EXPECT_THROW(compute_residuals(coarser, plant().nominal, plant().graph), ValidationError);
}

TEST(Thresholds, DefaultRule) {
  const auto t = default_thresholds(plant().graph, plant().nominal_values, 0.05);
  EXPECT_NEAR(t.global.at("De1"), 0.15, 1e-12);
  EXPECT_NEAR(t.global.at("De2"), 0.10, 1e-12);
  EXPECT_NEAR(t.global.at("Df2"), 0.05, 1e-12);
  for (const auto& [id, v] : t.local) EXPECT_NEAR(v, 0.05, 1e-12) << id;
  EXPECT_THROW(default_thresholds(plant().graph, plant().nominal_values, 0.0), ValidationError);
}

TEST(Alarms, ZeroResidualsAreNormal) {
  const auto r = compute_residuals(plant().nominal, plant().nominal, plant().graph);
  const auto a = detect_alarms(r, default_thresholds(plant().graph, plant().nominal_values, 0.05), 0.5, 99.0);
  EXPECT_TRUE(a.alarmed().empty());
  EXPECT_TRUE(a.violated().empty());
}

TEST(Alarms, SensorBiasOnTankTwo) {
  const auto a = plant().alarms(one("De2", 0.4));
  EXPECT_EQ(a.alarmed(), FaultSet{"De2"});
  EXPECT_EQ(a.alarm("De2"), Alarm::High);
  EXPECT_EQ(a.violated(), (std::set<std::string>{"r_De2", "r_Df1", "r_Df2"}));
}

TEST(Alarms, ActuatorBiasOnPumpOne) {
  const auto a = plant().alarms(one("Msf1", 0.2));
  const auto thr = default_thresholds(plant().graph, plant().nominal_values, 0.05);
  FaultSet expected;
  for (const auto& [v, d] : msf1_steady_deviation(0.2))
    if (std::abs(d) > thr.global.at(v)) expected.insert(v);
  EXPECT_EQ(expected, (FaultSet{"De1", "De2", "De3", "Df1"}));
  EXPECT_EQ(a.alarmed(), expected);
  EXPECT_EQ(a.violated(), std::set<std::string>{"r_De1"});
}

TEST(Alarms, SignCoherenceForPositiveActuatorBias) {
  for (double m : {0.1, 0.2, 0.5}) {
    const auto a = plant().alarms(one("Msf1", m));
    for (const auto& v : a.alarmed()) EXPECT_EQ(a.alarm(v), Alarm::High) << v << " at " << m;
  }
}

TEST(Alarms, SteadyLocalSignatureOfSensorFaults) {
  for (const auto* s : {"De1", "De2", "De3", "Df1", "Df2"}) {
    std::set<std::string> expected;
    for (const auto& c : local_constraints(plant().graph))
      if (c.steady_occurrences().count(s)) expected.insert(c.id);
    for (double m : {0.3, -0.3}) EXPECT_EQ(plant().alarms(one(s, m)).violated(), expected) << s << ' ' << m;
  }
}

TEST(Alarms, ThresholdMonotone) {
  const auto base = plant().alarms(plant().scenario({"Msf1", "De3", "Df1"}), 0.05);
  for (double f : {0.06, 0.1, 0.2, 0.5}) {
    const auto higher = plant().alarms(plant().scenario({"Msf1", "De3", "Df1"}), f);
    for (const auto& v : higher.alarmed()) EXPECT_TRUE(base.alarmed().count(v)) << v;
    for (const auto& c : higher.violated()) EXPECT_TRUE(base.violated().count(c)) << c;
  }
}

TEST(Alarms, OnsetSpikeDoesNotLeakIntoWindow) {
  // persistence 0.5 s = 50 samples; the derivative spike sits at t = 50
  const auto a = plant().alarms(one("De1", 0.5));
  EXPECT_FALSE(a.violated().count("r_De1"));
  EXPECT_EQ(a.violated(), std::set<std::string>{"r_Df1"});
}

TEST(Alarms, PersistenceRequiresWholeWindow) {
  FaultScenario late;
  late.add("De2", 98.8, 0.4);
  const auto a = plant().alarms(late);
  EXPECT_TRUE(a.alarmed().empty());  // above threshold for only 0.2 s of the 0.5 s window
}

TEST(Alarms, StepIsRecorded) {
  const auto a = plant().alarms(one("Df2", -0.2));
  EXPECT_NEAR(a.global.at("Df2").step, -0.2, 1e-12);
  EXPECT_EQ(a.alarm("Df2"), Alarm::Low);
  EXPECT_LT(std::abs(plant().alarms(one("Msf1", 0.2)).global.at("De1").step), 0.01);
}

TEST(Alarms, BadArguments) {
  const auto r = compute_residuals(plant().nominal, plant().nominal, plant().graph);
  auto t = default_thresholds(plant().graph, plant().nominal_values, 0.05);
  EXPECT_THROW(detect_alarms(r, t, 0.001, 99.0), ValidationError);
  EXPECT_THROW(detect_alarms(r, t, 0.5, 150.0), ValidationError);
  t.global["De1"] = 0.0;
  EXPECT_THROW(detect_alarms(r, t, 0.5, 99.0), ValidationError);
  t = default_thresholds(plant().graph, plant().nominal_values, 0.05);
  t.local["r_Df2"] = -1.0;
  EXPECT_THROW(detect_alarms(r, t, 0.5, 99.0), ValidationError);
}
