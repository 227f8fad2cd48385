#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "fixture.hpp"

using namespace tankdiag;
using testfx::plant;

namespace {

using Rows = std::map<std::string, std::set<std::string>>;

// Hand-read occurrence of each fault in the five constraint formulas.
const Rows& oracle_rows() {
  static const Rows rows = {
      {"Msf1", {"r_De1"}},
      {"Msf2", {"r_De3"}},
      {"De1", {"r_De1", "r_Df1"}},
      {"De2", {"r_De2", "r_Df1", "r_Df2"}},
      {"De3", {"r_De3", "r_Df2"}},
      {"Df1", {"r_De1", "r_De2", "r_Df1"}},
      {"Df2", {"r_De2", "r_De3", "r_Df2"}},
  };
  return rows;
}

// All pairs whose row union equals `observed`, by brute force over the oracle rows.
std::set<FaultSet> oracle_pairs(const std::set<std::string>& observed) {
  std::set<FaultSet> out;
  for (const auto& [a, ra] : oracle_rows())
    for (const auto& [b, rb] : oracle_rows()) {
      if (!(a < b)) continue;
      auto u = ra;
      u.insert(rb.begin(), rb.end());
      if (u == observed) out.insert({a, b});
    }
  return out;
}

}  // namespace

TEST(SignatureMatrix, RowsMatchConstraintFormulas) {
  const auto m = build_signature_matrix(plant().graph);
  ASSERT_EQ(m.faults.size(), 7u);
  ASSERT_EQ(m.constraints.size(), 5u);
  for (const auto& [f, row] : oracle_rows()) EXPECT_EQ(m.row(f), row) << f;
  EXPECT_EQ(m.column("r_De2"), (FaultSet{"De2", "Df1", "Df2"}));
  EXPECT_THROW(m.row("Q1"), ValidationError);
}

TEST(SignatureMatrix, RowsPairwiseDistinct) {
  const auto m = build_signature_matrix(plant().graph);
  for (std::size_t i = 0; i < m.faults.size(); ++i)
    for (std::size_t j = i + 1; j < m.faults.size(); ++j) EXPECT_NE(m.row(m.faults[i]), m.row(m.faults[j]));
}

TEST(FdiDiagnose, SingleRowsAreExact) {
  const auto m = build_signature_matrix(plant().graph);
  for (const auto& f : m.faults) {
    const auto d = fdi_diagnose(m.row(f), m);
    EXPECT_EQ(d.verdict, FdiVerdict::Exact) << f;
    ASSERT_EQ(d.candidates.size(), 1u);
    EXPECT_EQ(d.candidates[0], FaultSet{f});
  }
}

TEST(FdiDiagnose, EmptyObservationMeansNoFault) {
  const auto d = fdi_diagnose(std::set<std::string>{}, build_signature_matrix(plant().graph));
  EXPECT_EQ(d.verdict, FdiVerdict::Exact);
  ASSERT_EQ(d.candidates.size(), 1u);
  EXPECT_TRUE(d.candidates[0].empty());
}

TEST(FdiDiagnose, PairUnionIsAmbiguousAndExhaustive) {
  const auto m = build_signature_matrix(plant().graph);
  const std::set<std::string> observed{"r_De1", "r_De2", "r_De3", "r_Df2"};
  const auto d = fdi_diagnose(observed, m);
  EXPECT_EQ(d.verdict, FdiVerdict::Ambiguous);
  const std::set<FaultSet> got(d.candidates.begin(), d.candidates.end());
  EXPECT_TRUE(got.count({"Msf1", "Df2"}));
  EXPECT_EQ(got, oracle_pairs(observed));
}

TEST(FdiDiagnose, EveryPatternAgainstBruteForce) {
  const auto m = build_signature_matrix(plant().graph);
  for (unsigned mask = 0; mask < 32; ++mask) {
    std::set<std::string> obs;
    for (unsigned c = 0; c < 5; ++c)
      if (mask >> c & 1U) obs.insert(m.constraints[c]);
    const auto d = fdi_diagnose(obs, m);
    std::set<FaultSet> singles;
    for (const auto& [f, row] : oracle_rows())
      if (row == obs) singles.insert({f});
    const std::set<FaultSet> got(d.candidates.begin(), d.candidates.end());
    for (const auto& c : d.candidates) EXPECT_LE(c.size(), 2u);
    if (obs.empty()) continue;
    if (!singles.empty()) {
      EXPECT_EQ(got, singles);
    } else {
      EXPECT_EQ(got, oracle_pairs(obs));
      EXPECT_EQ(d.verdict, got.empty() ? FdiVerdict::NoMatch : FdiVerdict::Ambiguous);
    }
  }
}

TEST(FdiDiagnose, IndependentOfRowOrder) {
  auto m = build_signature_matrix(plant().graph);
  const std::set<std::string> obs{"r_De1", "r_De2", "r_Df1", "r_Df2"};
  const auto base = fdi_diagnose(obs, m);
  std::mt19937 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::size_t> perm(m.faults.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    SignatureMatrix p;
    p.constraints = m.constraints;
    for (auto i : perm) {
      p.faults.push_back(m.faults[i]);
      p.entries.push_back(m.entries[i]);
    }
    const auto d = fdi_diagnose(obs, p);
    EXPECT_EQ(d.candidates, base.candidates);
    EXPECT_EQ(d.verdict, base.verdict);
  }
}

TEST(FdiDiagnose, OnSimulatedAlarms) {
  const auto m = build_signature_matrix(plant().graph);
  const auto d = fdi_diagnose(plant().alarms(plant().scenario({"De2"})), m);
  EXPECT_EQ(d.verdict, FdiVerdict::Exact);
  EXPECT_EQ(d.candidates, std::vector<FaultSet>{{"De2"}});
}
