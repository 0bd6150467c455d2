#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "qsmlab/verify.hpp"

using namespace qsmlab;

namespace {
KvsQOptions small(std::vector<int> taus, std::vector<int> cos, int nMax = 6) {
  KvsQOptions o;
  o.tauList = std::move(taus);
  o.coarsenessList = std::move(cos);
  o.entropy.nMax = nMax;
  return o;
}
}  // namespace

TEST(Verify, ReportAccessors) {
  TheoremReport r;
  r.add("x", 2.0);
  EXPECT_EQ(r.get("x"), 2.0);
  EXPECT_TRUE(std::isnan(r.get("y")));
  EXPECT_FALSE(r.passed());
  EXPECT_STREQ(verdict_name(Verdict::skipped), "skipped");
}

TEST(Verify, RelabelConjugacyExact) {
  auto r = check_relabel_conjugacy(fixtures::fin3(), {1, 0, 2}, 1, 1, 6);
  EXPECT_TRUE(r.passed()) << r.reason;
  EXPECT_EQ(r.get("max_H_difference"), 0.0);
}

TEST(Verify, ShiftConjugacyOnCircle) {
  auto m = fixtures::example1(128);
  auto r = check_conjugacy(m, 0.25, 1, 8, 4);
  EXPECT_TRUE(r.passed()) << r.reason;
  EXPECT_LE(r.get("max_H_difference"), 1e-9);
}

TEST(Verify, ShiftConjugacySkipsFiniteSystems) {
  auto r = check_conjugacy(fixtures::fin3(), 0.25, 1, 1, 4);
  EXPECT_EQ(r.verdict, Verdict::skipped);
}

TEST(Verify, ShiftMustAlignOnFullCircle) {
  auto s = make_circle(Family::circle1, 0.1, 0.05, 0.07);
  auto m = make_model(s, build_grid(0.0, 1.0, 16, 2), control_quadrature(noise_of(s), 4));
  EXPECT_THROW(check_conjugacy(m, 0.1, 1, 1, 3), std::invalid_argument);
}

TEST(Verify, KvsQSkipsNonInvariantK) {
  auto r = check_k_vs_q(fixtures::fin3(), {0}, small({1}, {1}));
  EXPECT_EQ(r.verdict, Verdict::skipped);
  EXPECT_EQ(r.get("witness_cell"), 0.0);
  EXPECT_EQ(r.get("witness_node"), 1.0);
  ASSERT_FALSE(r.notes.empty());
}

TEST(Verify, KvsQWithKEqualQ) {
  auto m = fixtures::fin3();
  auto r = check_k_vs_q(m, m.grid.all_cells(), small({1, 2}, {1, 2}));
  EXPECT_TRUE(r.passed()) << r.reason;
  EXPECT_NEAR(r.get("abs_difference"), 0.0, 1e-12);
  auto inc = check_incremental_k_vs_q(m, m.grid.all_cells(), small({1, 2}, {1, 2}));
  EXPECT_TRUE(inc.passed()) << inc.reason;
}

TEST(Verify, KvsQPartialCoverSkipsEquality) {
  auto r = check_k_vs_q(fixtures::two_basin(), {0, 1}, small({1, 2}, {1, 2, 4}));
  EXPECT_TRUE(r.passed()) << r.reason;
  EXPECT_EQ(r.get("cover_total"), 0.0);
  EXPECT_TRUE(std::isnan(r.get("abs_difference")));
}

TEST(Verify, DisjointUnionTwoBasins) {
  auto r = check_disjoint_union(fixtures::two_basin(), {{0, 1}, {2, 3}}, 1, 1, 6);
  EXPECT_TRUE(r.passed()) << r.reason;
  auto o = check_disjoint_union(fixtures::two_basin(), {{0, 1}, {1, 2}}, 1, 1, 6);
  EXPECT_EQ(o.verdict, Verdict::skipped);
  auto n = check_disjoint_union(fixtures::fin3(), {{0}, {1}}, 1, 1, 6);
  EXPECT_EQ(n.verdict, Verdict::skipped);
}

TEST(Verify, ComparisonFin3) {
  auto r = check_comparison(fixtures::fin3(), 1, 1, 6);
  EXPECT_TRUE(r.passed()) << r.reason;
}

TEST(Verify, SupportFin3) {
  auto m = fixtures::fin3();
  auto g = symbolic_image(m.spec, m.grid, m.quad);
  auto r = check_support(m, find_w_control_sets(m.grid, g));
  EXPECT_TRUE(r.passed()) << r.reason;
}

TEST(Verify, InvariantSetsFin3) {
  auto m = fixtures::fin3();
  auto res = invariant_sets_pipeline(m, m.grid.all_cells(), small({1, 2}, {1, 2}));
  EXPECT_TRUE(res.report.passed()) << res.report.reason;
  EXPECT_EQ(res.k, (CellSet{0, 1}));
  EXPECT_NEAR(res.report.get("h_Q"), res.report.get("h_K"), 1e-12);
}

TEST(Verify, InvariantSetsSkipsWithoutInvariantSet) {
  // The only cycle is the loop at 0, and 0 can move on to 1, which has no edges in Q.
  auto m = fixtures::finite_model(make_table({{1, 0}, {2, 2}, {2, 2}}, {"a", "b"}, {0, 1}));
  auto r = check_invariant_sets(m, m.grid.all_cells(), small({1}, {1}));
  EXPECT_EQ(r.verdict, Verdict::skipped);
}

TEST(Verify, InvariantSetsExample2) {
  auto m = fixtures::example2(256);
  auto res = invariant_sets_pipeline(m, m.grid.all_cells(), small({1, 2, 3}, {8, 64, 256}, 8));
  EXPECT_EQ(res.sets.sets.size(), 2u);
  EXPECT_EQ(res.invariantSets.size(), 1u);
  EXPECT_TRUE(res.report.passed()) << res.report.reason;
}
