#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "qsmlab/partitions.hpp"

using namespace qsmlab;

namespace {
std::optional<InvariantPartition> partition(const Model& m, int tau, int co) {
  return build_invariant_partition(m.grid, m.qsm.eta, tau, co, m.spec, m.quad);
}

// K = {0} is invariant; 1 steers in with b, 2 needs a then b. Q \ K carries eta mass.
SystemSpec funnel_spec() { return make_table({{0, 3}, {2, 0}, {1, 2}, {3, 3}}, {"a", "b"}, {0, 1, 2}); }
}  // namespace

TEST(Partitions, FeedbackRuleNames) {
  EXPECT_EQ(parse_feedback_rule("lexicographic"), FeedbackRule::lexicographic);
  EXPECT_EQ(parse_feedback_rule("max-margin"), FeedbackRule::maxMargin);
  EXPECT_THROW(parse_feedback_rule("random"), std::invalid_argument);
}

TEST(Partitions, Fin3Singletons) {
  auto p = partition(fixtures::fin3(), 1, 1);
  ASSERT_TRUE(p);
  ASSERT_EQ(p->size(), 2);
  EXPECT_EQ(p->elements[0], (CellSet{0}));
  EXPECT_EQ(p->feedback[0], (std::vector<int>{0}));
  EXPECT_EQ(p->feedback[1], (std::vector<int>{0}));
  EXPECT_TRUE(p->nullCells.empty());
}

TEST(Partitions, Fin3SingleBlock) {
  auto m = fixtures::fin3();
  auto p = partition(m, 2, 2);
  ASSERT_TRUE(p);
  ASSERT_EQ(p->size(), 1);
  EXPECT_EQ(p->elements[0], (CellSet{0, 1}));
  EXPECT_EQ(p->feedback[0], (std::vector<int>{0, 0}));
  EXPECT_TRUE(validate_partition(*p, m.spec, m.grid, m.quad).empty());
}

TEST(Partitions, InfeasibleWhenACellMustLeave) {
  auto m = fixtures::finite_model(fixtures::infeasible_spec());
  EXPECT_FALSE(partition(m, 1, 1));
  EXPECT_FALSE(partition(m, 1, 2));
}

TEST(Partitions, NullCellsExcluded) {
  auto m = fixtures::finite_model(make_table({{1}, {1}}, {"a"}, {0, 1}));
  auto p = partition(m, 1, 1);
  ASSERT_TRUE(p);
  EXPECT_EQ(p->nullCells, (CellSet{0}));
  ASSERT_EQ(p->size(), 1);
  EXPECT_EQ(p->elements[0], (CellSet{1}));
}

TEST(Partitions, InvalidArguments) {
  auto m = fixtures::fin3();
  EXPECT_THROW(partition(m, 0, 1), std::invalid_argument);
  EXPECT_THROW(partition(m, 1, 0), std::invalid_argument);
}

TEST(Partitions, ValidateCatchesBrokenFeedback) {
  auto m = fixtures::fin3();
  auto p = *partition(m, 1, 1);
  p.feedback[1] = {1};
  auto bad = validate_partition(p, m.spec, m.grid, m.quad);
  ASSERT_EQ(bad.size(), 1u);
  EXPECT_EQ(bad[0], (std::pair<int, int>{1, 1}));
}

TEST(Partitions, MaxMarginKeepsAwayFromBoundary) {
  auto m = fixtures::example1(128);
  auto lex = build_invariant_partition(m.grid, m.qsm.eta, 1, 8, m.spec, m.quad, {}, FeedbackRule::lexicographic);
  auto mar = build_invariant_partition(m.grid, m.qsm.eta, 1, 8, m.spec, m.quad, {}, FeedbackRule::maxMargin);
  ASSERT_TRUE(lex && mar);
  EXPECT_TRUE(validate_partition(*lex, m.spec, m.grid, m.quad).empty());
  EXPECT_TRUE(validate_partition(*mar, m.spec, m.grid, m.quad).empty());
}

TEST(Partitions, Example1ValidAtSeveralCoarseness) {
  auto m = fixtures::example1(128);
  for (int co : {1, 8, 128}) {
    auto p = partition(m, 2, co);
    ASSERT_TRUE(p) << co;
    EXPECT_TRUE(validate_partition(*p, m.spec, m.grid, m.quad).empty()) << co;
    CellSet all = p->nullCells;
    for (const auto& e : p->elements) all = set_union(all, e);
    EXPECT_EQ(all, m.grid.all_cells());
  }
}

TEST(Partitions, SquareDoublesTauAndKeepsCells) {
  auto m = fixtures::fin3();
  auto p = *partition(m, 1, 1);
  auto sq = square_partition(p, m.spec, m.grid, m.quad);
  EXPECT_EQ(sq.tau, 2);
  CellSet all;
  for (const auto& e : sq.elements) all = set_union(all, e);
  EXPECT_EQ(all, (CellSet{0, 1}));
  for (const auto& w : sq.feedback) EXPECT_EQ(w.size(), 2u);
  EXPECT_TRUE(validate_partition(sq, m.spec, m.grid, m.quad).empty());
}

TEST(Partitions, RestrictRequiresInvariantK) {
  auto m = fixtures::fin3();
  auto p = *partition(m, 1, 1);
  EXPECT_THROW(restrict_to_k(p, {0}, m.spec, m.grid, m.quad), std::invalid_argument);
  auto tb = fixtures::two_basin();
  auto q = *partition(tb, 1, 2);
  auto r = restrict_to_k(q, {0, 1}, tb.spec, tb.grid, tb.quad);
  ASSERT_EQ(r.size(), 1);
  EXPECT_EQ(r.elements[0], (CellSet{0, 1}));
  EXPECT_EQ(r.domain, (CellSet{0, 1}));
}

TEST(Partitions, ExtendFromKAlongSteeringWords) {
  auto m = fixtures::finite_model(funnel_spec());
  ASSERT_TRUE(m.qsm.converged);
  for (double e : m.qsm.eta) EXPECT_GT(e, 0.0);
  auto g = symbolic_image(m.spec, m.grid, m.quad);
  auto cover = steering_cover(m.spec, m.grid, m.quad, g, {0});
  ASSERT_TRUE(cover.total());
  EXPECT_EQ(cover.max_time(), 2);
  auto ck = build_invariant_partition(m.grid, m.qsm.eta, 2, 1, m.spec, m.quad, {0});
  ASSERT_TRUE(ck);
  int defects = -1;
  auto q = extend_from_k(*ck, cover, m.spec, m.grid, m.quad, m.grid.all_cells(), m.qsm.eta, 1e-12, &defects);
  EXPECT_EQ(defects, 0);
  ASSERT_EQ(q.size(), 3);
  auto lookup = q.element_lookup(m.grid.cellCount);
  EXPECT_EQ(q.feedback[lookup[1]], (std::vector<int>{1, 0}));
  EXPECT_EQ(q.feedback[lookup[2]], (std::vector<int>{0, 1}));
  EXPECT_TRUE(validate_partition(q, m.spec, m.grid, m.quad).empty());

  auto short_ = build_invariant_partition(m.grid, m.qsm.eta, 1, 1, m.spec, m.quad, {0});
  EXPECT_THROW(extend_from_k(*short_, cover, m.spec, m.grid, m.quad, m.grid.all_cells(), m.qsm.eta),
               std::invalid_argument);
}
