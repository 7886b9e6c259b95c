#include <gtest/gtest.h>

#include "csapo/csapo.hpp"
#include "fixtures.hpp"

using namespace csapo;

namespace {

ConfidenceParams params(std::int64_t T = 100, EpochTrigger trig = EpochTrigger::kLiteral) {
  return {T, 0.1, trig};
}

Trajectory chain_path(int L) {
  return {std::vector<int>(L + 1, 0), std::vector<int>(L, 0)};
}

}  // namespace

TEST(Confidence, WidthFormulaExamples) {
  EXPECT_NEAR(confidence_width(2, 2, 4, 100, 0.1, 0.0), std::sqrt(4.0 * std::log(8000.0)), 1e-12);
  EXPECT_NEAR(confidence_width(2, 2, 4, 100, 0.1, 0.0), 5.996, 1e-3);
  EXPECT_NEAR(confidence_width(2, 2, 4, 100, 0.1, 100.0), 0.5996, 1e-4);
  // Fewer than one visit counts as one.
  EXPECT_EQ(confidence_width(2, 2, 4, 100, 0.1, 0.5), confidence_width(2, 2, 4, 100, 0.1, 1.0));
}

TEST(Confidence, FreshStateUsesUnclippedAndClippedWidths) {
  const LayeredStateSpace s({1, 2, 1}, 2);  // |X| = 4, |A| = 2
  EpochState st(s, params());
  EXPECT_NEAR(st.raw_widths()(0, 0, 1), 5.996, 1e-3);
  EXPECT_EQ(st.widths()(0, 0, 1), 2.0);
  EXPECT_EQ(st.epoch(), 1);
}

TEST(Confidence, CountsAfterChainTrajectories) {
  const auto s = fixture::chain(3);
  EpochState st(s, params());
  st.record(chain_path(3));
  for (int l = 0; l < 3; ++l) {
    EXPECT_EQ(st.in_epoch_visits()(l, 0, 0), 1.0);
    EXPECT_EQ(st.in_epoch_transitions()(l, 0, 0, 0), 1.0);
  }
  st.record(chain_path(3));
  for (int l = 0; l < 3; ++l) EXPECT_EQ(st.in_epoch_visits()(l, 0, 0), 2.0);
}

TEST(Confidence, OneVisitPerLayerPerEpisode) {
  const LayeredStateSpace s({1, 3, 2, 1}, 2);
  Rng gen(1);
  const auto pi = fixture::random_policy(s, gen);
  const auto P = fixture::random_kernel(s, gen);
  EpochState st(s, params(1000));
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) st.record(sample_trajectory(pi, P, rng));
  for (int l = 0; l < 3; ++l) {
    double total = 0.0;
    for (double v : st.in_epoch_visits().layer(l)) total += v;
    EXPECT_EQ(total, 1000.0);
  }
}

TEST(Confidence, TriggerRules) {
  const auto s = fixture::chain(2);
  EpochState st(s, params());
  EXPECT_TRUE(st.should_advance());  // 0 >= 0 as written
  EpochState visit(s, params(100, EpochTrigger::kRequireVisit));
  EXPECT_FALSE(visit.should_advance());

  for (int i = 0; i < 8; ++i) st.record(chain_path(2));
  st.advance();
  EXPECT_EQ(st.prior_visits()(0, 0, 0), 8.0);
  for (int i = 0; i < 7; ++i) st.record(chain_path(2));
  EXPECT_FALSE(st.should_advance());
  st.record(chain_path(2));
  EXPECT_TRUE(st.should_advance());  // N = 8, n = 8

  st.advance();  // N = 16
  for (int i = 0; i < 15; ++i) st.record(chain_path(2));
  EXPECT_FALSE(st.should_advance());
  EXPECT_THROW(st.advance(), ContractViolationError);
}

TEST(Confidence, AdvanceMergesCountsAndRebuildsTheModel) {
  const LayeredStateSpace s({1, 2, 1}, 1);
  EpochState st(s, params());
  st.record({{0, 1, 0}, {0, 0}});
  st.record({{0, 1, 0}, {0, 0}});
  st.record({{0, 0, 0}, {0, 0}});
  EXPECT_TRUE(st.observe({{0, 1, 0}, {0, 0}}));
  EXPECT_EQ(st.epoch(), 2);
  EXPECT_EQ(st.prior_visits()(0, 0, 0), 4.0);
  EXPECT_EQ(st.in_epoch_visits()(0, 0, 0), 0.0);
  EXPECT_NEAR(st.empirical_kernel()(0, 0, 0, 1), 0.75, 1e-15);
  EXPECT_NEAR(st.raw_widths()(0, 0, 0), confidence_width(2, 1, 4, 100, 0.1, 4.0), 1e-15);
}

TEST(Confidence, DeterministicKernelGivesOneHotCenter) {
  const LayeredStateSpace s({1, 2, 2, 1}, 2);
  TransitionKernel P(s);
  for (int l = 0; l < 3; ++l) {
    for (int x = 0; x < s.layer_size(l); ++x) {
      for (int a = 0; a < 2; ++a) P(l, x, a, (x + a) % s.layer_size(l + 1)) = 1.0;
    }
  }
  EpochState st(s, params(500));
  Rng rng(4);
  for (int i = 0; i < 500; ++i) st.observe(sample_trajectory(Policy::uniform(s), P, rng));
  const auto& c = st.empirical_kernel();
  for (int l = 0; l < 3; ++l) {
    for (int x = 0; x < s.layer_size(l); ++x) {
      for (int a = 0; a < 2; ++a) {
        if (st.prior_visits()(l, x, a) == 0.0) continue;
        for (int n = 0; n < s.layer_size(l + 1); ++n) EXPECT_EQ(c(l, x, a, n), P(l, x, a, n));
      }
    }
  }
}

TEST(Confidence, EpochCountStaysUnderTheCap) {
  const LayeredStateSpace s({1, 2, 2, 1}, 2);
  Rng gen(6);
  const auto P = fixture::random_kernel(s, gen);
  for (auto trig : {EpochTrigger::kLiteral, EpochTrigger::kRequireVisit}) {
    const std::int64_t T = 4000;
    EpochState st(s, params(T, trig));
    Rng rng(7);
    int last = st.epoch();
    for (std::int64_t t = 0; t < T; ++t) {
      st.observe(sample_trajectory(Policy::uniform(s), P, rng));
      EXPECT_GE(st.epoch(), last);
      last = st.epoch();
    }
    EXPECT_LE(st.epoch(), epoch_cap(s, T));
  }
}

TEST(Confidence, ContainmentExamples) {
  const LayeredStateSpace s({1, 2, 1}, 2);
  Rng gen(8);
  const auto center = fixture::random_kernel(s, gen);
  OccupancyDomain dom{center, StateActionTable(s, 0.2)};
  const auto pi = fixture::random_policy(s, gen);
  EXPECT_TRUE(contains(dom, occupancy_from_policy(pi, center)).passed);
  EXPECT_TRUE(kernel_in_domain(center, dom));

  // Shift 0.15 of mass at (x0, a1): L1 distance 0.3 against a radius of 0.2.
  TransitionKernel off = center;
  const double move = 0.15;
  if (off(0, 0, 1, 0) < move) {
    off(0, 0, 1, 0) += move;
    off(0, 0, 1, 1) -= move;
  } else {
    off(0, 0, 1, 0) -= move;
    off(0, 0, 1, 1) += move;
  }
  const auto rep = contains(dom, occupancy_from_policy(pi, off));
  EXPECT_FALSE(rep.passed);
  EXPECT_NEAR(rep.max_l1_excess, 0.1, 1e-12);
  EXPECT_FALSE(kernel_in_domain(off, dom));

  OccupancyDomain wide{center, StateActionTable(s, 2.0)};
  for (int i = 0; i < 50; ++i) {
    const auto q =
        occupancy_from_policy(fixture::random_policy(s, gen), fixture::random_kernel(s, gen));
    EXPECT_TRUE(contains(wide, q).passed);
  }
}

TEST(Confidence, RejectsBadParameters) {
  const LayeredStateSpace s({1, 2, 1}, 2);
  EXPECT_THROW(EpochState(s, {100, 0.0, EpochTrigger::kLiteral}), ContractViolationError);
  EXPECT_THROW(EpochState(s, {0, 0.1, EpochTrigger::kLiteral}), ContractViolationError);
  EpochState st(s, params());
  EXPECT_THROW(st.record({{0, 0}, {0}}), ShapeMismatchError);
}
