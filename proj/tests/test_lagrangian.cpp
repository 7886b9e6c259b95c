#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "csapo/csapo.hpp"
#include "fixtures.hpp"

using namespace csapo;

namespace {

// One decision layer and one path, so <q, u> is the single entry of u.
struct Scalar {
  LayeredStateSpace s = fixture::chain(1);
  OccupancyMeasure q = occupancy_from_policy(Policy::uniform(s), TransitionKernel::uniform(s));
  StateActionTable u(double v) const { return StateActionTable(s, v); }
};

std::string run_csv(const LayeredGame& g, std::int64_t T, std::uint64_t seed,
                    ConstraintMode mode = ConstraintMode::kCoupled) {
  RunOptions opt;
  opt.mode = mode;
  const auto log = run_ucb_csapo(g, theorem_defaults(g.horizon(), T), T, seed, opt);
  std::ostringstream os;
  write_run_csv(os, log, "golden");
  return os.str();
}

}  // namespace

TEST(DualUpdate, CoupledExamples) {
  Scalar c;
  EXPECT_NEAR(dual_update(0.0, c.q, c.q, c.u(0.75), c.u(0.75), 1.0), 0.5, 1e-15);
  EXPECT_EQ(dual_update(0.2, c.q, c.q, c.u(0.0), c.u(0.0), 1.0), 0.0);
  EXPECT_NEAR(dual_update(1.0, c.q, c.q, c.u(0.7), c.u(0.6), 1.0), 1.3, 1e-15);
}

TEST(DualUpdate, SideExamples) {
  Scalar c;
  auto [a1, a2] = dual_update_side(0.0, 0.0, c.q, c.q, c.u(1.5), c.u(1.5), 1.0, 1.0);
  EXPECT_NEAR(a1, 0.5, 1e-15);
  EXPECT_NEAR(a2, 0.5, 1e-15);
  auto [b1, b2] = dual_update_side(0.2, 0.2, c.q, c.q, c.u(0.0), c.u(0.0), 1.0, 1.0);
  EXPECT_EQ(b1, 0.0);
  EXPECT_EQ(b2, 0.0);
  auto [d1, d2] = dual_update_side(1.0, 1.0, c.q, c.q, c.u(1.3), c.u(1.3), 1.0, 1.0);
  EXPECT_NEAR(d1, 1.3, 1e-15);
  EXPECT_NEAR(d2, 1.3, 1e-15);
}

TEST(Params, DefaultSchedule) {
  const auto p = theorem_defaults(3, 1024);
  EXPECT_NEAR(p.V, 3.0 * 32.0, 1e-12);
  EXPECT_NEAR(p.eta, 1.0 / (3.0 * 1024.0), 1e-18);
  EXPECT_NEAR(p.theta, 1.0 / 1024.0, 1e-18);
  EXPECT_EQ(p.delta, 0.1);
  LearnerParams bad = p;
  bad.theta = 0.0;
  EXPECT_THROW(bad.check(), ContractViolationError);
  bad = p;
  bad.eta = -1.0;
  EXPECT_THROW(bad.check(), ContractViolationError);
}

TEST(Run, SingleActionSinglePathKeepsZeroMultiplier) {
  const auto s = fixture::chain(3);
  LayeredGame g;
  g.min_player = {s, TransitionKernel::uniform(s), StateActionTable(s)};
  g.max_player = g.min_player;
  g.reward.tables.push_back(RewardTable(s, s, 0.5));
  g.budget = 1.0;
  g.witness_min = g.witness_max = Policy::uniform(s);
  const auto log = run_ucb_csapo(g, theorem_defaults(3, 200), 200, 1);
  for (const auto& r : log.rows) {
    EXPECT_EQ(r.lambda1, 0.0);
    EXPECT_EQ(r.pi1, Policy::uniform(s));
    EXPECT_EQ(r.pi2, Policy::uniform(s));
  }
}

TEST(Run, FullBudgetNeverBinds) {
  GameSpec spec;
  spec.budget = 6.0;  // 2L
  const auto g = generate_random_game(spec);
  const auto log = run_ucb_csapo(g, theorem_defaults(3, 1024), 1024, 3);
  EXPECT_LE(log.rows.back().lambda1, 0.05 * 3);
  for (const auto& r : log.rows) EXPECT_LE(r.violation1, 0.0);
}

TEST(Run, PoliciesValidAndEpochsMonotoneUnderTheCap) {
  const auto g = generate_random_game(GameSpec{});
  const std::int64_t T = 1024;
  const auto log = run_ucb_csapo(g, theorem_defaults(3, T), T, 5);
  ASSERT_EQ(log.rows.size(), static_cast<std::size_t>(T));
  int e1 = 1, e2 = 1;
  for (const auto& r : log.rows) {
    EXPECT_NO_THROW(r.pi1.check());
    EXPECT_NO_THROW(r.pi2.check());
    EXPECT_GE(r.epoch1, e1);
    EXPECT_GE(r.epoch2, e2);
    e1 = r.epoch1;
    e2 = r.epoch2;
    EXPECT_GE(r.lambda1, 0.0);
  }
  EXPECT_EQ(log.rows.front().epoch1, 1);
  EXPECT_LE(e1, epoch_cap(g.min_player.space, T));
  EXPECT_LE(e2, epoch_cap(g.max_player.space, T));
}

TEST(Run, EstimatesAreKeptOnRequestAndLieInTheirDomains) {
  const auto g = generate_random_game(GameSpec{});
  RunOptions opt;
  opt.keep_estimates = true;
  int calls = 0;
  opt.on_episode = [&](const EpisodeRecord& r, const OccupancyMeasure& q1, const OccupancyMeasure& q2) {
    ++calls;
    EXPECT_EQ(*r.q1_hat, q1.marginals());
    EXPECT_TRUE(validate(q1, 1e-6).passed);
    EXPECT_TRUE(validate(q2, 1e-6).passed);
  };
  const auto log = run_ucb_csapo(g, theorem_defaults(3, 64), 64, 1, opt);
  EXPECT_EQ(calls, 64);
  EXPECT_TRUE(log.has_estimates());
  EXPECT_FALSE(run_ucb_csapo(g, theorem_defaults(3, 8), 8, 1).has_estimates());
}

TEST(Run, SideModeNeedsBudgetsAndTracksTwoMultipliers) {
  GameSpec spec;
  EXPECT_THROW(
      {
        RunOptions opt;
        opt.mode = ConstraintMode::kSide;
        run_ucb_csapo(generate_random_game(spec), theorem_defaults(3, 4), 4, 1, opt);
      },
      ContractViolationError);
  spec.side_budgets = SideBudgets{0.4, 0.4};
  const auto g = generate_random_game(spec);
  RunOptions opt;
  opt.mode = ConstraintMode::kSide;
  const auto log = run_ucb_csapo(g, theorem_defaults(3, 256), 256, 2, opt);
  bool split = false;
  for (const auto& r : log.rows) split = split || r.lambda1 != r.lambda2;
  EXPECT_TRUE(split);
  std::ostringstream os;
  write_run_csv(os, log, "h");
  EXPECT_NE(os.str().find("t,lambda1,lambda2,epoch1,epoch2,realized_violation1,realized_violation2"),
            std::string::npos);
}

TEST(Run, SameSeedIsBitIdenticalAndSeedsDiffer) {
  const auto g = generate_random_game(GameSpec{});
  EXPECT_EQ(run_csv(g, 300, 11), run_csv(g, 300, 11));
  EXPECT_NE(run_csv(g, 300, 11), run_csv(g, 300, 12));
}

TEST(Run, CsvLayout) {
  const auto g = generate_random_game(GameSpec{});
  const auto log = run_ucb_csapo(g, theorem_defaults(3, 3), 3, 1);
  std::ostringstream os;
  write_run_csv(os, log, "csapo test", true);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "# csapo test");
  std::getline(is, line);
  EXPECT_EQ(line,
            "t,lambda,epoch1,epoch2,realized_violation,solver_iters1,solver_iters2,"
            "solver_residual1,solver_residual2,dual_value1,dual_value2");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 3);
}

TEST(Run, MatchesGoldenFile) {
  const auto g = generate_random_game(GameSpec{});
  const std::string path = std::string(CSAPO_TEST_DATA) + "/golden_T4096_seed7.csv";
  std::ifstream in(path, std::ios::binary);
  ASSERT_TRUE(in) << "missing " << path;
  std::ostringstream expect;
  expect << in.rdbuf();
  EXPECT_TRUE(run_csv(g, 4096, 7) == expect.str());
}
