#include <gtest/gtest.h>

#include <sstream>

#include "csapo/csapo.hpp"
#include "enumeration.hpp"
#include "fixtures.hpp"

using namespace csapo;

namespace {

LayeredStateSpace two_branch() { return LayeredStateSpace({1, 2, 1}, 2); }

TransitionKernel two_branch_kernel() {
  TransitionKernel P(two_branch());
  P(0, 0, 0, 0) = 0.3;
  P(0, 0, 0, 1) = 0.7;
  P(0, 0, 1, 0) = 0.7;
  P(0, 0, 1, 1) = 0.3;
  for (int x = 0; x < 2; ++x) {
    for (int a = 0; a < 2; ++a) P(1, x, a, 0) = 1.0;
  }
  return P;
}

}  // namespace

TEST(Occupancy, ChainPutsUnitMassOnThePath) {
  const auto s = fixture::chain(4);
  const auto q = occupancy_from_policy(Policy::uniform(s), TransitionKernel::uniform(s));
  for (int l = 0; l < 4; ++l) EXPECT_EQ(q(l, 0, 0, 0), 1.0);
}

TEST(Occupancy, TwoBranchHandRecursion) {
  const auto q = occupancy_from_policy(Policy::uniform(two_branch()), two_branch_kernel());
  EXPECT_NEAR(q(0, 0, 0, 0), 0.15, 1e-15);
  EXPECT_NEAR(q(0, 0, 1, 0), 0.35, 1e-15);
  EXPECT_NEAR(state_visits(q)[1][0], 0.5, 1e-15);
}

TEST(Occupancy, TwoBranchMatchesTrajectoryFrequencies) {
  const auto pi = Policy::uniform(two_branch());
  const auto P = two_branch_kernel();
  const auto q = occupancy_from_policy(pi, P);
  Rng rng(5);
  const int n = 100000;
  TripleTable counts(two_branch());
  for (int i = 0; i < n; ++i) {
    const auto tr = sample_trajectory(pi, P, rng);
    for (int l = 0; l < 2; ++l) counts(l, tr.states[l], tr.actions[l], tr.states[l + 1]) += 1.0;
  }
  for (int a = 0; a < 2; ++a) {
    for (int y = 0; y < 2; ++y) {
      EXPECT_NEAR(counts(0, 0, a, y) / n, q(0, 0, a, y), 5.0 / std::sqrt(n));
    }
  }
}

TEST(Occupancy, MatchesPathEnumerationOnRandomInstances) {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = fixture::random_space(rng, 4, 3, 2);
    const auto pi = fixture::random_policy(s, rng);
    const auto P = fixture::random_kernel(s, rng);
    const auto q = occupancy_from_policy(pi, P);
    EXPECT_LE(fixture::max_abs_diff(q, oracle::enumerate_paths(pi, P)), 1e-12);
  }
}

TEST(Occupancy, RandomPairsAreValid) {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto s = fixture::random_space(rng, 5, 4, 1 + trial % 3);
    const auto q =
        occupancy_from_policy(fixture::random_policy(s, rng), fixture::random_kernel(s, rng));
    const auto rep = validate(q);
    ASSERT_TRUE(rep.passed) << "trial " << trial << " mass " << rep.max_mass_residual
                            << " flow " << rep.max_flow_residual;
  }
}

TEST(Occupancy, RoundTripOnPositiveOccupancies) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = fixture::random_space(rng, 4, 3, 3);
    const auto pi = fixture::random_policy(s, rng);
    const auto P = fixture::random_kernel(s, rng);
    const auto q = occupancy_from_policy(pi, P);
    EXPECT_LE(fixture::max_abs_diff(policy_of(q), pi), 1e-9);
    EXPECT_LE(fixture::max_abs_diff(transition_of(q), P), 1e-9);
    const auto back = occupancy_from_policy(policy_of(q), transition_of(q));
    EXPECT_LE(fixture::max_abs_diff(back, q), 1e-9);
  }
}

TEST(Occupancy, DeterministicPolicyFallsBackToUniformOffPath) {
  const auto s = LayeredStateSpace({1, 2, 1}, 2);
  TransitionKernel P(s);
  for (int a = 0; a < 2; ++a) P(0, 0, a, 0) = 1.0;  // state 1 of layer 1 is never reached
  for (int x = 0; x < 2; ++x) {
    for (int a = 0; a < 2; ++a) P(1, x, a, 0) = 1.0;
  }
  Policy pi(s);
  pi(0, 0, 1) = 1.0;
  pi(1, 0, 0) = 1.0;
  pi(1, 1, 1) = 1.0;
  const auto q = occupancy_from_policy(pi, P);
  const auto back = policy_of(q);
  EXPECT_EQ(back(0, 0, 1), 1.0);
  EXPECT_EQ(back(1, 0, 0), 1.0);
  EXPECT_EQ(back(1, 1, 0), 0.5);
  EXPECT_EQ(back(1, 1, 1), 0.5);
  const auto k = transition_of(q);
  EXPECT_EQ(k(0, 0, 0, 0), 0.5);  // action 0 never taken at x0
  EXPECT_EQ(k(0, 0, 1, 0), 1.0);
}

TEST(Occupancy, UniformInitializationIsUniformEverywhere) {
  const LayeredStateSpace s({1, 3, 2, 1}, 2);
  const auto q = OccupancyMeasure::uniform(s);
  EXPECT_TRUE(validate(q).passed);
  EXPECT_LE(fixture::max_abs_diff(policy_of(q), Policy::uniform(s)), 1e-15);
  EXPECT_LE(fixture::max_abs_diff(transition_of(q), TransitionKernel::uniform(s)), 1e-15);
}

TEST(Occupancy, ValidationResiduals) {
  const LayeredStateSpace s({1, 2, 2, 1}, 2);
  auto q = OccupancyMeasure::uniform(s);
  EXPECT_TRUE(validate(q).passed);

  auto doubled = q;
  for (int l = 0; l < s.horizon(); ++l) {
    for (double& v : doubled.layer(l)) v *= 2.0;
  }
  const auto rep2 = validate(doubled);
  EXPECT_FALSE(rep2.passed);
  for (double r : rep2.layer_mass_residual) EXPECT_NEAR(r, 1.0, 1e-15);

  // Move 0.01 between next states of (x0, a0): layer 1 inflow changes,
  // outflow does not.
  q(0, 0, 0, 0) += 0.01;
  q(0, 0, 0, 1) -= 0.01;
  const auto rep = validate(q);
  EXPECT_NEAR(rep.max_mass_residual, 0.0, 1e-15);
  EXPECT_NEAR(rep.flow_residual[1][0], 0.01, 1e-15);
  EXPECT_NEAR(rep.flow_residual[1][1], 0.01, 1e-15);
  EXPECT_FALSE(rep.passed);
}

TEST(Occupancy, ShapeMismatchIsRejected) {
  const LayeredStateSpace a({1, 2, 1}, 2);
  const LayeredStateSpace b({1, 3, 1}, 2);
  EXPECT_THROW(occupancy_from_policy(Policy::uniform(a), TransitionKernel::uniform(b)),
               ShapeMismatchError);
  EXPECT_THROW(LayeredStateSpace({2, 1}, 1), ShapeMismatchError);
}

TEST(Occupancy, LinearUtilityExamples) {
  const LayeredStateSpace s({1, 2, 2, 1}, 2);
  Rng rng(8);
  const auto q = occupancy_from_policy(fixture::random_policy(s, rng), fixture::random_kernel(s, rng));
  EXPECT_NEAR(linear_utility(q, StateActionTable(s, 1.0)), 3.0, 1e-12);
  EXPECT_EQ(linear_utility(q, StateActionTable(s, 0.0)), 0.0);

  const auto c = fixture::chain(2, 2);
  StateActionTable u(c);
  u(0, 0, 0) = u(0, 0, 1) = 0.2;
  u(1, 0, 0) = u(1, 0, 1) = 0.7;
  const auto qc = occupancy_from_policy(Policy::uniform(c), TransitionKernel::uniform(c));
  EXPECT_NEAR(linear_utility(qc, u), 0.9, 1e-15);
}

TEST(Occupancy, BilinearRewardExamples) {
  const LayeredStateSpace xs({1, 2, 1}, 2);
  const LayeredStateSpace ys({1, 3, 1}, 3);
  Rng rng(9);
  const auto q1 = occupancy_from_policy(fixture::random_policy(xs, rng), fixture::random_kernel(xs, rng));
  const auto q2 = occupancy_from_policy(fixture::random_policy(ys, rng), fixture::random_kernel(ys, rng));
  EXPECT_NEAR(bilinear_reward(q1, q2, RewardTable(xs, ys, 1.0)), 2.0, 1e-12);
  EXPECT_NEAR(bilinear_reward(q1, q2, RewardTable(xs, ys, 0.3)), 0.6, 1e-12);
}

TEST(Occupancy, BilinearRewardMatchesJointTrajectoryEnumeration) {
  const LayeredStateSpace xs({1, 2, 1}, 2);
  const LayeredStateSpace ys({1, 2, 1}, 2);
  Rng rng(10);
  const auto pi1 = fixture::random_policy(xs, rng);
  const auto pi2 = fixture::random_policy(ys, rng);
  const auto P1 = fixture::random_kernel(xs, rng);
  const auto P2 = fixture::random_kernel(ys, rng);
  RewardTable r(xs, ys);
  for (int l = 0; l < 2; ++l) {
    for (double& v : r.layer(l)) v = rng.uniform();
  }
  // Sum over joint paths (a0, x1, a1) x (b0, y1, b1) of prob * reward.
  double expect = 0.0;
  for (int a0 = 0; a0 < 2; ++a0)
    for (int x1 = 0; x1 < 2; ++x1)
      for (int a1 = 0; a1 < 2; ++a1)
        for (int b0 = 0; b0 < 2; ++b0)
          for (int y1 = 0; y1 < 2; ++y1)
            for (int b1 = 0; b1 < 2; ++b1) {
              const double p1 = pi1(0, 0, a0) * P1(0, 0, a0, x1) * pi1(1, x1, a1);
              const double p2 = pi2(0, 0, b0) * P2(0, 0, b0, y1) * pi2(1, y1, b1);
              expect += p1 * p2 * (r(0, 0, 0, a0, b0) + r(1, x1, y1, a1, b1));
            }
  const auto q1 = occupancy_from_policy(pi1, P1);
  const auto q2 = occupancy_from_policy(pi2, P2);
  EXPECT_NEAR(bilinear_reward(q1, q2, r), expect, 1e-12);
}

TEST(Occupancy, BilinearRewardIsLinearInEachArgument) {
  const LayeredStateSpace xs({1, 3, 2, 1}, 2);
  const LayeredStateSpace ys({1, 2, 2, 1}, 3);
  Rng rng(12);
  RewardTable r(xs, ys);
  for (int l = 0; l < 3; ++l) {
    for (double& v : r.layer(l)) v = rng.uniform();
  }
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = occupancy_from_policy(fixture::random_policy(xs, rng), fixture::random_kernel(xs, rng));
    const auto b = occupancy_from_policy(fixture::random_policy(xs, rng), fixture::random_kernel(xs, rng));
    const auto q2 = occupancy_from_policy(fixture::random_policy(ys, rng), fixture::random_kernel(ys, rng));
    const double w = rng.uniform();
    OccupancyMeasure mix(xs);
    for (int l = 0; l < 3; ++l) {
      for (std::size_t i = 0; i < mix.layer(l).size(); ++i) {
        mix.layer(l)[i] = w * a.layer(l)[i] + (1 - w) * b.layer(l)[i];
      }
    }
    const double lhs = bilinear_reward(mix, q2, r);
    const double rhs = w * bilinear_reward(a, q2, r) + (1 - w) * bilinear_reward(b, q2, r);
    EXPECT_NEAR(lhs, rhs, 1e-12);
  }
}

TEST(Occupancy, CsvRoundTrip) {
  const LayeredStateSpace s({1, 2, 3, 1}, 2);
  Rng rng(13);
  const auto q = occupancy_from_policy(fixture::random_policy(s, rng), fixture::random_kernel(s, rng));
  std::stringstream ss;
  write_occupancy_csv(ss, q);
  EXPECT_EQ(read_occupancy_csv(ss, s), q);
  std::stringstream bad("nope\n");
  EXPECT_THROW(read_occupancy_csv(bad, s), ShapeMismatchError);
}
