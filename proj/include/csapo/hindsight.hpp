#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include <nlohmann/json.hpp>

#include "csapo/errors.hpp"
#include "csapo/game.hpp"
#include "csapo/layered.hpp"
#include "csapo/occupancy.hpp"

namespace csapo {

struct BackwardInductionResult {
  Policy policy;                            // deterministic
  std::vector<std::vector<double>> values;  // values[l][x], values[L][0] = 0
  double value = 0.0;                       // values[0][0]
};

// Maximizes the expected sum of reward(x,a) along the episode. Ties go to
// the smallest action index.
inline BackwardInductionResult backward_induction(const TransitionKernel& P,
                                                  const StateActionTable& reward) {
  require_same_space(P.space(), reward.space(), "backward_induction");
  const auto& s = P.space();
  BackwardInductionResult out{Policy(s), {}, 0.0};
  out.values.resize(s.horizon() + 1);
  out.values[s.horizon()].assign(1, 0.0);
  for (int l = s.horizon() - 1; l >= 0; --l) {
    out.values[l].assign(s.layer_size(l), 0.0);
    const auto& next = out.values[l + 1];
    for (int x = 0; x < s.layer_size(l); ++x) {
      int best_a = 0;
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < s.num_actions(); ++a) {
        double q = reward(l, x, a);
        const auto row = P.row(l, x, a);
        for (std::size_t n = 0; n < row.size(); ++n) q += row[n] * next[n];
        if (q > best) {
          best = q;
          best_a = a;
        }
      }
      out.values[l][x] = best;
      out.policy(l, x, best_a) = 1.0;
    }
  }
  out.value = out.values[0][0];
  return out;
}

enum class Direction { kMin, kMax };

struct BestResponse {
  OccupancyMeasure q;
  double objective = 0.0;  // <q, objective>
  double utility = 0.0;    // <q, constraint_u>
  double kappa = 0.0;      // multiplier at termination
};

struct BisectionOptions {
  double kappa_tol = 1e-10;
  int max_iters = 50;
};

// opt_{q in Delta(P)} <q, objective> subject to <q, u> <= budget, solved by
// bisection on the multiplier of the scalarized reward +-objective - kappa u.
inline BestResponse constrained_best_response(const TransitionKernel& P,
                                              const StateActionTable& objective,
                                              const StateActionTable& u, double budget,
                                              Direction direction,
                                              const BisectionOptions& opt = {}) {
  require_same_space(P.space(), objective.space(), "constrained_best_response");
  require_same_space(P.space(), u.space(), "constrained_best_response");
  const auto& s = P.space();
  const double sign = direction == Direction::kMax ? 1.0 : -1.0;

  auto solve = [&](double kappa) {
    StateActionTable scalarized(s);
    for (int l = 0; l < s.horizon(); ++l) {
      auto& dst = scalarized.layer(l);
      const auto& o = objective.layer(l);
      const auto& c = u.layer(l);
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = sign * o[i] - kappa * c[i];
    }
    BestResponse br;
    br.q = occupancy_from_policy(backward_induction(P, scalarized).policy, P);
    br.objective = linear_utility(br.q, objective);
    br.utility = linear_utility(br.q, u);
    br.kappa = kappa;
    return br;
  };

  StateActionTable neg_u(s);
  for (int l = 0; l < s.horizon(); ++l) {
    for (std::size_t i = 0; i < neg_u.layer(l).size(); ++i) neg_u.layer(l)[i] = -u.layer(l)[i];
  }
  const auto least = occupancy_from_policy(backward_induction(P, neg_u).policy, P);
  const double least_u = linear_utility(least, u);
  if (least_u > budget + 1e-12) {
    throw InfeasibleBudgetError("budget " + std::to_string(budget) +
                                " is below the minimum attainable utility " +
                                std::to_string(least_u));
  }

  BestResponse lo = solve(0.0);
  if (lo.utility <= budget) return lo;

  double kappa_hi = 1.0;
  BestResponse hi = solve(kappa_hi);
  while (hi.utility > budget) {
    kappa_hi *= 2.0;
    if (kappa_hi > 1e15) {
      hi.q = least;
      hi.objective = linear_utility(least, objective);
      hi.utility = least_u;
      hi.kappa = kappa_hi;
      break;
    }
    hi = solve(kappa_hi);
  }
  for (int it = 0; it < opt.max_iters && hi.kappa - lo.kappa > opt.kappa_tol; ++it) {
    const double mid = 0.5 * (lo.kappa + hi.kappa);
    BestResponse m = solve(mid);
    if (m.utility > budget) {
      lo = std::move(m);
    } else {
      hi = std::move(m);
    }
  }
  // Mix the bracketing responses so the constraint holds with equality.
  if (lo.utility - hi.utility <= 0.0) return hi;
  const double alpha = std::clamp((budget - hi.utility) / (lo.utility - hi.utility), 0.0, 1.0);
  BestResponse out;
  out.q = OccupancyMeasure(s);
  for (int l = 0; l < s.horizon(); ++l) {
    auto& dst = out.q.layer(l);
    const auto& a = lo.q.layer(l);
    const auto& b = hi.q.layer(l);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = alpha * a[i] + (1.0 - alpha) * b[i];
  }
  out.objective = linear_utility(out.q, objective);
  out.utility = linear_utility(out.q, u);
  out.kappa = 0.5 * (lo.kappa + hi.kappa);
  return out;
}

// -- Hindsight comparator -------------------------------------------------------

enum class BudgetCoupling { kCoupled, kSide };

struct SaddleSolution {
  OccupancyMeasure q1;
  OccupancyMeasure q2;
  double value = 0.0;
  double exploitability = 0.0;
  // Coupled: b - (<q1,g> + <q2,h>). Side: min over players of b_i - <q_i,u_i>.
  double constraint_slack = 0.0;
  int rounds = 0;
};

namespace detail {

inline double budget_for_min(const LayeredGame& game, BudgetCoupling c, const OccupancyMeasure& q2) {
  return c == BudgetCoupling::kSide ? game.side_budgets->min_player
                                    : game.budget - linear_utility(q2, game.max_player.utility_mean);
}

inline double budget_for_max(const LayeredGame& game, BudgetCoupling c, const OccupancyMeasure& q1) {
  return c == BudgetCoupling::kSide ? game.side_budgets->max_player
                                    : game.budget - linear_utility(q1, game.min_player.utility_mean);
}

// Constrained best response, or the least-utility response when the budget
// left by the opponent cannot be met. `feasible` reports which one it was.
inline BestResponse response_or_least(const TransitionKernel& P, const StateActionTable& obj,
                                      const StateActionTable& u, double budget, Direction dir,
                                      bool* feasible = nullptr) {
  try {
    auto br = constrained_best_response(P, obj, u, budget, dir);
    if (feasible) *feasible = true;
    return br;
  } catch (const InfeasibleBudgetError&) {
    if (feasible) *feasible = false;
    StateActionTable neg(u.space());
    for (int l = 0; l < u.space().horizon(); ++l) {
      for (std::size_t i = 0; i < neg.layer(l).size(); ++i) neg.layer(l)[i] = -u.layer(l)[i];
    }
    BestResponse br;
    br.q = occupancy_from_policy(backward_induction(P, neg).policy, P);
    br.objective = linear_utility(br.q, obj);
    br.utility = linear_utility(br.q, u);
    return br;
  }
}

inline void accumulate(OccupancyMeasure& avg, const OccupancyMeasure& q, double weight) {
  for (int l = 0; l < avg.space().horizon(); ++l) {
    auto& a = avg.layer(l);
    const auto& b = q.layer(l);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += weight * (b[i] - a[i]);
  }
}

inline double slack_of(const LayeredGame& game, BudgetCoupling c, const OccupancyMeasure& q1,
                       const OccupancyMeasure& q2) {
  const double u1 = linear_utility(q1, game.min_player.utility_mean);
  const double u2 = linear_utility(q2, game.max_player.utility_mean);
  if (c == BudgetCoupling::kSide) {
    return std::min(game.side_budgets->min_player - u1, game.side_budgets->max_player - u2);
  }
  return game.budget - u1 - u2;
}

}  // namespace detail

// Sum of both players' constrained best-response gaps against the fixed
// opponent. A player whose deviation set is empty contributes zero.
inline double exploitability(const OccupancyMeasure& q1, const OccupancyMeasure& q2,
                             const LayeredGame& game, const RewardTable& aggregate_r,
                             BudgetCoupling coupling = BudgetCoupling::kCoupled) {
  const double value = bilinear_reward(q1, q2, aggregate_r);
  const auto obj1 = reward_against_max(q2.marginals(), aggregate_r);
  const auto obj2 = reward_against_min(q1.marginals(), aggregate_r);
  double gap = 0.0;
  bool ok = false;
  const auto br1 = detail::response_or_least(game.min_player.kernel, obj1,
                                             game.min_player.utility_mean,
                                             detail::budget_for_min(game, coupling, q2),
                                             Direction::kMin, &ok);
  if (ok) gap += value - br1.objective;
  const auto br2 = detail::response_or_least(game.max_player.kernel, obj2,
                                             game.max_player.utility_mean,
                                             detail::budget_for_max(game, coupling, q1),
                                             Direction::kMax, &ok);
  if (ok) gap += br2.objective - value;
  return gap;
}

struct HindsightOptions {
  double tol = 1e-3;
  int max_rounds = 10000;
  BudgetCoupling coupling = BudgetCoupling::kCoupled;
};

// Alternating fictitious play over constrained best responses; the coupled
// budget of each player is whatever the opponent's running average leaves.
// Returns the averaged pair with the smallest exploitability seen.
inline SaddleSolution solve_hindsight(const LayeredGame& game, const RewardTable& aggregate_r,
                                      const HindsightOptions& opt = {}) {
  if (opt.coupling == BudgetCoupling::kSide && !game.side_budgets) {
    throw ContractViolationError("side coupling needs per-player budgets");
  }
  const auto& P1 = game.min_player.kernel;
  const auto& P2 = game.max_player.kernel;
  const auto& g = game.min_player.utility_mean;
  const auto& h = game.max_player.utility_mean;

  OccupancyMeasure avg1 = occupancy_from_policy(Policy::uniform(P1.space()), P1);
  OccupancyMeasure avg2 = occupancy_from_policy(Policy::uniform(P2.space()), P2);
  SaddleSolution best;
  best.exploitability = std::numeric_limits<double>::infinity();
  auto consider = [&](int round) {
    const double e = exploitability(avg1, avg2, game, aggregate_r, opt.coupling);
    const double slack = detail::slack_of(game, opt.coupling, avg1, avg2);
    if (slack >= -1e-6 && e < best.exploitability) {
      best.q1 = avg1;
      best.q2 = avg2;
      best.exploitability = e;
      best.constraint_slack = slack;
      best.value = bilinear_reward(avg1, avg2, aggregate_r);
      best.rounds = round;
    }
    return e;
  };

  double last = consider(0);
  for (int k = 1; k <= opt.max_rounds && best.exploitability > opt.tol; ++k) {
    const double w = 1.0 / (k + 1);
    const auto br1 = detail::response_or_least(
        P1, reward_against_max(avg2.marginals(), aggregate_r), g,
        detail::budget_for_min(game, opt.coupling, avg2), Direction::kMin);
    detail::accumulate(avg1, br1.q, w);
    const auto br2 = detail::response_or_least(
        P2, reward_against_min(avg1.marginals(), aggregate_r), h,
        detail::budget_for_max(game, opt.coupling, avg1), Direction::kMax);
    detail::accumulate(avg2, br2.q, w);
    last = consider(k);
  }
  if (!(best.exploitability <= opt.tol)) {
    throw NonConvergedError("hindsight solver stopped at exploitability " +
                                std::to_string(last),
                            last);
  }
  return best;
}

inline nlohmann::json saddle_to_json(const SaddleSolution& s) {
  return {{"q1", to_json_value(static_cast<const TripleTable&>(s.q1))},
          {"q2", to_json_value(static_cast<const TripleTable&>(s.q2))},
          {"value", s.value},
          {"exploitability", s.exploitability},
          {"constraint_slack", s.constraint_slack},
          {"rounds", s.rounds}};
}

}  // namespace csapo
