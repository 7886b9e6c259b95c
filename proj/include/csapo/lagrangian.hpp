#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "csapo/confidence.hpp"
#include "csapo/errors.hpp"
#include "csapo/game.hpp"
#include "csapo/occupancy.hpp"
#include "csapo/optimizer.hpp"
#include "csapo/rng.hpp"

namespace csapo {

enum class ConstraintMode { kCoupled, kSide };

inline const char* to_string(ConstraintMode m) {
  return m == ConstraintMode::kCoupled ? "coupled" : "side";
}

inline ConstraintMode constraint_mode_from_string(const std::string& s) {
  if (s == "coupled") return ConstraintMode::kCoupled;
  if (s == "side") return ConstraintMode::kSide;
  throw ContractViolationError("unknown constraint mode '" + s + "'");
}

struct LearnerParams {
  double V = 1.0;
  double eta = 1.0;
  double theta = 1.0;
  double delta = 0.1;
  EpochTrigger trigger = EpochTrigger::kLiteral;
  SolverOptions solver;

  void check() const {
    if (!(V >= 0.0) || !std::isfinite(V)) throw ContractViolationError("V must be finite and >= 0");
    if (!(eta > 0.0) || !std::isfinite(eta)) throw ContractViolationError("eta must be positive");
    if (!(theta > 0.0 && theta <= 1.0)) throw ContractViolationError("theta must lie in (0, 1]");
    if (!(delta > 0.0 && delta < 1.0)) throw ContractViolationError("delta must lie in (0, 1)");
  }
};

// V = L sqrt(T), eta = 1 / (T L), theta = 1 / T.
inline LearnerParams theorem_defaults(int horizon, std::int64_t episodes, double delta = 0.1) {
  if (horizon < 1 || episodes < 1) throw ContractViolationError("need L >= 1 and T >= 1");
  LearnerParams p;
  const double L = horizon;
  const double T = static_cast<double>(episodes);
  p.V = L * std::sqrt(T);
  p.eta = 1.0 / (T * L);
  p.theta = 1.0 / T;
  p.delta = delta;
  return p;
}

// -- Dual updates ----------------------------------------------------------------

inline double dual_update(double lambda, const OccupancyMeasure& q1, const OccupancyMeasure& q2,
                          const StateActionTable& g_prev, const StateActionTable& h_prev,
                          double budget) {
  return std::max(lambda + linear_utility(q1, g_prev) + linear_utility(q2, h_prev) - budget, 0.0);
}

inline std::pair<double, double> dual_update_side(double lambda1, double lambda2,
                                                  const OccupancyMeasure& q1,
                                                  const OccupancyMeasure& q2,
                                                  const StateActionTable& g_prev,
                                                  const StateActionTable& h_prev,
                                                  double budget1, double budget2) {
  return {std::max(lambda1 + linear_utility(q1, g_prev) - budget1, 0.0),
          std::max(lambda2 + linear_utility(q2, h_prev) - budget2, 0.0)};
}

// -- Learner state -----------------------------------------------------------------

struct LearnerState {
  OccupancyMeasure q1;
  OccupancyMeasure q2;
  // In coupled mode both entries hold the shared multiplier.
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  LearnerParams params;
  EpochState epoch1;
  EpochState epoch2;
  RealizedFunctions previous;
  ProjectionDuals warm1;
  ProjectionDuals warm2;

  LearnerState(const LayeredGame& game, const LearnerParams& p, std::int64_t episodes)
      : q1(OccupancyMeasure::uniform(game.min_player.space)),
        q2(OccupancyMeasure::uniform(game.max_player.space)),
        params(p),
        epoch1(game.min_player.space, {episodes, p.delta, p.trigger}),
        epoch2(game.max_player.space, {episodes, p.delta, p.trigger}),
        previous{RewardTable(game.min_player.space, game.max_player.space, 0.0),
                 StateActionTable(game.min_player.space),
                 StateActionTable(game.max_player.space)},
        warm1(ProjectionDuals::zeros(game.min_player.space)),
        warm2(ProjectionDuals::zeros(game.max_player.space)) {
    p.check();
  }
};

// -- Episode log -------------------------------------------------------------

struct EpisodeRecord {
  std::int64_t t = 0;
  Policy pi1;
  Policy pi2;
  Trajectory trajectory1;
  Trajectory trajectory2;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  int epoch1 = 1;
  int epoch2 = 1;
  // Coupled: <q1,g^t> + <q2,h^t> - b with true-kernel occupancies.
  // Side: the per-player excesses.
  double violation1 = 0.0;
  double violation2 = 0.0;
  int solver_iters1 = 0;
  int solver_iters2 = 0;
  double solver_residual1 = 0.0;
  double solver_residual2 = 0.0;
  double dual_value1 = 0.0;
  double dual_value2 = 0.0;
  // Marginals of q-hat^t; present when estimates are kept.
  std::optional<StateActionTable> q1_hat;
  std::optional<StateActionTable> q2_hat;
};

struct EpisodeLog {
  ConstraintMode mode = ConstraintMode::kCoupled;
  std::uint64_t seed = 0;
  LearnerParams params;
  std::vector<EpisodeRecord> rows;

  bool has_estimates() const {
    if (rows.empty()) return false;
    for (const auto& r : rows) {
      if (!r.q1_hat || !r.q2_hat) return false;
    }
    return true;
  }
};

struct RunOptions {
  ConstraintMode mode = ConstraintMode::kCoupled;
  bool keep_estimates = false;
  // Called after every episode with the record and the full q-hat pair.
  std::function<void(const EpisodeRecord&, const OccupancyMeasure&, const OccupancyMeasure&)>
      on_episode;
};

// The full learner loop. Trajectory streams derive from `seed`; the game's own seed
// drives rewards and utility noise.
inline EpisodeLog run_ucb_csapo(const LayeredGame& game, const LearnerParams& params,
                                std::int64_t episodes, std::uint64_t seed,
                                const RunOptions& options = {}) {
  if (episodes < 1) throw ContractViolationError("T must be positive");
  const bool side = options.mode == ConstraintMode::kSide;
  if (side && !game.side_budgets) {
    throw ContractViolationError("side-constraint mode needs per-player budgets");
  }
  LearnerState st(game, params, episodes);
  Rng rng1(derive_seed(seed, 1));
  Rng rng2(derive_seed(seed, 2));

  EpisodeLog log;
  log.mode = options.mode;
  log.seed = seed;
  log.params = params;
  log.rows.reserve(static_cast<std::size_t>(episodes));

  for (std::int64_t t = 1; t <= episodes; ++t) {
    const auto domain1 = st.epoch1.domain();
    const auto domain2 = st.epoch2.domain();
    PrimalUpdateInput in;
    in.q1_prev = &st.q1;
    in.q2_prev = &st.q2;
    in.lambda1 = st.lambda1;
    in.lambda2 = st.lambda2;
    in.V = params.V;
    in.eta = params.eta;
    in.theta = params.theta;
    in.domain1 = &domain1;
    in.domain2 = &domain2;
    in.r = &st.previous.r;
    in.g = &st.previous.g;
    in.h = &st.previous.h;
    in.warm1 = &st.warm1;
    in.warm2 = &st.warm2;
    PrimalUpdateResult upd;
    try {
      upd = primal_update(in, params.solver);
    } catch (const NonConvergedError& e) {
      throw NonConvergedError("episode " + std::to_string(t) + ": " + e.what(), e.residual());
    }
    st.q1 = std::move(upd.min_player.q);
    st.q2 = std::move(upd.max_player.q);
    st.warm1 = std::move(upd.min_player.duals);
    st.warm2 = std::move(upd.max_player.duals);

    if (side) {
      std::tie(st.lambda1, st.lambda2) =
          dual_update_side(st.lambda1, st.lambda2, st.q1, st.q2, st.previous.g, st.previous.h,
                           game.side_budgets->min_player, game.side_budgets->max_player);
    } else {
      st.lambda1 = st.lambda2 =
          dual_update(st.lambda1, st.q1, st.q2, st.previous.g, st.previous.h, game.budget);
    }

    EpisodeRecord rec;
    rec.t = t;
    rec.pi1 = policy_of(st.q1);
    rec.pi2 = policy_of(st.q2);
    rec.trajectory1 = sample_trajectory(rec.pi1, game.min_player.kernel, rng1);
    rec.trajectory2 = sample_trajectory(rec.pi2, game.max_player.kernel, rng2);
    st.previous = realize_functions(game, t);
    rec.lambda1 = st.lambda1;
    rec.lambda2 = st.lambda2;

    const auto q1_true = occupancy_from_policy(rec.pi1, game.min_player.kernel);
    const auto q2_true = occupancy_from_policy(rec.pi2, game.max_player.kernel);
    const double u1 = linear_utility(q1_true, st.previous.g);
    const double u2 = linear_utility(q2_true, st.previous.h);
    if (side) {
      rec.violation1 = u1 - game.side_budgets->min_player;
      rec.violation2 = u2 - game.side_budgets->max_player;
    } else {
      rec.violation1 = rec.violation2 = u1 + u2 - game.budget;
    }

    rec.solver_iters1 = upd.min_player.iterations;
    rec.solver_iters2 = upd.max_player.iterations;
    rec.solver_residual1 = upd.min_player.residual;
    rec.solver_residual2 = upd.max_player.residual;
    rec.dual_value1 = upd.min_player.dual_objective;
    rec.dual_value2 = upd.max_player.dual_objective;
    if (options.keep_estimates) {
      rec.q1_hat = st.q1.marginals();
      rec.q2_hat = st.q2.marginals();
    }

    // The epoch index k^t in force while episode t was played.
    rec.epoch1 = st.epoch1.epoch();
    rec.epoch2 = st.epoch2.epoch();
    st.epoch1.observe(rec.trajectory1);
    st.epoch2.observe(rec.trajectory2);
    if (options.on_episode) options.on_episode(rec, st.q1, st.q2);
    log.rows.push_back(std::move(rec));
  }
  return log;
}

// -- Run CSV -----------------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// `header` is written verbatim as the first line (prefixed with '#').
inline void write_run_csv(std::ostream& os, const EpisodeLog& log, const std::string& header,
                          bool trace_solver = false) {
  os << "# " << header << '\n';
  const bool side = log.mode == ConstraintMode::kSide;
  os << "t," << (side ? "lambda1,lambda2" : "lambda") << ",epoch1,epoch2,"
     << (side ? "realized_violation1,realized_violation2" : "realized_violation")
     << ",solver_iters1,solver_iters2";
  if (trace_solver) os << ",solver_residual1,solver_residual2,dual_value1,dual_value2";
  os << '\n';
  for (const auto& r : log.rows) {
    os << r.t << ',' << format_double(r.lambda1);
    if (side) os << ',' << format_double(r.lambda2);
    os << ',' << r.epoch1 << ',' << r.epoch2 << ',' << format_double(r.violation1);
    if (side) os << ',' << format_double(r.violation2);
    os << ',' << r.solver_iters1 << ',' << r.solver_iters2;
    if (trace_solver) {
      os << ',' << format_double(r.solver_residual1) << ',' << format_double(r.solver_residual2)
         << ',' << format_double(r.dual_value1) << ',' << format_double(r.dual_value2);
    }
    os << '\n';
  }
}

}  // namespace csapo
