#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "csapo/errors.hpp"
#include "csapo/layered.hpp"
#include "csapo/occupancy.hpp"
#include "csapo/rng.hpp"

namespace csapo {

enum class RewardMode { kFixedSequence, kAdversarial };

// Reward sequence r^t. In fixed-sequence mode r^t = tables[t mod n]. In
// adversarial mode r^t = (1 - weight) * tables[0] + weight * U^t, where U^t
// is an iid uniform table derived from (seed, t).
struct RewardProcess {
  RewardMode mode = RewardMode::kFixedSequence;
  std::vector<RewardTable> tables;
  double adversarial_weight = 0.0;
  std::uint64_t seed = 0;

  RewardTable at(std::int64_t t) const {
    if (tables.empty()) throw ShapeMismatchError("reward process has no tables");
    if (mode == RewardMode::kFixedSequence) {
      return tables[static_cast<std::size_t>(t % static_cast<std::int64_t>(tables.size()))];
    }
    RewardTable r = tables.front();
    Rng rng(derive_seed(seed, 0x7265776172640000ULL ^ static_cast<std::uint64_t>(t)));
    for (int l = 0; l < r.min_space().horizon(); ++l) {
      for (double& v : r.layer(l)) {
        v = (1.0 - adversarial_weight) * v + adversarial_weight * rng.uniform();
      }
    }
    return r;
  }

  bool stationary() const {
    return mode == RewardMode::kFixedSequence && tables.size() == 1;
  }
};

// One player's side of the game: its layered MDP and utility means.
struct PlayerModel {
  LayeredStateSpace space;
  TransitionKernel kernel;
  StateActionTable utility_mean;
};

struct SideBudgets {
  double min_player = 0.0;
  double max_player = 0.0;
};

struct LayeredGame {
  PlayerModel min_player;
  PlayerModel max_player;
  RewardProcess reward;
  // Utilities are perturbed by one shared draw xi^t ~ U[-w/2, w/2] per
  // episode, then clamped to [0, 1].
  double noise_width = 0.0;
  double budget = 0.0;
  std::optional<SideBudgets> side_budgets;
  double margin = 0.0;
  Policy witness_min;
  Policy witness_max;
  std::uint64_t seed = 0;

  int horizon() const { return min_player.space.horizon(); }
};

struct RealizedFunctions {
  RewardTable r;
  StateActionTable g;
  StateActionTable h;
};

// Shared utility perturbation for episode t.
inline double utility_noise(const LayeredGame& game, std::int64_t t) {
  if (game.noise_width <= 0.0) return 0.0;
  Rng rng(derive_seed(game.seed, 0x7574696c00000000ULL ^ static_cast<std::uint64_t>(t)));
  return game.noise_width * (rng.uniform() - 0.5);
}

// (r^t, g^t, h^t); deterministic in (game.seed, t).
inline RealizedFunctions realize_functions(const LayeredGame& game, std::int64_t t) {
  const double xi = utility_noise(game, t);
  auto perturb = [xi](StateActionTable u) {
    for (int l = 0; l < u.space().horizon(); ++l) {
      for (double& v : u.layer(l)) v = std::clamp(v + xi, 0.0, 1.0);
    }
    return u;
  };
  return {game.reward.at(t), perturb(game.min_player.utility_mean),
          perturb(game.max_player.utility_mean)};
}

// -- Trajectories -------------------------------------------------------------

inline Trajectory sample_trajectory(const Policy& pi, const TransitionKernel& kernel,
                                    Rng& rng) {
  require_same_space(pi.space(), kernel.space(), "sample_trajectory");
  pi.check();
  const auto& s = pi.space();
  Trajectory traj;
  traj.states.reserve(s.horizon() + 1);
  traj.actions.reserve(s.horizon());
  int x = 0;
  traj.states.push_back(x);
  for (int l = 0; l < s.horizon(); ++l) {
    const int a = rng.categorical(pi.row(l, x));
    x = rng.categorical(kernel.row(l, x, a));
    traj.actions.push_back(a);
    traj.states.push_back(x);
  }
  return traj;
}

// -- Feasibility ----------------------------------------------------------------

struct WitnessCheck {
  double coupled_slack = 0.0;  // b - (<q1,g> + <q2,h>)
  double min_slack = 0.0;      // b1 - <q1,g> (side budgets only)
  double max_slack = 0.0;      // b2 - <q2,h>
  bool passed = false;
};

inline WitnessCheck check_witness(const LayeredGame& game) {
  const auto q1 = occupancy_from_policy(game.witness_min, game.min_player.kernel);
  const auto q2 = occupancy_from_policy(game.witness_max, game.max_player.kernel);
  const double u1 = linear_utility(q1, game.min_player.utility_mean);
  const double u2 = linear_utility(q2, game.max_player.utility_mean);
  WitnessCheck c;
  c.coupled_slack = game.budget - (u1 + u2);
  c.passed = c.coupled_slack >= game.margin;
  if (game.side_budgets) {
    c.min_slack = game.side_budgets->min_player - u1;
    c.max_slack = game.side_budgets->max_player - u2;
    c.passed = c.passed && c.min_slack >= game.margin && c.max_slack >= game.margin;
  }
  return c;
}

// -- Random instances -------------------------------------------------------

struct GameSpec {
  std::vector<int> min_layers{1, 2, 2, 1};
  std::vector<int> max_layers{1, 2, 2, 1};
  int min_actions = 2;
  int max_actions = 2;
  double budget = 2.7;
  double margin = 0.1;
  std::uint64_t seed = 42;
  double noise_width = 0.2;
  double mean_lo = 0.1;
  double mean_hi = 0.9;
  bool zero_utilities = false;
  std::optional<SideBudgets> side_budgets;
  RewardMode reward_mode = RewardMode::kFixedSequence;
  int reward_tables = 1;
  double adversarial_weight = 0.0;
};

namespace detail {

inline TransitionKernel random_kernel(const LayeredStateSpace& s, Rng& rng) {
  TransitionKernel k(s);
  for (int l = 0; l < s.horizon(); ++l) {
    for (int x = 0; x < s.layer_size(l); ++x) {
      for (int a = 0; a < s.num_actions(); ++a) {
        auto row = k.row(l, x, a);
        double total = 0.0;
        for (double& p : row) total += (p = rng.exponential());
        for (double& p : row) p /= total;
      }
    }
  }
  return k;
}

inline void scale_table(StateActionTable& u, double factor) {
  for (int l = 0; l < u.space().horizon(); ++l) {
    for (double& v : u.layer(l)) v *= factor;
  }
}

}  // namespace detail

inline LayeredGame generate_random_game(const GameSpec& spec) {
  const LayeredStateSpace xs(spec.min_layers, spec.min_actions);
  const LayeredStateSpace ys(spec.max_layers, spec.max_actions);
  if (xs.horizon() != ys.horizon()) {
    throw InfeasibleSpecError("players must share the horizon L");
  }
  const double L = xs.horizon();
  if (!(spec.budget > 0.0 && spec.budget <= 2.0 * L)) {
    throw InfeasibleSpecError("budget b must lie in (0, 2L]");
  }
  if (!(spec.margin > 0.0)) throw InfeasibleSpecError("margin xi must be positive");
  if (spec.side_budgets) {
    for (double bi : {spec.side_budgets->min_player, spec.side_budgets->max_player}) {
      if (!(bi > 0.0 && bi <= L)) {
        throw InfeasibleSpecError("side budgets must lie in (0, L]");
      }
    }
  }

  Rng rng(derive_seed(spec.seed, 0x67616d65ULL));
  LayeredGame game;
  game.seed = spec.seed;
  game.budget = spec.budget;
  game.margin = spec.margin;
  game.noise_width = spec.zero_utilities ? 0.0 : spec.noise_width;
  game.side_budgets = spec.side_budgets;
  game.min_player.space = xs;
  game.max_player.space = ys;
  game.min_player.kernel = detail::random_kernel(xs, rng);
  game.max_player.kernel = detail::random_kernel(ys, rng);
  game.min_player.utility_mean = StateActionTable(xs);
  game.max_player.utility_mean = StateActionTable(ys);
  if (!spec.zero_utilities) {
    for (auto* u : {&game.min_player.utility_mean, &game.max_player.utility_mean}) {
      for (int l = 0; l < u->space().horizon(); ++l) {
        for (double& v : u->layer(l)) v = rng.uniform(spec.mean_lo, spec.mean_hi);
      }
    }
  }
  game.reward.mode = spec.reward_mode;
  game.reward.adversarial_weight = spec.adversarial_weight;
  game.reward.seed = derive_seed(spec.seed, 0x72ULL);
  const int ntables = spec.reward_mode == RewardMode::kFixedSequence
                          ? std::max(1, spec.reward_tables)
                          : 1;
  for (int i = 0; i < ntables; ++i) {
    RewardTable r(xs, ys);
    for (int l = 0; l < xs.horizon(); ++l) {
      for (double& v : r.layer(l)) v = rng.uniform();
    }
    game.reward.tables.push_back(std::move(r));
  }
  game.witness_min = Policy::uniform(xs);
  game.witness_max = Policy::uniform(ys);

  // Shrink utility means until the uniform witness clears every budget by
  // the margin.
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const WitnessCheck c = check_witness(game);
    if (c.passed) return game;
    const auto q1 = occupancy_from_policy(game.witness_min, game.min_player.kernel);
    const auto q2 = occupancy_from_policy(game.witness_max, game.max_player.kernel);
    const double u1 = linear_utility(q1, game.min_player.utility_mean);
    const double u2 = linear_utility(q2, game.max_player.utility_mean);
    const double shrink = 1.0 - 1e-12 * (attempt + 1);
    double f1 = 1.0;
    double f2 = 1.0;
    if (c.coupled_slack < spec.margin) {
      const double target = spec.budget - spec.margin;
      if (target < 0.0 || (target == 0.0 && u1 + u2 > 0.0)) break;
      const double f = u1 + u2 > 0.0 ? target / (u1 + u2) * shrink : 1.0;
      f1 = std::min(f1, f);
      f2 = std::min(f2, f);
    }
    if (spec.side_budgets) {
      const double t1 = spec.side_budgets->min_player - spec.margin;
      const double t2 = spec.side_budgets->max_player - spec.margin;
      if (t1 < 0.0 || t2 < 0.0) break;
      if (c.min_slack < spec.margin && u1 > 0.0) f1 = std::min(f1, t1 / u1 * shrink);
      if (c.max_slack < spec.margin && u2 > 0.0) f2 = std::min(f2, t2 / u2 * shrink);
    }
    detail::scale_table(game.min_player.utility_mean, f1);
    detail::scale_table(game.max_player.utility_mean, f2);
  }
  throw InfeasibleSpecError("no utility rescaling satisfies the feasibility margin");
}

// -- JSON -----------------------------------------------------------------------

using nlohmann::json;

inline json to_json_value(const StateActionTable& t) {
  json out = json::array();
  const auto& s = t.space();
  for (int l = 0; l < s.horizon(); ++l) {
    json layer = json::array();
    for (int x = 0; x < s.layer_size(l); ++x) {
      json row = json::array();
      for (int a = 0; a < s.num_actions(); ++a) row.push_back(t(l, x, a));
      layer.push_back(std::move(row));
    }
    out.push_back(std::move(layer));
  }
  return out;
}

inline json to_json_value(const TripleTable& t) {
  json out = json::array();
  const auto& s = t.space();
  for (int l = 0; l < s.horizon(); ++l) {
    json layer = json::array();
    for (int x = 0; x < s.layer_size(l); ++x) {
      json state = json::array();
      for (int a = 0; a < s.num_actions(); ++a) {
        json row = json::array();
        for (int n = 0; n < s.layer_size(l + 1); ++n) row.push_back(t(l, x, a, n));
        state.push_back(std::move(row));
      }
      layer.push_back(std::move(state));
    }
    out.push_back(std::move(layer));
  }
  return out;
}

inline json to_json_value(const RewardTable& r) {
  const auto& xs = r.min_space();
  const auto& ys = r.max_space();
  json out = json::array();
  for (int l = 0; l < xs.horizon(); ++l) {
    json layer = json::array();
    for (int x = 0; x < xs.layer_size(l); ++x) {
      json by_y = json::array();
      for (int y = 0; y < ys.layer_size(l); ++y) {
        json by_a = json::array();
        for (int a = 0; a < xs.num_actions(); ++a) {
          json by_b = json::array();
          for (int b = 0; b < ys.num_actions(); ++b) by_b.push_back(r(l, x, y, a, b));
          by_a.push_back(std::move(by_b));
        }
        by_y.push_back(std::move(by_a));
      }
      layer.push_back(std::move(by_y));
    }
    out.push_back(std::move(layer));
  }
  return out;
}

namespace detail {

inline const json& at_index(const json& j, std::size_t i, const char* what) {
  if (!j.is_array() || i >= j.size()) {
    throw ShapeMismatchError(std::string("game JSON: bad shape in ") + what);
  }
  return j[i];
}

}  // namespace detail

inline StateActionTable state_action_from_json(const json& j, const LayeredStateSpace& s,
                                               const char* what) {
  StateActionTable t(s);
  for (int l = 0; l < s.horizon(); ++l) {
    const auto& layer = detail::at_index(j, l, what);
    for (int x = 0; x < s.layer_size(l); ++x) {
      const auto& row = detail::at_index(layer, x, what);
      for (int a = 0; a < s.num_actions(); ++a) {
        t(l, x, a) = detail::at_index(row, a, what).get<double>();
      }
    }
  }
  return t;
}

inline TripleTable triple_from_json(const json& j, const LayeredStateSpace& s,
                                    const char* what) {
  TripleTable t(s);
  for (int l = 0; l < s.horizon(); ++l) {
    const auto& layer = detail::at_index(j, l, what);
    for (int x = 0; x < s.layer_size(l); ++x) {
      const auto& state = detail::at_index(layer, x, what);
      for (int a = 0; a < s.num_actions(); ++a) {
        const auto& row = detail::at_index(state, a, what);
        for (int n = 0; n < s.layer_size(l + 1); ++n) {
          t(l, x, a, n) = detail::at_index(row, n, what).get<double>();
        }
      }
    }
  }
  return t;
}

inline RewardTable reward_from_json(const json& j, const LayeredStateSpace& xs,
                                    const LayeredStateSpace& ys) {
  RewardTable r(xs, ys);
  for (int l = 0; l < xs.horizon(); ++l) {
    const auto& layer = detail::at_index(j, l, "reward");
    for (int x = 0; x < xs.layer_size(l); ++x) {
      const auto& by_y = detail::at_index(layer, x, "reward");
      for (int y = 0; y < ys.layer_size(l); ++y) {
        const auto& by_a = detail::at_index(by_y, y, "reward");
        for (int a = 0; a < xs.num_actions(); ++a) {
          const auto& by_b = detail::at_index(by_a, a, "reward");
          for (int b = 0; b < ys.num_actions(); ++b) {
            r(l, x, y, a, b) = detail::at_index(by_b, b, "reward").get<double>();
          }
        }
      }
    }
  }
  return r;
}

inline json game_to_json(const LayeredGame& g) {
  json j;
  j["layers"] = {{"min", g.min_player.space.layer_sizes()},
                 {"max", g.max_player.space.layer_sizes()}};
  j["actions"] = {{"min", g.min_player.space.num_actions()},
                  {"max", g.max_player.space.num_actions()}};
  j["P1"] = to_json_value(g.min_player.kernel);
  j["P2"] = to_json_value(g.max_player.kernel);
  j["g_mean"] = to_json_value(g.min_player.utility_mean);
  j["h_mean"] = to_json_value(g.max_player.utility_mean);
  json reward;
  reward["mode"] = g.reward.mode == RewardMode::kFixedSequence ? "fixed-sequence"
                                                               : "adversarial";
  reward["adversarial_weight"] = g.reward.adversarial_weight;
  reward["seed"] = g.reward.seed;
  reward["tables"] = json::array();
  for (const auto& r : g.reward.tables) reward["tables"].push_back(to_json_value(r));
  j["reward_mode"] = std::move(reward);
  j["noise"] = {{"kind", "uniform-shared"}, {"width", g.noise_width}};
  j["b"] = g.budget;
  if (g.side_budgets) {
    j["side_budgets"] = {g.side_budgets->min_player, g.side_budgets->max_player};
  }
  j["xi"] = g.margin;
  j["witness"] = {{"min", to_json_value(g.witness_min)},
                  {"max", to_json_value(g.witness_max)}};
  j["seed"] = g.seed;
  return j;
}

inline LayeredGame game_from_json(const json& j) {
  try {
    LayeredGame g;
    const LayeredStateSpace xs(j.at("layers").at("min").get<std::vector<int>>(),
                               j.at("actions").at("min").get<int>());
    const LayeredStateSpace ys(j.at("layers").at("max").get<std::vector<int>>(),
                               j.at("actions").at("max").get<int>());
    if (xs.horizon() != ys.horizon()) {
      throw ShapeMismatchError("game JSON: players have different horizons");
    }
    g.min_player.space = xs;
    g.max_player.space = ys;
    g.min_player.kernel = TransitionKernel(triple_from_json(j.at("P1"), xs, "P1"));
    g.max_player.kernel = TransitionKernel(triple_from_json(j.at("P2"), ys, "P2"));
    g.min_player.utility_mean = state_action_from_json(j.at("g_mean"), xs, "g_mean");
    g.max_player.utility_mean = state_action_from_json(j.at("h_mean"), ys, "h_mean");
    const auto& reward = j.at("reward_mode");
    const auto mode = reward.at("mode").get<std::string>();
    if (mode == "fixed-sequence") {
      g.reward.mode = RewardMode::kFixedSequence;
    } else if (mode == "adversarial") {
      g.reward.mode = RewardMode::kAdversarial;
    } else {
      throw ShapeMismatchError("game JSON: unknown reward mode '" + mode + "'");
    }
    g.reward.adversarial_weight = reward.value("adversarial_weight", 0.0);
    g.reward.seed = reward.value("seed", std::uint64_t{0});
    for (const auto& t : reward.at("tables")) {
      g.reward.tables.push_back(reward_from_json(t, xs, ys));
    }
    g.noise_width = j.at("noise").at("width").get<double>();
    g.budget = j.at("b").get<double>();
    if (j.contains("side_budgets")) {
      const auto sb = j.at("side_budgets").get<std::vector<double>>();
      if (sb.size() != 2) throw ShapeMismatchError("game JSON: side_budgets needs two values");
      g.side_budgets = SideBudgets{sb[0], sb[1]};
    }
    g.margin = j.at("xi").get<double>();
    g.witness_min = Policy(state_action_from_json(j.at("witness").at("min"), xs, "witness"));
    g.witness_max = Policy(state_action_from_json(j.at("witness").at("max"), ys, "witness"));
    g.seed = j.at("seed").get<std::uint64_t>();
    if (g.min_player.kernel.max_row_error() > 1e-12 ||
        g.max_player.kernel.max_row_error() > 1e-12) {
      throw ShapeMismatchError("game JSON: transition rows must sum to one");
    }
    return g;
  } catch (const json::exception& e) {
    throw ShapeMismatchError(std::string("game JSON: ") + e.what());
  }
}

}  // namespace csapo
