// Random instances shared by the tests.

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "csapo/csapo.hpp"

namespace fixture {

using namespace csapo;

inline Policy random_policy(const LayeredStateSpace& s, Rng& rng) {
  Policy pi(s);
  for (int l = 0; l < s.horizon(); ++l) {
    for (int x = 0; x < s.layer_size(l); ++x) {
      auto row = pi.row(l, x);
      double total = 0.0;
      for (double& p : row) total += (p = rng.exponential());
      for (double& p : row) p /= total;
    }
  }
  return pi;
}

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

inline StateActionTable random_table(const LayeredStateSpace& s, Rng& rng, double lo = 0.0,
                                     double hi = 1.0) {
  StateActionTable t(s);
  for (int l = 0; l < s.horizon(); ++l) {
    for (double& v : t.layer(l)) v = rng.uniform(lo, hi);
  }
  return t;
}

// 1..max_layers decision layers, interior layers of 1..max_states states.
inline LayeredStateSpace random_space(Rng& rng, int max_layers, int max_states, int actions) {
  const int L = 1 + static_cast<int>(rng.uniform() * max_layers);
  std::vector<int> sizes{1};
  for (int l = 1; l < L; ++l) sizes.push_back(1 + static_cast<int>(rng.uniform() * max_states));
  sizes.push_back(1);
  return LayeredStateSpace(sizes, actions);
}

// One state per layer, `actions` actions: the chain x0 -> x1 -> ... -> xL.
inline LayeredStateSpace chain(int L, int actions = 1) {
  return LayeredStateSpace(std::vector<int>(L + 1, 1), actions);
}

inline double max_abs_diff(const TripleTable& a, const TripleTable& b) {
  double d = 0.0;
  for (int l = 0; l < a.space().horizon(); ++l) {
    for (std::size_t i = 0; i < a.layer(l).size(); ++i) {
      d = std::max(d, std::abs(a.layer(l)[i] - b.layer(l)[i]));
    }
  }
  return d;
}

inline double max_abs_diff(const StateActionTable& a, const StateActionTable& b) {
  double d = 0.0;
  for (int l = 0; l < a.space().horizon(); ++l) {
    for (std::size_t i = 0; i < a.layer(l).size(); ++i) {
      d = std::max(d, std::abs(a.layer(l)[i] - b.layer(l)[i]));
    }
  }
  return d;
}

// A game on the given spaces with a single reward table and no noise.
inline LayeredGame make_game(const LayeredStateSpace& xs, const LayeredStateSpace& ys, Rng& rng,
                             double budget) {
  LayeredGame g;
  g.min_player = {xs, random_kernel(xs, rng), random_table(xs, rng)};
  g.max_player = {ys, random_kernel(ys, rng), random_table(ys, rng)};
  RewardTable r(xs, ys);
  for (int l = 0; l < xs.horizon(); ++l) {
    for (double& v : r.layer(l)) v = rng.uniform();
  }
  g.reward.tables.push_back(std::move(r));
  g.budget = budget;
  g.margin = 0.0;
  g.witness_min = Policy::uniform(xs);
  g.witness_max = Policy::uniform(ys);
  return g;
}


struct Instance {
  TripleTable q_bar;
  OccupancyDomain domain;
};

// <= 3 layers, <= 3 states per layer, 2 actions; some pairs unvisited
// (zero center row, width 2).
inline Instance random_instance(Rng& rng) {
  const auto s = random_space(rng, 3, 3, 2);
  OccupancyDomain d{TripleTable(s), StateActionTable(s)};
  for (int l = 0; l < s.horizon(); ++l) {
    for (int x = 0; x < s.layer_size(l); ++x) {
      for (int a = 0; a < 2; ++a) {
        auto c = d.center.row(l, x, a);
        const bool visited = rng.uniform() < 0.8;
        double total = 0.0;
        for (double& v : c) total += (v = visited ? rng.exponential() : 0.0);
        if (visited) {
          for (double& v : c) v /= total;
        }
        d.width(l, x, a) = visited ? rng.uniform(0.05, 2.0) : 2.0;
      }
    }
  }
  TripleTable q_bar(s);
  for (int l = 0; l < s.horizon(); ++l) {
    for (double& v : q_bar.layer(l)) v = std::exp(rng.uniform(-2.0, 2.0));
  }
  return {q_bar, d};
}

inline ProjectionDuals random_duals(const LayeredStateSpace& s, Rng& rng) {
  auto d = ProjectionDuals::zeros(s);
  for (int l = 1; l < s.horizon(); ++l) {
    for (double& b : d.beta[l]) b = rng.uniform(-1.0, 1.0);
  }
  for (int l = 0; l < s.horizon(); ++l) {
    for (double& v : d.mu_plus.layer(l)) v = rng.uniform(0.0, 1.0);
    for (double& v : d.mu_minus.layer(l)) v = rng.uniform(0.0, 1.0);
  }
  return d;
}

// Coordinates of ProjectionDuals that the objective depends on, as
// pointers so a test can perturb them in place.
inline std::vector<double*> coordinates(ProjectionDuals& d) {
  std::vector<double*> out;
  for (std::size_t l = 1; l + 1 < d.beta.size(); ++l) {
    for (double& b : d.beta[l]) out.push_back(&b);
  }
  for (int l = 0; l < d.mu_plus.space().horizon(); ++l) {
    for (double& v : d.mu_plus.layer(l)) out.push_back(&v);
    for (double& v : d.mu_minus.layer(l)) out.push_back(&v);
  }
  return out;
}

// One-shot matching pennies: the min player pays 1 on a match.
inline LayeredGame matching_pennies() {
  const auto s = chain(1, 2);
  LayeredGame g;
  g.min_player = {s, TransitionKernel::uniform(s), StateActionTable(s)};
  g.max_player = g.min_player;
  RewardTable r(s, s);
  r(0, 0, 0, 0, 0) = r(0, 0, 0, 1, 1) = 1.0;
  g.reward.tables.push_back(r);
  g.budget = 1.0;
  g.witness_min = g.witness_max = Policy::uniform(s);
  return g;
}

}  // namespace fixture
