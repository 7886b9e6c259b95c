// Brute-force enumeration oracles for tiny spaces.

#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "csapo/csapo.hpp"

namespace oracle {

using namespace csapo;

// Occupancy by summing the probability of every complete path.
inline OccupancyMeasure enumerate_paths(const Policy& pi, const TransitionKernel& P) {
  const auto& s = pi.space();
  OccupancyMeasure q(s);
  std::function<void(int, int, double)> walk = [&](int l, int x, double prob) {
    if (l == s.horizon()) return;
    for (int a = 0; a < s.num_actions(); ++a) {
      for (int n = 0; n < s.layer_size(l + 1); ++n) {
        const double p = prob * pi(l, x, a) * P(l, x, a, n);
        q(l, x, a, n) += p;
        if (p > 0.0) walk(l + 1, n, p);
      }
    }
  };
  walk(0, 0, 1.0);
  return q;
}

// Every deterministic policy of a (tiny) space.
inline std::vector<Policy> deterministic_policies(const LayeredStateSpace& s) {
  std::vector<std::pair<int, int>> states;
  for (int l = 0; l < s.horizon(); ++l) {
    for (int x = 0; x < s.layer_size(l); ++x) states.emplace_back(l, x);
  }
  std::vector<Policy> out;
  std::vector<int> choice(states.size(), 0);
  while (true) {
    Policy p(s);
    for (std::size_t i = 0; i < states.size(); ++i) p(states[i].first, states[i].second, choice[i]) = 1.0;
    out.push_back(std::move(p));
    std::size_t k = 0;
    while (k < choice.size() && ++choice[k] == s.num_actions()) choice[k++] = 0;
    if (k == choice.size()) break;
  }
  return out;
}

}  // namespace oracle
