#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "csapo/errors.hpp"
#include "csapo/layered.hpp"

namespace csapo {

// Denominators below this value are treated as zero when conditioning
// an occupancy measure; the affected row falls back to uniform.
inline constexpr double kDenominatorFloor = 1e-300;
inline constexpr double kValidityTol = 1e-9;

// Occupancy measure q(x, a, x') over a layered state space.
class OccupancyMeasure : public TripleTable {
 public:
  using TripleTable::TripleTable;
  explicit OccupancyMeasure(TripleTable table) : TripleTable(std::move(table)) {}

  // q(x, a) = sum_x' q(x, a, x').
  double marginal(int l, int x, int a) const { return row_sum(l, x, a); }

  StateActionTable marginals() const {
    StateActionTable m(space());
    for (int l = 0; l < space().horizon(); ++l) {
      for (int x = 0; x < space().layer_size(l); ++x) {
        for (int a = 0; a < space().num_actions(); ++a) {
          m(l, x, a) = marginal(l, x, a);
        }
      }
    }
    return m;
  }

  // The initial iterate: 1 / (|X_l| |A| |X_{l+1}|) on every triple.
  static OccupancyMeasure uniform(const LayeredStateSpace& space) {
    OccupancyMeasure q(space);
    for (int l = 0; l < space.horizon(); ++l) {
      const double v = 1.0 / (space.layer_size(l) * space.num_actions() *
                              space.layer_size(l + 1));
      std::fill(q.layer(l).begin(), q.layer(l).end(), v);
    }
    return q;
  }
};

// Probability of visiting each state, d(x), for layers 0..L.
inline std::vector<std::vector<double>> state_visits(const OccupancyMeasure& q) {
  const auto& s = q.space();
  std::vector<std::vector<double>> d(s.horizon() + 1);
  d[0] = {1.0};
  for (int l = 0; l < s.horizon(); ++l) {
    d[l + 1].assign(s.layer_size(l + 1), 0.0);
    for (int x = 0; x < s.layer_size(l); ++x) {
      for (int a = 0; a < s.num_actions(); ++a) {
        const auto r = q.row(l, x, a);
        for (int n = 0; n < s.layer_size(l + 1); ++n) d[l + 1][n] += r[n];
      }
    }
  }
  return d;
}

// Forward recursion: d(x0) = 1, q(x,a,x') = d(x) pi(a|x) P(x'|x,a).
inline OccupancyMeasure occupancy_from_policy(const Policy& pi,
                                              const TransitionKernel& kernel) {
  require_same_space(pi.space(), kernel.space(), "occupancy_from_policy");
  const auto& s = pi.space();
  OccupancyMeasure q(s);
  std::vector<double> visit{1.0};
  for (int l = 0; l < s.horizon(); ++l) {
    std::vector<double> next(s.layer_size(l + 1), 0.0);
    for (int x = 0; x < s.layer_size(l); ++x) {
      for (int a = 0; a < s.num_actions(); ++a) {
        const double w = visit[x] * pi(l, x, a);
        const auto p = kernel.row(l, x, a);
        auto out = q.row(l, x, a);
        for (int n = 0; n < s.layer_size(l + 1); ++n) {
          out[n] = w * p[n];
          next[n] += out[n];
        }
      }
    }
    visit = std::move(next);
  }
  return q;
}

// pi(a|x) = q(x,a) / sum_a q(x,a); uniform where the state has no mass.
inline Policy policy_of(const OccupancyMeasure& q) {
  const auto& s = q.space();
  Policy pi(s);
  for (int l = 0; l < s.horizon(); ++l) {
    for (int x = 0; x < s.layer_size(l); ++x) {
      auto row = pi.row(l, x);
      double total = 0.0;
      for (int a = 0; a < s.num_actions(); ++a) {
        row[a] = q.marginal(l, x, a);
        total += row[a];
      }
      for (double& p : row) {
        p = total < kDenominatorFloor ? 1.0 / s.num_actions() : p / total;
      }
    }
  }
  return pi;
}

// P(x'|x,a) = q(x,a,x') / q(x,a); uniform where the pair has no mass.
inline TransitionKernel transition_of(const OccupancyMeasure& q) {
  const auto& s = q.space();
  TransitionKernel p(s);
  for (int l = 0; l < s.horizon(); ++l) {
    for (int x = 0; x < s.layer_size(l); ++x) {
      for (int a = 0; a < s.num_actions(); ++a) {
        const double total = q.marginal(l, x, a);
        const auto src = q.row(l, x, a);
        auto dst = p.row(l, x, a);
        for (std::size_t n = 0; n < dst.size(); ++n) {
          dst[n] = total < kDenominatorFloor ? 1.0 / dst.size() : src[n] / total;
        }
      }
    }
  }
  return p;
}

struct ValidityReport {
  // |sum of layer mass - 1| for each decision layer.
  std::vector<double> layer_mass_residual;
  // |inflow - outflow| for each interior state, indexed [layer][x] with
  // layer 1..L-1 (entry 0 is empty).
  std::vector<std::vector<double>> flow_residual;
  double max_mass_residual = 0.0;
  double max_flow_residual = 0.0;
  bool nonnegative = true;
  bool passed = false;
};

inline ValidityReport validate(const OccupancyMeasure& q,
                               const LayeredStateSpace& expected,
                               double tol = kValidityTol) {
  require_same_space(q.space(), expected, "validate");
  const auto& s = q.space();
  ValidityReport rep;
  rep.layer_mass_residual.resize(s.horizon());
  rep.flow_residual.resize(s.horizon());
  for (int l = 0; l < s.horizon(); ++l) {
    double mass = 0.0;
    for (double v : q.layer(l)) {
      if (v < 0.0) rep.nonnegative = false;
      mass += v;
    }
    rep.layer_mass_residual[l] = std::abs(mass - 1.0);
    rep.max_mass_residual = std::max(rep.max_mass_residual, rep.layer_mass_residual[l]);
  }
  const auto visits = state_visits(q);
  for (int l = 1; l < s.horizon(); ++l) {
    rep.flow_residual[l].resize(s.layer_size(l));
    for (int x = 0; x < s.layer_size(l); ++x) {
      double out = 0.0;
      for (int a = 0; a < s.num_actions(); ++a) out += q.marginal(l, x, a);
      rep.flow_residual[l][x] = std::abs(visits[l][x] - out);
      rep.max_flow_residual = std::max(rep.max_flow_residual, rep.flow_residual[l][x]);
    }
  }
  rep.passed = rep.nonnegative && rep.max_mass_residual <= tol &&
               rep.max_flow_residual <= tol;
  return rep;
}

inline ValidityReport validate(const OccupancyMeasure& q, double tol = kValidityTol) {
  return validate(q, q.space(), tol);
}

// Reward r(x, y, a, b) over layer-aligned state pairs of two spaces with
// the same horizon.
class RewardTable {
 public:
  RewardTable() = default;
  RewardTable(const LayeredStateSpace& min_space,
              const LayeredStateSpace& max_space, double fill = 0.0)
      : min_space_(min_space), max_space_(max_space) {
    if (min_space.horizon() != max_space.horizon()) {
      throw ShapeMismatchError("reward table: players have different horizons");
    }
    data_.resize(min_space.horizon());
    for (int l = 0; l < min_space.horizon(); ++l) {
      data_[l].assign(min_space.layer_size(l) * max_space.layer_size(l) *
                          min_space.num_actions() * max_space.num_actions(),
                      fill);
    }
  }

  const LayeredStateSpace& min_space() const { return min_space_; }
  const LayeredStateSpace& max_space() const { return max_space_; }

  double& operator()(int l, int x, int y, int a, int b) {
    return data_[l][index(l, x, y, a, b)];
  }
  double operator()(int l, int x, int y, int a, int b) const {
    return data_[l][index(l, x, y, a, b)];
  }

  std::vector<double>& layer(int l) { return data_[l]; }
  const std::vector<double>& layer(int l) const { return data_[l]; }

  bool operator==(const RewardTable& other) const {
    return min_space_ == other.min_space_ && max_space_ == other.max_space_ &&
           data_ == other.data_;
  }

 private:
  int index(int l, int x, int y, int a, int b) const {
    const int na = min_space_.num_actions();
    const int nb = max_space_.num_actions();
    return ((x * max_space_.layer_size(l) + y) * na + a) * nb + b;
  }

  LayeredStateSpace min_space_;
  LayeredStateSpace max_space_;
  std::vector<std::vector<double>> data_;
};

// (q2 . r)(x, a) = sum_{y,b} q2(y,b) r(x,y,a,b) on the matching layer.
inline StateActionTable reward_against_max(const StateActionTable& q2,
                                           const RewardTable& r) {
  require_same_space(q2.space(), r.max_space(), "reward_against_max");
  const auto& xs = r.min_space();
  const auto& ys = r.max_space();
  StateActionTable out(xs);
  for (int l = 0; l < xs.horizon(); ++l) {
    for (int x = 0; x < xs.layer_size(l); ++x) {
      for (int a = 0; a < xs.num_actions(); ++a) {
        double v = 0.0;
        for (int y = 0; y < ys.layer_size(l); ++y) {
          for (int b = 0; b < ys.num_actions(); ++b) v += q2(l, y, b) * r(l, x, y, a, b);
        }
        out(l, x, a) = v;
      }
    }
  }
  return out;
}

// (q1 . r)(y, b) = sum_{x,a} q1(x,a) r(x,y,a,b) on the matching layer.
inline StateActionTable reward_against_min(const StateActionTable& q1,
                                           const RewardTable& r) {
  require_same_space(q1.space(), r.min_space(), "reward_against_min");
  const auto& xs = r.min_space();
  const auto& ys = r.max_space();
  StateActionTable out(ys);
  for (int l = 0; l < ys.horizon(); ++l) {
    for (int y = 0; y < ys.layer_size(l); ++y) {
      for (int b = 0; b < ys.num_actions(); ++b) {
        double v = 0.0;
        for (int x = 0; x < xs.layer_size(l); ++x) {
          for (int a = 0; a < xs.num_actions(); ++a) v += q1(l, x, a) * r(l, x, y, a, b);
        }
        out(l, y, b) = v;
      }
    }
  }
  return out;
}

// <q, u> = sum_l sum_{x,a} q(x,a) u(x,a).
inline double linear_utility(const StateActionTable& q_marginals,
                             const StateActionTable& u) {
  require_same_space(q_marginals.space(), u.space(), "linear_utility");
  double v = 0.0;
  for (int l = 0; l < u.space().horizon(); ++l) {
    const auto& ql = q_marginals.layer(l);
    const auto& ul = u.layer(l);
    for (std::size_t i = 0; i < ul.size(); ++i) v += ql[i] * ul[i];
  }
  return v;
}

inline double linear_utility(const OccupancyMeasure& q, const StateActionTable& u) {
  return linear_utility(q.marginals(), u);
}

// <q1 . q2, r> = sum_l sum_{x,y,a,b} q1(x,a) q2(y,b) r(x,y,a,b).
inline double bilinear_reward(const StateActionTable& q1_marginals,
                              const StateActionTable& q2_marginals,
                              const RewardTable& r) {
  require_same_space(q1_marginals.space(), r.min_space(), "bilinear_reward");
  return linear_utility(q1_marginals, reward_against_max(q2_marginals, r));
}

inline double bilinear_reward(const OccupancyMeasure& q1, const OccupancyMeasure& q2,
                              const RewardTable& r) {
  return bilinear_reward(q1.marginals(), q2.marginals(), r);
}

// -- CSV dump ---------------------------------------------------------------

inline void write_occupancy_csv(std::ostream& os, const OccupancyMeasure& q) {
  const auto& s = q.space();
  os << "layer,x,a,x_next,value\n";
  os << std::setprecision(17);
  for (int l = 0; l < s.horizon(); ++l) {
    for (int x = 0; x < s.layer_size(l); ++x) {
      for (int a = 0; a < s.num_actions(); ++a) {
        for (int n = 0; n < s.layer_size(l + 1); ++n) {
          os << l << ',' << x << ',' << a << ',' << n << ',' << q(l, x, a, n) << '\n';
        }
      }
    }
  }
}

inline OccupancyMeasure read_occupancy_csv(std::istream& is,
                                           const LayeredStateSpace& space) {
  OccupancyMeasure q(space);
  std::string line;
  std::getline(is, line);
  if (line.rfind("layer,x,a,x_next,value", 0) != 0) {
    throw ShapeMismatchError("occupancy CSV: unexpected header '" + line + "'");
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    int l, x, a, n;
    double v;
    char c;
    if (!(ls >> l >> c >> x >> c >> a >> c >> n >> c >> v)) {
      throw ShapeMismatchError("occupancy CSV: malformed row '" + line + "'");
    }
    if (l < 0 || l >= space.horizon() || x < 0 || x >= space.layer_size(l) ||
        a < 0 || a >= space.num_actions() || n < 0 || n >= space.layer_size(l + 1)) {
      throw ShapeMismatchError("occupancy CSV: index out of range in '" + line + "'");
    }
    q(l, x, a, n) = v;
  }
  return q;
}

}  // namespace csapo
