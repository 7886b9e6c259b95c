#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "csapo/errors.hpp"
#include "csapo/game.hpp"
#include "csapo/hindsight.hpp"
#include "csapo/lagrangian.hpp"
#include "csapo/occupancy.hpp"

namespace csapo {

// Per-episode terms and their partial sums.
struct MetricSeries {
  std::vector<double> instantaneous;
  std::vector<double> cumulative;

  void push(double term) {
    instantaneous.push_back(term);
    cumulative.push_back((cumulative.empty() ? 0.0 : cumulative.back()) + term);
  }
  double final_value() const { return cumulative.empty() ? 0.0 : cumulative.back(); }
};

namespace detail {

inline std::vector<OccupancyMeasure> true_occupancies(const EpisodeLog& log,
                                                      const LayeredGame& game, bool min_side) {
  std::vector<OccupancyMeasure> out;
  out.reserve(log.rows.size());
  for (const auto& row : log.rows) {
    out.push_back(min_side ? occupancy_from_policy(row.pi1, game.min_player.kernel)
                           : occupancy_from_policy(row.pi2, game.max_player.kernel));
  }
  return out;
}

}  // namespace detail

// term_t = <q1^t . q2*, r^t> - <q1* . q2^t, r^t>, with q^t the true-kernel
// occupancies of the played policies.
inline MetricSeries regret(const EpisodeLog& log, const SaddleSolution& comparator,
                           const LayeredGame& game) {
  const auto q1s = comparator.q1.marginals();
  const auto q2s = comparator.q2.marginals();
  MetricSeries out;
  for (const auto& row : log.rows) {
    const auto r = game.reward.at(row.t);
    const auto q1 = occupancy_from_policy(row.pi1, game.min_player.kernel).marginals();
    const auto q2 = occupancy_from_policy(row.pi2, game.max_player.kernel).marginals();
    out.push(bilinear_reward(q1, q2s, r) - bilinear_reward(q1s, q2, r));
  }
  return out;
}

struct ViolationSeries {
  // Raw per-episode excess and its partial sums; violation is the positive
  // part of each partial sum.
  MetricSeries coupled;
  MetricSeries mean_variant;  // same with mean utilities g, h
  MetricSeries min_player;    // side mode
  MetricSeries max_player;    // side mode

  static double positive(double v) { return std::max(v, 0.0); }
};

inline ViolationSeries violation(const EpisodeLog& log, const LayeredGame& game) {
  const bool side = log.mode == ConstraintMode::kSide;
  if (side && !game.side_budgets) {
    throw ContractViolationError("side-mode log needs per-player budgets");
  }
  ViolationSeries out;
  for (const auto& row : log.rows) {
    const auto f = realize_functions(game, row.t);
    const auto q1 = occupancy_from_policy(row.pi1, game.min_player.kernel);
    const auto q2 = occupancy_from_policy(row.pi2, game.max_player.kernel);
    const double u1 = linear_utility(q1, f.g);
    const double u2 = linear_utility(q2, f.h);
    const double m1 = linear_utility(q1, game.min_player.utility_mean);
    const double m2 = linear_utility(q2, game.max_player.utility_mean);
    out.coupled.push(u1 + u2 - game.budget);
    out.mean_variant.push(m1 + m2 - game.budget);
    if (side) {
      out.min_player.push(u1 - game.side_budgets->min_player);
      out.max_player.push(u2 - game.side_budgets->max_player);
    }
  }
  return out;
}

struct Decomposition {
  MetricSeries hat_regret;
  MetricSeries error1;
  MetricSeries error2;
  MetricSeries error3;
  MetricSeries error4;
  // sum_t ||q1^t - q1-hat^t||_1 over (x,a) marginals, per player.
  MetricSeries l1_gap1;
  MetricSeries l1_gap2;
};

inline Decomposition decomposition_diagnostics(const EpisodeLog& log,
                                               const SaddleSolution& comparator,
                                               const LayeredGame& game) {
  if (!log.has_estimates()) {
    throw UnavailableError("decomposition needs q-hat estimates for every episode");
  }
  const auto q1s = comparator.q1.marginals();
  const auto q2s = comparator.q2.marginals();
  Decomposition d;
  auto l1 = [](const StateActionTable& a, const StateActionTable& b) {
    double s = 0.0;
    for (int l = 0; l < a.space().horizon(); ++l) {
      for (std::size_t i = 0; i < a.layer(l).size(); ++i) {
        s += std::abs(a.layer(l)[i] - b.layer(l)[i]);
      }
    }
    return s;
  };
  for (const auto& row : log.rows) {
    const auto f = realize_functions(game, row.t);
    const auto q1 = occupancy_from_policy(row.pi1, game.min_player.kernel).marginals();
    const auto q2 = occupancy_from_policy(row.pi2, game.max_player.kernel).marginals();
    const auto& h1 = *row.q1_hat;
    const auto& h2 = *row.q2_hat;
    const double a = bilinear_reward(h1, q2s, f.r);
    const double b = bilinear_reward(q1s, h2, f.r);
    d.hat_regret.push(a - b);
    d.error1.push(bilinear_reward(q1, q2s, f.r) - a);
    d.error2.push(b - bilinear_reward(q1s, q2, f.r));
    d.error3.push(linear_utility(q1, f.g) - linear_utility(h1, f.g));
    d.error4.push(linear_utility(q2, f.h) - linear_utility(h2, f.h));
    d.l1_gap1.push(l1(q1, h1));
    d.l1_gap2.push(l1(q2, h2));
  }
  return d;
}

// -- Rate fitting ------------------------------------------------------------------

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double slope_stderr = 0.0;
  bool clamped = false;  // some value was <= 1e-9 and was replaced by 1e-9
};

inline constexpr double kRateFloor = 1e-9;

// Least squares of ln(value) on ln(t).
inline RateFit rate_fit(const std::vector<double>& values, const std::vector<double>& t_grid) {
  if (values.size() != t_grid.size() || values.size() < 3) {
    throw ContractViolationError("rate_fit needs at least three (t, value) pairs");
  }
  RateFit fit;
  const std::size_t n = values.size();
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(t_grid[i] > 0.0)) throw ContractViolationError("rate_fit needs positive t");
    double v = values[i];
    if (!(v > kRateFloor)) {
      v = kRateFloor;
      fit.clamped = true;
    }
    x[i] = std::log(t_grid[i]);
    y[i] = std::log(v);
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0) throw ContractViolationError("rate_fit needs distinct t values");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = y[i] - (fit.intercept + fit.slope * x[i]);
    sse += e * e;
  }
  fit.r_squared = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  fit.slope_stderr = n > 2 ? std::sqrt(sse / (n - 2) / sxx) : 0.0;
  return fit;
}

// -- Output ---------------------------------------------------------------------------

// Realized reward sum_l r^t(x_l, y_l, a_l, b_l) along the sampled pair of
// trajectories; a sanity column only.
inline double realized_reward(const EpisodeRecord& row, const RewardTable& r) {
  double total = 0.0;
  for (std::size_t l = 0; l < row.trajectory1.actions.size(); ++l) {
    total += r(static_cast<int>(l), row.trajectory1.states[l], row.trajectory2.states[l],
               row.trajectory1.actions[l], row.trajectory2.actions[l]);
  }
  return total;
}

inline void write_metrics_csv(std::ostream& os, const EpisodeLog& log, const LayeredGame& game,
                              const MetricSeries& reg, const ViolationSeries& vio,
                              const Decomposition* dec, const std::string& header) {
  const bool side = log.mode == ConstraintMode::kSide;
  os << "# " << header << '\n';
  os << "t,regret_cum,violation_cum,violation_mean_variant";
  if (side) os << ",violation1_cum,violation2_cum";
  os << ",hat_regret_cum,err1,err2,err3,err4";
  os << (side ? ",lambda1,lambda2" : ",lambda") << ",realized_reward\n";
  auto num = [&](double v) { os << ',' << format_double(v); };
  for (std::size_t i = 0; i < log.rows.size(); ++i) {
    const auto& row = log.rows[i];
    os << row.t;
    num(reg.cumulative[i]);
    num(ViolationSeries::positive(vio.coupled.cumulative[i]));
    num(ViolationSeries::positive(vio.mean_variant.cumulative[i]));
    if (side) {
      num(ViolationSeries::positive(vio.min_player.cumulative[i]));
      num(ViolationSeries::positive(vio.max_player.cumulative[i]));
    }
    if (dec) {
      num(dec->hat_regret.cumulative[i]);
      num(dec->error1.cumulative[i]);
      num(dec->error2.cumulative[i]);
      num(dec->error3.cumulative[i]);
      num(dec->error4.cumulative[i]);
    } else {
      os << ",,,,,";
    }
    num(row.lambda1);
    if (side) num(row.lambda2);
    num(realized_reward(row, game.reward.at(row.t)));
    os << '\n';
  }
}

}  // namespace csapo
