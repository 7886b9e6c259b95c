#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "csapo/errors.hpp"
#include "csapo/layered.hpp"
#include "csapo/occupancy.hpp"

namespace csapo {

// The L1 distance between two distributions never exceeds this.
inline constexpr double kMaxL1Width = 2.0;

// kLiteral advances when n(x,a) >= N(x,a) for some pair, so any pair that
// has never been visited keeps the trigger armed. kRequireVisit uses
// n(x,a) >= max(1, N(x,a)) instead.
enum class EpochTrigger { kLiteral, kRequireVisit };

struct ConfidenceParams {
  std::int64_t episodes = 1;  // T
  double delta = 0.1;
  EpochTrigger trigger = EpochTrigger::kLiteral;
};

// sqrt(2 |X_{l+1}| ln(T |A| |X| / delta) / max(1, N)), natural log.
inline double confidence_width(int next_layer_size, int num_actions, int num_states,
                               std::int64_t episodes, double delta, double visits) {
  const double log_term =
      std::log(static_cast<double>(episodes) * num_actions * num_states / delta);
  return std::sqrt(2.0 * next_layer_size * log_term / std::max(1.0, visits));
}

// Empirical kernel P-bar with per-pair L1 radii epsilon: the set of
// occupancy measures induced by kernels inside the radii.
struct OccupancyDomain {
  TripleTable center;        // rows may be all zero for unvisited pairs
  StateActionTable width;    // clipped to kMaxL1Width
};

struct DomainReport {
  double max_mass_residual = 0.0;
  double max_flow_residual = 0.0;
  // max over (x,a) of (||q(x,a,.)/q(x,a) - P-bar(.|x,a)||_1 - epsilon(x,a))_+
  double max_l1_excess = 0.0;
  bool nonnegative = true;
  bool passed = false;
};

inline DomainReport contains(const OccupancyDomain& domain, const OccupancyMeasure& q,
                             double tol = kValidityTol) {
  require_same_space(domain.center.space(), q.space(), "contains");
  const auto validity = validate(q, tol);
  DomainReport rep;
  rep.max_mass_residual = validity.max_mass_residual;
  rep.max_flow_residual = validity.max_flow_residual;
  rep.nonnegative = validity.nonnegative;
  const auto& s = q.space();
  for (int l = 0; l < s.horizon(); ++l) {
    for (int x = 0; x < s.layer_size(l); ++x) {
      for (int a = 0; a < s.num_actions(); ++a) {
        const double mass = q.marginal(l, x, a);
        const auto row = q.row(l, x, a);
        const auto center = domain.center.row(l, x, a);
        double dist = 0.0;
        for (std::size_t n = 0; n < row.size(); ++n) {
          const double cond = mass < kDenominatorFloor ? 1.0 / row.size() : row[n] / mass;
          dist += std::abs(cond - center[n]);
        }
        rep.max_l1_excess =
            std::max(rep.max_l1_excess, dist - domain.width(l, x, a));
      }
    }
  }
  rep.passed = rep.nonnegative && rep.max_mass_residual <= tol &&
               rep.max_flow_residual <= tol && rep.max_l1_excess <= tol;
  return rep;
}

// True iff every row of `kernel` lies inside the L1 ball of the domain.
inline bool kernel_in_domain(const TransitionKernel& kernel, const OccupancyDomain& domain) {
  require_same_space(kernel.space(), domain.center.space(), "kernel_in_domain");
  const auto& s = kernel.space();
  for (int l = 0; l < s.horizon(); ++l) {
    for (int x = 0; x < s.layer_size(l); ++x) {
      for (int a = 0; a < s.num_actions(); ++a) {
        const auto p = kernel.row(l, x, a);
        const auto c = domain.center.row(l, x, a);
        double dist = 0.0;
        for (std::size_t n = 0; n < p.size(); ++n) dist += std::abs(p[n] - c[n]);
        if (dist > domain.width(l, x, a)) return false;
      }
    }
  }
  return true;
}

// Upper bound on the number of epochs after T episodes,
// |X||A| log2(8T / (|X||A|)) + |X||A|. Only meaningful for T >= |X||A|.
inline double epoch_cap(const LayeredStateSpace& space, std::int64_t episodes) {
  const double xa = static_cast<double>(space.num_states()) * space.num_actions();
  return xa * std::log2(8.0 * static_cast<double>(episodes) / xa) + xa;
}

// Visit counters and the empirical model of one player, advanced in epochs.
class EpochState {
 public:
  EpochState() = default;
  EpochState(const LayeredStateSpace& space, ConfidenceParams params)
      : space_(space),
        params_(params),
        n_(space),
        N_(space),
        m_(space),
        M_(space),
        center_(space),
        raw_width_(space),
        width_(space) {
    if (!(params.delta > 0.0 && params.delta < 1.0)) {
      throw ContractViolationError("delta must lie in (0, 1)");
    }
    if (params.episodes < 1) throw ContractViolationError("T must be positive");
    recompute_model();
  }

  const LayeredStateSpace& space() const { return space_; }
  const ConfidenceParams& params() const { return params_; }
  int epoch() const { return epoch_; }

  const StateActionTable& in_epoch_visits() const { return n_; }
  const StateActionTable& prior_visits() const { return N_; }
  const TripleTable& in_epoch_transitions() const { return m_; }
  const TripleTable& prior_transitions() const { return M_; }
  const TripleTable& empirical_kernel() const { return center_; }
  const StateActionTable& raw_widths() const { return raw_width_; }
  const StateActionTable& widths() const { return width_; }

  OccupancyDomain domain() const { return {center_, width_}; }

  void record(const Trajectory& traj) {
    if (static_cast<int>(traj.states.size()) != space_.horizon() + 1 ||
        static_cast<int>(traj.actions.size()) != space_.horizon()) {
      throw ShapeMismatchError("trajectory length does not match the horizon");
    }
    for (int l = 0; l < space_.horizon(); ++l) {
      const int x = traj.states[l];
      const int a = traj.actions[l];
      const int next = traj.states[l + 1];
      n_(l, x, a) += 1.0;
      m_(l, x, a, next) += 1.0;
    }
  }

  bool should_advance() const {
    for (int l = 0; l < space_.horizon(); ++l) {
      const auto& n = n_.layer(l);
      const auto& N = N_.layer(l);
      for (std::size_t i = 0; i < n.size(); ++i) {
        const double threshold =
            params_.trigger == EpochTrigger::kLiteral ? N[i] : std::max(1.0, N[i]);
        if (n[i] >= threshold) return true;
      }
    }
    return false;
  }

  void advance() {
    if (!should_advance()) {
      throw ContractViolationError("advance_epoch called while no pair met its trigger");
    }
    ++epoch_;
    for (int l = 0; l < space_.horizon(); ++l) {
      auto& N = N_.layer(l);
      auto& n = n_.layer(l);
      for (std::size_t i = 0; i < N.size(); ++i) N[i] += n[i];
      std::fill(n.begin(), n.end(), 0.0);
      auto& M = M_.layer(l);
      auto& m = m_.layer(l);
      for (std::size_t i = 0; i < M.size(); ++i) M[i] += m[i];
      std::fill(m.begin(), m.end(), 0.0);
    }
    recompute_model();
  }

  // Record a trajectory and advance if the trigger fires; returns whether
  // a new epoch started.
  bool observe(const Trajectory& traj) {
    record(traj);
    if (!should_advance()) return false;
    advance();
    return true;
  }

 private:
  void recompute_model() {
    for (int l = 0; l < space_.horizon(); ++l) {
      for (int x = 0; x < space_.layer_size(l); ++x) {
        for (int a = 0; a < space_.num_actions(); ++a) {
          const double visits = N_(l, x, a);
          const auto M = M_.row(l, x, a);
          auto P = center_.row(l, x, a);
          for (std::size_t k = 0; k < P.size(); ++k) P[k] = M[k] / std::max(1.0, visits);
          raw_width_(l, x, a) =
              confidence_width(space_.layer_size(l + 1), space_.num_actions(),
                               space_.num_states(), params_.episodes, params_.delta, visits);
          width_(l, x, a) = std::min(kMaxL1Width, raw_width_(l, x, a));
        }
      }
    }
  }

  LayeredStateSpace space_;
  ConfidenceParams params_;
  int epoch_ = 1;
  StateActionTable n_;
  StateActionTable N_;
  TripleTable m_;
  TripleTable M_;
  TripleTable center_;
  StateActionTable raw_width_;
  StateActionTable width_;
};

}  // namespace csapo
