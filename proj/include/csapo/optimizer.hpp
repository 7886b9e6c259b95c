#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "csapo/confidence.hpp"
#include "csapo/errors.hpp"
#include "csapo/layered.hpp"
#include "csapo/occupancy.hpp"

namespace csapo {

// -- Loss vectors -----------------------------------------------------------

// phi_1 = V (q2-hat . r) + lambda_1 g for the min-player.
inline StateActionTable min_player_loss(double V, const StateActionTable& q2_marginals,
                                        const RewardTable& r, double lambda,
                                        const StateActionTable& g) {
  StateActionTable phi = reward_against_max(q2_marginals, r);
  require_same_space(phi.space(), g.space(), "min_player_loss");
  for (int l = 0; l < phi.space().horizon(); ++l) {
    auto& p = phi.layer(l);
    const auto& u = g.layer(l);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = V * p[i] + lambda * u[i];
  }
  return phi;
}

// phi_2 = -V (q1-hat . r) + lambda_2 h; the max-player's objective is
// negated so both players minimize.
inline StateActionTable max_player_loss(double V, const StateActionTable& q1_marginals,
                                        const RewardTable& r, double lambda,
                                        const StateActionTable& h) {
  StateActionTable phi = reward_against_min(q1_marginals, r);
  require_same_space(phi.space(), h.space(), "max_player_loss");
  for (int l = 0; l < phi.space().horizon(); ++l) {
    auto& p = phi.layer(l);
    const auto& u = h.layer(l);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = -V * p[i] + lambda * u[i];
  }
  return phi;
}

// -- Mixing and exponential steps ------------------------------------------

// q~(x,a) = (1 - theta) q(x,a) + theta / (|X_l||A|), spread over x' in
// proportion to q's conditional next-state distribution. theta = 0 is the
// identity.
inline OccupancyMeasure mixing_step(const OccupancyMeasure& q, double theta) {
  if (!(theta >= 0.0 && theta <= 1.0)) {
    throw ContractViolationError("mixing weight theta must lie in [0, 1]");
  }
  if (theta == 0.0) return q;
  const auto& s = q.space();
  OccupancyMeasure out(s);
  for (int l = 0; l < s.horizon(); ++l) {
    const double floor = theta / (s.layer_size(l) * s.num_actions());
    for (int x = 0; x < s.layer_size(l); ++x) {
      for (int a = 0; a < s.num_actions(); ++a) {
        const double mass = q.marginal(l, x, a);
        const double mixed = (1.0 - theta) * mass + floor;
        const auto src = q.row(l, x, a);
        auto dst = out.row(l, x, a);
        for (std::size_t n = 0; n < dst.size(); ++n) {
          const double cond = mass < kDenominatorFloor ? 1.0 / dst.size() : src[n] / mass;
          dst[n] = mixed * cond;
        }
      }
    }
  }
  return out;
}

// q-bar(x,a,x') = q~(x,a,x') exp(-eta phi(x,a)), with each layer shifted by
// max(-eta phi) so the largest exponent is zero. The shift is a per-layer
// constant factor, which the projection normalizes away.
inline TripleTable exp_step(const TripleTable& q_mixed, const StateActionTable& phi,
                            double eta) {
  require_same_space(q_mixed.space(), phi.space(), "exp_step");
  if (!(eta >= 0.0) || !std::isfinite(eta)) {
    throw ContractViolationError("learning rate eta must be positive and finite");
  }
  const auto& s = q_mixed.space();
  TripleTable out(s);
  for (int l = 0; l < s.horizon(); ++l) {
    double shift = -std::numeric_limits<double>::infinity();
    for (double v : phi.layer(l)) shift = std::max(shift, -eta * v);
    for (int x = 0; x < s.layer_size(l); ++x) {
      for (int a = 0; a < s.num_actions(); ++a) {
        const double factor = std::exp(-eta * phi(l, x, a) - shift);
        const auto src = q_mixed.row(l, x, a);
        auto dst = out.row(l, x, a);
        for (std::size_t n = 0; n < dst.size(); ++n) dst[n] = src[n] * factor;
      }
    }
  }
  return out;
}

// -- KL projection onto the optimistic domain --------------------------------
//
// The projection argmin_{q in domain} D(q | q-bar) is solved through its dual
//
//   min_{beta, mu+ >= 0, mu- >= 0}  sum_l ln Z_l,
//   Z_l = sum_{x,a,x'} q-bar(x,a,x') exp(-B(x,a,x')),
//   B   = beta(x') - beta(x) + (1 - eps) mu+(x,a,x') - (1 + eps) mu-(x,a,x')
//         + sum_x'' P-bar(x''|x,a) (mu-(x,a,x'') - mu+(x,a,x'')),
//
// and the primal is recovered as q-hat = q-bar exp(-B) / Z_l. The formula
// for B presumes mu+(x,a,x') + mu-(x,a,x') = nu(x,a) for every x' (the
// multiplier of the L1 budget). The solver therefore works in the
// coordinates rho = mu+ - mu-, nu = mu+ + mu-, constrained to |rho| <= nu,
// where B = beta(x') - beta(x) + rho(x') - P-bar . rho - eps nu.

struct ProjectionDuals {
  // beta[l][x]; entries for layer 0 and layer L stay zero.
  std::vector<std::vector<double>> beta;
  TripleTable mu_plus;
  TripleTable mu_minus;

  static ProjectionDuals zeros(const LayeredStateSpace& s) {
    ProjectionDuals d;
    d.beta.resize(s.horizon() + 1);
    for (int l = 0; l <= s.horizon(); ++l) d.beta[l].assign(s.layer_size(l), 0.0);
    d.mu_plus = TripleTable(s);
    d.mu_minus = TripleTable(s);
    return d;
  }
};

// The data of one projection: log q-bar and the domain.
struct ProjectionProblem {
  TripleTable log_weight;
  OccupancyDomain domain;

  static ProjectionProblem from_weights(const TripleTable& q_bar, OccupancyDomain domain) {
    require_same_space(q_bar.space(), domain.center.space(), "projection problem");
    ProjectionProblem p{TripleTable(q_bar.space()), std::move(domain)};
    for (int l = 0; l < q_bar.space().horizon(); ++l) {
      const auto& src = q_bar.layer(l);
      auto& dst = p.log_weight.layer(l);
      for (std::size_t i = 0; i < src.size(); ++i) {
        if (src[i] < 0.0) throw ContractViolationError("q-bar must be nonnegative");
        dst[i] = std::log(src[i]);
      }
    }
    return p;
  }

  const LayeredStateSpace& space() const { return log_weight.space(); }
};

struct DualEvaluation {
  double value = 0.0;
  ProjectionDuals gradient;
};

struct SolverOptions {
  int max_iters = 5000;
  double grad_tol = 1e-8;
  double armijo = 1e-4;
  double shrink = 0.5;
  double initial_step = 1.0;
};

struct ProjectionResult {
  OccupancyMeasure q;
  ProjectionDuals duals;
  int iterations = 0;
  double residual = 0.0;       // projected-gradient infinity norm
  double dual_objective = 0.0; // sum_l ln Z_l at the returned duals
};

namespace detail {

// Per-triple dual terms: rho(x,a,x') and s(x,a,x') = mu+ + mu-.
struct DualPoint {
  std::vector<std::vector<double>> beta;
  TripleTable rho;
  TripleTable spread;
};

struct DualWork {
  double value = 0.0;
  TripleTable weights;  // softmax weights w = q-bar exp(-B) / Z_l
};

inline bool evaluate_dual(const ProjectionProblem& p, const DualPoint& d, DualWork& out) {
  const auto& s = p.space();
  const auto& eps = p.domain.width;
  const auto& center = p.domain.center;
  if (out.weights.space().horizon() != s.horizon()) out.weights = TripleTable(s);
  out.value = 0.0;
  for (int l = 0; l < s.horizon(); ++l) {
    const int nn = s.layer_size(l + 1);
    auto& logits = out.weights.layer(l);
    const auto& logw = p.log_weight.layer(l);
    const auto& rho = d.rho.layer(l);
    const auto& spread = d.spread.layer(l);
    const auto& pbar = center.layer(l);
    double top = -std::numeric_limits<double>::infinity();
    for (int x = 0; x < s.layer_size(l); ++x) {
      for (int a = 0; a < s.num_actions(); ++a) {
        const int base = (x * s.num_actions() + a) * nn;
        double shared = 0.0;
        for (int n = 0; n < nn; ++n) shared += pbar[base + n] * rho[base + n];
        const double e = eps(l, x, a);
        for (int n = 0; n < nn; ++n) {
          const double B = d.beta[l + 1][n] - d.beta[l][x] + rho[base + n] - shared -
                           e * spread[base + n];
          logits[base + n] = logw[base + n] - B;
          top = std::max(top, logits[base + n]);
        }
      }
    }
    if (!std::isfinite(top)) return false;
    double z = 0.0;
    for (double& v : logits) z += (v = std::exp(v - top));
    const double log_z = top + std::log(z);
    for (double& v : logits) v /= z;
    out.value += log_z;
  }
  return std::isfinite(out.value);
}

// d f / d rho(x,a,x') = -w(x,a,x') + P-bar(x'|x,a) w(x,a)
// d f / d s(x,a,x')   = eps(x,a) w(x,a,x')
// d f / d beta(x)     = outflow(x) - inflow(x)
inline void dual_partials(const ProjectionProblem& p, const TripleTable& w,
                          std::vector<std::vector<double>>& g_beta, TripleTable& g_rho,
                          TripleTable& g_spread) {
  const auto& s = p.space();
  g_beta.resize(s.horizon() + 1);
  for (int l = 0; l <= s.horizon(); ++l) g_beta[l].assign(s.layer_size(l), 0.0);
  if (g_rho.space().horizon() != s.horizon()) g_rho = TripleTable(s);
  if (g_spread.space().horizon() != s.horizon()) g_spread = TripleTable(s);
  for (int l = 0; l < s.horizon(); ++l) {
    const int nn = s.layer_size(l + 1);
    const auto& wl = w.layer(l);
    const auto& pbar = p.domain.center.layer(l);
    auto& gr = g_rho.layer(l);
    auto& gs = g_spread.layer(l);
    for (int x = 0; x < s.layer_size(l); ++x) {
      for (int a = 0; a < s.num_actions(); ++a) {
        const int base = (x * s.num_actions() + a) * nn;
        double mass = 0.0;
        for (int n = 0; n < nn; ++n) mass += wl[base + n];
        const double e = p.domain.width(l, x, a);
        for (int n = 0; n < nn; ++n) {
          gr[base + n] = -wl[base + n] + pbar[base + n] * mass;
          gs[base + n] = e * wl[base + n];
          g_beta[l + 1][n] -= wl[base + n];
        }
        g_beta[l][x] += mass;
      }
    }
  }
  g_beta[0][0] = 0.0;
  g_beta[s.horizon()][0] = 0.0;
}

// Euclidean projection of (rho_1..rho_n, nu) onto {|rho_i| <= nu}.
inline void project_linf_cone(std::span<double> rho, double& nu) {
  double largest = 0.0;
  for (double r : rho) largest = std::max(largest, std::abs(r));
  if (largest <= nu) return;
  std::vector<double> mags(rho.size());
  for (std::size_t i = 0; i < rho.size(); ++i) mags[i] = std::abs(rho[i]);
  std::sort(mags.begin(), mags.end(), std::greater<>());
  double t = nu;
  double sum = 0.0;
  for (std::size_t k = 0; k <= mags.size(); ++k) {
    const double cand = (nu + sum) / static_cast<double>(k + 1);
    const double upper = k == 0 ? std::numeric_limits<double>::infinity() : mags[k - 1];
    const double lower = k == mags.size() ? -std::numeric_limits<double>::infinity() : mags[k];
    if (cand <= upper && cand >= lower) {
      t = cand;
      break;
    }
    if (k < mags.size()) sum += mags[k];
  }
  t = std::max(0.0, t);
  for (double& r : rho) r = std::clamp(r, -t, t);
  nu = t;
}

// Coordinates used by the solver: beta on interior states, rho per
// triple, nu per pair.
struct ReducedDuals {
  std::vector<std::vector<double>> beta;
  TripleTable rho;
  StateActionTable nu;
};

inline void project_reduced(ReducedDuals& d) {
  const auto& s = d.rho.space();
  d.beta.front()[0] = 0.0;
  d.beta.back()[0] = 0.0;
  for (int l = 0; l < s.horizon(); ++l) {
    for (int x = 0; x < s.layer_size(l); ++x) {
      for (int a = 0; a < s.num_actions(); ++a) {
        project_linf_cone(d.rho.row(l, x, a), d.nu(l, x, a));
      }
    }
  }
}

inline ReducedDuals reduce(const ProjectionDuals& d) {
  const auto& s = d.mu_plus.space();
  ReducedDuals r{d.beta, TripleTable(s), StateActionTable(s)};
  for (int l = 0; l < s.horizon(); ++l) {
    for (int x = 0; x < s.layer_size(l); ++x) {
      for (int a = 0; a < s.num_actions(); ++a) {
        const auto mp = d.mu_plus.row(l, x, a);
        const auto mm = d.mu_minus.row(l, x, a);
        auto rho = r.rho.row(l, x, a);
        double nu = 0.0;
        for (std::size_t n = 0; n < rho.size(); ++n) {
          rho[n] = mp[n] - mm[n];
          nu = std::max(nu, mp[n] + mm[n]);
        }
        r.nu(l, x, a) = nu;
      }
    }
  }
  project_reduced(r);
  return r;
}

inline ProjectionDuals expand(const ReducedDuals& r) {
  const auto& s = r.rho.space();
  ProjectionDuals d{r.beta, TripleTable(s), TripleTable(s)};
  for (int l = 0; l < s.horizon(); ++l) {
    for (int x = 0; x < s.layer_size(l); ++x) {
      for (int a = 0; a < s.num_actions(); ++a) {
        const double nu = r.nu(l, x, a);
        const auto rho = r.rho.row(l, x, a);
        auto mp = d.mu_plus.row(l, x, a);
        auto mm = d.mu_minus.row(l, x, a);
        for (std::size_t n = 0; n < rho.size(); ++n) {
          mp[n] = std::max(0.0, 0.5 * (nu + rho[n]));
          mm[n] = std::max(0.0, 0.5 * (nu - rho[n]));
        }
      }
    }
  }
  return d;
}

inline DualPoint point_of(const ReducedDuals& r) {
  const auto& s = r.rho.space();
  DualPoint p{r.beta, r.rho, TripleTable(s)};
  for (int l = 0; l < s.horizon(); ++l) {
    for (int x = 0; x < s.layer_size(l); ++x) {
      for (int a = 0; a < s.num_actions(); ++a) {
        for (double& v : p.spread.row(l, x, a)) v = r.nu(l, x, a);
      }
    }
  }
  return p;
}

// Flat views let the line search treat all dual coordinates uniformly.
template <typename F>
void for_each_coordinate(ReducedDuals& d, F&& f) {
  for (std::size_t l = 1; l + 1 < d.beta.size(); ++l) {
    for (double& v : d.beta[l]) f(v);
  }
  for (int l = 0; l < d.rho.space().horizon(); ++l) {
    for (double& v : d.rho.layer(l)) f(v);
    for (double& v : d.nu.layer(l)) f(v);
  }
}

inline std::vector<double> flatten(const ReducedDuals& d) {
  std::vector<double> out;
  for_each_coordinate(const_cast<ReducedDuals&>(d), [&](double& v) { out.push_back(v); });
  return out;
}

inline void unflatten(ReducedDuals& d, const std::vector<double>& flat) {
  std::size_t i = 0;
  for_each_coordinate(d, [&](double& v) { v = flat[i++]; });
}

inline ReducedDuals reduced_gradient(const ProjectionProblem& p, const TripleTable& w) {
  const auto& s = p.space();
  ReducedDuals g{{}, TripleTable(s), StateActionTable(s)};
  TripleTable g_spread(s);
  dual_partials(p, w, g.beta, g.rho, g_spread);
  for (int l = 0; l < s.horizon(); ++l) {
    for (int x = 0; x < s.layer_size(l); ++x) {
      for (int a = 0; a < s.num_actions(); ++a) {
        double total = 0.0;
        for (double v : g_spread.row(l, x, a)) total += v;
        g.nu(l, x, a) = total;
      }
    }
  }
  return g;
}

}  // namespace detail

// Value and gradient of sum_l ln Z_l at arbitrary nonnegative duals, with
// B exactly as written above (no coupling between mu+ and mu- imposed).
inline DualEvaluation dual_objective(const ProjectionDuals& duals,
                                     const ProjectionProblem& problem) {
  const auto& s = problem.space();
  detail::DualPoint point{duals.beta, TripleTable(s), TripleTable(s)};
  for (int l = 0; l < s.horizon(); ++l) {
    const auto& mp = duals.mu_plus.layer(l);
    const auto& mm = duals.mu_minus.layer(l);
    auto& rho = point.rho.layer(l);
    auto& spread = point.spread.layer(l);
    for (std::size_t i = 0; i < mp.size(); ++i) {
      rho[i] = mp[i] - mm[i];
      spread[i] = mp[i] + mm[i];
    }
  }
  detail::DualWork work;
  if (!detail::evaluate_dual(problem, point, work)) {
    throw DivergedDualsError("dual objective is not finite");
  }
  DualEvaluation out;
  out.value = work.value;
  TripleTable g_rho(s);
  TripleTable g_spread(s);
  detail::dual_partials(problem, work.weights, out.gradient.beta, g_rho, g_spread);
  out.gradient.mu_plus = TripleTable(s);
  out.gradient.mu_minus = TripleTable(s);
  for (int l = 0; l < s.horizon(); ++l) {
    const auto& gr = g_rho.layer(l);
    const auto& gs = g_spread.layer(l);
    auto& gp = out.gradient.mu_plus.layer(l);
    auto& gm = out.gradient.mu_minus.layer(l);
    for (std::size_t i = 0; i < gr.size(); ++i) {
      gp[i] = gr[i] + gs[i];
      gm[i] = -gr[i] + gs[i];
    }
  }
  return out;
}

// Primal point q-bar exp(-B) / Z_l for the given duals.
inline OccupancyMeasure primal_from_duals(const ProjectionDuals& duals,
                                          const ProjectionProblem& problem) {
  const auto& s = problem.space();
  detail::DualPoint point{duals.beta, TripleTable(s), TripleTable(s)};
  for (int l = 0; l < s.horizon(); ++l) {
    const auto& mp = duals.mu_plus.layer(l);
    const auto& mm = duals.mu_minus.layer(l);
    for (std::size_t i = 0; i < mp.size(); ++i) {
      point.rho.layer(l)[i] = mp[i] - mm[i];
      point.spread.layer(l)[i] = mp[i] + mm[i];
    }
  }
  detail::DualWork work;
  if (!detail::evaluate_dual(problem, point, work)) {
    throw DivergedDualsError("dual objective is not finite");
  }
  return OccupancyMeasure(std::move(work.weights));
}

// Unnormalized KL divergence sum q ln(q / p) - q + p over all triples.
inline double kl_divergence(const TripleTable& q, const TripleTable& p) {
  require_same_space(q.space(), p.space(), "kl_divergence");
  double d = 0.0;
  for (int l = 0; l < q.space().horizon(); ++l) {
    const auto& ql = q.layer(l);
    const auto& pl = p.layer(l);
    for (std::size_t i = 0; i < ql.size(); ++i) {
      if (ql[i] > 0.0) d += ql[i] * std::log(ql[i] / pl[i]);
      d += pl[i] - ql[i];
    }
  }
  return d;
}

// The Lagrange dual function of the projection at a point where the dual
// objective equals `sum_log_z`: -sum_l ln Z_l - L + sum q-bar. It lower
// bounds D(q | q-bar) for every feasible q.
inline double projection_dual_value(const ProjectionProblem& problem, double sum_log_z) {
  double mass = 0.0;
  for (int l = 0; l < problem.space().horizon(); ++l) {
    for (double v : problem.log_weight.layer(l)) mass += std::exp(v);
  }
  return -sum_log_z - problem.space().horizon() + mass;
}

inline ProjectionResult kl_project(const ProjectionProblem& problem,
                                   const SolverOptions& options = {},
                                   const ProjectionDuals* warm_start = nullptr) {
  const auto& s = problem.space();
  detail::ReducedDuals x = warm_start ? detail::reduce(*warm_start)
                                      : detail::reduce(ProjectionDuals::zeros(s));
  detail::DualWork work;
  if (!detail::evaluate_dual(problem, detail::point_of(x), work)) {
    if (!warm_start) throw DivergedDualsError("dual objective is not finite at zero duals");
    x = detail::reduce(ProjectionDuals::zeros(s));
    if (!detail::evaluate_dual(problem, detail::point_of(x), work)) {
      throw DivergedDualsError("dual objective is not finite at zero duals");
    }
  }

  std::vector<double> xf = detail::flatten(x);
  std::vector<double> gf = detail::flatten(detail::reduced_gradient(problem, work.weights));
  std::vector<double> prev_x, prev_g;
  detail::ReducedDuals trial = x;
  detail::DualWork trial_work;
  double f = work.value;
  double step = options.initial_step;
  double residual = std::numeric_limits<double>::infinity();
  int iter = 0;

  auto projected_point = [&](double t, std::vector<double>& out) {
    out.resize(xf.size());
    for (std::size_t i = 0; i < xf.size(); ++i) out[i] = xf[i] - t * gf[i];
    detail::unflatten(trial, out);
    detail::project_reduced(trial);
    out = detail::flatten(trial);
  };

  std::vector<double> candidate;
  for (; iter < options.max_iters; ++iter) {
    projected_point(1.0, candidate);
    residual = 0.0;
    for (std::size_t i = 0; i < xf.size(); ++i) {
      residual = std::max(residual, std::abs(candidate[i] - xf[i]));
    }
    if (residual <= options.grad_tol) break;

    // Barzilai-Borwein trial step, then Armijo backtracking along the
    // projection arc.
    if (!prev_x.empty()) {
      double ss = 0.0, sy = 0.0;
      for (std::size_t i = 0; i < xf.size(); ++i) {
        const double dx = xf[i] - prev_x[i];
        const double dg = gf[i] - prev_g[i];
        ss += dx * dx;
        sy += dx * dg;
      }
      step = sy > 0.0 ? std::clamp(ss / sy, 1e-10, 1e10) : options.initial_step;
    }
    bool accepted = false;
    for (int k = 0; k < 60; ++k) {
      projected_point(step, candidate);
      double descent = 0.0;
      for (std::size_t i = 0; i < xf.size(); ++i) descent += gf[i] * (candidate[i] - xf[i]);
      if (detail::evaluate_dual(problem, detail::point_of(trial), trial_work) &&
          trial_work.value <= f + options.armijo * descent) {
        accepted = true;
        break;
      }
      step *= options.shrink;
    }
    if (!accepted) break;
    prev_x = std::move(xf);
    prev_g = std::move(gf);
    xf = candidate;
    x = trial;
    f = trial_work.value;
    std::swap(work, trial_work);
    gf = detail::flatten(detail::reduced_gradient(problem, work.weights));
  }

  if (residual > options.grad_tol && residual > 100.0 * options.grad_tol) {
    throw NonConvergedError("kl_project did not converge after " +
                                std::to_string(iter) + " iterations",
                            residual);
  }
  ProjectionResult result;
  result.q = OccupancyMeasure(std::move(work.weights));
  result.duals = detail::expand(x);
  result.iterations = iter;
  result.residual = residual;
  result.dual_objective = f;
  return result;
}

// -- Primal update -------------------------------------------------------------

struct PrimalUpdateInput {
  const OccupancyMeasure* q1_prev = nullptr;
  const OccupancyMeasure* q2_prev = nullptr;
  double lambda1 = 0.0;  // multiplier applied to the min-player's utility
  double lambda2 = 0.0;  // multiplier applied to the max-player's utility
  double V = 1.0;
  double eta = 1.0;
  double theta = 1.0;
  const OccupancyDomain* domain1 = nullptr;
  const OccupancyDomain* domain2 = nullptr;
  const RewardTable* r = nullptr;
  const StateActionTable* g = nullptr;
  const StateActionTable* h = nullptr;
  const ProjectionDuals* warm1 = nullptr;
  const ProjectionDuals* warm2 = nullptr;
};

struct PrimalUpdateResult {
  ProjectionResult min_player;
  ProjectionResult max_player;
};

// One mirror-descent step for both players: mix, tilt by the loss vector,
// project onto the player's optimistic domain.
inline PrimalUpdateResult primal_update(const PrimalUpdateInput& in,
                                        const SolverOptions& options = {}) {
  const auto q1m = in.q1_prev->marginals();
  const auto q2m = in.q2_prev->marginals();
  const auto phi1 = min_player_loss(in.V, q2m, *in.r, in.lambda1, *in.g);
  const auto phi2 = max_player_loss(in.V, q1m, *in.r, in.lambda2, *in.h);
  auto bar1 = exp_step(mixing_step(*in.q1_prev, in.theta), phi1, in.eta);
  auto bar2 = exp_step(mixing_step(*in.q2_prev, in.theta), phi2, in.eta);
  PrimalUpdateResult out;
  out.min_player = kl_project(ProjectionProblem::from_weights(bar1, *in.domain1), options,
                              in.warm1);
  out.max_player = kl_project(ProjectionProblem::from_weights(bar2, *in.domain2), options,
                              in.warm2);
  return out;
}

}  // namespace csapo
