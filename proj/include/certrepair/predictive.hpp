#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "certrepair/adam.hpp"
#include "certrepair/certificates.hpp"
#include "certrepair/environment.hpp"
#include "certrepair/monitors.hpp"
#include "certrepair/random.hpp"

namespace certrepair {

/// Settings of the double-integrator surrogate used to estimate hitting times.
struct SurrogateCfg {
  double a_max = 1.0;
  double pred_dt = 0.1;
  int pred_steps = 50;
  int opt_iters = 100;
  double opt_lr = 0.1;
  int restarts = 3;
  double penalty = 10.0;      // weight on the distance-to-set margin
  double temperature = 0.05;  // softmin temperature, seconds
  std::uint64_t seed = 0;

  double horizon() const { return pred_dt * pred_steps; }
};

/// States s_0..s_K of the surrogate x' = v, v' = a under piecewise-constant a.
struct SurrogatePath {
  std::vector<std::vector<double>> pos;
  std::vector<std::vector<double>> vel;

  std::size_t size() const { return pos.size(); }
};

struct PathGradient {
  std::vector<std::vector<double>> pos;
  std::vector<std::vector<double>> vel;

  void reset(const SurrogatePath& p) {
    pos.assign(p.size(), std::vector<double>(p.pos[0].size(), 0.0));
    vel.assign(p.size(), std::vector<double>(p.pos[0].size(), 0.0));
  }
};

/// A target set S seen along a surrogate path. margins[k] is negative (or non-positive when
/// not strict) exactly when the path is in S at step k, and varies smoothly otherwise.
class HittingTarget {
 public:
  virtual ~HittingTarget() = default;
  virtual bool strict() const { return true; }
  virtual void margins(const SurrogatePath& path, std::vector<double>& out) const = 0;
  /// Adds sum_k weights[k] * d margins[k] / d (pos, vel) into `grad`.
  virtual void accumulate_gradient(const SurrogatePath& path, std::span<const double> weights,
                                   PathGradient& grad) const = 0;
};

/// Target whose margin depends on one surrogate state at a time.
class PointwiseTarget : public HittingTarget {
 public:
  /// fn(pos, vel, grad_pos, grad_vel) returns the margin; gradient outputs may be null.
  using MarginFn = std::function<double(std::span<const double>, std::span<const double>, double*, double*)>;

  PointwiseTarget(MarginFn fn, bool strict) : fn_(std::move(fn)), strict_(strict) {}

  bool strict() const override { return strict_; }

  void margins(const SurrogatePath& path, std::vector<double>& out) const override {
    out.resize(path.size());
    for (std::size_t k = 0; k < path.size(); ++k) out[k] = fn_(path.pos[k], path.vel[k], nullptr, nullptr);
  }

  void accumulate_gradient(const SurrogatePath& path, std::span<const double> weights,
                           PathGradient& grad) const override {
    const std::size_t d = path.pos[0].size();
    std::vector<double> gp(d), gv(d);
    for (std::size_t k = 0; k < path.size(); ++k) {
      if (weights[k] == 0.0) continue;
      std::fill(gp.begin(), gp.end(), 0.0);
      std::fill(gv.begin(), gv.end(), 0.0);
      fn_(path.pos[k], path.vel[k], gp.data(), gv.data());
      for (std::size_t i = 0; i < d; ++i) {
        grad.pos[k][i] += weights[k] * gp[i];
        grad.vel[k][i] += weights[k] * gv[i];
      }
    }
  }

 private:
  MarginFn fn_;
  bool strict_;
};

namespace detail {

inline SurrogatePath simulate_surrogate(std::span<const double> pos0, std::span<const double> vel0,
                                        const std::vector<double>& accel, std::size_t dim, const SurrogateCfg& cfg) {
  const std::size_t steps = static_cast<std::size_t>(cfg.pred_steps);
  const double dt = cfg.pred_dt;
  SurrogatePath p;
  p.pos.resize(steps + 1);
  p.vel.resize(steps + 1);
  p.pos[0].assign(pos0.begin(), pos0.end());
  p.vel[0].assign(vel0.begin(), vel0.end());
  for (std::size_t k = 0; k < steps; ++k) {
    p.pos[k + 1].resize(dim);
    p.vel[k + 1].resize(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      const double a = accel[k * dim + i];
      p.pos[k + 1][i] = p.pos[k][i] + p.vel[k][i] * dt + 0.5 * a * dt * dt;
      p.vel[k + 1][i] = p.vel[k][i] + a * dt;
    }
  }
  return p;
}

inline bool in_set(double margin, bool strict) { return strict ? margin < 0.0 : margin <= 0.0; }

/// First hitting time read off the margins, linearly interpolated inside the crossing step.
/// Returns -dt when already in S at step 0 and +inf when S is never reached.
inline double hitting_time(const std::vector<double>& m, bool strict, double dt) {
  for (std::size_t k = 0; k < m.size(); ++k) {
    if (!in_set(m[k], strict)) continue;
    if (k == 0) return -dt;
    const double prev = m[k - 1];
    const double denom = prev - m[k];
    const double frac = denom > 0.0 ? std::clamp(prev / denom, 0.0, 1.0) : 1.0;
    return dt * (static_cast<double>(k - 1) + frac);
  }
  return std::numeric_limits<double>::infinity();
}

}  // namespace detail

/// Approximate minimum time for the surrogate to enter S from (pos0, vel0) with
/// |a_i| <= a_max. Returns -pred_dt when already in S and the horizon when S is not
/// reached within it. Each restart optimizes a = a_max tanh(z) with Adam on a softmin of
/// (k dt + penalty * max(margin_k, 0)); the best feasible path seen is reported.
/// Restart 0 starts from full thrust down the margin gradient, restart 1 from coasting,
/// later ones from random controls.
inline double min_time_to_set(std::span<const double> pos0, std::span<const double> vel0, const HittingTarget& target,
                              const SurrogateCfg& cfg) {
  const std::size_t dim = pos0.size();
  const std::size_t steps = static_cast<std::size_t>(cfg.pred_steps);
  const double dt = cfg.pred_dt;
  const double horizon = cfg.horizon();
  const bool strict = target.strict();

  std::vector<double> margins;
  double best = std::numeric_limits<double>::infinity();

  std::vector<double> z(steps * dim, 0.0);
  std::vector<double> accel(steps * dim, 0.0);
  {
    auto path = detail::simulate_surrogate(pos0, vel0, accel, dim, cfg);
    target.margins(path, margins);
    best = detail::hitting_time(margins, strict, dt);
    if (best < 0.0) return -dt;
  }

  std::vector<double> weights;
  PathGradient grad;

  // Full thrust along the margin's descent direction at the start; exact for half-spaces.
  std::vector<double> descent(dim, 0.0);
  {
    auto path = detail::simulate_surrogate(pos0, vel0, accel, dim, cfg);
    weights.assign(path.size(), 0.0);
    weights[0] = 1.0;
    grad.reset(path);
    target.accumulate_gradient(path, weights, grad);
    for (std::size_t i = 0; i < dim; ++i) {
      const double score = 0.5 * grad.pos[0][i] + grad.vel[0][i];
      descent[i] = score > 0.0 ? -2.0 : (score < 0.0 ? 2.0 : 0.0);
    }
  }

  for (int r = 0; r < cfg.restarts; ++r) {
    if (r == 0) {
      for (std::size_t k = 0; k < steps; ++k)
        for (std::size_t i = 0; i < dim; ++i) z[k * dim + i] = descent[i];
    } else if (r == 1) {
      std::fill(z.begin(), z.end(), 0.0);
    } else {
      Rng rng(derive_seed(cfg.seed, "surrogate-restart", static_cast<std::uint64_t>(r)));
      for (auto& v : z) v = 0.5 * rng.normal();
    }
    DenseArray params = DenseArray::vector(z);
    DenseArray grads({z.size()});
    AdamState adam(cfg.opt_lr);
    DenseArray* pp = &params;
    const DenseArray* gp = &grads;
    for (int it = 0; it <= cfg.opt_iters; ++it) {
      for (std::size_t i = 0; i < accel.size(); ++i) accel[i] = cfg.a_max * std::tanh(params[i]);
      auto path = detail::simulate_surrogate(pos0, vel0, accel, dim, cfg);
      target.margins(path, margins);
      best = std::min(best, detail::hitting_time(margins, strict, dt));
      if (it == cfg.opt_iters) break;

      // softmin weights over the per-step costs
      const std::size_t m = margins.size();
      weights.assign(m, 0.0);
      double cmin = std::numeric_limits<double>::infinity();
      std::vector<double> cost(m);
      // Step 0 does not depend on the controls and is left out of the softmin.
      for (std::size_t k = 1; k < m; ++k) {
        cost[k] = static_cast<double>(k) * dt + cfg.penalty * std::max(margins[k], 0.0);
        cmin = std::min(cmin, cost[k]);
      }
      double total = 0.0;
      for (std::size_t k = 1; k < m; ++k) {
        weights[k] = std::exp(-(cost[k] - cmin) / cfg.temperature);
        total += weights[k];
      }
      for (std::size_t k = 0; k < m; ++k) {
        weights[k] = margins[k] > 0.0 ? cfg.penalty * weights[k] / total : 0.0;
      }

      grad.reset(path);
      target.accumulate_gradient(path, weights, grad);

      // adjoint pass through the discrete double integrator
      std::vector<double> lam_p = grad.pos[steps];
      std::vector<double> lam_v = grad.vel[steps];
      for (std::size_t k = steps; k-- > 0;) {
        for (std::size_t i = 0; i < dim; ++i) {
          const double ga = lam_p[i] * 0.5 * dt * dt + lam_v[i] * dt;
          const double t = accel[k * dim + i] / cfg.a_max;
          grads[k * dim + i] = ga * cfg.a_max * (1.0 - t * t);
          const double new_lam_v = grad.vel[k][i] + lam_p[i] * dt + lam_v[i];
          lam_p[i] = grad.pos[k][i] + lam_p[i];
          lam_v[i] = new_lam_v;
        }
      }
      adam_step(std::span<DenseArray* const>(&pp, 1), std::span<const DenseArray* const>(&gp, 1), adam);
    }
  }
  return std::min(best, horizon);
}

// ---------------------------------------------------------------------------
// Targets built from the environment's known sets and a barrier candidate.

namespace detail {

/// B evaluated at the surrogate state (pos, vel) spliced into x_n, with gradient.
class BarrierProbe {
 public:
  BarrierProbe(const BarrierFn& b, const Environment& env, const SystemState& anchor)
      : b_(b), env_(env), anchor_(anchor) {}

  double value(std::span<const double> pos, std::span<const double> vel, double* gpos, double* gvel) const {
    const SystemState s = env_.with_kinematics(anchor_, pos, vel);
    const auto obs = env_.observe(s);
    if (gpos == nullptr) return b_.value(obs);
    auto fwd = forward(b_.net, obs);
    const double one = 1.0;
    const auto g_obs = input_gradient(b_.net, fwd.cache, std::span<const double>(&one, 1));
    const DenseArray jo = env_.observation_jacobian(s);
    const DenseArray jk = env_.kinematic_jacobian(s);
    const std::size_t n = env_.state_dim();
    std::vector<double> g_state(n, 0.0);
    for (std::size_t r = 0; r < jo.rows(); ++r) {
      if (g_obs[r] == 0.0) continue;
      for (std::size_t c = 0; c < n; ++c) g_state[c] += g_obs[r] * jo(r, c);
    }
    const std::size_t d = pos.size();
    for (std::size_t c = 0; c < 2 * d; ++c) {
      double acc = 0.0;
      for (std::size_t r = 0; r < n; ++r) acc += g_state[r] * jk(r, c);
      if (c < d) gpos[c] += acc;
      else gvel[c - d] += acc;
    }
    return fwd.output[0];
  }

 private:
  const BarrierFn& b_;
  const Environment& env_;
  const SystemState& anchor_;
};

/// S = {L B + B < 0} along consecutive surrogate states.
class NonDecreasingTarget : public HittingTarget {
 public:
  NonDecreasingTarget(const BarrierProbe& probe, double dt) : probe_(probe), dt_(dt) {}

  void margins(const SurrogatePath& path, std::vector<double>& out) const override {
    std::vector<double> values(path.size());
    for (std::size_t k = 0; k < path.size(); ++k) values[k] = probe_.value(path.pos[k], path.vel[k], nullptr, nullptr);
    out.resize(path.size() - 1);
    for (std::size_t k = 0; k + 1 < path.size(); ++k) out[k] = (values[k + 1] - values[k]) / dt_ + values[k];
  }

  void accumulate_gradient(const SurrogatePath& path, std::span<const double> weights,
                           PathGradient& grad) const override {
    // d margin_k / d B_k = 1 - 1/dt, d margin_k / d B_{k+1} = 1/dt
    std::vector<double> coeff(path.size(), 0.0);
    for (std::size_t k = 0; k < weights.size(); ++k) {
      coeff[k] += weights[k] * (1.0 - 1.0 / dt_);
      coeff[k + 1] += weights[k] / dt_;
    }
    const std::size_t d = path.pos[0].size();
    std::vector<double> gp(d), gv(d);
    for (std::size_t k = 0; k < path.size(); ++k) {
      if (coeff[k] == 0.0) continue;
      std::fill(gp.begin(), gp.end(), 0.0);
      std::fill(gv.begin(), gv.end(), 0.0);
      probe_.value(path.pos[k], path.vel[k], gp.data(), gv.data());
      for (std::size_t i = 0; i < d; ++i) {
        grad.pos[k][i] += coeff[k] * gp[i];
        grad.vel[k][i] += coeff[k] * gv[i];
      }
    }
  }

 private:
  const BarrierProbe& probe_;
  double dt_;
};

}  // namespace detail

/// PredPM assessment at x_n. Obstacles are frozen at x_n's time; the surrogate starts from
/// x_n's position and world velocity.
inline PredAssessment predpm_assess(const SystemState& x_n, const BarrierFn& b, const Environment& env,
                                    const SurrogateCfg& cfg) {
  const auto kin = env.kinematics(x_n);
  PredAssessment a;

  auto clearance_at = [&](std::span<const double> pos, std::span<const double> vel, double* gpos, double sign) {
    const SystemState s = env.with_kinematics(x_n, pos, vel);
    const double c = env.clearance(s);
    if (gpos != nullptr) {
      const auto g = env.clearance_gradient(s);
      for (std::size_t i = 0; i < g.size(); ++i) gpos[i] += sign * g[i];
    }
    return sign * c;
  };

  a.inside_unsafe = env.in_unsafe(x_n);
  if (a.inside_unsafe) {
    PointwiseTarget safe_set(
        [&](std::span<const double> p, std::span<const double> v, double* gp, double*) {
          return clearance_at(p, v, gp, -1.0);
        },
        false);
    a.v_u = -cfg.pred_dt;
    a.time_to_safe = min_time_to_set(kin.position, kin.velocity, safe_set, cfg);
  } else {
    PointwiseTarget unsafe_set(
        [&](std::span<const double> p, std::span<const double> v, double* gp, double*) {
          return clearance_at(p, v, gp, 1.0);
        },
        true);
    a.v_u = min_time_to_set(kin.position, kin.velocity, unsafe_set, cfg);
  }

  detail::BarrierProbe probe(b, env, x_n);
  PointwiseTarget negative_barrier(
      [&](std::span<const double> p, std::span<const double> v, double* gp, double* gv) {
        return probe.value(p, v, gp, gv);
      },
      true);
  a.v_s = min_time_to_set(kin.position, kin.velocity, negative_barrier, cfg);

  detail::NonDecreasingTarget nondec(probe, cfg.pred_dt);
  a.v_n = min_time_to_set(kin.position, kin.velocity, nondec, cfg);
  return a;
}

/// PredPM as a monitor: warns on a threshold hit and always while inside X_u.
inline MonitorVerdict predpm_monitor(const Trajectory& prefix, const BarrierFn& b, const Environment& env,
                                     const SurrogateCfg& cfg, const PredThresholds& th) {
  detail::require_prefix(prefix);
  const SystemState& last = prefix.back();
  MonitorVerdict m;
  m.assessment = predpm_assess(last, b, env, cfg);
  m.flagged = m.assessment->inside_unsafe || predpm_verdict(*m.assessment, th);
  m.cause.state = last;
  if (m.assessment->inside_unsafe) {
    m.cause.kind = VerdictKind::PropertyUnsafe;
    m.cause.detail = env.clearance(last);
    m.cause.mask = bit(VerdictKind::PropertyUnsafe);
  }
  return m;
}

}  // namespace certrepair
