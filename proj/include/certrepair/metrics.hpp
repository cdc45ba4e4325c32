#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "certrepair/certificates.hpp"
#include "certrepair/environment.hpp"
#include "certrepair/monitors.hpp"
#include "certrepair/training.hpp"

namespace certrepair {

struct Rate {
  double value = 1.0;
  bool empty = false;  // no eligible points; value is reported as 1.0
};

/// Fraction of observed time points outside X_u.
inline double safety_rate(const Trajectory& traj, const Environment& env) {
  if (traj.empty()) throw std::invalid_argument("safety_rate: empty trajectory");
  std::size_t safe = 0;
  for (const auto& s : traj) safe += env.in_unsafe(s) ? 0 : 1;
  return static_cast<double>(safe) / static_cast<double>(traj.size());
}

inline std::vector<double> certificate_values(const Trajectory& traj, const Environment& env, const Mlp& net) {
  std::vector<double> out;
  out.reserve(traj.size());
  for (const auto& s : traj) out.push_back(evaluate_scalar(net, env.observe(s)));
  return out;
}

/// Fraction of time points with B >= 0, from precomputed values.
inline double barrier_rate(std::span<const double> b) {
  if (b.empty()) throw std::invalid_argument("barrier_rate: empty trajectory");
  std::size_t in = 0;
  for (double v : b) in += v >= 0.0 ? 1 : 0;
  return static_cast<double>(in) / static_cast<double>(b.size());
}

inline double barrier_rate(const Trajectory& traj, const Environment& env, const BarrierFn& b) {
  return barrier_rate(certificate_values(traj, env, b.net));
}

/// Among consecutive pairs starting at B >= 0, the fraction with LB + B >= 0.
inline Rate nondec_rate(std::span<const double> b, std::span<const double> times) {
  if (b.size() < 2) throw std::invalid_argument("nondec_rate: need at least two points");
  std::size_t eligible = 0;
  std::size_t ok = 0;
  for (std::size_t k = 0; k + 1 < b.size(); ++k) {
    if (b[k] < 0.0) continue;
    ++eligible;
    const double lie = lie_derivative_fd(b[k], b[k + 1], times[k], times[k + 1]);
    ok += lie + b[k] >= 0.0 ? 1 : 0;
  }
  if (eligible == 0) return {1.0, true};
  return {static_cast<double>(ok) / static_cast<double>(eligible), false};
}

inline std::vector<double> time_points(const Trajectory& traj) {
  std::vector<double> t;
  t.reserve(traj.size());
  for (const auto& s : traj) t.push_back(s.timestamp);
  return t;
}

inline Rate nondec_rate(const Trajectory& traj, const Environment& env, const BarrierFn& b) {
  return nondec_rate(certificate_values(traj, env, b.net), time_points(traj));
}

/// Among consecutive pairs starting outside X_g, the fraction with LV < 0.
inline Rate decreasing_rate(std::span<const double> v, std::span<const double> times, const std::vector<bool>& goal) {
  if (v.size() < 2) throw std::invalid_argument("decreasing_rate: need at least two points");
  std::size_t eligible = 0;
  std::size_t ok = 0;
  for (std::size_t k = 0; k + 1 < v.size(); ++k) {
    if (goal[k]) continue;
    ++eligible;
    ok += lie_derivative_fd(v[k], v[k + 1], times[k], times[k + 1]) < 0.0 ? 1 : 0;
  }
  if (eligible == 0) return {1.0, true};
  return {static_cast<double>(ok) / static_cast<double>(eligible), false};
}

inline Rate decreasing_rate(const Trajectory& traj, const Environment& env, const LyapunovFn& v) {
  std::vector<bool> goal;
  for (const auto& s : traj) goal.push_back(env.in_goal(s));
  return decreasing_rate(certificate_values(traj, env, v.net), time_points(traj), goal);
}

using ViolationCounts = std::array<std::uint64_t, kVerdictKindCount>;

struct TrajectoryMetrics {
  double sr = 1.0;
  double br = 1.0;
  Rate ndr;
  std::optional<Rate> dr;
};

struct EvalReport {
  double sr = 0.0;
  double br = 0.0;
  double ndr = 0.0;
  std::optional<double> dr;
  std::vector<TrajectoryMetrics> per_trajectory;
  ViolationCounts violations{};
  std::uint64_t observations = 0;
};

/// Adds the CertPM verdicts of every prefix of `traj` to `counts`: the cause and, when
/// present, the second condition raised by the same observation.
inline void count_violations(const Trajectory& traj, const Environment& env, const BarrierFn& b,
                             const LyapunovFn* v, ViolationCounts& counts) {
  Trajectory prefix;
  for (const auto& s : traj) {
    prefix.push_back(s);
    auto tally = [&](const MonitorVerdict& m) {
      if (!m.flagged) return;
      ++counts[static_cast<std::size_t>(m.cause.kind)];
      if (m.also) ++counts[static_cast<std::size_t>(m.also->kind)];
    };
    tally(certpm_safety(prefix, b, env));
    if (v != nullptr) tally(certpm_stability(prefix, *v, env));
  }
}

inline TrajectoryMetrics trajectory_metrics(const Trajectory& traj, const Environment& env, const BarrierFn& b,
                                            const LyapunovFn* v) {
  TrajectoryMetrics m;
  const auto times = time_points(traj);
  const auto bv = certificate_values(traj, env, b.net);
  m.sr = safety_rate(traj, env);
  m.br = barrier_rate(bv);
  m.ndr = nondec_rate(bv, times);
  if (v != nullptr) m.dr = decreasing_rate(traj, env, *v);
  return m;
}

/// Aggregates per-trajectory metrics as plain means.
inline EvalReport aggregate(std::vector<TrajectoryMetrics> per, const ViolationCounts& counts,
                            std::uint64_t observations) {
  if (per.empty()) throw std::invalid_argument("aggregate: no trajectories");
  EvalReport r;
  const double n = static_cast<double>(per.size());
  bool has_dr = per.front().dr.has_value();
  double dr = 0.0;
  for (const auto& m : per) {
    r.sr += m.sr / n;
    r.br += m.br / n;
    r.ndr += m.ndr.value / n;
    if (has_dr) dr += m.dr->value / n;
  }
  if (has_dr) r.dr = dr;
  r.per_trajectory = std::move(per);
  r.violations = counts;
  r.observations = observations;
  return r;
}

/// Full-horizon rollouts from fresh initial states; rollout i draws its initial state
/// from its own derived stream.
inline EvalReport evaluate(Environment& env, const PolicyFn& policy, const BarrierFn& b, const LyapunovFn* v,
                           std::size_t rollouts, std::uint64_t seed) {
  if (rollouts == 0) throw std::invalid_argument("evaluate: rollouts must be >= 1");
  std::vector<TrajectoryMetrics> per;
  ViolationCounts counts{};
  std::uint64_t observations = 0;
  for (std::size_t i = 0; i < rollouts; ++i) {
    Rng rng(derive_seed(seed, "eval", i));
    const auto x0 = env.sample_initial_states(1, rng).front();
    const auto traj = rollout(env, policy, x0, env.horizon_steps());
    per.push_back(trajectory_metrics(traj, env, b, v));
    count_violations(traj, env, b, v, counts);
    observations += traj.size();
  }
  return aggregate(std::move(per), counts, observations);
}

}  // namespace certrepair
