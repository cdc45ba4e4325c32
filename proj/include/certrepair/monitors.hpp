#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "certrepair/certificates.hpp"
#include "certrepair/environment.hpp"

namespace certrepair {

/// Estimated remaining times (seconds) until the unsafe set, the set {B < 0} and the
/// non-decreasing-violation set are reached. Negative means already there.
struct PredAssessment {
  double v_u = 0.0;
  double v_s = 0.0;
  double v_n = 0.0;
  bool inside_unsafe = false;
  double time_to_safe = 0.0;  // only meaningful when inside_unsafe
};

struct PredThresholds {
  double xi_u = 0.0;
  double xi_s = 0.0;
  double xi_n = 0.0;
};

/// Verdict M(x_0..x_n) of a runtime monitor.
struct MonitorVerdict {
  bool flagged = false;
  CertVerdict cause;                  // highest-priority condition found on this prefix
  std::optional<CertVerdict> also;    // a second condition raised by the same observation
  std::optional<PredAssessment> assessment;
};

namespace detail {

inline void require_prefix(const Trajectory& prefix) {
  if (prefix.empty()) throw std::invalid_argument("monitor: empty trajectory prefix");
}

inline MonitorVerdict verdict_from(std::vector<CertVerdict> found) {
  MonitorVerdict m;
  if (found.empty()) return m;
  m.flagged = true;
  m.cause = std::move(found[0]);
  if (found.size() > 1) m.also = std::move(found[1]);
  return m;
}

}  // namespace detail

/// CertPM for safety. The newest state x_n is checked for the property, Init and Safety
/// conditions; the non-decreasing condition needs a successor, so it is checked for
/// x_{n-1} using x_n. Stateless across calls.
inline MonitorVerdict certpm_safety(const Trajectory& prefix, const BarrierFn& b, const Environment& env) {
  detail::require_prefix(prefix);
  const SystemState& last = prefix.back();
  const auto obs_last = env.observe(last);
  std::vector<CertVerdict> found;
  auto point = barrier_check(b, obs_last, last, nullptr, env);
  if (point.kind != VerdictKind::None) found.push_back(point);
  if (prefix.size() >= 2) {
    const SystemState& prev = prefix[prefix.size() - 2];
    const auto obs_prev = env.observe(prev);
    BarrierSample s;
    s.value = b.value(obs_prev);
    s.next_value = b.value(obs_last);
    s.dt = last.timestamp - prev.timestamp;
    // Only the transition condition is new information for x_{n-1}.
    auto v = classify_barrier(s, prev);
    if (v.mask & bit(VerdictKind::NonDecCond)) {
      CertVerdict nd;
      nd.kind = VerdictKind::NonDecCond;
      nd.state = prev;
      nd.detail = (*s.next_value - s.value) / s.dt + s.value;
      nd.mask = bit(VerdictKind::NonDecCond);
      found.push_back(nd);
    }
  }
  return detail::verdict_from(std::move(found));
}

/// CertPM for stability: Zero-upon-goal and positivity at x_n, decreasing at x_{n-1}.
/// A property verdict is never issued.
inline MonitorVerdict certpm_stability(const Trajectory& prefix, const LyapunovFn& v, const Environment& env,
                                       double zero_tol = 1e-3) {
  detail::require_prefix(prefix);
  const SystemState& last = prefix.back();
  const auto obs_last = env.observe(last);
  std::vector<CertVerdict> found;
  auto point = lyapunov_check(v, obs_last, last, nullptr, env, zero_tol);
  if (point.kind != VerdictKind::None) found.push_back(point);
  if (prefix.size() >= 2) {
    const SystemState& prev = prefix[prefix.size() - 2];
    const auto obs_prev = env.observe(prev);
    LyapunovSample s;
    s.value = v.value(obs_prev);
    s.next_value = v.value(obs_last);
    s.dt = last.timestamp - prev.timestamp;
    s.goal = env.in_goal(prev);
    auto c = classify_lyapunov(s, prev, zero_tol);
    if (c.mask & bit(VerdictKind::DecreasingCond)) {
      CertVerdict d;
      d.kind = VerdictKind::DecreasingCond;
      d.state = prev;
      d.detail = (*s.next_value - s.value) / s.dt;
      d.mask = bit(VerdictKind::DecreasingCond);
      found.push_back(d);
    }
  }
  return detail::verdict_from(std::move(found));
}

/// Property-only monitor: flags exactly when the newest state is unsafe.
inline MonitorVerdict baseline_monitor(const Trajectory& prefix, const Environment& env) {
  detail::require_prefix(prefix);
  const SystemState& last = prefix.back();
  const double c = env.clearance(last);
  MonitorVerdict m;
  if (c < 0.0) {
    m.flagged = true;
    m.cause.kind = VerdictKind::PropertyUnsafe;
    m.cause.state = last;
    m.cause.detail = c;
    m.cause.mask = bit(VerdictKind::PropertyUnsafe);
  }
  return m;
}

/// Warning when any estimated time falls below its threshold.
inline bool predpm_verdict(const PredAssessment& a, const PredThresholds& th) {
  return a.v_u < th.xi_u || a.v_s < th.xi_s || a.v_n < th.xi_n;
}

}  // namespace certrepair
