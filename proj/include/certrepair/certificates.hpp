#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "certrepair/environment.hpp"
#include "certrepair/mlp.hpp"

namespace certrepair {

/// Control policy: action = bound * tanh(net(obs)), so outputs never leave the action box.
struct PolicyFn {
  Mlp net;
  std::vector<double> action_bound;

  struct Evaluation {
    std::vector<double> action;
    ForwardResult forward;
  };

  std::vector<double> act(std::span<const double> obs) const {
    auto raw = evaluate(net, obs);
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = action_bound[i] * std::tanh(raw[i]);
    return raw;
  }

  Evaluation act_with_cache(std::span<const double> obs) const {
    Evaluation e;
    e.forward = forward(net, obs);
    e.action.resize(e.forward.output.size());
    for (std::size_t i = 0; i < e.action.size(); ++i) e.action[i] = action_bound[i] * std::tanh(e.forward.output[i]);
    return e;
  }

  /// Chains dL/daction through the tanh squashing into the network; returns dL/dobs.
  std::vector<double> backward(const Evaluation& e, std::span<const double> action_grad, MlpGradients* acc) const {
    std::vector<double> g(action_grad.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double t = std::tanh(e.forward.output[i]);
      g[i] = action_grad[i] * action_bound[i] * (1.0 - t * t);
    }
    return backward_accumulate(net, e.forward.cache, g, acc);
  }
};

struct BarrierFn {
  Mlp net;
  double value(std::span<const double> obs) const { return evaluate_scalar(net, obs); }
};

/// Lyapunov candidate; networks built here use the squared output so V >= 0 holds structurally.
struct LyapunovFn {
  Mlp net;
  double value(std::span<const double> obs) const { return evaluate_scalar(net, obs); }
};

inline std::vector<std::size_t> layer_dims_with(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<std::size_t> dims{in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  return dims;
}

inline PolicyFn make_policy(const Environment& env, const std::vector<std::size_t>& hidden, HiddenActivation act,
                            Rng& rng) {
  PolicyFn p{Mlp::random(layer_dims_with(env.observation_dim(), hidden, env.action_dim()), act,
                         OutputTransform::identity, rng),
             std::vector<double>(env.action_bound().begin(), env.action_bound().end())};
  return p;
}

inline BarrierFn make_barrier(const Environment& env, const std::vector<std::size_t>& hidden, HiddenActivation act,
                              Rng& rng) {
  return {Mlp::random(layer_dims_with(env.observation_dim(), hidden, 1), act, OutputTransform::identity, rng)};
}

inline LyapunovFn make_lyapunov(const Environment& env, const std::vector<std::size_t>& hidden, HiddenActivation act,
                                Rng& rng) {
  return {Mlp::random(layer_dims_with(env.observation_dim(), hidden, 1), act, OutputTransform::non_negative, rng)};
}

// ---------------------------------------------------------------------------

enum class VerdictKind {
  None = 0,
  PropertyUnsafe,
  InitCond,
  SafetyCond,
  NonDecCond,
  ZeroGoalCond,
  PositivityCond,
  DecreasingCond,
};

inline constexpr std::size_t kVerdictKindCount = 8;

inline std::string to_string(VerdictKind k) {
  switch (k) {
    case VerdictKind::None: return "none";
    case VerdictKind::PropertyUnsafe: return "property";
    case VerdictKind::InitCond: return "init";
    case VerdictKind::SafetyCond: return "safety";
    case VerdictKind::NonDecCond: return "nondec";
    case VerdictKind::ZeroGoalCond: return "zero_goal";
    case VerdictKind::PositivityCond: return "positivity";
    case VerdictKind::DecreasingCond: return "decreasing";
  }
  return "unknown";
}

inline unsigned bit(VerdictKind k) { return 1u << static_cast<unsigned>(k); }

struct CertVerdict {
  VerdictKind kind = VerdictKind::None;
  SystemState state;
  double detail = 0.0;  // the violating quantity for `kind`
  unsigned mask = 0;    // every condition that failed, one bit per VerdictKind
};

/// Forward-difference Lie derivative along an observed step.
inline double lie_derivative_fd(double value_n, double value_n1, double t_n, double t_n1) {
  if (!(t_n1 > t_n)) throw std::invalid_argument("lie_derivative_fd: time points must be strictly increasing");
  return (value_n1 - value_n) / (t_n1 - t_n);
}

/// Constants of the finite-difference error bound. `lip_b`/`lip_f` are L_B and L_f;
/// `bound_b`/`bound_f` are the constants C_B and C_f that appear alongside them.
struct LieApproxConfig {
  double dt = 0.1;
  double bound_b = 1.0;
  double bound_f = 1.0;
  double lip_b = 1.0;
  double lip_f = 1.0;
};

/// eps = dt/2 * (C_B L_f + C_f L_B) * C_f, taken verbatim with four independent constants.
inline double lie_error_bound(const LieApproxConfig& c) {
  return 0.5 * c.dt * (c.bound_b * c.lip_f + c.bound_f * c.lip_b) * c.bound_f;
}

/// Scalar facts about one observed state and, when available, its successor.
struct BarrierSample {
  double value = 0.0;
  std::optional<double> next_value;
  double dt = 0.0;
  bool unsafe = false;
  bool initial = false;
  double clearance = 0.0;
};

/// Applies the barrier conditions in the order property, init, safety, non-decreasing.
inline CertVerdict classify_barrier(const BarrierSample& s, const SystemState& state) {
  CertVerdict v;
  v.state = state;
  auto raise = [&](VerdictKind k, double detail) {
    v.mask |= bit(k);
    if (v.kind == VerdictKind::None) {
      v.kind = k;
      v.detail = detail;
    }
  };
  if (s.unsafe) raise(VerdictKind::PropertyUnsafe, s.clearance);
  if (s.initial && s.value < 0.0) raise(VerdictKind::InitCond, s.value);
  if (s.value < 0.0) raise(VerdictKind::SafetyCond, s.value);
  if (s.next_value && s.value >= 0.0) {
    const double lie = (*s.next_value - s.value) / s.dt;
    if (lie + s.value < 0.0) raise(VerdictKind::NonDecCond, lie + s.value);
  }
  return v;
}

struct LyapunovSample {
  double value = 0.0;
  std::optional<double> next_value;
  double dt = 0.0;
  bool goal = false;
};

inline CertVerdict classify_lyapunov(const LyapunovSample& s, const SystemState& state, double zero_tol) {
  CertVerdict v;
  v.state = state;
  auto raise = [&](VerdictKind k, double detail) {
    v.mask |= bit(k);
    if (v.kind == VerdictKind::None) {
      v.kind = k;
      v.detail = detail;
    }
  };
  if (s.goal && std::abs(s.value) > zero_tol) raise(VerdictKind::ZeroGoalCond, s.value);
  if (s.value < 0.0) raise(VerdictKind::PositivityCond, s.value);
  if (s.next_value && !s.goal && s.value > 0.0) {
    const double lie = (*s.next_value - s.value) / s.dt;
    if (lie >= 0.0) raise(VerdictKind::DecreasingCond, lie);
  }
  return v;
}

/// Observation of the state one monitoring interval later.
struct Successor {
  std::span<const double> obs;
  double timestamp = 0.0;
};

inline CertVerdict barrier_check(const BarrierFn& b, std::span<const double> obs_n, const SystemState& x_n,
                                 const Successor* next, const Environment& env) {
  BarrierSample s;
  s.value = b.value(obs_n);
  if (next != nullptr) {
    s.next_value = b.value(next->obs);
    s.dt = next->timestamp - x_n.timestamp;
    if (!(s.dt > 0.0)) throw std::invalid_argument("barrier_check: successor must be later than x_n");
  }
  s.clearance = env.clearance(x_n);
  s.unsafe = s.clearance < 0.0;
  s.initial = env.in_initial(x_n);
  return classify_barrier(s, x_n);
}

inline CertVerdict lyapunov_check(const LyapunovFn& v, std::span<const double> obs_n, const SystemState& x_n,
                                  const Successor* next, const Environment& env, double zero_tol = 1e-3) {
  LyapunovSample s;
  s.value = v.value(obs_n);
  if (next != nullptr) {
    s.next_value = v.value(next->obs);
    s.dt = next->timestamp - x_n.timestamp;
    if (!(s.dt > 0.0)) throw std::invalid_argument("lyapunov_check: successor must be later than x_n");
  }
  s.goal = env.in_goal(x_n);
  return classify_lyapunov(s, x_n, zero_tol);
}

// ---------------------------------------------------------------------------
// Model files: the network JSON tagged with a role.

inline nlohmann::json to_json(const PolicyFn& p) {
  auto j = to_json(p.net);
  j["role"] = "policy";
  j["action_bound"] = p.action_bound;
  return j;
}

inline nlohmann::json to_json(const BarrierFn& b) {
  auto j = to_json(b.net);
  j["role"] = "barrier";
  return j;
}

inline nlohmann::json to_json(const LyapunovFn& v) {
  auto j = to_json(v.net);
  j["role"] = "lyapunov";
  return j;
}

inline void expect_role(const nlohmann::json& j, const std::string& role) {
  const auto found = j.value("role", std::string{});
  if (found != role) throw std::invalid_argument("model file has role '" + found + "', expected '" + role + "'");
}

inline PolicyFn policy_from_json(const nlohmann::json& j) {
  expect_role(j, "policy");
  PolicyFn p{mlp_from_json(j), j.at("action_bound").get<std::vector<double>>()};
  if (p.action_bound.size() != p.net.output_dim()) throw std::invalid_argument("policy action_bound size mismatch");
  return p;
}

inline BarrierFn barrier_from_json(const nlohmann::json& j) {
  expect_role(j, "barrier");
  BarrierFn b{mlp_from_json(j)};
  if (b.net.output_dim() != 1) throw std::invalid_argument("barrier network must have one output");
  return b;
}

inline LyapunovFn lyapunov_from_json(const nlohmann::json& j) {
  expect_role(j, "lyapunov");
  LyapunovFn v{mlp_from_json(j)};
  if (v.net.output_dim() != 1) throw std::invalid_argument("lyapunov network must have one output");
  return v;
}

}  // namespace certrepair
