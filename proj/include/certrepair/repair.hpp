#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "certrepair/metrics.hpp"
#include "certrepair/monitors.hpp"
#include "certrepair/predictive.hpp"
#include "certrepair/training.hpp"

namespace certrepair {

enum class MonitorKind { certpm, predpm, baseline };
enum class RepairProblem { joint, cert_only };
enum class PropertyKind { safety, stability };

inline std::string to_string(MonitorKind m) {
  switch (m) {
    case MonitorKind::certpm: return "certpm";
    case MonitorKind::predpm: return "predpm";
    case MonitorKind::baseline: return "baseline";
  }
  return "unknown";
}

inline MonitorKind parse_monitor_kind(const std::string& s) {
  if (s == "certpm") return MonitorKind::certpm;
  if (s == "predpm") return MonitorKind::predpm;
  if (s == "baseline") return MonitorKind::baseline;
  throw std::invalid_argument("unknown monitor: " + s);
}

inline std::string to_string(RepairProblem p) { return p == RepairProblem::joint ? "joint" : "cert-only"; }

inline RepairProblem parse_repair_problem(const std::string& s) {
  if (s == "joint") return RepairProblem::joint;
  if (s == "cert-only" || s == "cert_only") return RepairProblem::cert_only;
  throw std::invalid_argument("unknown repair problem: " + s);
}

inline std::string to_string(PropertyKind p) { return p == PropertyKind::safety ? "safety" : "stability"; }

inline PropertyKind parse_property_kind(const std::string& s) {
  if (s == "safety") return PropertyKind::safety;
  if (s == "stability") return PropertyKind::stability;
  throw std::invalid_argument("unknown property: " + s);
}

struct RepairConfig {
  std::size_t rollouts = 200;
  MonitorKind monitor = MonitorKind::certpm;
  PropertyKind property = PropertyKind::safety;
  PredThresholds thresholds{0.0, 0.0, -1.0};
  SurrogateCfg surrogate;
  RepairProblem problem = RepairProblem::joint;
  int max_rounds = 1;
  int retrain_epochs = 30;
  double replay_ratio = 1.0;
  double replay_on_policy = 0.5;  // share of the replay drawn from the monitored rollouts
  std::size_t batch_size = 256;
  double lr_policy = 1e-3;
  double lr_cert = 1e-3;
  double imitation_weight = 1.0;
  LossMargins margins;
  double zero_tol = 1e-3;
  std::uint64_t seed = 0;
};

struct Violation {
  TransitionSample sample;  // flagged state, its observation and observed successor
  CertVerdict verdict;
  std::size_t rollout = 0;
  std::size_t index = 0;
};

/// One monitored step with its action and observed successor; on-policy replay material.
struct ObservedStep {
  SystemState state;
  std::vector<double> action;
  SystemState successor;
  bool flagged = false;  // harvested as a violation in the same round
};

struct ViolationSet {
  std::vector<Violation> entries;
  std::vector<ObservedStep> steps;  // every monitored step, flagged or not
  std::uint64_t flags_total = 0;  // number of flagged prefixes
  ViolationCounts by_cause{};     // causes of flagged prefixes (plus second conditions)
  std::vector<Trajectory> trajectories;

  bool empty() const { return entries.empty(); }
};

namespace detail {

inline MonitorVerdict run_monitor(const Trajectory& prefix, const CertifiedNetworks& nets, const Environment& env,
                                  const RepairConfig& cfg) {
  if (cfg.property == PropertyKind::stability) {
    if (!nets.lyapunov) throw std::invalid_argument("stability repair needs a Lyapunov network");
    return certpm_stability(prefix, *nets.lyapunov, env, cfg.zero_tol);
  }
  switch (cfg.monitor) {
    case MonitorKind::certpm: return certpm_safety(prefix, nets.barrier, env);
    case MonitorKind::baseline: return baseline_monitor(prefix, env);
    case MonitorKind::predpm: {
      auto m = predpm_monitor(prefix, nets.barrier, env, cfg.surrogate, cfg.thresholds);
      if (!m.flagged) return m;
      // Certificate conditions that already hold at the flagged state are reported as the cause.
      auto cert = certpm_safety(prefix, nets.barrier, env);
      if (cert.flagged && cert.cause.state.timestamp == prefix.back().timestamp) {
        cert.assessment = m.assessment;
        return cert;
      }
      return m;
    }
  }
  return {};
}

}  // namespace detail

/// Monitors `cfg.rollouts` fresh rollouts and harvests every flagged state together with
/// the successor observed in the same rollout. Rollout i uses its own derived stream.
inline ViolationSet collect_violations(Environment& env, const CertifiedNetworks& nets, const RepairConfig& cfg,
                                       std::uint64_t seed) {
  ViolationSet out;
  const int horizon = env.horizon_steps();
  for (std::size_t i = 0; i < cfg.rollouts; ++i) {
    Rng rng(derive_seed(seed, "collect", i));
    const auto x0 = env.sample_initial_states(1, rng).front();
    std::vector<std::vector<double>> actions;
    // One extra step so the last monitored state also has a successor.
    const auto full = rollout(env, nets.policy, x0, horizon + 1, &actions);
    Trajectory monitored;
    std::set<std::size_t> taken;
    std::vector<std::pair<std::size_t, CertVerdict>> flagged;
    for (std::size_t n = 0; n <= static_cast<std::size_t>(horizon); ++n) {
      monitored.push_back(full[n]);
      const auto m = detail::run_monitor(monitored, nets, env, cfg);
      if (!m.flagged) continue;
      ++out.flags_total;
      ++out.by_cause[static_cast<std::size_t>(m.cause.kind)];
      if (m.also) ++out.by_cause[static_cast<std::size_t>(m.also->kind)];
      auto add = [&](const CertVerdict& v) {
        const std::size_t idx = v.kind == VerdictKind::NonDecCond || v.kind == VerdictKind::DecreasingCond ? n - 1 : n;
        if (taken.insert(idx).second) flagged.emplace_back(idx, v);
      };
      add(m.cause);
      if (m.also) add(*m.also);
    }
    for (std::size_t k = 0; k <= static_cast<std::size_t>(horizon); ++k) {
      out.steps.push_back({full[k], actions[k], full[k + 1], taken.count(k) > 0});
    }
    for (auto& [idx, verdict] : flagged) {
      Violation v;
      v.sample = make_transition(env, full[idx], actions[idx], full[idx + 1]);
      v.verdict = verdict;
      v.rollout = i;
      v.index = idx;
      out.entries.push_back(std::move(v));
    }
    out.trajectories.push_back(monitored);
  }
  return out;
}

/// Flagged states split by membership in X_0, X_u and {B >= 0}; a state may land in
/// several sets.
inline BarrierDataset partition_barrier_data(const ViolationSet& v, const Environment& env, const BarrierFn& b) {
  BarrierDataset d;
  for (const auto& e : v.entries) {
    const auto& s = e.sample;
    if (env.in_initial(s.state)) d.d_init.push_back(s);
    if (env.in_unsafe(s.state)) d.d_safe.push_back(s);
    if (b.value(s.obs) >= 0.0) d.d_nondec.push_back(s);
  }
  return d;
}

/// Flagged states split into X_g and its complement.
inline LyapunovDataset partition_lyapunov_data(const ViolationSet& v, const Environment& env) {
  LyapunovDataset d;
  for (const auto& e : v.entries) {
    if (env.in_goal(e.sample.state)) d.d_goal.push_back(e.sample);
    else d.d_decrease.push_back(e.sample);
  }
  return d;
}

enum class RoundStatus { repaired, nothing_to_repair };

struct RoundOutcome {
  RoundStatus status = RoundStatus::nothing_to_repair;
  std::vector<CurveRow> curve;
  bool diverged = false;
};

/// Retrains on the repair sets merged with a replay sample composed like the original
/// training data: fresh uniform state-space samples plus a `replay_on_policy` share of
/// monitored steps (when `on_policy` has any). The replay is `replay_ratio` times the repair
/// data in size. Replay samples carry no action Jacobian, so only the repair sets steer the
/// policy through the certificate losses; replay keeps the certificates in shape. Flagged
/// steps are left out of the imitation term. In cert-only mode the policy is frozen.
inline RoundOutcome repair_round(Environment& env, CertifiedNetworks& nets, const BarrierDataset& barrier_data,
                                 const LyapunovDataset& lyapunov_data, const RepairConfig& cfg, std::uint64_t seed,
                                 const std::vector<ObservedStep>& on_policy = {}) {
  RoundOutcome out;
  if (barrier_data.empty() && lyapunov_data.empty()) return out;
  out.status = RoundStatus::repaired;

  TrainingData data;
  data.barrier = barrier_data;
  data.lyapunov = lyapunov_data;
  const std::size_t repair_size = barrier_data.d_init.size() + barrier_data.d_safe.size() +
                                  barrier_data.d_nondec.size() + lyapunov_data.d_goal.size() +
                                  lyapunov_data.d_decrease.size();
  const auto replay = static_cast<std::size_t>(cfg.replay_ratio * static_cast<double>(repair_size));
  const bool lyap = nets.lyapunov.has_value();
  const std::size_t from_rollouts = std::min(
      on_policy.size(), static_cast<std::size_t>(cfg.replay_on_policy * static_cast<double>(replay)));
  Rng rng(derive_seed(seed, "replay"));
  for (const auto& s : env.sample_state_space(replay - from_rollouts, rng)) {
    route_training_sample(env, make_transition(env, s, nets.policy, false), data, lyap);
  }
  std::vector<std::size_t> order(on_policy.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng pick(derive_seed(seed, "replay-steps"));
  pick.shuffle(order.begin(), order.end());
  for (std::size_t i = 0; i < from_rollouts; ++i) {
    const auto& st = on_policy[order[i]];
    route_training_sample(env, make_transition(env, st.state, st.action, st.successor, false), data, lyap,
                          !st.flagged);
  }

  OptimizeOptions opt;
  opt.epochs = cfg.retrain_epochs;
  opt.batch_size = cfg.batch_size;
  opt.lr_policy = cfg.lr_policy;
  opt.lr_cert = cfg.lr_cert;
  opt.imitation_weight = cfg.imitation_weight;
  opt.margins = cfg.margins;
  opt.freeze_policy = cfg.problem == RepairProblem::cert_only;
  opt.seed = derive_seed(seed, "optimize");
  const Mlp frozen = nets.policy.net;
  auto r = optimize(nets, data, opt);
  if (opt.freeze_policy && !(nets.policy.net == frozen)) {
    throw std::logic_error("repair_round: policy changed in cert-only mode");
  }
  out.curve = std::move(r.curve);
  out.diverged = r.diverged;
  return out;
}

struct RoundReport {
  int round = 0;
  std::uint64_t flags_total = 0;
  ViolationCounts flags_by_cause{};
  double sr = 0.0;
  double br = 0.0;
  double ndr = 0.0;
  std::optional<double> dr;
  double wall_time = 0.0;
  RoundStatus status = RoundStatus::nothing_to_repair;
};

struct RepairResult {
  CertifiedNetworks nets;
  std::vector<RoundReport> rounds;
};

/// Metrics of already monitored rollouts.
inline EvalReport evaluate_trajectories(const std::vector<Trajectory>& trajs, const Environment& env,
                                        const CertifiedNetworks& nets) {
  std::vector<TrajectoryMetrics> per;
  ViolationCounts counts{};
  std::uint64_t observations = 0;
  const LyapunovFn* v = nets.lyapunov ? &*nets.lyapunov : nullptr;
  for (const auto& t : trajs) {
    per.push_back(trajectory_metrics(t, env, nets.barrier, v));
    observations += t.size();
  }
  return aggregate(std::move(per), counts, observations);
}

/// Collect, partition, retrain; stops once a round's rollouts raise no flag or after
/// `max_rounds`. Each round samples new initial states.
inline RepairResult repair_loop(Environment& env, CertifiedNetworks nets, const RepairConfig& cfg) {
  if (cfg.max_rounds < 1) throw std::invalid_argument("repair_loop: max_rounds must be >= 1");
  if (cfg.rollouts < 1) throw std::invalid_argument("repair_loop: rollouts must be >= 1");
  RepairResult res;
  for (int round = 1; round <= cfg.max_rounds; ++round) {
    const auto start = std::chrono::steady_clock::now();
    const std::uint64_t round_seed = derive_seed(cfg.seed, "round", static_cast<std::uint64_t>(round));
    const auto violations = collect_violations(env, nets, cfg, round_seed);

    RoundReport row;
    row.round = round;
    row.flags_total = violations.flags_total;
    row.flags_by_cause = violations.by_cause;
    const auto metrics = evaluate_trajectories(violations.trajectories, env, nets);
    row.sr = metrics.sr;
    row.br = metrics.br;
    row.ndr = metrics.ndr;
    row.dr = metrics.dr;

    if (violations.flags_total > 0) {
      BarrierDataset bd;
      LyapunovDataset ld;
      if (cfg.property == PropertyKind::stability) ld = partition_lyapunov_data(violations, env);
      else bd = partition_barrier_data(violations, env, nets.barrier);
      row.status = repair_round(env, nets, bd, ld, cfg, round_seed, violations.steps).status;
    }
    row.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    res.rounds.push_back(row);
    if (violations.flags_total == 0) break;
  }
  res.nets = std::move(nets);
  return res;
}

}  // namespace certrepair
