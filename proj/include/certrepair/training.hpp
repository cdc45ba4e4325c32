#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "certrepair/adam.hpp"
#include "certrepair/certificates.hpp"
#include "certrepair/environment.hpp"
#include "certrepair/random.hpp"

namespace certrepair {

/// One observed state with everything the losses need. For samples that only enter the
/// pointwise terms, `next_obs` is empty.
///
/// The successor is linearized in the action so the non-decreasing and decreasing terms
/// give policy gradients without differentiating the black box:
///   obs'(theta) ~= next_obs + action_jacobian * (pi_theta(obs) - action).
/// `action_jacobian` has shape (obs_dim, action_dim) and is estimated with extra black-box
/// steps; an empty jacobian keeps the stored successor fixed.
struct TransitionSample {
  SystemState state;
  std::vector<double> obs;
  std::vector<double> next_obs;
  double dt = 0.0;
  std::vector<double> action;
  DenseArray action_jacobian;
  std::vector<double> nominal;  // reference action for the imitation term

  bool has_successor() const { return !next_obs.empty(); }
};

/// Black-box step of one monitoring interval from `state` under the policy.
inline SystemState one_step_successor(Environment& env, const SystemState& state, const PolicyFn& policy) {
  env.reset(state, ResetCheck::allow_any);
  const auto obs = env.observe(state);
  const auto u = policy.act(obs);
  return env.step(u, env.monitor_dt());
}

/// d obs(x') / d u by one-sided differences of black-box steps, stepping toward the
/// interior of the action box.
inline DenseArray estimate_action_jacobian(Environment& env, const SystemState& state, std::span<const double> action,
                                           std::span<const double> next_obs, double h = 1e-4) {
  const std::size_t m = action.size();
  DenseArray jac({next_obs.size(), m});
  std::vector<double> u(action.begin(), action.end());
  for (std::size_t i = 0; i < m; ++i) {
    const double bound = env.action_bound()[i];
    const double step = u[i] + h <= bound ? h : -h;
    u[i] = action[i] + step;
    env.reset(state, ResetCheck::allow_any);
    const auto perturbed = env.observe(env.step(u, env.monitor_dt()));
    for (std::size_t r = 0; r < next_obs.size(); ++r) jac(r, i) = (perturbed[r] - next_obs[r]) / step;
    u[i] = action[i];
  }
  return jac;
}

/// Records a transition from `state` under the policy. Without the action Jacobian the sample
/// sends no gradient to the policy through its successor.
inline TransitionSample make_transition(Environment& env, const SystemState& state, const PolicyFn& policy,
                                        bool with_jacobian = true) {
  TransitionSample t;
  t.state = state;
  t.obs = env.observe(state);
  t.action = policy.act(t.obs);
  t.nominal = env.nominal_action(state);
  t.dt = env.monitor_dt();
  env.reset(state, ResetCheck::allow_any);
  t.next_obs = env.observe(env.step(t.action, t.dt));
  if (with_jacobian) t.action_jacobian = estimate_action_jacobian(env, state, t.action, t.next_obs);
  return t;
}

/// Transition whose successor was observed during a rollout.
inline TransitionSample make_transition(Environment& env, const SystemState& state, std::span<const double> action,
                                        const SystemState& successor, bool with_jacobian = true) {
  TransitionSample t;
  t.state = state;
  t.obs = env.observe(state);
  t.action.assign(action.begin(), action.end());
  t.nominal = env.nominal_action(state);
  t.dt = successor.timestamp - state.timestamp;
  t.next_obs = env.observe(successor);
  if (with_jacobian) t.action_jacobian = estimate_action_jacobian(env, state, t.action, t.next_obs);
  return t;
}

inline TransitionSample make_point_sample(const Environment& env, const SystemState& state) {
  TransitionSample t;
  t.state = state;
  t.obs = env.observe(state);
  t.nominal = env.nominal_action(state);
  return t;
}

struct BarrierDataset {
  std::vector<TransitionSample> d_init;
  std::vector<TransitionSample> d_safe;
  std::vector<TransitionSample> d_nondec;

  bool empty() const { return d_init.empty() && d_safe.empty() && d_nondec.empty(); }
};

struct LyapunovDataset {
  std::vector<TransitionSample> d_goal;
  std::vector<TransitionSample> d_decrease;

  bool empty() const { return d_goal.empty() && d_decrease.empty(); }
};

/// Per-term loss values. Terms that were not evaluated stay 0.
struct LossTerms {
  double init = 0.0;
  double safe = 0.0;
  double nondec = 0.0;
  double goal = 0.0;
  double decrease = 0.0;
  double imitation = 0.0;

  double total() const { return init + safe + nondec + goal + decrease + imitation; }

  void add(const LossTerms& o, double s = 1.0) {
    init += s * o.init;
    safe += s * o.safe;
    nondec += s * o.nondec;
    goal += s * o.goal;
    decrease += s * o.decrease;
    imitation += s * o.imitation;
  }
};

struct LossResult {
  LossTerms terms;
  MlpGradients policy_grad;
  MlpGradients cert_grad;

  double value() const { return terms.total(); }
};

using SampleRefs = std::vector<const TransitionSample*>;

inline SampleRefs refs_of(const std::vector<TransitionSample>& v) {
  SampleRefs r;
  r.reserve(v.size());
  for (const auto& s : v) r.push_back(&s);
  return r;
}

/// Hinge offsets. With all offsets 0 the losses are exactly the condition-violation
/// penalties; a positive offset asks for strict satisfaction by that amount, which rules
/// out the degenerate B = 0 / constant-V minimizers of the zero-offset losses.
struct LossMargins {
  double barrier = 0.0;
  double lyapunov = 0.0;
};

namespace detail {

/// Successor observation under the current policy, plus what is needed to push a
/// gradient on it back into the policy.
struct LinearizedSuccessor {
  std::vector<double> obs;
  std::optional<PolicyFn::Evaluation> eval;
};

inline LinearizedSuccessor linearized_successor(const TransitionSample& s, const PolicyFn* policy) {
  LinearizedSuccessor out;
  out.obs = s.next_obs;
  if (policy == nullptr || s.action_jacobian.size() == 0) return out;
  out.eval = policy->act_with_cache(s.obs);
  const auto& jac = s.action_jacobian;
  const std::size_t m = jac.cols();
  for (std::size_t r = 0; r < out.obs.size(); ++r) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) acc += jac(r, i) * (out.eval->action[i] - s.action[i]);
    out.obs[r] += acc;
  }
  return out;
}

/// Adds d/dtheta of coeff * C(obs') given dC/dobs' at the linearized successor.
inline void push_to_policy(const TransitionSample& s, const LinearizedSuccessor& succ, std::span<const double> grad_obs,
                           double coeff, const PolicyFn& policy, MlpGradients& acc) {
  if (!succ.eval) return;
  const auto& jac = s.action_jacobian;
  std::vector<double> g_action(jac.cols(), 0.0);
  for (std::size_t r = 0; r < jac.rows(); ++r) {
    for (std::size_t i = 0; i < jac.cols(); ++i) g_action[i] += coeff * grad_obs[r] * jac(r, i);
  }
  policy.backward(*succ.eval, g_action, &acc);
}

inline double scalar_with_grad(const Mlp& net, std::span<const double> obs, ForwardCache& cache) {
  auto fwd = forward(net, obs);
  cache = std::move(fwd.cache);
  return fwd.output[0];
}

}  // namespace detail

/// Barrier loss on explicit sample lists: mean max(m - B) over init, mean max(m + B) over
/// safe, mean max(m - (LB + B)) over nondec, each clipped at 0. Gradients reach the policy only through the
/// linearized successor of the nondec term; pass `policy = nullptr` to skip them.
inline LossResult loss_barrier(const PolicyFn* policy, const BarrierFn& b, const SampleRefs& d_init,
                               const SampleRefs& d_safe, const SampleRefs& d_nondec, double margin = 0.0) {
  LossResult res;
  res.cert_grad = MlpGradients::zeros_like(b.net);
  if (policy != nullptr) res.policy_grad = MlpGradients::zeros_like(policy->net);
  ForwardCache cache;

  if (!d_init.empty()) {
    const double w = 1.0 / static_cast<double>(d_init.size());
    for (const auto* s : d_init) {
      const double v = detail::scalar_with_grad(b.net, s->obs, cache);
      if (!(margin - v <= 0.0)) {  // NaN falls through so divergence is detected
        res.terms.init += (margin - v) * w;
        const double g = -w;
        backward_accumulate(b.net, cache, std::span<const double>(&g, 1), &res.cert_grad);
      }
    }
  }
  if (!d_safe.empty()) {
    const double w = 1.0 / static_cast<double>(d_safe.size());
    for (const auto* s : d_safe) {
      const double v = detail::scalar_with_grad(b.net, s->obs, cache);
      if (!(margin + v <= 0.0)) {
        res.terms.safe += (margin + v) * w;
        backward_accumulate(b.net, cache, std::span<const double>(&w, 1), &res.cert_grad);
      }
    }
  }
  if (!d_nondec.empty()) {
    const double w = 1.0 / static_cast<double>(d_nondec.size());
    ForwardCache next_cache;
    for (const auto* s : d_nondec) {
      if (!s->has_successor()) throw std::invalid_argument("loss_barrier: nondec sample without successor");
      const auto succ = detail::linearized_successor(*s, policy);
      const double v = detail::scalar_with_grad(b.net, s->obs, cache);
      const double v1 = detail::scalar_with_grad(b.net, succ.obs, next_cache);
      const double cond = (v1 - v) / s->dt + v;
      if (margin - cond <= 0.0) continue;  // NaN is kept
      res.terms.nondec += (margin - cond) * w;
      // d(-margin)/dv = 1/dt - 1, d(-margin)/dv1 = -1/dt
      const double gv = w * (1.0 / s->dt - 1.0);
      const double gv1 = -w / s->dt;
      backward_accumulate(b.net, cache, std::span<const double>(&gv, 1), &res.cert_grad);
      const auto g_obs = backward_accumulate(b.net, next_cache, std::span<const double>(&gv1, 1), &res.cert_grad);
      if (policy != nullptr) detail::push_to_policy(*s, succ, g_obs, 1.0, *policy, res.policy_grad);
    }
  }
  return res;
}

inline LossResult loss_barrier(const PolicyFn* policy, const BarrierFn& b, const BarrierDataset& data,
                               double margin = 0.0) {
  return loss_barrier(policy, b, refs_of(data.d_init), refs_of(data.d_safe), refs_of(data.d_nondec), margin);
}

/// Lyapunov loss: mean V^2 over goal samples, mean max(LV + m, 0) + max(-V, 0) over the rest.
inline LossResult loss_lyapunov(const PolicyFn* policy, const LyapunovFn& v, const SampleRefs& d_goal,
                                const SampleRefs& d_decrease, double margin = 0.0) {
  LossResult res;
  res.cert_grad = MlpGradients::zeros_like(v.net);
  if (policy != nullptr) res.policy_grad = MlpGradients::zeros_like(policy->net);
  ForwardCache cache;

  if (!d_goal.empty()) {
    const double w = 1.0 / static_cast<double>(d_goal.size());
    for (const auto* s : d_goal) {
      const double val = detail::scalar_with_grad(v.net, s->obs, cache);
      res.terms.goal += val * val * w;
      const double g = 2.0 * val * w;
      backward_accumulate(v.net, cache, std::span<const double>(&g, 1), &res.cert_grad);
    }
  }
  if (!d_decrease.empty()) {
    const double w = 1.0 / static_cast<double>(d_decrease.size());
    ForwardCache next_cache;
    for (const auto* s : d_decrease) {
      if (!s->has_successor()) throw std::invalid_argument("loss_lyapunov: decrease sample without successor");
      const auto succ = detail::linearized_successor(*s, policy);
      const double val = detail::scalar_with_grad(v.net, s->obs, cache);
      const double val1 = detail::scalar_with_grad(v.net, succ.obs, next_cache);
      const double lie = (val1 - val) / s->dt;
      double gv = 0.0;
      double gv1 = 0.0;
      if (!(lie + margin <= 0.0)) {
        res.terms.decrease += (lie + margin) * w;
        gv -= w / s->dt;
        gv1 += w / s->dt;
      }
      if (!(val >= 0.0)) {
        res.terms.decrease += -val * w;
        gv -= w;
      }
      if (gv != 0.0) backward_accumulate(v.net, cache, std::span<const double>(&gv, 1), &res.cert_grad);
      if (gv1 != 0.0) {
        const auto g_obs = backward_accumulate(v.net, next_cache, std::span<const double>(&gv1, 1), &res.cert_grad);
        if (policy != nullptr) detail::push_to_policy(*s, succ, g_obs, 1.0, *policy, res.policy_grad);
      }
    }
  }
  return res;
}

inline LossResult loss_lyapunov(const PolicyFn* policy, const LyapunovFn& v, const LyapunovDataset& data,
                                double margin = 0.0) {
  return loss_lyapunov(policy, v, refs_of(data.d_goal), refs_of(data.d_decrease), margin);
}

/// weight * mean ||pi(obs) - nominal||^2; keeps the policy goal-directed while the
/// certificate terms shape it near obstacles.
inline double imitation_loss(const PolicyFn& policy, const SampleRefs& samples, double weight, MlpGradients& acc) {
  if (samples.empty() || weight == 0.0) return 0.0;
  const double w = weight / static_cast<double>(samples.size());
  double total = 0.0;
  std::vector<double> g;
  for (const auto* s : samples) {
    const auto e = policy.act_with_cache(s->obs);
    g.assign(e.action.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double diff = e.action[i] - s->nominal[i];
      total += w * diff * diff;
      g[i] = 2.0 * w * diff;
    }
    policy.backward(e, g, &acc);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Training loop

struct NetworkConfig {
  std::vector<std::size_t> policy_hidden{32, 32};
  std::vector<std::size_t> cert_hidden{32, 32};
  HiddenActivation activation = HiddenActivation::tanh;
};

struct TrainConfig {
  int epochs = 30;
  std::size_t batch_size = 256;
  double lr_policy = 1e-3;
  double lr_cert = 1e-3;
  std::size_t rollouts = 50;
  std::size_t uniform_samples = 10000;
  double imitation_weight = 1.0;
  LossMargins margins;
  bool with_lyapunov = false;
  std::uint64_t seed = 0;
};

struct CertifiedNetworks {
  PolicyFn policy;
  BarrierFn barrier;
  std::optional<LyapunovFn> lyapunov;
};

/// Everything one optimization run sees. `imitation` holds samples for the imitation term.
struct TrainingData {
  BarrierDataset barrier;
  LyapunovDataset lyapunov;
  std::vector<TransitionSample> imitation;
};

struct CurveRow {
  int epoch = 0;
  LossTerms terms;
};

struct OptimizeOptions {
  int epochs = 0;
  std::size_t batch_size = 256;
  double lr_policy = 1e-3;
  double lr_cert = 1e-3;
  double imitation_weight = 1.0;
  LossMargins margins;
  bool freeze_policy = false;
  std::uint64_t seed = 0;
};

struct OptimizeResult {
  std::vector<CurveRow> curve;
  bool diverged = false;  // a non-finite loss was hit; networks were reverted to the best epoch
};

namespace detail {

/// Endless shuffled pass over a sample list; reshuffles after each full pass.
class BatchCycler {
 public:
  BatchCycler(const std::vector<TransitionSample>& samples, std::uint64_t seed) : rng_(seed) {
    order_.resize(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) order_[i] = &samples[i];
    rng_.shuffle(order_.begin(), order_.end());
  }

  SampleRefs next(std::size_t batch) {
    SampleRefs out;
    if (order_.empty()) return out;
    const std::size_t n = std::min(batch, order_.size());
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (pos_ == order_.size()) {
        rng_.shuffle(order_.begin(), order_.end());
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

  std::size_t size() const { return order_.size(); }

 private:
  Rng rng_;
  SampleRefs order_;
  std::size_t pos_ = 0;
};

inline bool finite(const LossTerms& t) { return std::isfinite(t.total()); }

}  // namespace detail

/// Minibatch Adam on the barrier loss (+ Lyapunov loss when present) + imitation.
/// Each set is cycled independently; one epoch is enough steps to pass once over the
/// largest set.
inline OptimizeResult optimize(CertifiedNetworks& nets, const TrainingData& data, const OptimizeOptions& opt) {
  OptimizeResult out;
  if (opt.epochs <= 0) return out;
  if (opt.batch_size == 0) throw std::invalid_argument("optimize: batch_size must be positive");

  const std::vector<const std::vector<TransitionSample>*> sets{
      &data.barrier.d_init, &data.barrier.d_safe,    &data.barrier.d_nondec,
      &data.lyapunov.d_goal, &data.lyapunov.d_decrease, &data.imitation};
  std::vector<detail::BatchCycler> cyclers;
  cyclers.reserve(sets.size());
  std::size_t largest = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    cyclers.emplace_back(*sets[i], derive_seed(opt.seed, "batches", i));
    largest = std::max(largest, sets[i]->size());
  }
  if (largest == 0) return out;
  const std::size_t steps = (largest + opt.batch_size - 1) / opt.batch_size;
  const bool use_lyap = nets.lyapunov.has_value();

  AdamState adam_pi(opt.lr_policy);
  AdamState adam_b(opt.lr_cert);
  AdamState adam_v(opt.lr_cert);

  CertifiedNetworks best = nets;
  double best_loss = std::numeric_limits<double>::infinity();

  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    LossTerms epoch_terms;
    bool bad = false;
    for (std::size_t step = 0; step < steps; ++step) {
      const auto b_init = cyclers[0].next(opt.batch_size);
      const auto b_safe = cyclers[1].next(opt.batch_size);
      const auto b_nondec = cyclers[2].next(opt.batch_size);
      const PolicyFn* pol = opt.freeze_policy ? nullptr : &nets.policy;

      auto lb = loss_barrier(pol, nets.barrier, b_init, b_safe, b_nondec, opt.margins.barrier);
      LossTerms terms = lb.terms;
      MlpGradients g_pi = MlpGradients::zeros_like(nets.policy.net);
      if (!opt.freeze_policy) g_pi.add(lb.policy_grad);

      std::optional<LossResult> lv;
      if (use_lyap) {
        const auto b_goal = cyclers[3].next(opt.batch_size);
        const auto b_dec = cyclers[4].next(opt.batch_size);
        lv = loss_lyapunov(pol, *nets.lyapunov, b_goal, b_dec, opt.margins.lyapunov);
        terms.goal = lv->terms.goal;
        terms.decrease = lv->terms.decrease;
        if (!opt.freeze_policy) g_pi.add(lv->policy_grad);
      }
      if (!opt.freeze_policy) {
        const auto b_imit = cyclers[5].next(opt.batch_size);
        terms.imitation = imitation_loss(nets.policy, b_imit, opt.imitation_weight, g_pi);
      }
      if (!detail::finite(terms)) {
        bad = true;
        break;
      }
      epoch_terms.add(terms, 1.0 / static_cast<double>(steps));

      adam_step(nets.barrier.net, lb.cert_grad, adam_b);
      if (use_lyap) adam_step(nets.lyapunov->net, lv->cert_grad, adam_v);
      if (!opt.freeze_policy) adam_step(nets.policy.net, g_pi, adam_pi);
    }
    if (bad) {
      nets = best;
      out.diverged = true;
      break;
    }
    out.curve.push_back({epoch, epoch_terms});
    if (epoch_terms.total() < best_loss) {
      best_loss = epoch_terms.total();
      best = nets;
    }
  }
  return out;
}

/// Rolls the policy out for the full horizon from x0. The trajectory has horizon + 1 points.
inline Trajectory rollout(Environment& env, const PolicyFn& policy, const SystemState& x0, int steps,
                          std::vector<std::vector<double>>* actions = nullptr) {
  env.reset(x0, ResetCheck::allow_any);
  Trajectory traj;
  traj.push_back(x0);
  SystemState x = x0;
  for (int k = 0; k < steps; ++k) {
    const auto u = policy.act(env.observe(x));
    if (actions != nullptr) actions->push_back(u);
    x = env.step(u, env.monitor_dt());
    traj.push_back(x);
  }
  return traj;
}

/// Sorts a labelled state into the sets whose membership it satisfies.
inline void route_training_sample(const Environment& env, TransitionSample sample, TrainingData& data,
                                  bool with_lyapunov, bool imitate = true) {
  const bool initial = env.in_initial(sample.state);
  const bool unsafe = env.in_unsafe(sample.state);
  const bool goal = env.in_goal(sample.state);
  if (initial) data.barrier.d_init.push_back(sample);
  if (unsafe) data.barrier.d_safe.push_back(sample);
  if (with_lyapunov) {
    if (goal) data.lyapunov.d_goal.push_back(sample);
    else data.lyapunov.d_decrease.push_back(sample);
  }
  if (imitate) data.imitation.push_back(sample);
  data.barrier.d_nondec.push_back(std::move(sample));
}

/// Uniform state-space samples labelled with one-step successors under `policy`.
inline TrainingData uniform_training_data(Environment& env, const PolicyFn& policy, std::size_t count,
                                          bool with_lyapunov, Rng& rng) {
  TrainingData data;
  for (const auto& s : env.sample_state_space(count, rng)) {
    route_training_sample(env, make_transition(env, s, policy), data, with_lyapunov);
  }
  return data;
}

/// Adds every transition of `count` on-policy rollouts.
inline void add_rollout_data(Environment& env, const PolicyFn& policy, std::size_t count, std::uint64_t seed,
                             TrainingData& data, bool with_lyapunov) {
  for (std::size_t r = 0; r < count; ++r) {
    Rng rng(derive_seed(seed, "train-rollout", r));
    const auto x0 = env.sample_initial_states(1, rng).front();
    std::vector<std::vector<double>> actions;
    const auto traj = rollout(env, policy, x0, env.horizon_steps(), &actions);
    for (std::size_t k = 0; k + 1 < traj.size(); ++k) {
      route_training_sample(env, make_transition(env, traj[k], actions[k], traj[k + 1]), data, with_lyapunov);
    }
  }
}

struct TrainResult {
  CertifiedNetworks nets;
  std::vector<CurveRow> curve;
  bool warning = false;
};

inline CertifiedNetworks init_networks(const Environment& env, const NetworkConfig& nc, bool with_lyapunov,
                                       std::uint64_t seed) {
  Rng r_pi(derive_seed(seed, "init-policy"));
  Rng r_b(derive_seed(seed, "init-barrier"));
  CertifiedNetworks nets{make_policy(env, nc.policy_hidden, nc.activation, r_pi),
                         make_barrier(env, nc.cert_hidden, nc.activation, r_b), std::nullopt};
  if (with_lyapunov) {
    Rng r_v(derive_seed(seed, "init-lyapunov"));
    nets.lyapunov = make_lyapunov(env, nc.cert_hidden, nc.activation, r_v);
  }
  return nets;
}

/// Joint training from scratch. The first half of the epochs uses uniform samples only;
/// on-policy rollouts of the half-trained policy are then added for the second half.
inline TrainResult train_joint(Environment& env, const TrainConfig& cfg, const NetworkConfig& nc) {
  if (cfg.epochs < 0) throw std::invalid_argument("train_joint: epochs must be >= 0");
  TrainResult res;
  res.nets = init_networks(env, nc, cfg.with_lyapunov, cfg.seed);
  if (cfg.epochs == 0) return res;

  Rng data_rng(derive_seed(cfg.seed, "uniform-data"));
  TrainingData data = uniform_training_data(env, res.nets.policy, cfg.uniform_samples, cfg.with_lyapunov, data_rng);

  OptimizeOptions opt;
  opt.batch_size = cfg.batch_size;
  opt.lr_policy = cfg.lr_policy;
  opt.lr_cert = cfg.lr_cert;
  opt.imitation_weight = cfg.imitation_weight;
  opt.margins = cfg.margins;

  const int first = cfg.epochs / 2;
  opt.epochs = first;
  opt.seed = derive_seed(cfg.seed, "optimize", 0);
  auto r1 = optimize(res.nets, data, opt);
  res.curve = r1.curve;
  res.warning = r1.diverged;
  if (res.warning) return res;

  add_rollout_data(env, res.nets.policy, cfg.rollouts, derive_seed(cfg.seed, "rollouts"), data, cfg.with_lyapunov);
  opt.epochs = cfg.epochs - first;
  opt.seed = derive_seed(cfg.seed, "optimize", 1);
  auto r2 = optimize(res.nets, data, opt);
  for (auto row : r2.curve) {
    row.epoch += first;
    res.curve.push_back(row);
  }
  res.warning = r2.diverged;
  return res;
}

}  // namespace certrepair
