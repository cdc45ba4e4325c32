#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "certrepair/metrics.hpp"

using namespace certrepair;

namespace {

std::vector<double> times_of(std::size_t n, double dt) {
  std::vector<double> t;
  for (std::size_t k = 0; k < n; ++k) t.push_back(dt * static_cast<double>(k));
  return t;
}

Environment one_obstacle_env() {
  auto cfg = drone2d_defaults();
  cfg.obstacles = {ObstacleTrack({{5.0, 5.0}}, 1.0, 0.4)};
  return Environment(cfg);
}

// Straight line through the obstacle centre at unit speed, sampled every dt.
Trajectory straight_line(double dt, double duration) {
  Trajectory t;
  const auto n = static_cast<std::size_t>(std::llround(duration / dt));
  for (std::size_t k = 0; k <= n; ++k) {
    const double time = dt * static_cast<double>(k);
    t.push_back({{2.0 + time, 5.0, 1.0, 0.0}, time});
  }
  return t;
}

}  // namespace

TEST(SafetyRate, CountsUnsafeObservations) {
  const auto env = one_obstacle_env();
  Trajectory t;
  for (int k = 0; k < 11; ++k) {
    const double x = (k == 3 || k == 4) ? 5.0 : 1.0;
    t.push_back({{x, 5.0, 0.0, 0.0}, 0.1 * k});
  }
  EXPECT_NEAR(safety_rate(t, env), 9.0 / 11.0, 1e-12);
  Trajectory safe;
  safe.push_back({{1.0, 1.0, 0.0, 0.0}, 0.0});
  EXPECT_EQ(safety_rate(safe, env), 1.0);
  EXPECT_THROW(safety_rate(Trajectory{}, env), std::invalid_argument);
}

TEST(SafetyRate, ConvergesToTheTimeIntegral) {
  // Unsafe while |x - 5| < 0.4 + 0.1, i.e. for 1 s out of 6.
  const auto env = one_obstacle_env();
  const double exact = 1.0 - 1.0 / 6.0;
  double prev_err = 1.0;
  for (double dt : {0.1, 0.01, 0.001}) {
    const double err = std::abs(safety_rate(straight_line(dt, 6.0), env) - exact);
    EXPECT_LE(err, 2 * dt / 6.0 + 1e-12);
    EXPECT_LE(err, prev_err + 1e-12);
    prev_err = err;
  }
}

TEST(BarrierRate, Fractions) {
  const std::vector<double> in{0.0, 1.0, 2.0};
  const std::vector<double> out{-1.0, -0.1};
  const std::vector<double> mixed{0.3, -0.2, 0.0, -1e-9, 4.0};
  EXPECT_EQ(barrier_rate(in), 1.0);
  EXPECT_EQ(barrier_rate(out), 0.0);
  EXPECT_NEAR(barrier_rate(mixed), 3.0 / 5.0, 1e-12);
  EXPECT_THROW(barrier_rate(std::vector<double>{}), std::invalid_argument);
}

TEST(NondecRate, Cases) {
  const auto t = times_of(7, 0.1);
  const std::vector<double> constant(7, 0.5);
  EXPECT_EQ(nondec_rate(constant, t).value, 1.0);
  // B(t) = 1 - 2t: LB + B = -2 + B < 0 while B < 2.
  std::vector<double> decay;
  for (double x : t) decay.push_back(1.0 - 2.0 * x);
  std::vector<double> decay_pos(decay.begin(), decay.begin() + 5);
  std::vector<double> t5(t.begin(), t.begin() + 5);
  EXPECT_EQ(nondec_rate(decay_pos, t5).value, 0.0);
  // Pairs from B >= 0: ok, fail, fail, (skip), ok, ok -> 3 of 5.
  const std::vector<double> mixed{1.0, 0.95, 0.5, -0.1, 0.2, 0.3, 0.29};
  const auto r = nondec_rate(mixed, t);
  EXPECT_NEAR(r.value, 3.0 / 5.0, 1e-12);
  EXPECT_FALSE(r.empty);
  const std::vector<double> negative{-1.0, -0.5, -0.2};
  const auto e = nondec_rate(negative, times_of(3, 0.1));
  EXPECT_TRUE(e.empty);
  EXPECT_EQ(e.value, 1.0);
}

TEST(DecreasingRate, Cases) {
  const auto t = times_of(5, 0.1);
  const std::vector<bool> none(5, false);
  EXPECT_EQ(decreasing_rate(std::vector<double>{1.0, 0.9, 0.8, 0.7, 0.6}, t, none).value, 1.0);
  EXPECT_EQ(decreasing_rate(std::vector<double>{0.5, 0.5, 0.5, 0.5, 0.5}, t, none).value, 0.0);
  // down ok, up fail, down ok, flat fail; the goal point at index 1 removes the failing up pair.
  const std::vector<double> mixed{1.0, 0.9, 0.95, 0.8, 0.8};
  EXPECT_NEAR(decreasing_rate(mixed, t, none).value, 0.5, 1e-12);
  EXPECT_NEAR(decreasing_rate(mixed, t, {false, true, false, false, false}).value, 2.0 / 3.0, 1e-12);
  const auto all_goal = decreasing_rate(mixed, t, std::vector<bool>(5, true));
  EXPECT_TRUE(all_goal.empty);
}

TEST(Evaluate, SingleRolloutEqualsItsTrajectory) {
  Environment env(drone2d_defaults());
  const auto nets = init_networks(env, NetworkConfig{{8}, {8}, HiddenActivation::tanh}, true, 1);
  const auto r = evaluate(env, nets.policy, nets.barrier, &*nets.lyapunov, 1, 17);
  ASSERT_EQ(r.per_trajectory.size(), 1u);
  EXPECT_EQ(r.sr, r.per_trajectory[0].sr);
  EXPECT_EQ(r.br, r.per_trajectory[0].br);
  EXPECT_EQ(r.ndr, r.per_trajectory[0].ndr.value);
  EXPECT_EQ(*r.dr, r.per_trajectory[0].dr->value);
  EXPECT_EQ(r.observations, static_cast<std::uint64_t>(env.horizon_steps() + 1));
}

TEST(Evaluate, DeterministicAndAveraged) {
  Environment env(drone2d_defaults());
  const auto nets = init_networks(env, NetworkConfig{{8}, {8}, HiddenActivation::tanh}, false, 2);
  const auto a = evaluate(env, nets.policy, nets.barrier, nullptr, 6, 3);
  const auto b = evaluate(env, nets.policy, nets.barrier, nullptr, 6, 3);
  EXPECT_EQ(a.sr, b.sr);
  EXPECT_EQ(a.violations, b.violations);
  EXPECT_FALSE(a.dr.has_value());
  double sr = 0, br = 0, ndr = 0;
  for (const auto& m : a.per_trajectory) {
    sr += m.sr;
    br += m.br;
    ndr += m.ndr.value;
  }
  EXPECT_NEAR(a.sr, sr / 6, 1e-12);
  EXPECT_NEAR(a.br, br / 6, 1e-12);
  EXPECT_NEAR(a.ndr, ndr / 6, 1e-12);
  EXPECT_THROW(evaluate(env, nets.policy, nets.barrier, nullptr, 0, 3), std::invalid_argument);
}

TEST(Violations, CountsMatchPerPrefixVerdicts) {
  Environment env(drone2d_defaults());
  const auto nets = init_networks(env, NetworkConfig{{8}, {8}, HiddenActivation::tanh}, false, 4);
  Rng rng(4);
  const auto traj = rollout(env, nets.policy, env.sample_initial_states(1, rng).front(), 50);
  ViolationCounts counts{};
  count_violations(traj, env, nets.barrier, nullptr, counts);
  ViolationCounts want{};
  for (std::size_t n = 1; n <= traj.size(); ++n) {
    const auto m = certpm_safety(traj.prefix(n), nets.barrier, env);
    if (!m.flagged) continue;
    ++want[static_cast<std::size_t>(m.cause.kind)];
    if (m.also) ++want[static_cast<std::size_t>(m.also->kind)];
  }
  EXPECT_EQ(counts, want);
}
