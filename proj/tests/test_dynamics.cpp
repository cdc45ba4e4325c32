#include <cmath>
#include <type_traits>
#include <vector>

#include <gtest/gtest.h>

#include "certrepair/environment.hpp"

using namespace certrepair;

namespace {

EnvConfig drone_without_obstacles() {
  auto c = drone2d_defaults();
  c.obstacles.clear();
  return c;
}

SystemState state(std::vector<double> v, double t = 0.0) { return {std::move(v), t}; }

template <class E>
concept ExposesVectorField = requires(const E& e, const std::vector<double>& x, std::vector<double>& dx) {
  e.derivative(x, x, dx);
};

}  // namespace

TEST(Environment, DynamicsAreNotPartOfThePublicInterface) {
  static_assert(!ExposesVectorField<Environment>);
  SUCCEED();
}

TEST(Environment, ResetThenObserveReturnsInitialState) {
  Environment env(drone2d_defaults());
  const auto x0 = state({1.0, 1.5, 0.1, -0.1});
  env.reset(x0);
  EXPECT_EQ(env.current(), x0);
  const auto obs = env.observe();
  EXPECT_EQ(std::vector<double>(obs.begin(), obs.begin() + 4), x0.values);
}

TEST(Environment, ResetOutsideInitialSetNeedsOverride) {
  Environment env(drone2d_defaults());
  const auto far = state({5.0, 9.0, 0.0, 0.0});
  EXPECT_THROW(env.reset(far), PreconditionError);
  EXPECT_NO_THROW(env.reset(far, ResetCheck::allow_any));
}

TEST(Environment, IdenticalResetsGiveIdenticalTrajectories) {
  Environment env(drone2d_defaults());
  const auto x0 = state({1.0, 1.0, 0.0, 0.0});
  const std::vector<double> u{0.3, -0.2};
  env.reset(x0);
  std::vector<SystemState> a, b;
  for (int i = 0; i < 20; ++i) a.push_back(env.step(u, 0.1));
  env.reset(x0);
  for (int i = 0; i < 20; ++i) b.push_back(env.step(u, 0.1));
  EXPECT_EQ(a, b);
}

TEST(Environment, DroneBallisticStep) {
  Environment env(drone_without_obstacles());
  env.reset(state({0, 0, 1, 0}), ResetCheck::allow_any);
  const auto x = env.step(std::vector<double>{0, 0}, 0.1);
  EXPECT_NEAR(x.values[0], 0.1, 1e-12);
  EXPECT_NEAR(x.values[2], 1.0, 1e-12);
  EXPECT_NEAR(x.values[3], 0.0, 1e-12);
  EXPECT_NEAR(x.timestamp, 0.1, 1e-15);
}

TEST(Environment, DroneConstantThrustMatchesClosedForm) {
  Environment env(drone_without_obstacles());
  env.reset(state({0, 0, 0, 0}), ResetCheck::allow_any);
  const auto x = env.step(std::vector<double>{1, 0}, 0.1);
  EXPECT_NEAR(x.values[2], 0.1, 1e-12);
  EXPECT_NEAR(x.values[0], 0.005, 1e-12);
}

TEST(Environment, ShipKinematicsPointAlongHeading) {
  auto cfg = ship2d_defaults();
  cfg.obstacles.clear();
  Environment env(cfg);
  const double pi = std::acos(-1.0);
  env.reset(state({5, 4, pi / 2, 1, 0, 0}), ResetCheck::allow_any);
  const double dt = 1e-3;
  const auto x = env.step(std::vector<double>{0, 0}, dt);
  EXPECT_NEAR((x.values[1] - 4) / dt, 1.0, 1e-3);
  EXPECT_NEAR((x.values[0] - 5) / dt, 0.0, 1e-9);
}

TEST(Environment, NonFiniteActionThrowsAndOutOfBoundsIsClipped) {
  Environment env(drone_without_obstacles());
  env.reset(state({1, 1, 0, 0}));
  EXPECT_THROW(env.step(std::vector<double>{NAN, 0}, 0.1), std::invalid_argument);
  env.reset(state({1, 1, 0, 0}));
  const auto clipped = env.step(std::vector<double>{5, 0}, 0.1);
  EXPECT_EQ(env.clipped_components(), 1u);
  env.reset(state({1, 1, 0, 0}));
  const auto bounded = env.step(std::vector<double>{1, 0}, 0.1);
  EXPECT_EQ(clipped.values, bounded.values);
}

// Straight-line surge with constant thrust has the closed form
//   u(t) = 2a + (u0 - 2a) e^{-t/2},  x(t) = x0 + 2a t + 2 (u0 - 2a)(1 - e^{-t/2}).
TEST(Environment, Rk4ErrorShrinksAtFourthOrder) {
  const double a = 0.8, u0 = 0.2, T = 1.0;
  const double exact = 1.0 + 2 * a * T + 2 * (u0 - 2 * a) * (1 - std::exp(-T / 2));
  std::vector<double> errors;
  for (double h : {0.5, 0.25, 0.125, 0.0625}) {
    auto cfg = ship2d_defaults();
    cfg.obstacles.clear();
    cfg.monitor_dt = T;
    cfg.integrator_dt = h;
    Environment env(cfg);
    env.reset(state({1, 4, 0, u0, 0, 0}), ResetCheck::allow_any);
    errors.push_back(std::abs(env.step(std::vector<double>{a, 0}, T).values[0] - exact));
  }
  for (std::size_t i = 0; i + 1 < errors.size(); ++i) {
    if (errors[i] < 1e-13) break;
    EXPECT_GE(errors[i] / errors[i + 1], 8.0) << "h index " << i;
  }
}

TEST(Environment, ObserveFillsMissingNeighboursWithSentinel) {
  auto cfg = drone_without_obstacles();
  cfg.neighbors = 2;
  Environment env(cfg);
  const auto obs = env.observe(state({1, 1, 0.5, 0}));
  ASSERT_EQ(obs.size(), env.observation_dim());
  EXPECT_EQ(obs.size(), 4u + 2 * 2 * 2 + 2);
  for (std::size_t slot = 0; slot < 2; ++slot) {
    const std::size_t base = 4 + slot * 4;
    EXPECT_DOUBLE_EQ(obs[base], cfg.sentinel_distance);
    EXPECT_DOUBLE_EQ(obs[base + 1], 0.0);
    EXPECT_DOUBLE_EQ(obs[base + 2], 0.0);
    EXPECT_DOUBLE_EQ(obs[base + 3], 0.0);
  }
}

TEST(Environment, ObserveOrdersNeighboursByDistanceThenIndex) {
  auto cfg = drone_without_obstacles();
  cfg.neighbors = 3;
  cfg.obstacles = {ObstacleTrack({{6.0, 5.0}}, 1.0, 0.2),   // distance 2
                   ObstacleTrack({{5.0, 6.0}}, 1.0, 0.2),   // distance 2, ties with 0
                   ObstacleTrack({{5.0, 4.0}}, 1.0, 0.2)};  // distance 1
  cfg.initial_lo = {0.5, 0.5, 0, 0};
  cfg.initial_hi = {1.0, 1.0, 0, 0};
  Environment env(cfg);
  const auto obs = env.observe(state({4.0, 4.0, 0, 0}));
  EXPECT_DOUBLE_EQ(obs[4], 1.0);  // obstacle 2 first
  EXPECT_DOUBLE_EQ(obs[5], 0.0);
  EXPECT_DOUBLE_EQ(obs[8], 2.0);  // then obstacle 0 before obstacle 1
  EXPECT_DOUBLE_EQ(obs[9], 1.0);
  EXPECT_DOUBLE_EQ(obs[12], 1.0);
  EXPECT_DOUBLE_EQ(obs[13], 2.0);
}

TEST(Environment, ObservationJacobianMatchesFiniteDifferences) {
  for (auto kind : {SystemKind::drone2d, SystemKind::ship2d}) {
    Environment env(defaults_for(kind));
    SystemState s = kind == SystemKind::drone2d ? state({2.0, 3.0, 0.3, -0.2}, 1.3)
                                                : state({2.0, 3.0, 0.4, 0.5, 0.1, 0.05}, 1.3);
    const auto jac = env.observation_jacobian(s);
    const double h = 1e-6;
    for (std::size_t c = 0; c < s.values.size(); ++c) {
      auto p = s;
      auto m = s;
      p.values[c] += h;
      m.values[c] -= h;
      const auto op = env.observe(p);
      const auto om = env.observe(m);
      for (std::size_t r = 0; r < op.size(); ++r) {
        EXPECT_NEAR(jac(r, c), (op[r] - om[r]) / (2 * h), 1e-6) << to_string(kind) << " r" << r << " c" << c;
      }
    }
  }
}

TEST(Environment, UnsafeGoalAndInitialPredicates) {
  auto cfg = drone2d_defaults();
  cfg.obstacles = {ObstacleTrack({{5.0, 5.0}}, 1.0, 0.4)};
  Environment env(cfg);
  EXPECT_FALSE(env.in_unsafe(state({cfg.arena_hi[0], 2.0, 0, 0})));  // on the boundary is still inside
  EXPECT_TRUE(env.in_unsafe(state({cfg.arena_hi[0] + 1e-9, 2.0, 0, 0})));
  EXPECT_TRUE(env.in_unsafe(state({5.0, 5.0, 0, 0})));
  EXPECT_TRUE(env.in_goal(state({cfg.goal[0], cfg.goal[1], 0, 0})));
  EXPECT_TRUE(env.in_initial(state({1.0, 1.0, 0.0, 0.0})));
  EXPECT_FALSE(env.in_initial(state({1.0, 1.0, 0.5, 0.0})));
}

TEST(Environment, SamplingIsDeterministicAndInsideInitialSet) {
  Environment env(drone2d_defaults());
  Rng r0(3);
  EXPECT_TRUE(env.sample_initial_states(0, r0).empty());
  Rng a(123), b(123);
  const auto s1 = env.sample_initial_states(1000, a);
  const auto s2 = env.sample_initial_states(1000, b);
  EXPECT_EQ(s1, s2);
  for (const auto& s : s1) {
    ASSERT_TRUE(env.in_initial(s));
    ASSERT_EQ(s.timestamp, 0.0);
  }
}

TEST(ObstacleTrack, PositionIsPeriodic) {
  ObstacleTrack t({{0, 0}, {3, 0}, {3, 4}}, 7.5, 0.3);
  for (double time : {0.0, 0.7, 2.9, 6.1, 11.3}) {
    const auto a = t.position(time);
    const auto b = t.position(time + t.period());
    EXPECT_NEAR(a[0], b[0], 1e-9);
    EXPECT_NEAR(a[1], b[1], 1e-9);
  }
}

TEST(ObstacleTrack, InvalidParametersThrow) {
  EXPECT_THROW(ObstacleTrack({}, 1.0, 0.3), std::invalid_argument);
  EXPECT_THROW(ObstacleTrack({{0, 0}}, 0.0, 0.3), std::invalid_argument);
  EXPECT_THROW(ObstacleTrack({{0, 0}}, 1.0, 0.0), std::invalid_argument);
}

TEST(Environment, OverlappingInitialAndUnsafeSetsAreRejected) {
  auto cfg = drone2d_defaults();
  cfg.obstacles.push_back(ObstacleTrack({{1.0, 1.0}}, 1.0, 0.3));
  EXPECT_THROW(Environment{cfg}, std::invalid_argument);
}

TEST(Environment, CallCountsTrackInterfaceUse) {
  Environment env(drone2d_defaults());
  const auto x0 = state({1, 1, 0, 0});
  env.reset(x0);
  env.step(std::vector<double>{0, 0}, 0.1);
  env.observe();
  env.in_goal(x0);
  EXPECT_EQ(env.calls().resets, 1u);
  EXPECT_EQ(env.calls().steps, 1u);
  EXPECT_EQ(env.calls().observes, 1u);
  EXPECT_GE(env.calls().predicates, 1u);
}

TEST(Environment, ShipWorldVelocityRoundTrip) {
  Environment env(ship2d_defaults());
  const auto s = state({2, 3, 0.7, 0.4, -0.1, 0.2});
  const auto k = env.kinematics(s);
  const auto back = env.with_kinematics(s, k.position, k.velocity);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(back.values[i], s.values[i], 1e-12);
}
