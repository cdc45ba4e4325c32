#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "certrepair/dense_array.hpp"
#include "certrepair/random.hpp"

namespace certrepair {

using Point = std::array<double, 2>;

struct SystemState {
  std::vector<double> values;
  double timestamp = 0.0;

  friend bool operator==(const SystemState&, const SystemState&) = default;
};

struct ControlAction {
  std::vector<double> values;
};

/// Observed states x_0..x_N with strictly increasing timestamps starting at 0.
class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(std::vector<SystemState> points) {
    for (auto& p : points) push_back(std::move(p));
  }

  void push_back(SystemState s) {
    if (points_.empty()) {
      if (s.timestamp != 0.0) throw std::invalid_argument("Trajectory must start at t = 0");
    } else if (!(s.timestamp > points_.back().timestamp)) {
      throw std::invalid_argument("Trajectory timestamps must be strictly increasing");
    }
    points_.push_back(std::move(s));
  }

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const SystemState& operator[](std::size_t i) const { return points_[i]; }
  const SystemState& back() const { return points_.back(); }
  const std::vector<SystemState>& points() const { return points_; }
  auto begin() const { return points_.begin(); }
  auto end() const { return points_.end(); }

  /// Copy of the first `n` points.
  Trajectory prefix(std::size_t n) const {
    Trajectory t;
    t.points_.assign(points_.begin(), points_.begin() + static_cast<std::ptrdiff_t>(std::min(n, points_.size())));
    return t;
  }

 private:
  std::vector<SystemState> points_;
};

/// Circular obstacle whose center loops through piecewise-linear waypoints at constant speed.
/// A single waypoint gives a static obstacle.
class ObstacleTrack {
 public:
  ObstacleTrack() = default;
  ObstacleTrack(std::vector<Point> waypoints, double period, double radius)
      : waypoints_(std::move(waypoints)), period_(period), radius_(radius) {
    if (waypoints_.empty()) throw std::invalid_argument("ObstacleTrack needs at least one waypoint");
    if (!(period_ > 0.0)) throw std::invalid_argument("ObstacleTrack period must be positive");
    if (!(radius_ > 0.0)) throw std::invalid_argument("ObstacleTrack radius must be positive");
    cumulative_.push_back(0.0);
    const std::size_t n = waypoints_.size();
    for (std::size_t i = 0; i < n && n > 1; ++i) {
      const Point& a = waypoints_[i];
      const Point& b = waypoints_[(i + 1) % n];
      cumulative_.push_back(cumulative_.back() + std::hypot(b[0] - a[0], b[1] - a[1]));
    }
  }

  const std::vector<Point>& waypoints() const { return waypoints_; }
  double period() const { return period_; }
  double radius() const { return radius_; }

  Point position(double t) const { return sample(t).first; }
  Point velocity(double t) const { return sample(t).second; }

 private:
  std::pair<Point, Point> sample(double t) const {
    const double length = cumulative_.back();
    if (waypoints_.size() == 1 || length == 0.0) return {waypoints_.front(), Point{0.0, 0.0}};
    double phase = std::fmod(t, period_);
    if (phase < 0.0) phase += period_;
    const double s = phase / period_ * length;
    const std::size_t n = waypoints_.size();
    std::size_t seg = static_cast<std::size_t>(
        std::upper_bound(cumulative_.begin(), cumulative_.end(), s) - cumulative_.begin());
    seg = seg == 0 ? 0 : seg - 1;
    if (seg >= n) seg = n - 1;
    const Point& a = waypoints_[seg];
    const Point& b = waypoints_[(seg + 1) % n];
    const double seg_len = cumulative_[seg + 1] - cumulative_[seg];
    if (seg_len == 0.0) return {a, Point{0.0, 0.0}};
    const double f = (s - cumulative_[seg]) / seg_len;
    const double speed = length / period_;
    const Point dir{(b[0] - a[0]) / seg_len, (b[1] - a[1]) / seg_len};
    return {Point{a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])}, Point{dir[0] * speed, dir[1] * speed}};
  }

  std::vector<Point> waypoints_;
  double period_ = 1.0;
  double radius_ = 1.0;
  std::vector<double> cumulative_;
};

enum class SystemKind { integrator1d, drone2d, ship2d };

inline std::string to_string(SystemKind k) {
  switch (k) {
    case SystemKind::integrator1d: return "integrator1d";
    case SystemKind::drone2d: return "drone2d";
    case SystemKind::ship2d: return "ship2d";
  }
  return "unknown";
}

inline SystemKind parse_system_kind(const std::string& s) {
  if (s == "integrator1d") return SystemKind::integrator1d;
  if (s == "drone2d") return SystemKind::drone2d;
  if (s == "ship2d") return SystemKind::ship2d;
  throw std::invalid_argument("unknown environment '" + s + "'");
}

/// Everything about an environment that is known to the user: spaces, property sets,
/// obstacle routes and timing. The vector field itself is not part of it.
struct EnvConfig {
  SystemKind kind = SystemKind::drone2d;
  double monitor_dt = 0.1;
  double integrator_dt = 0.02;
  int horizon_steps = 200;
  int neighbors = 8;
  std::vector<double> arena_lo;
  std::vector<double> arena_hi;
  double agent_radius = 0.1;
  std::vector<double> initial_lo;  // X_0 box, one entry per state component
  std::vector<double> initial_hi;
  std::vector<double> sample_lo;  // state-space box used for uniform training samples
  std::vector<double> sample_hi;
  Point goal{0.0, 0.0};
  double goal_radius = 0.5;
  std::vector<ObstacleTrack> obstacles;
  std::vector<double> action_bound;
  double sentinel_distance = 20.0;
};

inline std::size_t state_dim_of(SystemKind k) {
  switch (k) {
    case SystemKind::integrator1d: return 2;
    case SystemKind::drone2d: return 4;
    case SystemKind::ship2d: return 6;
  }
  return 0;
}

inline std::size_t spatial_dim_of(SystemKind k) { return k == SystemKind::integrator1d ? 1 : 2; }
inline std::size_t action_dim_of(SystemKind k) { return k == SystemKind::integrator1d ? 1 : 2; }

/// Drone2D: planar double integrator among eight looping obstacles.
inline EnvConfig drone2d_defaults() {
  EnvConfig c;
  c.kind = SystemKind::drone2d;
  c.arena_lo = {0.0, 0.0};
  c.arena_hi = {10.0, 10.0};
  c.agent_radius = 0.1;
  c.initial_lo = {0.5, 0.5, -0.2, -0.2};
  c.initial_hi = {2.5, 2.5, 0.2, 0.2};
  c.sample_lo = {-0.5, -0.5, -1.5, -1.5};
  c.sample_hi = {10.5, 10.5, 1.5, 1.5};
  c.goal = {8.5, 8.5};
  c.goal_radius = 0.5;
  c.action_bound = {1.0, 1.0};
  const double r = 0.4;
  c.obstacles = {
      ObstacleTrack({{3.2, 4.0}, {7.0, 4.0}}, 16.0, r),
      ObstacleTrack({{7.0, 5.5}, {3.2, 5.5}}, 20.0, r),
      ObstacleTrack({{4.2, 3.2}, {4.2, 7.0}}, 18.0, r),
      ObstacleTrack({{5.8, 7.0}, {5.8, 3.2}}, 14.0, r),
      ObstacleTrack({{3.5, 6.3}, {4.8, 6.3}, {4.8, 7.3}, {3.5, 7.3}}, 12.0, r),
      ObstacleTrack({{6.5, 3.2}, {7.4, 4.6}, {6.4, 5.0}}, 12.0, r),
      ObstacleTrack({{3.3, 3.3}, {5.0, 5.0}}, 16.0, r),
      ObstacleTrack({{7.2, 7.2}, {6.0, 7.6}, {6.8, 6.2}}, 14.0, r),
  };
  return c;
}

/// Ship2D: 3-DOF surface vessel crossing a channel with eight traffic ships.
inline EnvConfig ship2d_defaults() {
  EnvConfig c;
  c.kind = SystemKind::ship2d;
  c.arena_lo = {0.0, 0.0};
  c.arena_hi = {12.0, 8.0};
  c.agent_radius = 0.15;
  c.initial_lo = {0.5, 3.0, -0.3, 0.0, 0.0, -0.1};
  c.initial_hi = {1.5, 5.0, 0.3, 0.5, 0.0, 0.1};
  c.sample_lo = {-0.5, -0.5, -3.14159, -0.5, -0.3, -1.0};
  c.sample_hi = {12.5, 8.5, 3.14159, 2.0, 0.3, 1.0};
  c.goal = {11.0, 4.0};
  c.goal_radius = 0.5;
  c.action_bound = {1.0, 1.0};
  const double r = 0.35;
  c.obstacles = {
      ObstacleTrack({{3.0, 1.0}, {3.0, 7.0}}, 12.0, r),
      ObstacleTrack({{4.5, 7.0}, {4.5, 1.0}}, 10.0, r),
      ObstacleTrack({{6.0, 1.5}, {6.0, 6.5}}, 9.0, r),
      ObstacleTrack({{7.5, 6.8}, {7.5, 1.2}}, 11.0, r),
      ObstacleTrack({{9.0, 1.0}, {9.0, 7.0}}, 8.0, r),
      ObstacleTrack({{3.5, 2.5}, {8.5, 2.5}}, 14.0, r),
      ObstacleTrack({{8.5, 5.5}, {3.5, 5.5}}, 13.0, r),
      ObstacleTrack({{5.0, 4.0}, {8.0, 4.6}, {6.5, 3.2}}, 10.0, r),
  };
  return c;
}

/// 1-D double integrator on a line with one static obstacle; used for hand-built certificates.
inline EnvConfig integrator1d_defaults() {
  EnvConfig c;
  c.kind = SystemKind::integrator1d;
  c.arena_lo = {-10.0};
  c.arena_hi = {10.0};
  c.agent_radius = 0.0;
  c.initial_lo = {0.0, 0.0};
  c.initial_hi = {1.0, 0.5};
  c.sample_lo = {-10.5, -2.0};
  c.sample_hi = {10.5, 2.0};
  c.goal = {0.5, 0.0};
  c.goal_radius = 0.3;
  c.action_bound = {1.0};
  c.neighbors = 1;
  c.obstacles = {ObstacleTrack({{5.0, 0.0}}, 1.0, 0.5)};
  return c;
}

inline EnvConfig defaults_for(SystemKind k) {
  switch (k) {
    case SystemKind::integrator1d: return integrator1d_defaults();
    case SystemKind::drone2d: return drone2d_defaults();
    case SystemKind::ship2d: return ship2d_defaults();
  }
  return drone2d_defaults();
}

class PreconditionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ResetCheck { require_initial, allow_any };

struct CallCounts {
  std::uint64_t resets = 0;
  std::uint64_t steps = 0;
  std::uint64_t observes = 0;
  std::uint64_t predicates = 0;
};

/// Position and world-frame velocity of the agent.
struct Kinematics {
  std::vector<double> position;
  std::vector<double> velocity;
};

/// Black-box simulator. Callers can reset, step, observe and query the property sets;
/// the vector field and its coefficients stay private to this class.
class Environment {
 public:
  explicit Environment(EnvConfig cfg) : cfg_(std::move(cfg)) {
    validate();
    state_.values.assign(state_dim(), 0.0);
  }

  SystemKind kind() const { return cfg_.kind; }
  std::string name() const { return to_string(cfg_.kind); }
  std::size_t state_dim() const { return state_dim_of(cfg_.kind); }
  std::size_t action_dim() const { return action_dim_of(cfg_.kind); }
  std::size_t spatial_dim() const { return spatial_dim_of(cfg_.kind); }
  std::size_t neighbors() const { return static_cast<std::size_t>(cfg_.neighbors); }
  std::size_t observation_dim() const {
    const std::size_t d = spatial_dim();
    return state_dim() + 2 * d * neighbors() + d;
  }
  double monitor_dt() const { return cfg_.monitor_dt; }
  int horizon_steps() const { return cfg_.horizon_steps; }
  std::span<const double> action_bound() const { return cfg_.action_bound; }
  std::size_t obstacle_count() const { return cfg_.obstacles.size(); }

  void reset(const SystemState& x0, ResetCheck check = ResetCheck::require_initial) {
    ++calls_.resets;
    check_state(x0);
    if (check == ResetCheck::require_initial && !initial_region(x0)) {
      throw PreconditionError("reset: state is not in the initial set");
    }
    // The clock follows the supplied timestamp; sampled initial states carry t = 0.
    state_ = x0;
  }

  const SystemState& current() const { return state_; }

  SystemState step(std::span<const double> action, double dt) {
    ++calls_.steps;
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("step: dt must be positive");
    if (action.size() != action_dim()) throw std::invalid_argument("step: action has wrong dimension");
    std::vector<double> u(action.begin(), action.end());
    for (std::size_t i = 0; i < u.size(); ++i) {
      if (!std::isfinite(u[i])) throw std::invalid_argument("step: non-finite action");
      const double b = cfg_.action_bound[i];
      if (u[i] > b || u[i] < -b) {
        u[i] = std::clamp(u[i], -b, b);
        ++clipped_;
      }
    }
    const int substeps = std::max(1, static_cast<int>(std::ceil(dt / cfg_.integrator_dt - 1e-9)));
    const double h = dt / substeps;
    std::vector<double> x = state_.values;
    for (int s = 0; s < substeps; ++s) rk4(x, u, h);
    state_.values = std::move(x);
    state_.timestamp += dt;
    return state_;
  }

  SystemState step(const ControlAction& a, double dt) { return step(std::span<const double>(a.values), dt); }

  std::vector<double> observe(const SystemState& s) const {
    ++calls_.observes;
    check_state(s);
    const std::size_t d = spatial_dim();
    std::vector<double> obs;
    obs.reserve(observation_dim());
    obs.insert(obs.end(), s.values.begin(), s.values.end());
    const Point p = position_of(s);
    const Point v = world_velocity(s);
    for (std::size_t idx : nearest(s)) {
      if (idx == kNone) {
        obs.push_back(cfg_.sentinel_distance);
        for (std::size_t k = 1; k < d; ++k) obs.push_back(0.0);
        for (std::size_t k = 0; k < d; ++k) obs.push_back(0.0);
        continue;
      }
      const Point op = cfg_.obstacles[idx].position(s.timestamp);
      const Point ov = cfg_.obstacles[idx].velocity(s.timestamp);
      for (std::size_t k = 0; k < d; ++k) obs.push_back(op[k] - p[k]);
      for (std::size_t k = 0; k < d; ++k) obs.push_back(ov[k] - v[k]);
    }
    for (std::size_t k = 0; k < d; ++k) obs.push_back(cfg_.goal[k] - p[k]);
    return obs;
  }

  std::vector<double> observe() const { return observe(state_); }

  /// d observation / d state values at `s`, with the neighbor ordering held fixed.
  DenseArray observation_jacobian(const SystemState& s) const {
    check_state(s);
    const std::size_t n = state_dim();
    const std::size_t d = spatial_dim();
    DenseArray jac({observation_dim(), n});
    for (std::size_t i = 0; i < n; ++i) jac(i, i) = 1.0;
    const DenseArray vel_jac = world_velocity_jacobian(s);
    std::size_t row = n;
    for (std::size_t idx : nearest(s)) {
      if (idx != kNone) {
        for (std::size_t k = 0; k < d; ++k) jac(row + k, k) = -1.0;
        for (std::size_t k = 0; k < d; ++k) {
          for (std::size_t c = 0; c < n; ++c) jac(row + d + k, c) = -vel_jac(k, c);
        }
      }
      row += 2 * d;
    }
    for (std::size_t k = 0; k < d; ++k) jac(row + k, k) = -1.0;
    return jac;
  }

  /// Signed distance to the unsafe set: negative inside X_u, zero on its boundary.
  double clearance(const SystemState& s) const {
    ++calls_.predicates;
    return clearance_impl(s, nullptr);
  }

  /// Gradient of `clearance` with respect to the agent position.
  std::vector<double> clearance_gradient(const SystemState& s) const {
    Point g{0.0, 0.0};
    clearance_impl(s, &g);
    return {g.begin(), g.begin() + static_cast<std::ptrdiff_t>(spatial_dim())};
  }

  bool in_unsafe(const SystemState& s) const { return clearance(s) < 0.0; }

  bool in_goal(const SystemState& s) const {
    ++calls_.predicates;
    const Point p = position_of(s);
    return std::hypot(p[0] - cfg_.goal[0], p[1] - cfg_.goal[1]) <= cfg_.goal_radius;
  }

  bool in_initial(const SystemState& s) const {
    ++calls_.predicates;
    return initial_region(s);
  }

  double goal_radius() const { return cfg_.goal_radius; }
  const Point& goal() const { return cfg_.goal; }

  std::vector<SystemState> sample_initial_states(std::size_t count, Rng& rng) const {
    return sample_box(cfg_.initial_lo, cfg_.initial_hi, count, rng, 0.0);
  }

  /// Uniform samples over the state-space box, each at a uniform time within the horizon.
  std::vector<SystemState> sample_state_space(std::size_t count, Rng& rng) const {
    return sample_box(cfg_.sample_lo, cfg_.sample_hi, count, rng, cfg_.monitor_dt * cfg_.horizon_steps);
  }

  Kinematics kinematics(const SystemState& s) const {
    const std::size_t d = spatial_dim();
    const Point p = position_of(s);
    const Point v = world_velocity(s);
    return {std::vector<double>(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(d)),
            std::vector<double>(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(d))};
  }

  /// State with the given position and world velocity; attitude variables are kept from `s`.
  SystemState with_kinematics(const SystemState& s, std::span<const double> pos, std::span<const double> vel) const {
    SystemState out = s;
    switch (cfg_.kind) {
      case SystemKind::integrator1d:
        out.values[0] = pos[0];
        out.values[1] = vel[0];
        break;
      case SystemKind::drone2d:
        out.values[0] = pos[0];
        out.values[1] = pos[1];
        out.values[2] = vel[0];
        out.values[3] = vel[1];
        break;
      case SystemKind::ship2d: {
        const double c = std::cos(s.values[2]);
        const double sn = std::sin(s.values[2]);
        out.values[0] = pos[0];
        out.values[1] = pos[1];
        out.values[3] = c * vel[0] + sn * vel[1];
        out.values[4] = -sn * vel[0] + c * vel[1];
        break;
      }
    }
    return out;
  }

  /// d state / d (position, world velocity) for `with_kinematics`; shape (n, 2d).
  DenseArray kinematic_jacobian(const SystemState& s) const {
    const std::size_t d = spatial_dim();
    DenseArray jac({state_dim(), 2 * d});
    switch (cfg_.kind) {
      case SystemKind::integrator1d:
        jac(0, 0) = 1.0;
        jac(1, 1) = 1.0;
        break;
      case SystemKind::drone2d:
        for (std::size_t i = 0; i < 4; ++i) jac(i, i) = 1.0;
        break;
      case SystemKind::ship2d: {
        const double c = std::cos(s.values[2]);
        const double sn = std::sin(s.values[2]);
        jac(0, 0) = 1.0;
        jac(1, 1) = 1.0;
        jac(3, 2) = c;
        jac(3, 3) = sn;
        jac(4, 2) = -sn;
        jac(4, 3) = c;
        break;
      }
    }
    return jac;
  }

  /// Goal-seeking reference controller built from geometry only (no obstacle avoidance).
  std::vector<double> nominal_action(const SystemState& s) const {
    const Point p = position_of(s);
    const double gx = cfg_.goal[0] - p[0];
    const double gy = cfg_.goal[1] - p[1];
    std::vector<double> u(action_dim(), 0.0);
    switch (cfg_.kind) {
      case SystemKind::integrator1d:
        u[0] = 0.5 * gx - 1.0 * s.values[1];
        break;
      case SystemKind::drone2d:
        u[0] = 0.5 * gx - 1.0 * s.values[2];
        u[1] = 0.5 * gy - 1.0 * s.values[3];
        break;
      case SystemKind::ship2d: {
        const double heading = std::atan2(gy, gx);
        const double err = std::remainder(heading - s.values[2], 2.0 * 3.141592653589793);
        const double dist = std::hypot(gx, gy);
        const double u_des = std::min(1.0, 0.5 * dist) * std::max(std::cos(err), 0.0);
        u[0] = 0.5 * u_des + (u_des - s.values[3]);
        u[1] = 1.5 * err - 1.0 * s.values[5];
        break;
      }
    }
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = std::clamp(u[i], -cfg_.action_bound[i], cfg_.action_bound[i]);
    return u;
  }

  std::uint64_t clipped_components() const { return clipped_; }
  const CallCounts& calls() const { return calls_; }

 private:
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  void validate() const {
    const std::size_t n = state_dim();
    const std::size_t d = spatial_dim();
    auto need = [](bool ok, const char* what) {
      if (!ok) throw std::invalid_argument(std::string("environment config: ") + what);
    };
    need(cfg_.monitor_dt > 0.0, "monitor_dt must be positive");
    need(cfg_.integrator_dt > 0.0 && cfg_.integrator_dt <= cfg_.monitor_dt, "integrator_dt must be in (0, monitor_dt]");
    need(cfg_.horizon_steps >= 1, "horizon_steps must be >= 1");
    need(cfg_.neighbors >= 0, "neighbors must be >= 0");
    need(cfg_.arena_lo.size() == d && cfg_.arena_hi.size() == d, "arena bounds have wrong dimension");
    need(cfg_.initial_lo.size() == n && cfg_.initial_hi.size() == n, "initial box has wrong dimension");
    need(cfg_.sample_lo.size() == n && cfg_.sample_hi.size() == n, "sample box has wrong dimension");
    need(cfg_.action_bound.size() == action_dim(), "action_bound has wrong dimension");
    for (double b : cfg_.action_bound) need(b > 0.0, "action bounds must be positive");
    for (std::size_t i = 0; i < n; ++i) {
      need(cfg_.initial_lo[i] <= cfg_.initial_hi[i], "initial box is empty");
      need(cfg_.sample_lo[i] <= cfg_.sample_hi[i], "sample box is empty");
    }
    need(cfg_.goal_radius > 0.0, "goal_radius must be positive");
    need(cfg_.agent_radius >= 0.0, "agent_radius must be non-negative");
    for (std::size_t k = 0; k < d; ++k) {
      need(cfg_.initial_lo[k] >= cfg_.arena_lo[k] && cfg_.initial_hi[k] <= cfg_.arena_hi[k],
           "initial set leaves the arena");
      need(cfg_.goal[k] - cfg_.goal_radius >= cfg_.arena_lo[k] && cfg_.goal[k] + cfg_.goal_radius <= cfg_.arena_hi[k],
           "goal set leaves the arena");
    }
    // Obstacle routes must keep clear of X_0 and X_g at all times.
    for (const auto& track : cfg_.obstacles) {
      const double reach = track.radius() + cfg_.agent_radius;
      for (int i = 0; i < 512; ++i) {
        const Point o = track.position(track.period() * i / 512.0);
        double dx = 0.0;
        double dist2 = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          dx = std::max({cfg_.initial_lo[k] - o[k], 0.0, o[k] - cfg_.initial_hi[k]});
          dist2 += dx * dx;
        }
        if (d == 1) dist2 += o[1] * o[1];
        need(std::sqrt(dist2) > reach, "an obstacle route intersects the initial set");
        need(std::hypot(o[0] - cfg_.goal[0], o[1] - cfg_.goal[1]) > reach + cfg_.goal_radius,
             "an obstacle route intersects the goal set");
      }
    }
  }

  void check_state(const SystemState& s) const {
    if (s.values.size() != state_dim()) {
      throw std::invalid_argument("state has dimension " + std::to_string(s.values.size()) + ", expected " +
                                  std::to_string(state_dim()));
    }
  }

  bool initial_region(const SystemState& s) const {
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      if (s.values[i] < cfg_.initial_lo[i] || s.values[i] > cfg_.initial_hi[i]) return false;
    }
    return true;
  }

  Point position_of(const SystemState& s) const {
    if (cfg_.kind == SystemKind::integrator1d) return {s.values[0], 0.0};
    return {s.values[0], s.values[1]};
  }

  Point world_velocity(const SystemState& s) const {
    switch (cfg_.kind) {
      case SystemKind::integrator1d: return {s.values[1], 0.0};
      case SystemKind::drone2d: return {s.values[2], s.values[3]};
      case SystemKind::ship2d: {
        const double c = std::cos(s.values[2]);
        const double sn = std::sin(s.values[2]);
        return {s.values[3] * c - s.values[4] * sn, s.values[3] * sn + s.values[4] * c};
      }
    }
    return {0.0, 0.0};
  }

  // d world_velocity / d state, shape (d, n).
  DenseArray world_velocity_jacobian(const SystemState& s) const {
    const std::size_t d = spatial_dim();
    DenseArray jac({d, state_dim()});
    switch (cfg_.kind) {
      case SystemKind::integrator1d: jac(0, 1) = 1.0; break;
      case SystemKind::drone2d:
        jac(0, 2) = 1.0;
        jac(1, 3) = 1.0;
        break;
      case SystemKind::ship2d: {
        const double th = s.values[2];
        const double u = s.values[3];
        const double v = s.values[4];
        const double c = std::cos(th);
        const double sn = std::sin(th);
        jac(0, 2) = -u * sn - v * c;
        jac(0, 3) = c;
        jac(0, 4) = -sn;
        jac(1, 2) = u * c - v * sn;
        jac(1, 3) = sn;
        jac(1, 4) = c;
        break;
      }
    }
    return jac;
  }

  // Indices of the k nearest obstacles (distance, then index); kNone pads missing slots.
  std::vector<std::size_t> nearest(const SystemState& s) const {
    const Point p = position_of(s);
    std::vector<std::pair<double, std::size_t>> order;
    order.reserve(cfg_.obstacles.size());
    for (std::size_t i = 0; i < cfg_.obstacles.size(); ++i) {
      const Point o = cfg_.obstacles[i].position(s.timestamp);
      order.emplace_back(std::hypot(o[0] - p[0], o[1] - p[1]), i);
    }
    std::sort(order.begin(), order.end());
    std::vector<std::size_t> out(neighbors(), kNone);
    for (std::size_t k = 0; k < out.size() && k < order.size(); ++k) out[k] = order[k].second;
    return out;
  }

  double clearance_impl(const SystemState& s, Point* grad) const {
    check_state(s);
    const Point p = position_of(s);
    const std::size_t d = spatial_dim();
    double best = std::numeric_limits<double>::infinity();
    Point best_grad{0.0, 0.0};
    for (std::size_t k = 0; k < d; ++k) {
      const double lo = p[k] - cfg_.arena_lo[k];
      const double hi = cfg_.arena_hi[k] - p[k];
      if (lo < best) {
        best = lo;
        best_grad = {0.0, 0.0};
        best_grad[k] = 1.0;
      }
      if (hi < best) {
        best = hi;
        best_grad = {0.0, 0.0};
        best_grad[k] = -1.0;
      }
    }
    for (const auto& track : cfg_.obstacles) {
      const Point o = track.position(s.timestamp);
      const double dx = p[0] - o[0];
      const double dy = p[1] - o[1];
      const double dist = std::hypot(dx, dy);
      const double c = dist - (track.radius() + cfg_.agent_radius);
      if (c < best) {
        best = c;
        best_grad = dist > 0.0 ? Point{dx / dist, dy / dist} : Point{0.0, 0.0};
      }
    }
    if (grad != nullptr) *grad = best_grad;
    return best;
  }

  std::vector<SystemState> sample_box(const std::vector<double>& lo, const std::vector<double>& hi, std::size_t count,
                                      Rng& rng, double time_max) const {
    std::vector<SystemState> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      SystemState s;
      s.values.resize(lo.size());
      for (std::size_t k = 0; k < lo.size(); ++k) s.values[k] = rng.uniform(lo[k], hi[k]);
      s.timestamp = time_max > 0.0 ? rng.uniform(0.0, time_max) : 0.0;
      out.push_back(std::move(s));
    }
    return out;
  }

  void derivative(const std::vector<double>& x, const std::vector<double>& u, std::vector<double>& dx) const {
    dx.resize(x.size());
    switch (cfg_.kind) {
      case SystemKind::integrator1d:
        dx[0] = x[1];
        dx[1] = u[0];
        break;
      case SystemKind::drone2d:
        dx[0] = x[2];
        dx[1] = x[3];
        dx[2] = u[0];
        dx[3] = u[1];
        break;
      case SystemKind::ship2d: {
        constexpr double damping = 0.5;
        const double c = std::cos(x[2]);
        const double sn = std::sin(x[2]);
        dx[0] = x[3] * c - x[4] * sn;
        dx[1] = x[3] * sn + x[4] * c;
        dx[2] = x[5];
        dx[3] = u[0] - damping * x[3];
        dx[4] = -damping * x[4];
        dx[5] = u[1] - damping * x[5];
        break;
      }
    }
  }

  void rk4(std::vector<double>& x, const std::vector<double>& u, double h) const {
    const std::size_t n = x.size();
    std::vector<double> k1, k2, k3, k4, tmp(n);
    derivative(x, u, k1);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
    derivative(tmp, u, k2);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
    derivative(tmp, u, k3);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + h * k3[i];
    derivative(tmp, u, k4);
    for (std::size_t i = 0; i < n; ++i) x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }

  EnvConfig cfg_;
  SystemState state_;
  std::uint64_t clipped_ = 0;
  mutable CallCounts calls_;
};

}  // namespace certrepair
