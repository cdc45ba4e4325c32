#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "certrepair/environment.hpp"
#include "certrepair/predictive.hpp"
#include "certrepair/repair.hpp"
#include "certrepair/training.hpp"

namespace certrepair {

/// Invalid or unreadable run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Profile { desk, paper };

struct RunConfig {
  Profile profile = Profile::desk;
  EnvConfig env = drone2d_defaults();
  NetworkConfig network;
  TrainConfig train;
  RepairConfig repair;
  std::size_t eval_rollouts = 50;
  std::string output_dir = "out";
  std::uint64_t seed = 0;
};

/// Defaults for an environment and profile. The desk profile shortens the horizon and
/// the budgets so a full train/repair/eval cycle takes seconds to minutes on one core.
inline RunConfig default_run_config(SystemKind kind, Profile profile) {
  RunConfig c;
  c.profile = profile;
  c.env = defaults_for(kind);
  c.train.margins = {0.1, 0.1};
  c.train.imitation_weight = 0.1;
  c.repair.margins = c.train.margins;
  c.repair.imitation_weight = 0.1;
  c.repair.surrogate.a_max = c.env.action_bound.empty() ? 1.0 : c.env.action_bound[0];
  if (profile == Profile::desk) {
    c.env.horizon_steps = 200;
    c.network.policy_hidden = {32, 32};
    c.network.cert_hidden = {32, 32};
    c.train.epochs = 10;
    c.repair.rollouts = 200;
  } else {
    c.env.horizon_steps = kind == SystemKind::ship2d ? 1200 : 2000;
    c.network.policy_hidden = {64, 64};
    c.network.cert_hidden = {64, 64};
    c.train.epochs = 100;
    c.repair.rollouts = 1000;
  }
  return c;
}

namespace detail {

/// Reads a JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const nlohmann::json& at(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <class T>
  void read(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  void read_positive(const std::string& key, double& out) {
    read(key, out);
    if (has(key) && !(out > 0.0)) throw ConfigError(where_ + "." + key + " must be positive");
  }

  template <class T>
  void read_at_least(const std::string& key, T& out, T lo) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) throw ConfigError(where_ + "." + key + " must be an integer");
    const auto x = v.get<long long>();
    if (x < static_cast<long long>(lo)) throw ConfigError(where_ + "." + key + " must be >= " + std::to_string(lo));
    out = static_cast<T>(x);
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline std::vector<std::size_t> read_dims(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a non-empty list of widths");
  std::vector<std::size_t> out;
  for (const auto& v : j) {
    if (!v.is_number_integer() || v.get<long long>() < 1) throw ConfigError(where + ": widths must be positive integers");
    out.push_back(v.get<std::size_t>());
  }
  return out;
}

inline Point read_point(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() < 1 || j.size() > 2) throw ConfigError(where + ": expected [x] or [x, y]");
  Point p{0.0, 0.0};
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(where + ": coordinates must be numbers");
    p[i] = j[i].get<double>();
  }
  return p;
}

inline void read_env(const nlohmann::json& j, EnvConfig& env) {
  ObjectReader r(j, "env");
  r.read("monitor_dt", env.monitor_dt);
  r.read("integrator_dt", env.integrator_dt);
  r.read_at_least("horizon_steps", env.horizon_steps, 1);
  r.read_at_least("neighbors", env.neighbors, 0);
  r.read("arena_lo", env.arena_lo);
  r.read("arena_hi", env.arena_hi);
  r.read("agent_radius", env.agent_radius);
  r.read("initial_lo", env.initial_lo);
  r.read("initial_hi", env.initial_hi);
  r.read("sample_lo", env.sample_lo);
  r.read("sample_hi", env.sample_hi);
  if (r.has("goal")) env.goal = read_point(r.at("goal"), r.path("goal"));
  r.read("goal_radius", env.goal_radius);
  r.read("action_bound", env.action_bound);
  r.read("sentinel_distance", env.sentinel_distance);
  if (r.has("obstacles")) {
    const auto& list = r.at("obstacles");
    if (!list.is_array()) throw ConfigError("env.obstacles: expected a list");
    env.obstacles.clear();
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string where = "env.obstacles[" + std::to_string(i) + "]";
      ObjectReader o(list[i], where);
      std::vector<Point> waypoints;
      if (!o.has("waypoints") || !o.at("waypoints").is_array()) throw ConfigError(where + ": waypoints required");
      for (const auto& w : o.at("waypoints")) waypoints.push_back(read_point(w, where + ".waypoints"));
      double period = 1.0;
      double radius = 0.0;
      o.read("period", period);
      o.read("radius", radius);
      o.finish();
      try {
        env.obstacles.emplace_back(std::move(waypoints), period, radius);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(where + ": " + e.what());
      }
    }
  }
  r.finish();
}

inline HiddenActivation read_activation(const nlohmann::json& j, const std::string& where) {
  try {
    return parse_activation(j.get<std::string>());
  } catch (const std::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

template <class F>
auto parse_enum(const nlohmann::json& j, const std::string& where, F parse) {
  try {
    return parse(j.get<std::string>());
  } catch (const std::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

inline PredThresholds read_thresholds(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(where + ": expected [xi_u, xi_s, xi_n]");
  for (const auto& v : j) {
    if (!v.is_number()) throw ConfigError(where + ": thresholds must be numbers");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace detail

/// Parses a run configuration. `env.name` and `profile` pick the defaults; every other
/// key overrides one default. Unknown keys are errors.
inline RunConfig parse_run_config(const nlohmann::json& j) {
  detail::ObjectReader top(j, "config");
  SystemKind kind = SystemKind::drone2d;
  Profile profile = Profile::desk;
  if (top.has("profile")) {
    const auto p = top.at("profile");
    if (p == "desk") profile = Profile::desk;
    else if (p == "paper") profile = Profile::paper;
    else throw ConfigError("config.profile: expected \"desk\" or \"paper\"");
  }
  if (top.has("env")) {
    const auto& e = top.at("env");
    if (!e.is_object() || !e.contains("name") || !e["name"].is_string()) {
      throw ConfigError("env.name: required (integrator1d, drone2d or ship2d)");
    }
    try {
      kind = parse_system_kind(e["name"].get<std::string>());
    } catch (const std::exception& ex) {
      throw ConfigError(std::string("env.name: ") + ex.what());
    }
  }
  RunConfig c = default_run_config(kind, profile);

  if (top.has("env")) {
    nlohmann::json rest = top.at("env");
    rest.erase("name");
    detail::read_env(rest, c.env);
  }
  if (top.has("network")) {
    detail::ObjectReader r(top.at("network"), "network");
    if (r.has("policy_hidden")) c.network.policy_hidden = detail::read_dims(r.at("policy_hidden"), r.path("policy_hidden"));
    if (r.has("cert_hidden")) c.network.cert_hidden = detail::read_dims(r.at("cert_hidden"), r.path("cert_hidden"));
    if (r.has("activation")) c.network.activation = detail::read_activation(r.at("activation"), r.path("activation"));
    r.finish();
  }
  if (top.has("loss")) {
    detail::ObjectReader r(top.at("loss"), "loss");
    r.read("margin_barrier", c.train.margins.barrier);
    r.read("margin_lyapunov", c.train.margins.lyapunov);
    r.finish();
    if (c.train.margins.barrier < 0.0 || c.train.margins.lyapunov < 0.0) throw ConfigError("loss: margins must be >= 0");
    c.repair.margins = c.train.margins;
  }
  if (top.has("train")) {
    detail::ObjectReader r(top.at("train"), "train");
    r.read_at_least("epochs", c.train.epochs, 0);
    r.read_at_least("batch_size", c.train.batch_size, std::size_t{1});
    r.read_positive("lr_policy", c.train.lr_policy);
    r.read_positive("lr_cert", c.train.lr_cert);
    r.read_at_least("rollouts", c.train.rollouts, std::size_t{0});
    r.read_at_least("uniform_samples", c.train.uniform_samples, std::size_t{1});
    r.read("imitation_weight", c.train.imitation_weight);
    r.read("with_lyapunov", c.train.with_lyapunov);
    r.finish();
  }
  if (top.has("repair")) {
    detail::ObjectReader r(top.at("repair"), "repair");
    r.read_at_least("rollouts", c.repair.rollouts, std::size_t{1});
    if (r.has("monitor")) c.repair.monitor = detail::parse_enum(r.at("monitor"), r.path("monitor"), parse_monitor_kind);
    if (r.has("property")) c.repair.property = detail::parse_enum(r.at("property"), r.path("property"), parse_property_kind);
    if (r.has("problem")) c.repair.problem = detail::parse_enum(r.at("problem"), r.path("problem"), parse_repair_problem);
    r.read_at_least("max_rounds", c.repair.max_rounds, 1);
    r.read_at_least("retrain_epochs", c.repair.retrain_epochs, 0);
    r.read("replay_ratio", c.repair.replay_ratio);
    r.read("replay_on_policy", c.repair.replay_on_policy);
    r.read_at_least("batch_size", c.repair.batch_size, std::size_t{1});
    r.read_positive("lr_policy", c.repair.lr_policy);
    r.read_positive("lr_cert", c.repair.lr_cert);
    r.read("imitation_weight", c.repair.imitation_weight);
    r.read_positive("zero_tol", c.repair.zero_tol);
    r.finish();
    if (c.repair.replay_ratio < 0.0) throw ConfigError("repair.replay_ratio must be >= 0");
    if (c.repair.replay_on_policy < 0.0 || c.repair.replay_on_policy > 1.0) {
      throw ConfigError("repair.replay_on_policy must be in [0, 1]");
    }
  }
  if (top.has("predpm")) {
    detail::ObjectReader r(top.at("predpm"), "predpm");
    auto& s = c.repair.surrogate;
    r.read_positive("a_max", s.a_max);
    r.read_positive("pred_dt", s.pred_dt);
    r.read_at_least("pred_steps", s.pred_steps, 1);
    r.read_at_least("opt_iters", s.opt_iters, 1);
    r.read_positive("opt_lr", s.opt_lr);
    r.read_at_least("restarts", s.restarts, 1);
    r.read_positive("penalty", s.penalty);
    r.read_positive("temperature", s.temperature);
    if (r.has("thresholds")) c.repair.thresholds = detail::read_thresholds(r.at("thresholds"), r.path("thresholds"));
    r.finish();
  }
  if (top.has("eval")) {
    detail::ObjectReader r(top.at("eval"), "eval");
    r.read_at_least("rollouts", c.eval_rollouts, std::size_t{1});
    r.finish();
  }
  top.read("output_dir", c.output_dir);
  if (top.has("seed")) {
    const auto& s = top.at("seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0)) {
      throw ConfigError("config.seed must be a nonnegative integer");
    }
    c.seed = s.get<std::uint64_t>();
  }
  top.finish();

  try {
    Environment probe(c.env);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  c.train.seed = derive_seed(c.seed, "train");
  c.repair.seed = derive_seed(c.seed, "repair");
  c.repair.surrogate.seed = derive_seed(c.seed, "surrogate");
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed config " + path + ": " + e.what());
  }
  return parse_run_config(j);
}

/// FNV-1a of the config file's canonical JSON text, as 16 hex digits.
inline std::string config_hash(const nlohmann::json& j) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

}  // namespace certrepair
