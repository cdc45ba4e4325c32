#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "certrepair/config.hpp"
#include "certrepair/metrics.hpp"
#include "certrepair/predictive.hpp"
#include "certrepair/repair.hpp"
#include "certrepair/training.hpp"

namespace certrepair {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kCsvSchemaVersion = 1;

/// Failure while running a command on a valid configuration.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// CSV

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string format_optional(const std::optional<double>& v) { return v ? format_number(*v) : ""; }

/// Rows of comma-separated cells under a fixed header.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(std::vector<std::string> cells) {
    if (cells.size() != header_.size()) throw std::logic_error("CsvTable: row width does not match header");
    rows_.push_back(std::move(cells));
  }

  std::size_t rows() const { return rows_.size(); }

  std::string str() const {
    std::ostringstream out;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
      out << '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return out.str();
  }

  void write(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw RuntimeFailure("cannot write " + path.string());
    f << str();
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

inline CsvTable training_curve_csv(const std::vector<CurveRow>& curve) {
  CsvTable t({"epoch", "L_Init", "L_Safe", "L_Non-dec", "L_G", "L_D", "total"});
  for (const auto& r : curve) {
    const auto& x = r.terms;
    t.add_row({std::to_string(r.epoch), format_number(x.init), format_number(x.safe), format_number(x.nondec),
               format_number(x.goal), format_number(x.decrease),
               format_number(x.init + x.safe + x.nondec + x.goal + x.decrease)});
  }
  return t;
}

inline std::vector<std::string> violation_columns(const std::string& prefix) {
  std::vector<std::string> cols;
  for (std::size_t k = 1; k < kVerdictKindCount; ++k) cols.push_back(prefix + to_string(static_cast<VerdictKind>(k)));
  return cols;
}

inline CsvTable repair_report_csv(const std::vector<RoundReport>& rounds) {
  std::vector<std::string> header{"round", "flags_total"};
  for (auto& c : violation_columns("flags_")) header.push_back(c);
  for (const char* c : {"SR", "BR", "NDR", "DR"}) header.emplace_back(c);
  CsvTable t(header);
  for (const auto& r : rounds) {
    std::vector<std::string> row{std::to_string(r.round), std::to_string(r.flags_total)};
    for (std::size_t k = 1; k < kVerdictKindCount; ++k) row.push_back(std::to_string(r.flags_by_cause[k]));
    row.push_back(format_number(r.sr));
    row.push_back(format_number(r.br));
    row.push_back(format_number(r.ndr));
    row.push_back(format_optional(r.dr));
    t.add_row(std::move(row));
  }
  return t;
}

inline CsvTable eval_summary_csv(const EvalReport& r) {
  std::vector<std::string> header{"rollouts", "observations", "SR", "BR", "NDR", "DR"};
  for (auto& c : violation_columns("violations_")) header.push_back(c);
  CsvTable t(header);
  std::vector<std::string> row{std::to_string(r.per_trajectory.size()), std::to_string(r.observations),
                               format_number(r.sr), format_number(r.br), format_number(r.ndr), format_optional(r.dr)};
  for (std::size_t k = 1; k < kVerdictKindCount; ++k) row.push_back(std::to_string(r.violations[k]));
  t.add_row(std::move(row));
  return t;
}

inline CsvTable eval_trajectories_csv(const EvalReport& r) {
  CsvTable t({"rollout", "SR", "BR", "NDR", "NDR_empty", "DR", "DR_empty"});
  for (std::size_t i = 0; i < r.per_trajectory.size(); ++i) {
    const auto& m = r.per_trajectory[i];
    t.add_row({std::to_string(i), format_number(m.sr), format_number(m.br), format_number(m.ndr.value),
               m.ndr.empty ? "1" : "0", m.dr ? format_number(m.dr->value) : "",
               m.dr ? (m.dr->empty ? "1" : "0") : ""});
  }
  return t;
}

inline nlohmann::json eval_json(const EvalReport& r) {
  nlohmann::json j;
  j["rollouts"] = r.per_trajectory.size();
  j["observations"] = r.observations;
  j["SR"] = r.sr;
  j["BR"] = r.br;
  j["NDR"] = r.ndr;
  j["DR"] = r.dr ? nlohmann::json(*r.dr) : nlohmann::json(nullptr);
  nlohmann::json v = nlohmann::json::object();
  for (std::size_t k = 1; k < kVerdictKindCount; ++k) v[to_string(static_cast<VerdictKind>(k))] = r.violations[k];
  j["violations"] = v;
  return j;
}

// ---------------------------------------------------------------------------
// Model files

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw RuntimeFailure("cannot write " + path.string());
  f << j.dump(1) << '\n';
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open " + path.string());
  try {
    nlohmann::json j;
    f >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed " + path.string() + ": " + e.what());
  }
}

inline void save_models(const std::filesystem::path& dir, const CertifiedNetworks& nets) {
  std::filesystem::create_directories(dir);
  write_json(dir / "policy.json", to_json(nets.policy));
  write_json(dir / "barrier.json", to_json(nets.barrier));
  if (nets.lyapunov) write_json(dir / "lyapunov.json", to_json(*nets.lyapunov));
}

/// Loads models from `dir` and checks their dimensions against the environment.
inline CertifiedNetworks load_models(const std::filesystem::path& dir, const Environment& env) {
  CertifiedNetworks nets;
  try {
    nets.policy = policy_from_json(read_json(dir / "policy.json"));
    nets.barrier = barrier_from_json(read_json(dir / "barrier.json"));
    if (std::filesystem::exists(dir / "lyapunov.json")) {
      nets.lyapunov = lyapunov_from_json(read_json(dir / "lyapunov.json"));
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("invalid model file in " + dir.string() + ": " + e.what());
  }
  auto check = [&](const Mlp& net, std::size_t out, const char* what) {
    if (net.input_dim() != env.observation_dim() || net.output_dim() != out) {
      throw ConfigError(std::string(what) + " model does not match the environment's dimensions");
    }
  };
  check(nets.policy.net, env.action_dim(), "policy");
  check(nets.barrier.net, 1, "barrier");
  if (nets.lyapunov) check(nets.lyapunov->net, 1, "lyapunov");
  return nets;
}

// ---------------------------------------------------------------------------
// Manifest

class Manifest {
 public:
  Manifest(std::string command, const nlohmann::json& raw_config, std::uint64_t seed) {
    j_["command"] = std::move(command);
    j_["config_hash"] = config_hash(raw_config);
    j_["seed"] = seed;
    j_["versions"] = {{"certrepair", kVersion},
                      {"csv_schema", kCsvSchemaVersion},
                      {"json_library", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                      {"compiler", __VERSION__}};
    j_["timings"] = nlohmann::json::object();
    j_["outputs"] = nlohmann::json::array();
    j_["warnings"] = nlohmann::json::array();
  }

  void timing(const std::string& name, double seconds) { j_["timings"][name] = seconds; }
  void output(const std::string& file) { j_["outputs"].push_back(file); }
  void warning(const std::string& w) { j_["warnings"].push_back(w); }
  nlohmann::json& extra() { return j_; }

  void write(const std::filesystem::path& dir, const std::string& name = "manifest.json") const {
    write_json(dir / name, j_);
  }

 private:
  nlohmann::json j_;
};

// ---------------------------------------------------------------------------
// PredPM traces and threshold sweeps

struct TraceRow {
  double t = 0.0;
  PredAssessment assessment;
  bool flagged = false;
};

/// PredPM assessments along one rollout of the policy.
inline std::vector<TraceRow> predpm_trace(Environment& env, const CertifiedNetworks& nets, const SurrogateCfg& cfg,
                                          const PredThresholds& th, std::uint64_t rollout_seed) {
  Rng rng(derive_seed(rollout_seed, "trace"));
  const auto x0 = env.sample_initial_states(1, rng).front();
  const auto traj = rollout(env, nets.policy, x0, env.horizon_steps());
  std::vector<TraceRow> rows;
  Trajectory prefix;
  for (const auto& s : traj) {
    prefix.push_back(s);
    const auto m = predpm_monitor(prefix, nets.barrier, env, cfg, th);
    rows.push_back({s.timestamp, *m.assessment, m.flagged});
  }
  return rows;
}

inline CsvTable trace_csv(const std::vector<TraceRow>& rows) {
  CsvTable t({"t", "v_U", "v_S", "v_N", "flagged"});
  for (const auto& r : rows) {
    t.add_row({format_number(r.t), format_number(r.assessment.v_u), format_number(r.assessment.v_s),
               format_number(r.assessment.v_n), r.flagged ? "1" : "0"});
  }
  return t;
}

struct ThresholdGrid {
  double start = 0.0;
  double stop = 0.0;
  double step = 1.0;

  std::vector<double> values() const {
    std::vector<double> v;
    const double n = std::floor((stop - start) / step + 1e-9);
    for (long long i = 0; i <= static_cast<long long>(n); ++i) v.push_back(start + static_cast<double>(i) * step);
    return v;
  }
};

/// Parses "start:stop:step" with step > 0 and stop >= start.
inline ThresholdGrid parse_grid(const std::string& spec) {
  ThresholdGrid g;
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  if (parts.size() != 3) throw ConfigError("grid must be start:stop:step");
  try {
    std::size_t used = 0;
    g.start = std::stod(parts[0], &used);
    if (used != parts[0].size()) throw std::invalid_argument("trailing characters");
    g.stop = std::stod(parts[1], &used);
    if (used != parts[1].size()) throw std::invalid_argument("trailing characters");
    g.step = std::stod(parts[2], &used);
    if (used != parts[2].size()) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw ConfigError("grid values must be numbers: " + spec);
  }
  if (!(g.step > 0.0) || g.stop < g.start) throw ConfigError("grid needs step > 0 and stop >= start");
  return g;
}

/// Warning indices of a recorded trace under thresholds `th`.
inline std::vector<std::size_t> warning_indices(const std::vector<TraceRow>& rows, const PredThresholds& th) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].assessment.inside_unsafe || predpm_verdict(rows[i].assessment, th)) out.push_back(i);
  }
  return out;
}

/// Varies one threshold at a time over the grid with the other two fixed at 0.
inline CsvTable threshold_sweep_csv(const std::vector<TraceRow>& rows, const ThresholdGrid& grid) {
  CsvTable t({"axis", "threshold", "warnings", "observations", "percentage"});
  const char* axes[] = {"u", "s", "n"};
  for (int a = 0; a < 3; ++a) {
    for (double v : grid.values()) {
      PredThresholds th;
      (a == 0 ? th.xi_u : a == 1 ? th.xi_s : th.xi_n) = v;
      const auto w = warning_indices(rows, th);
      const double pct = rows.empty() ? 0.0 : 100.0 * static_cast<double>(w.size()) / static_cast<double>(rows.size());
      t.add_row({axes[a], format_number(v), std::to_string(w.size()), std::to_string(rows.size()), format_number(pct)});
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Commands

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

struct TrainOutputs {
  TrainResult result;
};

inline TrainOutputs run_train(const RunConfig& cfg, const nlohmann::json& raw, const std::filesystem::path& out) {
  const auto start = std::chrono::steady_clock::now();
  Environment env(cfg.env);
  TrainOutputs o;
  o.result = train_joint(env, cfg.train, cfg.network);
  std::filesystem::create_directories(out);
  save_models(out, o.result.nets);
  training_curve_csv(o.result.curve).write(out / "training_curve.csv");
  Manifest m("train", raw, cfg.seed);
  for (const char* f : {"policy.json", "barrier.json", "training_curve.csv"}) m.output(f);
  if (o.result.nets.lyapunov) m.output("lyapunov.json");
  if (o.result.warning) m.warning("non-finite loss; returned the best networks seen");
  m.extra()["clipped_action_components"] = env.clipped_components();
  m.timing("train", seconds_since(start));
  m.write(out);
  return o;
}

inline RepairResult run_repair(const RunConfig& cfg, const nlohmann::json& raw, const std::filesystem::path& models,
                               const std::filesystem::path& out) {
  const auto start = std::chrono::steady_clock::now();
  Environment env(cfg.env);
  auto nets = load_models(models, env);
  if (cfg.repair.property == PropertyKind::stability && !nets.lyapunov) {
    throw ConfigError("stability repair needs lyapunov.json in " + models.string());
  }
  auto res = repair_loop(env, nets, cfg.repair);
  std::filesystem::create_directories(out);
  save_models(out, res.nets);
  repair_report_csv(res.rounds).write(out / "repair_report.csv");
  Manifest m("repair", raw, cfg.seed);
  for (const char* f : {"policy.json", "barrier.json", "repair_report.csv"}) m.output(f);
  if (res.nets.lyapunov) m.output("lyapunov.json");
  m.extra()["monitor"] = to_string(cfg.repair.monitor);
  m.extra()["problem"] = to_string(cfg.repair.problem);
  m.extra()["property"] = to_string(cfg.repair.property);
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& r : res.rounds) {
    rounds.push_back({{"round", r.round},
                      {"wall_time", r.wall_time},
                      {"status", r.status == RoundStatus::repaired ? "repaired" : "nothing to repair"}});
  }
  m.extra()["rounds"] = rounds;
  m.timing("repair", seconds_since(start));
  m.write(out);
  return res;
}

inline EvalReport run_eval(const RunConfig& cfg, const nlohmann::json& raw, const std::filesystem::path& models,
                           const std::filesystem::path& out, std::size_t rollouts, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  Environment env(cfg.env);
  const auto nets = load_models(models, env);
  const auto report =
      evaluate(env, nets.policy, nets.barrier, nets.lyapunov ? &*nets.lyapunov : nullptr, rollouts, seed);
  std::filesystem::create_directories(out);
  eval_summary_csv(report).write(out / "eval.csv");
  eval_trajectories_csv(report).write(out / "eval_trajectories.csv");
  write_json(out / "eval.json", eval_json(report));
  Manifest m("eval", raw, seed);
  for (const char* f : {"eval.csv", "eval_trajectories.csv", "eval.json"}) m.output(f);
  m.timing("eval", seconds_since(start));
  m.write(out);
  return report;
}

inline std::vector<TraceRow> run_trace(const RunConfig& cfg, const nlohmann::json& raw,
                                       const std::filesystem::path& models, const std::filesystem::path& csv_path,
                                       std::uint64_t rollout_seed) {
  const auto start = std::chrono::steady_clock::now();
  Environment env(cfg.env);
  const auto nets = load_models(models, env);
  const auto rows = predpm_trace(env, nets, cfg.repair.surrogate, cfg.repair.thresholds, rollout_seed);
  const auto dir = csv_path.has_parent_path() ? csv_path.parent_path() : std::filesystem::path(".");
  std::filesystem::create_directories(dir);
  trace_csv(rows).write(csv_path);
  Manifest m("predpm-trace", raw, rollout_seed);
  m.output(csv_path.filename().string());
  m.timing("predpm-trace", seconds_since(start));
  m.write(dir, csv_path.stem().string() + ".manifest.json");
  return rows;
}

inline CsvTable run_sweep(const RunConfig& cfg, const nlohmann::json& raw, const std::filesystem::path& models,
                          const std::filesystem::path& csv_path, const ThresholdGrid& grid,
                          std::uint64_t rollout_seed) {
  const auto start = std::chrono::steady_clock::now();
  Environment env(cfg.env);
  const auto nets = load_models(models, env);
  const auto rows = predpm_trace(env, nets, cfg.repair.surrogate, cfg.repair.thresholds, rollout_seed);
  const auto table = threshold_sweep_csv(rows, grid);
  const auto dir = csv_path.has_parent_path() ? csv_path.parent_path() : std::filesystem::path(".");
  std::filesystem::create_directories(dir);
  table.write(csv_path);
  Manifest m("threshold-sweep", raw, rollout_seed);
  m.output(csv_path.filename().string());
  m.timing("threshold-sweep", seconds_since(start));
  m.write(dir, csv_path.stem().string() + ".manifest.json");
  return table;
}

}  // namespace certrepair
