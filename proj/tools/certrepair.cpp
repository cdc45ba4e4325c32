// Command-line front end: train, repair, eval, predpm-trace, threshold-sweep.
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "certrepair/pipeline.hpp"

namespace fs = std::filesystem;
using namespace certrepair;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Loaded {
  RunConfig cfg;
  nlohmann::json raw;
};

Loaded load(const std::string& path) {
  Loaded l;
  l.raw = read_json(path);
  l.cfg = parse_run_config(l.raw);
  return l;
}

PredThresholds parse_thresholds(const std::string& text) {
  std::stringstream ss(text);
  std::string item;
  std::vector<double> v;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--thresholds expects three numbers u,s,n");
    }
  }
  if (v.size() != 3) throw ConfigError("--thresholds expects three numbers u,s,n");
  return {v[0], v[1], v[2]};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train, monitor and repair neural policies with barrier/Lyapunov certificates"};
  app.require_subcommand(1);

  std::string config;
  std::string out;
  std::string models;

  auto* train = app.add_subcommand("train", "Train policy and certificate networks from scratch");
  train->add_option("--config", config, "Run configuration (JSON)")->required();
  train->add_option("--out", out, "Output directory (default: output_dir from the config)");

  std::string monitor;
  std::string thresholds;
  std::string problem;
  std::string property;
  int rounds = 0;
  auto* repair = app.add_subcommand("repair", "Monitor rollouts and retrain on flagged states");
  repair->add_option("--config", config, "Run configuration (JSON)")->required();
  repair->add_option("--models", models, "Directory with policy.json and barrier.json (default: output_dir)");
  repair->add_option("--monitor", monitor, "certpm, predpm or baseline")
      ->check(CLI::IsMember({"certpm", "predpm", "baseline"}));
  repair->add_option("--thresholds", thresholds, "PredPM thresholds xi_U,xi_S,xi_N");
  repair->add_option("--problem", problem, "joint or cert-only")->check(CLI::IsMember({"joint", "cert-only"}));
  repair->add_option("--property", property, "safety or stability")->check(CLI::IsMember({"safety", "stability"}));
  repair->add_option("--rounds", rounds, "Maximum number of repair rounds (>= 1)");
  repair->add_option("--out", out, "Output directory (default: <output_dir>/repaired)");

  std::size_t rollouts = 0;
  std::uint64_t seed = 0;
  auto* eval = app.add_subcommand("eval", "Evaluate SR, BR, NDR, DR and violation counts");
  eval->add_option("--config", config, "Run configuration (JSON)")->required();
  eval->add_option("--models", models, "Model directory (default: output_dir)");
  eval->add_option("--rollouts", rollouts, "Number of evaluation rollouts (default from config)");
  eval->add_option("--seed", seed, "Seed for the evaluation initial states");
  eval->add_option("--out", out, "Output directory (default: <output_dir>/eval)");

  std::uint64_t rollout_seed = 0;
  auto* trace = app.add_subcommand("predpm-trace", "Write PredPM assessments along one rollout");
  trace->add_option("--config", config, "Run configuration (JSON)")->required();
  trace->add_option("--models", models, "Model directory (default: output_dir)");
  trace->add_option("--rollout-seed", rollout_seed, "Seed for the rollout's initial state");
  trace->add_option("--out", out, "CSV path")->required();

  std::string grid;
  auto* sweep = app.add_subcommand("threshold-sweep", "Warning percentage while varying one threshold");
  sweep->add_option("--config", config, "Run configuration (JSON)")->required();
  sweep->add_option("--models", models, "Model directory (default: output_dir)");
  sweep->add_option("--grid", grid, "start:stop:step")->required();
  sweep->add_option("--rollout-seed", rollout_seed, "Seed for the recorded rollout");
  sweep->add_option("--out", out, "CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    auto [cfg, raw] = load(config);
    const fs::path base = cfg.output_dir;
    const fs::path model_dir = models.empty() ? base : fs::path(models);

    if (train->parsed()) {
      const auto o = run_train(cfg, raw, out.empty() ? base : fs::path(out));
      if (o.result.warning) std::cerr << "warning: training hit a non-finite loss; kept the best networks\n";
    } else if (repair->parsed()) {
      if (repair->count("--rounds")) {
        if (rounds < 1) throw ConfigError("--rounds must be >= 1");
        cfg.repair.max_rounds = rounds;
      }
      if (!monitor.empty()) cfg.repair.monitor = parse_monitor_kind(monitor);
      if (!problem.empty()) cfg.repair.problem = parse_repair_problem(problem);
      if (!property.empty()) cfg.repair.property = parse_property_kind(property);
      if (!thresholds.empty()) cfg.repair.thresholds = parse_thresholds(thresholds);
      const auto res = run_repair(cfg, raw, model_dir, out.empty() ? base / "repaired" : fs::path(out));
      for (const auto& r : res.rounds) {
        std::cout << "round " << r.round << ": " << r.flags_total << " flags"
                  << (r.status == RoundStatus::nothing_to_repair ? " (nothing to repair)" : "") << '\n';
      }
    } else if (eval->parsed()) {
      if (eval->count("--rollouts") && rollouts < 1) throw ConfigError("--rollouts must be >= 1");
      const std::size_t k = eval->count("--rollouts") ? rollouts : cfg.eval_rollouts;
      const std::uint64_t s = eval->count("--seed") ? seed : derive_seed(cfg.seed, "eval");
      const auto r = run_eval(cfg, raw, model_dir, out.empty() ? base / "eval" : fs::path(out), k, s);
      std::cout << "SR " << format_number(r.sr) << " BR " << format_number(r.br) << " NDR " << format_number(r.ndr);
      if (r.dr) std::cout << " DR " << format_number(*r.dr);
      std::cout << '\n';
    } else if (trace->parsed()) {
      run_trace(cfg, raw, model_dir, out, rollout_seed);
    } else if (sweep->parsed()) {
      run_sweep(cfg, raw, model_dir, out, parse_grid(grid), rollout_seed);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
