#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "banditab/analysis.hpp"
#include "banditab/config.hpp"
#include "banditab/harness.hpp"
#include "banditab/log_io.hpp"

namespace banditab::cli {

inline constexpr const char* kVersion = "1.0.0";

enum ExitCode : int { kOk = 0, kRuntimeFailure = 1, kUsageError = 2 };

// Raised for bad command-line values that are not config fields.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace fs = std::filesystem;

struct RunManifest {
  std::string config_toml;
  std::uint64_t seed = 0;
  std::vector<std::string> files;
  double wall_clock_seconds = 0.0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["tool"] = "banditab";
    j["versions"] = {{"banditab", kVersion}, {"impression_log", 1}, {"metrics_csv", 1}};
    j["seed"] = seed;
    j["config"] = config_toml;
    j["files"] = files;
    j["wall_clock_seconds"] = wall_clock_seconds;
    return j;
  }
};

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

template <class Fn>
void write_file(const fs::path& path, Fn&& fn) {
  std::ostringstream ss;
  fn(ss);
  write_text(path, ss.str());
}

inline void write_metric_files(const fs::path& dir, const MetricTable& table,
                               std::span<const EffectPoint> effects) {
  write_file(dir / "metrics.csv", [&](std::ostream& o) { write_metrics_csv(o, table); });
  write_file(dir / "effects.csv", [&](std::ostream& o) { write_effects_csv(o, effects); });
  write_file(dir / "buckets.csv", [&](std::ostream& o) { write_buckets_csv(o, table); });
}

inline ExperimentConfig config_from(const std::optional<std::string>& path) {
  if (!path) return ExperimentConfig{};
  return load_config(*path);
}

// Effective seed: the override if given, else the config's.
inline ExperimentConfig with_seed(ExperimentConfig cfg, std::optional<std::uint64_t> seed) {
  if (seed) cfg.seed = *seed;
  return cfg;
}

struct SimulateOutput {
  RunManifest manifest;
  std::vector<EffectPoint> effects;
};

inline SimulateOutput simulate_into(const ExperimentConfig& cfg, const fs::path& out_dir) {
  const auto start = std::chrono::steady_clock::now();
  fs::create_directories(out_dir);
  ExperimentResult result = run_experiment(cfg, cfg.seed);
  write_file(out_dir / "impressions.jsonl",
             [&](std::ostream& o) { write_impressions(o, result.log); });
  write_metric_files(out_dir, result.metrics, result.effects);

  RunManifest m;
  m.config_toml = to_toml(cfg);
  m.seed = cfg.seed;
  m.files = {"impressions.jsonl", "metrics.csv", "effects.csv", "buckets.csv", "manifest.json"};
  m.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_text(out_dir / "manifest.json", m.to_json().dump(2) + "\n");
  return {std::move(m), std::move(result.effects)};
}

inline void cmd_simulate(const std::optional<std::string>& config_path,
                         std::optional<std::uint64_t> seed, const fs::path& out_dir,
                         bool quiet) {
  const ExperimentConfig cfg = with_seed(config_from(config_path), seed);
  const RunManifest m = simulate_into(cfg, out_dir).manifest;
  if (!quiet)
    std::cerr << "simulate: seed " << m.seed << ", wrote " << out_dir.string() << " in "
              << m.wall_clock_seconds << " s\n";
}

// Recomputes metrics.csv, effects.csv and buckets.csv from an existing log.
inline void cmd_metrics(const std::string& log_path, const std::optional<std::string>& config_path,
                        std::optional<std::uint64_t> seed, const fs::path& out_dir, bool quiet) {
  const ExperimentConfig cfg = with_seed(config_from(config_path), seed);
  std::ifstream in(log_path);
  if (!in) throw std::runtime_error("cannot read log '" + log_path + "'");
  const auto log = read_impressions(
      in, LogBounds{static_cast<std::uint32_t>(cfg.topics), static_cast<std::uint32_t>(cfg.users)});
  const MetricTable table = compute_metric_table(log, cfg, cfg.seed, {true, cfg.threads});
  const auto effects = effect_points(table, cfg);
  fs::create_directories(out_dir);
  write_metric_files(out_dir, table, effects);
  if (!quiet)
    std::cerr << "metrics: " << log.size() << " records, wrote " << out_dir.string() << "\n";
}

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ','))
    if (auto t = detail::trim(item); !t.empty()) out.push_back(t);
  return out;
}

// Phase means of every effect series, as rows of sweep.csv.
inline void append_sweep_rows(std::ostream& out, const std::string& param, double value,
                              std::uint64_t seed, std::span<const EffectPoint> effects) {
  std::map<std::pair<std::string, int>, std::pair<double, int>> sums;
  for (const auto& e : effects) {
    auto& [sum, n] = sums[{e.metric, e.phase}];
    sum += e.value;
    ++n;
  }
  for (const auto& [key, acc] : sums)
    out << param << ',' << format_metric(value) << ',' << seed << ',' << key.first << ','
        << key.second << ',' << format_metric(acc.first / acc.second) << '\n';
}

inline void cmd_sweep(const std::optional<std::string>& config_path, const std::string& param,
                      const std::string& values, const std::string& seeds,
                      const fs::path& out_dir, bool quiet) {
  const ExperimentConfig base = config_from(config_path);
  if (!is_sweepable(param)) throw ConfigError(param, "not a sweepable parameter");
  const auto value_list = split_list(values);
  const auto seed_list = split_list(seeds);
  if (value_list.empty()) throw UsageError("--values is empty");
  if (seed_list.empty()) throw UsageError("--seeds is empty");

  std::vector<std::uint64_t> parsed_seeds;
  for (const auto& s : seed_list) {
    const long long v = detail::parse_integer("seeds", s);
    if (v < 0) throw ConfigError("seeds", "must be >= 0");
    parsed_seeds.push_back(static_cast<std::uint64_t>(v));
  }
  // Validate the whole grid before running anything.
  std::vector<ExperimentConfig> configs;
  for (const auto& v : value_list) {
    ExperimentConfig c = base;
    set_field(c, param, v);
    validate(c);
    configs.push_back(c);
  }

  fs::create_directories(out_dir);
  std::ostringstream summary;
  summary << "param,value,seed,metric,phase,value\n";
  for (std::size_t i = 0; i < configs.size(); ++i) {
    for (std::uint64_t seed : parsed_seeds) {
      const ExperimentConfig cfg = with_seed(configs[i], seed);
      const std::string name = param + "=" + value_list[i] + "_seed=" + std::to_string(seed);
      const fs::path dir = out_dir / name;
      const auto run = simulate_into(cfg, dir);
      append_sweep_rows(summary, param, detail::parse_real(param, value_list[i]), seed,
                        run.effects);
      if (!quiet) std::cerr << "sweep: finished " << name << "\n";
    }
  }
  write_text(out_dir / "sweep.csv", summary.str());
}

// Directories holding a metrics.csv: the given one, or its immediate children.
inline std::vector<fs::path> run_dirs(const fs::path& root) {
  if (fs::exists(root / "metrics.csv")) return {root};
  std::vector<fs::path> out;
  if (fs::is_directory(root))
    for (const auto& entry : fs::directory_iterator(root))
      if (entry.is_directory() && fs::exists(entry.path() / "metrics.csv"))
        out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

// Concatenates the metrics.csv time series of several runs into one long table.
inline void cmd_report(const std::vector<std::string>& inputs, const fs::path& out_file,
                       bool quiet) {
  std::ostringstream out;
  out << "run,day,group,phase,metric,value\n";
  std::size_t runs = 0;
  for (const auto& input : inputs) {
    const auto dirs = run_dirs(input);
    if (dirs.empty()) throw std::runtime_error("no metrics.csv under '" + input + "'");
    for (const auto& dir : dirs) {
      std::ifstream in(dir / "metrics.csv");
      std::string line;
      if (!std::getline(in, line) || line != "day,group,phase,metric,value")
        throw std::runtime_error("unexpected header in '" + (dir / "metrics.csv").string() + "'");
      const std::string run = dir.filename().string();
      while (std::getline(in, line))
        if (!line.empty()) out << run << ',' << line << '\n';
      ++runs;
    }
  }
  if (out_file.has_parent_path()) fs::create_directories(out_file.parent_path());
  write_text(out_file, out.str());
  if (!quiet) std::cerr << "report: " << runs << " runs -> " << out_file.string() << "\n";
}

// Parses argv and dispatches. Returns the process exit status.
inline int run(int argc, const char* const* argv, std::ostream& err = std::cerr) {
  CLI::App app{"Bandit A/B simulation: simulate, recompute metrics, sweep, report"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
  auto common = [&](CLI::App* sub, bool with_seed) {
    sub->add_option("--config", config, "config file (key = value lines)");
    if (with_seed) sub->add_option("--seed", seed, "overrides the config seed");
    sub->add_flag("--quiet", quiet, "no progress output");
  };

  auto* simulate = app.add_subcommand("simulate", "run one experiment");
  common(simulate, true);
  simulate->add_option("--out", out, "output directory")->required();

  std::string log_path;
  auto* metrics = app.add_subcommand("metrics", "recompute metric tables from a log");
  common(metrics, true);
  metrics->add_option("--log", log_path, "impressions.jsonl")->required();
  metrics->add_option("--out", out, "output directory")->required();

  std::string param, values, seeds;
  auto* sweep = app.add_subcommand("sweep", "grid of runs over one parameter");
  common(sweep, false);
  sweep->add_option("--param", param, "config field to vary")->required();
  sweep->add_option("--values", values, "comma-separated values")->required();
  sweep->add_option("--seeds", seeds, "comma-separated seeds")->required();
  sweep->add_option("--out", out, "output directory")->required();

  std::vector<std::string> inputs;
  auto* report = app.add_subcommand("report", "concatenate group time series");
  report->add_option("inputs", inputs, "run or sweep directories")->required();
  report->add_option("--out", out, "output CSV")->required();
  report->add_flag("--quiet", quiet, "no progress output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, e_out;
    const int code = app.exit(e, o, e_out);
    std::cout << o.str();
    err << e_out.str();
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (*simulate) cmd_simulate(config, seed, out, quiet);
    else if (*metrics) cmd_metrics(log_path, config, seed, out, quiet);
    else if (*sweep) cmd_sweep(config, param, values, seeds, out, quiet);
    else if (*report) cmd_report(inputs, out, quiet);
    return kOk;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
}

}  // namespace banditab::cli
