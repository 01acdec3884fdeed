#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "banditab/core.hpp"

namespace banditab {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error("config field '" + field + "': " + message), field_(std::move(field)) {}

  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct GroupFractions {
  double production = 0.8;
  double control = 0.1;
  double test = 0.1;

  double operator[](Group g) const {
    switch (g) {
      case Group::Production: return production;
      case Group::Control: return control;
      case Group::Test: return test;
    }
    return 0.0;
  }
  bool operator==(const GroupFractions&) const = default;
};

struct ExperimentConfig {
  int topics = 30;
  int users = 10000;
  GroupFractions group_fractions{};
  int slots_per_active_day = 10;
  int phase1_days = 21;
  int phase2_days = 14;
  double gamma = 2.0;
  TaskMap<double> alpha{{10.0, 5.0, 5.0, 5.0}};
  double prior_strength = 10.0;
  int mc_samples = 256;
  double imputation_epsilon = 1e-4;
  double availability_fraction = 0.5;
  int retrain_every_days = 1;
  std::uint64_t seed = 42;

  // Simulator knobs not tied to the bandit itself.
  double shrinkage_lambda = 25.0;
  double hot_topics_mean = 3.0;
  double activity_log_mean = -1.2;
  double activity_log_sd = 0.8;
  double novelty_lift = 0.0;
  int activity_buckets = 10;
  int threads = 1;

  int total_days() const { return phase1_days + phase2_days; }
  int phase_of(int day) const { return day < phase1_days ? 1 : 2; }

  bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

inline double parse_real(const std::string& field, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw ConfigError(field, "expected a number, got '" + text + "'");
  }
  if (used != text.size() || !std::isfinite(v))
    throw ConfigError(field, "expected a number, got '" + text + "'");
  return v;
}

inline long long parse_integer(const std::string& field, const std::string& text) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(text, &used);
  } catch (const std::exception&) {
    throw ConfigError(field, "expected an integer, got '" + text + "'");
  }
  if (used != text.size()) throw ConfigError(field, "expected an integer, got '" + text + "'");
  return v;
}

inline int parse_int(const std::string& field, const std::string& text) {
  const long long v = parse_integer(field, text);
  if (v < INT32_MIN || v > INT32_MAX) throw ConfigError(field, "out of range");
  return static_cast<int>(v);
}

inline std::vector<double> parse_real_array(const std::string& field, const std::string& text) {
  if (text.size() < 2 || text.front() != '[' || text.back() != ']')
    throw ConfigError(field, "expected an array like [0.8, 0.1, 0.1]");
  std::vector<double> out;
  std::stringstream ss(text.substr(1, text.size() - 2));
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_real(field, trim(item)));
  return out;
}

inline std::string format_real(double v) {
  // Shortest text that reads back to the same double.
  char buf[64];
  const auto end = std::to_chars(buf, buf + sizeof buf, v).ptr;
  std::string s(buf, end);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

inline const std::map<std::string, Setter, std::less<>>& scalar_setters() {
  static const std::map<std::string, Setter, std::less<>> setters = [] {
    std::map<std::string, Setter, std::less<>> m;
    auto integer = [&m](const char* key, int ExperimentConfig::*member) {
      m[key] = [key, member](ExperimentConfig& c, const std::string& v) {
        c.*member = parse_int(key, v);
      };
    };
    auto real = [&m](const char* key, double ExperimentConfig::*member) {
      m[key] = [key, member](ExperimentConfig& c, const std::string& v) {
        c.*member = parse_real(key, v);
      };
    };
    integer("topics", &ExperimentConfig::topics);
    integer("users", &ExperimentConfig::users);
    integer("slots_per_active_day", &ExperimentConfig::slots_per_active_day);
    integer("phase1_days", &ExperimentConfig::phase1_days);
    integer("phase2_days", &ExperimentConfig::phase2_days);
    real("gamma", &ExperimentConfig::gamma);
    real("prior_strength", &ExperimentConfig::prior_strength);
    integer("mc_samples", &ExperimentConfig::mc_samples);
    real("imputation_epsilon", &ExperimentConfig::imputation_epsilon);
    real("availability_fraction", &ExperimentConfig::availability_fraction);
    integer("retrain_every_days", &ExperimentConfig::retrain_every_days);
    real("shrinkage_lambda", &ExperimentConfig::shrinkage_lambda);
    real("hot_topics_mean", &ExperimentConfig::hot_topics_mean);
    real("activity_log_mean", &ExperimentConfig::activity_log_mean);
    real("activity_log_sd", &ExperimentConfig::activity_log_sd);
    real("novelty_lift", &ExperimentConfig::novelty_lift);
    integer("activity_buckets", &ExperimentConfig::activity_buckets);
    integer("threads", &ExperimentConfig::threads);
    for (TaskKind t : kAllTasks) {
      std::string key = "alpha_" + std::string(task_name(t));
      m[key] = [t, key](ExperimentConfig& c, const std::string& v) {
        c.alpha[t] = parse_real(key, v);
      };
    }
    m["seed"] = [](ExperimentConfig& c, const std::string& v) {
      const long long s = parse_integer("seed", v);
      if (s < 0) throw ConfigError("seed", "must be >= 0");
      c.seed = static_cast<std::uint64_t>(s);
    };
    return m;
  }();
  return setters;
}

}  // namespace detail

// Numeric scalar fields; these are the ones a sweep may vary.
inline bool is_sweepable(std::string_view key) {
  return detail::scalar_setters().count(key) > 0 && key != "users" && key != "topics" &&
         key != "threads" && key != "seed";
}

inline void validate(const ExperimentConfig& c) {
  if (c.topics < 1) throw ConfigError("topics", "must be >= 1");
  if (c.users < 1) throw ConfigError("users", "must be >= 1");
  const auto& f = c.group_fractions;
  if (f.production < 0 || f.control < 0 || f.test < 0)
    throw ConfigError("group_fractions", "fractions must be >= 0");
  if (std::abs(f.production + f.control + f.test - 1.0) > 1e-9)
    throw ConfigError("group_fractions", "fractions must sum to 1");
  if (std::abs(f.control - f.test) > 1e-12)
    throw ConfigError("group_fractions", "control and test fractions must be equal");
  if (c.slots_per_active_day < 1) throw ConfigError("slots_per_active_day", "must be >= 1");
  if (c.phase1_days < 0) throw ConfigError("phase1_days", "must be >= 0");
  if (c.phase2_days < 0) throw ConfigError("phase2_days", "must be >= 0");
  if (!(c.gamma >= 0)) throw ConfigError("gamma", "must be >= 0");
  bool any_alpha = false;
  for (TaskKind t : kAllTasks) {
    if (!(c.alpha[t] >= 0))
      throw ConfigError("alpha_" + std::string(task_name(t)), "must be >= 0");
    any_alpha = any_alpha || c.alpha[t] > 0;
  }
  if (!any_alpha) throw ConfigError("alpha_play", "at least one task weight must be > 0");
  if (!(c.prior_strength >= 0)) throw ConfigError("prior_strength", "must be >= 0");
  if (c.mc_samples < 1) throw ConfigError("mc_samples", "must be >= 1");
  if (!(c.imputation_epsilon > 0)) throw ConfigError("imputation_epsilon", "must be > 0");
  if (!(c.availability_fraction > 0 && c.availability_fraction <= 1))
    throw ConfigError("availability_fraction", "must be in (0, 1]");
  if (c.retrain_every_days < 1) throw ConfigError("retrain_every_days", "must be >= 1");
  if (!(c.shrinkage_lambda > 0)) throw ConfigError("shrinkage_lambda", "must be > 0");
  if (!(c.hot_topics_mean >= 1)) throw ConfigError("hot_topics_mean", "must be >= 1");
  if (!(c.activity_log_sd >= 0)) throw ConfigError("activity_log_sd", "must be >= 0");
  if (!(c.novelty_lift >= 0)) throw ConfigError("novelty_lift", "must be >= 0");
  if (c.activity_buckets < 2) throw ConfigError("activity_buckets", "must be >= 2");
  if (c.threads < 1) throw ConfigError("threads", "must be >= 1");
}

// Assigns one field from its textual value. Does not validate cross-field bounds.
inline void set_field(ExperimentConfig& c, const std::string& key, const std::string& value) {
  if (key == "group_fractions") {
    const auto v = detail::parse_real_array(key, value);
    if (v.size() != 3)
      throw ConfigError(key, "expected three entries (production, control, test)");
    c.group_fractions = {v[0], v[1], v[2]};
    return;
  }
  const auto& setters = detail::scalar_setters();
  const auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError(key, "unknown key");
  it->second(c, value);
}

// TOML-style `key = value` lines; `#` starts a comment.
inline ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno), "expected key = value");
    set_field(c, detail::trim(body.substr(0, eq)), detail::trim(body.substr(eq + 1)));
  }
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("path", "cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

inline std::string to_toml(const ExperimentConfig& c) {
  using detail::format_real;
  std::ostringstream out;
  out << "topics = " << c.topics << '\n'
      << "users = " << c.users << '\n'
      << "group_fractions = [" << format_real(c.group_fractions.production) << ", "
      << format_real(c.group_fractions.control) << ", " << format_real(c.group_fractions.test)
      << "]\n"
      << "slots_per_active_day = " << c.slots_per_active_day << '\n'
      << "phase1_days = " << c.phase1_days << '\n'
      << "phase2_days = " << c.phase2_days << '\n'
      << "gamma = " << format_real(c.gamma) << '\n';
  for (TaskKind t : kAllTasks)
    out << "alpha_" << task_name(t) << " = " << format_real(c.alpha[t]) << '\n';
  out << "prior_strength = " << format_real(c.prior_strength) << '\n'
      << "mc_samples = " << c.mc_samples << '\n'
      << "imputation_epsilon = " << format_real(c.imputation_epsilon) << '\n'
      << "availability_fraction = " << format_real(c.availability_fraction) << '\n'
      << "retrain_every_days = " << c.retrain_every_days << '\n'
      << "seed = " << c.seed << '\n'
      << "shrinkage_lambda = " << format_real(c.shrinkage_lambda) << '\n'
      << "hot_topics_mean = " << format_real(c.hot_topics_mean) << '\n'
      << "activity_log_mean = " << format_real(c.activity_log_mean) << '\n'
      << "activity_log_sd = " << format_real(c.activity_log_sd) << '\n'
      << "novelty_lift = " << format_real(c.novelty_lift) << '\n'
      << "activity_buckets = " << c.activity_buckets << '\n'
      << "threads = " << c.threads << '\n';
  return out.str();
}

}  // namespace banditab
