#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "banditab/config.hpp"
#include "banditab/core.hpp"
#include "banditab/log_io.hpp"
#include "banditab/metrics.hpp"
#include "banditab/parallel.hpp"
#include "banditab/rng.hpp"

namespace banditab {

// Group sizes implied by (U, fractions): control and test are rounded and kept
// equal; production takes the remainder.
inline std::array<std::size_t, kGroupCount> group_sizes(int users, const GroupFractions& f) {
  const auto treated = static_cast<std::size_t>(std::llround(users * f.control));
  const auto U = static_cast<std::size_t>(users);
  const std::size_t both = std::min(U, 2 * treated);
  return {U - both, both / 2, both / 2};
}

// Per-(group, day) metric names, in output order. Entropy-type metrics carry their unit.
inline constexpr std::array<std::string_view, 6> kVolumeMetrics = {
    "plays", "plays_per_user", "impressions", "active_users", "loop_rate", "skip_rate"};
inline constexpr std::array<std::string_view, 4> kExplorationMetrics = {"ei_nats", "td",
                                                                        "iu_nats", "te"};

// Groups that get the exploration-efficiency suite.
constexpr bool has_exploration_metrics(Group g) { return g != Group::Production; }

struct MetricPoint {
  int day = 0;
  Group group = Group::Control;
  int phase = 1;
  std::string metric;
  double value = 0.0;
};

using DailySeries = std::vector<std::optional<double>>;

struct EffectPoint {
  int day = 0;
  int phase = 1;
  std::string metric;
  double value = 0.0;
};

struct MetricTable {
  int days = 0;
  std::vector<MetricPoint> points;
  std::vector<MetricsRow> rows;  // per user-day, exploration groups only
  std::vector<ActivityBucket> buckets;  // control group
  std::vector<std::int64_t> total_plays;  // per user over the whole log

  DailySeries series(Group g, std::string_view metric) const {
    DailySeries s(static_cast<std::size_t>(days));
    for (const auto& p : points)
      if (p.group == g && p.metric == metric) s[static_cast<std::size_t>(p.day)] = p.value;
    return s;
  }
};

// test/control - 1 per day; absent where either side is absent or control is zero.
inline DailySeries compute_effect(std::span<const std::optional<double>> test,
                                  std::span<const std::optional<double>> control) {
  const std::size_t n = std::min(test.size(), control.size());
  DailySeries out(n);
  for (std::size_t d = 0; d < n; ++d) {
    if (!test[d] || !control[d] || *control[d] == 0.0) continue;
    out[d] = *test[d] / *control[d] - 1.0;
  }
  return out;
}

inline std::vector<EffectPoint> effect_points(const MetricTable& table,
                                              const ExperimentConfig& cfg) {
  std::vector<std::string_view> names(kVolumeMetrics.begin(), kVolumeMetrics.end());
  names.insert(names.end(), kExplorationMetrics.begin(), kExplorationMetrics.end());
  std::vector<EffectPoint> out;
  std::vector<DailySeries> effects;
  for (auto name : names)
    effects.push_back(compute_effect(table.series(Group::Test, name),
                                     table.series(Group::Control, name)));
  for (int d = 0; d < table.days; ++d)
    for (std::size_t m = 0; m < names.size(); ++m)
      if (const auto& e = effects[m][static_cast<std::size_t>(d)])
        out.push_back({d, cfg.phase_of(d), std::string(names[m]), *e});
  return out;
}

struct AnalysisOptions {
  bool exploration_metrics = true;
  int threads = 1;
};

// Recomputes every reported metric from an impression log. A pure function of
// (log, cfg, seed): the Monte Carlo draws for P use per-(user, day) streams.
inline MetricTable compute_metric_table(std::span<const ImpressionRecord> log,
                                        const ExperimentConfig& cfg, std::uint64_t seed,
                                        const AnalysisOptions& opts = {}) {
  const auto K = static_cast<std::size_t>(cfg.topics);
  const auto U = static_cast<std::size_t>(cfg.users);
  MetricTable table;
  table.days = cfg.total_days();
  for (const auto& r : log) table.days = std::max(table.days, r.day + 1);
  table.total_plays.assign(U, 0);
  for (const auto& r : log) table.total_plays.at(r.user.index) += r.outcomes.play();

  // Stable order by day, then user.
  std::vector<std::size_t> order(log.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return log[a].day != log[b].day ? log[a].day < log[b].day
                                    : log[a].user.index < log[b].user.index;
  });

  const auto sizes = group_sizes(cfg.users, cfg.group_fractions);
  std::vector<TopicTally> user_tallies(U * K);
  std::array<std::vector<TopicTally>, kGroupCount> group_topic;
  for (auto& g : group_topic) g.assign(K, TopicTally{});

  std::size_t cursor = 0;
  for (int day = 0; day < table.days; ++day) {
    const std::size_t begin = cursor;
    while (cursor < order.size() && log[order[cursor]].day == day) ++cursor;
    std::vector<ImpressionRecord> today;
    today.reserve(cursor - begin);
    for (std::size_t i = begin; i < cursor; ++i) today.push_back(log[order[i]]);
    const int phase = cfg.phase_of(day);

    // Users with impressions today, with their group and record range.
    struct Active {
      UserId user;
      Group group;
      std::size_t first, last;
    };
    std::vector<Active> active;
    for (std::size_t i = 0; i < today.size(); ++i) {
      if (active.empty() || active.back().user != today[i].user)
        active.push_back({today[i].user, today[i].group, i, i + 1});
      else
        active.back().last = i + 1;
    }

    std::vector<std::optional<MetricsRow>> day_rows(active.size());
    if (opts.exploration_metrics) {
      parallel_for(active.size(), opts.threads, [&](std::size_t i) {
        const Active& a = active[i];
        if (!has_exploration_metrics(a.group)) return;
        const std::span<const TopicTally> mine(&user_tallies[a.user.index * K], K);
        const auto posteriors =
            build_posteriors(mine, group_topic[group_index(a.group)], cfg.prior_strength);
        Rng rng(seed, StreamTag::Metrics,
                {a.user.index, static_cast<std::uint64_t>(day)});
        const TopicDistribution P = estimate_P(posteriors, cfg.mc_samples, rng);
        const std::span<const ImpressionRecord> mine_today(&today[a.first], a.last - a.first);
        const TopicDistribution Q = *observed_Q(mine_today, a.user, cfg.topics);
        MetricsRow row;
        row.user = a.user;
        row.day = day;
        row.group = a.group;
        row.ei = exploration_inefficiency(P, Q, cfg.imputation_epsilon);
        row.td = topic_diversity(Q);
        row.iu = interest_uncertainty(P);
        row.te = topic_excellence(P, Q);
        for (const auto& r : mine_today) row.plays += r.outcomes.play();
        day_rows[i] = row;
      });
    }
    const std::size_t rows_before = table.rows.size();
    for (auto& r : day_rows)
      if (r) table.rows.push_back(*r);
    const std::span<const MetricsRow> rows_today(table.rows.data() + rows_before,
                                                 table.rows.size() - rows_before);

    for (Group g : kAllGroups) {
      const std::size_t size = sizes[group_index(g)];
      std::int64_t plays = 0, impressions = 0, users_active = 0;
      for (const auto& a : active) {
        if (a.group != g) continue;
        ++users_active;
        for (std::size_t i = a.first; i < a.last; ++i) {
          ++impressions;
          plays += today[i].outcomes.play();
        }
      }
      auto emit = [&](std::string_view name, double v) {
        table.points.push_back({day, g, phase, std::string(name), v});
      };
      // A group with nobody active that day has no rows. "plays" is the mean over
      // the users active that day, "plays_per_user" over the whole group.
      if (users_active == 0) continue;
      emit("plays", static_cast<double>(plays) / static_cast<double>(users_active));
      emit("plays_per_user", static_cast<double>(plays) / static_cast<double>(size));
      emit("impressions", static_cast<double>(impressions) / static_cast<double>(size));
      emit("active_users", static_cast<double>(users_active));
      const EngagementRates e = engagement_rates(today, g, day);
      if (e.loop_rate) emit("loop_rate", *e.loop_rate);
      if (e.skip_rate) emit("skip_rate", *e.skip_rate);
      if (opts.exploration_metrics && has_exploration_metrics(g)) {
        if (const auto agg = aggregate(rows_today, g, day)) {
          emit("ei_nats", agg->ei);
          emit("td", agg->td);
          emit("iu_nats", agg->iu);
          if (agg->te) emit("te", *agg->te);
        }
      }
    }

    for (const auto& r : today) {
      user_tallies[r.user.index * K + r.topic.index].add(r);
      group_topic[group_index(r.group)][r.topic.index].add(r);
    }
  }

  if (opts.exploration_metrics) {
    std::vector<MetricsRow> control_rows;
    for (const auto& r : table.rows)
      if (r.group == Group::Control) control_rows.push_back(r);
    table.buckets = bucket_by_activity(control_rows, table.total_plays, cfg.activity_buckets);
  }
  return table;
}

inline void write_metrics_csv(std::ostream& out, const MetricTable& table) {
  out << "day,group,phase,metric,value\n";
  for (const auto& p : table.points)
    out << p.day << ',' << group_name(p.group) << ',' << p.phase << ',' << p.metric << ','
        << format_metric(p.value) << '\n';
}

inline void write_effects_csv(std::ostream& out, std::span<const EffectPoint> effects) {
  out << "day,phase,metric,value\n";
  for (const auto& e : effects)
    out << e.day << ',' << e.phase << ',' << e.metric << ',' << format_metric(e.value) << '\n';
}

inline void write_buckets_csv(std::ostream& out, const MetricTable& table) {
  out << "bucket,metric,value,users\n";
  for (std::size_t b = 0; b < table.buckets.size(); ++b) {
    const auto& k = table.buckets[b];
    if (k.users == 0) continue;
    auto emit = [&](std::string_view name, const std::optional<double>& v) {
      if (v) out << b << ',' << name << ',' << format_metric(*v) << ',' << k.users << '\n';
    };
    emit("lower_plays", k.lower_plays);
    emit("upper_plays", k.upper_plays);
    emit("ei_nats", k.ei);
    emit("td", k.td);
    emit("iu_nats", k.iu);
    emit("te", k.te);
  }
}

}  // namespace banditab
