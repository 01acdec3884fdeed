#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

#include "banditab/analysis.hpp"
#include "banditab/config.hpp"
#include "banditab/core.hpp"
#include "banditab/env.hpp"
#include "banditab/model.hpp"
#include "banditab/parallel.hpp"
#include "banditab/policy.hpp"
#include "banditab/rng.hpp"

namespace banditab {

struct GroupAssignment {
  std::vector<Group> groups;  // indexed by user
  GroupFractions fractions{};
  std::uint64_t seed = 0;

  Group operator[](UserId u) const { return groups.at(u.index); }

  std::array<std::size_t, kGroupCount> counts() const {
    std::array<std::size_t, kGroupCount> c{};
    for (Group g : groups) ++c[group_index(g)];
    return c;
  }
};

// Seeded shuffle of user indices, then cut into control, test, production.
inline GroupAssignment assign_groups(int users, const GroupFractions& fractions,
                                     std::uint64_t seed) {
  if (std::abs(fractions.control - fractions.test) > 1e-12)
    throw std::invalid_argument("assign_groups: control and test fractions must be equal");
  if (std::abs(fractions.production + fractions.control + fractions.test - 1.0) > 1e-9)
    throw std::invalid_argument("assign_groups: fractions must sum to 1");
  const auto sizes = group_sizes(users, fractions);

  std::vector<std::uint32_t> perm(static_cast<std::size_t>(users));
  for (std::uint32_t i = 0; i < perm.size(); ++i) perm[i] = i;
  Rng rng(seed, StreamTag::Assignment, {});
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);

  GroupAssignment a;
  a.fractions = fractions;
  a.seed = seed;
  a.groups.assign(perm.size(), Group::Production);
  const std::size_t n_control = sizes[group_index(Group::Control)];
  const std::size_t n_test = sizes[group_index(Group::Test)];
  for (std::size_t i = 0; i < n_control; ++i) a.groups[perm[i]] = Group::Control;
  for (std::size_t i = n_control; i < n_control + n_test; ++i) a.groups[perm[i]] = Group::Test;
  return a;
}

// Phase I: one model fit on every group. Phase II: separate Control and Test models,
// each fit on its own group. Both use the cumulative window [0, day - 1].
struct PhasePlan {
  int phase1_days = 21;
  int phase2_days = 14;
  int retrain_every_days = 1;

  static PhasePlan from_config(const ExperimentConfig& cfg) {
    return {cfg.phase1_days, cfg.phase2_days, cfg.retrain_every_days};
  }

  int total_days() const { return phase1_days + phase2_days; }
  int phase_of(int day) const { return day < phase1_days ? 1 : 2; }

  DataSlice slice_for(Group g, int day) const {
    return phase_of(day) == 1 ? DataSlice::all_groups(0, day - 1)
                              : DataSlice::only(g, 0, day - 1);
  }

  bool refit_on(int day) const {
    if (day == 0) return false;
    const int start = phase_of(day) == 1 ? 0 : phase1_days;
    return (day - start) % retrain_every_days == 0;
  }
};

struct ExperimentState {
  ExperimentConfig cfg;
  std::uint64_t seed = 0;
  Population population;
  GroupAssignment assignment;
  PhasePlan plan;
  CountStore counts;
  std::vector<ImpressionRecord> log;
  std::array<std::shared_ptr<const RewardModel>, kGroupCount> models;
  int fits = 0;

  ExperimentState(const ExperimentConfig& c, std::uint64_t s)
      : cfg(c),
        seed(s),
        population(generate_population(c, s)),
        assignment(assign_groups(c.users, c.group_fractions, s)),
        plan(PhasePlan::from_config(c)),
        counts(c.users, c.topics) {
    const auto prior = std::make_shared<const RewardModel>(
        RewardModel::prior(shape(), cfg.shrinkage_lambda));
    models.fill(prior);
  }

  ModelShape shape() const { return {cfg.users, cfg.topics}; }
  const RewardModel& model_for(Group g) const { return *models[group_index(g)]; }

  // Brings the serving models up to date for `day` per the phase plan.
  void prepare_models(int day) {
    const bool phase_switch = day > 0 && day == plan.phase1_days;
    if (!plan.refit_on(day) && !phase_switch) return;
    if (plan.phase_of(day) == 1) {
      const auto shared = std::make_shared<const RewardModel>(fit(
          log, plan.slice_for(Group::Production, day), cfg.shrinkage_lambda, shape(), ++fits));
      models.fill(shared);
    } else {
      // Two models only. Production keeps serving the last shared model.
      for (Group g : {Group::Control, Group::Test})
        models[group_index(g)] = std::make_shared<const RewardModel>(
            fit(log, plan.slice_for(g, day), cfg.shrinkage_lambda, shape(), ++fits));
    }
  }
};

// One simulated day: active users get slots_per_active_day impressions each.
// Test users are served by UCB, everyone else greedily. Output order is
// (user, slot) regardless of the thread count.
inline void run_day(int day, ExperimentState& s) {
  const ExperimentConfig& cfg = s.cfg;
  const ScoreParams params = ScoreParams::from_config(cfg);
  const int phase = s.plan.phase_of(day);
  const auto U = static_cast<std::size_t>(cfg.users);
  std::vector<std::vector<ImpressionRecord>> produced(U);

  parallel_for(U, cfg.threads, [&](std::size_t i) {
    const UserId user{static_cast<std::uint32_t>(i)};
    const UserProfile& profile = s.population[user];
    Rng activity(s.seed, StreamTag::Activity, {i, static_cast<std::uint64_t>(day)});
    if (!activity.bernoulli(profile.activity_rate)) return;

    const Group group = s.assignment[user];
    const RewardModel& model = s.model_for(group);
    auto& out = produced[i];
    out.reserve(static_cast<std::size_t>(cfg.slots_per_active_day));
    for (int slot = 0; slot < cfg.slots_per_active_day; ++slot) {
      const std::initializer_list<std::uint64_t> where = {i, static_cast<std::uint64_t>(day),
                                                          static_cast<std::uint64_t>(slot)};
      Rng avail(s.seed, StreamTag::Availability, where);
      const auto candidates = available_actions(cfg.topics, cfg.availability_fraction, avail);
      const Selection sel = group == Group::Test
                                ? select_action(user, candidates, model, s.counts, params)
                                : greedy_select(user, candidates, model, params);
      Rng outcome_rng(s.seed, StreamTag::Outcome,
                      {i, static_cast<std::uint64_t>(day), static_cast<std::uint64_t>(slot),
                       sel.topic.index});
      const Outcomes o =
          sample_outcomes(profile, sel.topic, s.counts.per_topic(user, sel.topic), outcome_rng);
      out.push_back({day, user, sel.topic, group, phase, o, sel.score});
      record_selection(s.counts, user, sel.topic);
    }
  });

  for (auto& recs : produced) s.log.insert(s.log.end(), recs.begin(), recs.end());
}

struct RunOptions {
  bool exploration_metrics = true;
};

struct ExperimentResult {
  std::vector<ImpressionRecord> log;
  MetricTable metrics;
  std::vector<EffectPoint> effects;
  int model_fits = 0;
};

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed,
                                       const RunOptions& opts = {}) {
  validate(cfg);
  ExperimentState state(cfg, seed);
  for (int day = 0; day < state.plan.total_days(); ++day) {
    state.prepare_models(day);
    run_day(day, state);
  }
  ExperimentResult result;
  result.model_fits = state.fits;
  result.metrics = compute_metric_table(state.log, cfg, seed,
                                        AnalysisOptions{opts.exploration_metrics, cfg.threads});
  result.effects = effect_points(result.metrics, cfg);
  result.log = std::move(state.log);
  return result;
}

}  // namespace banditab
