#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <random>
#include <vector>

#include "banditab/config.hpp"
#include "banditab/core.hpp"
#include "banditab/log_io.hpp"
#include "banditab/rng.hpp"

namespace banditab {

// Ground-truth preferences of one simulated user. The simulator's own choice of
// shape: a few "hot" topics with high affinity and a low-affinity long tail.
struct UserProfile {
  UserId user{};
  std::vector<TaskMap<double>> affinity;  // one entry per topic, values in [0, 1]
  double activity_rate = 0.0;             // probability of being active on a given day
  double novelty_lift = 0.0;              // play-probability bump on a first exposure
  std::vector<TopicId> hot_topics;        // ascending
  std::vector<double> completion;         // P(completed | play) per topic

  TopicId best_topic() const {
    std::uint32_t best = 0;
    for (std::uint32_t k = 1; k < affinity.size(); ++k)
      if (affinity[k][TaskKind::Play] > affinity[best][TaskKind::Play]) best = k;
    return TopicId{best};
  }

  bool operator==(const UserProfile&) const = default;
};

struct Population {
  std::vector<UserProfile> profiles;
  std::uint64_t seed = 0;

  const UserProfile& operator[](UserId u) const { return profiles[u.index]; }
  std::size_t size() const { return profiles.size(); }
  bool operator==(const Population&) const = default;
};

namespace env_detail {

inline constexpr double kHotPlayA = 6.0, kHotPlayB = 2.5;    // mean ~0.71
inline constexpr double kColdPlayA = 1.2, kColdPlayB = 18.0;  // mean ~0.06
inline constexpr double kCommentScale = 0.15;
inline constexpr double kShareScale = 0.05;
inline constexpr double kLikeScale = 0.35;
inline constexpr double kTopicPopularityExponent = 0.8;
inline constexpr double kLoopGivenPlay = 0.4;
inline constexpr double kCompletionFloor = 0.3;

inline TaskMap<double> affinity_from_play(double play) {
  TaskMap<double> a;
  a[TaskKind::Play] = play;
  a[TaskKind::Comment] = kCommentScale * play;
  a[TaskKind::Share] = kShareScale * play;
  a[TaskKind::Like] = kLikeScale * play;
  return a;
}

// Zipf-like topic popularity so that some topics are broadly liked.
inline std::vector<double> topic_popularity(int topics) {
  std::vector<double> w(static_cast<std::size_t>(topics));
  for (int k = 0; k < topics; ++k) w[k] = 1.0 / std::pow(k + 1.0, kTopicPopularityExponent);
  return w;
}

// Topic-level attention: the less popular a topic, the more likely a started
// video is finished.
inline double completion_given_play(double play, int topic, int topics) {
  const double rank = topics > 1 ? static_cast<double>(topic) / (topics - 1) : 0.0;
  return std::clamp(play * (kCompletionFloor + (1.0 - kCompletionFloor) * rank), 0.0, 1.0);
}

}  // namespace env_detail

inline UserProfile generate_profile(const ExperimentConfig& cfg, std::uint64_t seed, UserId u) {
  using namespace env_detail;
  Rng rng(seed, StreamTag::Population, {u.index});
  const int K = cfg.topics;

  UserProfile p;
  p.user = u;
  p.novelty_lift = cfg.novelty_lift;

  const int extra =
      std::poisson_distribution<int>(std::max(0.0, cfg.hot_topics_mean - 1.0))(rng);
  const int n_hot = std::min(K, 1 + extra);

  // Weighted sampling without replacement over topic popularity.
  std::vector<double> weight = topic_popularity(K);
  std::vector<bool> hot(static_cast<std::size_t>(K), false);
  for (int i = 0; i < n_hot; ++i) {
    const double total = std::accumulate(weight.begin(), weight.end(), 0.0);
    double r = rng.uniform() * total;
    int pick = K - 1;
    for (int k = 0; k < K; ++k) {
      if (weight[k] <= 0) continue;
      if (r < weight[k]) {
        pick = k;
        break;
      }
      r -= weight[k];
    }
    while (hot[pick]) pick = (pick + 1) % K;  // only reachable through rounding at the tail
    hot[pick] = true;
    weight[pick] = 0.0;
  }

  p.affinity.resize(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    const double play =
        hot[k] ? rng.beta(kHotPlayA, kHotPlayB) : rng.beta(kColdPlayA, kColdPlayB);
    p.affinity[k] = affinity_from_play(play);
    p.completion.push_back(completion_given_play(play, k, K));
    if (hot[k]) p.hot_topics.push_back(TopicId{static_cast<std::uint32_t>(k)});
  }

  p.activity_rate =
      std::clamp(std::exp(rng.normal(cfg.activity_log_mean, cfg.activity_log_sd)), 1e-4, 1.0);
  return p;
}

// Regenerating from the same (cfg, seed) is bit-identical; each profile has its own stream.
inline Population generate_population(const ExperimentConfig& cfg, std::uint64_t seed) {
  Population pop;
  pop.seed = seed;
  pop.profiles.reserve(static_cast<std::size_t>(cfg.users));
  for (int u = 0; u < cfg.users; ++u)
    pop.profiles.push_back(generate_profile(cfg, seed, UserId{static_cast<std::uint32_t>(u)}));
  return pop;
}

inline std::size_t available_count(int topics, double fraction) {
  // Guard against 0.1 * 30 = 3.0000000000000004 rounding up.
  const double raw = std::ceil(fraction * topics - 1e-9);
  return static_cast<std::size_t>(std::clamp(raw, 1.0, static_cast<double>(topics)));
}

// Uniform subset of ceil(fraction * K) topics, returned in ascending order.
template <class URBG>
std::vector<TopicId> available_actions(int topics, double fraction, URBG& rng) {
  const std::size_t n = available_count(topics, fraction);
  std::vector<std::uint32_t> idx(static_cast<std::size_t>(topics));
  std::iota(idx.begin(), idx.end(), 0u);
  if (n < idx.size()) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
  }
  std::vector<TopicId> out;
  out.reserve(n);
  for (auto k : idx) out.push_back(TopicId{k});
  return out;
}

// Steady-state play probability; first exposures get the novelty lift.
inline double play_probability(const UserProfile& p, TopicId topic, std::int64_t prior_exposures) {
  double prob = p.affinity[topic.index][TaskKind::Play];
  if (prior_exposures == 0) prob *= 1.0 + p.novelty_lift;
  return std::clamp(prob, 0.0, 1.0);
}

template <class URBG>
Outcomes sample_outcomes(const UserProfile& p, TopicId topic, std::int64_t prior_exposures,
                         URBG& rng) {
  const TaskMap<double>& a = p.affinity[topic.index];
  const double base = a[TaskKind::Play];
  Outcomes::Flags f;
  f.play = rng.bernoulli(play_probability(p, topic, prior_exposures));
  f.comment = rng.bernoulli(a[TaskKind::Comment]);
  f.share = rng.bernoulli(a[TaskKind::Share]);
  f.like = rng.bernoulli(a[TaskKind::Like]);
  if (f.play) {
    f.completed = rng.bernoulli(p.completion[topic.index]);
    f.loop = rng.bernoulli(env_detail::kLoopGivenPlay * base);
    // A started but abandoned video is a skip with probability 1 - affinity.
    if (!f.completed) f.skip = rng.bernoulli(1.0 - base);
  }
  return Outcomes(f);
}

// Line-delimited dump for inspection: one JSON object per user.
inline void write_population(std::ostream& out, const Population& pop) {
  for (const auto& p : pop.profiles) {
    std::string line = "{\"user\":" + std::to_string(p.user.index) + ",\"activity_rate\":";
    detail::append_real(line, p.activity_rate);
    line += ",\"novelty_lift\":";
    detail::append_real(line, p.novelty_lift);
    line += ",\"hot_topics\":[";
    for (std::size_t i = 0; i < p.hot_topics.size(); ++i) {
      if (i) line += ',';
      line += std::to_string(p.hot_topics[i].index);
    }
    line += "],\"play_affinity\":[";
    for (std::size_t k = 0; k < p.affinity.size(); ++k) {
      if (k) line += ',';
      detail::append_real(line, p.affinity[k][TaskKind::Play]);
    }
    line += "]}";
    out << line << '\n';
  }
}

}  // namespace banditab
