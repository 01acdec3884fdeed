#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "banditab/core.hpp"
#include "banditab/rng.hpp"

namespace banditab {

// Impressions and completions of one topic (for one user or for a population).
struct TopicTally {
  std::int64_t impressions = 0;
  std::int64_t completions = 0;

  void add(const ImpressionRecord& r) {
    ++impressions;
    if (r.outcomes.completed()) ++completions;
  }
  bool operator==(const TopicTally&) const = default;
};

struct BetaPosterior {
  double a = 1.0;
  double b = 1.0;

  // Beta(1 + s*m, 1 + s*(1 - m)).
  static BetaPosterior prior(double mean, double strength) {
    return {1.0 + strength * mean, 1.0 + strength * (1.0 - mean)};
  }

  BetaPosterior updated(std::int64_t impressions, std::int64_t completions) const {
    return {a + static_cast<double>(completions),
            b + static_cast<double>(impressions - completions)};
  }

  double mean() const { return a / (a + b); }
  bool operator==(const BetaPosterior&) const = default;
};

class TopicDistribution {
 public:
  TopicDistribution() = default;

  static TopicDistribution from_weights(std::vector<double> w) {
    if (w.empty()) throw std::invalid_argument("topic distribution: empty");
    double total = 0.0;
    for (double x : w) {
      if (!(x >= 0) || !std::isfinite(x))
        throw std::invalid_argument("topic distribution: negative or non-finite weight");
      total += x;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw std::invalid_argument("topic distribution: weights must sum to 1");
    TopicDistribution d;
    d.weights_ = std::move(w);
    return d;
  }

  static TopicDistribution from_counts(std::span<const std::int64_t> counts) {
    std::int64_t total = 0;
    for (auto c : counts) {
      if (c < 0) throw std::invalid_argument("topic distribution: negative count");
      total += c;
    }
    if (total == 0) throw std::invalid_argument("topic distribution: no mass");
    std::vector<double> w(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i)
      w[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
    TopicDistribution d;
    d.weights_ = std::move(w);
    return d;
  }

  std::size_t size() const { return weights_.size(); }
  double operator[](std::size_t i) const { return weights_[i]; }
  std::span<const double> weights() const { return weights_; }

  std::size_t support_size() const {
    return static_cast<std::size_t>(
        std::count_if(weights_.begin(), weights_.end(), [](double x) { return x > 0; }));
  }

 private:
  std::vector<double> weights_;
};

// Light prior centred on the mean of the topic's and the user's completion rates
// (0.5 for a rate with no data), then a conjugate update with the user's own
// history for each topic. Never-seen topics keep the prior.
inline std::vector<BetaPosterior> build_posteriors(std::span<const TopicTally> user_tallies,
                                                   std::span<const TopicTally> topic_tallies,
                                                   double prior_strength) {
  if (user_tallies.size() != topic_tallies.size())
    throw std::invalid_argument("build_posteriors: tally size mismatch");
  if (!(prior_strength >= 0)) throw std::invalid_argument("build_posteriors: strength < 0");
  auto rate = [](std::int64_t c, std::int64_t n) {
    return n > 0 ? static_cast<double>(c) / static_cast<double>(n) : 0.5;
  };
  TopicTally user_total;
  for (const auto& t : user_tallies) {
    user_total.impressions += t.impressions;
    user_total.completions += t.completions;
  }
  const double user_rate = rate(user_total.completions, user_total.impressions);

  std::vector<BetaPosterior> out(user_tallies.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double topic_rate = rate(topic_tallies[k].completions, topic_tallies[k].impressions);
    const double m = 0.5 * (topic_rate + user_rate);
    out[k] = BetaPosterior::prior(m, prior_strength)
                 .updated(user_tallies[k].impressions, user_tallies[k].completions);
  }
  return out;
}

// Same, tallying `history` directly: records with day < before_day; topic rates
// come from every such record, the user's own from that user's records.
inline std::vector<BetaPosterior> build_posteriors(std::span<const ImpressionRecord> history,
                                                   UserId user, int topics, int before_day,
                                                   double prior_strength) {
  std::vector<TopicTally> mine(static_cast<std::size_t>(topics));
  std::vector<TopicTally> all(static_cast<std::size_t>(topics));
  for (const auto& r : history) {
    if (r.day >= before_day) continue;
    all.at(r.topic.index).add(r);
    if (r.user == user) mine[r.topic.index].add(r);
  }
  return build_posteriors(mine, all, prior_strength);
}

// Monte Carlo estimate of P(topic k has the largest relevance draw).
template <class URBG>
TopicDistribution estimate_P(std::span<const BetaPosterior> posteriors, int mc_samples,
                             URBG& rng) {
  if (posteriors.empty()) throw std::invalid_argument("estimate_P: no topics");
  if (mc_samples < 1) throw std::invalid_argument("estimate_P: mc_samples < 1");
  const std::size_t K = posteriors.size();
  std::vector<std::gamma_distribution<double>> ga, gb;
  ga.reserve(K);
  gb.reserve(K);
  for (const auto& p : posteriors) {
    ga.emplace_back(p.a, 1.0);
    gb.emplace_back(p.b, 1.0);
  }
  std::vector<std::int64_t> wins(K, 0);
  for (int s = 0; s < mc_samples; ++s) {
    std::size_t best = 0;
    double best_x = -1.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double x = ga[k](rng);
      const double y = gb[k](rng);
      const double v = x / (x + y);
      if (v > best_x) {  // strict: ties stay with the lower index
        best_x = v;
        best = k;
      }
    }
    ++wins[best];
  }
  return TopicDistribution::from_counts(wins);
}

// Empirical distribution of the topics served to `user` among `today`.
inline std::optional<TopicDistribution> observed_Q(std::span<const ImpressionRecord> today,
                                                   UserId user, int topics) {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(topics), 0);
  bool any = false;
  for (const auto& r : today) {
    if (r.user != user) continue;
    ++counts.at(r.topic.index);
    any = true;
  }
  if (!any) return std::nullopt;
  return TopicDistribution::from_counts(counts);
}

// KL(P || Q) in nats. Topics with p > 0 and q = 0 get q = epsilon, then Q is renormalised.
inline double exploration_inefficiency(const TopicDistribution& P, const TopicDistribution& Q,
                                       double epsilon) {
  if (!(epsilon > 0)) throw std::invalid_argument("exploration_inefficiency: epsilon must be > 0");
  if (P.size() != Q.size()) throw std::invalid_argument("exploration_inefficiency: size mismatch");
  double q_total = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i)
    q_total += (P[i] > 0 && Q[i] == 0) ? epsilon : Q[i];
  double kl = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    if (P[i] <= 0) continue;
    const double q = (Q[i] == 0 ? epsilon : Q[i]) / q_total;
    kl += P[i] * std::log(P[i] / q);
  }
  return std::max(kl, 0.0);
}

inline int topic_diversity(const TopicDistribution& Q) {
  return static_cast<int>(Q.support_size());
}

// Shannon entropy in nats.
inline double interest_uncertainty(const TopicDistribution& P) {
  double h = 0.0;
  for (double p : P.weights())
    if (p > 0) h -= p * std::log(p);
  return std::max(h, 0.0);
}

inline double topic_excellence(const TopicDistribution& P, const TopicDistribution& Q) {
  if (P.size() != Q.size()) throw std::invalid_argument("topic_excellence: size mismatch");
  double dot = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) dot += P[i] * Q[i];
  return dot;
}

struct MetricsRow {
  UserId user{};
  int day = 0;
  Group group = Group::Control;
  double ei = 0.0;
  int td = 0;
  double iu = 0.0;
  double te = 0.0;
  std::int64_t plays = 0;
};

struct GroupMetrics {
  double ei = 0.0;
  double td = 0.0;
  double iu = 0.0;
  std::optional<double> te;  // play-weighted; absent when nobody played
  std::size_t users = 0;
};

// User-level means; topic excellence weighted by plays.
inline std::optional<GroupMetrics> aggregate(std::span<const MetricsRow> rows, Group group,
                                             int day) {
  GroupMetrics g;
  double te_num = 0.0;
  std::int64_t te_den = 0;
  for (const auto& r : rows) {
    if (r.group != group || r.day != day) continue;
    ++g.users;
    g.ei += r.ei;
    g.td += r.td;
    g.iu += r.iu;
    te_num += r.te * static_cast<double>(r.plays);
    te_den += r.plays;
  }
  if (g.users == 0) return std::nullopt;
  const auto n = static_cast<double>(g.users);
  g.ei /= n;
  g.td /= n;
  g.iu /= n;
  if (te_den > 0) g.te = te_num / static_cast<double>(te_den);
  return g;
}

struct ActivityBucket {
  double lower_plays = 0.0;  // bucket bounds on total plays per user
  double upper_plays = 0.0;
  std::size_t users = 0;
  std::optional<double> ei, td, iu, te;
};

// Users (those with at least one row) binned by total plays on a log1p scale into
// equal-width bins. Metrics are averaged per user first, then across the bucket;
// topic excellence is play-weighted at both levels.
inline std::vector<ActivityBucket> bucket_by_activity(std::span<const MetricsRow> rows,
                                                      std::span<const std::int64_t> total_plays,
                                                      int n_buckets) {
  if (n_buckets < 2) throw std::invalid_argument("bucket_by_activity: n_buckets < 2");
  struct UserAcc {
    std::size_t days = 0;
    double ei = 0, td = 0, iu = 0, te_num = 0;
    std::int64_t te_den = 0;
  };
  std::map<std::uint32_t, UserAcc> per_user;
  for (const auto& r : rows) {
    auto& u = per_user[r.user.index];
    ++u.days;
    u.ei += r.ei;
    u.td += r.td;
    u.iu += r.iu;
    u.te_num += r.te * static_cast<double>(r.plays);
    u.te_den += r.plays;
  }

  std::vector<ActivityBucket> buckets(static_cast<std::size_t>(n_buckets));
  if (per_user.empty()) return buckets;

  auto activity = [&](std::uint32_t u) {
    return std::log1p(static_cast<double>(total_plays[u]));
  };
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& [u, _] : per_user) {
    lo = std::min(lo, activity(u));
    hi = std::max(hi, activity(u));
  }
  const double width = (hi - lo) / n_buckets;
  for (int b = 0; b < n_buckets; ++b) {
    buckets[b].lower_plays = std::expm1(lo + width * b);
    buckets[b].upper_plays = std::expm1(b + 1 == n_buckets ? hi : lo + width * (b + 1));
  }

  struct BucketAcc {
    double ei = 0, td = 0, iu = 0, te_num = 0;
    double te_den = 0;
  };
  std::vector<BucketAcc> acc(buckets.size());
  for (const auto& [u, a] : per_user) {
    std::size_t b = 0;
    if (width > 0)
      b = std::min<std::size_t>(buckets.size() - 1,
                                static_cast<std::size_t>((activity(u) - lo) / width));
    const auto d = static_cast<double>(a.days);
    ++buckets[b].users;
    acc[b].ei += a.ei / d;
    acc[b].td += a.td / d;
    acc[b].iu += a.iu / d;
    if (a.te_den > 0) {
      const double user_te = a.te_num / static_cast<double>(a.te_den);
      acc[b].te_num += user_te * static_cast<double>(total_plays[u]);
      acc[b].te_den += static_cast<double>(total_plays[u]);
    }
  }
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    if (buckets[b].users == 0) continue;
    const auto n = static_cast<double>(buckets[b].users);
    buckets[b].ei = acc[b].ei / n;
    buckets[b].td = acc[b].td / n;
    buckets[b].iu = acc[b].iu / n;
    if (acc[b].te_den > 0) buckets[b].te = acc[b].te_num / acc[b].te_den;
  }
  return buckets;
}

struct EngagementRates {
  std::optional<double> loop_rate;  // loops per play
  std::optional<double> skip_rate;  // skips per impression
};

inline EngagementRates engagement_rates(std::span<const ImpressionRecord> records, Group group,
                                        int day) {
  std::int64_t impressions = 0, plays = 0, loops = 0, skips = 0;
  for (const auto& r : records) {
    if (r.group != group || r.day != day) continue;
    ++impressions;
    plays += r.outcomes.play();
    loops += r.outcomes.loop();
    skips += r.outcomes.skip();
  }
  EngagementRates e;
  if (plays > 0) e.loop_rate = static_cast<double>(loops) / static_cast<double>(plays);
  if (impressions > 0) e.skip_rate = static_cast<double>(skips) / static_cast<double>(impressions);
  return e;
}

}  // namespace banditab
