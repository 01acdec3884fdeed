#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "banditab/config.hpp"
#include "banditab/core.hpp"

namespace banditab {

class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ScoreParams {
  double gamma = 0.0;  // exploration aggressiveness
  TaskMap<double> alpha{{1.0, 0.0, 0.0, 0.0}};

  static ScoreParams from_config(const ExperimentConfig& cfg) {
    return ScoreParams{cfg.gamma, cfg.alpha};
  }

  void validate() const {
    if (!(gamma >= 0)) throw ContractViolation("score params: gamma must be >= 0");
    bool any = false;
    for (TaskKind t : kAllTasks) {
      if (!(alpha[t] >= 0)) throw ContractViolation("score params: alpha must be >= 0");
      any = any || alpha[t] > 0;
    }
    if (!any) throw ContractViolation("score params: at least one alpha must be > 0");
  }
};

inline constexpr double kUntriedScore = std::numeric_limits<double>::infinity();

// Upper confidence bound of one arm for one user:
//   sum_T alpha_T * r_hat_T + gamma * sqrt(ln N_total / N_topic).
// An untried arm scores +inf when gamma > 0, and the bonus vanishes for N_total <= 1.
inline double ucb_score(const TaskMap<double>& estimates, std::int64_t n_total,
                        std::int64_t n_topic, const ScoreParams& params) {
  if (n_total < 0 || n_topic < 0) throw ContractViolation("ucb_score: negative count");
  if (n_topic > n_total) throw ContractViolation("ucb_score: topic count exceeds total");
  double mean = 0.0;
  for (TaskKind t : kAllTasks) mean += params.alpha[t] * estimates[t];
  if (params.gamma == 0.0) return mean;
  if (n_topic == 0) return kUntriedScore;
  const double log_total = n_total > 1 ? std::log(static_cast<double>(n_total)) : 0.0;
  return mean + params.gamma * std::sqrt(log_total / static_cast<double>(n_topic));
}

// Interaction counts N_t (per user) and N_{t,a} (per user and topic).
class CountStore {
 public:
  CountStore() = default;
  CountStore(int users, int topics)
      : topics_(topics),
        total_(static_cast<std::size_t>(users), 0),
        per_topic_(static_cast<std::size_t>(users) * static_cast<std::size_t>(topics), 0) {}

  std::int64_t total(UserId u) const { return total_.at(u.index); }
  std::int64_t per_topic(UserId u, TopicId a) const { return per_topic_.at(offset(u, a)); }
  int topics() const { return topics_; }
  int users() const { return static_cast<int>(total_.size()); }

  void record(UserId u, TopicId a) {
    ++per_topic_.at(offset(u, a));
    ++total_.at(u.index);
  }

  bool operator==(const CountStore&) const = default;

 private:
  std::size_t offset(UserId u, TopicId a) const {
    if (a.index >= static_cast<std::uint32_t>(topics_))
      throw ContractViolation("count store: topic out of range");
    return static_cast<std::size_t>(u.index) * static_cast<std::size_t>(topics_) + a.index;
  }

  int topics_ = 0;
  std::vector<std::int64_t> total_;
  std::vector<std::int64_t> per_topic_;
};

inline CountStore& record_selection(CountStore& counts, UserId u, TopicId a) {
  counts.record(u, a);
  return counts;
}

struct Selection {
  TopicId topic{};
  double score = 0.0;
};

// Anything with `TaskMap<double> estimates(UserId, TopicId) const`.
template <class M>
concept RewardEstimator = requires(const M& m, UserId u, TopicId a) {
  { m.estimates(u, a) } -> std::convertible_to<TaskMap<double>>;
};

// Argmax of ucb_score; ties go to the smaller N_topic, then the smaller TopicId.
template <RewardEstimator Model>
Selection select_action(UserId user, std::span<const TopicId> candidates, const Model& model,
                        const CountStore& counts, const ScoreParams& params) {
  if (candidates.empty()) throw ContractViolation("select_action: empty candidate set");
  const std::int64_t n_total = counts.total(user);
  Selection best{};
  std::int64_t best_n = 0;
  bool first = true;
  for (TopicId a : candidates) {
    const std::int64_t n = counts.per_topic(user, a);
    const double s = ucb_score(model.estimates(user, a), n_total, n, params);
    const bool better = first || s > best.score ||
                        (s == best.score && (n < best_n || (n == best_n && a < best.topic)));
    if (better) {
      best = {a, s};
      best_n = n;
      first = false;
    }
  }
  return best;
}

// Pure exploitation: the weighted task estimate alone, ties to the smaller TopicId.
template <RewardEstimator Model>
Selection greedy_select(UserId user, std::span<const TopicId> candidates, const Model& model,
                        const ScoreParams& params) {
  if (candidates.empty()) throw ContractViolation("greedy_select: empty candidate set");
  ScoreParams exploit = params;
  exploit.gamma = 0.0;
  Selection best{};
  bool first = true;
  for (TopicId a : candidates) {
    const double s = ucb_score(model.estimates(user, a), 0, 0, exploit);
    if (first || s > best.score || (s == best.score && a < best.topic)) {
      best = {a, s};
      first = false;
    }
  }
  return best;
}

}  // namespace banditab
