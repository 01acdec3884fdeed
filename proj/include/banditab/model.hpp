#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "banditab/core.hpp"
#include "banditab/log_io.hpp"

namespace banditab {

// Which records a model may learn from: a set of groups and an inclusive day range.
struct DataSlice {
  std::array<bool, kGroupCount> groups{true, true, true};
  int first_day = 0;
  int last_day = std::numeric_limits<int>::max();

  static DataSlice all_groups(int first_day, int last_day) {
    return DataSlice{{true, true, true}, first_day, last_day};
  }
  static DataSlice only(Group g, int first_day, int last_day) {
    DataSlice s{{false, false, false}, first_day, last_day};
    s.groups[group_index(g)] = true;
    return s;
  }

  bool contains(const ImpressionRecord& r) const {
    return groups[group_index(r.group)] && r.day >= first_day && r.day <= last_day;
  }

  std::size_t group_count() const {
    std::size_t n = 0;
    for (bool g : groups) n += g ? 1 : 0;
    return n;
  }

  std::string describe() const {
    std::string s;
    for (Group g : kAllGroups) {
      if (!groups[group_index(g)]) continue;
      if (!s.empty()) s += '+';
      s += group_name(g);
    }
    return s + " days " + std::to_string(first_day) + ".." + std::to_string(last_day);
  }

  bool operator==(const DataSlice&) const = default;
};

struct ModelShape {
  int users = 0;
  int topics = 0;
};

inline constexpr double kColdStartPrediction = 0.5;

// Two-level shrinkage estimate of per-task reward:
//   topic level  (n_a * mean_a + lambda * global) / (n_a + lambda)
//   user level   (n_ut * mean_ut + lambda * topic) / (n_ut + lambda)
// Immutable once built by fit().
class RewardModel {
 public:
  struct Cell {
    TaskMap<double> sum{};
    std::int64_t n = 0;
    bool operator==(const Cell&) const = default;
  };

  RewardModel() = default;

  // Cold-start model: every prediction is kColdStartPrediction.
  static RewardModel prior(ModelShape shape, double lambda) {
    RewardModel m;
    m.shape_ = shape;
    m.lambda_ = lambda;
    for (TaskKind t : kAllTasks) m.global_mean_[t] = kColdStartPrediction;
    m.topic_mean_.assign(static_cast<std::size_t>(shape.topics), m.global_mean_);
    return m;
  }

  double predict(UserId u, TopicId a, TaskKind t) const {
    if (is_prior()) return kColdStartPrediction;
    const Cell& c = cell(u, a);
    return (c.sum[t] + lambda_ * topic_mean_[a.index][t]) / (static_cast<double>(c.n) + lambda_);
  }

  TaskMap<double> estimates(UserId u, TopicId a) const {
    TaskMap<double> out;
    if (is_prior()) {
      for (TaskKind t : kAllTasks) out[t] = kColdStartPrediction;
      return out;
    }
    const Cell& c = cell(u, a);
    const double denom = static_cast<double>(c.n) + lambda_;
    for (TaskKind t : kAllTasks) out[t] = (c.sum[t] + lambda_ * topic_mean_[a.index][t]) / denom;
    return out;
  }

  bool is_prior() const { return version_ == 0; }
  int version() const { return version_; }
  std::string version_tag() const { return is_prior() ? "prior" : "v" + std::to_string(version_); }
  double lambda() const { return lambda_; }
  const DataSlice& trained_on() const { return trained_on_; }
  const ModelShape& shape() const { return shape_; }
  std::int64_t record_count() const { return records_; }

  const TaskMap<double>& global_mean() const { return global_mean_; }
  double topic_mean(TopicId a, TaskKind t) const { return topic_mean_.at(a.index)[t]; }
  std::int64_t topic_count(TopicId a) const { return topic_n_.empty() ? 0 : topic_n_.at(a.index); }
  const Cell& user_topic(UserId u, TopicId a) const { return cell(u, a); }

  // CSV with header `level,key,task,mean,n`.
  void dump(std::ostream& out) const {
    out << "level,key,task,mean,n\n";
    for (TaskKind t : kAllTasks)
      out << "global,," << task_name(t) << ',' << format_metric(global_mean_[t]) << ','
          << records_ << '\n';
    for (int a = 0; a < shape_.topics; ++a)
      for (TaskKind t : kAllTasks)
        out << "topic," << a << ',' << task_name(t) << ',' << format_metric(topic_mean_[a][t])
            << ',' << topic_count(TopicId{static_cast<std::uint32_t>(a)}) << '\n';
    if (is_prior()) return;
    for (int u = 0; u < shape_.users; ++u)
      for (int a = 0; a < shape_.topics; ++a) {
        const Cell& c = cell(UserId{static_cast<std::uint32_t>(u)},
                             TopicId{static_cast<std::uint32_t>(a)});
        if (c.n == 0) continue;
        for (TaskKind t : kAllTasks)
          out << "user_topic," << u << ':' << a << ',' << task_name(t) << ','
              << format_metric(c.sum[t] / static_cast<double>(c.n)) << ',' << c.n << '\n';
      }
  }

 private:
  friend RewardModel fit(std::span<const ImpressionRecord>, const DataSlice&, double, ModelShape,
                         int);

  const Cell& cell(UserId u, TopicId a) const {
    if (u.index >= static_cast<std::uint32_t>(shape_.users) ||
        a.index >= static_cast<std::uint32_t>(shape_.topics))
      throw std::out_of_range("reward model: id out of range");
    return user_topic_[static_cast<std::size_t>(u.index) * shape_.topics + a.index];
  }

  ModelShape shape_{};
  double lambda_ = 1.0;
  int version_ = 0;
  std::int64_t records_ = 0;
  DataSlice trained_on_{};
  TaskMap<double> global_mean_{};
  std::vector<TaskMap<double>> topic_mean_;
  std::vector<std::int64_t> topic_n_;
  std::vector<Cell> user_topic_;
};

// Fits on the records inside `slice`; everything else is ignored. An empty slice
// yields the cold-start prior model.
inline RewardModel fit(std::span<const ImpressionRecord> records, const DataSlice& slice,
                       double lambda, ModelShape shape, int version = 1) {
  if (!(lambda > 0)) throw std::invalid_argument("fit: lambda must be > 0");
  if (version < 1) throw std::invalid_argument("fit: version must be >= 1");

  const auto K = static_cast<std::size_t>(shape.topics);
  std::vector<RewardModel::Cell> user_topic(static_cast<std::size_t>(shape.users) * K);
  std::vector<TaskMap<double>> topic_sum(K);
  std::vector<std::int64_t> topic_n(K, 0);
  TaskMap<double> global_sum{};
  std::int64_t n = 0;

  for (const auto& r : records) {
    if (!slice.contains(r)) continue;
    if (r.user.index >= static_cast<std::uint32_t>(shape.users) || r.topic.index >= K)
      throw std::out_of_range("fit: record id outside model shape");
    auto& c = user_topic[static_cast<std::size_t>(r.user.index) * K + r.topic.index];
    ++c.n;
    ++topic_n[r.topic.index];
    ++n;
    for (TaskKind t : kAllTasks) {
      const double y = r.outcomes.task(t) ? 1.0 : 0.0;
      c.sum[t] += y;
      topic_sum[r.topic.index][t] += y;
      global_sum[t] += y;
    }
  }

  if (n == 0) {
    RewardModel m = RewardModel::prior(shape, lambda);
    m.trained_on_ = slice;
    return m;
  }

  RewardModel m;
  m.shape_ = shape;
  m.lambda_ = lambda;
  m.version_ = version;
  m.records_ = n;
  m.trained_on_ = slice;
  for (TaskKind t : kAllTasks) m.global_mean_[t] = global_sum[t] / static_cast<double>(n);
  m.topic_mean_.resize(K);
  for (std::size_t a = 0; a < K; ++a)
    for (TaskKind t : kAllTasks)
      m.topic_mean_[a][t] = (topic_sum[a][t] + lambda * m.global_mean_[t]) /
                            (static_cast<double>(topic_n[a]) + lambda);
  m.topic_n_ = std::move(topic_n);
  m.user_topic_ = std::move(user_topic);
  return m;
}

}  // namespace banditab
