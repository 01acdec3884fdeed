#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace banditab {

struct TopicId {
  std::uint32_t index = 0;
  auto operator<=>(const TopicId&) const = default;
};

struct UserId {
  std::uint32_t index = 0;
  auto operator<=>(const UserId&) const = default;
};

enum class TaskKind : std::uint8_t { Play = 0, Comment = 1, Share = 2, Like = 3 };

inline constexpr std::size_t kTaskCount = 4;
inline constexpr std::array<TaskKind, kTaskCount> kAllTasks = {
    TaskKind::Play, TaskKind::Comment, TaskKind::Share, TaskKind::Like};

// Per-task values indexed by TaskKind.
template <class T>
struct TaskMap {
  std::array<T, kTaskCount> values{};

  constexpr T& operator[](TaskKind t) { return values[static_cast<std::size_t>(t)]; }
  constexpr const T& operator[](TaskKind t) const {
    return values[static_cast<std::size_t>(t)];
  }
  bool operator==(const TaskMap&) const = default;
};

constexpr std::string_view task_name(TaskKind t) {
  switch (t) {
    case TaskKind::Play: return "play";
    case TaskKind::Comment: return "comment";
    case TaskKind::Share: return "share";
    case TaskKind::Like: return "like";
  }
  return "unknown";
}

enum class Group : std::uint8_t { Production = 0, Control = 1, Test = 2 };

inline constexpr std::size_t kGroupCount = 3;
inline constexpr std::array<Group, kGroupCount> kAllGroups = {Group::Production, Group::Control,
                                                              Group::Test};

constexpr std::size_t group_index(Group g) { return static_cast<std::size_t>(g); }

constexpr std::string_view group_name(Group g) {
  switch (g) {
    case Group::Production: return "production";
    case Group::Control: return "control";
    case Group::Test: return "test";
  }
  return "unknown";
}

// Thrown when a value object is built from inconsistent fields.
class InvariantError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Outcomes {
 public:
  struct Flags {
    bool play = false;
    bool loop = false;
    bool skip = false;
    bool comment = false;
    bool share = false;
    bool like = false;
    bool completed = false;
  };

  Outcomes() = default;

  explicit Outcomes(const Flags& f) : flags_(f) {
    if (f.loop && !f.play) throw InvariantError("outcomes: loop requires play");
    if (f.completed && !f.play) throw InvariantError("outcomes: completed requires play");
    if (f.skip && f.completed) throw InvariantError("outcomes: skip excludes completed");
  }

  bool play() const { return flags_.play; }
  bool loop() const { return flags_.loop; }
  bool skip() const { return flags_.skip; }
  bool comment() const { return flags_.comment; }
  bool share() const { return flags_.share; }
  bool like() const { return flags_.like; }
  bool completed() const { return flags_.completed; }
  const Flags& flags() const { return flags_; }

  // Positive signal for one of the fitted tasks.
  bool task(TaskKind t) const {
    switch (t) {
      case TaskKind::Play: return flags_.play;
      case TaskKind::Comment: return flags_.comment;
      case TaskKind::Share: return flags_.share;
      case TaskKind::Like: return flags_.like;
    }
    return false;
  }

  bool operator==(const Outcomes& o) const {
    const auto& a = flags_;
    const auto& b = o.flags_;
    return a.play == b.play && a.loop == b.loop && a.skip == b.skip && a.comment == b.comment &&
           a.share == b.share && a.like == b.like && a.completed == b.completed;
  }

 private:
  Flags flags_{};
};

// One served recommendation and what the user did with it.
struct ImpressionRecord {
  int day = 0;
  UserId user{};
  TopicId topic{};
  Group group = Group::Production;
  int phase = 1;
  Outcomes outcomes{};
  double score = 0.0;  // U_{t,a} at selection time; +inf for a forced first trial

  bool operator==(const ImpressionRecord&) const = default;
};

}  // namespace banditab
