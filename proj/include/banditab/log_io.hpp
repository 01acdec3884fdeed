#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "banditab/core.hpp"

namespace banditab {

class LogParseError : public std::runtime_error {
 public:
  LogParseError(std::string field, const std::string& message)
      : std::runtime_error("impression field '" + field + "': " + message),
        field_(std::move(field)),
        detail_(message) {}

  const std::string& field() const { return field_; }
  const std::string& detail() const { return detail_; }

 private:
  std::string field_;
  std::string detail_;
};

// Index-space bounds a decoded record must respect.
struct LogBounds {
  std::uint32_t topics = std::numeric_limits<std::uint32_t>::max();
  std::uint32_t users = std::numeric_limits<std::uint32_t>::max();
};

namespace detail {

inline void append_real(std::string& out, double v) {
  if (std::isinf(v) && v > 0) {
    out += "\"inf\"";
    return;
  }
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  std::string_view s(buf, static_cast<std::size_t>(res.ptr - buf));
  out += s;
  if (s.find_first_of(".e") == std::string_view::npos) out += ".0";
}

inline void append_flag(std::string& out, const char* name, bool v) {
  out += '"';
  out += name;
  out += "\":";
  out += v ? "true" : "false";
}

inline std::optional<Group> parse_group(std::string_view s) {
  for (Group g : kAllGroups)
    if (group_name(g) == s) return g;
  return std::nullopt;
}

}  // namespace detail

// One JSON object per line; every field is always present.
inline std::string encode_impression(const ImpressionRecord& r) {
  std::string out;
  out.reserve(192);
  out += "{\"day\":";
  out += std::to_string(r.day);
  out += ",\"user\":";
  out += std::to_string(r.user.index);
  out += ",\"topic\":";
  out += std::to_string(r.topic.index);
  out += ",\"group\":\"";
  out += group_name(r.group);
  out += "\",\"phase\":";
  out += std::to_string(r.phase);
  out += ",\"outcomes\":{";
  const auto& f = r.outcomes.flags();
  detail::append_flag(out, "play", f.play);
  out += ',';
  detail::append_flag(out, "loop", f.loop);
  out += ',';
  detail::append_flag(out, "skip", f.skip);
  out += ',';
  detail::append_flag(out, "comment", f.comment);
  out += ',';
  detail::append_flag(out, "share", f.share);
  out += ',';
  detail::append_flag(out, "like", f.like);
  out += ',';
  detail::append_flag(out, "completed", f.completed);
  out += "},\"score\":";
  detail::append_real(out, r.score);
  out += '}';
  return out;
}

inline ImpressionRecord decode_impression(std::string_view line, const LogBounds& bounds = {}) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw LogParseError("line", std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw LogParseError("line", "expected a JSON object");

  auto field = [&j](const char* name) -> const json& {
    const auto it = j.find(name);
    if (it == j.end()) throw LogParseError(name, "missing");
    return *it;
  };
  auto unsigned_field = [&](const char* name) -> std::uint64_t {
    const json& v = field(name);
    if (!v.is_number_unsigned()) throw LogParseError(name, "expected a non-negative integer");
    return v.get<std::uint64_t>();
  };

  ImpressionRecord r;
  const auto day = unsigned_field("day");
  if (day > static_cast<std::uint64_t>(std::numeric_limits<int>::max()))
    throw LogParseError("day", "out of range");
  r.day = static_cast<int>(day);

  const auto user = unsigned_field("user");
  if (user >= bounds.users) throw LogParseError("user", "index out of range");
  r.user = UserId{static_cast<std::uint32_t>(user)};

  const auto topic = unsigned_field("topic");
  if (topic >= bounds.topics) throw LogParseError("topic", "index out of range");
  r.topic = TopicId{static_cast<std::uint32_t>(topic)};

  const json& g = field("group");
  if (!g.is_string()) throw LogParseError("group", "expected a string");
  const auto group = detail::parse_group(g.get_ref<const std::string&>());
  if (!group) throw LogParseError("group", "unknown group");
  r.group = *group;

  const auto phase = unsigned_field("phase");
  if (phase != 1 && phase != 2) throw LogParseError("phase", "must be 1 or 2");
  r.phase = static_cast<int>(phase);

  const json& o = field("outcomes");
  if (!o.is_object()) throw LogParseError("outcomes", "expected an object");
  auto flag = [&o](const char* name) {
    const auto it = o.find(name);
    const std::string path = std::string("outcomes.") + name;
    if (it == o.end()) throw LogParseError(path, "missing");
    if (!it->is_boolean()) throw LogParseError(path, "expected true/false");
    return it->get<bool>();
  };
  Outcomes::Flags f;
  f.play = flag("play");
  f.loop = flag("loop");
  f.skip = flag("skip");
  f.comment = flag("comment");
  f.share = flag("share");
  f.like = flag("like");
  f.completed = flag("completed");
  try {
    r.outcomes = Outcomes(f);
  } catch (const InvariantError& e) {
    throw LogParseError("outcomes", e.what());
  }

  const json& s = field("score");
  if (s.is_string() && s.get_ref<const std::string&>() == "inf") {
    r.score = std::numeric_limits<double>::infinity();
  } else if (s.is_number()) {
    r.score = s.get<double>();
  } else {
    throw LogParseError("score", "expected a number or \"inf\"");
  }
  return r;
}

inline void write_impressions(std::ostream& out, const std::vector<ImpressionRecord>& log) {
  for (const auto& r : log) out << encode_impression(r) << '\n';
}

// Blank lines are ignored. Parse errors carry the 1-based line number.
inline std::vector<ImpressionRecord> read_impressions(std::istream& in,
                                                      const LogBounds& bounds = {}) {
  std::vector<ImpressionRecord> log;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      log.push_back(decode_impression(line, bounds));
    } catch (const LogParseError& e) {
      throw LogParseError(e.field(), "line " + std::to_string(lineno) + ": " + e.detail());
    }
  }
  return log;
}

// Reals in metric tables: 9 significant digits.
inline std::string format_metric(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace banditab
