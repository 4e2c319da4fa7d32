#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "clickcast/common.hpp"

namespace clickcast {

using json = nlohmann::json;

enum class EventType { page, click, scroll, log, positive, prediction_point, blank };

inline const char* to_string(EventType t) {
  switch (t) {
    case EventType::page: return "page";
    case EventType::click: return "click";
    case EventType::scroll: return "scroll";
    case EventType::log: return "log";
    case EventType::positive: return "positive";
    case EventType::prediction_point: return "prediction_point";
    case EventType::blank: return "blank";
  }
  return "blank";
}

inline std::optional<EventType> event_type_from_string(const std::string& s) {
  static const std::map<std::string, EventType> table = {
      {"page", EventType::page},
      {"click", EventType::click},
      {"scroll", EventType::scroll},
      {"log", EventType::log},
      {"positive", EventType::positive},
      {"prediction_point", EventType::prediction_point},
      {"blank", EventType::blank},
  };
  auto it = table.find(s);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

struct UrlParts {
  std::string host;
  std::string path;
  std::vector<std::string> query_keys;

  bool operator==(const UrlParts&) const = default;
};

struct UserAgentSummary {
  std::string browser_family;
  std::string os_family;
  bool is_bot = false;

  bool operator==(const UserAgentSummary&) const = default;
};

struct Event {
  int64_t timestamp = 0;  // ms since epoch; 0 only for blank padding
  std::string anonymous_id;
  std::optional<std::string> user_id;
  EventType type = EventType::blank;
  json payload = json::object();
  std::optional<UrlParts> url_parts;
  std::optional<UserAgentSummary> user_agent;

  static Event blank() { return Event{}; }
  bool is_blank() const { return type == EventType::blank; }
};

// Minimal scheme://[user@]host[:port]/path?query#fragment splitter.
// Host is lowercased, the port and userinfo are dropped, an empty path
// maps to "/". Query keys are the names before '=' in each '&' segment.
inline std::optional<UrlParts> parse_url(const std::string& url) {
  if (url.empty()) return std::nullopt;
  UrlParts out;
  std::string rest = url;
  auto scheme_pos = rest.find("://");
  if (scheme_pos != std::string::npos) {
    rest = rest.substr(scheme_pos + 3);
  }
  auto frag = rest.find('#');
  if (frag != std::string::npos) rest = rest.substr(0, frag);

  std::string query;
  auto q = rest.find('?');
  if (q != std::string::npos) {
    query = rest.substr(q + 1);
    rest = rest.substr(0, q);
  }

  if (scheme_pos != std::string::npos) {
    auto slash = rest.find('/');
    std::string host = slash == std::string::npos ? rest : rest.substr(0, slash);
    out.path = slash == std::string::npos ? "/" : rest.substr(slash);
    auto at = host.rfind('@');
    if (at != std::string::npos) host = host.substr(at + 1);
    auto colon = host.find(':');
    if (colon != std::string::npos) host = host.substr(0, colon);
    out.host = lower(host);
  } else {
    out.path = rest.empty() ? "/" : rest;
  }
  if (out.path.empty()) out.path = "/";

  size_t start = 0;
  while (start < query.size()) {
    auto amp = query.find('&', start);
    std::string pair = query.substr(start, amp == std::string::npos ? std::string::npos : amp - start);
    if (!pair.empty()) {
      auto eq = pair.find('=');
      out.query_keys.push_back(eq == std::string::npos ? pair : pair.substr(0, eq));
    }
    if (amp == std::string::npos) break;
    start = amp + 1;
  }
  return out;
}

inline const std::vector<std::string>& bot_token_denylist() {
  static const std::vector<std::string> tokens = {
      "bot", "crawler", "spider", "scraper", "curl", "wget",
      "headless", "python-requests", "slurp", "phantomjs",
  };
  return tokens;
}

inline UserAgentSummary summarize_user_agent(const std::string& ua) {
  UserAgentSummary s;
  // Order matters: Edge/Opera carry a Chrome token, Chrome carries Safari.
  if (contains_ci(ua, "edg")) s.browser_family = "Edge";
  else if (contains_ci(ua, "opr") || contains_ci(ua, "opera")) s.browser_family = "Opera";
  else if (contains_ci(ua, "firefox")) s.browser_family = "Firefox";
  else if (contains_ci(ua, "chrome")) s.browser_family = "Chrome";
  else if (contains_ci(ua, "safari")) s.browser_family = "Safari";
  else s.browser_family = "Other";

  if (contains_ci(ua, "windows")) s.os_family = "Windows";
  else if (contains_ci(ua, "android")) s.os_family = "Android";
  else if (contains_ci(ua, "iphone") || contains_ci(ua, "ipad") || contains_ci(ua, "ios")) s.os_family = "iOS";
  else if (contains_ci(ua, "mac os") || contains_ci(ua, "macintosh")) s.os_family = "macOS";
  else if (contains_ci(ua, "linux")) s.os_family = "Linux";
  else s.os_family = "Other";

  for (const auto& token : bot_token_denylist()) {
    if (contains_ci(ua, token)) {
      s.is_bot = true;
      break;
    }
  }
  return s;
}

// Raw record -> Event. Splits the URL, reduces the user agent, and drops
// both long strings from the payload once parsed. Accepts already
// preprocessed records (urlParts / userAgent objects) so archive lines
// round-trip through the same function. Unknown fields are ignored.
inline Event preprocess_event(const json& raw) {
  if (!raw.is_object()) throw MalformedEventError("event record is not an object");
  if (!raw.contains("timestamp") || !raw["timestamp"].is_number())
    throw MalformedEventError("missing timestamp");
  if (!raw.contains("anonymousId") || !raw["anonymousId"].is_string() ||
      raw["anonymousId"].get<std::string>().empty())
    throw MalformedEventError("missing anonymousId");

  Event e;
  e.timestamp = raw["timestamp"].get<int64_t>();
  if (e.timestamp <= 0) throw MalformedEventError("non-positive timestamp");
  e.anonymous_id = raw["anonymousId"].get<std::string>();
  if (raw.contains("userId") && raw["userId"].is_string() && !raw["userId"].get<std::string>().empty())
    e.user_id = raw["userId"].get<std::string>();

  std::string type_name = raw.value("type", std::string("log"));
  auto t = event_type_from_string(type_name);
  if (!t) throw MalformedEventError("unknown event type: " + type_name);
  if (*t == EventType::blank) throw MalformedEventError("blank events are serving-side padding only");
  e.type = *t;

  if (raw.contains("payload") && raw["payload"].is_object()) e.payload = raw["payload"];

  if (raw.contains("urlParts") && raw["urlParts"].is_object()) {
    const auto& up = raw["urlParts"];
    UrlParts parts;
    parts.host = up.value("host", std::string());
    parts.path = up.value("path", std::string("/"));
    if (up.contains("queryKeys") && up["queryKeys"].is_array())
      for (const auto& k : up["queryKeys"]) parts.query_keys.push_back(k.get<std::string>());
    e.url_parts = std::move(parts);
  } else if (e.payload.contains("url") && e.payload["url"].is_string()) {
    e.url_parts = parse_url(e.payload["url"].get<std::string>());
  }
  e.payload.erase("url");

  if (raw.contains("userAgent") && raw["userAgent"].is_object()) {
    const auto& ua = raw["userAgent"];
    UserAgentSummary s;
    s.browser_family = ua.value("browserFamily", std::string("Other"));
    s.os_family = ua.value("osFamily", std::string("Other"));
    s.is_bot = ua.value("isBot", false);
    e.user_agent = std::move(s);
  } else if (e.payload.contains("userAgent") && e.payload["userAgent"].is_string()) {
    e.user_agent = summarize_user_agent(e.payload["userAgent"].get<std::string>());
  }
  e.payload.erase("userAgent");

  return e;
}

inline json event_to_json(const Event& e) {
  json j;
  j["timestamp"] = e.timestamp;
  j["anonymousId"] = e.anonymous_id;
  if (e.user_id) j["userId"] = *e.user_id;
  j["type"] = to_string(e.type);
  j["payload"] = e.payload;
  if (e.url_parts) {
    j["urlParts"] = {{"host", e.url_parts->host},
                     {"path", e.url_parts->path},
                     {"queryKeys", e.url_parts->query_keys}};
  }
  if (e.user_agent) {
    j["userAgent"] = {{"browserFamily", e.user_agent->browser_family},
                      {"osFamily", e.user_agent->os_family},
                      {"isBot", e.user_agent->is_bot}};
  }
  return j;
}

struct UserSession {
  std::string anonymous_id;
  std::vector<Event> events;
};

using BotPredicate = std::function<bool(const Event&)>;

// Default filter: flagged user agents plus anything tagged synthetic.
inline bool default_bot_predicate(const Event& e) {
  if (e.user_agent && e.user_agent->is_bot) return true;
  auto it = e.payload.find("synthetic");
  if (it != e.payload.end() && it->is_boolean() && it->get<bool>()) return true;
  return false;
}

struct SessionizeConfig {
  size_t max_session_len = 1000;
  BotPredicate bot_predicate = default_bot_predicate;
};

struct SessionizeStats {
  size_t bot_filtered_events = 0;
  size_t dropped_long_sessions = 0;
  size_t dropped_long_session_events = 0;
};

// Groups by anonymous_id, stable-sorts each group by timestamp (ingestion
// order preserved on ties), drops bot events before grouping and whole
// sessions longer than max_session_len after it. Output sessions ordered
// by anonymous_id.
inline std::vector<UserSession> sessionize(std::vector<Event> events, const SessionizeConfig& config,
                                           SessionizeStats* stats = nullptr) {
  SessionizeStats local;
  std::map<std::string, std::vector<Event>> groups;
  for (auto& e : events) {
    if (config.bot_predicate && config.bot_predicate(e)) {
      ++local.bot_filtered_events;
      continue;
    }
    groups[e.anonymous_id].push_back(std::move(e));
  }

  std::vector<UserSession> sessions;
  sessions.reserve(groups.size());
  for (auto& [anon_id, group] : groups) {
    if (group.size() > config.max_session_len) {
      ++local.dropped_long_sessions;
      local.dropped_long_session_events += group.size();
      continue;
    }
    std::stable_sort(group.begin(), group.end(),
                     [](const Event& a, const Event& b) { return a.timestamp < b.timestamp; });
    sessions.push_back(UserSession{anon_id, std::move(group)});
  }
  if (stats) *stats = local;
  return sessions;
}

// Test hook: checks the UserSession invariants.
inline bool validate_session(const UserSession& s, size_t max_session_len = 1000) {
  if (s.events.size() > max_session_len) return false;
  for (size_t i = 0; i < s.events.size(); ++i) {
    if (s.events[i].anonymous_id != s.anonymous_id) return false;
    if (s.events[i].timestamp <= 0) return false;
    if (i > 0 && s.events[i].timestamp < s.events[i - 1].timestamp) return false;
  }
  return true;
}

// Archive files are UTF-8, one preprocessed event object per line.
inline void write_archive(const std::string& path, const std::vector<Event>& events) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open archive for writing: " + path);
  for (const auto& e : events) out << event_to_json(e).dump() << '\n';
  if (!out) throw IoError("short write to archive: " + path);
}

inline void append_archive_line(std::ostream& out, const Event& e) {
  out << event_to_json(e).dump() << '\n';
}

struct ArchiveReadStats {
  size_t malformed_skipped = 0;
};

inline std::vector<Event> read_archive(const std::string& path, ArchiveReadStats* stats = nullptr) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open archive: " + path);
  std::vector<Event> events;
  ArchiveReadStats local;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      events.push_back(preprocess_event(json::parse(line)));
    } catch (const std::exception&) {
      ++local.malformed_skipped;
    }
  }
  if (stats) *stats = local;
  return events;
}

}  // namespace clickcast
