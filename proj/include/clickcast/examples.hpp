#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "clickcast/events.hpp"

namespace clickcast {

// Session fragment at a prediction point, ready for encoding. events is
// exactly max_len long: blank padding in front, real events at the back.
struct Instance {
  std::vector<Event> events;
  std::map<std::string, double> metadata;
  std::map<std::string, double> stats;
};

struct Example {
  Instance instance;
  int label = 0;  // {0,1}
  int64_t cut_timestamp = 0;
};

// keep(event) -> true to retain. Must be a pure function of the event.
using EventFilter = std::function<bool(const Event&)>;

// Conjunctive type-drop filter.
inline EventFilter drop_types_filter(std::vector<EventType> types) {
  return [types = std::move(types)](const Event& e) {
    return std::find(types.begin(), types.end(), e.type) == types.end();
  };
}

struct Cut {
  size_t cut_index = 0;  // position in [0, session length]; events before it form the instance
  int label = 0;
};

// The only site-specific part of the pipeline: decides where predictions
// would have been made within a session, and with what label.
class ExampleGenerator {
public:
  virtual ~ExampleGenerator() = default;
  virtual std::vector<Cut> scan(const UserSession& session) const = 0;
  virtual std::string name() const = 0;
  virtual std::string version() const = 0;
};

// Single cut at the first event of positive_type (label 1), or at the end
// of the session (label 0). Empty sessions produce no cuts.
class FirstPositiveGenerator : public ExampleGenerator {
public:
  explicit FirstPositiveGenerator(EventType positive_type = EventType::positive)
      : positive_type_(positive_type) {}

  std::vector<Cut> scan(const UserSession& session) const override {
    if (session.events.empty()) return {};
    for (size_t i = 0; i < session.events.size(); ++i) {
      if (session.events[i].type == positive_type_) return {Cut{i, 1}};
    }
    return {Cut{session.events.size(), 0}};
  }

  std::string name() const override { return "first_positive"; }
  std::string version() const override { return "1"; }

  EventType positive_type() const { return positive_type_; }

private:
  EventType positive_type_;
};

inline std::unique_ptr<ExampleGenerator> first_positive_generator(
    EventType positive_type = EventType::positive) {
  return std::make_unique<FirstPositiveGenerator>(positive_type);
}

inline std::unique_ptr<ExampleGenerator> make_generator(const std::string& name,
                                                        EventType positive_type) {
  if (name == "first_positive") return first_positive_generator(positive_type);
  throw ConfigError("unknown example generator: " + name);
}

namespace detail {

inline int64_t hour_of_day_utc(int64_t timestamp_ms) {
  return (timestamp_ms / 3600000) % 24;
}

}  // namespace detail

// Session-level features over the surviving real events. Values are raw;
// the encoder maps them to [0,1] with its per-feature ranges.
inline std::map<std::string, double> compute_metadata(const std::vector<Event>& real_events) {
  std::map<std::string, double> m;
  std::set<std::string> pages;
  bool returning = false;
  int64_t first_ts = 0, last_ts = 0;
  for (const auto& e : real_events) {
    if (e.type == EventType::page && e.url_parts) pages.insert(e.url_parts->host + e.url_parts->path);
    if (e.user_id) returning = true;
    if (first_ts == 0) first_ts = e.timestamp;
    last_ts = e.timestamp;
  }
  m["session_event_count"] = static_cast<double>(real_events.size());
  m["distinct_page_count"] = static_cast<double>(pages.size());
  m["total_dwell_seconds"] =
      real_events.empty() ? 0.0 : static_cast<double>(last_ts - first_ts) / 1000.0;
  m["hour_of_day_of_first_event"] =
      real_events.empty() ? 0.0 : static_cast<double>(detail::hour_of_day_utc(first_ts));
  m["is_returning_user"] = returning ? 1.0 : 0.0;
  return m;
}

// Cohort statistics stored with every example for later slicing.
inline std::map<std::string, double> compute_stats(const std::vector<Event>& real_events) {
  std::map<std::string, double> s;
  double clicks = 0.0;
  int64_t first_ts = 0, last_ts = 0;
  for (const auto& e : real_events) {
    if (e.type == EventType::click) clicks += 1.0;
    if (first_ts == 0) first_ts = e.timestamp;
    last_ts = e.timestamp;
  }
  s["click_count"] = clicks;
  s["time_on_site_seconds"] =
      real_events.empty() ? 0.0 : static_cast<double>(last_ts - first_ts) / 1000.0;
  return s;
}

// Shared by training and serving: apply filters, keep the max_len most
// recent events, pad the front with blanks, and derive metadata/stats
// from the surviving real events only.
inline Instance make_instance(const std::vector<Event>& events, const std::vector<EventFilter>& filters,
                              size_t max_len) {
  std::vector<Event> kept;
  kept.reserve(events.size());
  for (const auto& e : events) {
    bool keep = true;
    for (const auto& f : filters) {
      if (!f(e)) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(e);
  }
  if (kept.size() > max_len) kept.erase(kept.begin(), kept.end() - static_cast<ptrdiff_t>(max_len));

  std::vector<Event> real;
  real.reserve(kept.size());
  for (const auto& e : kept) {
    if (!e.is_blank()) real.push_back(e);
  }

  Instance inst;
  inst.metadata = compute_metadata(real);
  inst.stats = compute_stats(real);
  inst.events.assign(max_len - kept.size(), Event::blank());
  inst.events.insert(inst.events.end(), kept.begin(), kept.end());
  return inst;
}

// Instance events never contain the positive type, whatever the
// configured filters say; a cut at a positive event must not leak it.
inline std::vector<EventFilter> with_positive_guard(std::vector<EventFilter> filters,
                                                    EventType positive_type) {
  filters.push_back([positive_type](const Event& e) { return e.type != positive_type; });
  return filters;
}

inline std::vector<Example> generate_examples(const UserSession& session,
                                              const ExampleGenerator& generator,
                                              const std::vector<EventFilter>& filters, size_t max_len,
                                              EventType positive_type = EventType::positive) {
  auto cuts = generator.scan(session);
  auto guarded = with_positive_guard(filters, positive_type);
  std::vector<Example> out;
  out.reserve(cuts.size());
  for (const auto& cut : cuts) {
    if (cut.cut_index > session.events.size())
      throw GeneratorContractError(generator.name() + " produced cut " + std::to_string(cut.cut_index) +
                                   " beyond session of " + std::to_string(session.events.size()));
    std::vector<Event> before(session.events.begin(),
                              session.events.begin() + static_cast<ptrdiff_t>(cut.cut_index));
    Example ex;
    ex.instance = make_instance(before, guarded, max_len);
    ex.label = cut.label;
    ex.cut_timestamp = cut.cut_index < session.events.size()
                           ? session.events[cut.cut_index].timestamp
                           : (session.events.empty() ? 0 : session.events.back().timestamp + 1);
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace clickcast
