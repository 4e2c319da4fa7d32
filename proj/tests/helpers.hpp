#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "clickcast/events.hpp"

namespace testutil {

using namespace clickcast;

inline Event make_event(const std::string& anon, int64_t ts, EventType type,
                        const std::string& url = "", const std::string& ua = "") {
  json raw;
  raw["timestamp"] = ts;
  raw["anonymousId"] = anon;
  raw["type"] = to_string(type);
  json payload = json::object();
  if (!url.empty()) payload["url"] = url;
  if (!ua.empty()) payload["userAgent"] = ua;
  raw["payload"] = payload;
  return preprocess_event(raw);
}

inline UserSession make_session(const std::string& anon, const std::vector<EventType>& types,
                                int64_t start_ts = 1000, int64_t step_ms = 1000) {
  UserSession s;
  s.anonymous_id = anon;
  int64_t ts = start_ts;
  for (auto t : types) {
    s.events.push_back(make_event(anon, ts, t, "https://shop.example/p"));
    ts += step_ms;
  }
  return s;
}

// Unique scratch directory, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("clickcast_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string str() const { return path_.string(); }
  std::filesystem::path path() const { return path_; }

private:
  std::filesystem::path path_;
};

}  // namespace testutil
