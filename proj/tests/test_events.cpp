#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>

#include "clickcast/events.hpp"
#include "helpers.hpp"

using namespace clickcast;
using testutil::make_event;
using testutil::TempDir;

TEST_CASE("parse_url splits host, path, and query keys") {
  auto parts = parse_url("https://shop.example/cart?ref=email");
  REQUIRE(parts.has_value());
  CHECK(parts->host == "shop.example");
  CHECK(parts->path == "/cart");
  CHECK(parts->query_keys == std::vector<std::string>{"ref"});

  auto multi = parse_url("http://USER@Sub.Host.COM:8080/a/b?x=1&y&z=3#frag");
  CHECK(multi->host == "sub.host.com");
  CHECK(multi->path == "/a/b");
  CHECK(multi->query_keys == std::vector<std::string>{"x", "y", "z"});

  auto bare = parse_url("https://shop.example");
  CHECK(bare->host == "shop.example");
  CHECK(bare->path == "/");
}

TEST_CASE("summarize_user_agent classifies families and bots") {
  auto chrome = summarize_user_agent(
      "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) "
      "Chrome/120.0 Safari/537.36");
  CHECK(chrome.browser_family == "Chrome");
  CHECK(chrome.os_family == "Windows");
  CHECK_FALSE(chrome.is_bot);

  auto bot = summarize_user_agent("Mozilla/5.0 (compatible; Googlebot/2.1)");
  CHECK(bot.is_bot);
  CHECK(summarize_user_agent("curl/8.0.1").is_bot);
  CHECK(summarize_user_agent("python-requests/2.31.0").is_bot);

  auto android = summarize_user_agent("Mozilla/5.0 (Linux; Android 13; Pixel 7) Chrome/119.0");
  CHECK(android.os_family == "Android");
}

TEST_CASE("preprocess_event parses, strips, and validates") {
  json raw;
  raw["timestamp"] = 1234;
  raw["anonymousId"] = "a1";
  raw["type"] = "page";
  raw["payload"] = {{"url", "https://shop.example/cart?ref=email"},
                    {"userAgent", "curl/8.0.1"},
                    {"keep", "me"}};
  Event e = preprocess_event(raw);
  REQUIRE(e.url_parts.has_value());
  CHECK(e.url_parts->host == "shop.example");
  CHECK(e.url_parts->path == "/cart");
  CHECK(e.url_parts->query_keys == std::vector<std::string>{"ref"});
  REQUIRE(e.user_agent.has_value());
  CHECK(e.user_agent->is_bot);
  // long strings are not retained beyond their parsed parts
  CHECK_FALSE(e.payload.contains("url"));
  CHECK_FALSE(e.payload.contains("userAgent"));
  CHECK(e.payload["keep"] == "me");

  json plain;
  plain["timestamp"] = 99;
  plain["anonymousId"] = "a2";
  plain["type"] = "click";
  Event p = preprocess_event(plain);
  CHECK_FALSE(p.url_parts.has_value());
  CHECK_FALSE(p.user_agent.has_value());

  json no_anon = {{"timestamp", 5}, {"type", "page"}};
  CHECK_THROWS_AS(preprocess_event(no_anon), MalformedEventError);
  json no_ts = {{"anonymousId", "x"}, {"type", "page"}};
  CHECK_THROWS_AS(preprocess_event(no_ts), MalformedEventError);
  json bad_type = {{"timestamp", 5}, {"anonymousId", "x"}, {"type", "mystery"}};
  CHECK_THROWS_AS(preprocess_event(bad_type), MalformedEventError);
}

TEST_CASE("event json round trip is the identity") {
  Event e = make_event("u9", 777'000, EventType::page, "https://a.example/x?q=1&r=2", "curl/8.0");
  e.payload["custom"] = 3.5;
  Event back = preprocess_event(event_to_json(e));
  CHECK(back.timestamp == e.timestamp);
  CHECK(back.anonymous_id == e.anonymous_id);
  CHECK(back.type == e.type);
  CHECK(back.url_parts == e.url_parts);
  CHECK(back.user_agent == e.user_agent);
  CHECK(back.payload == e.payload);
}

TEST_CASE("sessionize groups interleaved users into time-ordered sessions") {
  std::vector<Event> events = {
      make_event("a", 3000, EventType::click),
      make_event("b", 1000, EventType::page),
      make_event("a", 1000, EventType::page),
      make_event("b", 2000, EventType::click),
      make_event("a", 2000, EventType::scroll),
  };
  auto sessions = sessionize(events, {});
  REQUIRE(sessions.size() == 2);
  CHECK(sessions[0].anonymous_id == "a");
  CHECK(sessions[1].anonymous_id == "b");
  for (const auto& s : sessions) {
    CHECK(validate_session(s));
    for (size_t i = 1; i < s.events.size(); ++i)
      CHECK(s.events[i].timestamp >= s.events[i - 1].timestamp);
  }
  CHECK(sessions[0].events.size() == 3);
  CHECK(sessions[1].events.size() == 2);
}

TEST_CASE("sessionize keeps ingestion order on timestamp ties") {
  std::vector<Event> events = {
      make_event("a", 1000, EventType::page),
      make_event("a", 1000, EventType::click),
      make_event("a", 1000, EventType::scroll),
  };
  auto sessions = sessionize(events, {});
  REQUIRE(sessions.size() == 1);
  CHECK(sessions[0].events[0].type == EventType::page);
  CHECK(sessions[0].events[1].type == EventType::click);
  CHECK(sessions[0].events[2].type == EventType::scroll);
}

TEST_CASE("sessionize drops sessions over the length cap and counts them") {
  std::vector<Event> events;
  for (int i = 0; i < 1001; ++i) events.push_back(make_event("big", 1000 + i, EventType::page));
  events.push_back(make_event("small", 1000, EventType::page));
  SessionizeStats stats;
  auto sessions = sessionize(events, {}, &stats);
  REQUIRE(sessions.size() == 1);
  CHECK(sessions[0].anonymous_id == "small");
  CHECK(stats.dropped_long_sessions == 1);
  CHECK(stats.dropped_long_session_events == 1001);

  // exactly at the cap survives
  std::vector<Event> ok;
  for (int i = 0; i < 1000; ++i) ok.push_back(make_event("cap", 1000 + i, EventType::page));
  CHECK(sessionize(ok, {}).size() == 1);
}

TEST_CASE("sessionize removes bot events before grouping") {
  std::vector<Event> events = {
      make_event("human", 1000, EventType::page, "", "Mozilla/5.0 Chrome/120.0"),
      make_event("crawler", 1000, EventType::page, "", "Mozilla/5.0 (compatible; Googlebot/2.1)"),
      make_event("crawler", 2000, EventType::click, "", "Mozilla/5.0 (compatible; Googlebot/2.1)"),
  };
  json synthetic_raw = {{"timestamp", 1500},
                        {"anonymousId", "human"},
                        {"type", "log"},
                        {"payload", {{"synthetic", true}}}};
  events.push_back(preprocess_event(synthetic_raw));

  SessionizeStats stats;
  auto sessions = sessionize(events, {}, &stats);
  REQUIRE(sessions.size() == 1);
  CHECK(sessions[0].anonymous_id == "human");
  CHECK(sessions[0].events.size() == 1);
  CHECK(stats.bot_filtered_events == 3);
}

TEST_CASE("sessionize accounts for every removed event") {
  Rng rng(11);
  std::vector<Event> events;
  for (int i = 0; i < 500; ++i) {
    std::string anon = "u" + std::to_string(rng.uniform_int(20));
    bool bot = rng.bernoulli(0.1);
    events.push_back(make_event(anon, 1000 + static_cast<int64_t>(rng.uniform_int(10000)),
                                EventType::page, "",
                                bot ? "curl/8.0" : "Mozilla/5.0 Chrome/120.0"));
  }
  SessionizeConfig cfg;
  cfg.max_session_len = 30;
  SessionizeStats stats;
  auto sessions = sessionize(events, cfg, &stats);

  std::multiset<std::pair<std::string, int64_t>> in, out;
  for (const auto& e : events) in.insert({e.anonymous_id, e.timestamp});
  size_t out_count = 0;
  for (const auto& s : sessions) {
    CHECK(validate_session(s, cfg.max_session_len));
    for (const auto& e : s.events) {
      out.insert({e.anonymous_id, e.timestamp});
      ++out_count;
    }
  }
  for (const auto& key : out) CHECK(in.count(key) >= out.count(key));
  CHECK(out_count + stats.bot_filtered_events + stats.dropped_long_session_events == events.size());

  // determinism: same input, same output
  auto again = sessionize(events, cfg);
  REQUIRE(again.size() == sessions.size());
  for (size_t i = 0; i < again.size(); ++i) {
    CHECK(again[i].anonymous_id == sessions[i].anonymous_id);
    CHECK(again[i].events.size() == sessions[i].events.size());
  }
}

TEST_CASE("empty input gives empty output") {
  CHECK(sessionize({}, {}).empty());
}

TEST_CASE("archive write/read round trip tolerates junk lines") {
  TempDir dir("archive");
  std::string path = dir.str() + "/events.jsonl";
  std::vector<Event> events = {
      make_event("a", 1000, EventType::page, "https://shop.example/x"),
      make_event("b", 2000, EventType::positive),
  };
  write_archive(path, events);
  {
    std::ofstream app(path, std::ios::app);
    app << "{\"timestamp\": 1}\n";       // malformed: no anonymousId
    app << "{\"unknownField\": true}\n";  // malformed
  }
  ArchiveReadStats stats;
  auto back = read_archive(path, &stats);
  REQUIRE(back.size() == 2);
  CHECK(stats.malformed_skipped == 2);
  CHECK(back[0].anonymous_id == "a");
  CHECK(back[0].url_parts->host == "shop.example");
  CHECK(back[1].type == EventType::positive);

  CHECK_THROWS_AS(read_archive(dir.str() + "/missing.jsonl"), IoError);
}
