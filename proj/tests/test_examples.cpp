#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "clickcast/examples.hpp"
#include "helpers.hpp"

using namespace clickcast;
using testutil::make_event;
using testutil::make_session;

TEST_CASE("first_positive_generator cuts at the first positive") {
  auto gen = first_positive_generator(EventType::positive);
  auto session = make_session("u", {EventType::page, EventType::click, EventType::page,
                                    EventType::scroll, EventType::positive, EventType::page,
                                    EventType::page, EventType::click, EventType::page,
                                    EventType::positive});
  auto cuts = gen->scan(session);
  REQUIRE(cuts.size() == 1);
  CHECK(cuts[0].cut_index == 4);
  CHECK(cuts[0].label == 1);
}

TEST_CASE("first_positive_generator cuts at the end without a positive") {
  auto gen = first_positive_generator();
  auto session = make_session("u", {EventType::page, EventType::click});
  auto cuts = gen->scan(session);
  REQUIRE(cuts.size() == 1);
  CHECK(cuts[0].cut_index == 2);
  CHECK(cuts[0].label == 0);
}

TEST_CASE("first_positive_generator on an empty session emits nothing") {
  auto gen = first_positive_generator();
  UserSession empty{"u", {}};
  CHECK(gen->scan(empty).empty());
  CHECK(generate_examples(empty, *gen, {}, 40).empty());
}

TEST_CASE("generate_examples: positive session with a log filter") {
  auto session = make_session("u", {EventType::page, EventType::click, EventType::log,
                                    EventType::page, EventType::positive});
  auto gen = first_positive_generator();
  auto examples =
      generate_examples(session, *gen, {drop_types_filter({EventType::log})}, 40);
  REQUIRE(examples.size() == 1);
  CHECK(examples[0].label == 1);
  CHECK(examples[0].cut_timestamp == session.events[4].timestamp);

  std::vector<EventType> real_types;
  for (const auto& e : examples[0].instance.events)
    if (!e.is_blank()) real_types.push_back(e.type);
  CHECK(real_types == std::vector<EventType>{EventType::page, EventType::click, EventType::page});
}

TEST_CASE("generate_examples: no positive gives label 0 at session end") {
  auto session = make_session("u", {EventType::page, EventType::click, EventType::page});
  auto gen = first_positive_generator();
  auto examples = generate_examples(session, *gen, {}, 40);
  REQUIRE(examples.size() == 1);
  CHECK(examples[0].label == 0);
  CHECK(examples[0].cut_timestamp > session.events.back().timestamp);
  int real = 0;
  for (const auto& e : examples[0].instance.events)
    if (!e.is_blank()) ++real;
  CHECK(real == 3);
}

TEST_CASE("generate_examples: session opening with a positive gives an all-blank instance") {
  auto session = make_session("u", {EventType::positive, EventType::page});
  auto gen = first_positive_generator();
  auto examples = generate_examples(session, *gen, {}, 8);
  REQUIRE(examples.size() == 1);
  CHECK(examples[0].label == 1);
  for (const auto& e : examples[0].instance.events) CHECK(e.is_blank());
  CHECK(examples[0].instance.stats.at("click_count") == 0.0);
}

TEST_CASE("generate_examples rejects out-of-range cuts") {
  class BadGenerator : public ExampleGenerator {
  public:
    std::vector<Cut> scan(const UserSession& s) const override {
      return {Cut{s.events.size() + 1, 0}};
    }
    std::string name() const override { return "bad"; }
    std::string version() const override { return "1"; }
  };
  auto session = make_session("u", {EventType::page});
  CHECK_THROWS_AS(generate_examples(session, BadGenerator{}, {}, 4), GeneratorContractError);
}

TEST_CASE("leakage freedom: nothing at or after the cut appears in any instance") {
  Rng rng(5);
  auto gen = first_positive_generator();
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<EventType> types;
    int n = 1 + static_cast<int>(rng.uniform_int(30));
    for (int i = 0; i < n; ++i) {
      double roll = rng.uniform();
      types.push_back(roll < 0.1    ? EventType::positive
                      : roll < 0.4  ? EventType::click
                      : roll < 0.55 ? EventType::log
                                    : EventType::page);
    }
    auto session = make_session("u", types);
    for (const auto& ex : generate_examples(session, *gen, {}, 12)) {
      for (const auto& e : ex.instance.events) {
        if (e.is_blank()) continue;
        CHECK(e.timestamp < ex.cut_timestamp);
        CHECK(e.type != EventType::positive);
      }
    }
  }
}

TEST_CASE("make_instance pads the front with blanks") {
  std::vector<Event> events = {
      make_event("u", 1000, EventType::page),
      make_event("u", 2000, EventType::click),
      make_event("u", 3000, EventType::page),
  };
  Instance inst = make_instance(events, {}, 40);
  REQUIRE(inst.events.size() == 40);
  for (int i = 0; i < 37; ++i) CHECK(inst.events[static_cast<size_t>(i)].is_blank());
  CHECK(inst.events[37].type == EventType::page);
  CHECK(inst.events[39].timestamp == 3000);
  CHECK(inst.metadata.at("session_event_count") == 3.0);
}

TEST_CASE("make_instance keeps only the most recent events") {
  std::vector<Event> events;
  for (int i = 0; i < 50; ++i)
    events.push_back(make_event("u", 1000 + i * 100, EventType::page));
  Instance inst = make_instance(events, {}, 40);
  REQUIRE(inst.events.size() == 40);
  CHECK(inst.events.front().timestamp == events[10].timestamp);
  CHECK(inst.events.back().timestamp == events[49].timestamp);
  CHECK(inst.metadata.at("session_event_count") == 40.0);
}

TEST_CASE("make_instance on empty input is all blank with zero stats") {
  Instance inst = make_instance({}, {}, 6);
  REQUIRE(inst.events.size() == 6);
  for (const auto& e : inst.events) CHECK(e.is_blank());
  CHECK(inst.stats.at("click_count") == 0.0);
  CHECK(inst.stats.at("time_on_site_seconds") == 0.0);
  CHECK(inst.metadata.at("total_dwell_seconds") == 0.0);
}

TEST_CASE("make_instance is idempotent on the real-event suffix") {
  std::vector<Event> events;
  for (int i = 0; i < 7; ++i)
    events.push_back(make_event("u", 1000 + i * 500, EventType::click));
  Instance once = make_instance(events, {}, 10);
  Instance twice = make_instance(once.events, {}, 10);
  REQUIRE(once.events.size() == twice.events.size());
  for (size_t i = 0; i < once.events.size(); ++i) {
    CHECK(once.events[i].type == twice.events[i].type);
    CHECK(once.events[i].timestamp == twice.events[i].timestamp);
  }
  CHECK(once.stats == twice.stats);
  CHECK(once.metadata == twice.metadata);
}

TEST_CASE("filters are conjunctive and order independent") {
  std::vector<Event> events = {
      make_event("u", 1000, EventType::page),  make_event("u", 2000, EventType::log),
      make_event("u", 3000, EventType::click), make_event("u", 4000, EventType::scroll),
      make_event("u", 5000, EventType::page),
  };
  EventFilter no_log = drop_types_filter({EventType::log});
  EventFilter no_scroll = drop_types_filter({EventType::scroll});
  Instance a = make_instance(events, {no_log, no_scroll}, 8);
  Instance b = make_instance(events, {no_scroll, no_log}, 8);
  REQUIRE(a.events.size() == b.events.size());
  for (size_t i = 0; i < a.events.size(); ++i) CHECK(a.events[i].type == b.events[i].type);
  CHECK(a.metadata == b.metadata);
}

TEST_CASE("instance stats are finite and non-negative") {
  auto session = make_session("u", {EventType::page, EventType::click, EventType::click,
                                    EventType::page, EventType::positive});
  auto gen = first_positive_generator();
  auto examples = generate_examples(session, *gen, {}, 40);
  REQUIRE(examples.size() == 1);
  for (const auto& [name, value] : examples[0].instance.stats) {
    CHECK(std::isfinite(value));
    CHECK(value >= 0.0);
  }
  CHECK(examples[0].instance.stats.at("click_count") == 2.0);
}

TEST_CASE("metadata derives from surviving real events only") {
  std::vector<Event> events = {
      make_event("u", 10'000, EventType::page, "https://s.example/a"),
      make_event("u", 20'000, EventType::log),
      make_event("u", 70'000, EventType::page, "https://s.example/b"),
  };
  Instance inst = make_instance(events, {drop_types_filter({EventType::log})}, 5);
  CHECK(inst.metadata.at("session_event_count") == 2.0);
  CHECK(inst.metadata.at("distinct_page_count") == 2.0);
  CHECK(inst.metadata.at("total_dwell_seconds") == 60.0);
  CHECK(inst.metadata.at("is_returning_user") == 0.0);
}

TEST_CASE("unknown generator name is a config error") {
  CHECK_THROWS_AS(make_generator("mystery", EventType::positive), ConfigError);
  CHECK(make_generator("first_positive", EventType::positive)->name() == "first_positive");
}
