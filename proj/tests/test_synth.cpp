#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "clickcast/synth.hpp"
#include "helpers.hpp"

using namespace clickcast;
using testutil::TempDir;

namespace {

SiteModel small_site(int users = 2000, uint64_t seed = 5) {
  SiteModel site;
  site.n_users = users;
  site.seed = seed;
  return site;
}

}  // namespace

TEST_CASE("generate_sessions is byte-identical under a fixed seed") {
  SiteModel site = small_site(400);
  std::ostringstream a, b;
  auto ra = generate_sessions(site, a);
  auto rb = generate_sessions(site, b);
  CHECK(a.str() == b.str());
  CHECK(ra.events_written == rb.events_written);
  REQUIRE(ra.truth.size() == rb.truth.size());
  for (size_t i = 0; i < ra.truth.size(); ++i)
    CHECK(ra.truth[i].true_probability == rb.truth[i].true_probability);

  SiteModel other = small_site(400, 6);
  std::ostringstream c;
  generate_sessions(other, c);
  CHECK(a.str() != c.str());
}

TEST_CASE("bot users land within binomial bounds and never purchase") {
  SiteModel site = small_site(10000, 77);
  site.bot_fraction = 0.1;
  std::ostringstream out;
  auto result = generate_sessions(site, out);
  double expected = 1000.0;
  double sigma = std::sqrt(10000.0 * 0.1 * 0.9);
  CHECK(std::abs(static_cast<double>(result.bot_users) - expected) < 3.0 * sigma);
  // bots produce no truth rows, so truth + bots = all users
  CHECK(result.truth.size() + static_cast<size_t>(result.bot_users) == 10000);
}

TEST_CASE("bot sessions carry bot user agents and vanish at sessionize") {
  SiteModel site = small_site(800, 3);
  site.bot_fraction = 0.2;
  TempDir dir("synth");
  auto result = generate_sessions_to_file(site, dir.str() + "/events.jsonl");
  auto events = read_archive(dir.str() + "/events.jsonl");
  auto sessions = sessionize(events, {});
  CHECK(sessions.size() == result.truth.size());
  for (const auto& s : sessions)
    for (const auto& e : s.events)
      if (e.user_agent) CHECK_FALSE(e.user_agent->is_bot);
}

TEST_CASE("realized positive rates follow the logistic propensity") {
  SiteModel site = small_site(20000, 11);
  std::ostringstream out;
  auto result = generate_sessions(site, out);

  // bucket users by their true propensity; realized rate must match within
  // binomial noise
  std::map<int, std::pair<int64_t, int64_t>> buckets;  // decile -> (count, positives)
  double mean_abs_gap = 0.0;
  int used = 0;
  for (const auto& row : result.truth) {
    int b = std::min(9, static_cast<int>(row.true_probability * 10.0));
    buckets[b].first += 1;
    buckets[b].second += row.label;
  }
  for (const auto& [b, cp] : buckets) {
    if (cp.first < 300) continue;
    double expected_mid = 0.0;
    int64_t n = 0;
    for (const auto& row : result.truth) {
      if (std::min(9, static_cast<int>(row.true_probability * 10.0)) == b) {
        expected_mid += row.true_probability;
        ++n;
      }
    }
    expected_mid /= static_cast<double>(n);
    double realized = static_cast<double>(cp.second) / static_cast<double>(cp.first);
    double sigma = std::sqrt(expected_mid * (1.0 - expected_mid) / static_cast<double>(cp.first));
    CHECK(std::abs(realized - expected_mid) < 4.0 * sigma + 1e-9);
    mean_abs_gap += std::abs(realized - expected_mid);
    ++used;
  }
  CHECK(used >= 2);

  // propensity is monotone in its inputs by construction
  CHECK(site.propensity(30, 600) > site.propensity(2, 30));
  CHECK(site.propensity(0, 0) < 0.05);
}

TEST_CASE("engaged users purchase far above the base rate") {
  SiteModel site = small_site(20000, 13);
  std::ostringstream out;
  auto result = generate_sessions(site, out);
  int64_t base_pos = 0, engaged_pos = 0, engaged_n = 0;
  for (const auto& row : result.truth) {
    base_pos += row.label;
    if (row.clicks > 10 && row.time_on_site_seconds > 60) {
      engaged_pos += row.label;
      ++engaged_n;
    }
  }
  double base_rate = static_cast<double>(base_pos) / result.truth.size();
  REQUIRE(engaged_n > 200);
  double engaged_rate = static_cast<double>(engaged_pos) / static_cast<double>(engaged_n);
  CHECK(engaged_rate > 2.0 * base_rate);
  CHECK(base_rate > 0.01);
  CHECK(base_rate < 0.25);
}

TEST_CASE("dwell gaps between page loads are heavy tailed (skewness > 2)") {
  SiteModel site = small_site(3000, 21);
  TempDir dir("dwell");
  generate_sessions_to_file(site, dir.str() + "/events.jsonl");
  auto events = read_archive(dir.str() + "/events.jsonl");
  auto sessions = sessionize(events, {});

  std::vector<double> gaps;
  for (const auto& s : sessions) {
    int64_t prev_page_ts = 0;
    for (const auto& e : s.events) {
      if (e.type != EventType::page) continue;
      if (prev_page_ts > 0) gaps.push_back(static_cast<double>(e.timestamp - prev_page_ts) / 1000.0);
      prev_page_ts = e.timestamp;
    }
  }
  REQUIRE(gaps.size() > 1000);
  double mean = 0.0;
  for (double g : gaps) mean += g;
  mean /= static_cast<double>(gaps.size());
  double m2 = 0.0, m3 = 0.0;
  for (double g : gaps) {
    double d = g - mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= static_cast<double>(gaps.size());
  m3 /= static_cast<double>(gaps.size());
  double skewness = m3 / std::pow(m2, 1.5);
  CHECK(skewness > 2.0);
}

TEST_CASE("page graph is reachable from the entry node") {
  SiteModel site = small_site(10, 9);
  for (uint64_t seed = 1; seed <= 25; ++seed) {
    Rng rng = Rng(seed).derive(0x6a11);
    auto graph = build_page_graph(site, rng);
    CHECK(graph_fully_reachable(graph));
    CHECK(graph.paths[0] == "/");
  }
  CHECK_THROWS_AS(
      [] {
        SiteModel bad;
        bad.n_pages = 1;
        Rng rng(1);
        build_page_graph(bad, rng);
      }(),
      ConfigError);
}

TEST_CASE("truth file round trip") {
  TempDir dir("truth");
  std::vector<GroundTruthRow> rows = {
      {"u000001", 0.125, 1, 7.0, 93.5},
      {"u000002", 0.03, 0, 1.0, 12.0},
  };
  write_truth_file(dir.str() + "/truth.tsv", rows);
  auto back = read_truth_file(dir.str() + "/truth.tsv");
  REQUIRE(back.size() == 2);
  CHECK(back[0].anonymous_id == "u000001");
  CHECK(back[0].true_probability == doctest::Approx(0.125).epsilon(1e-9));
  CHECK(back[1].label == 0);
  CHECK(back[1].clicks == 1.0);
}

TEST_CASE("generated archives sessionize into valid, learnable structure") {
  SiteModel site = small_site(500, 31);
  TempDir dir("struct");
  auto result = generate_sessions_to_file(site, dir.str() + "/events.jsonl");
  auto events = read_archive(dir.str() + "/events.jsonl");
  auto sessions = sessionize(events, {});
  CHECK(!sessions.empty());
  int64_t positives = 0;
  for (const auto& s : sessions) {
    CHECK(validate_session(s));
    for (const auto& e : s.events) {
      if (e.type == EventType::positive) ++positives;
      if (e.type == EventType::page) {
        REQUIRE(e.url_parts.has_value());
        CHECK(e.url_parts->host == "shop.example");
      }
    }
  }
  int64_t truth_positives = 0;
  for (const auto& r : result.truth) truth_positives += r.label;
  CHECK(positives == truth_positives);
}
