#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "clickcast/events.hpp"

namespace clickcast {

// Synthetic site with known ground truth: a weighted page graph, log-normal
// dwell times (optional refresh spike at one hour), and a logistic purchase
// propensity in (click_count, time_on_site).
struct SiteModel {
  int n_users = 20000;
  int n_pages = 50;
  double bot_fraction = 0.05;
  double registered_fraction = 0.3;

  double engagement_mu = 0.0;
  double engagement_sigma = 0.8;

  double dwell_mu = 2.2;     // log of seconds
  double dwell_sigma = 1.1;
  double refresh_spike_prob = 0.0;  // probability mass at 3600 s

  double propensity_intercept = -4.6;
  double propensity_per_click = 0.13;
  double propensity_per_minute = 0.5;

  int64_t sim_origin_ms = 1767225600000;  // 2026-01-01T00:00:00Z
  int sim_span_days = 14;

  uint64_t seed = 1;

  double propensity(double clicks, double time_on_site_seconds) const {
    double z = propensity_intercept + propensity_per_click * clicks +
               propensity_per_minute * (time_on_site_seconds / 60.0);
    return 1.0 / (1.0 + std::exp(-z));
  }
};

struct PageGraph {
  std::vector<std::string> paths;              // node 0 is the entry page
  std::vector<std::vector<int>> neighbors;
  std::vector<std::vector<double>> weights;    // cumulative per node
};

inline PageGraph build_page_graph(const SiteModel& site, Rng& rng) {
  if (site.n_pages < 2) throw ConfigError("site graph needs at least 2 pages");
  PageGraph g;
  g.paths.push_back("/");
  for (int i = 1; i < site.n_pages; ++i) {
    const char* kind = i % 3 == 0 ? "category" : (i % 3 == 1 ? "product" : "article");
    g.paths.push_back("/" + std::string(kind) + "/" + std::to_string(i));
  }
  g.neighbors.resize(g.paths.size());
  g.weights.resize(g.paths.size());
  for (int i = 0; i < site.n_pages; ++i) {
    std::vector<int> nbrs;
    nbrs.push_back((i + 1) % site.n_pages);  // ring keeps every page reachable
    nbrs.push_back(0);
    int extra = 2 + static_cast<int>(rng.uniform_int(3));
    for (int k = 0; k < extra; ++k) nbrs.push_back(static_cast<int>(rng.uniform_int(site.n_pages)));
    double cumulative = 0.0;
    for (int nbr : nbrs) {
      g.neighbors[static_cast<size_t>(i)].push_back(nbr);
      cumulative += 0.2 + rng.uniform();
      g.weights[static_cast<size_t>(i)].push_back(cumulative);
    }
  }
  return g;
}

inline bool graph_fully_reachable(const PageGraph& g) {
  std::vector<bool> seen(g.paths.size(), false);
  std::vector<int> queue = {0};
  seen[0] = true;
  size_t head = 0;
  while (head < queue.size()) {
    int cur = queue[static_cast<size_t>(head++)];
    for (int nbr : g.neighbors[static_cast<size_t>(cur)]) {
      if (!seen[static_cast<size_t>(nbr)]) {
        seen[static_cast<size_t>(nbr)] = true;
        queue.push_back(nbr);
      }
    }
  }
  for (bool s : seen)
    if (!s) return false;
  return true;
}

// Per real user: the propensity the purchase was drawn from.
struct GroundTruthRow {
  std::string anonymous_id;
  double true_probability = 0.0;
  int label = 0;
  double clicks = 0.0;
  double time_on_site_seconds = 0.0;
};

struct SynthResult {
  std::vector<GroundTruthRow> truth;
  int64_t bot_users = 0;
  int64_t events_written = 0;
};

namespace detail {

inline const char* browser_ua(uint64_t pick) {
  static const char* uas[] = {
      "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) "
      "Chrome/120.0 Safari/537.36",
      "Mozilla/5.0 (Macintosh; Intel Mac OS X 13_2) AppleWebKit/605.1.15 (KHTML, like Gecko) "
      "Version/16.3 Safari/605.1.15",
      "Mozilla/5.0 (X11; Linux x86_64; rv:115.0) Gecko/20100101 Firefox/115.0",
      "Mozilla/5.0 (Linux; Android 13; Pixel 7) AppleWebKit/537.36 (KHTML, like Gecko) "
      "Chrome/119.0 Mobile Safari/537.36",
  };
  return uas[pick % 4];
}

inline const char* bot_ua(uint64_t pick) {
  static const char* uas[] = {
      "Mozilla/5.0 (compatible; Googlebot/2.1; +http://www.google.com/bot.html)",
      "curl/8.0.1",
      "python-requests/2.31.0",
      "Mozilla/5.0 (compatible; AhrefsBot/7.0; +http://ahrefs.com/robot/)",
  };
  return uas[pick % 4];
}

}  // namespace detail

// Simulates every user's random walk and writes one raw event per line.
// Fully deterministic for a given SiteModel (per-user derived streams).
inline SynthResult generate_sessions(const SiteModel& site, std::ostream& out) {
  if (site.n_users < 1) throw ConfigError("n_users must be positive");
  Rng graph_rng = Rng(site.seed).derive(0x6a11);
  PageGraph graph = build_page_graph(site, graph_rng);
  if (!graph_fully_reachable(graph)) throw ConfigError("page graph is not reachable from the entry");

  SynthResult result;
  for (int u = 0; u < site.n_users; ++u) {
    Rng rng = Rng(site.seed).derive(0x5e55 + static_cast<uint64_t>(u));
    char id_buf[24];
    std::snprintf(id_buf, sizeof(id_buf), "u%06d", u);
    std::string anon_id = id_buf;
    bool is_bot = rng.bernoulli(site.bot_fraction);
    bool registered = !is_bot && rng.bernoulli(site.registered_fraction);
    std::string user_agent = is_bot ? detail::bot_ua(rng.next_u64()) : detail::browser_ua(rng.next_u64());

    double engagement = rng.lognormal(site.engagement_mu, site.engagement_sigma);
    // per-session budget stays well under the sessionize length cap
    int pageviews = 2 + rng.poisson(2.0 + 4.0 * engagement);
    pageviews = std::min(pageviews, 60);

    int64_t t = site.sim_origin_ms +
                static_cast<int64_t>(rng.uniform() * site.sim_span_days * 86400.0 * 1000.0);
    int page = 0;
    double clicks = 0.0;
    int64_t first_ts = t;

    auto emit = [&](const char* type, const std::string& url, json extra) {
      json j;
      j["timestamp"] = t;
      j["anonymousId"] = anon_id;
      if (registered) j["userId"] = "reg_" + anon_id;
      j["type"] = type;
      extra["userAgent"] = user_agent;
      if (!url.empty()) extra["url"] = url;
      j["payload"] = std::move(extra);
      // archive lines carry preprocessed events
      out << event_to_json(preprocess_event(j)).dump() << '\n';
      ++result.events_written;
    };

    for (int pv = 0; pv < pageviews; ++pv) {
      std::string url = "https://shop.example" + graph.paths[static_cast<size_t>(page)];
      if (pv % 4 == 3) url += "?ref=internal";
      emit("page", url, json::object());

      int64_t page_start = t;
      int n_clicks = rng.poisson(0.3 + 0.6 * engagement);
      for (int c = 0; c < n_clicks; ++c) {
        t += 250 + static_cast<int64_t>(rng.uniform_int(2500));
        emit("click", url, json{{"element", "cta_" + std::to_string(rng.uniform_int(8))}});
        clicks += 1.0;
      }
      if (rng.bernoulli(0.4)) {
        t += 100 + static_cast<int64_t>(rng.uniform_int(1500));
        emit("scroll", url, json{{"depth", static_cast<int>(rng.uniform_int(100))}});
      }
      if (rng.bernoulli(0.15)) {
        t += 50 + static_cast<int64_t>(rng.uniform_int(500));
        emit("log", "", json{{"note", "diagnostic"}});
      }

      if (pv + 1 < pageviews) {
        double dwell_s = rng.bernoulli(site.refresh_spike_prob)
                             ? 3600.0
                             : rng.lognormal(site.dwell_mu, site.dwell_sigma);
        int64_t next = page_start + static_cast<int64_t>(dwell_s * 1000.0) +
                       static_cast<int64_t>(rng.uniform_int(1000));
        t = std::max(next, t + 100);  // in-page activity never outruns the next load
        const auto& weights = graph.weights[static_cast<size_t>(page)];
        double pick = rng.uniform() * weights.back();
        size_t nbr = 0;
        while (nbr + 1 < weights.size() && weights[nbr] < pick) ++nbr;
        page = graph.neighbors[static_cast<size_t>(page)][nbr];
      }
    }

    double time_on_site = static_cast<double>(t - first_ts) / 1000.0;
    if (is_bot) {
      ++result.bot_users;
      continue;
    }
    double p = site.propensity(clicks, time_on_site);
    int label = rng.bernoulli(p) ? 1 : 0;
    if (label == 1) {
      t += 500 + static_cast<int64_t>(rng.uniform_int(4000));
      emit("positive", "https://shop.example/checkout/complete", json{{"name", "purchase"}});
    }
    result.truth.push_back(GroundTruthRow{anon_id, p, label, clicks, time_on_site});
  }
  return result;
}

inline SynthResult generate_sessions_to_file(const SiteModel& site, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open archive for writing: " + path);
  auto result = generate_sessions(site, out);
  if (!out) throw IoError("short write to archive: " + path);
  return result;
}

inline void write_truth_file(const std::string& path, const std::vector<GroundTruthRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open truth file: " + path);
  out.precision(12);
  out << "anonymousId\ttrueProbability\tlabel\tclicks\ttimeOnSiteSeconds\n";
  for (const auto& r : rows)
    out << r.anonymous_id << '\t' << r.true_probability << '\t' << r.label << '\t' << r.clicks << '\t'
        << r.time_on_site_seconds << '\n';
}

inline std::vector<GroundTruthRow> read_truth_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open truth file: " + path);
  std::vector<GroundTruthRow> rows;
  std::string header;
  std::getline(in, header);
  GroundTruthRow r;
  while (in >> r.anonymous_id >> r.true_probability >> r.label >> r.clicks >> r.time_on_site_seconds)
    rows.push_back(r);
  return rows;
}

}  // namespace clickcast
