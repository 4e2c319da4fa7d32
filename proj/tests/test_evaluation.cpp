#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "clickcast/evaluation.hpp"
#include "helpers.hpp"

using namespace clickcast;

namespace {

// O(n^2) pair counting with ties at half credit, kept in integers so the
// comparison against the rank-based implementation is exact.
double brute_force_auc(const std::vector<double>& preds, const std::vector<int>& labels) {
  int64_t n_pos = 0, n_neg = 0, wins_x2 = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] != 1) continue;
    ++n_pos;
    for (size_t j = 0; j < preds.size(); ++j) {
      if (labels[j] == 1) continue;
      if (preds[i] > preds[j]) wins_x2 += 2;
      else if (preds[i] == preds[j]) wins_x2 += 1;
    }
  }
  for (int l : labels) n_neg += l == 0 ? 1 : 0;
  return static_cast<double>(wins_x2) / static_cast<double>(2 * n_pos * n_neg);
}

}  // namespace

TEST_CASE("auc on the worked example") {
  std::vector<double> preds = {0.1, 0.4, 0.35, 0.8};
  std::vector<int> labels = {0, 0, 1, 1};
  CHECK(auc(preds, labels) == 0.75);
}

TEST_CASE("auc definition cases") {
  CHECK(auc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == 1.0);
  CHECK(auc({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}) == 0.0);
  CHECK(auc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == 0.5);
  CHECK_THROWS_AS(auc({0.5, 0.6}, {1, 1}), MetricError);
  CHECK_THROWS_AS(auc({0.5, 0.6}, {0, 0}), MetricError);
}

TEST_CASE("auc equals brute-force pair counting exactly on random inputs") {
  Rng rng(606);
  for (int trial = 0; trial < 220; ++trial) {
    size_t n = 2 + rng.uniform_int(499);
    std::vector<double> preds;
    std::vector<int> labels;
    bool has0 = false, has1 = false;
    for (size_t i = 0; i < n; ++i) {
      // coarse grid forces plenty of ties
      preds.push_back(static_cast<double>(rng.uniform_int(20)) / 20.0);
      int label = rng.bernoulli(0.3) ? 1 : 0;
      labels.push_back(label);
      (label == 1 ? has1 : has0) = true;
    }
    if (!has0 || !has1) continue;
    REQUIRE(auc(preds, labels) == brute_force_auc(preds, labels));  // bit-exact
  }
}

TEST_CASE("auc is invariant under strictly monotone transforms") {
  Rng rng(607);
  std::vector<double> preds;
  std::vector<int> labels;
  for (int i = 0; i < 300; ++i) {
    preds.push_back(rng.uniform());
    labels.push_back(rng.bernoulli(0.4) ? 1 : 0);
  }
  double base = auc(preds, labels);
  std::vector<double> logit, cubed;
  for (double p : preds) {
    logit.push_back(std::log((p + 1e-9) / (1.0 - p + 1e-9)));
    cubed.push_back(p * p * p);
  }
  CHECK(auc(logit, labels) == base);
  CHECK(auc(cubed, labels) == base);
}

TEST_CASE("odds segments on a uniform predictor are all 1.0") {
  std::vector<double> preds(100, 0.7);
  std::vector<int> labels;
  for (int i = 0; i < 100; ++i) labels.push_back(i % 5 == 0 ? 1 : 0);
  auto segments = odds_segments(preds, labels, 5);
  REQUIRE(segments.size() == 5);
  int64_t total = 0;
  for (const auto& s : segments) {
    CHECK(s.odds_ratio == doctest::Approx(1.0).epsilon(1e-12));
    total += s.count;
  }
  CHECK(total == 100);
}

TEST_CASE("odds segments split sizes and rates") {
  // 7 samples into 3 buckets: sizes 3, 2, 2 with the remainder up front
  std::vector<double> preds = {0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3};
  std::vector<int> labels = {1, 1, 1, 0, 0, 0, 0};
  auto segments = odds_segments(preds, labels, 3);
  REQUIRE(segments.size() == 3);
  CHECK(segments[0].count == 3);
  CHECK(segments[1].count == 2);
  CHECK(segments[2].count == 2);
  CHECK(segments[0].positive_rate == 1.0);
  CHECK(segments[0].odds_ratio == doctest::Approx(7.0 / 3.0));
  CHECK(segments[2].positive_rate == 0.0);

  // count * positive_rate sums back to the positives
  double recovered = 0.0;
  for (const auto& s : segments) recovered += s.positive_rate * static_cast<double>(s.count);
  CHECK(recovered == doctest::Approx(3.0));

  CHECK_THROWS_AS(odds_segments(preds, {0, 0, 0, 0, 0, 0, 0}, 3), MetricError);
  CHECK_THROWS_AS(odds_segments({0.1}, {1}, 3), MetricError);
}

TEST_CASE("odds ratios are non-increasing when predictions are the true probabilities") {
  Rng rng(608);
  std::vector<double> preds;
  std::vector<int> labels;
  for (int i = 0; i < 50000; ++i) {
    double p = rng.uniform() * rng.uniform();  // skewed toward low propensity
    preds.push_back(p);
    labels.push_back(rng.bernoulli(p) ? 1 : 0);
  }
  auto segments = odds_segments(preds, labels, 5);
  for (size_t i = 1; i < segments.size(); ++i)
    CHECK(segments[i].odds_ratio <= segments[i - 1].odds_ratio);
}

TEST_CASE("prediction distribution") {
  auto all_half = prediction_distribution(std::vector<double>(50, 0.5), 20);
  int nonzero = 0;
  for (auto c : all_half) nonzero += c > 0 ? 1 : 0;
  CHECK(nonzero == 1);
  CHECK(all_half[10] == 50);

  CHECK(prediction_distribution({}, 20) == std::vector<int64_t>(20, 0));

  Rng rng(609);
  std::vector<double> uniform;
  for (int i = 0; i < 20000; ++i) uniform.push_back(rng.uniform());
  auto hist = prediction_distribution(uniform, 20);
  int64_t total = 0;
  double sigma = std::sqrt(20000.0 * 0.05 * 0.95);
  for (auto c : hist) {
    total += c;
    CHECK(std::abs(static_cast<double>(c) - 1000.0) < 3.0 * sigma);
  }
  CHECK(total == 20000);

  // boundary values land in the extreme bins
  auto edges = prediction_distribution({0.0, 1.0}, 4);
  CHECK(edges[0] == 1);
  CHECK(edges[3] == 1);
}

TEST_CASE("cohort_report with the identity predicate equals the global view") {
  Rng rng(610);
  std::vector<double> preds;
  std::vector<int> labels;
  std::vector<std::map<std::string, double>> stats;
  for (int i = 0; i < 4000; ++i) {
    double p = rng.uniform();
    preds.push_back(p);
    labels.push_back(rng.bernoulli(p) ? 1 : 0);
    stats.push_back({{"click_count", static_cast<double>(rng.uniform_int(30))}});
  }
  auto everyone = [](const std::map<std::string, double>&) { return true; };
  auto report = cohort_report(preds, labels, stats, everyone, "all");
  CHECK(report.count == 4000);

  auto global_curve = calibration_curve(preds, labels, 100);
  REQUIRE(report.curve.buckets.size() == global_curve.buckets.size());
  for (size_t i = 0; i < global_curve.buckets.size(); ++i) {
    CHECK(report.curve.buckets[i].count == global_curve.buckets[i].count);
    CHECK(report.curve.buckets[i].conf == global_curve.buckets[i].conf);
    CHECK(report.curve.buckets[i].actual == global_curve.buckets[i].actual);
  }

  auto nobody = [](const std::map<std::string, double>&) { return false; };
  CHECK_THROWS_AS(cohort_report(preds, labels, stats, nobody), ReportError);
}

TEST_CASE("eval report serializes with a version header and series files") {
  testutil::TempDir dir("report");
  Rng rng(611);
  std::vector<double> preds;
  std::vector<int> labels;
  for (int i = 0; i < 3000; ++i) {
    double p = rng.uniform();
    preds.push_back(p);
    labels.push_back(rng.bernoulli(p) ? 1 : 0);
  }
  EvalReport report = evaluate_predictions(preds, labels);
  json doc = eval_report_to_json(report);
  CHECK(doc["reportVersion"] == 1);
  CHECK(doc["oddsSegments"].size() == 5);
  CHECK(doc["predictionHistogram"].size() == 20);

  write_report_series(dir.str(), report);
  std::ifstream series(dir.str() + "/calibration_all_users_predicted.tsv");
  REQUIRE(series.good());
  std::string header;
  std::getline(series, header);
  CHECK(header == "bucket\tpredicted");
  std::string first;
  std::getline(series, first);
  CHECK(first.find('\t') != std::string::npos);
}
