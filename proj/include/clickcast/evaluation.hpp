#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "clickcast/calibration.hpp"
#include "clickcast/examples.hpp"

namespace clickcast {

// Probability that a random positive outranks a random negative, ties at
// half credit. Rank-based; the numerator is kept in integers so the result
// matches brute-force pair counting exactly.
inline double auc(const std::vector<double>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size()) throw MetricError("auc inputs differ in length");
  int64_t n_pos = 0, n_neg = 0;
  for (int label : labels) (label == 1 ? n_pos : n_neg) += 1;
  if (n_pos == 0 || n_neg == 0) throw MetricError("auc needs both classes");

  std::vector<size_t> order(predictions.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return predictions[a] < predictions[b]; });

  // twice the positive rank sum, accumulated per tie group
  int64_t rank_sum_x2 = 0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j < order.size() && predictions[order[j]] == predictions[order[i]]) ++j;
    int64_t avg_rank_x2 = static_cast<int64_t>(i + 1) + static_cast<int64_t>(j);  // (lo + hi) ranks
    for (size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) rank_sum_x2 += avg_rank_x2;
    i = j;
  }
  int64_t numerator = rank_sum_x2 - n_pos * (n_pos + 1);
  return static_cast<double>(numerator) / static_cast<double>(2 * n_pos * n_neg);
}

struct OddsSegment {
  int bucket_index = 0;  // 0 = highest predictions
  int64_t count = 0;
  double positive_rate = 0.0;
  double odds_ratio = 0.0;  // positive_rate / base rate
};

// Sort descending, split into n_segments near-equal contiguous buckets
// (earlier buckets take the remainder), report each bucket's positive
// rate as a ratio to the base rate.
inline std::vector<OddsSegment> odds_segments(const std::vector<double>& predictions,
                                              const std::vector<int>& labels, int n_segments = 5) {
  if (predictions.size() != labels.size()) throw MetricError("odds_segments inputs differ in length");
  if (n_segments < 1 || predictions.size() < static_cast<size_t>(n_segments))
    throw MetricError("odds_segments needs at least n_segments samples");
  int64_t positives = 0;
  for (int label : labels) positives += label;
  if (positives == 0) throw MetricError("odds_segments needs a nonzero base rate");
  double base_rate = static_cast<double>(positives) / static_cast<double>(labels.size());

  std::vector<size_t> order(predictions.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return predictions[a] > predictions[b]; });

  std::vector<OddsSegment> segments;
  size_t n = order.size();
  size_t buckets = static_cast<size_t>(n_segments);
  size_t cursor = 0;
  for (size_t b = 0; b < buckets; ++b) {
    size_t size = n / buckets + (b < n % buckets ? 1 : 0);
    int64_t pos = 0;
    for (size_t k = cursor; k < cursor + size; ++k) pos += labels[order[k]];
    OddsSegment seg;
    seg.bucket_index = static_cast<int>(b);
    seg.count = static_cast<int64_t>(size);
    seg.positive_rate = static_cast<double>(pos) / static_cast<double>(size);
    seg.odds_ratio = seg.positive_rate / base_rate;
    segments.push_back(seg);
    cursor += size;
  }
  return segments;
}

// Equal-width histogram over [0,1].
inline std::vector<int64_t> prediction_distribution(const std::vector<double>& predictions,
                                                    int n_bins = 20) {
  if (n_bins < 1) throw MetricError("histogram needs at least one bin");
  std::vector<int64_t> counts(static_cast<size_t>(n_bins), 0);
  for (double p : predictions) {
    auto bin = static_cast<int>(p * n_bins);
    bin = std::clamp(bin, 0, n_bins - 1);
    counts[static_cast<size_t>(bin)] += 1;
  }
  return counts;
}

using StatsPredicate = std::function<bool(const std::map<std::string, double>&)>;

struct CohortReport {
  std::string name;
  int64_t count = 0;
  CalibrationCurve curve;
  double top_decile_positive_rate = 0.0;
};

// Slice by a predicate over the stored per-example stats, then report the
// cohort's calibration curve and the positive rate inside its top 10% of
// predictions.
inline CohortReport cohort_report(const std::vector<double>& predictions,
                                  const std::vector<int>& labels,
                                  const std::vector<std::map<std::string, double>>& stats,
                                  const StatsPredicate& predicate, const std::string& name = "cohort",
                                  int64_t min_positives = 100) {
  if (predictions.size() != labels.size() || predictions.size() != stats.size())
    throw MetricError("cohort_report inputs differ in length");
  std::vector<double> sel_preds;
  std::vector<int> sel_labels;
  for (size_t i = 0; i < predictions.size(); ++i) {
    if (predicate(stats[i])) {
      sel_preds.push_back(predictions[i]);
      sel_labels.push_back(labels[i]);
    }
  }
  if (sel_preds.empty()) throw ReportError("cohort predicate selected no examples");

  CohortReport report;
  report.name = name;
  report.count = static_cast<int64_t>(sel_preds.size());
  report.curve = calibration_curve(sel_preds, sel_labels, min_positives);

  std::vector<size_t> order(sel_preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return sel_preds[a] > sel_preds[b]; });
  size_t top = (sel_preds.size() + 9) / 10;
  int64_t pos = 0;
  for (size_t k = 0; k < top; ++k) pos += sel_labels[order[k]];
  report.top_decile_positive_rate = static_cast<double>(pos) / static_cast<double>(top);
  return report;
}

struct EvalReport {
  double auc = 0.0;
  double ece = 0.0;
  CalibrationCurve curve;
  std::vector<OddsSegment> segments;
  std::vector<int64_t> histogram;
  std::vector<CohortReport> cohorts;
  int64_t n = 0;
  int64_t positives = 0;
};

inline EvalReport evaluate_predictions(const std::vector<double>& predictions,
                                       const std::vector<int>& labels, int ece_bins = 10,
                                       int n_segments = 5, int histogram_bins = 20,
                                       int64_t min_positives = 100) {
  EvalReport report;
  report.auc = auc(predictions, labels);
  report.ece = ece(predictions, labels, ece_bins);
  report.curve = calibration_curve(predictions, labels, min_positives);
  report.segments = odds_segments(predictions, labels, n_segments);
  report.histogram = prediction_distribution(predictions, histogram_bins);
  report.n = static_cast<int64_t>(predictions.size());
  for (int label : labels) report.positives += label;
  return report;
}

inline json calibration_curve_to_json(const CalibrationCurve& curve) {
  json buckets = json::array();
  for (const auto& b : curve.buckets)
    buckets.push_back({{"count", b.count},
                       {"positiveCount", b.positive_count},
                       {"conf", b.conf},
                       {"actual", b.actual}});
  return json{{"buckets", buckets}, {"degenerate", curve.degenerate}};
}

inline json eval_report_to_json(const EvalReport& r) {
  json segments = json::array();
  for (const auto& s : r.segments)
    segments.push_back({{"bucket", s.bucket_index},
                        {"count", s.count},
                        {"positiveRate", s.positive_rate},
                        {"oddsRatio", s.odds_ratio}});
  json cohorts = json::object();
  for (const auto& c : r.cohorts)
    cohorts[c.name] = {{"count", c.count},
                       {"topDecilePositiveRate", c.top_decile_positive_rate},
                       {"calibrationCurve", calibration_curve_to_json(c.curve)}};
  return json{{"reportVersion", 1},
              {"auc", r.auc},
              {"ece", r.ece},
              {"n", r.n},
              {"positives", r.positives},
              {"calibrationCurve", calibration_curve_to_json(r.curve)},
              {"oddsSegments", segments},
              {"predictionHistogram", r.histogram},
              {"cohorts", cohorts}};
}

// Plot-ready series: two tab-separated columns under a one-line header.
inline void write_series(const std::string& path, const std::string& x_name,
                         const std::string& y_name, const std::vector<double>& xs,
                         const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw ReportError("series columns differ in length");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open series file: " + path);
  out.precision(12);
  out << x_name << '\t' << y_name << '\n';
  for (size_t i = 0; i < xs.size(); ++i) out << xs[i] << '\t' << ys[i] << '\n';
}

inline void write_calibration_series(const std::string& prefix, const CalibrationCurve& curve) {
  std::vector<double> xs, conf, actual;
  for (size_t i = 0; i < curve.buckets.size(); ++i) {
    xs.push_back(static_cast<double>(i + 1));
    conf.push_back(curve.buckets[i].conf);
    actual.push_back(curve.buckets[i].actual);
  }
  write_series(prefix + "_predicted.tsv", "bucket", "predicted", xs, conf);
  write_series(prefix + "_actual.tsv", "bucket", "actual", xs, actual);
}

inline void write_report_series(const std::string& dir, const EvalReport& report) {
  write_calibration_series(dir + "/calibration_all_users", report.curve);
  std::vector<double> seg_x, seg_y;
  for (const auto& s : report.segments) {
    seg_x.push_back(static_cast<double>(s.bucket_index + 1));
    seg_y.push_back(s.odds_ratio);
  }
  write_series(dir + "/odds_segments.tsv", "bucket", "odds_ratio", seg_x, seg_y);
  std::vector<double> hist_x, hist_y;
  for (size_t i = 0; i < report.histogram.size(); ++i) {
    hist_x.push_back((static_cast<double>(i) + 0.5) / static_cast<double>(report.histogram.size()));
    hist_y.push_back(static_cast<double>(report.histogram[i]));
  }
  write_series(dir + "/prediction_histogram.tsv", "bin_center", "count", hist_x, hist_y);
  for (const auto& c : report.cohorts)
    write_calibration_series(dir + "/calibration_cohort_" + c.name, c.curve);
}

}  // namespace clickcast
