#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "clickcast/common.hpp"

namespace clickcast {

using Probs2 = std::array<double, 2>;
using Logits2 = std::array<double, 2>;

inline Probs2 softmax2(const Logits2& z) {
  double m = std::max(z[0], z[1]);
  double e0 = std::exp(z[0] - m);
  double e1 = std::exp(z[1] - m);
  double s = e0 + e1;
  return {e0 / s, e1 / s};
}

// Expected calibration error under the max-probability convention:
// confidence = max class probability, predicted label = argmax, samples
// binned into M equal intervals ((m-1)/M, m/M]. Empty bins contribute 0.
inline double ece(const std::vector<double>& positive_probs, const std::vector<int>& labels, int M) {
  if (positive_probs.empty()) throw MetricError("ece needs at least one prediction");
  if (positive_probs.size() != labels.size()) throw MetricError("ece inputs differ in length");
  if (M < 1) throw MetricError("ece needs M >= 1");

  std::vector<double> conf_sum(static_cast<size_t>(M), 0.0);
  std::vector<int64_t> correct(static_cast<size_t>(M), 0);
  std::vector<int64_t> count(static_cast<size_t>(M), 0);
  for (size_t i = 0; i < positive_probs.size(); ++i) {
    double p1 = positive_probs[i];
    double conf = std::max(p1, 1.0 - p1);
    int predicted = p1 > 1.0 - p1 ? 1 : 0;
    auto bin = static_cast<int>(std::ceil(conf * M));
    bin = std::clamp(bin, 1, M);
    size_t b = static_cast<size_t>(bin) - 1;
    conf_sum[b] += conf;
    correct[b] += predicted == labels[i] ? 1 : 0;
    count[b] += 1;
  }

  double n = static_cast<double>(positive_probs.size());
  double total = 0.0;
  for (size_t b = 0; b < static_cast<size_t>(M); ++b) {
    if (count[b] == 0) continue;
    double acc = static_cast<double>(correct[b]) / static_cast<double>(count[b]);
    double conf = conf_sum[b] / static_cast<double>(count[b]);
    total += (static_cast<double>(count[b]) / n) * std::abs(acc - conf);
  }
  return total;
}

struct CalibrationBucket {
  int64_t count = 0;
  int64_t positive_count = 0;
  double conf = 0.0;    // mean predicted positive-class probability
  double actual = 0.0;  // positive fraction
};

// Buckets ordered by prediction descending; every bucket except possibly
// the last holds at least min_positives positives.
struct CalibrationCurve {
  std::vector<CalibrationBucket> buckets;
  bool degenerate = false;  // fewer than min_positives positives overall
};

inline CalibrationCurve calibration_curve(const std::vector<double>& positive_probs,
                                          const std::vector<int>& labels,
                                          int64_t min_positives = 100) {
  if (positive_probs.size() != labels.size())
    throw MetricError("calibration_curve inputs differ in length");
  CalibrationCurve curve;
  if (positive_probs.empty()) {
    curve.degenerate = true;
    return curve;
  }

  std::vector<size_t> order(positive_probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return positive_probs[a] > positive_probs[b];
  });

  int64_t total_positives = 0;
  for (int label : labels) total_positives += label;
  curve.degenerate = total_positives < min_positives;

  CalibrationBucket current;
  double conf_sum = 0.0;
  auto flush = [&]() {
    if (current.count == 0) return;
    current.conf = conf_sum / static_cast<double>(current.count);
    current.actual = static_cast<double>(current.positive_count) / static_cast<double>(current.count);
    curve.buckets.push_back(current);
    current = CalibrationBucket{};
    conf_sum = 0.0;
  };

  for (size_t idx : order) {
    current.count += 1;
    current.positive_count += labels[idx];
    conf_sum += positive_probs[idx];
    if (!curve.degenerate && current.positive_count >= min_positives) flush();
  }
  flush();
  return curve;
}

// Post-hoc recalibration: softmax(W z + b) over the model's logits.
struct MatrixScaling {
  std::array<std::array<double, 2>, 2> w = {{{1.0, 0.0}, {0.0, 1.0}}};
  std::array<double, 2> b = {0.0, 0.0};
};

inline Probs2 apply_matrix_scaling(const Logits2& z, const MatrixScaling& ms) {
  Logits2 t{ms.w[0][0] * z[0] + ms.w[0][1] * z[1] + ms.b[0],
            ms.w[1][0] * z[0] + ms.w[1][1] * z[1] + ms.b[1]};
  return softmax2(t);
}

struct LrSchedule {
  double initial = 0.1;
  double decay = 0.5;
  int decay_every = 200;
  int steps = 1000;
};

struct MatrixScalingFit {
  MatrixScaling scaling;
  std::vector<size_t> fit_indices;
  std::vector<size_t> holdout_indices;  // reserved for reporting
};

// Full-batch gradient descent on mean cross-entropy over a seeded half of
// the inputs, from an identity initialization. The other half is returned
// untouched so callers can report on it.
inline MatrixScalingFit matrix_scaling_fit(const std::vector<Logits2>& logits,
                                           const std::vector<int>& labels,
                                           double fit_fraction = 0.5,
                                           const LrSchedule& schedule = {},
                                           uint64_t seed = 17) {
  if (logits.size() != labels.size()) throw FitError("matrix scaling inputs differ in length");
  if (logits.empty()) throw FitError("matrix scaling needs data");

  std::vector<size_t> order(logits.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  size_t n_fit = std::max<size_t>(1, static_cast<size_t>(std::llround(fit_fraction * order.size())));
  n_fit = std::min(n_fit, order.size());

  MatrixScalingFit result;
  result.fit_indices.assign(order.begin(), order.begin() + static_cast<ptrdiff_t>(n_fit));
  result.holdout_indices.assign(order.begin() + static_cast<ptrdiff_t>(n_fit), order.end());

  bool has0 = false, has1 = false;
  for (size_t i : result.fit_indices) (labels[i] == 1 ? has1 : has0) = true;
  if (!has0 || !has1) throw FitError("fit half contains a single class");

  MatrixScaling ms;
  double inv_n = 1.0 / static_cast<double>(n_fit);
  for (int step = 0; step < schedule.steps; ++step) {
    double lr = schedule.initial * std::pow(schedule.decay, step / schedule.decay_every);
    double gw[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
    double gb[2] = {0.0, 0.0};
    for (size_t i : result.fit_indices) {
      Probs2 p = apply_matrix_scaling(logits[i], ms);
      double d0 = p[0] - (labels[i] == 0 ? 1.0 : 0.0);
      double d1 = p[1] - (labels[i] == 1 ? 1.0 : 0.0);
      gw[0][0] += d0 * logits[i][0];
      gw[0][1] += d0 * logits[i][1];
      gw[1][0] += d1 * logits[i][0];
      gw[1][1] += d1 * logits[i][1];
      gb[0] += d0;
      gb[1] += d1;
    }
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 2; ++c) ms.w[r][c] -= lr * gw[r][c] * inv_n;
      ms.b[r] -= lr * gb[r] * inv_n;
    }
  }
  result.scaling = ms;
  return result;
}

}  // namespace clickcast
