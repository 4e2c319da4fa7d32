#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "clickcast/calibration.hpp"

using namespace clickcast;

TEST_CASE("ece is zero for a per-bin perfectly calibrated predictor") {
  // two confidence levels; accuracy within each equals the confidence
  std::vector<double> probs;
  std::vector<int> labels;
  for (int i = 0; i < 100; ++i) {
    probs.push_back(0.75);
    labels.push_back(i < 75 ? 1 : 0);  // acc in bin = 0.75 = conf
  }
  for (int i = 0; i < 100; ++i) {
    probs.push_back(0.95);
    labels.push_back(i < 95 ? 1 : 0);
  }
  CHECK(ece(probs, labels, 10) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("ece hand-computed three sample case") {
  std::vector<double> probs = {0.9, 0.8, 0.3};
  std::vector<int> labels = {1, 0, 0};
  // confidences 0.9, 0.8, 0.7 all land in bin (0.5, 1]; acc 2/3, conf 0.8
  double expected = std::abs(2.0 / 3.0 - (0.9 + 0.8 + 0.7) / 3.0);
  CHECK(std::abs(ece(probs, labels, 2) - expected) < 1e-12);
}

TEST_CASE("ece of a single correct sample is 1 - confidence") {
  CHECK(ece({0.8}, {1}, 10) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(ece({0.1}, {0}, 10) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("ece stays in [0,1] and rejects bad input") {
  Rng rng(8);
  std::vector<double> probs;
  std::vector<int> labels;
  for (int i = 0; i < 500; ++i) {
    probs.push_back(rng.uniform());
    labels.push_back(rng.bernoulli(0.4) ? 1 : 0);
  }
  double e = ece(probs, labels, 15);
  CHECK(e >= 0.0);
  CHECK(e <= 1.0);
  CHECK_THROWS_AS(ece({}, {}, 10), MetricError);
}

TEST_CASE("perfectly calibrated synthetic predictor has tiny ece at n=100k") {
  Rng rng(99);
  std::vector<double> probs;
  std::vector<int> labels;
  for (int i = 0; i < 100000; ++i) {
    double p = rng.uniform();
    probs.push_back(p);
    labels.push_back(rng.bernoulli(p) ? 1 : 0);
  }
  CHECK(ece(probs, labels, 10) < 0.01);
}

TEST_CASE("calibration_curve greedy partition") {
  // 150 positives at min_positives=100 -> exactly 2 buckets
  std::vector<double> probs;
  std::vector<int> labels;
  Rng rng(4);
  int positives = 0;
  while (positives < 150) {
    double p = rng.uniform();
    bool pos = positives < 150 && rng.bernoulli(0.3);
    probs.push_back(p);
    labels.push_back(pos ? 1 : 0);
    if (pos) ++positives;
  }
  auto curve = calibration_curve(probs, labels, 100);
  REQUIRE(curve.buckets.size() == 2);
  CHECK_FALSE(curve.degenerate);
  CHECK(curve.buckets[0].positive_count == 100);
  CHECK(curve.buckets[1].positive_count == 50);
  int64_t total = 0;
  for (const auto& b : curve.buckets) total += b.count;
  CHECK(total == static_cast<int64_t>(probs.size()));
}

TEST_CASE("calibration_curve degenerate inputs give one flagged bucket") {
  auto ones = calibration_curve({1.0, 1.0, 1.0}, {1, 1, 1}, 100);
  REQUIRE(ones.buckets.size() == 1);
  CHECK(ones.degenerate);
  CHECK(ones.buckets[0].conf == 1.0);
  CHECK(ones.buckets[0].actual == 1.0);
}

TEST_CASE("calibration_curve buckets are ordered by prediction and bounded by it") {
  Rng rng(14);
  std::vector<double> probs;
  std::vector<int> labels;
  for (int i = 0; i < 5000; ++i) {
    double p = rng.uniform();
    probs.push_back(p);
    labels.push_back(rng.bernoulli(p) ? 1 : 0);
  }
  auto curve = calibration_curve(probs, labels, 100);
  CHECK(curve.buckets.size() >= 2);
  for (size_t i = 1; i < curve.buckets.size(); ++i)
    CHECK(curve.buckets[i].conf <= curve.buckets[i - 1].conf + 1e-12);
}

TEST_CASE("calibration_curve on calibrated data tracks actual within noise") {
  // rare-positive regime: every bucket needs >= 100/p samples, so the
  // per-bucket noise sqrt(p(1-p)/count) ~ p/10 stays under the bound
  Rng rng(2718);
  std::vector<double> probs;
  std::vector<int> labels;
  for (int i = 0; i < 100000; ++i) {
    double p = rng.uniform(0.005, 0.12);
    probs.push_back(p);
    labels.push_back(rng.bernoulli(p) ? 1 : 0);
  }
  auto curve = calibration_curve(probs, labels, 100);
  CHECK_FALSE(curve.degenerate);
  for (const auto& b : curve.buckets) CHECK(std::abs(b.conf - b.actual) < 0.05);
}

TEST_CASE("apply_matrix_scaling identity and saturation") {
  Logits2 z{0.4, -1.1};
  MatrixScaling identity;
  Probs2 direct = softmax2(z);
  Probs2 through = apply_matrix_scaling(z, identity);
  CHECK(through[0] == direct[0]);  // bit-identical
  CHECK(through[1] == direct[1]);

  MatrixScaling shifted;
  shifted.b = {10.0, -10.0};
  Probs2 sat = apply_matrix_scaling(z, shifted);
  CHECK(sat[0] > 0.999);
  CHECK(sat[1] < 0.001);

  MatrixScaling swapped;
  swapped.w = {{{0.0, 1.0}, {1.0, 0.0}}};
  Probs2 sw = apply_matrix_scaling(z, swapped);
  CHECK(sw[0] == doctest::Approx(direct[1]).epsilon(1e-15));
  CHECK(sw[1] == doctest::Approx(direct[0]).epsilon(1e-15));
}

namespace {

// samples with logits whose softmax matches the Bernoulli label rate
std::vector<Logits2> calibrated_logits(std::vector<int>& labels, int n, Rng& rng) {
  std::vector<Logits2> logits;
  for (int i = 0; i < n; ++i) {
    double p = rng.uniform(0.05, 0.95);
    double z1 = std::log(p / (1.0 - p));
    logits.push_back(Logits2{0.0, z1});
    labels.push_back(rng.bernoulli(p) ? 1 : 0);
  }
  return logits;
}

double holdout_ece(const std::vector<Logits2>& logits, const std::vector<int>& labels,
                   const MatrixScalingFit& fit, bool scaled) {
  std::vector<double> probs;
  std::vector<int> held;
  for (size_t i : fit.holdout_indices) {
    probs.push_back(scaled ? apply_matrix_scaling(logits[i], fit.scaling)[1]
                           : softmax2(logits[i])[1]);
    held.push_back(labels[i]);
  }
  return ece(probs, held, 10);
}

}  // namespace

TEST_CASE("matrix_scaling_fit stays near identity on already calibrated logits") {
  Rng rng(55);
  std::vector<int> labels;
  auto logits = calibrated_logits(labels, 8000, rng);
  auto fit = matrix_scaling_fit(logits, labels, 0.5, {}, 7);
  double before = holdout_ece(logits, labels, fit, false);
  double after = holdout_ece(logits, labels, fit, true);
  CHECK(after <= before + 0.01);
}

TEST_CASE("matrix_scaling_fit inverts a constant logit shift") {
  Rng rng(56);
  std::vector<int> labels;
  auto logits = calibrated_logits(labels, 8000, rng);
  for (auto& z : logits) {
    z[0] += -0.7;  // constant miscalibration with a known inverse
    z[1] += 1.9;
  }
  auto fit = matrix_scaling_fit(logits, labels, 0.5, {}, 7);
  double after = holdout_ece(logits, labels, fit, true);
  CHECK(after < 0.02);
  // the fitted transform undoes the shift: a shifted probe maps back to
  // (approximately) its original probability
  Logits2 original{0.0, 0.5};
  Logits2 shifted{original[0] - 0.7, original[1] + 1.9};
  Probs2 recovered = apply_matrix_scaling(shifted, fit.scaling);
  CHECK(recovered[1] == doctest::Approx(softmax2(original)[1]).epsilon(0.08));
}

TEST_CASE("matrix_scaling_fit split bookkeeping and failure modes") {
  Rng rng(57);
  std::vector<int> labels;
  auto logits = calibrated_logits(labels, 100, rng);
  auto fit = matrix_scaling_fit(logits, labels, 0.5, {}, 3);
  CHECK(fit.fit_indices.size() == 50);
  CHECK(fit.holdout_indices.size() == 50);

  std::vector<int> single(labels.size(), 0);
  CHECK_THROWS_AS(matrix_scaling_fit(logits, single, 0.5, {}, 3), FitError);
  CHECK_THROWS_AS(matrix_scaling_fit({}, {}, 0.5, {}, 3), FitError);
}
