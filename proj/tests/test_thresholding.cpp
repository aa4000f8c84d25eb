#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "ucast/thresholding.hpp"

using namespace ucast;

namespace {

double f1_ref(const std::vector<float>& scores, const std::vector<uint8_t>& labels,
              double threshold) {
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    bool pred = scores[i] > threshold;
    if (pred && labels[i]) tp++;
    if (pred && !labels[i]) fp++;
    if (!pred && labels[i]) fn++;
  }
  if (tp == 0 && fp == 0 && fn == 0) return 1.0;
  double precision = (tp + fp) == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
  double recall = (tp + fn) == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn);
  return (precision + recall) == 0 ? 0.0 : 2 * precision * recall / (precision + recall);
}

}  // namespace

TEST_CASE("f1 honours the strict-inequality and empty-ratio conventions") {
  std::vector<float> scores = {0.1f, 0.4f, 0.8f};
  std::vector<uint8_t> labels = {0, 0, 1};
  CHECK(f1_at_threshold(scores, labels, 0.6) == 1.0);
  CHECK(f1_at_threshold(scores, labels, 0.8) == 0.0);   // strict: 0.8 > 0.8 is false
  CHECK(f1_at_threshold(scores, labels, 0.05) == doctest::Approx(0.5));
  CHECK(f1_at_threshold({0.3f}, {0}, 0.5) == 1.0);      // nothing predicted, nothing to find
  CHECK(f1_at_threshold({0.9f}, {0}, 0.5) == 0.0);
}

TEST_CASE("sweep recovers the separating threshold") {
  auto best = batch_optimal_threshold({0.1f, 0.4f, 0.8f}, {0, 0, 1});
  REQUIRE(best.has_value());
  CHECK(*best == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(f1_at_threshold({0.1f, 0.4f, 0.8f}, {0, 0, 1}, *best) == 1.0);
}

TEST_CASE("sweep declines batches without positives") {
  CHECK(!batch_optimal_threshold({0.2f, 0.9f}, {0, 0}).has_value());
}

TEST_CASE("sweep on all-positive labels picks the lowest threshold") {
  auto best = batch_optimal_threshold({0.2f, 0.7f}, {1, 1});
  REQUIRE(best.has_value());
  CHECK(*best == 0.0);
  CHECK(f1_at_threshold({0.2f, 0.7f}, {1, 1}, *best) == 1.0);
}

TEST_CASE("sweep validates score range") {
  CHECK_THROWS_AS(batch_optimal_threshold({1.2f}, {1}), std::invalid_argument);
  CHECK_THROWS_AS(batch_optimal_threshold({-0.1f}, {1}), std::invalid_argument);
  CHECK_THROWS_AS(batch_optimal_threshold({0.5f}, {1, 0}), std::invalid_argument);
}

TEST_CASE("sweep is never beaten by a dense grid") {
  Rng rng(314);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 5 + static_cast<int>(rng.uniform_int(0, 60));
    std::vector<float> scores;
    std::vector<uint8_t> labels;
    bool any_pos = false;
    for (int i = 0; i < n; ++i) {
      // Quantized scores force plenty of exact ties between samples.
      scores.push_back(static_cast<float>(rng.uniform_int(0, 20)) / 20.0f);
      labels.push_back(static_cast<uint8_t>(rng.uniform() < 0.4 ? 1 : 0));
      any_pos |= labels.back() == 1;
    }
    if (!any_pos) labels[0] = 1;

    auto best = batch_optimal_threshold(scores, labels);
    REQUIRE(best.has_value());
    double best_f1 = f1_at_threshold(scores, labels, *best);
    CHECK(best_f1 == doctest::Approx(f1_ref(scores, labels, *best)).epsilon(1e-12));
    for (int g = 0; g <= 10000; ++g) {
      double t = g / 10000.0;
      REQUIRE(f1_ref(scores, labels, t) <= best_f1 + 1e-12);
    }
  }
}

TEST_CASE("threshold application matches the sweep's convention") {
  auto preds = apply_threshold({0.2f, 0.5f, 0.9f}, 0.5);
  CHECK(preds == std::vector<uint8_t>{0, 0, 1});  // score == threshold stays negative
  CHECK(apply_threshold({0.3f}, 0.0) == std::vector<uint8_t>{1});
  CHECK(apply_threshold({0.0f}, 0.0) == std::vector<uint8_t>{0});
}

TEST_CASE("tracker reports the default until its first update") {
  MovingThresholdTracker tracker(0.5, 500);
  CHECK(tracker.current() == 0.5);
  CHECK(tracker.count() == 0);
  tracker.push(0.3);
  CHECK(tracker.current() == doctest::Approx(0.3).epsilon(1e-12));
  tracker.push(0.7);   // mean of {0.3, 0.7}
  CHECK(tracker.current() == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("tracker pair example") {
  MovingThresholdTracker tracker(0.5, 500);
  tracker.push(0.2);
  tracker.push(0.4);
  CHECK(tracker.current() == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("tracker window keeps only the last 500 entries") {
  MovingThresholdTracker tracker(0.5, 500);
  // 600 pushes of i/1000: the window mean covers i = 100..599.
  for (int i = 0; i < 600; ++i) tracker.push(i / 1000.0);
  double expected = 0;
  for (int i = 100; i < 600; ++i) expected += i / 1000.0;
  expected /= 500.0;
  CHECK(tracker.current() == doctest::Approx(expected).epsilon(1e-12));
  CHECK(tracker.count() == 600);
  CHECK(tracker.history().size() == 500);
  CHECK(tracker.history().front() == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(tracker.history().back() == doctest::Approx(0.599).epsilon(1e-12));
}

TEST_CASE("tracker skips batches without positives") {
  MovingThresholdTracker tracker(0.5, 500);
  tracker.update({0.9f, 0.8f}, {0, 0});
  CHECK(tracker.count() == 0);
  CHECK(tracker.current() == 0.5);

  tracker.update({0.1f, 0.4f, 0.8f}, {0, 0, 1});
  CHECK(tracker.count() == 1);
  CHECK(tracker.current() == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("tracker rejects out-of-range pushes") {
  MovingThresholdTracker tracker(0.5, 500);
  CHECK_THROWS_AS(tracker.push(-0.1), std::invalid_argument);
  CHECK_THROWS_AS(tracker.push(1.1), std::invalid_argument);
  CHECK_THROWS_AS(MovingThresholdTracker(1.5, 500), std::invalid_argument);
  CHECK_THROWS_AS(MovingThresholdTracker(0.5, 0), std::invalid_argument);
}

TEST_CASE("tracker reset returns to the default") {
  MovingThresholdTracker tracker(0.4, 500);
  tracker.push(0.9);
  tracker.reset();
  CHECK(tracker.current() == 0.4);
  CHECK(tracker.count() == 0);
  CHECK(tracker.history().empty());
}

TEST_CASE("tracker history round-trips through restore") {
  MovingThresholdTracker tracker(0.5, 4);
  for (double v : {0.1, 0.2, 0.3, 0.4, 0.5, 0.6}) tracker.push(v);
  auto hist = tracker.history();
  CHECK(hist == std::vector<double>{0.3, 0.4, 0.5, 0.6});

  MovingThresholdTracker other(0.5, 4);
  other.restore(hist);
  CHECK(other.current() == doctest::Approx(tracker.current()).epsilon(1e-12));
  CHECK(other.history() == hist);

  // Subsequent pushes evict oldest-first in both.
  tracker.push(0.9);
  other.push(0.9);
  CHECK(other.history() == tracker.history());

  CHECK_THROWS_AS(other.restore({0.1, 0.2, 0.3, 0.4, 0.5}), std::invalid_argument);
}

TEST_CASE("tracker subsampling is deterministic and stays close to the full sweep") {
  // 60k scores with a clean separation at 0.55; thinning to 10k must not move
  // the recovered threshold materially, and identical seeds must agree exactly.
  Rng gen(2718);
  std::vector<float> scores;
  std::vector<uint8_t> labels;
  for (int i = 0; i < 60000; ++i) {
    bool pos = gen.uniform() < 0.2;
    double s = pos ? 0.6 + 0.4 * gen.uniform() : 0.5 * gen.uniform();
    scores.push_back(static_cast<float>(s));
    labels.push_back(static_cast<uint8_t>(pos));
  }

  MovingThresholdTracker a(0.5, 10, 7, 10000);
  MovingThresholdTracker b(0.5, 10, 7, 10000);
  a.update(scores, labels);
  b.update(scores, labels);
  CHECK(a.count() == 1);
  CHECK(a.current() == b.current());

  MovingThresholdTracker full(0.5, 10, 0, 200000);
  full.update(scores, labels);
  CHECK(std::abs(a.current() - full.current()) < 0.05);
  CHECK(full.current() == doctest::Approx(0.55).epsilon(0.02));
}
