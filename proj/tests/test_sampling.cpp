#include <doctest.h>

#include <chrono>
#include <cmath>
#include <vector>

#include "ucast/sampling.hpp"

using namespace ucast;

TEST_CASE("count weighting reproduces hand-computed probabilities") {
  auto p = sample_probabilities({0, 50, 150}, 50.0);
  REQUIRE(p.size() == 3);
  CHECK(p[0] == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(2.0 / 7.0).epsilon(1e-12));
  CHECK(p[2] == doctest::Approx(4.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("equal counts sample uniformly") {
  auto p = sample_probabilities({30, 30, 30, 30}, 50.0);
  for (double v : p) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("huge smoothing washes out the counts") {
  auto p = sample_probabilities({0, 1000, 5}, 1e9);
  for (double v : p) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
}

TEST_CASE("probabilities are monotone in the counts and sum to one") {
  std::vector<int64_t> counts = {0, 3, 3, 17, 400, 401};
  auto p = sample_probabilities(counts, 50.0);
  double sum = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    sum += p[i];
    if (i > 0) {
      if (counts[i] > counts[i - 1]) CHECK(p[i] > p[i - 1]);
      if (counts[i] == counts[i - 1]) CHECK(p[i] == doctest::Approx(p[i - 1]).epsilon(1e-15));
    }
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("degenerate weightings are rejected") {
  CHECK_THROWS_AS(sample_probabilities({1, 2}, -0.5), std::invalid_argument);
  CHECK_THROWS_AS(sample_probabilities({1, -2}, 50.0), std::invalid_argument);
  CHECK_THROWS_AS(sample_probabilities({0, 0, 0}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(sample_probabilities({}, 50.0), std::invalid_argument);
  CHECK_NOTHROW(sample_probabilities({0, 0, 1}, 0.0));
}

TEST_CASE("sampler draws are deterministic in the rng stream") {
  ChangeWeightedSampler sampler({0, 50, 150}, 50.0);
  Rng a(9), b(9);
  auto batch_a = sampler.draw_batch(a, 64);
  auto batch_b = sampler.draw_batch(b, 64);
  CHECK(batch_a == batch_b);
  for (auto idx : batch_a) {
    CHECK(idx >= 0);
    CHECK(idx < 3);
  }
  CHECK(sampler.size() == 3);
  CHECK(sampler.smoothing() == 50.0);
  CHECK(sampler.probability(2) == doctest::Approx(4.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("single-element sampler always returns index zero") {
  ChangeWeightedSampler sampler({123}, 50.0);
  Rng rng(4);
  for (int i = 0; i < 20; ++i) CHECK(sampler.draw(rng) == 0);
}

TEST_CASE("draw frequencies converge to the target distribution") {
  auto start = std::chrono::steady_clock::now();

  ChangeWeightedSampler sampler({0, 50, 150}, 50.0);
  Rng rng(2024);
  const int n = 100000;
  std::vector<long> hits(3, 0);
  for (auto idx : sampler.draw_batch(rng, n)) hits[static_cast<std::size_t>(idx)] += 1;

  const double expected[3] = {1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0};
  for (int i = 0; i < 3; ++i) {
    CHECK(std::abs(static_cast<double>(hits[static_cast<std::size_t>(i)]) / n - expected[i]) <
          0.01);
  }

  auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(elapsed < 5.0);
}
