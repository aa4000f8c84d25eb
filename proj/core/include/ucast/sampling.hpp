#pragma once

#include <cstdint>
#include <vector>

#include "ucast/common.hpp"

namespace ucast {

/// Count-weighted sampling probabilities
///   p_i = (a + n_i) / sum_k (a + n_k)
/// where n_i is the changed-pixel count of sample i and the smoothing constant
/// a keeps all-background samples reachable. Rejects a < 0, negative counts,
/// and an all-zero denominator (a = 0 with every count 0).
std::vector<double> sample_probabilities(const std::vector<int64_t>& n_change_counts, double a);

/// Draws i.i.d. with replacement from the probabilities above via inverse-CDF
/// binary search. Deterministic given the caller's Rng stream.
class ChangeWeightedSampler {
 public:
  explicit ChangeWeightedSampler(const std::vector<int64_t>& n_change_counts, double a = 50.0);

  int64_t draw(Rng& rng) const;
  std::vector<int64_t> draw_batch(Rng& rng, int64_t batch_size) const;

  double probability(int64_t index) const;
  int64_t size() const { return static_cast<int64_t>(cumulative_.size()); }
  double smoothing() const { return a_; }

 private:
  std::vector<double> cumulative_;  // inclusive prefix sums of a + n_i
  double total_ = 0.0;
  double a_ = 50.0;
};

}  // namespace ucast
