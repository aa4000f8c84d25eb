#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ucast/common.hpp"

namespace ucast {

/// Foreground F1 of a fixed threshold; positive prediction = score strictly
/// greater than the threshold. With no true positives, no false positives,
/// and no false negatives the score is 1; any other empty ratio counts as 0.
double f1_at_threshold(const std::vector<float>& scores, const std::vector<uint8_t>& labels,
                       double threshold);

/// F1-maximizing threshold over the candidate set {midpoints of adjacent
/// sorted unique scores} plus the endpoints {0, 1}. Ties break toward the
/// larger threshold. Returns nullopt when labels hold no positive (every
/// threshold is equally undefined). Scores must lie in [0, 1].
std::optional<double> batch_optimal_threshold(const std::vector<float>& scores,
                                              const std::vector<uint8_t>& labels);

/// Binary decision map at a threshold, with the same strict-inequality
/// convention as the sweep.
std::vector<uint8_t> apply_threshold(const std::vector<float>& scores, double threshold);

/// Moving average of per-batch optimal thresholds over the most recent
/// `window` updates. Before the first update current() reports the configured
/// default. Batches without positive labels are skipped, not pushed. Batches
/// larger than `subsample_limit` pixels are thinned per label class (with the
/// tracker's own deterministic stream) before the sweep to bound its cost.
class MovingThresholdTracker {
 public:
  explicit MovingThresholdTracker(double default_threshold, int64_t window = 500,
                                  uint64_t subsample_seed = 0, int64_t subsample_limit = 200000);

  void update(const std::vector<float>& scores, const std::vector<uint8_t>& labels);
  void push(double batch_threshold);  // rejects values outside [0, 1]
  double current() const;
  void reset();

  int64_t window() const { return window_; }
  int64_t count() const { return count_; }
  double default_threshold() const { return default_threshold_; }

  // Checkpoint round-trip: retained entries oldest-first.
  std::vector<double> history() const;
  void restore(const std::vector<double>& history);

 private:
  double default_threshold_;
  int64_t window_;
  int64_t subsample_limit_;
  Rng subsample_rng_;
  std::vector<double> buffer_;
  int64_t next_ = 0;   // ring position of the next write
  int64_t count_ = 0;  // pushes ever accepted
};

}  // namespace ucast
