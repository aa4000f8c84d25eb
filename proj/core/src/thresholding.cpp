#include "ucast/thresholding.hpp"

#include <algorithm>
#include <numeric>

namespace ucast {

double f1_at_threshold(const std::vector<float>& scores, const std::vector<uint8_t>& labels,
                       double threshold) {
  require(scores.size() == labels.size(), "scores/labels length mismatch");
  int64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    bool pred = scores[i] > threshold;
    bool pos = labels[i] != 0;
    tp += pred && pos;
    fp += pred && !pos;
    fn += !pred && pos;
  }
  if (tp == 0 && fp == 0 && fn == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

std::optional<double> batch_optimal_threshold(const std::vector<float>& scores,
                                              const std::vector<uint8_t>& labels) {
  require(scores.size() == labels.size(), "scores/labels length mismatch");
  require(!scores.empty(), "empty score set");

  int64_t total_pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    require(scores[i] >= 0.0f && scores[i] <= 1.0f, "scores must lie in [0,1]");
    total_pos += labels[i] != 0;
  }
  if (total_pos == 0) return std::nullopt;

  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  // Walking the ascending order, pos_above[i] = positives with rank >= i.
  std::vector<int64_t> pos_above(n + 1, 0);
  for (std::size_t i = n; i > 0; --i) {
    pos_above[i - 1] = pos_above[i] + (labels[order[i - 1]] != 0);
  }

  // Predictions only change at boundaries between distinct score values, so
  // each candidate threshold maps to a cut index: everything at rank >= cut
  // is predicted positive. F1 = 2 tp / (predicted + total_pos).
  auto f1_at_cut = [&](std::size_t cut) {
    int64_t tp = pos_above[cut];
    int64_t predicted = static_cast<int64_t>(n - cut);
    return 2.0 * static_cast<double>(tp) / static_cast<double>(predicted + total_pos);
  };

  double best_f1 = -1.0;
  double best_threshold = 0.0;
  auto consider = [&](double threshold, std::size_t cut) {
    double f1 = f1_at_cut(cut);
    if (f1 > best_f1 || (f1 == best_f1 && threshold > best_threshold)) {
      best_f1 = f1;
      best_threshold = threshold;
    }
  };

  // Endpoint 0: everything with score > 0 is positive.
  {
    std::size_t cut = 0;
    while (cut < n && scores[order[cut]] <= 0.0f) ++cut;
    consider(0.0, cut);
  }
  // Midpoints between adjacent distinct values.
  for (std::size_t i = 1; i < n; ++i) {
    float lo = scores[order[i - 1]];
    float hi = scores[order[i]];
    if (lo == hi) continue;
    consider((static_cast<double>(lo) + static_cast<double>(hi)) / 2.0, i);
  }
  // Endpoint 1: nothing is predicted positive.
  consider(1.0, n);

  return best_threshold;
}

std::vector<uint8_t> apply_threshold(const std::vector<float>& scores, double threshold) {
  std::vector<uint8_t> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] > threshold ? 1 : 0;
  return out;
}

MovingThresholdTracker::MovingThresholdTracker(double default_threshold, int64_t window,
                                               uint64_t subsample_seed, int64_t subsample_limit)
    : default_threshold_(default_threshold),
      window_(window),
      subsample_limit_(subsample_limit),
      subsample_rng_(subsample_seed) {
  require(window >= 1, "window must be >= 1");
  require(default_threshold >= 0.0 && default_threshold <= 1.0,
          "default threshold must lie in [0,1]");
  require(subsample_limit >= 2, "subsample limit too small");
  buffer_.reserve(static_cast<std::size_t>(window));
}

void MovingThresholdTracker::update(const std::vector<float>& scores,
                                    const std::vector<uint8_t>& labels) {
  require(scores.size() == labels.size(), "scores/labels length mismatch");
  const int64_t n = static_cast<int64_t>(scores.size());

  std::optional<double> best;
  if (n <= subsample_limit_) {
    best = batch_optimal_threshold(scores, labels);
  } else {
    // Thin each label class by the same factor so the sweep sees the batch's
    // class balance at bounded cost.
    std::vector<std::size_t> pos_idx, neg_idx;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      (labels[i] != 0 ? pos_idx : neg_idx).push_back(i);
    }
    auto take = [&](std::vector<std::size_t>& idx, int64_t keep) {
      for (int64_t i = 0; i < keep; ++i) {
        auto j = static_cast<std::size_t>(
            subsample_rng_.uniform_int(i, static_cast<int64_t>(idx.size()) - 1));
        std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
      }
      idx.resize(static_cast<std::size_t>(keep));
    };
    auto quota = [&](std::size_t count) {
      if (count == 0) return int64_t{0};
      auto share = static_cast<int64_t>(static_cast<double>(count) * subsample_limit_ / n);
      return std::clamp<int64_t>(share, 1, static_cast<int64_t>(count));
    };
    take(pos_idx, quota(pos_idx.size()));
    take(neg_idx, quota(neg_idx.size()));

    std::vector<float> sub_scores;
    std::vector<uint8_t> sub_labels;
    sub_scores.reserve(pos_idx.size() + neg_idx.size());
    sub_labels.reserve(pos_idx.size() + neg_idx.size());
    for (auto i : pos_idx) {
      sub_scores.push_back(scores[i]);
      sub_labels.push_back(1);
    }
    for (auto i : neg_idx) {
      sub_scores.push_back(scores[i]);
      sub_labels.push_back(0);
    }
    best = batch_optimal_threshold(sub_scores, sub_labels);
  }

  if (best) push(*best);
}

void MovingThresholdTracker::push(double batch_threshold) {
  require(batch_threshold >= 0.0 && batch_threshold <= 1.0, "threshold must lie in [0,1]");
  if (static_cast<int64_t>(buffer_.size()) < window_) {
    buffer_.push_back(batch_threshold);
  } else {
    buffer_[static_cast<std::size_t>(next_)] = batch_threshold;
  }
  next_ = (next_ + 1) % window_;
  ++count_;
}

double MovingThresholdTracker::current() const {
  if (buffer_.empty()) return default_threshold_;
  double sum = 0.0;
  for (double v : buffer_) sum += v;
  return sum / static_cast<double>(buffer_.size());
}

void MovingThresholdTracker::reset() {
  buffer_.clear();
  next_ = 0;
  count_ = 0;
}

std::vector<double> MovingThresholdTracker::history() const {
  std::vector<double> out;
  out.reserve(buffer_.size());
  if (static_cast<int64_t>(buffer_.size()) < window_) {
    out = buffer_;
  } else {
    for (int64_t i = 0; i < window_; ++i) {
      out.push_back(buffer_[static_cast<std::size_t>((next_ + i) % window_)]);
    }
  }
  return out;
}

void MovingThresholdTracker::restore(const std::vector<double>& history) {
  require(static_cast<int64_t>(history.size()) <= window_, "tracker history exceeds window");
  for (double v : history) {
    require(v >= 0.0 && v <= 1.0, "tracker history value out of [0,1]");
  }
  buffer_ = history;
  next_ = static_cast<int64_t>(history.size()) % window_;
  count_ = static_cast<int64_t>(history.size());
}

}  // namespace ucast
