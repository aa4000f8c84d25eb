#include "ucast/sampling.hpp"

#include <algorithm>

namespace ucast {

std::vector<double> sample_probabilities(const std::vector<int64_t>& n_change_counts, double a) {
  require(a >= 0.0, "smoothing constant a must be >= 0");
  require(!n_change_counts.empty(), "no samples to weight");
  double total = 0.0;
  for (int64_t n : n_change_counts) {
    require(n >= 0, "change counts must be >= 0");
    total += a + static_cast<double>(n);
  }
  require(total > 0.0, "all weights are zero (a = 0 and every count 0)");
  std::vector<double> probs;
  probs.reserve(n_change_counts.size());
  for (int64_t n : n_change_counts) probs.push_back((a + static_cast<double>(n)) / total);
  return probs;
}

ChangeWeightedSampler::ChangeWeightedSampler(const std::vector<int64_t>& n_change_counts,
                                             double a)
    : a_(a) {
  sample_probabilities(n_change_counts, a);  // shares the validation rules
  cumulative_.reserve(n_change_counts.size());
  double running = 0.0;
  for (int64_t n : n_change_counts) {
    running += a + static_cast<double>(n);
    cumulative_.push_back(running);
  }
  total_ = running;
}

int64_t ChangeWeightedSampler::draw(Rng& rng) const {
  double u = rng.uniform() * total_;
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  if (it == cumulative_.end()) --it;  // u == total_ can't happen, but be safe
  return static_cast<int64_t>(it - cumulative_.begin());
}

std::vector<int64_t> ChangeWeightedSampler::draw_batch(Rng& rng, int64_t batch_size) const {
  require(batch_size >= 1, "batch_size must be >= 1");
  std::vector<int64_t> indices;
  indices.reserve(static_cast<std::size_t>(batch_size));
  for (int64_t i = 0; i < batch_size; ++i) indices.push_back(draw(rng));
  return indices;
}

double ChangeWeightedSampler::probability(int64_t index) const {
  require(index >= 0 && index < size(), "sample index out of range");
  const auto i = static_cast<std::size_t>(index);
  double weight = cumulative_[i] - (i == 0 ? 0.0 : cumulative_[i - 1]);
  return weight / total_;
}

}  // namespace ucast
