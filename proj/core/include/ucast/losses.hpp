#pragma once

#include <torch/torch.h>

#include "ucast/network.hpp"

namespace ucast {

struct LossConfig {
  double lambda_mix = 1000.0;
  double eps = 1e-7;  // clamp for log arguments on the probability-space paths

  void validate() const;
};

/// Mean binary cross-entropy over probabilities clamped to [eps, 1-eps].
/// Probability-space on purpose: p_e and p_c are nonstandard logit
/// combinations, so there is no single logit to feed a fused form.
torch::Tensor bce(const torch::Tensor& p, const torch::Tensor& y, double eps = 1e-7);

/// BCE restricted to change pixels: mean over {p : y_c[p] = 1}, exactly 0
/// (contributing no gradient) when that set is empty.
torch::Tensor time_loss(const torch::Tensor& p_e, const torch::Tensor& y_e,
                        const torch::Tensor& y_c, double eps = 1e-7);

/// Single-logit change loss in the stable logit form
/// max(z,0) - z*y + log1p(exp(-|z|)), immune to overflow at any logit.
torch::Tensor forecast_loss(const torch::Tensor& logits, const torch::Tensor& y_c);

/// L = time_loss(p_e, y_e, y_c) + lambda * bce(p_c, y_c), with (p_e, p_c)
/// from timerange_probs. Components returned for the training log.
struct CombinedLoss {
  torch::Tensor total;
  torch::Tensor time;
  torch::Tensor binary;
};
CombinedLoss combined_loss(const torch::Tensor& q_e, const torch::Tensor& q_l,
                           const torch::Tensor& q_0, const torch::Tensor& y_e,
                           const torch::Tensor& y_c, const LossConfig& config = {});

}  // namespace ucast
