#pragma once

#include <string>

#include <torch/torch.h>

namespace ucast {

/// Encoder-decoder feature extractor mapping Nx{input_channels}xHxW images to
/// Nx{feature_dim}xHxW maps at the input resolution. H and W must be
/// multiples of the downsampling factor: 8 for "tiny" (3 stages, widths
/// 8/16/32), 32 for "full" (50-layer residual encoder).
struct BackboneConfig {
  std::string encoder_scale = "tiny";  // "tiny" or "full"
  int feature_dim = 16;
  int input_channels = 3;

  void validate() const;
  int downsample_factor() const;
};

class BackboneImpl : public torch::nn::Module {
 public:
  explicit BackboneImpl(const BackboneConfig& config);
  torch::Tensor forward(const torch::Tensor& x);

  const BackboneConfig& config() const { return config_; }

 private:
  BackboneConfig config_;
  torch::nn::Sequential stem_{nullptr};
  torch::nn::ModuleList down_stages_;
  torch::nn::ModuleList up_stages_;
  torch::nn::Conv2d proj_{nullptr};
};
TORCH_MODULE(Backbone);

/// Per-pixel prediction head: `hidden_layers` 3x3 conv+ReLU blocks of width
/// `hidden_depth`, then a 1x1 projection to `out_logits` channels. The
/// projection starts at zero so an untrained head emits exactly zero logits.
struct HeadConfig {
  int hidden_layers = 2;
  int hidden_depth = 16;
  int out_logits = 1;  // 1 = detect/forecast, 3 = time-range

  void validate() const;
};

class PredictionHeadImpl : public torch::nn::Module {
 public:
  PredictionHeadImpl(int in_channels, const HeadConfig& config);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential layers_{nullptr};
};
TORCH_MODULE(PredictionHead);

/// Siamese change detector: one backbone instance serves both timepoints, so
/// branch weights are shared by construction. Features are concatenated in
/// fixed (t0, t1) order; the head emits one change logit per pixel.
class ChangeDetectorImpl : public torch::nn::Module {
 public:
  explicit ChangeDetectorImpl(const BackboneConfig& config);
  torch::Tensor forward(const torch::Tensor& x0, const torch::Tensor& x1);

  Backbone backbone{nullptr};
  PredictionHead head{nullptr};
};
TORCH_MODULE(ChangeDetector);

/// Single-image predictor: 1 output logit for fixed-horizon forecasting, 3
/// (q_early, q_late, q_none in channel order) for time-range forecasting.
class ForecastNetImpl : public torch::nn::Module {
 public:
  ForecastNetImpl(const BackboneConfig& config, int out_logits);
  torch::Tensor forward(const torch::Tensor& x);

  int out_logits() const { return out_logits_; }

  Backbone backbone{nullptr};
  PredictionHead head{nullptr};

 private:
  int out_logits_ = 1;
};
TORCH_MODULE(ForecastNet);

/// Probability maps of the three-logit head:
///   p_e = exp(q_e) / (exp(q_e) + exp(q_l))            P(early | change)
///   p_c = exp(q_e + q_l) / (exp(q_e + q_l) + exp(q_0))  P(change)
/// p_c exponentiates the SUM of the early and late logits, not the sum of
/// their exponentials. Evaluated as sigmoids of logit differences, which is
/// exact and stable for any finite input.
struct TimeRangeProbs {
  torch::Tensor p_e;
  torch::Tensor p_c;
};
TimeRangeProbs timerange_probs(const torch::Tensor& q_e, const torch::Tensor& q_l,
                               const torch::Tensor& q_0);

/// Copies parameters and buffers from src into dst. Shapes must match.
void transfer_backbone(Backbone dst, Backbone src);

/// Frozen = no gradients and eval-mode normalization statistics, so training
/// steps leave every backbone parameter and buffer bit-identical.
void set_backbone_frozen(ForecastNet net, bool frozen);

}  // namespace ucast
