#include "ucast/losses.hpp"

#include "ucast/common.hpp"

namespace ucast {

void LossConfig::validate() const {
  require(lambda_mix > 0.0, "lambda_mix must be > 0");
  require(eps > 0.0 && eps < 1e-3, "eps must lie in (0, 1e-3)");
}

namespace {

torch::Tensor as_float_labels(const torch::Tensor& y, const torch::Tensor& like) {
  auto yf = y.to(like.dtype());
  require((yf * (1 - yf)).abs().max().item<double>() == 0.0, "labels must be binary (0/1)");
  return yf;
}

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  require(a.sizes() == b.sizes(), std::string(what) + ": shape mismatch");
}

}  // namespace

torch::Tensor bce(const torch::Tensor& p, const torch::Tensor& y, double eps) {
  require(eps > 0.0 && eps < 1e-3, "eps must lie in (0, 1e-3)");
  require_same_shape(p, y, "bce");
  require(p.min().item<double>() >= 0.0 && p.max().item<double>() <= 1.0,
          "bce expects probabilities in [0,1]");
  auto yf = as_float_labels(y, p);
  auto pc = p.clamp(eps, 1.0 - eps);
  return -(yf * pc.log() + (1 - yf) * (-pc).log1p()).mean();
}

torch::Tensor time_loss(const torch::Tensor& p_e, const torch::Tensor& y_e,
                        const torch::Tensor& y_c, double eps) {
  require_same_shape(p_e, y_e, "time_loss");
  require_same_shape(p_e, y_c, "time_loss");
  auto mask = y_c.to(torch::kBool);
  if (!mask.any().item<bool>()) {
    return torch::zeros({}, p_e.options());
  }
  return bce(p_e.masked_select(mask), y_e.masked_select(mask), eps);
}

torch::Tensor forecast_loss(const torch::Tensor& logits, const torch::Tensor& y_c) {
  auto z = logits;
  if (z.dim() == y_c.dim() + 1 && z.size(1) == 1) z = z.squeeze(1);
  require_same_shape(z, y_c, "forecast_loss");
  auto yf = as_float_labels(y_c, z);
  // max(z,0) - z*y + log(1 + exp(-|z|)): the usual overflow-proof BCE on a
  // single logit.
  return (z.clamp_min(0) - z * yf + (-z.abs()).exp().log1p()).mean();
}

CombinedLoss combined_loss(const torch::Tensor& q_e, const torch::Tensor& q_l,
                           const torch::Tensor& q_0, const torch::Tensor& y_e,
                           const torch::Tensor& y_c, const LossConfig& config) {
  config.validate();
  auto probs = timerange_probs(q_e, q_l, q_0);
  CombinedLoss out;
  out.time = time_loss(probs.p_e, y_e, y_c, config.eps);
  out.binary = bce(probs.p_c, y_c, config.eps);
  out.total = out.time + config.lambda_mix * out.binary;
  return out;
}

}  // namespace ucast
