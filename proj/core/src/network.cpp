#include "ucast/network.hpp"

#include "ucast/common.hpp"

namespace ucast {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

void BackboneConfig::validate() const {
  require(encoder_scale == "tiny" || encoder_scale == "full",
          "encoder_scale must be 'tiny' or 'full', got '" + encoder_scale + "'");
  require(feature_dim >= 1, "feature_dim must be >= 1");
  require(input_channels >= 1, "input_channels must be >= 1");
}

int BackboneConfig::downsample_factor() const { return encoder_scale == "tiny" ? 8 : 32; }

namespace {

nn::Sequential conv_block(int in, int out, int stride = 1) {
  return nn::Sequential(
      nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(false)),
      nn::BatchNorm2d(out), nn::ReLU(nn::ReLUOptions().inplace(true)));
}

// Sequential cannot nest inside Sequential (its type-erased forward must be
// concrete), so multi-block stages are built flat.
nn::Sequential double_conv(int in, int out, int stride) {
  return nn::Sequential(
      nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(false)),
      nn::BatchNorm2d(out), nn::ReLU(nn::ReLUOptions().inplace(true)),
      nn::Conv2d(nn::Conv2dOptions(out, out, 3).padding(1).bias(false)), nn::BatchNorm2d(out),
      nn::ReLU(nn::ReLUOptions().inplace(true)));
}

/// 1x1 -> 3x3(stride) -> 1x1(x4) residual block of the 50-layer encoder.
class BottleneckImpl : public nn::Module {
 public:
  BottleneckImpl(int in, int mid, int stride) {
    const int out = mid * 4;
    conv1_ = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in, mid, 1).bias(false)));
    bn1_ = register_module("bn1", nn::BatchNorm2d(mid));
    conv2_ = register_module(
        "conv2", nn::Conv2d(nn::Conv2dOptions(mid, mid, 3).stride(stride).padding(1).bias(false)));
    bn2_ = register_module("bn2", nn::BatchNorm2d(mid));
    conv3_ = register_module("conv3", nn::Conv2d(nn::Conv2dOptions(mid, out, 1).bias(false)));
    bn3_ = register_module("bn3", nn::BatchNorm2d(out));
    if (stride != 1 || in != out) {
      shortcut_ = register_module(
          "shortcut",
          nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in, out, 1).stride(stride).bias(false)),
                         nn::BatchNorm2d(out)));
    }
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto y = torch::relu(bn1_(conv1_(x)));
    y = torch::relu(bn2_(conv2_(y)));
    y = bn3_(conv3_(y));
    auto skip = shortcut_ ? shortcut_->forward(x) : x;
    return torch::relu(y + skip);
  }

 private:
  nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, conv3_{nullptr};
  nn::BatchNorm2d bn1_{nullptr}, bn2_{nullptr}, bn3_{nullptr};
  nn::Sequential shortcut_{nullptr};
};
TORCH_MODULE(Bottleneck);

void append_bottlenecks(nn::Sequential& stage, int in, int mid, int blocks, int stride) {
  stage->push_back(Bottleneck(in, mid, stride));
  for (int i = 1; i < blocks; ++i) stage->push_back(Bottleneck(mid * 4, mid, 1));
}

void he_init(nn::Module& module) {
  for (auto& m : module.modules(/*include_self=*/false)) {
    if (auto* conv = m->as<nn::Conv2d>()) {
      torch::nn::init::kaiming_normal_(conv->weight, 0.0, torch::kFanIn, torch::kReLU);
      if (conv->bias.defined()) torch::nn::init::zeros_(conv->bias);
    } else if (auto* bn = m->as<nn::BatchNorm2d>()) {
      torch::nn::init::ones_(bn->weight);
      torch::nn::init::zeros_(bn->bias);
    }
  }
}

}  // namespace

BackboneImpl::BackboneImpl(const BackboneConfig& config) : config_(config) {
  config.validate();
  const int in = config.input_channels;

  if (config.encoder_scale == "tiny") {
    stem_ = register_module("stem", conv_block(in, 8));
    down_stages_ = register_module(
        "down", nn::ModuleList(double_conv(8, 8, 2), double_conv(8, 16, 2),
                               double_conv(16, 32, 2)));
    // Each up stage halves the scale gap and consumes [upsampled, skip].
    up_stages_ = register_module(
        "up", nn::ModuleList(conv_block(32 + 16, 16), conv_block(16 + 8, 8),
                             conv_block(8 + 8, 8)));
    proj_ = register_module("proj", nn::Conv2d(nn::Conv2dOptions(8, config.feature_dim, 1)));
  } else {
    // 50-layer residual encoder: 7x7/2 stem, pooled 1/4 trunk, stages
    // [3,4,6,3] at widths 64/128/256/512 (x4 out).
    stem_ = register_module(
        "stem",
        nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in, 64, 7).stride(2).padding(3).bias(false)),
                       nn::BatchNorm2d(64), nn::ReLU(nn::ReLUOptions().inplace(true))));
    nn::Sequential trunk(nn::MaxPool2d(nn::MaxPool2dOptions(3).stride(2).padding(1)));
    append_bottlenecks(trunk, 64, 64, 3, 1);
    nn::Sequential stage2, stage3, stage4;
    append_bottlenecks(stage2, 256, 128, 4, 2);
    append_bottlenecks(stage3, 512, 256, 6, 2);
    append_bottlenecks(stage4, 1024, 512, 3, 2);
    down_stages_ = register_module("down", nn::ModuleList(trunk, stage2, stage3, stage4));
    up_stages_ = register_module(
        "up", nn::ModuleList(conv_block(2048 + 1024, 256), conv_block(256 + 512, 128),
                             conv_block(128 + 256, 64), conv_block(64 + 64, 32),
                             conv_block(32, 16)));
    proj_ = register_module("proj", nn::Conv2d(nn::Conv2dOptions(16, config.feature_dim, 1)));
  }
  he_init(*this);
}

torch::Tensor BackboneImpl::forward(const torch::Tensor& x) {
  require(x.dim() == 4 && x.size(1) == config_.input_channels,
          "backbone expects NxCxHxW input with C = " + std::to_string(config_.input_channels));
  const int factor = config_.downsample_factor();
  require(x.size(2) % factor == 0 && x.size(3) % factor == 0,
          "input H and W must be multiples of " + std::to_string(factor) + ", got " +
              std::to_string(x.size(2)) + "x" + std::to_string(x.size(3)));

  auto y = stem_->forward(x);
  std::vector<torch::Tensor> skips{y};  // finest first; the bottom stage keeps none
  for (std::size_t i = 0; i < down_stages_->size(); ++i) {
    y = down_stages_[i]->as<nn::Sequential>()->forward(y);
    if (i + 1 < down_stages_->size()) skips.push_back(y);
  }

  for (std::size_t i = 0; i < up_stages_->size(); ++i) {
    y = F::interpolate(y, F::InterpolateFuncOptions()
                              .scale_factor(std::vector<double>{2.0, 2.0})
                              .mode(torch::kNearest));
    if (!skips.empty()) {
      y = torch::cat({y, skips.back()}, 1);
      skips.pop_back();
    }
    y = up_stages_[i]->as<nn::Sequential>()->forward(y);
  }
  return proj_->forward(y);
}

void HeadConfig::validate() const {
  require(hidden_layers >= 1, "head needs at least one hidden layer");
  require(hidden_depth >= 1, "head hidden depth must be >= 1");
  require(out_logits == 1 || out_logits == 3, "head emits 1 or 3 logits");
}

PredictionHeadImpl::PredictionHeadImpl(int in_channels, const HeadConfig& config) {
  config.validate();
  require(in_channels >= 1, "head input channels must be >= 1");
  nn::Sequential layers;
  int in = in_channels;
  for (int i = 0; i < config.hidden_layers; ++i) {
    layers->push_back(nn::Conv2d(nn::Conv2dOptions(in, config.hidden_depth, 3).padding(1)));
    layers->push_back(nn::ReLU(nn::ReLUOptions().inplace(true)));
    in = config.hidden_depth;
  }
  auto out = nn::Conv2d(nn::Conv2dOptions(in, config.out_logits, 1));
  layers->push_back(out);
  layers_ = register_module("layers", layers);
  he_init(*this);
  // Zero final projection: an untrained head emits exactly zero logits, so
  // every starting probability is 0.5 regardless of the backbone.
  torch::NoGradGuard no_grad;
  out->weight.zero_();
  out->bias.zero_();
}

torch::Tensor PredictionHeadImpl::forward(const torch::Tensor& x) { return layers_->forward(x); }

ChangeDetectorImpl::ChangeDetectorImpl(const BackboneConfig& config) {
  backbone = register_module("backbone", Backbone(config));
  HeadConfig head_config;
  head_config.out_logits = 1;
  head = register_module("head", PredictionHead(2 * config.feature_dim, head_config));
}

torch::Tensor ChangeDetectorImpl::forward(const torch::Tensor& x0, const torch::Tensor& x1) {
  require(x0.sizes() == x1.sizes(), "detection pair shapes differ");
  auto f0 = backbone->forward(x0);
  auto f1 = backbone->forward(x1);
  return head->forward(torch::cat({f0, f1}, 1));
}

ForecastNetImpl::ForecastNetImpl(const BackboneConfig& config, int out_logits)
    : out_logits_(out_logits) {
  backbone = register_module("backbone", Backbone(config));
  HeadConfig head_config;
  head_config.out_logits = out_logits;
  head = register_module("head", PredictionHead(config.feature_dim, head_config));
}

torch::Tensor ForecastNetImpl::forward(const torch::Tensor& x) {
  return head->forward(backbone->forward(x));
}

TimeRangeProbs timerange_probs(const torch::Tensor& q_e, const torch::Tensor& q_l,
                               const torch::Tensor& q_0) {
  require(q_e.sizes() == q_l.sizes() && q_e.sizes() == q_0.sizes(),
          "logit map shapes differ");
  TimeRangeProbs probs;
  // p_e = exp(q_e)/(exp(q_e)+exp(q_l)) = sigmoid(q_e - q_l); likewise p_c is
  // the sigmoid of (q_e + q_l) - q_0. Sigmoid of a difference never
  // overflows, unlike the raw exponentials.
  probs.p_e = torch::sigmoid(q_e - q_l);
  probs.p_c = torch::sigmoid(q_e + q_l - q_0);
  return probs;
}

void transfer_backbone(Backbone dst, Backbone src) {
  torch::NoGradGuard no_grad;
  auto dst_params = dst->named_parameters();
  auto src_params = src->named_parameters();
  require(dst_params.size() == src_params.size(), "backbone parameter sets differ");
  for (const auto& item : src_params) {
    auto* target = dst_params.find(item.key());
    require(target != nullptr, "missing backbone parameter: " + item.key());
    require(target->sizes() == item.value().sizes(),
            "backbone parameter shape mismatch: " + item.key());
    target->copy_(item.value());
  }
  auto dst_buffers = dst->named_buffers();
  auto src_buffers = src->named_buffers();
  require(dst_buffers.size() == src_buffers.size(), "backbone buffer sets differ");
  for (const auto& item : src_buffers) {
    auto* target = dst_buffers.find(item.key());
    require(target != nullptr, "missing backbone buffer: " + item.key());
    target->copy_(item.value());
  }
}

void set_backbone_frozen(ForecastNet net, bool frozen) {
  for (auto& p : net->backbone->parameters()) p.requires_grad_(!frozen);
  // eval() pins the normalization statistics, completing the freeze.
  net->backbone->train(!frozen);
}

}  // namespace ucast
