#include "ucast/augment.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace ucast {

namespace F = torch::nn::functional;

AugmentConfig AugmentConfig::off() {
  AugmentConfig c;
  c.crop = false;
  c.affine = false;
  c.mirror = false;
  c.jitter = false;
  return c;
}

void AugmentConfig::validate() const {
  require(crop_pad_px >= 0, "augment: crop_pad_px must be >= 0");
  require(max_rotate_degrees >= 0.0, "augment: max_rotate_degrees must be >= 0");
  require(max_translate_fraction >= 0.0 && max_translate_fraction <= 0.5,
          "augment: max_translate_fraction must lie in [0, 0.5]");
  require(scale_min > 0.0 && scale_min <= scale_max,
          "augment: need 0 < scale_min <= scale_max");
  require(brightness >= 0.0 && brightness <= 1.0, "augment: brightness must lie in [0, 1]");
  require(contrast >= 0.0 && contrast < 1.0, "augment: contrast must lie in [0, 1)");
  require(saturation >= 0.0 && saturation < 1.0, "augment: saturation must lie in [0, 1)");
}

namespace {

// One sample's parameter draw; stages that are toggled off keep the identity
// values, so the same struct drives every combination.
struct Draw {
  double angle = 0.0;
  double inv_scale = 1.0;
  double tx = 0.0;
  double ty = 0.0;
  int crop_y = 0;
  int crop_x = 0;
  bool flip_h = false;
  bool flip_v = false;
  double bri[2] = {0.0, 0.0};
  double con[2] = {1.0, 1.0};
  double sat[2] = {1.0, 1.0};
};

torch::Tensor warp(const torch::Tensor& x, const torch::Tensor& grid, bool nearest) {
  auto opts = F::GridSampleFuncOptions().padding_mode(torch::kReflection).align_corners(false);
  if (nearest) {
    opts = opts.mode(torch::kNearest);
  } else {
    opts = opts.mode(torch::kBilinear);
  }
  return F::grid_sample(x, grid, opts);
}

}  // namespace

SampleBatch augment_batch(const SampleBatch& batch, const AugmentConfig& config, Rng& rng) {
  config.validate();
  require(batch.images_t0.defined() && batch.images_t0.dim() == 4 && batch.images_t0.size(1) == 3,
          "augment: images_t0 must be Nx3xHxW float");
  require(batch.change_masks.defined() && batch.change_masks.dim() == 3,
          "augment: change_masks must be NxHxW");
  if (!config.any()) return batch;

  const std::int64_t n = batch.images_t0.size(0);
  const std::int64_t h = batch.images_t0.size(2);
  const std::int64_t w = batch.images_t0.size(3);
  const bool has_t1 = batch.images_t1.defined();
  const bool has_fcm = batch.first_change_maps.defined();

  // Every sample consumes its draws in a fixed order, so one Rng stream
  // reproduces the whole batch.
  std::vector<Draw> draws(static_cast<std::size_t>(n));
  for (auto& d : draws) {
    if (config.affine) {
      d.angle = rng.uniform_range(-config.max_rotate_degrees, config.max_rotate_degrees) *
                std::numbers::pi / 180.0;
      d.inv_scale = 1.0 / rng.uniform_range(config.scale_min, config.scale_max);
      // Normalized sampling coordinates span [-1, 1], twice the patch side.
      d.tx = rng.uniform_range(-2.0 * config.max_translate_fraction,
                               2.0 * config.max_translate_fraction);
      d.ty = rng.uniform_range(-2.0 * config.max_translate_fraction,
                               2.0 * config.max_translate_fraction);
    }
    if (config.crop && config.crop_pad_px > 0) {
      d.crop_y = static_cast<int>(rng.uniform_int(0, 2 * config.crop_pad_px));
      d.crop_x = static_cast<int>(rng.uniform_int(0, 2 * config.crop_pad_px));
    }
    if (config.mirror) {
      d.flip_h = rng.uniform() < 0.5;
      d.flip_v = rng.uniform() < 0.5;
    }
    if (config.jitter) {
      for (int t = 0; t < (has_t1 ? 2 : 1); ++t) {
        d.bri[t] = rng.uniform_range(-config.brightness, config.brightness);
        d.con[t] = rng.uniform_range(1.0 - config.contrast, 1.0 + config.contrast);
        d.sat[t] = rng.uniform_range(1.0 - config.saturation, 1.0 + config.saturation);
      }
    }
  }

  auto img0 = batch.images_t0.to(torch::kFloat32);
  auto img1 = has_t1 ? batch.images_t1.to(torch::kFloat32) : torch::Tensor();
  auto mask = batch.change_masks.to(torch::kFloat32).unsqueeze(1);
  auto fcm = has_fcm ? batch.first_change_maps.to(torch::kFloat32).unsqueeze(1) : torch::Tensor();

  if (config.affine) {
    auto theta = torch::empty({n, 2, 3}, torch::kFloat32);
    auto acc = theta.accessor<float, 3>();
    for (std::int64_t i = 0; i < n; ++i) {
      const auto& d = draws[static_cast<std::size_t>(i)];
      const double c = std::cos(d.angle) * d.inv_scale;
      const double s = std::sin(d.angle) * d.inv_scale;
      acc[i][0][0] = static_cast<float>(c);
      acc[i][0][1] = static_cast<float>(-s);
      acc[i][0][2] = static_cast<float>(d.tx);
      acc[i][1][0] = static_cast<float>(s);
      acc[i][1][1] = static_cast<float>(c);
      acc[i][1][2] = static_cast<float>(d.ty);
    }
    auto grid = F::affine_grid(theta, {n, 1, h, w}, /*align_corners=*/false);
    img0 = warp(img0, grid, false);
    if (has_t1) img1 = warp(img1, grid, false);
    mask = warp(mask, grid, true);
    if (has_fcm) fcm = warp(fcm, grid, true);
  }

  if (config.crop && config.crop_pad_px > 0) {
    const int p = config.crop_pad_px;
    const auto pad_opts = F::PadFuncOptions({p, p, p, p}).mode(torch::kReflect);
    auto crop_all = [&](torch::Tensor t) {
      t = F::pad(t, pad_opts);
      std::vector<torch::Tensor> rows;
      rows.reserve(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) {
        const auto& d = draws[static_cast<std::size_t>(i)];
        rows.push_back(t[i].narrow(1, d.crop_y, h).narrow(2, d.crop_x, w));
      }
      return torch::stack(rows, 0);
    };
    img0 = crop_all(img0);
    if (has_t1) img1 = crop_all(img1);
    mask = crop_all(mask);
    if (has_fcm) fcm = crop_all(fcm);
  }

  if (config.mirror) {
    auto flip_all = [&](torch::Tensor t) {
      std::vector<torch::Tensor> rows;
      rows.reserve(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) {
        const auto& d = draws[static_cast<std::size_t>(i)];
        std::vector<std::int64_t> dims;
        if (d.flip_h) dims.push_back(2);
        if (d.flip_v) dims.push_back(1);
        rows.push_back(dims.empty() ? t[i] : t[i].flip(dims));
      }
      return torch::stack(rows, 0);
    };
    img0 = flip_all(img0);
    if (has_t1) img1 = flip_all(img1);
    mask = flip_all(mask);
    if (has_fcm) fcm = flip_all(fcm);
  }

  if (config.jitter) {
    auto jitter_all = [&](torch::Tensor x, int t) {
      auto b = torch::empty({n, 1, 1, 1}, torch::kFloat32);
      auto c = torch::empty({n, 1, 1, 1}, torch::kFloat32);
      auto s = torch::empty({n, 1, 1, 1}, torch::kFloat32);
      auto ab = b.accessor<float, 4>();
      auto ac = c.accessor<float, 4>();
      auto as = s.accessor<float, 4>();
      for (std::int64_t i = 0; i < n; ++i) {
        const auto& d = draws[static_cast<std::size_t>(i)];
        ab[i][0][0][0] = static_cast<float>(d.bri[t]);
        ac[i][0][0][0] = static_cast<float>(d.con[t]);
        as[i][0][0][0] = static_cast<float>(d.sat[t]);
      }
      x = (x + b) * c;
      auto gray = x.mean(1, /*keepdim=*/true);
      return gray + (x - gray) * s;
    };
    img0 = jitter_all(img0, 0);
    if (has_t1) img1 = jitter_all(img1, 1);
  }

  SampleBatch out;
  out.images_t0 = img0.clamp(0.0, 1.0);
  if (has_t1) out.images_t1 = img1.clamp(0.0, 1.0);
  out.change_masks = mask.squeeze(1).round().to(torch::kUInt8);
  if (has_fcm) out.first_change_maps = fcm.squeeze(1).round().to(torch::kInt32);
  return out;
}

}  // namespace ucast
