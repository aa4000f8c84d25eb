#pragma once

#include <torch/torch.h>

#include "ucast/common.hpp"

namespace ucast {

/// Geometric parameters are drawn once per sample and applied identically to
/// the image(s), the change mask, and the first-change month map; photometric
/// jitter is drawn per image, so the two timepoints of a detection pair get
/// independent lighting. All toggles off = identity.
struct AugmentConfig {
  bool crop = true;    // reflect-pad by crop_pad_px, random crop back to size
  bool affine = true;
  bool mirror = true;  // horizontal / vertical flip, each with p = 0.5
  bool jitter = true;

  int crop_pad_px = 16;
  double max_rotate_degrees = 5.0;
  double max_translate_fraction = 0.02;  // of the patch side
  double scale_min = 0.95;
  double scale_max = 1.05;
  double brightness = 0.1;  // additive, uniform in +-brightness
  double contrast = 0.1;    // multiplicative, uniform in 1 +- contrast
  double saturation = 0.1;  // mix toward the per-pixel channel mean

  static AugmentConfig off();
  bool any() const { return crop || affine || mirror || jitter; }
  void validate() const;
};

/// images_* are float32 Nx3xHxW in [0,1]; change_masks uint8 NxHxW;
/// first_change_maps int32 NxHxW. images_t1 and first_change_maps may be
/// undefined and then stay undefined.
struct SampleBatch {
  torch::Tensor images_t0;
  torch::Tensor images_t1;
  torch::Tensor change_masks;
  torch::Tensor first_change_maps;
};

/// Crops and flips are exact; the affine warp samples images bilinearly with
/// reflection padding and labels nearest-neighbor, keeping their value sets
/// intact. Images come back clamped to [0,1].
SampleBatch augment_batch(const SampleBatch& batch, const AugmentConfig& config, Rng& rng);

}  // namespace ucast
