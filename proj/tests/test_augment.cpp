#include <doctest.h>

#include <set>

#include "helpers.hpp"
#include "ucast/augment.hpp"

using namespace ucast;

namespace {

SampleBatch make_batch(Rng& rng, int n, int size, bool with_t1, bool with_fcm) {
  SampleBatch b;
  b.images_t0 = testutil::random_unit(rng, {n, 3, size, size});
  if (with_t1) b.images_t1 = testutil::random_unit(rng, {n, 3, size, size});
  b.change_masks = testutil::random_mask(rng, {n, size, size}, 0.2);
  if (with_fcm) {
    b.first_change_maps =
        (testutil::random_mask(rng, {n, size, size}, 0.4).to(torch::kInt32) * 7);
  }
  return b;
}

std::set<int> value_set(const torch::Tensor& t) {
  std::set<int> values;
  auto flat = t.to(torch::kInt32).flatten().contiguous();
  auto acc = flat.accessor<int, 1>();
  for (long i = 0; i < flat.size(0); ++i) values.insert(acc[i]);
  return values;
}

}  // namespace

TEST_CASE("disabled augmentation is the identity") {
  Rng data_rng(1), aug_rng(2);
  auto batch = make_batch(data_rng, 2, 32, true, true);
  auto out = augment_batch(batch, AugmentConfig::off(), aug_rng);
  CHECK(torch::equal(out.images_t0, batch.images_t0));
  CHECK(torch::equal(out.images_t1, batch.images_t1));
  CHECK(torch::equal(out.change_masks, batch.change_masks));
  CHECK(torch::equal(out.first_change_maps, batch.first_change_maps));
  CHECK(!AugmentConfig::off().any());
}

TEST_CASE("augmentation replays under the same rng stream") {
  Rng data_rng(3);
  auto batch = make_batch(data_rng, 3, 32, true, true);
  AugmentConfig cfg;
  Rng a(9), b(9), c(10);
  auto out_a = augment_batch(batch, cfg, a);
  auto out_b = augment_batch(batch, cfg, b);
  CHECK(torch::equal(out_a.images_t0, out_b.images_t0));
  CHECK(torch::equal(out_a.images_t1, out_b.images_t1));
  CHECK(torch::equal(out_a.change_masks, out_b.change_masks));
  CHECK(torch::equal(out_a.first_change_maps, out_b.first_change_maps));

  auto out_c = augment_batch(batch, cfg, c);
  CHECK(!torch::equal(out_a.images_t0, out_c.images_t0));
}

TEST_CASE("labels keep their value sets through warps") {
  Rng data_rng(4), aug_rng(5);
  auto batch = make_batch(data_rng, 4, 32, false, true);
  AugmentConfig cfg;  // all transforms on
  for (int round = 0; round < 5; ++round) {
    auto out = augment_batch(batch, cfg, aug_rng);
    CHECK(out.change_masks.dtype() == torch::kUInt8);
    CHECK(out.first_change_maps.dtype() == torch::kInt32);
    auto mask_values = value_set(out.change_masks);
    for (int v : mask_values) CHECK((v == 0 || v == 1));
    // Nearest-neighbor label sampling invents no intermediate months.
    auto fcm_values = value_set(out.first_change_maps);
    for (int v : fcm_values) CHECK((v == 0 || v == 7));
    CHECK(!out.images_t1.defined());
  }
}

TEST_CASE("geometry moves images and masks together") {
  // A mask that exactly marks bright image pixels must still do so after
  // crop + mirror, which are lossless pixel shuffles.
  Rng data_rng(6), aug_rng(7);
  const int size = 32;
  auto img = torch::zeros({1, 3, size, size});
  auto mask = testutil::random_mask(data_rng, {1, size, size}, 0.3);
  img.select(1, 0).copy_(mask.to(torch::kFloat32));
  img.select(1, 1).copy_(mask.to(torch::kFloat32));
  img.select(1, 2).copy_(mask.to(torch::kFloat32));

  AugmentConfig cfg;
  cfg.affine = false;  // bilinear resampling would soften the edges
  cfg.jitter = false;
  SampleBatch batch;
  batch.images_t0 = img;
  batch.change_masks = mask;
  for (int round = 0; round < 10; ++round) {
    auto out = augment_batch(batch, cfg, aug_rng);
    CHECK(torch::equal(out.images_t0.select(1, 0).gt(0.5).to(torch::kUInt8), out.change_masks));
  }
}

TEST_CASE("photometric jitter leaves geometry alone") {
  Rng data_rng(8), aug_rng(9);
  auto batch = make_batch(data_rng, 2, 32, true, true);
  AugmentConfig cfg;
  cfg.crop = false;
  cfg.affine = false;
  cfg.mirror = false;  // jitter only
  auto out = augment_batch(batch, cfg, aug_rng);
  CHECK(torch::equal(out.change_masks, batch.change_masks));
  CHECK(torch::equal(out.first_change_maps, batch.first_change_maps));
  CHECK(!torch::equal(out.images_t0, batch.images_t0));

  // The two timepoints draw independent lighting: applying the identical
  // geometry but different jitter means t0 and t1 shift differently.
  auto d0 = (out.images_t0 - batch.images_t0).mean().item<float>();
  auto d1 = (out.images_t1 - batch.images_t1).mean().item<float>();
  CHECK(d0 != d1);
}

TEST_CASE("augmented images stay inside [0,1]") {
  Rng data_rng(10), aug_rng(11);
  auto batch = make_batch(data_rng, 2, 32, true, false);
  AugmentConfig cfg;
  cfg.brightness = 0.9;
  cfg.contrast = 0.9;
  for (int round = 0; round < 5; ++round) {
    auto out = augment_batch(batch, cfg, aug_rng);
    CHECK(out.images_t0.min().item<float>() >= 0.0f);
    CHECK(out.images_t0.max().item<float>() <= 1.0f);
    CHECK(out.images_t1.min().item<float>() >= 0.0f);
    CHECK(out.images_t1.max().item<float>() <= 1.0f);
  }
}

TEST_CASE("undefined optional tensors pass through undefined") {
  Rng data_rng(12), aug_rng(13);
  auto batch = make_batch(data_rng, 2, 32, false, false);
  auto out = augment_batch(batch, AugmentConfig{}, aug_rng);
  CHECK(!out.images_t1.defined());
  CHECK(!out.first_change_maps.defined());
  CHECK(out.images_t0.sizes() == batch.images_t0.sizes());
  CHECK(out.change_masks.sizes() == batch.change_masks.sizes());
}

TEST_CASE("augment config validates its ranges") {
  AugmentConfig bad;
  bad.crop_pad_px = -1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = AugmentConfig{};
  bad.scale_min = 1.2;  // exceeds scale_max
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = AugmentConfig{};
  bad.brightness = -0.2;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_NOTHROW(AugmentConfig{}.validate());
}
