#pragma once

#include <array>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "ucast/common.hpp"
#include <json.hpp>

namespace ucast {

constexpr int kPatchSize = 224;

/// Per-location time series: one image and one built-up mask per timestamp.
struct LocationSeries {
  std::string location_id;
  std::string continent;
  std::vector<YearMonth> dates;               // strictly increasing
  std::vector<torch::Tensor> images;          // float32, 3xHxW, values in [0,1]
  std::vector<torch::Tensor> builtup_masks;   // uint8, HxW, values in {0,1}

  // Generator bookkeeping: where construction-site texture is visible.
  // Empty for real data.
  std::vector<torch::Tensor> precursor_masks;

  int height() const;
  int width() const;
  void validate() const;
};

/// One 224x224 training sample. image_t1 is defined only for detection pairs.
struct PatchSample {
  std::string location_id;
  int row = 0;
  int col = 0;
  YearMonth t0, t1;
  int delta_months = 0;
  torch::Tensor image_t0;            // 3x224x224, uint8 on disk / float32 once prepared
  torch::Tensor image_t1;            // same layout; may be undefined
  torch::Tensor change_mask;         // uint8 224x224
  torch::Tensor first_change_month;  // int32 224x224; 0 = none within horizon
  long n_change = 0;

  bool has_pair() const { return image_t1.defined(); }
};

/// Construction-only difference of two built-up masks: 1 iff a pixel is
/// built at t1 but not at t0. Demolitions (1 -> 0) map to 0.
torch::Tensor derive_change_mask(const torch::Tensor& mask_t0, const torch::Tensor& mask_t1);

/// Smallest month offset in [1, horizon] at which a construction-only change
/// versus masks[0] is observable, per pixel; 0 where none. month_offsets[i]
/// is the calendar-month distance of masks[i] from masks[0] (offsets[0]=0);
/// gaps in the series are skipped, so a change is dated at the first month
/// it can be observed.
torch::Tensor compute_first_change_map(const std::vector<torch::Tensor>& masks,
                                       const std::vector<int>& month_offsets,
                                       int horizon);

/// All ordered index pairs (i, j) whose calendar-month difference is exactly r.
std::vector<std::pair<int, int>> enumerate_pairs(const std::vector<YearMonth>& dates, int r);

/// Tile every pair into non-overlapping 224x224 patches anchored at (0,0);
/// residual borders are dropped. first_change_month is computed against the
/// full remaining series up to fcm_horizon months. Returns an empty list
/// (with a warning) when the rasters are smaller than one patch.
std::vector<PatchSample> tile_patches(const LocationSeries& series,
                                      const std::vector<std::pair<int, int>>& pairs,
                                      int fcm_horizon = 24);

struct SplitManifest {
  std::map<std::string, std::string> assignment;  // location_id -> train|val|test
  std::uint64_t seed = 0;
  // continent -> {train, val, test} location counts
  std::map<std::string, std::array<int, 3>> continent_counts;

  std::array<int, 3> totals() const;
  nlohmann::json to_json() const;
  static SplitManifest from_json(const nlohmann::json& j);
};

/// Continent-stratified 70/10/20 split, deterministic in the seed. Needs at
/// least five locations.
SplitManifest make_split(const std::vector<std::pair<std::string, std::string>>& locations,
                         std::uint64_t seed);

}  // namespace ucast
