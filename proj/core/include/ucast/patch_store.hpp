#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "ucast/dataset.hpp"

namespace ucast {

/// Derived patches live one archive per patch:
///   <root>/pairs/r<delta>/<split>/<location>_<t0>_<t1>_<row>_<col>.pt
/// with a JSON sidecar of the same stem. The .pt holds image_t0, image_t1,
/// change_mask, and first_change_month; the sidecar repeats the metadata in
/// readable form. split_manifest.json and stats.csv sit at <root>.
///
/// In memory an archive is one stacked tensor set per (split, delta). Images
/// stay uint8 until batch assembly to keep the footprint small.
struct PatchArchive {
  std::string split;
  int delta_months = 0;

  std::vector<std::string> location_ids;
  std::vector<int> rows;
  std::vector<int> cols;
  std::vector<std::string> t0;
  std::vector<std::string> t1;
  std::vector<int64_t> n_change;

  torch::Tensor images_t0;          // uint8 Nx3x224x224
  torch::Tensor images_t1;          // uint8 Nx3x224x224
  torch::Tensor change_masks;       // uint8 Nx224x224
  torch::Tensor first_change_maps;  // int16 Nx224x224, 0 = none within horizon

  int64_t n() const { return static_cast<int64_t>(location_ids.size()); }
  void validate() const;
};

PatchArchive build_patch_archive(const std::vector<LocationSeries>& locations,
                                 const std::string& split, int delta_months,
                                 int fcm_horizon = 24);

void save_patch_archive(const std::filesystem::path& root, const PatchArchive& archive);
PatchArchive load_patch_archive(const std::filesystem::path& root, const std::string& split,
                                int delta_months);
bool patch_archive_exists(const std::filesystem::path& root, const std::string& split,
                          int delta_months);

/// One row of the derivation statistics table, aggregated over splits.
struct BucketStats {
  int delta_months = 0;
  int64_t n_pairs = 0;
  int64_t n_patches = 0;
  double change_fraction = 0.0;  // changed pixels / all pixels
};

void save_bucket_stats_csv(const std::filesystem::path& path,
                           const std::vector<BucketStats>& stats);

}  // namespace ucast
