#pragma once

#include <filesystem>
#include <vector>

#include <torch/torch.h>

#include "ucast/dataset.hpp"

namespace ucast {

/// On-disk location layout:
///   <root>/<location_id>/index.json
///   <root>/<location_id>/images/YYYY-MM.png   (8-bit RGB)
///   <root>/<location_id>/masks/YYYY-MM.png    (8-bit gray, 0 or 255)

torch::Tensor load_image_png(const std::filesystem::path& path);   // float32 3xHxW in [0,1]
torch::Tensor load_mask_png(const std::filesystem::path& path);    // uint8 HxW in {0,1}
void save_image_png(const std::filesystem::path& path, const torch::Tensor& image);
void save_mask_png(const std::filesystem::path& path, const torch::Tensor& mask);

void write_location(const std::filesystem::path& root, const LocationSeries& series);
LocationSeries read_location(const std::filesystem::path& location_dir);

/// Locations under a data root = every directory containing an index.json,
/// sorted by name.
std::vector<std::filesystem::path> list_locations(const std::filesystem::path& root);

}  // namespace ucast
