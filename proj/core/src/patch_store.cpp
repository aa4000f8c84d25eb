#include "ucast/patch_store.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <json.hpp>
#include <torch/serialize.h>

namespace ucast {

namespace fs = std::filesystem;
using nlohmann::json;

void PatchArchive::validate() const {
  const auto count = static_cast<std::size_t>(n());
  require(rows.size() == count && cols.size() == count && t0.size() == count &&
              t1.size() == count && n_change.size() == count,
          "patch archive metadata arrays disagree in length");
  require(delta_months >= 1, "delta_months must be >= 1");
  if (count == 0) return;
  auto check = [&](const torch::Tensor& t, torch::Dtype dtype, int64_t channels,
                   const char* name) {
    require(t.defined() && t.dtype() == dtype && t.size(0) == n(),
            std::string("archive tensor ") + name + " has wrong dtype or length");
    if (channels > 0) {
      require(t.dim() == 4 && t.size(1) == channels && t.size(2) == kPatchSize &&
                  t.size(3) == kPatchSize,
              std::string("archive tensor ") + name + " must be Nx" + std::to_string(channels) +
                  "x224x224");
    } else {
      require(t.dim() == 3 && t.size(1) == kPatchSize && t.size(2) == kPatchSize,
              std::string("archive tensor ") + name + " must be Nx224x224");
    }
  };
  check(images_t0, torch::kUInt8, 3, "images_t0");
  check(images_t1, torch::kUInt8, 3, "images_t1");
  check(change_masks, torch::kUInt8, 0, "change_masks");
  check(first_change_maps, torch::kInt16, 0, "first_change_maps");
  auto sums = change_masks.to(torch::kInt64).sum({1, 2});
  for (std::size_t i = 0; i < count; ++i) {
    require(sums[static_cast<int64_t>(i)].item<int64_t>() == n_change[i],
            "n_change does not match the stored mask");
  }
}

namespace {

torch::Tensor quantize_image(const torch::Tensor& img) {
  return img.mul(255.0f).round().clamp(0, 255).to(torch::kUInt8).contiguous();
}

std::string patch_stem(const std::string& location_id, const std::string& t0,
                       const std::string& t1, int row, int col) {
  return location_id + "_" + t0 + "_" + t1 + "_" + std::to_string(row) + "_" +
         std::to_string(col);
}

fs::path bucket_dir(const fs::path& root, const std::string& split, int delta) {
  return root / "pairs" / ("r" + std::to_string(delta)) / split;
}

}  // namespace

PatchArchive build_patch_archive(const std::vector<LocationSeries>& locations,
                                 const std::string& split, int delta_months, int fcm_horizon) {
  require(delta_months >= 1, "delta_months must be >= 1");
  PatchArchive archive;
  archive.split = split;
  archive.delta_months = delta_months;

  std::vector<torch::Tensor> im0, im1, masks, fcms;
  for (const auto& series : locations) {
    auto pairs = enumerate_pairs(series.dates, delta_months);
    for (auto& sample : tile_patches(series, pairs, fcm_horizon)) {
      archive.location_ids.push_back(sample.location_id);
      archive.rows.push_back(sample.row);
      archive.cols.push_back(sample.col);
      archive.t0.push_back(sample.t0.str());
      archive.t1.push_back(sample.t1.str());
      archive.n_change.push_back(sample.n_change);
      im0.push_back(quantize_image(sample.image_t0));
      im1.push_back(quantize_image(sample.image_t1));
      masks.push_back(sample.change_mask.contiguous());
      fcms.push_back(sample.first_change_month.to(torch::kInt16).contiguous());
    }
  }
  if (!im0.empty()) {
    archive.images_t0 = torch::stack(im0);
    archive.images_t1 = torch::stack(im1);
    archive.change_masks = torch::stack(masks);
    archive.first_change_maps = torch::stack(fcms);
  }
  archive.validate();
  return archive;
}

void save_patch_archive(const fs::path& root, const PatchArchive& archive) {
  archive.validate();
  fs::path dir = bucket_dir(root, archive.split, archive.delta_months);
  fs::create_directories(dir);
  for (int64_t i = 0; i < archive.n(); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    std::string stem = patch_stem(archive.location_ids[idx], archive.t0[idx], archive.t1[idx],
                                  archive.rows[idx], archive.cols[idx]);
    torch::serialize::OutputArchive out;
    out.write("image_t0", archive.images_t0[i]);
    out.write("image_t1", archive.images_t1[i]);
    out.write("change_mask", archive.change_masks[i]);
    out.write("first_change_month", archive.first_change_maps[i]);
    out.save_to((dir / (stem + ".pt")).string());

    json meta;
    meta["location_id"] = archive.location_ids[idx];
    meta["row"] = archive.rows[idx];
    meta["col"] = archive.cols[idx];
    meta["t0"] = archive.t0[idx];
    meta["t1"] = archive.t1[idx];
    meta["delta_months"] = archive.delta_months;
    meta["split"] = archive.split;
    meta["n_change"] = archive.n_change[idx];
    std::ofstream sidecar(dir / (stem + ".json"));
    sidecar << meta.dump(2) << "\n";
    require(sidecar.good(), "cannot write patch sidecar under " + dir.string());
  }
}

PatchArchive load_patch_archive(const fs::path& root, const std::string& split,
                                int delta_months) {
  fs::path dir = bucket_dir(root, split, delta_months);
  require(fs::is_directory(dir), "missing patch bucket: " + dir.string());

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".pt") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  require(!files.empty(), "patch bucket is empty: " + dir.string());

  PatchArchive archive;
  archive.split = split;
  archive.delta_months = delta_months;
  std::vector<torch::Tensor> im0, im1, masks, fcms;
  for (const auto& file : files) {
    std::ifstream in(fs::path(file).replace_extension(".json"));
    require(in.good(), "missing patch sidecar for " + file.string());
    json meta = json::parse(in);
    require(meta.at("delta_months").get<int>() == delta_months,
            "sidecar delta mismatch in " + file.string());
    archive.location_ids.push_back(meta.at("location_id").get<std::string>());
    archive.rows.push_back(meta.at("row").get<int>());
    archive.cols.push_back(meta.at("col").get<int>());
    archive.t0.push_back(meta.at("t0").get<std::string>());
    archive.t1.push_back(meta.at("t1").get<std::string>());
    archive.n_change.push_back(meta.at("n_change").get<int64_t>());

    torch::serialize::InputArchive in_archive;
    in_archive.load_from(file.string());
    torch::Tensor image_t0, image_t1, change_mask, fcm;
    in_archive.read("image_t0", image_t0);
    in_archive.read("image_t1", image_t1);
    in_archive.read("change_mask", change_mask);
    in_archive.read("first_change_month", fcm);
    im0.push_back(image_t0);
    im1.push_back(image_t1);
    masks.push_back(change_mask);
    fcms.push_back(fcm);
  }
  archive.images_t0 = torch::stack(im0);
  archive.images_t1 = torch::stack(im1);
  archive.change_masks = torch::stack(masks);
  archive.first_change_maps = torch::stack(fcms);
  archive.validate();
  return archive;
}

bool patch_archive_exists(const fs::path& root, const std::string& split, int delta_months) {
  fs::path dir = bucket_dir(root, split, delta_months);
  if (!fs::is_directory(dir)) return false;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".pt") return true;
  }
  return false;
}

void save_bucket_stats_csv(const fs::path& path, const std::vector<BucketStats>& stats) {
  std::ofstream out(path);
  require(out.good(), "cannot write " + path.string());
  out << "delta_months,n_pairs,n_patches,change_fraction\n";
  for (const auto& row : stats) {
    char frac[32];
    std::snprintf(frac, sizeof(frac), "%.8f", row.change_fraction);
    out << row.delta_months << "," << row.n_pairs << "," << row.n_patches << "," << frac << "\n";
  }
  require(out.good(), "cannot write " + path.string());
}

}  // namespace ucast
