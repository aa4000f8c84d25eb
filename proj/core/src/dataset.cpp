#include "ucast/dataset.hpp"

#include <algorithm>
#include <iostream>
#include <map>
#include <numeric>

namespace ucast {

using nlohmann::json;

int LocationSeries::height() const {
  require(!images.empty(), "empty series");
  return static_cast<int>(images[0].size(1));
}

int LocationSeries::width() const {
  require(!images.empty(), "empty series");
  return static_cast<int>(images[0].size(2));
}

void LocationSeries::validate() const {
  require(!location_id.empty(), "location_id empty");
  require(!dates.empty(), "series has no timestamps");
  require(images.size() == dates.size() && builtup_masks.size() == dates.size(),
          location_id + ": images/masks/dates length mismatch");
  require(precursor_masks.empty() || precursor_masks.size() == dates.size(),
          location_id + ": precursor mask count mismatch");
  for (std::size_t i = 1; i < dates.size(); ++i) {
    require(dates[i - 1] < dates[i], location_id + ": timestamps not strictly increasing");
  }
  const int h = static_cast<int>(images[0].size(1));
  const int w = static_cast<int>(images[0].size(2));
  for (std::size_t i = 0; i < dates.size(); ++i) {
    const auto& img = images[i];
    const auto& mask = builtup_masks[i];
    require(img.dim() == 3 && img.size(0) == 3 && img.size(1) == h && img.size(2) == w &&
                img.dtype() == torch::kFloat32,
            location_id + ": image " + dates[i].str() + " must be float32 3xHxW, constant H/W");
    require(mask.dim() == 2 && mask.size(0) == h && mask.size(1) == w &&
                mask.dtype() == torch::kUInt8,
            location_id + ": mask " + dates[i].str() + " must be uint8 HxW, constant H/W");
  }
}

namespace {

void require_binary_mask(const torch::Tensor& mask, const char* which) {
  require(mask.dim() == 2 && mask.dtype() == torch::kUInt8,
          std::string(which) + " must be a uint8 HxW raster");
  require(mask.le(1).all().item<bool>(), std::string(which) + " must be binary (0/1)");
}

}  // namespace

torch::Tensor derive_change_mask(const torch::Tensor& mask_t0, const torch::Tensor& mask_t1) {
  require_binary_mask(mask_t0, "mask_t0");
  require_binary_mask(mask_t1, "mask_t1");
  require(mask_t0.sizes() == mask_t1.sizes(), "mask shapes differ");
  // Construction only: 1 iff built at t1 and not at t0. The 1 -> 0 direction
  // (demolition) stays 0.
  return (mask_t1 & mask_t0.logical_not().to(torch::kUInt8)).contiguous();
}

torch::Tensor compute_first_change_map(const std::vector<torch::Tensor>& masks,
                                       const std::vector<int>& month_offsets, int horizon) {
  require(horizon >= 1, "horizon must be >= 1");
  require(masks.size() == month_offsets.size() && !masks.empty(),
          "masks/offsets length mismatch");
  require(month_offsets[0] == 0, "first offset must be 0 (the reference month)");
  for (std::size_t i = 1; i < month_offsets.size(); ++i) {
    require(month_offsets[i] > month_offsets[i - 1], "offsets must increase");
  }
  require_binary_mask(masks[0], "mask");

  auto result = torch::zeros_like(masks[0]).to(torch::kInt32);
  for (std::size_t i = 1; i < masks.size(); ++i) {
    if (month_offsets[i] > horizon) break;
    auto changed = derive_change_mask(masks[0], masks[i]).to(torch::kBool);
    auto fresh = changed & result.eq(0);
    result.masked_fill_(fresh, month_offsets[i]);
  }
  return result;
}

std::vector<std::pair<int, int>> enumerate_pairs(const std::vector<YearMonth>& dates, int r) {
  require(r >= 1, "range must be >= 1 month");
  std::vector<std::pair<int, int>> pairs;
  for (std::size_t i = 0; i < dates.size(); ++i) {
    for (std::size_t j = i + 1; j < dates.size(); ++j) {
      if (months_between(dates[i], dates[j]) == static_cast<int>(r)) {
        pairs.emplace_back(static_cast<int>(i), static_cast<int>(j));
      }
    }
  }
  return pairs;
}

std::vector<PatchSample> tile_patches(const LocationSeries& series,
                                      const std::vector<std::pair<int, int>>& pairs,
                                      int fcm_horizon) {
  series.validate();
  require(fcm_horizon >= 1, "fcm_horizon must be >= 1");
  const int h = series.height();
  const int w = series.width();
  if (h < kPatchSize || w < kPatchSize) {
    std::cerr << "warning: " << series.location_id << " is " << h << "x" << w
              << ", smaller than one " << kPatchSize << "px patch; skipped\n";
    return {};
  }
  const int tiles_y = h / kPatchSize;
  const int tiles_x = w / kPatchSize;

  // first-change maps are a function of t0 alone; share them across pairs.
  std::map<int, torch::Tensor> fcm_by_t0;
  auto fcm_for = [&](int i) {
    auto it = fcm_by_t0.find(i);
    if (it != fcm_by_t0.end()) return it->second;
    std::vector<torch::Tensor> masks;
    std::vector<int> offsets;
    for (std::size_t k = static_cast<std::size_t>(i); k < series.dates.size(); ++k) {
      masks.push_back(series.builtup_masks[k]);
      offsets.push_back(months_between(series.dates[i], series.dates[k]));
    }
    auto fcm = compute_first_change_map(masks, offsets, fcm_horizon);
    fcm_by_t0.emplace(i, fcm);
    return fcm;
  };

  std::vector<PatchSample> samples;
  samples.reserve(pairs.size() * static_cast<std::size_t>(tiles_y * tiles_x));
  for (const auto& [i, j] : pairs) {
    auto change = derive_change_mask(series.builtup_masks[i], series.builtup_masks[j]);
    auto fcm = fcm_for(i);
    for (int ty = 0; ty < tiles_y; ++ty) {
      for (int tx = 0; tx < tiles_x; ++tx) {
        const int row = ty * kPatchSize;
        const int col = tx * kPatchSize;
        PatchSample s;
        s.location_id = series.location_id;
        s.row = row;
        s.col = col;
        s.t0 = series.dates[i];
        s.t1 = series.dates[j];
        s.delta_months = months_between(series.dates[i], series.dates[j]);
        auto crop = [&](const torch::Tensor& t) {
          return t.dim() == 3 ? t.slice(1, row, row + kPatchSize).slice(2, col, col + kPatchSize)
                              : t.slice(0, row, row + kPatchSize).slice(1, col, col + kPatchSize);
        };
        s.image_t0 = crop(series.images[i]).contiguous();
        s.image_t1 = crop(series.images[j]).contiguous();
        s.change_mask = crop(change).contiguous();
        s.first_change_month = crop(fcm).contiguous();
        s.n_change = s.change_mask.sum().item<long>();
        samples.push_back(std::move(s));
      }
    }
  }
  return samples;
}

std::array<int, 3> SplitManifest::totals() const {
  std::array<int, 3> t{0, 0, 0};
  for (const auto& [continent, counts] : continent_counts) {
    for (int s = 0; s < 3; ++s) t[s] += counts[s];
  }
  return t;
}

json SplitManifest::to_json() const {
  json j;
  j["seed"] = seed;
  j["assignment"] = assignment;
  json per_continent;
  for (const auto& [continent, counts] : continent_counts) {
    per_continent[continent] = {{"train", counts[0]}, {"val", counts[1]}, {"test", counts[2]}};
  }
  j["continent_counts"] = per_continent;
  return j;
}

SplitManifest SplitManifest::from_json(const json& j) {
  SplitManifest m;
  m.seed = j.at("seed").get<std::uint64_t>();
  m.assignment = j.at("assignment").get<std::map<std::string, std::string>>();
  for (const auto& [continent, counts] : j.at("continent_counts").items()) {
    m.continent_counts[continent] = {counts.at("train").get<int>(), counts.at("val").get<int>(),
                                     counts.at("test").get<int>()};
  }
  return m;
}

namespace {

constexpr double kSplitFractions[3] = {0.7, 0.1, 0.2};
// On remainder ties the scarcer split wins: val, then test, then train.
constexpr int kTiePreference[3] = {2, 0, 1};  // rank of train, val, test

std::array<int, 3> largest_remainder_targets(int n) {
  std::array<int, 3> target{};
  std::array<double, 3> remainder{};
  int assigned = 0;
  for (int s = 0; s < 3; ++s) {
    double exact = kSplitFractions[s] * n;
    target[s] = static_cast<int>(exact);
    remainder[s] = exact - target[s];
    assigned += target[s];
  }
  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (remainder[a] != remainder[b]) return remainder[a] > remainder[b];
    return kTiePreference[a] < kTiePreference[b];
  });
  for (int k = 0; k < n - assigned; ++k) target[order[static_cast<std::size_t>(k)]] += 1;
  return target;
}

}  // namespace

SplitManifest make_split(const std::vector<std::pair<std::string, std::string>>& locations,
                         std::uint64_t seed) {
  require(locations.size() >= 5, "need at least 5 locations to form three splits");
  {
    std::map<std::string, int> seen;
    for (const auto& [id, continent] : locations) {
      require(++seen[id] == 1, "duplicate location_id: " + id);
    }
  }

  std::map<std::string, std::vector<std::string>> by_continent;
  for (const auto& [id, continent] : locations) by_continent[continent].push_back(id);

  SplitManifest manifest;
  manifest.seed = seed;

  // Per-continent proportional assignment over a seeded shuffle.
  std::map<std::string, std::vector<std::vector<std::string>>> buckets;
  for (auto& [continent, ids] : by_continent) {
    std::sort(ids.begin(), ids.end());
    Rng rng(derive_seed(seed, "split:" + continent));
    rng.shuffle(ids);
    auto target = largest_remainder_targets(static_cast<int>(ids.size()));
    std::vector<std::vector<std::string>> split_ids(3);
    std::size_t pos = 0;
    for (int s = 0; s < 3; ++s) {
      for (int k = 0; k < target[s]; ++k) split_ids[s].push_back(ids[pos++]);
    }
    buckets[continent] = std::move(split_ids);
  }

  // Continent rounding can leave the global totals off target; move single
  // locations between splits until they match, never emptying a continent's
  // train share when it has two or more locations.
  auto global_target = largest_remainder_targets(static_cast<int>(locations.size()));
  auto current_totals = [&] {
    std::array<int, 3> t{0, 0, 0};
    for (const auto& [continent, split_ids] : buckets) {
      for (int s = 0; s < 3; ++s) t[s] += static_cast<int>(split_ids[s].size());
    }
    return t;
  };
  for (bool moved = true; moved;) {
    moved = false;
    auto totals = current_totals();
    int from = -1, to = -1;
    for (int s = 0; s < 3; ++s) {
      if (totals[s] > global_target[s] && from < 0) from = s;
      if (totals[s] < global_target[s] && to < 0) to = s;
    }
    if (from < 0 || to < 0) break;
    // Donor continent: the one with the most locations in the oversized
    // split (ties to the lexicographically first), keeping train nonempty.
    std::string donor;
    int donor_count = -1;
    for (const auto& [continent, split_ids] : buckets) {
      int count = static_cast<int>(split_ids[static_cast<std::size_t>(from)].size());
      if (count == 0) continue;
      int continent_total = static_cast<int>(by_continent.at(continent).size());
      if (from == 0 && count == 1 && continent_total >= 2) continue;
      if (count > donor_count) {
        donor = continent;
        donor_count = count;
      }
    }
    if (donor_count < 0) break;
    auto& from_ids = buckets[donor][static_cast<std::size_t>(from)];
    buckets[donor][static_cast<std::size_t>(to)].push_back(from_ids.back());
    from_ids.pop_back();
    moved = true;
  }

  static const char* kSplitNames[3] = {"train", "val", "test"};
  for (const auto& [continent, split_ids] : buckets) {
    std::array<int, 3> counts{0, 0, 0};
    for (int s = 0; s < 3; ++s) {
      counts[s] = static_cast<int>(split_ids[static_cast<std::size_t>(s)].size());
      for (const auto& id : split_ids[static_cast<std::size_t>(s)]) {
        manifest.assignment[id] = kSplitNames[s];
      }
    }
    manifest.continent_counts[continent] = counts;
  }
  return manifest;
}

}  // namespace ucast
