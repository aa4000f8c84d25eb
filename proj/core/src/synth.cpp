#include "ucast/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace ucast {

void SynthConfig::validate() const {
  require(n_locations >= 1, "n_locations must be >= 1");
  require(image_size >= 32, "image_size must be >= 32");
  require(n_months >= 2, "n_months must be >= 2");
  require(buildings_per_month >= 0.0, "buildings_per_month must be >= 0");
  require(precursor_lead >= 1, "precursor_lead must be >= 1");
  require(initial_buildings >= 0, "initial_buildings must be >= 0");
  require(min_building_px >= 4 && min_building_px <= max_building_px,
          "building size range invalid");
  require(max_building_px * 4 <= image_size, "buildings too large for the image");
  require(!continents.empty(), "need at least one continent name");
}

namespace {

struct Building {
  int x0 = 0, y0 = 0, w = 0, h = 0;
  int month_built = 0;  // image index at which the roof first appears
  float tint[3] = {0, 0, 0};
};

constexpr float kBackgroundColor[3] = {0.30f, 0.42f, 0.25f};
constexpr float kRoofColor[3] = {0.62f, 0.60f, 0.58f};
constexpr float kDirtColor[3] = {0.46f, 0.35f, 0.20f};
constexpr int kSitePad = 2;  // construction site extends this far beyond the roof

LocationSeries generate_location(const SynthConfig& cfg, const std::string& location_id,
                                 const std::string& continent, std::uint64_t seed) {
  Rng rng(seed);
  const int size = cfg.image_size;

  // Static ground: base color plus a blocky 16 px brightness field, so the
  // background is textured but stable over time.
  auto base = torch::empty({3, size, size}, torch::kFloat32);
  {
    const int cell = 16;
    const int cells = (size + cell - 1) / cell;
    std::vector<float> coarse(static_cast<std::size_t>(cells * cells));
    for (auto& v : coarse) v = static_cast<float>(rng.uniform_range(-0.06, 0.06));
    auto acc = base.accessor<float, 3>();
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        float shade = coarse[static_cast<std::size_t>(y / cell * cells + x / cell)];
        for (int c = 0; c < 3; ++c) acc[c][y][x] = kBackgroundColor[c] + shade;
      }
    }
  }

  // Occupied cells block later placements; the check region pads the roof by
  // 2 px so neighboring buildings keep a visible gap.
  std::vector<uint8_t> occupied(static_cast<std::size_t>(size) * size, 0);
  auto region_free = [&](int x0, int y0, int x1, int y1) {
    for (int y = std::max(0, y0); y < std::min(size, y1); ++y) {
      for (int x = std::max(0, x0); x < std::min(size, x1); ++x) {
        if (occupied[static_cast<std::size_t>(y) * size + x]) return false;
      }
    }
    return true;
  };

  std::vector<Building> buildings;
  auto try_place = [&](int month_built) {
    for (int attempt = 0; attempt < 50; ++attempt) {
      int w = static_cast<int>(rng.uniform_int(cfg.min_building_px, cfg.max_building_px));
      int h = static_cast<int>(rng.uniform_int(cfg.min_building_px, cfg.max_building_px));
      int x0 = static_cast<int>(rng.uniform_int(0, size - w));
      int y0 = static_cast<int>(rng.uniform_int(0, size - h));
      if (!region_free(x0 - kSitePad, y0 - kSitePad, x0 + w + kSitePad, y0 + h + kSitePad)) {
        continue;
      }
      Building b;
      b.x0 = x0;
      b.y0 = y0;
      b.w = w;
      b.h = h;
      b.month_built = month_built;
      for (int c = 0; c < 3; ++c) {
        b.tint[c] = kRoofColor[c] + static_cast<float>(rng.uniform_range(-0.03, 0.03));
      }
      for (int y = y0; y < y0 + h; ++y) {
        for (int x = x0; x < x0 + w; ++x) {
          occupied[static_cast<std::size_t>(y) * size + x] = 1;
        }
      }
      buildings.push_back(b);
      return;
    }
  };

  for (int i = 0; i < cfg.initial_buildings; ++i) try_place(0);
  for (int m = 1; m < cfg.n_months; ++m) {
    int count = rng.poisson(cfg.buildings_per_month);
    for (int i = 0; i < count; ++i) try_place(m);
  }

  LocationSeries series;
  series.location_id = location_id;
  series.continent = continent;

  for (int m = 0; m < cfg.n_months; ++m) {
    series.dates.push_back(cfg.start_date.plus_months(m));

    auto image = base.clone();
    auto img = image.accessor<float, 3>();
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          img[c][y][x] += static_cast<float>(rng.uniform_range(-0.04, 0.04));
        }
      }
    }

    auto mask = torch::zeros({size, size}, torch::kUInt8);
    auto precursor = torch::zeros({size, size}, torch::kUInt8);
    auto mask_acc = mask.accessor<uint8_t, 2>();
    auto pre_acc = precursor.accessor<uint8_t, 2>();

    for (const auto& b : buildings) {
      bool built = b.month_built <= m;
      bool under_construction = !built && b.month_built - cfg.precursor_lead <= m;
      if (under_construction) {
        int x0 = std::max(0, b.x0 - kSitePad);
        int y0 = std::max(0, b.y0 - kSitePad);
        int x1 = std::min(size, b.x0 + b.w + kSitePad);
        int y1 = std::min(size, b.y0 + b.h + kSitePad);
        for (int y = y0; y < y1; ++y) {
          for (int x = x0; x < x1; ++x) {
            for (int c = 0; c < 3; ++c) {
              img[c][y][x] = kDirtColor[c] + static_cast<float>(rng.uniform_range(-0.07, 0.07));
            }
            pre_acc[y][x] = 1;
          }
        }
      } else if (built) {
        for (int y = b.y0; y < b.y0 + b.h; ++y) {
          for (int x = b.x0; x < b.x0 + b.w; ++x) {
            bool border = y == b.y0 || y == b.y0 + b.h - 1 || x == b.x0 || x == b.x0 + b.w - 1;
            float dim = border ? 0.35f : 1.0f;
            for (int c = 0; c < 3; ++c) {
              img[c][y][x] =
                  b.tint[c] * dim + static_cast<float>(rng.uniform_range(-0.02, 0.02));
            }
            mask_acc[y][x] = 1;
          }
        }
      }
    }

    image.clamp_(0.0f, 1.0f);
    series.images.push_back(image);
    series.builtup_masks.push_back(mask);
    series.precursor_masks.push_back(precursor);
  }

  series.validate();
  return series;
}

}  // namespace

std::vector<LocationSeries> synth_generate(const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  std::vector<LocationSeries> locations;
  locations.reserve(static_cast<std::size_t>(config.n_locations));
  for (int i = 0; i < config.n_locations; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "loc_%03d", i);
    const std::string& continent =
        config.continents[static_cast<std::size_t>(i) % config.continents.size()];
    locations.push_back(
        generate_location(config, id, continent, derive_seed(seed, std::string("synth:") + id)));
  }
  return locations;
}

}  // namespace ucast
