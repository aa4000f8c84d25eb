#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ucast/dataset.hpp"

namespace ucast {

/// Procedural world: textured background, rectangular buildings appearing at
/// sampled months, and a bare-earth construction site rendered for
/// precursor_lead months before each appearance so that forecasting has a
/// learnable cue.
struct SynthConfig {
  int n_locations = 8;
  int image_size = 448;
  int n_months = 25;
  double buildings_per_month = 1.0;   // Poisson mean of new constructions per location-month
  int precursor_lead = 9;             // months of visible site works before a building
  int initial_buildings = 20;
  int min_building_px = 10;
  int max_building_px = 28;
  YearMonth start_date{2018, 1};
  std::vector<std::string> continents = {"aurelia", "borea"};  // assigned round-robin

  void validate() const;
};

std::vector<LocationSeries> synth_generate(const SynthConfig& config, std::uint64_t seed);

}  // namespace ucast
