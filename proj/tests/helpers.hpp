#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "ucast/common.hpp"

namespace ucast::testutil {

// Scratch directory removed on scope exit.
struct TempDir {
  std::filesystem::path path;

  TempDir() {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("ucast_test_" + std::to_string(counter.fetch_add(1)) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this) & 0xffff));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string str() const { return path.string(); }
  std::filesystem::path operator/(const std::string& p) const { return path / p; }
};

inline torch::Tensor random_mask(Rng& rng, std::vector<std::int64_t> shape, double p = 0.5) {
  auto t = torch::zeros(shape, torch::kUInt8);
  auto flat = t.view(-1);
  auto acc = flat.accessor<uint8_t, 1>();
  for (std::int64_t i = 0; i < flat.numel(); ++i) acc[i] = rng.uniform() < p ? 1 : 0;
  return t;
}

inline torch::Tensor random_unit(Rng& rng, std::vector<std::int64_t> shape) {
  auto t = torch::zeros(shape, torch::kFloat32);
  auto flat = t.view(-1);
  auto acc = flat.accessor<float, 1>();
  for (std::int64_t i = 0; i < flat.numel(); ++i) acc[i] = static_cast<float>(rng.uniform());
  return t;
}

}  // namespace ucast::testutil
