#include "ucast/raster_io.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace ucast {

namespace fs = std::filesystem;
using nlohmann::json;

torch::Tensor load_image_png(const fs::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  require(!bgr.empty(), "cannot read image: " + path.string());
  require(bgr.isContinuous() && bgr.type() == CV_8UC3, "unexpected decode layout: " + path.string());
  auto hwc = torch::from_blob(bgr.data, {bgr.rows, bgr.cols, 3}, torch::kUInt8).clone();
  // OpenCV decodes BGR; flipping the channel axis after CHW permute gives RGB.
  return hwc.permute({2, 0, 1}).flip(0).to(torch::kFloat32).div_(255.0f).contiguous();
}

torch::Tensor load_mask_png(const fs::path& path) {
  cv::Mat gray = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  require(!gray.empty(), "cannot read mask: " + path.string());
  auto hw = torch::from_blob(gray.data, {gray.rows, gray.cols}, torch::kUInt8).clone();
  return hw.gt(127).to(torch::kUInt8);
}

void save_image_png(const fs::path& path, const torch::Tensor& image) {
  require(image.dim() == 3 && image.size(0) == 3, "image must be 3xHxW");
  auto hwc = image.detach()
                 .to(torch::kFloat32)
                 .clamp(0, 1)
                 .mul(255.0f)
                 .round()
                 .to(torch::kUInt8)
                 .flip(0)  // RGB -> BGR for the encoder
                 .permute({1, 2, 0})
                 .contiguous();
  cv::Mat bgr(static_cast<int>(image.size(1)), static_cast<int>(image.size(2)), CV_8UC3,
              hwc.data_ptr<uint8_t>());
  fs::create_directories(path.parent_path());
  require(cv::imwrite(path.string(), bgr), "cannot write image: " + path.string());
}

void save_mask_png(const fs::path& path, const torch::Tensor& mask) {
  require(mask.dim() == 2, "mask must be HxW");
  auto bytes = mask.detach().gt(0).to(torch::kUInt8).mul(255).contiguous();
  cv::Mat gray(static_cast<int>(mask.size(0)), static_cast<int>(mask.size(1)), CV_8UC1,
               bytes.data_ptr<uint8_t>());
  fs::create_directories(path.parent_path());
  require(cv::imwrite(path.string(), gray), "cannot write mask: " + path.string());
}

void write_location(const fs::path& root, const LocationSeries& series) {
  series.validate();
  fs::path dir = root / series.location_id;
  fs::create_directories(dir);

  json index;
  index["location_id"] = series.location_id;
  index["continent"] = series.continent;
  json dates = json::array();
  for (const auto& d : series.dates) dates.push_back(d.str());
  index["dates"] = dates;
  index["has_precursor_masks"] = !series.precursor_masks.empty();

  for (std::size_t i = 0; i < series.dates.size(); ++i) {
    const std::string stamp = series.dates[i].str();
    save_image_png(dir / "images" / (stamp + ".png"), series.images[i]);
    save_mask_png(dir / "masks" / (stamp + ".png"), series.builtup_masks[i]);
    if (!series.precursor_masks.empty()) {
      save_mask_png(dir / "precursors" / (stamp + ".png"), series.precursor_masks[i]);
    }
  }

  std::ofstream out(dir / "index.json");
  out << index.dump(2) << "\n";
  require(out.good(), "cannot write index.json under " + dir.string());
}

LocationSeries read_location(const fs::path& location_dir) {
  fs::path index_path = location_dir / "index.json";
  std::ifstream in(index_path);
  require(in.good(), "missing index.json in " + location_dir.string());
  json index;
  try {
    in >> index;
  } catch (const json::exception& e) {
    throw std::invalid_argument("malformed index.json in " + location_dir.string() + ": " +
                                e.what());
  }

  LocationSeries series;
  try {
    series.location_id = index.at("location_id").get<std::string>();
    series.continent = index.at("continent").get<std::string>();
    for (const auto& d : index.at("dates")) {
      series.dates.push_back(YearMonth::parse(d.get<std::string>()));
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument("malformed index.json in " + location_dir.string() + ": " +
                                e.what());
  }
  bool precursors = index.value("has_precursor_masks", false);

  for (const auto& date : series.dates) {
    const std::string stamp = date.str();
    series.images.push_back(load_image_png(location_dir / "images" / (stamp + ".png")));
    series.builtup_masks.push_back(load_mask_png(location_dir / "masks" / (stamp + ".png")));
    if (precursors) {
      series.precursor_masks.push_back(load_mask_png(location_dir / "precursors" / (stamp + ".png")));
    }
  }
  series.validate();
  return series;
}

std::vector<fs::path> list_locations(const fs::path& root) {
  require(fs::is_directory(root), "data root is not a directory: " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "index.json")) {
      dirs.push_back(entry.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

}  // namespace ucast
