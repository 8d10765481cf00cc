#include "lumos/lightfield.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <regex>
#include <set>
#include <sstream>

#include "lumos/image_io.hpp"

namespace lumos {

LightField LightField::from_views(std::vector<Tensor> views, int angular_resolution, double sampling_period) {
  require(angular_resolution >= 2, Errc::NotSquareGrid, "angular resolution must be at least 2");
  require(views.size() == static_cast<std::size_t>(angular_resolution) * angular_resolution, Errc::MissingView,
          "expected " + std::to_string(angular_resolution * angular_resolution) + " views, got " +
              std::to_string(views.size()));
  require(sampling_period > 0.0, Errc::BadRange, "sampling period must be positive");
  const Shape& shape = views.front().shape();
  require(shape.size() == 3 && shape[0] == 3, Errc::ShapeMismatch, "views must be {3,H,W}");
  for (const Tensor& v : views) {
    require_same_shape(v.shape(), shape, "light field view");
    for (double x : v.values()) {
      require(x >= 0.0 && x <= 1.0, Errc::BadRange, "view values must lie in [0,1]");
    }
  }
  return LightField(std::move(views), angular_resolution, sampling_period);
}

LightField LightField::crop(int y0, int x0, int h, int w) const {
  std::vector<Tensor> out;
  out.reserve(views_.size());
  for (const Tensor& v : views_) out.push_back(lumos::crop(v, y0, x0, h, w));
  return LightField(std::move(out), n_, sampling_period_);
}

LightField load_light_field(const std::filesystem::path& dir) {
  require(std::filesystem::is_directory(dir), Errc::Io, dir.string() + " is not a directory");
  static const std::regex pattern(R"(view_(\d+)_(\d+)\.png)");
  std::map<AngularIndex, std::filesystem::path> files;
  int rows = 0, cols = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (!std::regex_match(name, m, pattern)) continue;
    const AngularIndex a{std::stoi(m[1]), std::stoi(m[2])};
    files[a] = entry.path();
    rows = std::max(rows, a.s + 1);
    cols = std::max(cols, a.t + 1);
  }
  require(!files.empty(), Errc::MissingView, "no view_{s}_{t}.png files in " + dir.string());
  require(rows == cols, Errc::NotSquareGrid,
          "view indices span " + std::to_string(rows) + "x" + std::to_string(cols) + " in " + dir.string());
  const int n = rows;
  require(n >= 2, Errc::NotSquareGrid, "a light field needs at least a 2x2 grid");

  std::vector<Tensor> views;
  views.reserve(static_cast<std::size_t>(n) * n);
  for (int s = 0; s < n; ++s) {
    for (int t = 0; t < n; ++t) {
      auto it = files.find({s, t});
      require(it != files.end(), Errc::MissingView,
              "view_" + std::to_string(s) + "_" + std::to_string(t) + ".png missing in " + dir.string());
      views.push_back(read_png(it->second));
      require(views.back().shape() == views.front().shape(), Errc::ShapeMismatch,
              it->second.filename().string() + " has shape " + shape_string(views.back().shape()) + ", expected " +
                  shape_string(views.front().shape()));
    }
  }

  double period = 1.0;
  if (std::ifstream meta(dir / "lightfield.txt"); meta) {
    std::string line;
    while (std::getline(meta, line)) {
      std::istringstream in(line);
      std::string key, eq;
      double value = 0.0;
      if (in >> key >> eq >> value && key == "sampling_period" && eq == "=") period = value;
    }
  }
  return LightField::from_views(std::move(views), n, period);
}

void save_light_field(const LightField& lf, const std::filesystem::path& dir, int bit_depth) {
  std::filesystem::create_directories(dir);
  const int n = lf.angular_resolution();
  for (int s = 0; s < n; ++s) {
    for (int t = 0; t < n; ++t) {
      write_png(dir / ("view_" + std::to_string(s) + "_" + std::to_string(t) + ".png"), lf.view(s, t), bit_depth);
    }
  }
  std::ofstream meta(dir / "lightfield.txt");
  meta.precision(17);
  meta << "sampling_period = " << lf.sampling_period() << "\n";
}

std::string to_string(ViewPattern p) {
  switch (p) {
    case ViewPattern::Corners4: return "corners4";
    case ViewPattern::Grid3x3: return "grid3x3";
    case ViewPattern::Custom: return "custom";
  }
  return "custom";
}

ViewPattern parse_view_pattern(const std::string& name) {
  if (name == "corners4") return ViewPattern::Corners4;
  if (name == "grid3x3") return ViewPattern::Grid3x3;
  if (name == "custom") return ViewPattern::Custom;
  fail(Errc::BadConfig, "unknown view pattern '" + name + "'");
}

ViewSelection sample_views(int n, ViewPattern pattern, std::vector<AngularIndex> custom) {
  ViewSelection sel;
  sel.pattern = pattern;
  switch (pattern) {
    case ViewPattern::Corners4:
      require(n >= 2, Errc::InfeasiblePattern, "corners4 needs N >= 2");
      sel.indices = {{0, 0}, {0, n - 1}, {n - 1, 0}, {n - 1, n - 1}};
      break;
    case ViewPattern::Grid3x3: {
      require(n >= 3 && (n - 1) % 2 == 0, Errc::InfeasiblePattern,
              "grid3x3 needs odd N >= 3, got N = " + std::to_string(n));
      const int axis[] = {0, (n - 1) / 2, n - 1};
      for (int s : axis) {
        for (int t : axis) sel.indices.push_back({s, t});
      }
      break;
    }
    case ViewPattern::Custom: {
      require(!custom.empty(), Errc::InfeasiblePattern, "custom selection is empty");
      std::set<AngularIndex> seen;
      for (const auto& a : custom) {
        require(a.s >= 0 && a.t >= 0 && a.s < n && a.t < n, Errc::InfeasiblePattern,
                "view (" + std::to_string(a.s) + "," + std::to_string(a.t) + ") outside the grid");
        require(seen.insert(a).second, Errc::InfeasiblePattern, "duplicate view in custom selection");
      }
      sel.indices = std::move(custom);
      break;
    }
  }
  return sel;
}

std::vector<Tensor> selected_views(const LightField& lf, const ViewSelection& selection) {
  std::vector<Tensor> out;
  out.reserve(selection.size());
  for (const auto& a : selection.indices) {
    require(a.s < lf.angular_resolution() && a.t < lf.angular_resolution(), Errc::InfeasiblePattern,
            "selection does not fit the light field grid");
    out.push_back(lf.view(a));
  }
  return out;
}

DatasetSplit split_dataset(std::vector<std::string> scenes, int train_count, std::uint64_t seed) {
  require(train_count > 0 && static_cast<std::size_t>(train_count) < scenes.size(), Errc::BadCount,
          "train count " + std::to_string(train_count) + " must lie strictly between 0 and " +
              std::to_string(scenes.size()));
  std::sort(scenes.begin(), scenes.end());
  std::mt19937_64 rng(seed);
  for (std::size_t i = scenes.size() - 1; i > 0; --i) {
    std::swap(scenes[i], scenes[rng() % (i + 1)]);
  }
  DatasetSplit split;
  split.seed = seed;
  split.train_scenes.assign(scenes.begin(), scenes.begin() + train_count);
  split.test_scenes.assign(scenes.begin() + train_count, scenes.end());
  return split;
}

void write_focal_stack(const std::filesystem::path& dir, const std::vector<Tensor>& slices,
                       const std::vector<double>& psi, int bit_depth) {
  require(slices.size() == psi.size(), Errc::LengthMismatch, "one defocus value per slice required");
  std::filesystem::create_directories(dir);
  std::ofstream meta(dir / "stack.txt");
  meta.precision(17);
  meta << "# slice psi\n";
  for (std::size_t j = 0; j < slices.size(); ++j) {
    write_png(dir / ("stack_" + std::to_string(j) + ".png"), slices[j], bit_depth);
    meta << j << " " << psi[j] << "\n";
  }
}

}  // namespace lumos
