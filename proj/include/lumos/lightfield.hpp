#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lumos/tensor.hpp"

namespace lumos {

/// Angular coordinate (s = row, t = column) on an N x N view grid.
struct AngularIndex {
  int s = 0;
  int t = 0;
  auto operator<=>(const AngularIndex&) const = default;
};

/// N x N grid of RGB sub-aperture views, each {3,H,W} with values in [0,1].
/// Immutable after construction.
class LightField {
 public:
  /// `views` are row-major by (s, t).
  static LightField from_views(std::vector<Tensor> views, int angular_resolution, double sampling_period = 1.0);

  int angular_resolution() const noexcept { return n_; }
  int height() const noexcept { return views_.front().dim(1); }
  int width() const noexcept { return views_.front().dim(2); }
  /// Pupil-plane pitch between neighbouring views, in millimeters.
  double sampling_period() const noexcept { return sampling_period_; }

  const Tensor& view(int s, int t) const { return views_.at(static_cast<std::size_t>(s) * n_ + t); }
  const Tensor& view(AngularIndex a) const { return view(a.s, a.t); }
  const std::vector<Tensor>& views() const noexcept { return views_; }

  LightField crop(int y0, int x0, int height, int width) const;

 private:
  LightField(std::vector<Tensor> views, int n, double sampling_period)
      : views_(std::move(views)), n_(n), sampling_period_(sampling_period) {}

  std::vector<Tensor> views_;
  int n_ = 0;
  double sampling_period_ = 1.0;
};

/// Loads `view_{s}_{t}.png` files from one scene directory. An optional
/// `lightfield.txt` may carry `sampling_period = <mm>`.
LightField load_light_field(const std::filesystem::path& dir);

/// Writes the canonical scene layout (16-bit PNGs by default).
void save_light_field(const LightField& lf, const std::filesystem::path& dir, int bit_depth = 16);

enum class ViewPattern { Corners4, Grid3x3, Custom };

std::string to_string(ViewPattern p);
ViewPattern parse_view_pattern(const std::string& name);

struct ViewSelection {
  std::vector<AngularIndex> indices;
  ViewPattern pattern = ViewPattern::Custom;

  std::size_t size() const noexcept { return indices.size(); }
};

/// corners4: the four extreme coordinates. grid3x3: {0,(N-1)/2,N-1} per
/// axis. custom: `custom` validated against the grid.
ViewSelection sample_views(int angular_resolution, ViewPattern pattern, std::vector<AngularIndex> custom = {});

/// Views of `lf` picked by `selection`, in selection order.
std::vector<Tensor> selected_views(const LightField& lf, const ViewSelection& selection);

struct DatasetSplit {
  std::vector<std::string> train_scenes;
  std::vector<std::string> test_scenes;
  std::uint64_t seed = 0;
};

/// Sorts `scenes`, shuffles them with a seeded Fisher-Yates pass and assigns
/// the first `train_count` to training.
DatasetSplit split_dataset(std::vector<std::string> scenes, int train_count, std::uint64_t seed);

/// Writes `stack_{j}.png` slices plus `stack.txt` listing each slice's
/// defocus coefficient.
void write_focal_stack(const std::filesystem::path& dir, const std::vector<Tensor>& slices,
                       const std::vector<double>& psi, int bit_depth = 16);

}  // namespace lumos
