#pragma once

#include <cstdint>
#include <vector>

#include "lumos/lightfield.hpp"

namespace lumos {

/// Periodic RGB texture: white noise blurred by a Gaussian of `sigma`
/// pixels (wrap-around), rescaled per channel to [0.1, 0.9].
Tensor smooth_texture(int height, int width, double sigma, std::uint64_t seed);

/// Samples `tex` at (y, x) with bilinear interpolation and periodic wrap.
double sample_wrapped(const Tensor& tex, int channel, double y, double x);

/// A fronto-parallel plane: view(s,t)(y,x) = tex(y - d(s-c), x - d(t-c))
/// with c = (N-1)/2 and d the disparity in pixels per view step.
LightField plane_light_field(const Tensor& texture, int angular_resolution, double disparity);

struct SceneLayer {
  Tensor texture;     // {3,H,W}, periodic
  double disparity;   // pixels per view step
  double cy, cx;      // disk center in the central view; ignored for the background
  double radius;      // <= 0: fills the frame (background)
};

/// Back-to-front composite of layers (first = farthest). Disks get a
/// one-pixel anti-aliased edge.
LightField layered_light_field(const std::vector<SceneLayer>& layers, int angular_resolution, int height, int width);

/// Background plane plus two occluding disks with random textures and
/// disparities in [-max_disparity, max_disparity].
LightField random_scene(int angular_resolution, int height, int width, std::uint64_t seed,
                        double max_disparity = 1.0);

}  // namespace lumos
