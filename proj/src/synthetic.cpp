#include "lumos/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace lumos {
namespace {

void blur_axis(std::vector<double>& plane, int h, int w, const std::vector<double>& taps, bool rows) {
  const int r = static_cast<int>(taps.size() / 2);
  std::vector<double> out(plane.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) {
        const int yy = rows ? ((y + k) % h + h) % h : y;
        const int xx = rows ? x : ((x + k) % w + w) % w;
        acc += taps[k + r] * plane[static_cast<std::size_t>(yy) * w + xx];
      }
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  plane.swap(out);
}

}  // namespace

Tensor smooth_texture(int height, int width, double sigma, std::uint64_t seed) {
  require(height > 0 && width > 0 && sigma >= 0.0, Errc::BadRange, "texture needs a positive size");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> taps{1.0};
  if (sigma > 0.0) {
    const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    taps.assign(2 * r + 1, 0.0);
    double total = 0.0;
    for (int k = -r; k <= r; ++k) total += taps[k + r] = std::exp(-0.5 * k * k / (sigma * sigma));
    for (double& t : taps) t /= total;
  }
  Tensor tex = image(3, height, width);
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> p(plane);
    for (double& v : p) v = noise(rng);
    blur_axis(p, height, width, taps, true);
    blur_axis(p, height, width, taps, false);
    const auto [lo, hi] = std::minmax_element(p.begin(), p.end());
    const double span = std::max(*hi - *lo, 1e-12);
    for (std::size_t i = 0; i < plane; ++i) tex[c * plane + i] = 0.1 + 0.8 * (p[i] - *lo) / span;
  }
  return tex;
}

double sample_wrapped(const Tensor& tex, int channel, double y, double x) {
  const int h = tex.dim(1), w = tex.dim(2);
  const double fy = std::floor(y), fx = std::floor(x);
  const double ay = y - fy, ax = x - fx;
  auto at = [&](long yy, long xx) {
    yy = ((yy % h) + h) % h;
    xx = ((xx % w) + w) % w;
    return tex.at(channel, static_cast<int>(yy), static_cast<int>(xx));
  };
  const long y0 = static_cast<long>(fy), x0 = static_cast<long>(fx);
  return (1 - ay) * ((1 - ax) * at(y0, x0) + ax * at(y0, x0 + 1)) +
         ay * ((1 - ax) * at(y0 + 1, x0) + ax * at(y0 + 1, x0 + 1));
}

LightField plane_light_field(const Tensor& texture, int n, double disparity) {
  return layered_light_field({{texture, disparity, 0.0, 0.0, 0.0}}, n, texture.dim(1), texture.dim(2));
}

LightField layered_light_field(const std::vector<SceneLayer>& layers, int n, int height, int width) {
  require(n >= 1, Errc::BadCount, "angular resolution must be positive");
  require(!layers.empty(), Errc::BadCount, "scene needs at least one layer");
  const double c = (n - 1) / 2.0;
  std::vector<Tensor> views;
  for (int s = 0; s < n; ++s) {
    for (int t = 0; t < n; ++t) {
      Tensor v = image(3, height, width);
      for (const auto& layer : layers) {
        const double dy = layer.disparity * (s - c), dx = layer.disparity * (t - c);
        for (int y = 0; y < height; ++y) {
          for (int x = 0; x < width; ++x) {
            double alpha = 1.0;
            if (layer.radius > 0.0) {
              const double dist = std::hypot(y - dy - layer.cy, x - dx - layer.cx);
              alpha = std::clamp(layer.radius + 0.5 - dist, 0.0, 1.0);
              if (alpha == 0.0) continue;
            }
            for (int ch = 0; ch < 3; ++ch) {
              const double val = sample_wrapped(layer.texture, ch, y - dy, x - dx);
              v.at(ch, y, x) = (1.0 - alpha) * v.at(ch, y, x) + alpha * val;
            }
          }
        }
      }
      views.push_back(std::move(v));
    }
  }
  return LightField::from_views(std::move(views), n);
}

LightField random_scene(int n, int height, int width, std::uint64_t seed, double max_disparity) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto disparity = [&] { return max_disparity * (2.0 * unit(rng) - 1.0); };
  std::vector<SceneLayer> layers;
  layers.push_back({smooth_texture(height, width, 1.0 + 2.0 * unit(rng), rng()), disparity(), 0, 0, 0});
  const double size = std::min(height, width);
  for (int i = 0; i < 2; ++i) {
    SceneLayer disk{smooth_texture(height, width, 0.7 + 1.5 * unit(rng), rng()), disparity(),
                    height * (0.2 + 0.6 * unit(rng)), width * (0.2 + 0.6 * unit(rng)),
                    size * (0.12 + 0.2 * unit(rng))};
    layers.push_back(std::move(disk));
  }
  return layered_light_field(layers, n, height, width);
}

}  // namespace lumos
