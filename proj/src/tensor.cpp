#include "lumos/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace lumos {

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor image(int channels, int height, int width, double fill) {
  return Tensor({channels, height, width}, fill);
}

double sum(const Tensor& t) {
  double acc = 0.0;
  for (double v : t.values()) acc += v;
  return acc;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a.shape(), b.shape(), "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Tensor clamp01(const Tensor& t) {
  Tensor out = t;
  for (double& v : out.values()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

Tensor crop(const Tensor& t, int y0, int x0, int height, int width) {
  require(t.rank() >= 2, Errc::ShapeMismatch, "crop needs rank >= 2");
  const int h = t.dim(-2);
  const int w = t.dim(-1);
  require(y0 >= 0 && x0 >= 0 && height > 0 && width > 0 && y0 + height <= h && x0 + width <= w,
          Errc::ShapeMismatch, "crop window outside " + shape_string(t.shape()));
  Shape shape = t.shape();
  shape[shape.size() - 2] = height;
  shape[shape.size() - 1] = width;
  Tensor out(shape);
  const std::size_t planes = t.size() / (static_cast<std::size_t>(h) * w);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = t.data() + p * h * w;
    double* dst = out.data() + p * height * width;
    for (int y = 0; y < height; ++y) {
      std::copy_n(src + static_cast<std::size_t>(y0 + y) * w + x0, width, dst + static_cast<std::size_t>(y) * width);
    }
  }
  return out;
}

Tensor crop_border(const Tensor& t, int border) {
  if (border == 0) return t;
  return crop(t, border, border, t.dim(-2) - 2 * border, t.dim(-1) - 2 * border);
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.values().begin(), t.values().end(), [](double v) { return std::isfinite(v); });
}

}  // namespace lumos
