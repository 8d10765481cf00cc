#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "lumos/error.hpp"

namespace lumos {

using Complex = std::complex<double>;
using Shape = std::vector<int>;

std::string shape_string(const Shape& shape);

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

/// Dense row-major array. Images are stored channel-first as {C, H, W};
/// single-channel maps as {H, W}.
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{})
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
  BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    require(data_.size() == shape_size(shape_), Errc::ShapeMismatch,
            "data length does not match shape " + shape_string(shape_));
  }

  const Shape& shape() const noexcept { return shape_; }
  int rank() const noexcept { return static_cast<int>(shape_.size()); }
  int dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis < 0 ? rank() + axis : axis)); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T& at(int y, int x) { return data_[static_cast<std::size_t>(y) * shape_[1] + x]; }
  const T& at(int y, int x) const { return data_[static_cast<std::size_t>(y) * shape_[1] + x]; }
  T& at(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }
  const T& at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const BasicTensor&) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<double>;
using CTensor = BasicTensor<Complex>;

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) {
    fail(Errc::ShapeMismatch, std::string(what) + ": " + shape_string(a) + " vs " + shape_string(b));
  }
}

Tensor image(int channels, int height, int width, double fill = 0.0);

double sum(const Tensor& t);
double max_abs_diff(const Tensor& a, const Tensor& b);
Tensor clamp01(const Tensor& t);
/// Removes `border` pixels from each side of the last two axes.
Tensor crop_border(const Tensor& t, int border);
/// Window of the last two axes starting at (y0, x0).
Tensor crop(const Tensor& t, int y0, int x0, int height, int width);
bool all_finite(const Tensor& t);

}  // namespace lumos
