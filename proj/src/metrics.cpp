#include "lumos/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lumos {

Tensor focus_measure(const Tensor& img) {
  require(img.rank() == 3, Errc::ShapeMismatch, "focus_measure takes {C,H,W}");
  const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
  Tensor u({h, w});
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double v = img.at(ch, y, x);
        const double gx = x + 1 < w ? img.at(ch, y, x + 1) - v : 0.0;
        const double gy = y + 1 < h ? img.at(ch, y + 1, x) - v : 0.0;
        u.at(y, x) += std::abs(gx) + std::abs(gy);
      }
    }
  }
  return u;
}

WeightMaps weight_maps(const std::vector<Tensor>& gt_slices, double beta) {
  require(beta >= 0.0, Errc::NonNegativeBetaRequired, "beta must be non-negative, got " + std::to_string(beta));
  WeightMaps out;
  out.beta = beta;
  for (const Tensor& slice : gt_slices) {
    Tensor u = focus_measure(slice);
    const auto [lo, hi] = std::minmax_element(u.values().begin(), u.values().end());
    const double min = *lo, range = *hi - *lo;
    for (double& v : u.values()) {
      const double normalized = range > 0.0 ? (v - min) / range : 0.0;
      v = std::exp(beta * normalized);
    }
    out.maps.push_back(std::move(u));
  }
  return out;
}

namespace {

// Shared accumulation: per-slice sums added in slice order, then one scale.
template <class Weight>
double mean_abs(const std::vector<Tensor>& generated, const std::vector<Tensor>& gt, int border, Weight weight) {
  require(generated.size() == gt.size() && !gt.empty(), Errc::ShapeMismatch, "stacks differ in slice count");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t j = 0; j < gt.size(); ++j) {
    require_same_shape(generated[j].shape(), gt[j].shape(), "weighted_l1 slice");
    const Tensor a = crop_border(generated[j], border);
    const Tensor b = crop_border(gt[j], border);
    const std::size_t plane = static_cast<std::size_t>(a.dim(1)) * a.dim(2);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += weight(j, i % plane) * std::abs(a[i] - b[i]);
    total = j == 0 ? acc : total + acc;
    count += a.size();
  }
  return total * (1.0 / static_cast<double>(count));
}

}  // namespace

double weighted_l1(const std::vector<Tensor>& generated, const std::vector<Tensor>& gt, const WeightMaps& weights,
                   int border) {
  require(weights.maps.size() == gt.size(), Errc::ShapeMismatch, "one weight map per slice required");
  for (const Tensor& m : weights.maps) {
    require(m.dim(0) == gt.front().dim(1) - 2 * border && m.dim(1) == gt.front().dim(2) - 2 * border,
            Errc::ShapeMismatch, "weight maps must match the border-cropped slices");
  }
  return mean_abs(generated, gt, border, [&](std::size_t j, std::size_t p) { return weights.maps[j][p]; });
}

double l1_loss(const std::vector<Tensor>& generated, const std::vector<Tensor>& gt, int border) {
  return mean_abs(generated, gt, border, [](std::size_t, std::size_t) { return 1.0; });
}

ad::Var weighted_l1(const std::vector<ad::Var>& generated, const std::vector<Tensor>& gt, const WeightMaps& weights,
                    int border) {
  require(generated.size() == gt.size() && weights.maps.size() == gt.size() && !gt.empty(), Errc::ShapeMismatch,
          "generated stack, ground truth and weights differ in slice count");
  ad::Var total;
  std::size_t count = 0;
  for (std::size_t j = 0; j < gt.size(); ++j) {
    require_same_shape(generated[j]->value.shape(), gt[j].shape(), "weighted_l1 slice");
    const ad::Var diff = ad::l1_distance(ad::crop_border(generated[j], border), ad::constant(crop_border(gt[j], border)));
    const ad::Var acc = ad::sum(ad::mul_const(diff, weights.maps[j]));
    total = total ? ad::add(total, acc) : acc;
    count += diff->value.size();
  }
  return ad::scale(total, 1.0 / static_cast<double>(count));
}

double psnr(const Tensor& a, const Tensor& b, int border) {
  require_same_shape(a.shape(), b.shape(), "psnr");
  const Tensor x = clamp01(crop_border(a, border));
  const Tensor y = clamp01(crop_border(b, border));
  double se = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) se += (x[i] - y[i]) * (x[i] - y[i]);
  const double mse = se / static_cast<double>(x.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace {

Tensor gray(const Tensor& t) {
  if (t.rank() == 2) return t;
  const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
  Tensor g({h, w});
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) g.at(y, x) += t.at(ch, y, x);
    }
  }
  for (double& v : g.values()) v /= c;
  return g;
}

// Valid-mode separable filtering with a normalized 1-D Gaussian.
Tensor filter_valid(const Tensor& img, const std::vector<double>& g) {
  const int k = static_cast<int>(g.size());
  const int h = img.dim(0), w = img.dim(1), oh = h - k + 1, ow = w - k + 1;
  Tensor rows({h, ow});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < k; ++i) acc += g[i] * img.at(y, x + i);
      rows.at(y, x) = acc;
    }
  }
  Tensor out({oh, ow});
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < k; ++i) acc += g[i] * rows.at(y + i, x);
      out.at(y, x) = acc;
    }
  }
  return out;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b, int border) {
  require_same_shape(a.shape(), b.shape(), "ssim");
  const Tensor x = gray(clamp01(crop_border(a, border)));
  const Tensor y = gray(clamp01(crop_border(b, border)));
  constexpr int kWindow = 11;
  constexpr double kSigma = 1.5;
  require(x.dim(0) >= kWindow && x.dim(1) >= kWindow, Errc::ImageTooSmall,
          "SSIM needs at least 11x11 pixels, got " + shape_string(x.shape()));
  std::vector<double> g(kWindow);
  double norm = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    g[i] = std::exp(-d * d / (2 * kSigma * kSigma));
    norm += g[i];
  }
  for (double& v : g) v /= norm;

  Tensor xx(x.shape()), yy(x.shape()), xy(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const Tensor mx = filter_valid(x, g), my = filter_valid(y, g);
  const Tensor sxx = filter_valid(xx, g), syy = filter_valid(yy, g), sxy = filter_valid(xy, g);
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double acc = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    acc += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return acc / static_cast<double>(mx.size());
}

}  // namespace lumos
