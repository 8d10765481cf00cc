#pragma once

#include <vector>

#include "lumos/autodiff.hpp"
#include "lumos/display.hpp"
#include "lumos/tensor.hpp"

namespace lumos {

/// Channel-summed |forward difference| along x plus along y; the trailing
/// row/column difference is zero. Returns {H,W}.
Tensor focus_measure(const Tensor& image);

struct WeightMaps {
  std::vector<Tensor> maps;  // one {H,W} map per slice, values in [1, e^beta]
  double beta = 0.0;
};

/// exp(beta * normalized focus measure) of each ground-truth slice, with the
/// normalization taken per slice over all of its pixels (all ones for a
/// constant slice).
WeightMaps weight_maps(const std::vector<Tensor>& gt_slices, double beta);

/// Mean over slices, pixels (after dropping `border`) and channels of
/// W_j * |generated_j - gt_j|.
double weighted_l1(const std::vector<Tensor>& generated, const std::vector<Tensor>& gt, const WeightMaps& weights,
                   int border);

/// Unweighted variant with the same summation order.
double l1_loss(const std::vector<Tensor>& generated, const std::vector<Tensor>& gt, int border);

/// Graph version of weighted_l1; the ground truth and weights are constants.
ad::Var weighted_l1(const std::vector<ad::Var>& generated, const std::vector<Tensor>& gt, const WeightMaps& weights,
                    int border);

/// PSNR reported when the inputs are identical.
inline constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE) after dropping `border` and clamping to [0,1]; capped.
double psnr(const Tensor& a, const Tensor& b, int border = 0);

/// Single-scale SSIM of the channel-mean gray images: 11x11 Gaussian
/// window (sigma 1.5), K1 = 0.01, K2 = 0.03, unit dynamic range, averaged
/// over valid window positions. Inputs are border-cropped then clamped.
double ssim(const Tensor& a, const Tensor& b, int border = 0);

}  // namespace lumos
