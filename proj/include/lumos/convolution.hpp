#pragma once

#include <span>
#include <vector>

#include "lumos/tensor.hpp"

namespace lumos {

/// Zero-padded linear convolution of every channel of `image` ({C,H,W})
/// with one shared `kernel` ({Kh,Kw}), cropped to H x W. The kernel origin
/// sits at (Kh/2, Kw/2), so a unit sample there is the identity.
Tensor convolve_same(const Tensor& image, const Tensor& kernel);

/// Adjoint of convolve_same with respect to the image.
Tensor convolve_same_grad_image(const Tensor& grad_out, const Tensor& kernel);

/// Adjoint of convolve_same with respect to the kernel (summed over channels).
Tensor convolve_same_grad_kernel(const Tensor& grad_out, const Tensor& image, int kernel_h, int kernel_w);

/// Sum over i of convolve_same(images[i], kernels[i]), sharing transforms.
Tensor convolve_sum(std::span<const Tensor> images, std::span<const Tensor> kernels);

/// out[j] = sum over i of convolve_same(images[i], kernels[j][i]). Every image
/// is transformed once for all j.
std::vector<Tensor> convolve_bank(std::span<const Tensor> images, const std::vector<std::vector<Tensor>>& kernels);

struct BankGradient {
  std::vector<Tensor> images;                // empty unless requested
  std::vector<std::vector<Tensor>> kernels;  // [j][i], empty unless requested
};

/// Adjoints of convolve_bank given the output gradients grads[j].
BankGradient convolve_bank_grad(std::span<const Tensor> grads, std::span<const Tensor> images,
                                const std::vector<std::vector<Tensor>>& kernels, bool want_images,
                                bool want_kernels);

}  // namespace lumos
