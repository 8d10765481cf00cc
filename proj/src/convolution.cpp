#include "lumos/convolution.hpp"

#include "lumos/fft.hpp"

namespace lumos {
namespace {

// Padded transform grid for H x W images and Kh x Kw kernels. Any size of at
// least H+Kh-1 by W+Kw-1 keeps the circular product free of wrap-around
// inside the windows that are read back.
struct Grid {
  int height, width, kh, kw, rows, cols;
  std::size_t plane() const { return static_cast<std::size_t>(rows) * cols; }
  std::size_t half() const { return static_cast<std::size_t>(rows) * (cols / 2 + 1); }
};

using Spectrum = std::vector<Complex>;

Grid grid_for(const Shape& image, int kh, int kw) {
  require(image.size() == 3, Errc::ShapeMismatch, "image must be {C,H,W}, got " + shape_string(image));
  require(kh >= 1 && kw >= 1, Errc::ShapeMismatch, "kernel must be non-empty");
  return {image[1], image[2], kh, kw, fft::good_size(image[1] + kh - 1), fft::good_size(image[2] + kw - 1)};
}

// Half spectrum of an h x w plane placed at (oy, ox) in the padded grid.
Spectrum spectrum(const Grid& g, const double* src, int h, int w, int oy, int ox) {
  std::vector<double> buf(g.plane(), 0.0);
  for (int y = 0; y < h; ++y) {
    std::copy(src + static_cast<std::size_t>(y) * w, src + static_cast<std::size_t>(y + 1) * w,
              buf.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(y + oy) * g.cols + ox));
  }
  Spectrum out(g.half());
  fft::forward_real(buf.data(), out.data(), g.rows, g.cols);
  return out;
}

Spectrum kernel_spectrum(const Grid& g, const Tensor& kernel) {
  require(kernel.rank() == 2 && kernel.dim(0) == g.kh && kernel.dim(1) == g.kw, Errc::ShapeMismatch,
          "kernel must be {" + std::to_string(g.kh) + "," + std::to_string(g.kw) + "}, got " +
              shape_string(kernel.shape()));
  return spectrum(g, kernel.data(), g.kh, g.kw, 0, 0);
}

// Inverts `spec` (consumed) and writes the oh x ow window starting at (oy, ox).
void read_window(const Grid& g, Spectrum& spec, int oy, int ox, int oh, int ow, double* dst) {
  std::vector<double> buf(g.plane());
  fft::inverse_real(spec.data(), buf.data(), g.rows, g.cols);
  const double scale = 1.0 / static_cast<double>(g.plane());
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      dst[static_cast<std::size_t>(y) * ow + x] = buf[static_cast<std::size_t>(y + oy) * g.cols + x + ox] * scale;
    }
  }
}

std::size_t plane_of(const Grid& g) { return static_cast<std::size_t>(g.height) * g.width; }

// Spectra of every channel of `image`, placed at (oy, ox).
std::vector<Spectrum> channel_spectra(const Grid& g, const Tensor& image, int oy, int ox) {
  std::vector<Spectrum> out;
  for (int c = 0; c < image.dim(0); ++c) {
    out.push_back(spectrum(g, image.data() + c * plane_of(g), g.height, g.width, oy, ox));
  }
  return out;
}

}  // namespace

Tensor convolve_same(const Tensor& image, const Tensor& kernel) {
  require(kernel.rank() == 2, Errc::ShapeMismatch, "kernel must be {Kh,Kw}");
  const Grid g = grid_for(image.shape(), kernel.dim(0), kernel.dim(1));
  const Spectrum k = kernel_spectrum(g, kernel);
  Tensor out(image.shape());
  for (int c = 0; c < image.dim(0); ++c) {
    Spectrum s = spectrum(g, image.data() + c * plane_of(g), g.height, g.width, 0, 0);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] *= k[i];
    read_window(g, s, g.kh / 2, g.kw / 2, g.height, g.width, out.data() + c * plane_of(g));
  }
  return out;
}

Tensor convolve_same_grad_image(const Tensor& grad_out, const Tensor& kernel) {
  require(kernel.rank() == 2, Errc::ShapeMismatch, "kernel must be {Kh,Kw}");
  const Grid g = grid_for(grad_out.shape(), kernel.dim(0), kernel.dim(1));
  const Spectrum k = kernel_spectrum(g, kernel);
  Tensor out(grad_out.shape());
  for (int c = 0; c < grad_out.dim(0); ++c) {
    Spectrum s = spectrum(g, grad_out.data() + c * plane_of(g), g.height, g.width, g.kh / 2, g.kw / 2);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] *= std::conj(k[i]);
    read_window(g, s, 0, 0, g.height, g.width, out.data() + c * plane_of(g));
  }
  return out;
}

Tensor convolve_same_grad_kernel(const Tensor& grad_out, const Tensor& image, int kernel_h, int kernel_w) {
  require_same_shape(grad_out.shape(), image.shape(), "convolve_same_grad_kernel");
  const Grid g = grid_for(image.shape(), kernel_h, kernel_w);
  Spectrum acc(g.half());
  for (int c = 0; c < image.dim(0); ++c) {
    const Spectrum gs = spectrum(g, grad_out.data() + c * plane_of(g), g.height, g.width, g.kh / 2, g.kw / 2);
    const Spectrum fs = spectrum(g, image.data() + c * plane_of(g), g.height, g.width, 0, 0);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += gs[i] * std::conj(fs[i]);
  }
  Tensor out({kernel_h, kernel_w});
  read_window(g, acc, 0, 0, kernel_h, kernel_w, out.data());
  return out;
}

Tensor convolve_sum(std::span<const Tensor> images, std::span<const Tensor> kernels) {
  require(images.size() == kernels.size(), Errc::LengthMismatch,
          "convolve_sum needs matching image and kernel lists");
  return convolve_bank(images, {std::vector<Tensor>(kernels.begin(), kernels.end())}).front();
}

std::vector<Tensor> convolve_bank(std::span<const Tensor> images, const std::vector<std::vector<Tensor>>& kernels) {
  require(!images.empty() && !kernels.empty(), Errc::LengthMismatch, "convolve_bank needs images and kernels");
  const Shape& shape = images.front().shape();
  const Grid g = grid_for(shape, kernels.front().front().dim(0), kernels.front().front().dim(1));
  std::vector<std::vector<Spectrum>> img;
  for (const Tensor& im : images) {
    require_same_shape(im.shape(), shape, "convolve_bank image");
    img.push_back(channel_spectra(g, im, 0, 0));
  }
  std::vector<Tensor> out;
  for (const auto& row : kernels) {
    require(row.size() == images.size(), Errc::LengthMismatch, "one kernel per image required");
    std::vector<Spectrum> ks;
    for (const Tensor& k : row) ks.push_back(kernel_spectrum(g, k));
    Tensor slice(shape);
    for (int c = 0; c < shape[0]; ++c) {
      Spectrum acc(g.half());
      for (std::size_t i = 0; i < images.size(); ++i) {
        const Spectrum& a = img[i][c];
        const Spectrum& b = ks[i];
        for (std::size_t p = 0; p < acc.size(); ++p) acc[p] += a[p] * b[p];
      }
      read_window(g, acc, g.kh / 2, g.kw / 2, g.height, g.width, slice.data() + c * plane_of(g));
    }
    out.push_back(std::move(slice));
  }
  return out;
}

BankGradient convolve_bank_grad(std::span<const Tensor> grads, std::span<const Tensor> images,
                                const std::vector<std::vector<Tensor>>& kernels, bool want_images,
                                bool want_kernels) {
  require(grads.size() == kernels.size() && !images.empty(), Errc::LengthMismatch,
          "convolve_bank_grad needs one gradient per output");
  const Shape& shape = images.front().shape();
  const Grid g = grid_for(shape, kernels.front().front().dim(0), kernels.front().front().dim(1));
  const int channels = shape[0];
  std::vector<std::vector<Spectrum>> gs;
  for (const Tensor& t : grads) gs.push_back(channel_spectra(g, t, g.kh / 2, g.kw / 2));

  BankGradient out;
  if (want_images) {
    std::vector<std::vector<Spectrum>> ks(kernels.size());
    for (std::size_t j = 0; j < kernels.size(); ++j) {
      for (const Tensor& k : kernels[j]) ks[j].push_back(kernel_spectrum(g, k));
    }
    for (std::size_t i = 0; i < images.size(); ++i) {
      Tensor gi(shape);
      for (int c = 0; c < channels; ++c) {
        Spectrum acc(g.half());
        for (std::size_t j = 0; j < kernels.size(); ++j) {
          const Spectrum& a = gs[j][c];
          const Spectrum& b = ks[j][i];
          for (std::size_t p = 0; p < acc.size(); ++p) acc[p] += a[p] * std::conj(b[p]);
        }
        read_window(g, acc, 0, 0, g.height, g.width, gi.data() + c * plane_of(g));
      }
      out.images.push_back(std::move(gi));
    }
  }
  if (want_kernels) {
    std::vector<std::vector<Spectrum>> img;
    for (const Tensor& im : images) img.push_back(channel_spectra(g, im, 0, 0));
    out.kernels.resize(kernels.size());
    for (std::size_t j = 0; j < kernels.size(); ++j) {
      for (std::size_t i = 0; i < images.size(); ++i) {
        Spectrum acc(g.half());
        for (int c = 0; c < channels; ++c) {
          const Spectrum& a = gs[j][c];
          const Spectrum& b = img[i][c];
          for (std::size_t p = 0; p < acc.size(); ++p) acc[p] += a[p] * std::conj(b[p]);
        }
        Tensor k({g.kh, g.kw});
        read_window(g, acc, 0, 0, g.kh, g.kw, k.data());
        out.kernels[j].push_back(std::move(k));
      }
    }
  }
  return out;
}

}  // namespace lumos
