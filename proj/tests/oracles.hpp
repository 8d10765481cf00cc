// Reference implementations used as test oracles. They share no code with
// the library beyond the tensor container: direct loops, no FFTs, no caches.
#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "lumos/tensor.hpp"

namespace oracle {

using lumos::Complex;
using lumos::CTensor;
using lumos::Tensor;

inline Tensor random_image(int c, int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t({c, h, w});
  for (double& v : t.values()) v = u(rng);
  return t;
}

inline Tensor random_map(int h, int w, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t({h, w});
  for (double& v : t.values()) v = u(rng);
  return t;
}

// out(c,y,x) = sum_{i,j} k(i,j) img(c, y + kh/2 - i, x + kw/2 - j), zero outside.
inline Tensor direct_convolve(const Tensor& img, const Tensor& k) {
  const int C = img.dim(0), H = img.dim(1), W = img.dim(2), kh = k.dim(0), kw = k.dim(1);
  Tensor out(img.shape());
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double acc = 0.0;
        for (int i = 0; i < kh; ++i)
          for (int j = 0; j < kw; ++j) {
            const int yy = y + kh / 2 - i, xx = x + kw / 2 - j;
            if (yy >= 0 && yy < H && xx >= 0 && xx < W) acc += k.at(i, j) * img.at(c, yy, xx);
          }
        out.at(c, y, x) = acc;
      }
  return out;
}

// Brute-force unitary DFT with centered indices (index n maps to n - N/2).
inline CTensor centered_dft(const CTensor& x) {
  const int R = x.dim(0), C = x.dim(1);
  CTensor out({R, C});
  const double norm = 1.0 / std::sqrt(static_cast<double>(R) * C);
  for (int u = 0; u < R; ++u)
    for (int v = 0; v < C; ++v) {
      Complex acc{0.0, 0.0};
      for (int y = 0; y < R; ++y)
        for (int z = 0; z < C; ++z) {
          const double ph = -2.0 * std::numbers::pi *
                            (static_cast<double>((u - R / 2) * (y - R / 2)) / R +
                             static_cast<double>((v - C / 2) * (z - C / 2)) / C);
          acc += x.at(y, z) * std::polar(1.0, ph);
        }
      out.at(u, v) = acc * norm;
    }
  return out;
}

inline double psnr(const Tensor& a, const Tensor& b) {
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::clamp(a[i], 0.0, 1.0) - std::clamp(b[i], 0.0, 1.0);
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  return mse == 0.0 ? 100.0 : std::min(100.0, -10.0 * std::log10(mse));
}

// Textbook SSIM on the channel-mean gray image, evaluated window by window.
inline double ssim(const Tensor& a, const Tensor& b) {
  const int C = a.dim(0), H = a.dim(1), W = a.dim(2);
  auto gray = [&](const Tensor& t, int y, int x) {
    double s = 0.0;
    for (int c = 0; c < C; ++c) s += std::clamp(t.at(c, y, x), 0.0, 1.0);
    return s / C;
  };
  double w[11][11], total = 0.0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) total += w[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
  for (auto& row : w)
    for (double& v : row) v /= total;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double acc = 0.0;
  int count = 0;
  for (int y = 0; y + 11 <= H; ++y)
    for (int x = 0; x + 11 <= W; ++x) {
      double ma = 0, mb = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          ma += w[i][j] * gray(a, y + i, x + j);
          mb += w[i][j] * gray(b, y + i, x + j);
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double da = gray(a, y + i, x + j) - ma, db = gray(b, y + i, x + j) - mb;
          va += w[i][j] * da * da;
          vb += w[i][j] * db * db;
          cov += w[i][j] * da * db;
        }
      acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return acc / count;
}

}  // namespace oracle
