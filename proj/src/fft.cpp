#include "lumos/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

namespace lumos::fft {
namespace {

enum class Kind { Full, Rows, Cols, R2C, C2R };

class PlanCache {
 public:
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  // Planning with FFTW_ESTIMATE leaves the scratch buffers untouched.
  fftw_plan get(Kind kind, int rows, int cols, int count, bool inverse) {
    std::lock_guard lock(mutex_);
    const auto key = std::make_tuple(kind, rows, cols, count, inverse);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    std::vector<Complex> scratch(static_cast<std::size_t>(rows) * cols);
    std::vector<double> real(static_cast<std::size_t>(rows) * cols);
    auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
    const int sign = inverse ? FFTW_BACKWARD : FFTW_FORWARD;
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fftw_plan plan = nullptr;
    switch (kind) {
      case Kind::Full: plan = fftw_plan_dft_2d(rows, cols, buf, buf, sign, flags); break;
      case Kind::Rows: plan = fftw_plan_many_dft(1, &cols, count, buf, nullptr, 1, cols, buf, nullptr, 1, cols, sign, flags); break;
      case Kind::Cols: plan = fftw_plan_many_dft(1, &rows, cols, buf, nullptr, cols, 1, buf, nullptr, cols, 1, sign, flags); break;
      case Kind::R2C: plan = fftw_plan_dft_r2c_2d(rows, cols, real.data(), buf, flags); break;
      case Kind::C2R: plan = fftw_plan_dft_c2r_2d(rows, cols, buf, real.data(), flags); break;
    }
    require(plan != nullptr, Errc::DomainError, "FFTW could not create a plan");
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  std::mutex mutex_;
  std::map<std::tuple<Kind, int, int, int, bool>, fftw_plan> plans_;
};

PlanCache& cache() {
  static PlanCache instance;
  return instance;
}

void shift_plane(const Complex* src, Complex* dst, int rows, int cols, int dy, int dx) {
  for (int y = 0; y < rows; ++y) {
    const int ty = (y + dy) % rows;
    for (int x = 0; x < cols; ++x) {
      dst[static_cast<std::size_t>(ty) * cols + (x + dx) % cols] = src[static_cast<std::size_t>(y) * cols + x];
    }
  }
}

CTensor centered(const CTensor& x, bool inverse) {
  require(x.rank() >= 2, Errc::ShapeMismatch, "fft2c needs rank >= 2");
  const int rows = x.dim(-2);
  const int cols = x.dim(-1);
  const std::size_t plane = static_cast<std::size_t>(rows) * cols;
  const double norm = 1.0 / std::sqrt(static_cast<double>(plane));
  CTensor out(x.shape());
  std::vector<Complex> work(plane);
  for (std::size_t p = 0; p < x.size() / plane; ++p) {
    shift_plane(x.data() + p * plane, work.data(), rows, cols, (rows + 1) / 2, (cols + 1) / 2);
    transform(work.data(), rows, cols, inverse);
    for (Complex& v : work) v *= norm;
    shift_plane(work.data(), out.data() + p * plane, rows, cols, rows / 2, cols / 2);
  }
  return out;
}

}  // namespace

void transform(Complex* plane, int rows, int cols, bool inverse) {
  auto* buf = reinterpret_cast<fftw_complex*>(plane);
  fftw_execute_dft(cache().get(Kind::Full, rows, cols, 0, inverse), buf, buf);
}

void transform_band(Complex* plane, int rows, int cols, int row0, int count, bool inverse) {
  auto* all = reinterpret_cast<fftw_complex*>(plane);
  auto* band = reinterpret_cast<fftw_complex*>(plane + static_cast<std::size_t>(row0) * cols);
  const fftw_plan row_pass = cache().get(Kind::Rows, rows, cols, count, inverse);
  const fftw_plan col_pass = cache().get(Kind::Cols, rows, cols, 0, inverse);
  if (!inverse) fftw_execute_dft(row_pass, band, band);
  fftw_execute_dft(col_pass, all, all);
  if (inverse) fftw_execute_dft(row_pass, band, band);
}

void forward_real(const double* in, Complex* out, int rows, int cols) {
  fftw_execute_dft_r2c(cache().get(Kind::R2C, rows, cols, 0, false), const_cast<double*>(in),
                       reinterpret_cast<fftw_complex*>(out));
}

void inverse_real(Complex* in, double* out, int rows, int cols) {
  fftw_execute_dft_c2r(cache().get(Kind::C2R, rows, cols, 0, true), reinterpret_cast<fftw_complex*>(in), out);
}

int good_size(int n) {
  for (int m = std::max(n, 1);; ++m) {
    int r = m;
    for (int p : {2, 3, 5}) {
      while (r % p == 0) r /= p;
    }
    if (r == 1) return m;
  }
}

CTensor shift_center(const CTensor& x, bool inverse) {
  const int rows = x.dim(-2);
  const int cols = x.dim(-1);
  const std::size_t plane = static_cast<std::size_t>(rows) * cols;
  CTensor out(x.shape());
  const int dy = inverse ? (rows + 1) / 2 : rows / 2;
  const int dx = inverse ? (cols + 1) / 2 : cols / 2;
  for (std::size_t p = 0; p < x.size() / plane; ++p) {
    shift_plane(x.data() + p * plane, out.data() + p * plane, rows, cols, dy, dx);
  }
  return out;
}

CTensor fft2c(const CTensor& x) { return centered(x, false); }
CTensor ifft2c(const CTensor& x) { return centered(x, true); }

}  // namespace lumos::fft
