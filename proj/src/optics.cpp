#include "lumos/optics.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include <Eigen/Dense>
#include "lumos/convolution.hpp"
#include "lumos/fft.hpp"
#include "lumos/image_io.hpp"

namespace lumos {

double OpticalConfig::nominal_image_distance() const {
  return 1.0 / (1.0 / focal_length - 1.0 / object_distance);
}

double OpticalConfig::pixel_pitch(double image_distance) const {
  return oversampling * wavelength * image_distance / (pupil_grid * sample_pitch());
}

double OpticalConfig::shift_per_psi(int cells) const {
  return 4.0 * pupil_grid / (static_cast<double>(pupil_samples) * cells * oversampling);
}

void OpticalConfig::validate() const {
  require(wavelength > 0 && focal_length > 0 && object_distance > 0 && pupil_extent > 0, Errc::NonPositiveDistance,
          "wavelength, focal length, object distance and pupil extent must be positive");
  require(object_distance > focal_length, Errc::NonPositiveDistance,
          "object distance must exceed the focal length for a real conjugate image");
  require(pupil_grid >= 2 && std::has_single_bit(static_cast<unsigned>(pupil_grid)), Errc::BadConfig,
          "pupil_grid must be a power of two");
  require(pupil_samples >= 1 && pupil_samples <= pupil_grid && (pupil_grid - pupil_samples) % 2 == 0,
          Errc::BadConfig, "pupil_samples must fit centered inside pupil_grid");
  require(aperture_resolution >= 1 && aperture_resolution <= pupil_samples &&
              pupil_samples % aperture_resolution == 0,
          Errc::BadConfig, "pupil_samples must be a multiple of aperture_resolution");
  require(oversampling >= 1 && pupil_grid % oversampling == 0 && pupil_grid / oversampling >= 1, Errc::BadConfig,
          "oversampling must divide pupil_grid");
}

DefocusSpec defocus_coefficient(const OpticalConfig& cfg, double image_distance) {
  require(image_distance > 0.0, Errc::NonPositiveDistance, "image distance must be positive");
  const double r = cfg.pupil_extent / 2.0;
  const double bracket = 1.0 / cfg.object_distance + 1.0 / image_distance - 1.0 / cfg.focal_length;
  return {bracket * r * r / cfg.wavelength, image_distance, cfg};
}

DefocusSpec defocus_from_psi(const OpticalConfig& cfg, double psi) {
  const double r = cfg.pupil_extent / 2.0;
  const double inverse = psi * cfg.wavelength / (r * r) - 1.0 / cfg.object_distance + 1.0 / cfg.focal_length;
  require(inverse > 0.0, Errc::NonPositiveDistance, "psi " + std::to_string(psi) + " implies no real image plane");
  return {psi, 1.0 / inverse, cfg};
}

PupilGrid PupilGrid::from_map(Tensor t, const OpticalConfig& cfg) {
  cfg.validate();
  const int d = cfg.pupil_grid;
  require(t.shape() == Shape{d, d}, Errc::ShapeMismatch, "pupil map must be " + shape_string({d, d}));
  const int lo = cfg.region_offset();
  const int hi = lo + cfg.pupil_samples;
  for (int y = 0; y < d; ++y) {
    for (int x = 0; x < d; ++x) {
      const double v = t.at(y, x);
      require(v >= 0.0 && v <= 1.0, Errc::BadRange, "pupil transmittance outside [0,1]");
      const bool inside = y >= lo && y < hi && x >= lo && x < hi;
      require(inside || v == 0.0, Errc::OutOfPupil, "pupil transmittance outside the aperture region");
    }
  }
  return PupilGrid(std::move(t), cfg);
}

PupilGrid rect_pupil(const OpticalConfig& cfg, int cells, AngularIndex index, int width) {
  cfg.validate();
  require(cells >= 1 && cfg.pupil_samples % cells == 0, Errc::BadConfig,
          "pupil_samples must be a multiple of the cell count " + std::to_string(cells));
  require(width >= 1, Errc::BadRange, "rect width must be positive");
  const int q = cfg.pupil_samples / cells;
  // Block start in samples, doubled so even widths stay exact.
  const int start2_y = (2 * index.s + 1 - width) * q;
  const int start2_x = (2 * index.t + 1 - width) * q;
  require(start2_y % 2 == 0 && start2_x % 2 == 0, Errc::BadConfig, "rect edges fall between pupil samples");
  const int y0 = start2_y / 2, x0 = start2_x / 2, span = width * q;
  require(y0 >= 0 && x0 >= 0 && y0 + span <= cfg.pupil_samples && x0 + span <= cfg.pupil_samples, Errc::OutOfPupil,
          "rect of width " + std::to_string(width) + " at (" + std::to_string(index.s) + "," +
              std::to_string(index.t) + ") leaves the aperture region");
  Tensor t({cfg.pupil_grid, cfg.pupil_grid});
  const int off = cfg.region_offset();
  for (int y = y0; y < y0 + span; ++y) {
    for (int x = x0; x < x0 + span; ++x) t.at(off + y, off + x) = 1.0;
  }
  return PupilGrid::from_map(std::move(t), cfg);
}

Tensor upsample_cells(const Tensor& cells, const OpticalConfig& cfg) {
  require(cells.rank() == 2 && cells.dim(0) == cells.dim(1), Errc::ShapeMismatch, "aperture must be square");
  const int l = cells.dim(0);
  require(cfg.pupil_samples % l == 0, Errc::BadConfig, "pupil_samples must be a multiple of the aperture size");
  const int q = cfg.pupil_samples / l;
  const int off = cfg.region_offset();
  Tensor t({cfg.pupil_grid, cfg.pupil_grid});
  for (int y = 0; y < cfg.pupil_samples; ++y) {
    for (int x = 0; x < cfg.pupil_samples; ++x) t.at(off + y, off + x) = cells.at(y / q, x / q);
  }
  return t;
}

Tensor upsample_cells_adjoint(const Tensor& grad, const OpticalConfig& cfg, int cells) {
  const int q = cfg.pupil_samples / cells;
  const int off = cfg.region_offset();
  Tensor out({cells, cells});
  for (int y = 0; y < cfg.pupil_samples; ++y) {
    for (int x = 0; x < cfg.pupil_samples; ++x) out.at(y / q, x / q) += grad.at(off + y, off + x);
  }
  return out;
}

PupilGrid embed_coded_aperture(const Tensor& values, const OpticalConfig& cfg) {
  cfg.validate();
  for (double v : values.values()) require(v >= 0.0 && v <= 1.0, Errc::BadRange, "aperture values outside [0,1]");
  return PupilGrid::from_map(upsample_cells(values, cfg), cfg);
}

CTensor defocus_phase(const OpticalConfig& cfg, double psi) {
  const int d = cfg.pupil_grid;
  const double center = (d - 1) / 2.0;
  const double half = cfg.pupil_samples / 2.0;
  std::vector<double> r2(d);
  for (int i = 0; i < d; ++i) {
    const double u = (i - center) / half;
    r2[i] = u * u;
  }
  CTensor out({d, d});
  for (int y = 0; y < d; ++y) {
    for (int x = 0; x < d; ++x) out.at(y, x) = std::polar(1.0, std::numbers::pi * psi * (r2[y] + r2[x]));
  }
  return out;
}

namespace {

// Per fine index along one axis: lower coarse index and the weight sent to
// the next one.
struct SplatAxis {
  std::vector<int> lower;
  std::vector<double> frac;
};

// `shift` maps a storage index k to the centered index (k + shift) mod fine.
SplatAxis splat_axis(int fine, int factor, int shift = 0) {
  const int coarse = fine / factor;
  SplatAxis a{std::vector<int>(fine), std::vector<double>(fine)};
  for (int k = 0; k < fine; ++k) {
    const int n = (k + shift) % fine;
    const double x = coarse / 2 + static_cast<double>(n - fine / 2) / factor;
    const double lo = std::floor(x);
    a.frac[k] = x - lo;
    a.lower[k] = ((static_cast<int>(lo) % coarse) + coarse) % coarse;
  }
  return a;
}

// Separable splat: columns into coarse bins per fine row, then rows.
Tensor splat_shifted(const Tensor& fine, int factor, int shift) {
  require(fine.rank() == 2 && fine.dim(0) % factor == 0 && fine.dim(1) % factor == 0, Errc::ShapeMismatch,
          "splat_downsample: factor must divide both axes");
  const int rows = fine.dim(0), cols = fine.dim(1);
  const int cr = rows / factor, cc = cols / factor;
  const SplatAxis ay = splat_axis(rows, factor, shift), ax = splat_axis(cols, factor, shift);
  std::vector<double> partial(static_cast<std::size_t>(rows) * cc, 0.0);
  for (int y = 0; y < rows; ++y) {
    const double* src = fine.data() + static_cast<std::size_t>(y) * cols;
    double* dst = partial.data() + static_cast<std::size_t>(y) * cc;
    for (int x = 0; x < cols; ++x) {
      const int x0 = ax.lower[x];
      dst[x0] += (1 - ax.frac[x]) * src[x];
      dst[(x0 + 1) % cc] += ax.frac[x] * src[x];
    }
  }
  Tensor out({cr, cc});
  for (int y = 0; y < rows; ++y) {
    const double* src = partial.data() + static_cast<std::size_t>(y) * cc;
    double* d0 = out.data() + static_cast<std::size_t>(ay.lower[y]) * cc;
    double* d1 = out.data() + static_cast<std::size_t>((ay.lower[y] + 1) % cr) * cc;
    const double fy = ay.frac[y];
    for (int x = 0; x < cc; ++x) {
      d0[x] += (1 - fy) * src[x];
      d1[x] += fy * src[x];
    }
  }
  return out;
}

Tensor splat_shifted_adjoint(const Tensor& coarse, int factor, int shift) {
  const int cr = coarse.dim(0), cc = coarse.dim(1);
  const int rows = cr * factor, cols = cc * factor;
  const SplatAxis ay = splat_axis(rows, factor, shift), ax = splat_axis(cols, factor, shift);
  // Expand columns once per coarse row, then blend the two rows per fine row.
  std::vector<double> wide(static_cast<std::size_t>(cr) * cols);
  for (int y = 0; y < cr; ++y) {
    const double* src = coarse.data() + static_cast<std::size_t>(y) * cc;
    double* dst = wide.data() + static_cast<std::size_t>(y) * cols;
    for (int x = 0; x < cols; ++x) {
      const int x0 = ax.lower[x];
      dst[x] = (1 - ax.frac[x]) * src[x0] + ax.frac[x] * src[(x0 + 1) % cc];
    }
  }
  Tensor out({rows, cols});
  for (int y = 0; y < rows; ++y) {
    const double* w0 = wide.data() + static_cast<std::size_t>(ay.lower[y]) * cols;
    const double* w1 = wide.data() + static_cast<std::size_t>((ay.lower[y] + 1) % cr) * cols;
    const double fy = ay.frac[y];
    double* dst = out.data() + static_cast<std::size_t>(y) * cols;
    for (int x = 0; x < cols; ++x) dst[x] = (1 - fy) * w0[x] + fy * w1[x];
  }
  return out;
}

}  // namespace

Tensor splat_downsample(const Tensor& fine, int factor) { return splat_shifted(fine, factor, 0); }

Tensor splat_downsample_adjoint(const Tensor& coarse, int factor) {
  return splat_shifted_adjoint(coarse, factor, 0);
}

// For an even lattice, fft2c(x) = shift(DFT(shift(x))) / D, and the input
// shift only modulates the spectrum by a sign. Intensities therefore come
// from the plain DFT read with an index offset of D/2, which the splat
// absorbs. Rows outside the aperture band are zero and skip the row pass.
PupilResponse pupil_response(const Tensor& pupil, const CTensor& phase, const OpticalConfig& cfg) {
  const int d = cfg.pupil_grid, a = cfg.pupil_samples, off = cfg.region_offset();
  require(pupil.shape() == Shape{d, d} && phase.shape() == Shape{d, d}, Errc::ShapeMismatch,
          "pupil and phase must be {" + std::to_string(d) + "," + std::to_string(d) + "}");
  PupilResponse r;
  r.spectrum = CTensor({d, d});
  for (int y = off; y < off + a; ++y) {
    for (int x = off; x < off + a; ++x) r.spectrum.at(y, x) = pupil.at(y, x) * phase.at(y, x);
  }
  fft::transform_band(r.spectrum.data(), d, d, off, a, false);
  const double norm = 1.0 / (static_cast<double>(d) * d * cfg.region_area());
  Tensor intensity({d, d});
  for (std::size_t i = 0; i < intensity.size(); ++i) intensity[i] = std::norm(r.spectrum[i]) * norm;
  r.kernel = splat_shifted(intensity, cfg.oversampling, d / 2);
  return r;
}

Tensor pupil_response_grad(const Tensor& grad_kernel, const PupilResponse& r, const CTensor& phase,
                           const OpticalConfig& cfg) {
  const int d = cfg.pupil_grid, a = cfg.pupil_samples, off = cfg.region_offset();
  const Tensor fine = splat_shifted_adjoint(grad_kernel, cfg.oversampling, d / 2);
  const double norm = 2.0 / (static_cast<double>(d) * d * cfg.region_area());
  CTensor z({d, d});
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = norm * fine[i] * r.spectrum[i];
  // The unnormalized inverse DFT is the adjoint of the unnormalized forward one.
  fft::transform_band(z.data(), d, d, off, a, true);
  Tensor out({d, d});
  for (int y = off; y < off + a; ++y) {
    for (int x = off; x < off + a; ++x) out.at(y, x) = (std::conj(phase.at(y, x)) * z.at(y, x)).real();
  }
  return out;
}

namespace {

using CMatrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMatrixMap = Eigen::Map<CMatrix>;
using ConstCMatrixMap = Eigen::Map<const CMatrix>;

void check_cells(const Tensor& cells, const CTensor& basis, const OpticalConfig& cfg) {
  require(cells.rank() == 2 && cells.dim(0) == cells.dim(1), Errc::ShapeMismatch, "aperture must be square");
  require(basis.shape() == Shape{cells.dim(0), cfg.pupil_grid}, Errc::ShapeMismatch,
          "cell basis " + shape_string(basis.shape()) + " does not match a " + std::to_string(cells.dim(0)) +
              "-cell aperture");
}

}  // namespace

CTensor cell_basis(const OpticalConfig& cfg, int cells, double psi) {
  cfg.validate();
  require(cells >= 1 && cfg.pupil_samples % cells == 0, Errc::BadConfig,
          "pupil_samples must be a multiple of the cell count " + std::to_string(cells));
  const int d = cfg.pupil_grid, off = cfg.region_offset(), q = cfg.pupil_samples / cells;
  const double center = (d - 1) / 2.0, half = cfg.pupil_samples / 2.0;
  CTensor basis({cells, d});
  for (int a = 0; a < cells; ++a) {
    for (int j = 0; j < q; ++j) {
      const int u = off + a * q + j;
      const double r = (u - center) / half;
      const Complex phase = std::polar(1.0, std::numbers::pi * psi * r * r);
      for (int k = 0; k < d; ++k) {
        // reduce k*u mod d first so the twiddle angle stays small
        const int m = static_cast<int>((static_cast<long long>(k) * u) % d);
        basis.at(a, k) += phase * std::polar(1.0, -2.0 * std::numbers::pi * m / d);
      }
    }
  }
  return basis;
}

PupilResponse cell_response(const Tensor& cells, const CTensor& basis, const OpticalConfig& cfg) {
  check_cells(cells, basis, cfg);
  const int d = cfg.pupil_grid, l = cells.dim(0);
  const ConstCMatrixMap b(basis.data(), l, d);
  CMatrix c(l, l);
  for (int i = 0; i < l; ++i) {
    for (int j = 0; j < l; ++j) c(i, j) = cells.at(i, j);
  }
  const CMatrix cb = c * b;
  PupilResponse r;
  r.spectrum = CTensor({d, d});
  CMatrixMap(r.spectrum.data(), d, d).noalias() = b.transpose() * cb;
  const double norm = 1.0 / (static_cast<double>(d) * d * cfg.region_area());
  Tensor intensity({d, d});
  for (std::size_t i = 0; i < intensity.size(); ++i) intensity[i] = std::norm(r.spectrum[i]) * norm;
  r.kernel = splat_shifted(intensity, cfg.oversampling, d / 2);
  return r;
}

Tensor cell_response_grad(const Tensor& grad_kernel, const PupilResponse& r, const CTensor& basis,
                          const OpticalConfig& cfg) {
  const int d = cfg.pupil_grid, l = basis.dim(0);
  const Tensor fine = splat_shifted_adjoint(grad_kernel, cfg.oversampling, d / 2);
  const double norm = 2.0 / (static_cast<double>(d) * d * cfg.region_area());
  CMatrix z(d, d);
  for (int y = 0; y < d; ++y) {
    for (int x = 0; x < d; ++x) z(y, x) = norm * fine.at(y, x) * r.spectrum.at(y, x);
  }
  const ConstCMatrixMap b(basis.data(), l, d);
  const CMatrix bz = b.conjugate() * z;
  const CMatrix g = bz * b.adjoint();
  Tensor out({l, l});
  for (int i = 0; i < l; ++i) {
    for (int j = 0; j < l; ++j) out.at(i, j) = g(i, j).real();
  }
  return out;
}

PointSpreadFunction psf(const PupilGrid& pupil, const DefocusSpec& defocus) {
  const OpticalConfig& cfg = pupil.config();
  require(cfg == defocus.config, Errc::ConfigMismatch, "pupil and defocus were built from different configs");
  PointSpreadFunction h;
  h.kernel = pupil_response(pupil.transmittance(), defocus_phase(cfg, defocus.psi), cfg).kernel;
  h.total_energy = sum(h.kernel);
  h.psi = defocus.psi;
  return h;
}

std::pair<double, double> psf_centroid(const PointSpreadFunction& h) {
  const Tensor& k = h.kernel;
  const int rows = k.dim(0), cols = k.dim(1);
  // The kernel is one period of a DFT intensity: unwrap it around its peak
  // so sidelobes that wrapped past the window edge count on the correct side.
  int py = 0, px = 0;
  for (int y = 0; y < rows; ++y) {
    for (int x = 0; x < cols; ++x) {
      if (k.at(y, x) > k.at(py, px)) py = y, px = x;
    }
  }
  auto unwrap = [](int i, int peak, int n) {
    const int d = ((i - peak + n / 2) % n + n) % n - n / 2;
    return peak - n / 2 + d;
  };
  double sy = 0, sx = 0, total = 0;
  for (int y = 0; y < rows; ++y) {
    for (int x = 0; x < cols; ++x) {
      const double v = k.at(y, x);
      sy += v * unwrap(y, py, rows);
      sx += v * unwrap(x, px, cols);
      total += v;
    }
  }
  require(total > 0.0, Errc::DomainError, "centroid of an all-zero kernel");
  return {sy / total, sx / total};
}

Tensor convolve(const Tensor& image, const PointSpreadFunction& h) { return convolve_same(image, h.kernel); }

Tensor refocus_sum(std::span<const Tensor> images, std::span<const PointSpreadFunction> psfs) {
  require(images.size() == psfs.size() && !images.empty(), Errc::LengthMismatch,
          "refocus_sum needs one PSF per image (" + std::to_string(images.size()) + " images, " +
              std::to_string(psfs.size()) + " PSFs)");
  std::vector<Tensor> kernels;
  kernels.reserve(psfs.size());
  for (const auto& h : psfs) kernels.push_back(h.kernel);
  return convolve_sum(images, kernels);
}

namespace {

double bilinear(const Tensor& img, int c, double y, double x) {
  const int h = img.dim(1), w = img.dim(2);
  const double fy = std::floor(y), fx = std::floor(x);
  const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
  const double wy = y - fy, wx = x - fx;
  auto sample = [&](int yy, int xx) { return yy < 0 || xx < 0 || yy >= h || xx >= w ? 0.0 : img.at(c, yy, xx); };
  return (1 - wy) * ((1 - wx) * sample(y0, x0) + wx * sample(y0, x0 + 1)) +
         wy * ((1 - wx) * sample(y0 + 1, x0) + wx * sample(y0 + 1, x0 + 1));
}

}  // namespace

Tensor shift_and_add_oracle(const LightField& lf, const ViewSelection& selection, double slope) {
  const int n = lf.angular_resolution();
  const double center = (n - 1) / 2.0;
  require(std::abs(slope) * center < std::min(lf.height(), lf.width()), Errc::SlopeTooLarge,
          "slope " + std::to_string(slope) + " shifts views past the image");
  require(selection.size() > 0, Errc::LengthMismatch, "empty view selection");
  Tensor out = image(3, lf.height(), lf.width());
  for (const auto& a : selection.indices) {
    const Tensor& v = lf.view(a);
    const double dy = (a.s - center) * slope;
    const double dx = (a.t - center) * slope;
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < lf.height(); ++y) {
        for (int x = 0; x < lf.width(); ++x) out.at(c, y, x) += bilinear(v, c, y + dy, x + dx);
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(selection.size());
  for (double& v : out.values()) v *= inv;
  return out;
}

void write_psf(const std::filesystem::path& path, const PointSpreadFunction& h) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), Errc::Io, "cannot write " + path.string());
  std::ostringstream header;
  header.precision(17);
  header << "LUMOS-PSF " << h.kernel.dim(0) << " " << h.kernel.dim(1) << " " << h.psi << " " << h.total_energy
         << "\n";
  out << header.str();
  for (double v : h.kernel.values()) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    const unsigned char bytes[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                                    static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
    out.write(reinterpret_cast<const char*>(bytes), 4);
  }
}

void write_psf_png(const std::filesystem::path& path, const PointSpreadFunction& h) {
  double peak = 0.0;
  for (double v : h.kernel.values()) peak = std::max(peak, v);
  Tensor vis = h.kernel;
  if (peak > 0.0) {
    for (double& v : vis.values()) v /= peak;
  }
  write_png(path, vis, 16);
}

void write_aperture_csv(const std::filesystem::path& path, const Tensor& aperture) {
  std::ofstream out(path);
  require(static_cast<bool>(out), Errc::Io, "cannot write " + path.string());
  out.precision(17);
  for (int y = 0; y < aperture.dim(0); ++y) {
    for (int x = 0; x < aperture.dim(1); ++x) out << (x ? "," : "") << aperture.at(y, x);
    out << "\n";
  }
}

Tensor read_aperture_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), Errc::Io, "cannot read " + path.string());
  std::vector<double> values;
  int rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) values.push_back(std::stod(cell));
    ++rows;
  }
  require(rows > 0 && values.size() == static_cast<std::size_t>(rows) * rows, Errc::ShapeMismatch,
          path.string() + " is not a square aperture");
  return Tensor({rows, rows}, std::move(values));
}

}  // namespace lumos
