#pragma once

#include <filesystem>
#include <span>

#include "lumos/lightfield.hpp"
#include "lumos/tensor.hpp"

namespace lumos {

/// Physical and sampling parameters of the eyepiece/relay model.
///
/// The pupil is sampled on a `pupil_grid` x `pupil_grid` lattice; the aperture
/// region occupies the central `pupil_samples` x `pupil_samples` block and is
/// `pupil_extent` meters wide. Point spread functions are computed on the
/// fine lattice that the DFT implies and then area-splatted down by
/// `oversampling` onto image pixels, so kernels are
/// (pupil_grid / oversampling) pixels wide.
///
/// Defaults are calibrated so that, for a 9 x 9 grid of pupil cells, one cell
/// of offset moves the PSF by one image pixel at psi = +-20.25.
struct OpticalConfig {
  double wavelength = 550e-9;
  double focal_length = 50e-3;
  double object_distance = 100e-3;
  double pupil_extent = 9e-3;
  int pupil_grid = 256;
  int pupil_samples = 144;
  int oversampling = 16;
  int aperture_resolution = 9;

  /// Unit-magnification relay; the image flip is absorbed into coordinates.
  static constexpr double magnification = -1.0;

  /// Image distance conjugate to object_distance.
  double nominal_image_distance() const;
  /// Pupil-plane distance between neighbouring samples, meters.
  double sample_pitch() const { return pupil_extent / pupil_samples; }
  int region_offset() const { return (pupil_grid - pupil_samples) / 2; }
  int kernel_size() const { return pupil_grid / oversampling; }
  /// Sample count of the aperture region; the PSF normalizer.
  double region_area() const { return static_cast<double>(pupil_samples) * pupil_samples; }
  /// Image-plane pixel pitch at image distance z_l (meters).
  double pixel_pitch(double image_distance) const;
  /// PSF displacement in pixels per unit psi, for a pupil offset of one
  /// cell of a `cells`-per-axis grid.
  double shift_per_psi(int cells) const;
  /// psi at which one cell of a `cells`-per-axis grid moves the PSF one pixel.
  double psi_for_unit_shift(int cells) const { return 1.0 / shift_per_psi(cells); }

  /// Throws BadConfig / NonPositiveDistance on inconsistent parameters.
  void validate() const;

  bool operator==(const OpticalConfig&) const = default;
};

/// Quadratic pupil phase of one focal slice: psi waves at the pupil edge.
struct DefocusSpec {
  double psi = 0.0;
  double image_distance = 0.0;
  OpticalConfig config;
};

/// psi = (1/lambda) (1/z_o + 1/z_l - 1/F) (pupil_extent/2)^2.
DefocusSpec defocus_coefficient(const OpticalConfig& cfg, double image_distance);
/// Inverse of defocus_coefficient.
DefocusSpec defocus_from_psi(const OpticalConfig& cfg, double psi);

/// Real pupil transmittance in [0,1] on the pupil_grid lattice, zero outside
/// the aperture region.
class PupilGrid {
 public:
  static PupilGrid from_map(Tensor transmittance, const OpticalConfig& cfg);

  const Tensor& transmittance() const noexcept { return transmittance_; }
  const OpticalConfig& config() const noexcept { return config_; }

 private:
  PupilGrid(Tensor t, const OpticalConfig& cfg) : transmittance_(std::move(t)), config_(cfg) {}

  Tensor transmittance_;
  OpticalConfig config_;
};

/// Open width x width block of cells centered on cell `index` of a grid with
/// `cells` cells per axis spanning the aperture region.
PupilGrid rect_pupil(const OpticalConfig& cfg, int cells, AngularIndex index, int width);

/// Nearest-neighbour replication of an l x l transmittance map over the
/// aperture region.
PupilGrid embed_coded_aperture(const Tensor& values, const OpticalConfig& cfg);

/// Replication used by embed_coded_aperture, without range checks, and its adjoint.
Tensor upsample_cells(const Tensor& cells, const OpticalConfig& cfg);
Tensor upsample_cells_adjoint(const Tensor& grad, const OpticalConfig& cfg, int cells);

/// exp(i pi psi (u^2 + v^2) / r^2) over the pupil lattice, u and v measured
/// from the aperture-region center, r = pupil_extent / 2.
CTensor defocus_phase(const OpticalConfig& cfg, double psi);

/// Area splatting of a centered fine map onto a grid `factor` times coarser.
/// Each fine sample is shared bilinearly between the two nearest coarse
/// centers per axis (periodically), which preserves total mass and centroid.
Tensor splat_downsample(const Tensor& fine, int factor);
Tensor splat_downsample_adjoint(const Tensor& coarse, int factor);

struct PointSpreadFunction {
  Tensor kernel;
  double total_energy = 0.0;
  double psi = 0.0;
};

/// |U{P exp(i phase)}|^2 / N_A with U the unitary centered DFT, splatted
/// onto image pixels. Total energy equals sum(P^2) / N_A.
PointSpreadFunction psf(const PupilGrid& pupil, const DefocusSpec& defocus);

/// Kernel of psf() computed from a raw pupil map (zero outside the aperture
/// region) and a phase from defocus_phase, keeping the uncentered fine
/// spectrum for the adjoint.
struct PupilResponse {
  Tensor kernel;
  CTensor spectrum;
};
PupilResponse pupil_response(const Tensor& pupil, const CTensor& phase, const OpticalConfig& cfg);

/// Gradient with respect to the pupil map, given the gradient with respect
/// to the kernel; zero outside the aperture region.
Tensor pupil_response_grad(const Tensor& grad_kernel, const PupilResponse& response, const CTensor& phase,
                           const OpticalConfig& cfg);

/// Same kernel for a pupil that is an l x l cell map (as embed_coded_aperture
/// builds). The defocus phase factors per axis, so the fine spectrum is
/// B^T C B with row a of the {l, pupil_grid} basis B the DFT of cell row a
/// under the 1-D phase.
CTensor cell_basis(const OpticalConfig& cfg, int cells, double psi);
PupilResponse cell_response(const Tensor& cells, const CTensor& basis, const OpticalConfig& cfg);
/// Gradient with respect to the l x l cell values.
Tensor cell_response_grad(const Tensor& grad_kernel, const PupilResponse& response, const CTensor& basis,
                          const OpticalConfig& cfg);
/// Kernel centroid (row, col) in pixels relative to the kernel center. The
/// kernel is treated as periodic and unwrapped around its peak.
std::pair<double, double> psf_centroid(const PointSpreadFunction& h);

/// Per-channel zero-padded "same" convolution of a {3,H,W} image.
Tensor convolve(const Tensor& image, const PointSpreadFunction& h);

/// Sum of convolve(images[i], psfs[i]); not clamped.
Tensor refocus_sum(std::span<const Tensor> images, std::span<const PointSpreadFunction> psfs);

/// Shift-and-add refocus: mean of the selected views, each translated by
/// -(offset from the grid center) * slope pixels with bilinear sampling and
/// zero fill. Independent of the optics; used for cross-validation.
Tensor shift_and_add_oracle(const LightField& lf, const ViewSelection& selection, double slope);

/// Binary float32 dump: a text header line
/// `LUMOS-PSF rows cols psi energy` followed by row-major little-endian floats.
void write_psf(const std::filesystem::path& path, const PointSpreadFunction& h);
/// 16-bit grayscale visualization normalized by the kernel maximum (lossy).
void write_psf_png(const std::filesystem::path& path, const PointSpreadFunction& h);
/// l x l CSV of transmittances.
void write_aperture_csv(const std::filesystem::path& path, const Tensor& aperture);
Tensor read_aperture_csv(const std::filesystem::path& path);

}  // namespace lumos
