#pragma once

#include <string>
#include <vector>

#include "lumos/autodiff.hpp"
#include "lumos/encoder.hpp"
#include "lumos/lightfield.hpp"
#include "lumos/optics.hpp"

namespace lumos {

struct FocalStackSpec {
  std::vector<double> psi;  // ascending defocus coefficients, one per slice

  /// m slices evenly spaced over [-psi_max, +psi_max]; {0} when m == 1.
  static FocalStackSpec linear(int m, double psi_max);
  int size() const noexcept { return static_cast<int>(psi.size()); }
  void validate() const;
};

/// psi_max at which one view step of an N-view grid shifts the PSF by one pixel.
double calibrated_psi_max(const OpticalConfig& cfg, int angular_resolution);

struct FocalStack {
  std::vector<Tensor> slices;  // unclamped {3,H,W}
  FocalStackSpec spec;
};

enum class ApertureMode { Continuous, BinaryRelaxed, BinaryFrozen };
enum class ApertureSymmetry { Free, Mirrored4 };

std::string to_string(ApertureMode m);
std::string to_string(ApertureSymmetry s);
ApertureMode parse_aperture_mode(const std::string& s);
ApertureSymmetry parse_aperture_symmetry(const std::string& s);

/// Learnable coded apertures. With Mirrored4 only the first aperture has
/// logits; the other three are derived as its left-right, top-bottom and
/// double mirror.
struct ApertureBank {
  std::vector<Tensor> logits;
  ApertureMode mode = ApertureMode::Continuous;
  double temperature = 10.0;
  ApertureSymmetry symmetry = ApertureSymmetry::Free;

  static ApertureBank zeros(int count, int resolution, ApertureMode mode, double temperature,
                            ApertureSymmetry symmetry);
  /// Number of apertures k (four when mirrored).
  int count() const;
  void validate() const;
};

/// Transmittances in [0,1]: continuous sigmoid(x); binary-relaxed
/// sigmoid(t x); binary-frozen 1 where sigmoid(x) > 0.5, else 0.
std::vector<Tensor> effective_apertures(const ApertureBank& bank);

/// Graph version for the trainable modes; `logits` parallel bank.logits.
/// Binary-frozen apertures come back as constants.
std::vector<ad::Var> effective_apertures(const std::vector<ad::Var>& logits, const ApertureBank& bank);

/// PSFs of the N x N single-cell rect pupils for one slice, row-major by
/// view. Memoized per (config, N, psi).
const std::vector<PointSpreadFunction>& cell_psfs(const OpticalConfig& cfg, int angular_resolution, double psi);

/// Every view through its own full-resolution cell, summed per slice.
FocalStack ground_truth_stack(const LightField& lf, const OpticalConfig& cfg, const FocalStackSpec& spec);

/// The selected views through their cells, scaled by N^2 / n so the
/// perceived brightness matches the dense field. Equals ground_truth_stack
/// when every view is selected.
FocalStack tdm_forward(const LightField& lf, const ViewSelection& selection, const OpticalConfig& cfg,
                       const FocalStackSpec& spec);

/// Differentiable PSF kernel of an l x l aperture at defocus psi.
ad::Var aperture_psf(const ad::Var& aperture, const OpticalConfig& cfg, double psi);
/// Same, starting from a pupil map already embedded on the pupil lattice.
ad::Var aperture_psf_from_pupil(const ad::Var& pupil, const OpticalConfig& cfg, double psi);

/// Sum over frames i of images[i] convolved with the PSF of apertures[i],
/// one graph output per slice.
std::vector<ad::Var> render_coded(const std::vector<ad::Var>& images, const std::vector<ad::Var>& apertures,
                                  const OpticalConfig& cfg, const FocalStackSpec& spec);

/// Encoder followed by the coded-aperture display, evaluated without a tape.
FocalStack ctdm_forward(const std::vector<Tensor>& views, const EncoderWeights& weights, const ApertureBank& bank,
                        const OpticalConfig& cfg, const FocalStackSpec& spec);

/// Coded display fed with given images (no encoder).
FocalStack coded_forward(const std::vector<Tensor>& images, const ApertureBank& bank, const OpticalConfig& cfg,
                         const FocalStackSpec& spec);

}  // namespace lumos
