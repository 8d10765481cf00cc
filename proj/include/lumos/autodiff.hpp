#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lumos/tensor.hpp"

namespace lumos {
struct OpticalConfig;
}

namespace lumos::ad {

struct Node;
using Var = std::shared_ptr<Node>;

/// One value in a define-by-run graph. The forward value is computed eagerly
/// when the node is created; `backward` pushes this node's adjoint into its
/// inputs.
///
/// Complex adjoints follow the Wirtinger convention for a real loss L:
/// grad = dL/dRe + i dL/dIm.
struct Node {
  std::string op;
  bool complex = false;
  bool requires_grad = false;
  Tensor value;
  CTensor cvalue;
  Tensor grad;    // allocated on first accumulation
  CTensor cgrad;  // allocated on first accumulation
  std::vector<Var> inputs;
  std::function<void(Node&)> backward;

  const Shape& shape() const { return complex ? cvalue.shape() : value.shape(); }
  bool has_grad() const { return complex ? !cgrad.empty() : !grad.empty(); }

  Tensor& grad_buffer();
  CTensor& cgrad_buffer();
  /// Adjoint, or zeros if nothing reached this node.
  Tensor grad_or_zero() const;
};

Var constant(Tensor value);
Var constant(CTensor value);
/// Leaf whose gradient backward() populates.
Var parameter(Tensor value);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// Elementwise product; either operand may be complex.
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// |z|^2, complex to real.
Var abs2(const Var& z);
/// Unitary centered 2-D DFT over the last two axes, and its inverse.
Var fft2c(const Var& z);
Var ifft2c(const Var& z);
/// exp(i phase), real to complex.
Var expi(const Var& phase);
/// Zero-padded "same" convolution of {C,H,W} with a shared {K,K} kernel.
Var convolve(const Var& image, const Var& kernel);
/// Network layer: {Cin,H,W} * {Cout,Cin,k,k} + {Cout}, zero-padded same.
Var conv_layer(const Var& x, const Var& weight, const Var& bias);
Var relu(const Var& x);
/// 1 / (1 + exp(-temperature * x)).
Var sigmoid(const Var& x, double temperature = 1.0);
Var concat_channels(const std::vector<Var>& parts);
/// Splits {C,H,W} into C / channels_each consecutive {channels_each,H,W} parts.
std::vector<Var> split_channels(const Var& x, int channels_each);
Var sum(const Var& x);
Var mean(const Var& x);
/// |a - b| elementwise (subgradient 0 where a == b).
Var l1_distance(const Var& a, const Var& b);
/// a times a constant map; an {H,W} map broadcasts over the channels of {C,H,W}.
Var mul_const(const Var& a, const Tensor& weights);
/// Drops `border` pixels from each side of the last two axes.
Var crop_border(const Var& x, int border);
/// Mirrors a {H,W} map left-right and/or top-bottom.
Var flip(const Var& x, bool horizontal, bool vertical);
/// Nearest-neighbour replication of an l x l map over the pupil region.
Var upsample_cells(const Var& cells, const OpticalConfig& cfg);
/// Mass- and centroid-preserving downsampling of a centered fine map.
Var splat_downsample(const Var& fine, int factor);

/// PSF kernel of a {D,D} pupil map under a fixed defocus phase; see
/// lumos::pupil_response.
Var pupil_psf(const Var& pupil, std::shared_ptr<const CTensor> phase, const OpticalConfig& cfg);
/// PSF kernel of an l x l cell aperture through a cached cell basis; equals
/// pupil_psf(upsample_cells(cells)) but costs O(l D^2) instead of an FFT.
Var cell_psf(const Var& cells, std::shared_ptr<const CTensor> basis, const OpticalConfig& cfg);
/// out[j] = sum_i convolve(images[i], kernels[j][i]), sharing image transforms.
std::vector<Var> convolve_bank(const std::vector<Var>& images, const std::vector<std::vector<Var>>& kernels);

/// Populates adjoints of every node reachable from `loss` that requires
/// a gradient. Repeated uses of a node accumulate.
void backward(const Var& loss);

/// Pipeline builder used by grad_check: maps parameter leaves to a scalar.
using GraphBuilder = std::function<Var(const std::vector<Var>&)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checks = 0;
};

struct GradCheckOptions {
  double step = 1e-5;
  /// Relative error uses max(|fd|, |ad|, abs_floor) as denominator.
  double abs_floor = 1e-6;
  /// Parameters with more coordinates than this are probed along random
  /// directions instead of per coordinate.
  std::size_t probe_threshold = std::numeric_limits<std::size_t>::max();
  int probes = 8;
  std::uint64_t seed = 0;
};

/// Central differences against backward() at `point`.
GradCheckResult grad_check(const GraphBuilder& build, const std::vector<Tensor>& point,
                           const GradCheckOptions& options = {});

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::int64_t step_count = 0;
  AdamHyper hyper;
};

AdamState adam_init(std::span<const Tensor> params, const AdamHyper& hyper = {});

/// Bias-corrected Adam update, eps added outside the square root.
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state);

}  // namespace lumos::ad
