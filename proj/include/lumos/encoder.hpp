#pragma once

#include <cstdint>
#include <vector>

#include "lumos/autodiff.hpp"
#include "lumos/tensor.hpp"

namespace lumos {

struct EncoderConfig {
  int views = 4;      // n: input sub-aperture views
  int images = 4;     // k: encoded display images
  int channels = 64;  // internal feature width
  int blocks = 10;    // residual blocks
  int kernel = 3;     // spatial kernel size, odd

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

struct ConvWeights {
  Tensor weight;  // {Cout, Cin, k, k}
  Tensor bias;    // {Cout}
};

struct ResidualBlock {
  ConvWeights first;
  ConvWeights second;
};

/// Weights of the light field encoding network: input conv (3n -> C),
/// residual blocks (conv, relu, conv, plus skip), output conv (C -> 3k).
struct EncoderWeights {
  EncoderConfig config;
  ConvWeights input;
  std::vector<ResidualBlock> blocks;
  ConvWeights output;
  std::uint64_t init_seed = 0;

  /// Flat parameter order: input.w, input.b, then per block first.w,
  /// first.b, second.w, second.b, then output.w, output.b.
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  std::size_t parameter_count() const;
};

/// He-normal kernels (std = sqrt(2 / fan_in)), zero biases.
EncoderWeights init_weights(const EncoderConfig& config, std::uint64_t seed);

/// Graph handles for every weight tensor, in EncoderWeights::tensors() order.
struct EncoderParams {
  EncoderConfig config;
  std::vector<ad::Var> vars;
};

EncoderParams as_parameters(const EncoderWeights& weights);
EncoderParams as_constants(const EncoderWeights& weights);

/// n views {3,H,W} -> k images {3,H,W} in (0,1), recorded on the graph.
std::vector<ad::Var> encode(const std::vector<ad::Var>& views, const EncoderParams& params);

/// Plain evaluation of the network.
std::vector<Tensor> encode(const std::vector<Tensor>& views, const EncoderWeights& weights);

}  // namespace lumos
