#include "lumos/encoder.hpp"

#include <cmath>
#include <random>

namespace lumos {

void EncoderConfig::validate() const {
  require(views >= 1 && images >= 1, Errc::BadConfig, "encoder needs at least one input view and one output image");
  require(channels >= 1 && blocks >= 0, Errc::BadConfig, "encoder width must be positive, blocks non-negative");
  require(kernel >= 1 && kernel % 2 == 1, Errc::BadConfig, "encoder kernel size must be odd");
}

std::vector<Tensor*> EncoderWeights::tensors() {
  std::vector<Tensor*> out{&input.weight, &input.bias};
  for (auto& b : blocks) {
    out.insert(out.end(), {&b.first.weight, &b.first.bias, &b.second.weight, &b.second.bias});
  }
  out.insert(out.end(), {&output.weight, &output.bias});
  return out;
}

std::vector<const Tensor*> EncoderWeights::tensors() const {
  std::vector<const Tensor*> out;
  for (Tensor* t : const_cast<EncoderWeights*>(this)->tensors()) out.push_back(t);
  return out;
}

std::size_t EncoderWeights::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : tensors()) n += t->size();
  return n;
}

namespace {

ConvWeights he_conv(int cout, int cin, int k, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / (static_cast<double>(cin) * k * k)));
  ConvWeights c{Tensor({cout, cin, k, k}), Tensor({cout})};
  for (double& v : c.weight.values()) v = normal(rng);
  return c;
}

EncoderParams wrap(const EncoderWeights& weights, bool trainable) {
  EncoderParams p{weights.config, {}};
  for (const Tensor* t : weights.tensors()) p.vars.push_back(trainable ? ad::parameter(*t) : ad::constant(*t));
  return p;
}

}  // namespace

EncoderWeights init_weights(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  EncoderWeights w;
  w.config = config;
  w.init_seed = seed;
  const int c = config.channels, k = config.kernel;
  w.input = he_conv(c, 3 * config.views, k, rng);
  for (int b = 0; b < config.blocks; ++b) {
    ResidualBlock block;
    block.first = he_conv(c, c, k, rng);
    block.second = he_conv(c, c, k, rng);
    w.blocks.push_back(std::move(block));
  }
  w.output = he_conv(3 * config.images, c, k, rng);
  return w;
}

EncoderParams as_parameters(const EncoderWeights& weights) { return wrap(weights, true); }
EncoderParams as_constants(const EncoderWeights& weights) { return wrap(weights, false); }

std::vector<ad::Var> encode(const std::vector<ad::Var>& views, const EncoderParams& params) {
  const EncoderConfig& cfg = params.config;
  require(views.size() == static_cast<std::size_t>(cfg.views), Errc::ShapeMismatch,
          "encoder expects " + std::to_string(cfg.views) + " views, got " + std::to_string(views.size()));
  require(params.vars.size() == static_cast<std::size_t>(4 + 4 * cfg.blocks), Errc::ShapeMismatch,
          "encoder parameter count does not match its config");
  for (const auto& v : views) {
    require(v->value.rank() == 3 && v->value.dim(0) == 3 && v->value.shape() == views.front()->value.shape(),
            Errc::ShapeMismatch, "encoder views must share one {3,H,W} shape");
  }
  const auto& p = params.vars;
  ad::Var x = ad::relu(ad::conv_layer(ad::concat_channels(views), p[0], p[1]));
  for (int b = 0; b < cfg.blocks; ++b) {
    const std::size_t o = 2 + 4 * static_cast<std::size_t>(b);
    ad::Var y = ad::relu(ad::conv_layer(x, p[o], p[o + 1]));
    y = ad::conv_layer(y, p[o + 2], p[o + 3]);
    x = ad::add(x, y);
  }
  const std::size_t o = 2 + 4 * static_cast<std::size_t>(cfg.blocks);
  return ad::split_channels(ad::sigmoid(ad::conv_layer(x, p[o], p[o + 1])), 3);
}

std::vector<Tensor> encode(const std::vector<Tensor>& views, const EncoderWeights& weights) {
  std::vector<ad::Var> in;
  for (const Tensor& v : views) in.push_back(ad::constant(v));
  std::vector<Tensor> out;
  for (const auto& v : encode(in, as_constants(weights))) out.push_back(v->value);
  return out;
}

}  // namespace lumos
