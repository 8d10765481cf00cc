#include <cmath>

#include "lumos/encoder.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace lumos;
namespace ad = lumos::ad;

namespace {

EncoderConfig tiny(int n, int k, int blocks) {
  EncoderConfig c;
  c.views = n;
  c.images = k;
  c.channels = 4;
  c.blocks = blocks;
  return c;
}

std::vector<Tensor> random_views(int n, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Tensor> v;
  for (int i = 0; i < n; ++i) v.push_back(oracle::random_image(3, h, w, rng));
  return v;
}

}  // namespace

TEST_CASE("same seed gives identical weights, different seeds differ") {
  const EncoderConfig c = tiny(2, 3, 2);
  const EncoderWeights a = init_weights(c, 5);
  const EncoderWeights b = init_weights(c, 5);
  const EncoderWeights other = init_weights(c, 6);
  const auto ta = a.tensors(), tb = b.tensors(), to = other.tensors();
  REQUIRE(ta.size() == tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) CHECK(*ta[i] == *tb[i]);
  CHECK(*ta[0] != *to[0]);
}

TEST_CASE("He-normal statistics") {
  EncoderConfig c;
  c.views = 4;
  c.images = 4;
  c.channels = 64;
  c.blocks = 1;
  const EncoderWeights w = init_weights(c, 1);
  auto stats = [](const Tensor& t) {
    double m = 0, v = 0;
    for (double x : t.values()) m += x;
    m /= static_cast<double>(t.size());
    for (double x : t.values()) v += (x - m) * (x - m);
    return std::pair{m, v / static_cast<double>(t.size())};
  };
  // block conv: fan_in = 64 * 9, 36864 draws
  const double fan_in = 64 * 9;
  const auto [m, v] = stats(w.blocks[0].first.weight);
  CHECK(std::abs(m) < 0.05 * std::sqrt(2 / fan_in));
  CHECK(v == doctest::Approx(2 / fan_in).epsilon(0.05));
  const auto [mi, vi] = stats(w.input.weight);  // fan_in = 12 * 9
  CHECK(vi == doctest::Approx(2.0 / 108).epsilon(0.05));
  (void)mi;
  for (const Tensor* t : {&w.input.bias, &w.output.bias, &w.blocks[0].first.bias})
    for (double x : t->values()) CHECK(x == 0.0);
}

TEST_CASE("shapes and parameter layout") {
  const EncoderConfig c = tiny(4, 4, 0);
  const EncoderWeights w = init_weights(c, 2);
  CHECK(w.blocks.empty());
  CHECK(w.tensors().size() == 4);
  CHECK(w.input.weight.shape() == Shape{4, 12, 3, 3});
  CHECK(w.output.weight.shape() == Shape{12, 4, 3, 3});
  CHECK(w.parameter_count() == 4 * 12 * 9 + 4 + 12 * 4 * 9 + 12);
  CHECK(init_weights(tiny(4, 4, 3), 2).tensors().size() == 4 + 3 * 4);

  const auto out = encode(random_views(4, 9, 7, 3), w);
  REQUIRE(out.size() == 4);
  for (const Tensor& t : out) CHECK(t.shape() == Shape{3, 9, 7});
  // output count is k regardless of n
  const auto out2 = encode(random_views(1, 5, 5, 3), init_weights(tiny(1, 3, 1), 2));
  CHECK(out2.size() == 3);
}

TEST_CASE("default-sized encoder keeps 64x64x12 in and out") {
  EncoderConfig c;  // n = 4, k = 4, C = 64, 10 blocks
  c.blocks = 0;     // spatial and channel contract does not depend on depth
  const EncoderWeights w = init_weights(c, 1);
  const auto views = random_views(4, 64, 64, 1);
  const auto out = encode(views, w);
  REQUIRE(out.size() == 4);
  for (const Tensor& t : out) CHECK(t.shape() == Shape{3, 64, 64});
}

TEST_CASE("zero weights produce 0.5 everywhere") {
  EncoderWeights w = init_weights(tiny(2, 2, 2), 4);
  for (Tensor* t : w.tensors()) t->fill(0.0);
  for (const Tensor& t : encode(random_views(2, 6, 6, 4), w))
    for (double v : t.values()) CHECK(v == 0.5);
}

TEST_CASE("outputs lie strictly inside (0,1) and are deterministic") {
  const EncoderWeights w = init_weights(tiny(2, 2, 2), 7);
  const auto views = random_views(2, 8, 8, 8);
  const auto a = encode(views, w);
  const auto b = encode(views, w);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] == b[i]);
    for (double v : a[i].values()) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  }
  // graph and plain evaluation agree
  std::vector<ad::Var> vars;
  for (const Tensor& v : views) vars.push_back(ad::constant(v));
  const auto g = encode(vars, as_constants(w));
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(max_abs_diff(g[i]->value, a[i]) == 0.0);
}

TEST_CASE("encoder gradients pass grad_check") {
  const EncoderConfig c = tiny(2, 2, 1);
  EncoderWeights w = init_weights(c, 9);
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n;
  for (Tensor* t : w.tensors())
    if (t->rank() == 1)
      for (double& v : t->values()) v = 0.1 * n(rng);
  const auto views = random_views(2, 5, 5, 11);
  const auto target = random_views(2, 5, 5, 12);
  std::vector<Tensor> point;
  for (const Tensor* t : w.tensors()) point.push_back(*t);
  auto build = [&](const std::vector<ad::Var>& x) {
    EncoderParams p{c, x};
    std::vector<ad::Var> in;
    for (const Tensor& v : views) in.push_back(ad::constant(v));
    const auto out = encode(in, p);
    ad::Var loss = ad::sum(ad::mul(ad::sub(out[0], ad::constant(target[0])), ad::sub(out[0], ad::constant(target[0]))));
    return ad::add(loss, ad::sum(ad::mul_const(out[1], target[1])));
  };
  const ad::GradCheckResult r = ad::grad_check(build, point);
  CHECK(r.checks == w.parameter_count());
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("encoder config validation") {
  EncoderConfig c = tiny(2, 2, 0);
  c.kernel = 4;
  CHECK_ERRC(c.validate(), Errc::BadConfig);
  c = tiny(0, 2, 0);
  CHECK_ERRC(c.validate(), Errc::BadConfig);
  c = tiny(2, 2, -1);
  CHECK_ERRC(c.validate(), Errc::BadConfig);
  CHECK_ERRC(encode(random_views(3, 4, 4, 1), init_weights(tiny(2, 2, 0), 1)), Errc::ShapeMismatch);
}
