#include <cmath>

#include "lumos/metrics.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace lumos;
namespace ad = lumos::ad;

namespace {

// Weight maps are defined over the border-cropped ground truth.
WeightMaps cropped_weights(const std::vector<Tensor>& gt, double beta, int border) {
  std::vector<Tensor> inner;
  for (const Tensor& g : gt) inner.push_back(crop_border(g, border));
  return weight_maps(inner, beta);
}

}  // namespace

TEST_CASE("focus measure") {
  SUBCASE("constant image") {
    const Tensor u = focus_measure(image(3, 5, 6, 0.7));
    for (double v : u.values()) CHECK(v == 0.0);
  }
  SUBCASE("vertical step edge in one channel") {
    Tensor img = image(3, 4, 6);
    for (int y = 0; y < 4; ++y)
      for (int x = 3; x < 6; ++x) img.at(1, y, x) = 0.25;
    const Tensor u = focus_measure(img);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 6; ++x) CHECK(u.at(y, x) == (x == 2 ? 0.25 : 0.0));
  }
  SUBCASE("checkerboard") {
    Tensor img = image(3, 6, 6);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x) img.at(c, y, x) = (x + y) % 2;
    const Tensor u = focus_measure(img);
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 5; ++x) CHECK(u.at(y, x) == 6.0);
    CHECK(u.at(5, 5) == 0.0);  // both trailing differences are zero
    CHECK(u.at(5, 2) == 3.0);
  }
  SUBCASE("non-negative and zero only for constant images") {
    std::mt19937_64 rng(1);
    const Tensor u = focus_measure(oracle::random_image(3, 7, 7, rng));
    for (double v : u.values()) CHECK(v >= 0.0);
    CHECK(sum(u) > 0.0);
  }
}

TEST_CASE("weight maps") {
  std::mt19937_64 rng(2);
  const std::vector<Tensor> gt{oracle::random_image(3, 8, 8, rng), oracle::random_image(3, 8, 8, rng)};
  SUBCASE("beta 0 gives exact ones") {
    const WeightMaps w = weight_maps(gt, 0.0);
    REQUIRE(w.maps.size() == 2);
    for (const Tensor& m : w.maps) {
      CHECK(m.shape() == Shape{8, 8});
      for (double v : m.values()) CHECK(v == 1.0);
    }
  }
  SUBCASE("constant slice gives ones at any beta") {
    const WeightMaps w = weight_maps({image(3, 4, 4, 0.3)}, 2.0);
    for (double v : w.maps[0].values()) CHECK(v == 1.0);
  }
  SUBCASE("extremes map to 1 and e^beta") {
    Tensor img = image(3, 4, 4);
    img.at(0, 1, 1) = 1.0;  // U ranges over [0, 2]
    const Tensor m = weight_maps({img}, 2.0).maps[0];
    double lo = 1e9, hi = 0;
    for (double v : m.values()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    CHECK(lo == 1.0);
    CHECK(hi == doctest::Approx(std::exp(2.0)).epsilon(1e-15));
    CHECK(m.at(1, 1) == doctest::Approx(std::exp(2.0)));
    CHECK(m.at(1, 0) == doctest::Approx(std::exp(1.0)));  // U = 1 of 2
  }
  SUBCASE("entries bounded and monotone in beta") {
    const WeightMaps w1 = weight_maps(gt, 1.0), w2 = weight_maps(gt, 2.0);
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t i = 0; i < w1.maps[j].size(); ++i) {
        CHECK(w1.maps[j][i] >= 1.0);
        CHECK(w1.maps[j][i] <= std::exp(1.0) * (1 + 1e-15));
        CHECK(w2.maps[j][i] >= w1.maps[j][i]);
      }
  }
}

TEST_CASE("weighted L1") {
  SUBCASE("hand-evaluated 2x2 toy") {
    Tensor gen = image(3, 2, 2), gt = image(3, 2, 2);
    gen.at(0, 0, 1) = 1.0;
    gen.at(1, 0, 1) = 1.0;
    gen.at(2, 0, 1) = 1.0;
    gen.at(0, 1, 0) = 1.0;
    gen.at(1, 1, 0) = 1.0;
    gen.at(2, 1, 0) = 1.0;
    WeightMaps w;
    w.beta = 2.0;
    w.maps = {Tensor({2, 2}, std::vector<double>{1.0, std::exp(2.0), 1.0, 1.0})};
    CHECK(weighted_l1({gen}, {gt}, w, 0) == doctest::Approx((std::exp(2.0) + 1) / 4).epsilon(1e-15));
  }
  std::mt19937_64 rng(3);
  std::vector<Tensor> gen, gt;
  for (int j = 0; j < 3; ++j) {
    gen.push_back(oracle::random_image(3, 10, 9, rng));
    gt.push_back(oracle::random_image(3, 10, 9, rng));
  }
  SUBCASE("identical stacks give 0") { CHECK(weighted_l1(gt, gt, cropped_weights(gt, 2.0, 1), 1) == 0.0); }
  SUBCASE("beta 0 equals plain L1 bit-for-bit") {
    const double a = weighted_l1(gen, gt, cropped_weights(gt, 0.0, 2), 2);
    const double b = l1_loss(gen, gt, 2);
    CHECK(a == b);
    double ref = 0;
    for (int j = 0; j < 3; ++j) {
      const Tensor d = crop_border(gen[j], 2), g = crop_border(gt[j], 2);
      for (std::size_t i = 0; i < d.size(); ++i) ref += std::abs(d[i] - g[i]);
    }
    CHECK(b == doctest::Approx(ref / (3.0 * 3 * 6 * 5)).epsilon(1e-14));
  }
  SUBCASE("graph version agrees and is differentiable") {
    const WeightMaps w = cropped_weights(gt, 2.0, 1);
    std::vector<ad::Var> vars;
    for (const Tensor& g : gen) vars.push_back(ad::parameter(g));
    const ad::Var loss = weighted_l1(vars, gt, w, 1);
    CHECK(loss->value[0] == doctest::Approx(weighted_l1(gen, gt, w, 1)).epsilon(1e-14));
    const auto r = ad::grad_check([&](const std::vector<ad::Var>& x) { return weighted_l1(x, gt, w, 1); }, gen);
    CHECK(r.max_relative_error < 1e-4);
  }
  SUBCASE("beta 0 graph loss equals plain L1 bit-for-bit") {
    std::vector<ad::Var> vars;
    for (const Tensor& g : gen) vars.push_back(ad::constant(g));
    CHECK(weighted_l1(vars, gt, cropped_weights(gt, 0.0, 2), 2)->value[0] == l1_loss(gen, gt, 2));
  }
  SUBCASE("errors") {
    CHECK_ERRC(weighted_l1(gen, {gt[0]}, weight_maps({gt[0]}, 0.0), 0), Errc::ShapeMismatch);
    CHECK_ERRC(l1_loss(gen, gt, 5), Errc::ShapeMismatch);
    CHECK_ERRC(weight_maps(gt, -1.0), Errc::NonNegativeBetaRequired);
    CHECK_ERRC(weighted_l1(gen, gt, cropped_weights(gt, 0.0, 0), 1), Errc::ShapeMismatch);
  }
}

TEST_CASE("gradient descent on a frozen toy does not increase the loss") {
  std::mt19937_64 rng(4);
  const std::vector<Tensor> gt{oracle::random_image(3, 8, 8, rng)};
  const WeightMaps w = weight_maps(gt, 2.0);
  for (double lr : {1e-4, 3e-4, 1e-3}) {
    Tensor x = oracle::random_image(3, 8, 8, rng);
    double prev = weighted_l1({x}, gt, w, 0);
    for (int it = 0; it < 5; ++it) {
      const ad::Var leaf = ad::parameter(x);
      ad::backward(weighted_l1(std::vector<ad::Var>{leaf}, gt, w, 0));
      for (std::size_t i = 0; i < x.size(); ++i) x[i] -= lr * leaf->grad[i] * static_cast<double>(x.size());
      const double now = weighted_l1({x}, gt, w, 0);
      CHECK(now <= prev);
      prev = now;
    }
  }
}

TEST_CASE("psnr") {
  const Tensor a = image(3, 6, 6, 0.3);
  CHECK(psnr(a, a) == kPsnrCap);
  CHECK(psnr(a, image(3, 6, 6, 0.4)) == doctest::Approx(20.0).epsilon(1e-12));
  std::mt19937_64 rng(5);
  for (int i = 0; i < 10; ++i) {
    const Tensor x = oracle::random_image(3, 16, 12, rng), y = oracle::random_image(3, 16, 12, rng);
    CHECK(std::abs(psnr(x, y, 2) - oracle::psnr(crop_border(x, 2), crop_border(y, 2))) <= 1e-9);
    CHECK(psnr(x, y) == psnr(y, x));
  }
  // clamping: values above 1 count as 1
  CHECK(psnr(image(3, 4, 4, 1.5), image(3, 4, 4, 1.0)) == kPsnrCap);
  CHECK_ERRC(psnr(a, image(3, 6, 5)), Errc::ShapeMismatch);
}

TEST_CASE("ssim") {
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  std::mt19937_64 rng(6);
  const Tensor x = oracle::random_image(3, 20, 20, rng);
  CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-12));
  // constant 0 vs constant 1: luminance term C1 / (1 + C1), structure term 1
  CHECK(ssim(image(3, 16, 16, 0.0), image(3, 16, 16, 1.0)) == doctest::Approx(c1 / (1 + c1)).epsilon(1e-12));
  (void)c2;
  for (int i = 0; i < 10; ++i) {
    const Tensor a = oracle::random_image(3, 24, 20, rng), b = oracle::random_image(3, 24, 20, rng);
    CHECK(std::abs(ssim(a, b, 1) - oracle::ssim(crop_border(a, 1), crop_border(b, 1))) <= 1e-4);
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-14));
  }
  CHECK_ERRC(ssim(image(3, 8, 8), image(3, 8, 8)), Errc::ImageTooSmall);
}
