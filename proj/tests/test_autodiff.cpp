#include <cmath>

#include "lumos/autodiff.hpp"
#include "lumos/optics.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace lumos;
namespace ad = lumos::ad;

namespace {

// Generic scalar readout: sum(w * x) with a fixed random weight map.
ad::Var readout(const ad::Var& x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor w(x->shape());
  std::normal_distribution<double> n;
  for (double& v : w.values()) v = n(rng);
  return ad::sum(ad::mul_const(x, w));
}

Tensor normal_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = scale * n(rng);
  return t;
}

double check(const ad::GraphBuilder& build, const std::vector<Tensor>& point) {
  const ad::GradCheckResult r = ad::grad_check(build, point);
  REQUIRE(r.checks > 0);
  return r.max_relative_error;
}

OpticalConfig small_optics() {
  OpticalConfig cfg;
  cfg.pupil_grid = 32;
  cfg.pupil_samples = 18;
  cfg.oversampling = 4;
  cfg.aperture_resolution = 3;
  return cfg;
}

}  // namespace

TEST_CASE("x * x at 3 has derivative 6") {
  const ad::Var x = ad::parameter(Tensor({1}, 3.0));
  const ad::Var y = ad::sum(ad::mul(x, x));
  ad::backward(y);
  CHECK(y->value[0] == 9.0);
  CHECK(x->grad[0] == 6.0);
}

TEST_CASE("gradient of sum |U{P}|^2 is exactly 2P") {
  const Tensor p = normal_tensor({8, 8}, 5);
  const ad::Var leaf = ad::parameter(p);
  const ad::Var zero = ad::constant(Tensor({8, 8}));
  // P as a complex field: P * exp(i 0)
  const ad::Var field = ad::mul(leaf, ad::expi(zero));
  ad::backward(ad::sum(ad::abs2(ad::fft2c(field))));
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(leaf->grad[i] == doctest::Approx(2 * p[i]).epsilon(1e-13));
}

TEST_CASE("sigmoid derivative at 0 is 1/4") {
  const ad::Var x = ad::parameter(Tensor({1}, 0.0));
  ad::backward(ad::sum(ad::sigmoid(x)));
  CHECK(x->grad[0] == 0.25);
  const ad::Var y = ad::parameter(Tensor({1}, 0.0));
  ad::backward(ad::sum(ad::sigmoid(y, 10.0)));
  CHECK(y->grad[0] == 2.5);
}

TEST_CASE("repeated use accumulates and unused leaves get zero") {
  const ad::Var x = ad::parameter(Tensor({2}, 1.5));
  const ad::Var unused = ad::parameter(Tensor({2}, 4.0));
  ad::backward(ad::sum(ad::add(x, x)));
  CHECK(x->grad[0] == 2.0);
  CHECK(x->grad[1] == 2.0);
  const Tensor g = unused->grad_or_zero();
  CHECK(g.shape() == Shape{2});
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
}

TEST_CASE("backward errors") {
  CHECK_ERRC(ad::backward(ad::parameter(Tensor({2}, 1.0))), Errc::NonScalarLoss);
  CHECK_ERRC(ad::add(ad::parameter(Tensor({2})), ad::parameter(Tensor({3}))), Errc::ShapeMismatch);
  const ad::Var z = ad::expi(ad::constant(Tensor({2}, 0.3)));
  CHECK_ERRC(ad::relu(z), Errc::DomainError);
  CHECK_ERRC(ad::backward(ad::expi(ad::parameter(Tensor({1}, 0.3)))), Errc::NonScalarLoss);
}

TEST_CASE("backward is deterministic") {
  auto run = [] {
    const ad::Var x = ad::parameter(normal_tensor({3, 6, 6}, 9));
    const ad::Var k = ad::parameter(normal_tensor({3, 3}, 10));
    ad::backward(readout(ad::sigmoid(ad::convolve(x, k)), 11));
    return std::pair{x->grad, k->grad};
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("adam") {
  SUBCASE("first step with unit gradient moves by lr") {
    std::vector<Tensor> p{Tensor({1}, 0.0)};
    const std::vector<Tensor> g{Tensor({1}, 1.0)};
    ad::AdamState s = ad::adam_init(p);
    CHECK(s.hyper.lr == 1e-3);
    CHECK(s.hyper.beta1 == 0.9);
    CHECK(s.hyper.beta2 == 0.999);
    CHECK(s.hyper.eps == 1e-8);
    ad::adam_step(p, g, s);
    CHECK(p[0][0] == doctest::Approx(-0.001 / (1 + 1e-8)).epsilon(1e-12));
    CHECK(s.step_count == 1);
  }
  SUBCASE("zero gradient is a fixed point") {
    std::vector<Tensor> p{normal_tensor({4}, 1)};
    const Tensor before = p[0];
    const std::vector<Tensor> g{Tensor({4})};
    ad::AdamState s = ad::adam_init(p);
    for (int i = 0; i < 5; ++i) ad::adam_step(p, g, s);
    CHECK(p[0] == before);
  }
  SUBCASE("ten constant-gradient steps follow the reference recurrence") {
    std::vector<Tensor> p{Tensor({1}, 0.0)};
    const std::vector<Tensor> g{Tensor({1}, 1.0)};
    ad::AdamState s = ad::adam_init(p);
    double m = 0, v = 0, ref = 0;
    for (int t = 1; t <= 10; ++t) {
      const double prev = p[0][0];
      ad::adam_step(p, g, s);
      m = 0.9 * m + 0.1;
      v = 0.999 * v + 0.001;
      ref -= 1e-3 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
      const double step = prev - p[0][0];
      CHECK(step >= 0.0009);
      CHECK(step <= 0.001);
      CHECK(p[0][0] == doctest::Approx(ref).epsilon(1e-12));
    }
    CHECK(s.step_count == 10);
  }
  SUBCASE("shape mismatch") {
    std::vector<Tensor> p{Tensor({2})};
    ad::AdamState s = ad::adam_init(p);
    const std::vector<Tensor> g{Tensor({3})};
    CHECK_ERRC(ad::adam_step(p, g, s), Errc::ShapeMismatch);
  }
}

TEST_CASE("grad_check on a quadratic form is exact to O(step^2)") {
  const Tensor a = normal_tensor({4, 4}, 3);
  auto build = [&](const std::vector<ad::Var>& x) {
    // x^T A x written with the vocabulary: sum over rows of (A x) * x
    ad::Var acc;
    for (int i = 0; i < 4; ++i) {
      Tensor row({4});
      for (int j = 0; j < 4; ++j) row[j] = a.at(i, j);
      Tensor pick({4});
      pick[i] = 1.0;
      const ad::Var ax_i = ad::sum(ad::mul_const(x[0], row));
      const ad::Var x_i = ad::sum(ad::mul_const(x[0], pick));
      const ad::Var term = ad::mul(ax_i, x_i);
      acc = acc ? ad::add(acc, term) : term;
    }
    return acc;
  };
  ad::GradCheckOptions o;
  o.step = 1e-4;
  CHECK(ad::grad_check(build, {normal_tensor({4}, 4)}, o).max_relative_error < 1e-8);
}

TEST_CASE("grad_check flags relu at its kink") {
  auto build = [](const std::vector<ad::Var>& x) { return ad::sum(ad::relu(x[0])); };
  CHECK(ad::grad_check(build, {Tensor({1}, 0.0)}).max_relative_error > 0.1);
  CHECK(ad::grad_check(build, {Tensor({1}, 0.5)}).max_relative_error < 1e-8);
}

TEST_CASE("every operator passes grad_check at smooth points") {
  const double tol = 1e-4;
  const Tensor a = normal_tensor({2, 5, 4}, 21);
  const Tensor b = normal_tensor({2, 5, 4}, 22);

  CHECK(check([](auto& x) { return readout(ad::add(x[0], x[1]), 1); }, {a, b}) < tol);
  CHECK(check([](auto& x) { return readout(ad::sub(x[0], x[1]), 2); }, {a, b}) < tol);
  CHECK(check([](auto& x) { return readout(ad::mul(x[0], x[1]), 3); }, {a, b}) < tol);
  CHECK(check([](auto& x) { return readout(ad::scale(x[0], -2.5), 4); }, {a}) < tol);
  CHECK(check([](auto& x) { return readout(ad::relu(x[0]), 5); }, {a}) < tol);
  CHECK(check([](auto& x) { return readout(ad::sigmoid(x[0], 3.0), 6); }, {a}) < tol);
  CHECK(check([](auto& x) { return ad::mean(ad::mul(x[0], x[0])); }, {a}) < tol);
  CHECK(check([](auto& x) { return ad::sum(ad::l1_distance(x[0], x[1])); }, {a, b}) < tol);
  CHECK(check([](auto& x) { return readout(ad::crop_border(x[0], 1), 7); }, {a}) < tol);
  CHECK(check([](auto& x) { return readout(ad::concat_channels({x[0], x[1], x[0]}), 8); }, {a, b}) < tol);
  CHECK(check(
            [](auto& x) {
              const auto parts = ad::split_channels(x[0], 1);
              return ad::add(readout(parts[0], 9), ad::sum(ad::mul(parts[1], parts[1])));
            },
            {a}) < tol);

  const Tensor map = normal_tensor({5, 6}, 23);
  CHECK(check([](auto& x) { return readout(ad::flip(x[0], true, false), 10); }, {map}) < tol);
  CHECK(check([](auto& x) { return readout(ad::flip(x[0], true, true), 11); }, {map}) < tol);

  // complex chain: expi, complex multiply, fft2c, ifft2c, abs2
  const Tensor phase = normal_tensor({6, 6}, 24);
  const Tensor amp = normal_tensor({6, 6}, 25);
  CHECK(check(
            [](auto& x) {
              const ad::Var z = ad::mul(x[1], ad::expi(x[0]));
              const ad::Var w = ad::mul(ad::fft2c(z), ad::expi(ad::scale(x[0], 0.5)));
              return readout(ad::abs2(ad::ifft2c(w)), 12);
            },
            {phase, amp}) < tol);

  const Tensor img = normal_tensor({3, 7, 6}, 26);
  const Tensor k = normal_tensor({4, 3}, 27);
  CHECK(check([](auto& x) { return readout(ad::convolve(x[0], x[1]), 13); }, {img, k}) < tol);

  const Tensor w = normal_tensor({2, 3, 3, 3}, 28, 0.3);
  const Tensor bias = normal_tensor({2}, 29);
  CHECK(check([](auto& x) { return readout(ad::conv_layer(x[0], x[1], x[2]), 14); }, {img, w, bias}) < tol);

  const Tensor img2 = normal_tensor({3, 7, 6}, 30);
  const Tensor k2 = normal_tensor({3, 3}, 31);
  const Tensor k3 = normal_tensor({3, 3}, 32);
  CHECK(check(
            [](auto& x) {
              const auto out = ad::convolve_bank({x[0], x[1]}, {{x[2], x[3]}, {x[3], x[2]}});
              return ad::add(readout(out[0], 15), readout(out[1], 16));
            },
            {img, img2, k2, k3}) < tol);
}

TEST_CASE("optics operators pass grad_check") {
  const OpticalConfig cfg = small_optics();
  const Tensor cells = normal_tensor({3, 3}, 40);
  CHECK(check([&](auto& x) { return readout(ad::upsample_cells(x[0], cfg), 17); }, {cells}) < 1e-4);
  const Tensor fine = normal_tensor({32, 32}, 41);
  CHECK(check([](auto& x) { return readout(ad::splat_downsample(x[0], 4), 18); }, {fine}) < 1e-4);

  const auto phase = std::make_shared<const CTensor>(defocus_phase(cfg, 2.3));
  auto build = [&](const std::vector<ad::Var>& x) {
    const ad::Var pupil = ad::upsample_cells(ad::sigmoid(x[0]), cfg);
    return readout(ad::pupil_psf(pupil, phase, cfg), 19);
  };
  CHECK(check(build, {cells}) < 1e-4);

  // psf + convolve + L1 composite
  std::mt19937_64 rng(7);
  const Tensor target = oracle::random_image(3, 9, 9, rng);
  const Tensor img = oracle::random_image(3, 9, 9, rng);
  auto composite = [&](const std::vector<ad::Var>& x) {
    const ad::Var pupil = ad::upsample_cells(ad::sigmoid(x[0]), cfg);
    const ad::Var kernel = ad::pupil_psf(pupil, phase, cfg);
    const ad::Var out = ad::convolve(ad::mul(ad::constant(img), ad::sigmoid(x[1])), kernel);
    return ad::mean(ad::l1_distance(out, ad::constant(target)));
  };
  CHECK(check(composite, {cells, normal_tensor({3, 9, 9}, 42)}) < 1e-4);

  const Tensor pupil_map = upsample_cells(Tensor({3, 3}, 1.0), cfg);
  const ad::Var leaf = ad::parameter(pupil_map);
  ad::backward(ad::sum(ad::pupil_psf(leaf, phase, cfg)));
  // total energy is sum(P^2)/N_A, so its gradient is 2P/N_A
  for (std::size_t i = 0; i < pupil_map.size(); ++i)
    CHECK(leaf->grad[i] == doctest::Approx(2 * pupil_map[i] / cfg.region_area()).epsilon(1e-10));
}

TEST_CASE("cell_psf matches the pupil path and passes grad_check") {
  for (const auto& [cfg, l] : {std::pair{small_optics(), 3}, std::pair{OpticalConfig{}, 9}}) {
    for (double psi : {0.0, -7.5, 20.25}) {
      const Tensor cells = normal_tensor({l, l}, 50 + l);
      const auto basis = std::make_shared<const CTensor>(cell_basis(cfg, l, psi));
      const Tensor fast = cell_response(cells, *basis, cfg).kernel;
      const Tensor ref = pupil_response(upsample_cells(cells, cfg), defocus_phase(cfg, psi), cfg).kernel;
      double worst = 0, peak = 0;
      for (std::size_t i = 0; i < ref.size(); ++i) {
        worst = std::max(worst, std::abs(fast[i] - ref[i]));
        peak = std::max(peak, std::abs(ref[i]));
      }
      CHECK(worst <= 1e-12 * peak);
    }
  }
  const OpticalConfig cfg = small_optics();
  const auto basis = std::make_shared<const CTensor>(cell_basis(cfg, 3, 2.3));
  auto build = [&](const std::vector<ad::Var>& x) { return readout(ad::cell_psf(ad::sigmoid(x[0]), basis, cfg), 19); };
  CHECK(check(build, {normal_tensor({3, 3}, 43)}) < 1e-4);
  CHECK_ERRC(cell_response(Tensor({4, 4}, 1.0), *basis, cfg), Errc::ShapeMismatch);
  CHECK_ERRC(cell_basis(cfg, 4, 0.0), Errc::BadConfig);
}
