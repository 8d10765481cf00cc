#include "lumos/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_set>

#include "lumos/convolution.hpp"
#include "lumos/fft.hpp"
#include "lumos/optics.hpp"

namespace lumos::ad {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

void require_real(const Var& v, const char* op) {
  require(!v->complex, Errc::DomainError, std::string(op) + " takes a real input");
}

void require_complex(const Var& v, const char* op) {
  require(v->complex, Errc::DomainError, std::string(op) + " takes a complex input");
}

// Creates a node; inputs and the adjoint rule are kept only when some input
// needs a gradient, so constant subgraphs release intermediates early.
Var make(std::string op, Tensor value, std::vector<Var> inputs, std::function<void(Node&)> rule) {
  auto node = std::make_shared<Node>();
  node->op = std::move(op);
  node->value = std::move(value);
  node->requires_grad = std::any_of(inputs.begin(), inputs.end(), [](const Var& v) { return v->requires_grad; });
  if (node->requires_grad) {
    node->inputs = std::move(inputs);
    node->backward = std::move(rule);
  }
  return node;
}

Var make(std::string op, CTensor value, std::vector<Var> inputs, std::function<void(Node&)> rule) {
  Var node = make(std::move(op), Tensor{}, std::move(inputs), std::move(rule));
  node->complex = true;
  node->cvalue = std::move(value);
  return node;
}

void accumulate(const Var& target, const Tensor& delta) {
  if (!target->requires_grad) return;
  Tensor& g = target->grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

void accumulate(const Var& target, const CTensor& delta) {
  if (!target->requires_grad) return;
  CTensor& g = target->cgrad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

template <class F>
Tensor map_real(const Tensor& x, F f) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

double stable_sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// im2col for a {Cin,H,W} input and a k x k window with zero padding k/2.
RowMatrix im2col(const Tensor& x, int k) {
  const int cin = x.dim(0), h = x.dim(1), w = x.dim(2), pad = k / 2;
  RowMatrix cols = RowMatrix::Zero(static_cast<Eigen::Index>(cin) * k * k, static_cast<Eigen::Index>(h) * w);
  for (int c = 0; c < cin; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = cols.row((c * k + ky) * k + kx).data();
        const int ylo = std::max(0, pad - ky), yhi = std::min(h, h + pad - ky);
        const int xlo = std::max(0, pad - kx), xhi = std::min(w, w + pad - kx);
        for (int y = ylo; y < yhi; ++y) {
          const double* src = &x.at(c, y + ky - pad, 0);
          double* dst = row + static_cast<std::size_t>(y) * w;
          for (int xx = xlo; xx < xhi; ++xx) dst[xx] = src[xx + kx - pad];
        }
      }
    }
  }
  return cols;
}

void col2im(const RowMatrix& cols, int k, Tensor& out) {
  const int cin = out.dim(0), h = out.dim(1), w = out.dim(2), pad = k / 2;
  for (int c = 0; c < cin; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = cols.row((c * k + ky) * k + kx).data();
        const int ylo = std::max(0, pad - ky), yhi = std::min(h, h + pad - ky);
        const int xlo = std::max(0, pad - kx), xhi = std::min(w, w + pad - kx);
        for (int y = ylo; y < yhi; ++y) {
          double* dst = &out.at(c, y + ky - pad, 0);
          const double* src = row + static_cast<std::size_t>(y) * w;
          for (int xx = xlo; xx < xhi; ++xx) dst[xx + kx - pad] += src[xx];
        }
      }
    }
  }
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.shape());
  return grad;
}

CTensor& Node::cgrad_buffer() {
  if (cgrad.empty()) cgrad = CTensor(cvalue.shape());
  return cgrad;
}

Tensor Node::grad_or_zero() const { return grad.empty() ? Tensor(value.shape()) : grad; }

Var constant(Tensor value) { return make("constant", std::move(value), {}, nullptr); }

Var constant(CTensor value) { return make("constant", std::move(value), {}, nullptr); }

Var parameter(Tensor value) {
  Var v = constant(std::move(value));
  v->op = "parameter";
  v->requires_grad = true;
  return v;
}

Var add(const Var& a, const Var& b) {
  require_real(a, "add");
  require_real(b, "add");
  require_same_shape(a->value.shape(), b->value.shape(), "add");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
  return make("add", std::move(out), {a, b}, [](Node& n) {
    accumulate(n.inputs[0], n.grad);
    accumulate(n.inputs[1], n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_real(a, "sub");
  require_real(b, "sub");
  require_same_shape(a->value.shape(), b->value.shape(), "sub");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b->value[i];
  return make("sub", std::move(out), {a, b}, [](Node& n) {
    accumulate(n.inputs[0], n.grad);
    accumulate(n.inputs[1], map_real(n.grad, [](double g) { return -g; }));
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a->shape(), b->shape(), "mul");
  if (!a->complex && !b->complex) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
    return make("mul", std::move(out), {a, b}, [](Node& n) {
      const Var &x = n.inputs[0], &y = n.inputs[1];
      if (x->requires_grad) {
        Tensor d(n.grad.shape());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = n.grad[i] * y->value[i];
        accumulate(x, d);
      }
      if (y->requires_grad) {
        Tensor d(n.grad.shape());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = n.grad[i] * x->value[i];
        accumulate(y, d);
      }
    });
  }
  auto as_complex = [](const Var& v) {
    if (v->complex) return v->cvalue;
    CTensor c(v->value.shape());
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = v->value[i];
    return c;
  };
  const CTensor ca = as_complex(a), cb = as_complex(b);
  CTensor out(ca.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ca[i] * cb[i];
  // For y = a b: a_bar = conj(b) y_bar (real part only when a is real).
  return make("mul", std::move(out), {a, b}, [ca, cb](Node& n) {
    auto push = [&n](const Var& target, const CTensor& other) {
      if (!target->requires_grad) return;
      if (target->complex) {
        CTensor d(other.shape());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::conj(other[i]) * n.cgrad[i];
        accumulate(target, d);
      } else {
        Tensor d(other.shape());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = (std::conj(other[i]) * n.cgrad[i]).real();
        accumulate(target, d);
      }
    };
    push(n.inputs[0], cb);
    push(n.inputs[1], ca);
  });
}

Var scale(const Var& a, double s) {
  if (a->complex) {
    CTensor out = a->cvalue;
    for (auto& v : out.values()) v *= s;
    return make("scale", std::move(out), {a}, [s](Node& n) {
      CTensor d = n.cgrad;
      for (auto& v : d.values()) v *= s;
      accumulate(n.inputs[0], d);
    });
  }
  return make("scale", map_real(a->value, [s](double v) { return v * s; }), {a},
              [s](Node& n) { accumulate(n.inputs[0], map_real(n.grad, [s](double g) { return g * s; })); });
}

Var abs2(const Var& z) {
  require_complex(z, "abs2");
  Tensor out(z->cvalue.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::norm(z->cvalue[i]);
  return make("abs2", std::move(out), {z}, [](Node& n) {
    const CTensor& zv = n.inputs[0]->cvalue;
    CTensor d(zv.shape());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = 2.0 * n.grad[i] * zv[i];
    accumulate(n.inputs[0], d);
  });
}

Var fft2c(const Var& z) {
  require_complex(z, "fft2c");
  return make("fft2c", fft::fft2c(z->cvalue), {z}, [](Node& n) { accumulate(n.inputs[0], fft::ifft2c(n.cgrad)); });
}

Var ifft2c(const Var& z) {
  require_complex(z, "ifft2c");
  return make("ifft2c", fft::ifft2c(z->cvalue), {z}, [](Node& n) { accumulate(n.inputs[0], fft::fft2c(n.cgrad)); });
}

Var expi(const Var& phase) {
  require_real(phase, "expi");
  CTensor out(phase->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::polar(1.0, phase->value[i]);
  return make("expi", std::move(out), {phase}, [](Node& n) {
    Tensor d(n.cvalue.shape());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = (n.cgrad[i] * std::conj(n.cvalue[i])).imag();
    accumulate(n.inputs[0], d);
  });
}

Var convolve(const Var& image, const Var& kernel) {
  require_real(image, "convolve");
  require_real(kernel, "convolve");
  return make("convolve", convolve_same(image->value, kernel->value), {image, kernel}, [](Node& n) {
    const Var &img = n.inputs[0], &ker = n.inputs[1];
    if (img->requires_grad) accumulate(img, convolve_same_grad_image(n.grad, ker->value));
    if (ker->requires_grad) {
      accumulate(ker, convolve_same_grad_kernel(n.grad, img->value, ker->value.dim(0), ker->value.dim(1)));
    }
  });
}

Var conv_layer(const Var& x, const Var& weight, const Var& bias) {
  require_real(x, "conv_layer");
  const Tensor& w = weight->value;
  require(x->value.rank() == 3 && w.rank() == 4 && w.dim(1) == x->value.dim(0) && w.dim(2) == w.dim(3) &&
              w.dim(2) % 2 == 1,
          Errc::ShapeMismatch,
          "conv_layer: input " + shape_string(x->value.shape()) + " weight " + shape_string(w.shape()));
  require(bias->value.shape() == Shape{w.dim(0)}, Errc::ShapeMismatch, "conv_layer bias must be {Cout}");
  const int cout = w.dim(0), k = w.dim(2), h = x->value.dim(1), wd = x->value.dim(2);
  const Eigen::Index hw = static_cast<Eigen::Index>(h) * wd;
  const Eigen::Index fan_in = static_cast<Eigen::Index>(w.dim(1)) * k * k;

  Tensor out({cout, h, wd});
  {
    const RowMatrix cols = im2col(x->value, k);
    MatrixMap y(out.data(), cout, hw);
    y.noalias() = ConstMatrixMap(w.data(), cout, fan_in) * cols;
    for (int o = 0; o < cout; ++o) y.row(o).array() += bias->value[o];
  }
  return make("conv_layer", std::move(out), {x, weight, bias}, [k, cout, hw, fan_in](Node& n) {
    const Var &in = n.inputs[0], &wt = n.inputs[1], &b = n.inputs[2];
    ConstMatrixMap g(n.grad.data(), cout, hw);
    if (b->requires_grad) {
      Tensor d({cout});
      // Plain loop: Eigen's packet reductions peel by address alignment,
      // which would make the summation order allocation-dependent.
      for (int o = 0; o < cout; ++o) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < hw; ++i) acc += g(o, i);
        d[o] = acc;
      }
      accumulate(b, d);
    }
    if (wt->requires_grad) {
      const RowMatrix cols = im2col(in->value, k);
      Tensor d(wt->value.shape());
      MatrixMap(d.data(), cout, fan_in).noalias() = g * cols.transpose();
      accumulate(wt, d);
    }
    if (in->requires_grad) {
      const RowMatrix dcols = ConstMatrixMap(wt->value.data(), cout, fan_in).transpose() * g;
      Tensor d(in->value.shape());
      col2im(dcols, k, d);
      accumulate(in, d);
    }
  });
}

Var relu(const Var& x) {
  require_real(x, "relu");
  return make("relu", map_real(x->value, [](double v) { return v > 0 ? v : 0.0; }), {x}, [](Node& n) {
    Tensor d(n.grad.shape());
    const Tensor& xv = n.inputs[0]->value;
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = xv[i] > 0 ? n.grad[i] : 0.0;
    accumulate(n.inputs[0], d);
  });
}

Var sigmoid(const Var& x, double temperature) {
  require_real(x, "sigmoid");
  return make("sigmoid", map_real(x->value, [temperature](double v) { return stable_sigmoid(temperature * v); }),
              {x}, [temperature](Node& n) {
                Tensor d(n.grad.shape());
                for (std::size_t i = 0; i < d.size(); ++i) {
                  const double s = n.value[i];
                  d[i] = n.grad[i] * temperature * s * (1.0 - s);
                }
                accumulate(n.inputs[0], d);
              });
}

Var concat_channels(const std::vector<Var>& parts) {
  require(!parts.empty(), Errc::LengthMismatch, "concat_channels of nothing");
  const Tensor& first = parts.front()->value;
  require(first.rank() == 3, Errc::ShapeMismatch, "concat_channels takes {C,H,W} parts");
  int channels = 0;
  for (const Var& p : parts) {
    require_real(p, "concat_channels");
    require(p->value.rank() == 3 && p->value.dim(1) == first.dim(1) && p->value.dim(2) == first.dim(2),
            Errc::ShapeMismatch, "concat_channels spatial size mismatch");
    channels += p->value.dim(0);
  }
  Tensor out({channels, first.dim(1), first.dim(2)});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::copy(p->value.values().begin(), p->value.values().end(), out.data() + offset);
    offset += p->value.size();
  }
  return make("concat_channels", std::move(out), parts, [](Node& n) {
    std::size_t off = 0;
    for (const Var& p : n.inputs) {
      if (p->requires_grad) {
        Tensor d(p->value.shape());
        std::copy_n(n.grad.data() + off, d.size(), d.data());
        accumulate(p, d);
      }
      off += p->value.size();
    }
  });
}

std::vector<Var> split_channels(const Var& x, int channels_each) {
  require_real(x, "split_channels");
  require(x->value.rank() == 3 && channels_each > 0 && x->value.dim(0) % channels_each == 0, Errc::ShapeMismatch,
          "split_channels: " + shape_string(x->value.shape()) + " into parts of " + std::to_string(channels_each));
  const int h = x->value.dim(1), w = x->value.dim(2);
  const std::size_t part = static_cast<std::size_t>(channels_each) * h * w;
  std::vector<Var> out;
  for (int p = 0; p < x->value.dim(0) / channels_each; ++p) {
    Tensor v({channels_each, h, w});
    std::copy_n(x->value.data() + p * part, part, v.data());
    out.push_back(make("split_channels", std::move(v), {x}, [p, part](Node& n) {
      Tensor d(n.inputs[0]->value.shape());
      std::copy_n(n.grad.data(), part, d.data() + p * part);
      accumulate(n.inputs[0], d);
    }));
  }
  return out;
}

Var sum(const Var& x) {
  require_real(x, "sum");
  return make("sum", Tensor({1}, lumos::sum(x->value)), {x}, [](Node& n) {
    accumulate(n.inputs[0], Tensor(n.inputs[0]->value.shape(), n.grad[0]));
  });
}

Var mean(const Var& x) {
  require_real(x, "mean");
  const double inv = 1.0 / static_cast<double>(x->value.size());
  return make("mean", Tensor({1}, lumos::sum(x->value) * inv), {x}, [inv](Node& n) {
    accumulate(n.inputs[0], Tensor(n.inputs[0]->value.shape(), n.grad[0] * inv));
  });
}

Var l1_distance(const Var& a, const Var& b) {
  require_real(a, "l1_distance");
  require_real(b, "l1_distance");
  require_same_shape(a->value.shape(), b->value.shape(), "l1_distance");
  Tensor out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(a->value[i] - b->value[i]);
  return make("l1_distance", std::move(out), {a, b}, [](Node& n) {
    const Tensor &av = n.inputs[0]->value, &bv = n.inputs[1]->value;
    Tensor d(av.shape());
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double diff = av[i] - bv[i];
      d[i] = diff > 0 ? n.grad[i] : (diff < 0 ? -n.grad[i] : 0.0);
    }
    accumulate(n.inputs[0], d);
    if (n.inputs[1]->requires_grad) accumulate(n.inputs[1], map_real(d, [](double g) { return -g; }));
  });
}

Var mul_const(const Var& a, const Tensor& weights) {
  require_real(a, "mul_const");
  const Tensor& v = a->value;
  std::size_t period = weights.size();
  const bool broadcast = weights.rank() == 2 && v.rank() == 3 && weights.dim(0) == v.dim(1) &&
                         weights.dim(1) == v.dim(2);
  require(broadcast || weights.shape() == v.shape(), Errc::ShapeMismatch,
          "mul_const: weights " + shape_string(weights.shape()) + " vs " + shape_string(v.shape()));
  Tensor out(v.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] * weights[i % period];
  return make("mul_const", std::move(out), {a}, [weights, period](Node& n) {
    Tensor d(n.grad.shape());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = n.grad[i] * weights[i % period];
    accumulate(n.inputs[0], d);
  });
}

Var crop_border(const Var& x, int border) {
  require_real(x, "crop_border");
  return make("crop_border", lumos::crop_border(x->value, border), {x}, [border](Node& n) {
    const Tensor& src = n.inputs[0]->value;
    Tensor d(src.shape());
    const int h = src.dim(-2), w = src.dim(-1), ch = h - 2 * border, cw = w - 2 * border;
    const std::size_t planes = src.size() / (static_cast<std::size_t>(h) * w);
    for (std::size_t p = 0; p < planes; ++p) {
      for (int y = 0; y < ch; ++y) {
        std::copy_n(n.grad.data() + (p * ch + y) * cw, cw, d.data() + (p * h + y + border) * w + border);
      }
    }
    accumulate(n.inputs[0], d);
  });
}

Var flip(const Var& x, bool horizontal, bool vertical) {
  require_real(x, "flip");
  require(x->value.rank() == 2, Errc::ShapeMismatch, "flip takes a {H,W} map");
  auto apply = [horizontal, vertical](const Tensor& t) {
    const int h = t.dim(0), w = t.dim(1);
    Tensor out(t.shape());
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) out.at(y, xx) = t.at(vertical ? h - 1 - y : y, horizontal ? w - 1 - xx : xx);
    }
    return out;
  };
  return make("flip", apply(x->value), {x}, [apply](Node& n) { accumulate(n.inputs[0], apply(n.grad)); });
}

Var upsample_cells(const Var& cells, const OpticalConfig& cfg) {
  require_real(cells, "upsample_cells");
  const int l = cells->value.dim(0);
  return make("upsample_cells", lumos::upsample_cells(cells->value, cfg), {cells}, [cfg, l](Node& n) {
    accumulate(n.inputs[0], upsample_cells_adjoint(n.grad, cfg, l));
  });
}

Var splat_downsample(const Var& fine, int factor) {
  require_real(fine, "splat_downsample");
  return make("splat_downsample", lumos::splat_downsample(fine->value, factor), {fine}, [factor](Node& n) {
    accumulate(n.inputs[0], splat_downsample_adjoint(n.grad, factor));
  });
}

Var cell_psf(const Var& cells, std::shared_ptr<const CTensor> basis, const OpticalConfig& cfg) {
  require_real(cells, "cell_psf");
  auto response = std::make_shared<PupilResponse>(cell_response(cells->value, *basis, cfg));
  Tensor kernel = response->kernel;
  if (!cells->requires_grad) response.reset();
  return make("cell_psf", std::move(kernel), {cells}, [response, basis, cfg](Node& n) {
    accumulate(n.inputs[0], cell_response_grad(n.grad, *response, *basis, cfg));
  });
}

Var pupil_psf(const Var& pupil, std::shared_ptr<const CTensor> phase, const OpticalConfig& cfg) {
  require_real(pupil, "pupil_psf");
  auto response = std::make_shared<PupilResponse>(pupil_response(pupil->value, *phase, cfg));
  Tensor kernel = response->kernel;
  if (!pupil->requires_grad) response.reset();
  return make("pupil_psf", std::move(kernel), {pupil}, [response, phase, cfg](Node& n) {
    accumulate(n.inputs[0], pupil_response_grad(n.grad, *response, *phase, cfg));
  });
}

std::vector<Var> convolve_bank(const std::vector<Var>& images, const std::vector<std::vector<Var>>& kernels) {
  require(!images.empty() && !kernels.empty(), Errc::LengthMismatch, "convolve_bank needs images and kernels");
  std::vector<Tensor> imgs;
  std::vector<std::vector<Tensor>> kers(kernels.size());
  std::vector<Var> inputs = images;
  for (const auto& im : images) {
    require_real(im, "convolve_bank");
    imgs.push_back(im->value);
  }
  for (std::size_t j = 0; j < kernels.size(); ++j) {
    require(kernels[j].size() == images.size(), Errc::LengthMismatch, "convolve_bank: one kernel per image");
    for (const auto& k : kernels[j]) {
      require_real(k, "convolve_bank");
      kers[j].push_back(k->value);
      inputs.push_back(k);
    }
  }
  const std::vector<Tensor> slices = lumos::convolve_bank(imgs, kers);
  const Shape& shape = slices.front().shape();
  const std::size_t each = slices.front().size();
  Tensor stacked({static_cast<int>(slices.size()) * shape[0], shape[1], shape[2]});
  for (std::size_t j = 0; j < slices.size(); ++j) {
    std::copy(slices[j].data(), slices[j].data() + each, stacked.data() + j * each);
  }
  const std::size_t count = images.size();
  Var node = make("convolve_bank", std::move(stacked), std::move(inputs), [count, shape, each](Node& n) {
    const std::size_t m = (n.inputs.size() - count) / count;
    std::vector<Tensor> grads, imgs;
    std::vector<std::vector<Tensor>> kers(m);
    for (std::size_t j = 0; j < m; ++j) {
      grads.emplace_back(shape, std::vector<double>(n.grad.data() + j * each, n.grad.data() + (j + 1) * each));
    }
    bool want_images = false, want_kernels = false;
    for (std::size_t i = 0; i < count; ++i) {
      imgs.push_back(n.inputs[i]->value);
      want_images = want_images || n.inputs[i]->requires_grad;
    }
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t i = 0; i < count; ++i) {
        const Var& k = n.inputs[count + j * count + i];
        kers[j].push_back(k->value);
        want_kernels = want_kernels || k->requires_grad;
      }
    }
    const BankGradient g = convolve_bank_grad(grads, imgs, kers, want_images, want_kernels);
    for (std::size_t i = 0; i < count && want_images; ++i) accumulate(n.inputs[i], g.images[i]);
    for (std::size_t j = 0; j < m && want_kernels; ++j) {
      for (std::size_t i = 0; i < count; ++i) accumulate(n.inputs[count + j * count + i], g.kernels[j][i]);
    }
  });
  return split_channels(node, shape[0]);
}

void backward(const Var& loss) {
  require(!loss->complex && loss->value.size() == 1, Errc::NonScalarLoss,
          "backward needs a real scalar loss, got " + shape_string(loss->shape()));
  if (!loss->requires_grad) return;

  // Iterative post-order DFS; reversed it is a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.get(), 0}};
  visited.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node& n = **it;
    if (!n.backward || !n.has_grad()) continue;
    n.backward(n);
  }
}

GradCheckResult grad_check(const GraphBuilder& build, const std::vector<Tensor>& point,
                           const GradCheckOptions& options) {
  std::vector<Var> leaves;
  for (const Tensor& p : point) leaves.push_back(parameter(p));
  const Var loss = build(leaves);
  backward(loss);
  std::vector<Tensor> analytic;
  for (const Var& leaf : leaves) analytic.push_back(leaf->grad_or_zero());

  auto evaluate = [&](std::vector<Tensor> values) {
    std::vector<Var> consts;
    for (auto& v : values) consts.push_back(constant(std::move(v)));
    return build(consts)->value[0];
  };

  GradCheckResult result;
  auto record = [&](double fd, double ad) {
    const double err = std::abs(fd - ad);
    result.max_abs_error = std::max(result.max_abs_error, err);
    result.max_relative_error =
        std::max(result.max_relative_error, err / std::max({std::abs(fd), std::abs(ad), options.abs_floor}));
    ++result.checks;
  };

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal;
  const double h = options.step;
  for (std::size_t p = 0; p < point.size(); ++p) {
    if (point[p].size() <= options.probe_threshold) {
      for (std::size_t i = 0; i < point[p].size(); ++i) {
        auto plus = point, minus = point;
        plus[p][i] += h;
        minus[p][i] -= h;
        record((evaluate(plus) - evaluate(minus)) / (2 * h), analytic[p][i]);
      }
    } else {
      for (int probe = 0; probe < options.probes; ++probe) {
        Tensor dir(point[p].shape());
        double norm = 0;
        for (double& v : dir.values()) {
          v = normal(rng);
          norm += v * v;
        }
        norm = std::sqrt(norm);
        double directional = 0;
        auto plus = point, minus = point;
        for (std::size_t i = 0; i < dir.size(); ++i) {
          dir[i] /= norm;
          plus[p][i] += h * dir[i];
          minus[p][i] -= h * dir[i];
          directional += analytic[p][i] * dir[i];
        }
        record((evaluate(plus) - evaluate(minus)) / (2 * h), directional);
      }
    }
  }
  return result;
}

AdamState adam_init(std::span<const Tensor> params, const AdamHyper& hyper) {
  AdamState state;
  state.hyper = hyper;
  for (const Tensor& p : params) {
    state.first_moment.emplace_back(p.shape());
    state.second_moment.emplace_back(p.shape());
  }
  return state;
}

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state) {
  require(params.size() == grads.size() && params.size() == state.first_moment.size(), Errc::ShapeMismatch,
          "adam_step: parameter, gradient and state counts differ");
  const AdamHyper& hp = state.hyper;
  ++state.step_count;
  const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step_count));
  const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step_count));
  for (std::size_t p = 0; p < params.size(); ++p) {
    require_same_shape(params[p].shape(), grads[p].shape(), "adam_step gradient");
    require_same_shape(params[p].shape(), state.first_moment[p].shape(), "adam_step state");
    Tensor& m = state.first_moment[p];
    Tensor& v = state.second_moment[p];
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double g = grads[p][i];
      m[i] = hp.beta1 * m[i] + (1 - hp.beta1) * g;
      v[i] = hp.beta2 * v[i] + (1 - hp.beta2) * g * g;
      params[p][i] -= hp.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + hp.eps);
    }
  }
}

}  // namespace lumos::ad
