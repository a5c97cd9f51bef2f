#include "afa/ops.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace afa {
namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void require_image(const Shape& s, const char* what) {
  require(s.rank() == 3, std::string(what) + " must be C x H x W, got " + s.str());
}

std::size_t wrap_index(std::ptrdiff_t i, std::size_t n) {
  auto m = static_cast<std::ptrdiff_t>(n);
  return static_cast<std::size_t>(((i % m) + m) % m);
}

// Copies input into a (H + 2p) x (W + 2p) buffer per channel.
template <class Real>
std::vector<Real> pad_image(const BasicTensor<Real>& input, std::size_t p, PadMode mode) {
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t hp = h + 2 * p, wp = w + 2 * p;
  std::vector<Real> out(c * hp * wp, Real(0));
  for (std::size_t ch = 0; ch < c; ++ch) {
    Real* dst = out.data() + ch * hp * wp;
    for (std::size_t yy = 0; yy < hp; ++yy) {
      const auto y = static_cast<std::ptrdiff_t>(yy) - static_cast<std::ptrdiff_t>(p);
      const bool row_inside = y >= 0 && y < static_cast<std::ptrdiff_t>(h);
      if (!row_inside && mode == PadMode::zero) continue;
      const std::size_t sy = row_inside ? static_cast<std::size_t>(y) : wrap_index(y, h);
      for (std::size_t xx = 0; xx < wp; ++xx) {
        const auto x = static_cast<std::ptrdiff_t>(xx) - static_cast<std::ptrdiff_t>(p);
        const bool inside = x >= 0 && x < static_cast<std::ptrdiff_t>(w);
        if (!inside && mode == PadMode::zero) continue;
        const std::size_t sx = inside ? static_cast<std::size_t>(x) : wrap_index(x, w);
        dst[yy * wp + xx] = input.at(ch, sy, sx);
      }
    }
  }
  return out;
}

// Adjoint of pad_image: folds padded-buffer gradients back onto the input grid.
template <class Real>
void unpad_accumulate(const std::vector<Real>& grad_pad, std::size_t p, PadMode mode,
                      BasicTensor<Real>& grad_input) {
  const std::size_t c = grad_input.dim(0), h = grad_input.dim(1), w = grad_input.dim(2);
  const std::size_t hp = h + 2 * p, wp = w + 2 * p;
  for (std::size_t ch = 0; ch < c; ++ch) {
    const Real* src = grad_pad.data() + ch * hp * wp;
    for (std::size_t yy = 0; yy < hp; ++yy) {
      const auto y = static_cast<std::ptrdiff_t>(yy) - static_cast<std::ptrdiff_t>(p);
      const bool row_inside = y >= 0 && y < static_cast<std::ptrdiff_t>(h);
      if (!row_inside && mode == PadMode::zero) continue;
      const std::size_t sy = row_inside ? static_cast<std::size_t>(y) : wrap_index(y, h);
      for (std::size_t xx = 0; xx < wp; ++xx) {
        const auto x = static_cast<std::ptrdiff_t>(xx) - static_cast<std::ptrdiff_t>(p);
        const bool inside = x >= 0 && x < static_cast<std::ptrdiff_t>(w);
        if (!inside && mode == PadMode::zero) continue;
        const std::size_t sx = inside ? static_cast<std::size_t>(x) : wrap_index(x, w);
        grad_input.at(ch, sy, sx) += src[yy * wp + xx];
      }
    }
  }
}

struct ConvGeometry {
  std::size_t c_in, c_out, k, h, w, hp, wp, ho, wo;
  // Output is computed on a "wide" grid with row stride wp; this is its length.
  std::size_t wide_len;
};

template <class Real>
ConvGeometry conv_geometry(const BasicTensor<Real>& input, const BasicTensor<Real>& kernels,
                           const BasicTensor<Real>& bias, const ConvOptions& opt) {
  require_image(input.shape(), "conv2d input");
  require(kernels.rank() == 4, "conv2d kernels must be C_out x C_in x K x K, got " +
                                   kernels.shape().str());
  require(kernels.dim(2) == kernels.dim(3), "conv2d kernels must be square");
  require(kernels.dim(1) == input.dim(0),
          "conv2d channel mismatch: input has " + std::to_string(input.dim(0)) +
              " channels, kernels expect " + std::to_string(kernels.dim(1)));
  require(bias.rank() == 1 && bias.dim(0) == kernels.dim(0),
          "conv2d bias must have C_out = " + std::to_string(kernels.dim(0)) + " entries");
  ConvGeometry g{};
  g.c_in = input.dim(0);
  g.c_out = kernels.dim(0);
  g.k = kernels.dim(2);
  g.h = input.dim(1);
  g.w = input.dim(2);
  g.hp = g.h + 2 * opt.padding;
  g.wp = g.w + 2 * opt.padding;
  require(g.hp >= g.k && g.wp >= g.k, "conv2d kernel larger than padded input");
  g.ho = g.hp - g.k + 1;
  g.wo = g.wp - g.k + 1;
  g.wide_len = (g.ho - 1) * g.wp + g.wo;
  return g;
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  require(a == b, std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

}  // namespace

template <class Real>
BasicTensor<Real> conv2d(const BasicTensor<Real>& input, const BasicTensor<Real>& kernels,
                         const BasicTensor<Real>& bias, const ConvOptions& opt) {
  const ConvGeometry g = conv_geometry(input, kernels, bias, opt);
  const std::vector<Real> pad = pad_image(input, opt.padding, opt.pad_mode);
  BasicTensor<Real> out(Shape{g.c_out, g.ho, g.wo});
  std::vector<Real> acc(g.wide_len);
  const std::size_t plane = g.hp * g.wp;
  const std::size_t ksq = g.k * g.k;

  for (std::size_t co = 0; co < g.c_out; ++co) {
    std::fill(acc.begin(), acc.end(), bias[co]);
    Real* __restrict a = acc.data();
    for (std::size_t ci = 0; ci < g.c_in; ++ci) {
      const Real* kern = kernels.raw() + (co * g.c_in + ci) * ksq;
      const Real* src_plane = pad.data() + ci * plane;
      for (std::size_t ky = 0; ky < g.k; ++ky) {
        for (std::size_t kx = 0; kx < g.k; ++kx) {
          const Real wgt = kern[ky * g.k + kx];
          const Real* __restrict src = src_plane + ky * g.wp + kx;
          for (std::size_t i = 0; i < g.wide_len; ++i) a[i] += wgt * src[i];
        }
      }
    }
    for (std::size_t y = 0; y < g.ho; ++y) {
      for (std::size_t x = 0; x < g.wo; ++x) out.at(co, y, x) = acc[y * g.wp + x];
    }
  }
  return out;
}

template <class Real>
void conv2d_backward(const BasicTensor<Real>& input, const BasicTensor<Real>& kernels,
                     const BasicTensor<Real>& grad_out, const ConvOptions& opt,
                     BasicTensor<Real>* grad_input, BasicTensor<Real>& grad_kernels,
                     BasicTensor<Real>& grad_bias) {
  const ConvGeometry g = conv_geometry(input, kernels, grad_bias, opt);
  require(grad_out.shape() == Shape({g.c_out, g.ho, g.wo}), "conv2d_backward: grad_out shape");
  require_same_shape(grad_kernels.shape(), kernels.shape(), "conv2d_backward kernels");
  if (grad_input != nullptr) require_same_shape(grad_input->shape(), input.shape(), "conv2d_backward input");

  const std::vector<Real> pad = pad_image(input, opt.padding, opt.pad_mode);
  std::vector<Real> grad_pad(grad_input ? pad.size() : 0, Real(0));
  std::vector<Real> gwide(g.wide_len, Real(0));
  const std::size_t plane = g.hp * g.wp;
  const std::size_t ksq = g.k * g.k;

  for (std::size_t co = 0; co < g.c_out; ++co) {
    Real bsum = 0;
    for (std::size_t y = 0; y < g.ho; ++y) {
      for (std::size_t x = 0; x < g.wo; ++x) {
        const Real v = grad_out.at(co, y, x);
        gwide[y * g.wp + x] = v;
        bsum += v;
      }
    }
    grad_bias[co] += bsum;
    const Real* __restrict gw = gwide.data();
    for (std::size_t ci = 0; ci < g.c_in; ++ci) {
      const Real* kern = kernels.raw() + (co * g.c_in + ci) * ksq;
      Real* gkern = grad_kernels.raw() + (co * g.c_in + ci) * ksq;
      const Real* src_plane = pad.data() + ci * plane;
      Real* gpad_plane = grad_input ? grad_pad.data() + ci * plane : nullptr;
      for (std::size_t ky = 0; ky < g.k; ++ky) {
        for (std::size_t kx = 0; kx < g.k; ++kx) {
          const std::size_t off = ky * g.wp + kx;
          const Real* __restrict src = src_plane + off;
          Real s = 0;
          for (std::size_t i = 0; i < g.wide_len; ++i) s += gw[i] * src[i];
          gkern[ky * g.k + kx] += s;
          if (gpad_plane) {
            const Real wgt = kern[ky * g.k + kx];
            Real* __restrict dst = gpad_plane + off;
            for (std::size_t i = 0; i < g.wide_len; ++i) dst[i] += wgt * gw[i];
          }
        }
      }
    }
  }
  if (grad_input) unpad_accumulate(grad_pad, opt.padding, opt.pad_mode, *grad_input);
}

template <class Real>
MaxPoolOutput<Real> maxpool2x2(const BasicTensor<Real>& input) {
  require_image(input.shape(), "maxpool2x2 input");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  require(h >= 1 && w >= 1, "maxpool2x2 needs non-empty spatial extents");
  const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;
  MaxPoolOutput<Real> res{BasicTensor<Real>(Shape{c, oh, ow}), {}};
  res.argmax.resize(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (ch * h + 2 * oy) * w + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          const std::size_t y = 2 * oy + dy;
          if (y >= h) break;
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t x = 2 * ox + dx;
            if (x >= w) break;
            const std::size_t idx = (ch * h + y) * w + x;
            if (input[idx] > input[best]) best = idx;
          }
        }
        const std::size_t o = (ch * oh + oy) * ow + ox;
        res.output[o] = input[best];
        res.argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return res;
}

template <class Real>
void maxpool2x2_backward(const BasicTensor<Real>& grad_out, std::span<const std::uint32_t> argmax,
                         BasicTensor<Real>& grad_input) {
  require(grad_out.size() == argmax.size(), "maxpool2x2_backward: argmax size mismatch");
  for (std::size_t i = 0; i < argmax.size(); ++i) grad_input[argmax[i]] += grad_out[i];
}

template <class Real>
BasicTensor<Real> upsample2x(const BasicTensor<Real>& input, std::size_t out_h, std::size_t out_w) {
  require_image(input.shape(), "upsample2x input");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  require(out_h <= 2 * h && out_w <= 2 * w && out_h > 0 && out_w > 0,
          "upsample2x target must lie within 2x the input extents");
  BasicTensor<Real> out(Shape{c, out_h, out_w});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < out_h; ++y) {
      for (std::size_t x = 0; x < out_w; ++x) out.at(ch, y, x) = input.at(ch, y / 2, x / 2);
    }
  }
  return out;
}

template <class Real>
void upsample2x_backward(const BasicTensor<Real>& grad_out, BasicTensor<Real>& grad_input) {
  require(grad_out.rank() == 3 && grad_input.rank() == 3 && grad_out.dim(0) == grad_input.dim(0),
          "upsample2x_backward: shape mismatch");
  for (std::size_t ch = 0; ch < grad_out.dim(0); ++ch) {
    for (std::size_t y = 0; y < grad_out.dim(1); ++y) {
      for (std::size_t x = 0; x < grad_out.dim(2); ++x) {
        grad_input.at(ch, y / 2, x / 2) += grad_out.at(ch, y, x);
      }
    }
  }
}

template <class Real>
BasicTensor<Real> upsample2x_conv(const BasicTensor<Real>& input, const BasicTensor<Real>& kernels,
                                  const BasicTensor<Real>& bias, std::size_t out_h,
                                  std::size_t out_w, const ConvOptions& opt) {
  return conv2d(upsample2x(input, out_h, out_w), kernels, bias, opt);
}

template <class Real>
BasicTensor<Real> relu(const BasicTensor<Real>& x) {
  BasicTensor<Real> y = x;
  for (auto& v : y.data()) v = v > Real(0) ? v : Real(0);
  return y;
}

template <class Real>
BasicTensor<Real> sigmoid(const BasicTensor<Real>& x) {
  BasicTensor<Real> y = x;
  for (auto& v : y.data()) v = Real(1) / (Real(1) + std::exp(-v));
  return y;
}

template <class Real>
BasicTensor<Real> tanh(const BasicTensor<Real>& x) {
  BasicTensor<Real> y = x;
  for (auto& v : y.data()) v = std::tanh(v);
  return y;
}

template <class Real>
void relu_backward(const BasicTensor<Real>& y, const BasicTensor<Real>& grad_y,
                   BasicTensor<Real>& grad_x) {
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] > Real(0)) grad_x[i] += grad_y[i];
  }
}

template <class Real>
void sigmoid_backward(const BasicTensor<Real>& y, const BasicTensor<Real>& grad_y,
                      BasicTensor<Real>& grad_x) {
  for (std::size_t i = 0; i < y.size(); ++i) grad_x[i] += grad_y[i] * y[i] * (Real(1) - y[i]);
}

template <class Real>
void tanh_backward(const BasicTensor<Real>& y, const BasicTensor<Real>& grad_y,
                   BasicTensor<Real>& grad_x) {
  for (std::size_t i = 0; i < y.size(); ++i) grad_x[i] += grad_y[i] * (Real(1) - y[i] * y[i]);
}

template <class Real>
BasicTensor<Real> pointwise(const BasicTensor<Real>& a, const BasicTensor<Real>& b, PointwiseOp op) {
  require_same_shape(a.shape(), b.shape(), "pointwise");
  BasicTensor<Real> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    switch (op) {
      case PointwiseOp::add: out[i] = a[i] + b[i]; break;
      case PointwiseOp::sub: out[i] = a[i] - b[i]; break;
      case PointwiseOp::mul: out[i] = a[i] * b[i]; break;
    }
  }
  return out;
}

template <class Real>
BasicTensor<Real> scale(const BasicTensor<Real>& a, Real s) {
  BasicTensor<Real> out = a;
  for (auto& v : out.data()) v *= s;
  return out;
}

template <class Real>
void axpy(Real s, const BasicTensor<Real>& b, BasicTensor<Real>& a) {
  require_same_shape(a.shape(), b.shape(), "axpy");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += s * b[i];
}

template <class Real>
BasicTensor<Real> concat_channels(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  require_image(a.shape(), "concat_channels lhs");
  require_image(b.shape(), "concat_channels rhs");
  require(a.dim(1) == b.dim(1) && a.dim(2) == b.dim(2),
          "concat_channels: spatial mismatch " + a.shape().str() + " vs " + b.shape().str());
  BasicTensor<Real> out(Shape{a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
  std::copy(a.data().begin(), a.data().end(), out.data().begin());
  std::copy(b.data().begin(), b.data().end(), out.data().begin() + a.size());
  return out;
}

template <class Real>
void accumulate_channel_slice(const BasicTensor<Real>& src, std::size_t first,
                              BasicTensor<Real>& out) {
  require(src.rank() == 3 && out.rank() == 3 && src.dim(1) == out.dim(1) &&
              src.dim(2) == out.dim(2) && first + out.dim(0) <= src.dim(0),
          "accumulate_channel_slice: range out of bounds");
  const std::size_t plane = src.dim(1) * src.dim(2);
  const Real* s = src.raw() + first * plane;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += s[i];
}

template <class Real>
Real mean(const BasicTensor<Real>& x) {
  if (x.empty()) return Real(0);
  Real s = 0;
  for (Real v : x.data()) s += v;
  return s / static_cast<Real>(x.size());
}

template <class Real>
Real dot(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  require_same_shape(a.shape(), b.shape(), "dot");
  Real s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

#define AFA_INSTANTIATE_OPS(R)                                                                  \
  template BasicTensor<R> conv2d(const BasicTensor<R>&, const BasicTensor<R>&,                  \
                                 const BasicTensor<R>&, const ConvOptions&);                    \
  template void conv2d_backward(const BasicTensor<R>&, const BasicTensor<R>&,                   \
                                const BasicTensor<R>&, const ConvOptions&, BasicTensor<R>*,     \
                                BasicTensor<R>&, BasicTensor<R>&);                              \
  template MaxPoolOutput<R> maxpool2x2(const BasicTensor<R>&);                                  \
  template void maxpool2x2_backward(const BasicTensor<R>&, std::span<const std::uint32_t>,      \
                                    BasicTensor<R>&);                                           \
  template BasicTensor<R> upsample2x(const BasicTensor<R>&, std::size_t, std::size_t);          \
  template void upsample2x_backward(const BasicTensor<R>&, BasicTensor<R>&);                    \
  template BasicTensor<R> upsample2x_conv(const BasicTensor<R>&, const BasicTensor<R>&,         \
                                          const BasicTensor<R>&, std::size_t, std::size_t,      \
                                          const ConvOptions&);                                  \
  template BasicTensor<R> relu(const BasicTensor<R>&);                                          \
  template BasicTensor<R> sigmoid(const BasicTensor<R>&);                                       \
  template BasicTensor<R> tanh(const BasicTensor<R>&);                                          \
  template void relu_backward(const BasicTensor<R>&, const BasicTensor<R>&, BasicTensor<R>&);   \
  template void sigmoid_backward(const BasicTensor<R>&, const BasicTensor<R>&, BasicTensor<R>&); \
  template void tanh_backward(const BasicTensor<R>&, const BasicTensor<R>&, BasicTensor<R>&);   \
  template BasicTensor<R> pointwise(const BasicTensor<R>&, const BasicTensor<R>&, PointwiseOp); \
  template BasicTensor<R> scale(const BasicTensor<R>&, R);                                      \
  template void axpy(R, const BasicTensor<R>&, BasicTensor<R>&);                                \
  template BasicTensor<R> concat_channels(const BasicTensor<R>&, const BasicTensor<R>&);        \
  template void accumulate_channel_slice(const BasicTensor<R>&, std::size_t, BasicTensor<R>&);  \
  template R mean(const BasicTensor<R>&);                                                       \
  template R dot(const BasicTensor<R>&, const BasicTensor<R>&);

AFA_INSTANTIATE_OPS(float)
AFA_INSTANTIATE_OPS(double)

}  // namespace afa
