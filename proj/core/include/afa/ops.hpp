#pragma once

// Differentiable tensor primitives. Every forward op that carries learnable
// inputs has a matching *_backward that ACCUMULATES into caller-owned gradient
// tensors, so gradients can be summed across timesteps without extra copies.

#include <cstdint>
#include <span>
#include <vector>

#include "afa/tensor.hpp"

namespace afa {

enum class PadMode { zero, circular };

struct ConvOptions {
  std::size_t padding = 1;
  PadMode pad_mode = PadMode::zero;
};

/// Stride-1 2-D cross-correlation (kernels are not flipped).
/// input [C_in x H x W], kernels [C_out x C_in x K x K], bias [C_out]
/// -> [C_out x (H + 2p - K + 1) x (W + 2p - K + 1)].
template <class Real>
BasicTensor<Real> conv2d(const BasicTensor<Real>& input, const BasicTensor<Real>& kernels,
                         const BasicTensor<Real>& bias, const ConvOptions& opt = {});

/// Accumulates dL/dinput (skipped when grad_input is null), dL/dkernels and dL/dbias.
template <class Real>
void conv2d_backward(const BasicTensor<Real>& input, const BasicTensor<Real>& kernels,
                     const BasicTensor<Real>& grad_out, const ConvOptions& opt,
                     BasicTensor<Real>* grad_input, BasicTensor<Real>& grad_kernels,
                     BasicTensor<Real>& grad_bias);

template <class Real>
struct MaxPoolOutput {
  BasicTensor<Real> output;
  std::vector<std::uint32_t> argmax;  // flat input index per output cell
};

/// 2x2 max pooling, stride 2. Odd extents keep a partial trailing block.
template <class Real>
MaxPoolOutput<Real> maxpool2x2(const BasicTensor<Real>& input);

template <class Real>
void maxpool2x2_backward(const BasicTensor<Real>& grad_out, std::span<const std::uint32_t> argmax,
                         BasicTensor<Real>& grad_input);

/// Nearest-neighbour 2x upsampling, cropped to out_h x out_w (each <= 2x input).
template <class Real>
BasicTensor<Real> upsample2x(const BasicTensor<Real>& input, std::size_t out_h, std::size_t out_w);
template <class Real>
BasicTensor<Real> upsample2x(const BasicTensor<Real>& input) {
  return upsample2x(input, 2 * input.dim(1), 2 * input.dim(2));
}
template <class Real>
void upsample2x_backward(const BasicTensor<Real>& grad_out, BasicTensor<Real>& grad_input);

/// Nearest 2x upsample followed by conv2d; this is the "deconvolution" used top-down.
template <class Real>
BasicTensor<Real> upsample2x_conv(const BasicTensor<Real>& input, const BasicTensor<Real>& kernels,
                                  const BasicTensor<Real>& bias, std::size_t out_h,
                                  std::size_t out_w, const ConvOptions& opt = {});
template <class Real>
BasicTensor<Real> upsample2x_conv(const BasicTensor<Real>& input, const BasicTensor<Real>& kernels,
                                  const BasicTensor<Real>& bias, const ConvOptions& opt = {}) {
  return upsample2x_conv(input, kernels, bias, 2 * input.dim(1), 2 * input.dim(2), opt);
}

// Elementwise activations. Backward variants take the forward OUTPUT.
template <class Real>
BasicTensor<Real> relu(const BasicTensor<Real>& x);
template <class Real>
BasicTensor<Real> sigmoid(const BasicTensor<Real>& x);
template <class Real>
BasicTensor<Real> tanh(const BasicTensor<Real>& x);

template <class Real>
void relu_backward(const BasicTensor<Real>& y, const BasicTensor<Real>& grad_y,
                   BasicTensor<Real>& grad_x);
template <class Real>
void sigmoid_backward(const BasicTensor<Real>& y, const BasicTensor<Real>& grad_y,
                      BasicTensor<Real>& grad_x);
template <class Real>
void tanh_backward(const BasicTensor<Real>& y, const BasicTensor<Real>& grad_y,
                   BasicTensor<Real>& grad_x);

enum class PointwiseOp { add, sub, mul };

template <class Real>
BasicTensor<Real> pointwise(const BasicTensor<Real>& a, const BasicTensor<Real>& b, PointwiseOp op);
template <class Real>
BasicTensor<Real> add(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  return pointwise(a, b, PointwiseOp::add);
}
template <class Real>
BasicTensor<Real> sub(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  return pointwise(a, b, PointwiseOp::sub);
}
template <class Real>
BasicTensor<Real> mul(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  return pointwise(a, b, PointwiseOp::mul);
}
template <class Real>
BasicTensor<Real> scale(const BasicTensor<Real>& a, Real s);

/// a += s * b
template <class Real>
void axpy(Real s, const BasicTensor<Real>& b, BasicTensor<Real>& a);

/// Stacks along the channel (first) axis; spatial extents must match.
template <class Real>
BasicTensor<Real> concat_channels(const BasicTensor<Real>& a, const BasicTensor<Real>& b);

/// Adds channels [first, first + out.dim(0)) of src into out.
template <class Real>
void accumulate_channel_slice(const BasicTensor<Real>& src, std::size_t first,
                              BasicTensor<Real>& out);

template <class Real>
Real mean(const BasicTensor<Real>& x);

template <class Real>
Real dot(const BasicTensor<Real>& a, const BasicTensor<Real>& b);

}  // namespace afa
