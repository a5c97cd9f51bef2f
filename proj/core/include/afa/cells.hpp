#pragma once

#include <array>
#include <span>
#include <vector>

#include "afa/ops.hpp"
#include "afa/tensor.hpp"

namespace afa {

enum class Gate : std::size_t { input = 0, forget = 1, output = 2, candidate = 3 };
inline constexpr std::size_t kNumGates = 4;
inline constexpr std::array<const char*, kNumGates> kGateNames = {"i", "f", "o", "g"};

template <class Real>
struct GateParams {
  BasicTensor<Real> input_kernels;   // C_hid x C_in x K x K
  BasicTensor<Real> hidden_kernels;  // C_hid x C_hid x K x K
  BasicTensor<Real> bias;            // C_hid
};

/// Convolutional LSTM weights; gates are indexed by Gate.
template <class Real>
struct ConvLstmParams {
  std::array<GateParams<Real>, kNumGates> gates;

  /// Zero-filled parameters of the right shapes.
  static ConvLstmParams zeros(std::size_t in_channels, std::size_t hidden_channels,
                              std::size_t kernel = 3);

  GateParams<Real>& gate(Gate g) { return gates[static_cast<std::size_t>(g)]; }
  const GateParams<Real>& gate(Gate g) const { return gates[static_cast<std::size_t>(g)]; }
  std::size_t in_channels() const { return gates[0].input_kernels.dim(1); }
  std::size_t hidden_channels() const { return gates[0].input_kernels.dim(0); }
};

template <class Real>
struct ConvLstmState {
  BasicTensor<Real> h;
  BasicTensor<Real> c;

  static ConvLstmState zeros(std::size_t channels, std::size_t height, std::size_t width) {
    return {BasicTensor<Real>(Shape{channels, height, width}),
            BasicTensor<Real>(Shape{channels, height, width})};
  }
};

/// Forward intermediates of one ConvLSTM step, consumed by the backward pass.
template <class Real>
struct ConvLstmCache {
  BasicTensor<Real> input;
  ConvLstmState<Real> prev;
  std::array<BasicTensor<Real>, kNumGates> act;  // sigmoid(i,f,o), tanh(g)
  BasicTensor<Real> tanh_c;
};

template <class Real>
struct ConvLstmGrads {
  BasicTensor<Real> input;
  BasicTensor<Real> h_prev;
  BasicTensor<Real> c_prev;
};

/// One recurrence step: i,f,o = sigmoid(Wx*x + Wh*h + b), g = tanh(...),
/// c' = f.c + i.g, h' = o.tanh(c'). Arguments are never modified.
template <class Real>
ConvLstmState<Real> convlstm_step(const ConvLstmParams<Real>& params,
                                  const ConvLstmState<Real>& state,
                                  const BasicTensor<Real>& input, const ConvOptions& opt = {},
                                  ConvLstmCache<Real>* cache = nullptr);

/// Backpropagates (dL/dh', dL/dc') through one step. Parameter gradients are
/// accumulated into `grads`; input/state gradients are returned.
template <class Real>
ConvLstmGrads<Real> convlstm_backward(const ConvLstmParams<Real>& params,
                                      const ConvLstmCache<Real>& cache,
                                      const BasicTensor<Real>& grad_h,
                                      const BasicTensor<Real>& grad_c, const ConvOptions& opt,
                                      ConvLstmParams<Real>& grads);

/// Action MLP: weights = softmax(W2 tanh(W1 a + b1) + b2).
template <class Real>
struct MlpParams {
  BasicTensor<Real> w1;  // hidden x A
  BasicTensor<Real> b1;  // hidden
  BasicTensor<Real> w2;  // D x hidden
  BasicTensor<Real> b2;  // D

  static MlpParams zeros(std::size_t action_dim, std::size_t hidden, std::size_t outputs);

  std::size_t action_dim() const { return w1.dim(1); }
  std::size_t hidden() const { return w1.dim(0); }
  std::size_t outputs() const { return w2.dim(0); }
};

template <class Real>
struct MlpCache {
  std::vector<Real> action;
  std::vector<Real> hidden;   // tanh activations
  std::vector<Real> weights;  // softmax output
};

template <class Real>
std::vector<Real> action_mlp(const MlpParams<Real>& params, std::span<const Real> action,
                             MlpCache<Real>* cache = nullptr);

/// Raw per-unit logits before the softmax, for inspection.
template <class Real>
std::vector<Real> action_mlp_logits(const MlpParams<Real>& params, std::span<const Real> action);

/// Accumulates parameter gradients for dL/dweights; returns dL/daction.
template <class Real>
std::vector<Real> action_mlp_backward(const MlpParams<Real>& params, const MlpCache<Real>& cache,
                                      std::span<const Real> grad_weights, MlpParams<Real>& grads);

}  // namespace afa
