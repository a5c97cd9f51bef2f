#include "afa/cells.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace afa {

template <class Real>
ConvLstmParams<Real> ConvLstmParams<Real>::zeros(std::size_t in_channels,
                                                 std::size_t hidden_channels, std::size_t kernel) {
  ConvLstmParams p;
  for (auto& g : p.gates) {
    g.input_kernels = BasicTensor<Real>(Shape{hidden_channels, in_channels, kernel, kernel});
    g.hidden_kernels = BasicTensor<Real>(Shape{hidden_channels, hidden_channels, kernel, kernel});
    g.bias = BasicTensor<Real>(Shape{hidden_channels});
  }
  return p;
}

template <class Real>
ConvLstmState<Real> convlstm_step(const ConvLstmParams<Real>& params,
                                  const ConvLstmState<Real>& state,
                                  const BasicTensor<Real>& input, const ConvOptions& opt,
                                  ConvLstmCache<Real>* cache) {
  const std::size_t hid = params.hidden_channels();
  if (input.rank() != 3 || state.h.rank() != 3 || input.dim(1) != state.h.dim(1) ||
      input.dim(2) != state.h.dim(2)) {
    throw std::invalid_argument("convlstm_step: input " + input.shape().str() +
                                " does not match state " + state.h.shape().str());
  }
  if (!(state.h.shape() == state.c.shape()) || state.h.dim(0) != hid) {
    throw std::invalid_argument("convlstm_step: state shape " + state.h.shape().str() +
                                " inconsistent with " + std::to_string(hid) + " hidden channels");
  }
  const BasicTensor<Real> no_bias(Shape{hid});

  std::array<BasicTensor<Real>, kNumGates> act;
  for (std::size_t k = 0; k < kNumGates; ++k) {
    const auto& g = params.gates[k];
    BasicTensor<Real> z = conv2d(input, g.input_kernels, g.bias, opt);
    axpy(Real(1), conv2d(state.h, g.hidden_kernels, no_bias, opt), z);
    act[k] = k == static_cast<std::size_t>(Gate::candidate) ? afa::tanh(z) : sigmoid(z);
  }
  const auto& i = act[0];
  const auto& f = act[1];
  const auto& o = act[2];
  const auto& gg = act[3];

  ConvLstmState<Real> next{BasicTensor<Real>(state.h.shape()), BasicTensor<Real>(state.c.shape())};
  BasicTensor<Real> tanh_c(state.c.shape());
  for (std::size_t n = 0; n < next.c.size(); ++n) {
    next.c[n] = f[n] * state.c[n] + i[n] * gg[n];
    tanh_c[n] = std::tanh(next.c[n]);
    next.h[n] = o[n] * tanh_c[n];
  }
  if (cache) {
    cache->input = input;
    cache->prev = state;
    cache->act = std::move(act);
    cache->tanh_c = std::move(tanh_c);
  }
  return next;
}

template <class Real>
ConvLstmGrads<Real> convlstm_backward(const ConvLstmParams<Real>& params,
                                      const ConvLstmCache<Real>& cache,
                                      const BasicTensor<Real>& grad_h,
                                      const BasicTensor<Real>& grad_c, const ConvOptions& opt,
                                      ConvLstmParams<Real>& grads) {
  const auto& i = cache.act[0];
  const auto& f = cache.act[1];
  const auto& o = cache.act[2];
  const auto& g = cache.act[3];
  const auto& c_prev = cache.prev.c;
  const Shape s = c_prev.shape();

  std::array<BasicTensor<Real>, kNumGates> dz;
  for (auto& t : dz) t = BasicTensor<Real>(s);
  ConvLstmGrads<Real> out{BasicTensor<Real>(cache.input.shape()), BasicTensor<Real>(s),
                          BasicTensor<Real>(s)};

  for (std::size_t n = 0; n < s.numel(); ++n) {
    const Real tc = cache.tanh_c[n];
    const Real dc = grad_c[n] + grad_h[n] * o[n] * (Real(1) - tc * tc);
    const Real d_o = grad_h[n] * tc;
    const Real d_i = dc * g[n];
    const Real d_f = dc * c_prev[n];
    const Real d_g = dc * i[n];
    out.c_prev[n] = dc * f[n];
    dz[0][n] = d_i * i[n] * (Real(1) - i[n]);
    dz[1][n] = d_f * f[n] * (Real(1) - f[n]);
    dz[2][n] = d_o * o[n] * (Real(1) - o[n]);
    dz[3][n] = d_g * (Real(1) - g[n] * g[n]);
  }

  BasicTensor<Real> bias_sink(Shape{params.hidden_channels()});
  for (std::size_t k = 0; k < kNumGates; ++k) {
    const auto& p = params.gates[k];
    auto& gr = grads.gates[k];
    conv2d_backward(cache.input, p.input_kernels, dz[k], opt, &out.input, gr.input_kernels, gr.bias);
    conv2d_backward(cache.prev.h, p.hidden_kernels, dz[k], opt, &out.h_prev, gr.hidden_kernels,
                    bias_sink);
  }
  return out;
}

template <class Real>
MlpParams<Real> MlpParams<Real>::zeros(std::size_t action_dim, std::size_t hidden,
                                       std::size_t outputs) {
  return {BasicTensor<Real>(Shape{hidden, action_dim}), BasicTensor<Real>(Shape{hidden}),
          BasicTensor<Real>(Shape{outputs, hidden}), BasicTensor<Real>(Shape{outputs})};
}

namespace {

template <class Real>
void mlp_forward(const MlpParams<Real>& p, std::span<const Real> action, std::vector<Real>& hidden,
                 std::vector<Real>& logits) {
  if (action.size() != p.action_dim()) {
    throw std::invalid_argument("action_mlp: expected action of dimension " +
                                std::to_string(p.action_dim()) + ", got " +
                                std::to_string(action.size()));
  }
  const std::size_t nh = p.hidden(), na = p.action_dim(), no = p.outputs();
  hidden.assign(nh, Real(0));
  for (std::size_t j = 0; j < nh; ++j) {
    Real z = p.b1[j];
    for (std::size_t k = 0; k < na; ++k) z += p.w1[j * na + k] * action[k];
    hidden[j] = std::tanh(z);
  }
  logits.assign(no, Real(0));
  for (std::size_t d = 0; d < no; ++d) {
    Real z = p.b2[d];
    for (std::size_t j = 0; j < nh; ++j) z += p.w2[d * nh + j] * hidden[j];
    logits[d] = z;
  }
}

}  // namespace

template <class Real>
std::vector<Real> action_mlp_logits(const MlpParams<Real>& params, std::span<const Real> action) {
  std::vector<Real> hidden, logits;
  mlp_forward(params, action, hidden, logits);
  return logits;
}

template <class Real>
std::vector<Real> action_mlp(const MlpParams<Real>& params, std::span<const Real> action,
                             MlpCache<Real>* cache) {
  std::vector<Real> hidden, weights;
  mlp_forward(params, action, hidden, weights);
  const Real zmax = *std::max_element(weights.begin(), weights.end());
  Real total = 0;
  for (auto& w : weights) {
    w = std::exp(w - zmax);
    total += w;
  }
  for (auto& w : weights) w /= total;
  if (cache) {
    cache->action.assign(action.begin(), action.end());
    cache->hidden = hidden;
    cache->weights = weights;
  }
  return weights;
}

template <class Real>
std::vector<Real> action_mlp_backward(const MlpParams<Real>& params, const MlpCache<Real>& cache,
                                      std::span<const Real> grad_weights, MlpParams<Real>& grads) {
  const std::size_t nh = params.hidden(), na = params.action_dim(), no = params.outputs();
  const auto& w = cache.weights;
  Real wg = 0;
  for (std::size_t d = 0; d < no; ++d) wg += w[d] * grad_weights[d];
  std::vector<Real> grad_hidden(nh, Real(0));
  for (std::size_t d = 0; d < no; ++d) {
    const Real dlogit = w[d] * (grad_weights[d] - wg);
    grads.b2[d] += dlogit;
    for (std::size_t j = 0; j < nh; ++j) {
      grads.w2[d * nh + j] += dlogit * cache.hidden[j];
      grad_hidden[j] += dlogit * params.w2[d * nh + j];
    }
  }
  std::vector<Real> grad_action(na, Real(0));
  for (std::size_t j = 0; j < nh; ++j) {
    const Real hz = grad_hidden[j] * (Real(1) - cache.hidden[j] * cache.hidden[j]);
    grads.b1[j] += hz;
    for (std::size_t k = 0; k < na; ++k) {
      grads.w1[j * na + k] += hz * cache.action[k];
      grad_action[k] += hz * params.w1[j * na + k];
    }
  }
  return grad_action;
}

#define AFA_INSTANTIATE_CELLS(R)                                                                 \
  template struct ConvLstmParams<R>;                                                             \
  template struct MlpParams<R>;                                                                  \
  template ConvLstmState<R> convlstm_step(const ConvLstmParams<R>&, const ConvLstmState<R>&,     \
                                          const BasicTensor<R>&, const ConvOptions&,             \
                                          ConvLstmCache<R>*);                                    \
  template ConvLstmGrads<R> convlstm_backward(const ConvLstmParams<R>&, const ConvLstmCache<R>&, \
                                              const BasicTensor<R>&, const BasicTensor<R>&,      \
                                              const ConvOptions&, ConvLstmParams<R>&);           \
  template std::vector<R> action_mlp(const MlpParams<R>&, std::span<const R>, MlpCache<R>*);     \
  template std::vector<R> action_mlp_logits(const MlpParams<R>&, std::span<const R>);            \
  template std::vector<R> action_mlp_backward(const MlpParams<R>&, const MlpCache<R>&,           \
                                              std::span<const R>, MlpParams<R>&);

AFA_INSTANTIATE_CELLS(float)
AFA_INSTANTIATE_CELLS(double)

}  // namespace afa
