#pragma once

// Stacked predictive-coding network with action-modulated generative units.
//
// Per layer l and step t:
//   top-down (l = L-1 .. 0)
//     in_l      = [E_l(t-1) ; up_conv(R_{l+1}(t))]        (top layer: E_l(t-1) only)
//     h_l^d(t)  = ConvLSTM_d(in_l, h_l^d(t-1))             d = 0 .. D_l-1
//     R_l(t)    = sum_d w_d(a(t)) h_l^d(t),  w = softmax MLP of the action
//   bottom-up (l = 0 .. L-1)
//     X_0(t)    = frame(t)
//     Xhat_l(t) = relu(conv(R_l(t)))
//     E_l(t)    = [relu(X_l - Xhat_l) ; relu(Xhat_l - X_l)]
//     X_{l+1}   = maxpool(relu(conv(E_l(t))))

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "afa/cells.hpp"
#include "afa/ops.hpp"
#include "afa/sequence.hpp"
#include "afa/tensor.hpp"

namespace afa {

struct NetworkConfig {
  std::size_t num_layers = 2;
  std::size_t height = 8;
  std::size_t width = 12;
  std::size_t channels = 1;
  std::size_t action_dim = 2;
  std::size_t mlp_hidden = 4;
  std::size_t kernel = 3;
  std::size_t padding = 1;
  PadMode pad_mode = PadMode::zero;
  std::vector<std::size_t> gu_units;         // D_l
  std::vector<std::size_t> r_channels;       // hidden channels of layer l's GU bank
  std::vector<std::size_t> target_channels;  // C_l; C_0 == channels

  /// Fills per-layer vectors with defaults: D_l = gu, R_l = 8*2^l, C_l = 8*2^(l-1).
  static NetworkConfig make(std::size_t layers, std::size_t height, std::size_t width,
                            std::size_t channels, std::size_t action_dim, std::size_t gu = 2);

  /// Throws std::invalid_argument on inconsistent values.
  void validate() const;

  std::size_t layer_height(std::size_t l) const;
  std::size_t layer_width(std::size_t l) const;
  std::size_t error_channels(std::size_t l) const { return 2 * target_channels.at(l); }
  std::size_t gu_input_channels(std::size_t l) const;
  ConvOptions conv_options() const { return {padding, pad_mode}; }

  /// key=value lines, one per field; lists are comma separated.
  std::string to_text() const;
  static NetworkConfig from_text(std::string_view text);

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

std::string to_string(PadMode mode);
PadMode pad_mode_from_string(std::string_view s);

template <class Real>
struct LayerParams {
  std::vector<ConvLstmParams<Real>> units;
  MlpParams<Real> mlp;
  BasicTensor<Real> pred_w, pred_b;        // R_l -> Xhat_l
  BasicTensor<Real> du_w, du_b;            // E_{l-1} -> X_l (l >= 1)
  BasicTensor<Real> devconv_w, devconv_b;  // R_{l+1} -> GU input of l (l < L-1)
};

template <class Real>
class Parameters {
 public:
  Parameters() = default;

  /// Zero-filled parameters with shapes implied by `config`.
  static Parameters zeros(const NetworkConfig& config);

  const NetworkConfig& config() const { return config_; }
  std::vector<LayerParams<Real>>& layers() { return layers_; }
  const std::vector<LayerParams<Real>>& layers() const { return layers_; }
  LayerParams<Real>& layer(std::size_t l) { return layers_.at(l); }
  const LayerParams<Real>& layer(std::size_t l) const { return layers_.at(l); }

  /// Visits every tensor in a fixed order with its stable name.
  void for_each(const std::function<void(const std::string&, BasicTensor<Real>&)>& fn);
  void for_each(const std::function<void(const std::string&, const BasicTensor<Real>&)>& fn) const;

  std::size_t tensor_count() const;
  std::size_t scalar_count() const;
  BasicTensor<Real>* find(const std::string& name);

  template <class Other>
  Parameters<Other> cast() const {
    Parameters<Other> out = Parameters<Other>::zeros(config_);
    std::vector<const BasicTensor<Real>*> src;
    for_each([&](const std::string&, const BasicTensor<Real>& t) { src.push_back(&t); });
    std::size_t i = 0;
    out.for_each([&](const std::string&, BasicTensor<Other>& t) { t = src[i++]->template cast<Other>(); });
    return out;
  }

 private:
  NetworkConfig config_;
  std::vector<LayerParams<Real>> layers_;
};

template <class Real>
struct LayerState {
  std::vector<ConvLstmState<Real>> units;
  std::vector<Real> attention;  // w(t) of the last step
  BasicTensor<Real> r;
  BasicTensor<Real> prediction;
  BasicTensor<Real> error;
  BasicTensor<Real> target;
};

template <class Real>
using NetworkState = std::vector<LayerState<Real>>;

/// Intermediates of one layer at one step, enough to run the backward pass.
template <class Real>
struct LayerTrace {
  BasicTensor<Real> topdown_source;     // R_{l+1}(t)
  BasicTensor<Real> topdown_upsampled;  // nearest-upsampled R_{l+1}(t)
  std::vector<ConvLstmCache<Real>> units;
  std::vector<BasicTensor<Real>> hidden;  // h_l^d(t)
  MlpCache<Real> mlp;
  BasicTensor<Real> r;
  BasicTensor<Real> prediction;
  BasicTensor<Real> target;
  BasicTensor<Real> error;
  BasicTensor<Real> du_act;  // relu(conv(E_{l-1})) before pooling, l >= 1
  std::vector<std::uint32_t> pool_argmax;
};

template <class Real>
struct StepTrace {
  std::vector<LayerTrace<Real>> layers;
};

enum class AttentionMode { learned, uniform, one_hot };

struct StepOptions {
  AttentionMode attention = AttentionMode::learned;
  std::size_t one_hot_unit = 0;
};

template <class Real>
NetworkState<Real> init_state(const NetworkConfig& config);

/// R_l = sum_d w_d h_d, accumulated in unit order. Shared by the network and dump checks.
template <class Real>
BasicTensor<Real> combine_units(std::span<const Real> weights,
                                std::span<const BasicTensor<Real>> hidden);

template <class Real>
void topdown_pass(const Parameters<Real>& params, NetworkState<Real>& states,
                  std::span<const Real> action, const StepOptions& opts = {},
                  StepTrace<Real>* trace = nullptr);

template <class Real>
void bottomup_pass(const Parameters<Real>& params, NetworkState<Real>& states,
                   const BasicTensor<Real>& frame, StepTrace<Real>* trace = nullptr);

/// Runs both passes; returns Xhat_0(t), which never depends on `frame`.
template <class Real>
BasicTensor<Real> network_step(const Parameters<Real>& params, NetworkState<Real>& states,
                               const BasicTensor<Real>& frame, std::span<const Real> action,
                               const StepOptions& opts = {}, StepTrace<Real>* trace = nullptr);

template <class Real>
struct RolloutResult {
  std::vector<BasicTensor<Real>> predictions;  // Xhat_0(t)
  std::vector<std::vector<Real>> error_means;  // [t][l] mean of E_l(t)
};

template <class Real>
RolloutResult<Real> rollout(const Parameters<Real>& params,
                            std::span<const BasicTensor<Real>> frames,
                            std::span<const std::vector<Real>> actions,
                            const StepOptions& opts = {},
                            std::vector<StepTrace<Real>>* traces = nullptr);

/// Convenience overload converting a stored (32-bit) sequence.
template <class Real>
RolloutResult<Real> rollout(const Parameters<Real>& params, const Sequence& sequence,
                            const StepOptions& opts = {},
                            std::vector<StepTrace<Real>>* traces = nullptr);

}  // namespace afa
