#include "afa/network.hpp"

#include <charconv>
#include <map>
#include <sstream>
#include <stdexcept>

namespace afa {
namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

std::size_t parse_size(std::string_view s, const std::string& key) {
  std::size_t v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw std::invalid_argument("config key '" + key + "': not an unsigned integer: '" +
                                std::string(s) + "'");
  }
  return v;
}

std::vector<std::size_t> parse_list(std::string_view s, const std::string& key) {
  std::vector<std::size_t> out;
  while (!s.empty()) {
    const auto comma = s.find(',');
    out.push_back(parse_size(s.substr(0, comma), key));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

}  // namespace

std::string to_string(PadMode mode) { return mode == PadMode::zero ? "zero" : "circular"; }

PadMode pad_mode_from_string(std::string_view s) {
  if (s == "zero") return PadMode::zero;
  if (s == "circular") return PadMode::circular;
  throw std::invalid_argument("unknown padding mode '" + std::string(s) + "' (zero|circular)");
}

NetworkConfig NetworkConfig::make(std::size_t layers, std::size_t height, std::size_t width,
                                  std::size_t channels, std::size_t action_dim, std::size_t gu) {
  NetworkConfig c;
  c.num_layers = layers;
  c.height = height;
  c.width = width;
  c.channels = channels;
  c.action_dim = action_dim;
  c.gu_units.assign(layers, gu);
  for (std::size_t l = 0; l < layers; ++l) {
    c.r_channels.push_back(std::size_t{8} << l);
    c.target_channels.push_back(l == 0 ? channels : std::size_t{8} << (l - 1));
  }
  return c;
}

void NetworkConfig::validate() const {
  require(num_layers >= 1, "num_layers must be >= 1");
  require(height >= 1 && width >= 1 && channels >= 1, "image dims must be positive");
  require(action_dim >= 1, "action_dim must be >= 1");
  require(mlp_hidden >= 1, "mlp_hidden must be >= 1");
  require(kernel % 2 == 1 && 2 * padding + 1 == kernel,
          "kernel/padding must preserve spatial extents (kernel = 2*padding + 1)");
  require(gu_units.size() == num_layers && r_channels.size() == num_layers &&
              target_channels.size() == num_layers,
          "per-layer lists must have num_layers entries");
  require(target_channels[0] == channels, "target_channels[0] must equal image channels");
  for (std::size_t l = 0; l < num_layers; ++l) {
    require(gu_units[l] >= 1, "gu_units must be >= 1");
    require(r_channels[l] >= 1 && target_channels[l] >= 1, "channel counts must be >= 1");
  }
}

std::size_t NetworkConfig::layer_height(std::size_t l) const {
  std::size_t h = height;
  for (std::size_t i = 0; i < l; ++i) h = (h + 1) / 2;
  return h;
}

std::size_t NetworkConfig::layer_width(std::size_t l) const {
  std::size_t w = width;
  for (std::size_t i = 0; i < l; ++i) w = (w + 1) / 2;
  return w;
}

std::size_t NetworkConfig::gu_input_channels(std::size_t l) const {
  return error_channels(l) + (l + 1 < num_layers ? r_channels.at(l) : 0);
}

std::string NetworkConfig::to_text() const {
  std::ostringstream os;
  os << "layers=" << num_layers << "\n"
     << "height=" << height << "\n"
     << "width=" << width << "\n"
     << "channels=" << channels << "\n"
     << "action_dim=" << action_dim << "\n"
     << "mlp_hidden=" << mlp_hidden << "\n"
     << "kernel=" << kernel << "\n"
     << "padding=" << padding << "\n"
     << "pad_mode=" << to_string(pad_mode) << "\n"
     << "gu_units=" << join(gu_units) << "\n"
     << "r_channels=" << join(r_channels) << "\n"
     << "target_channels=" << join(target_channels) << "\n";
  return os.str();
}

NetworkConfig NetworkConfig::from_text(std::string_view text) {
  std::map<std::string, std::string> kv;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string_view::npos, "config line without '=': " + std::string(line));
    kv[std::string(line.substr(0, eq))] = std::string(line.substr(eq + 1));
  }
  NetworkConfig c;
  auto take = [&](const std::string& key) {
    auto it = kv.find(key);
    require(it != kv.end(), "config missing key '" + key + "'");
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  c.num_layers = parse_size(take("layers"), "layers");
  c.height = parse_size(take("height"), "height");
  c.width = parse_size(take("width"), "width");
  c.channels = parse_size(take("channels"), "channels");
  c.action_dim = parse_size(take("action_dim"), "action_dim");
  c.mlp_hidden = parse_size(take("mlp_hidden"), "mlp_hidden");
  c.kernel = parse_size(take("kernel"), "kernel");
  c.padding = parse_size(take("padding"), "padding");
  c.pad_mode = pad_mode_from_string(take("pad_mode"));
  c.gu_units = parse_list(take("gu_units"), "gu_units");
  c.r_channels = parse_list(take("r_channels"), "r_channels");
  c.target_channels = parse_list(take("target_channels"), "target_channels");
  require(kv.empty(), "unknown config key '" + (kv.empty() ? "" : kv.begin()->first) + "'");
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

template <class Real>
Parameters<Real> Parameters<Real>::zeros(const NetworkConfig& config) {
  config.validate();
  Parameters p;
  p.config_ = config;
  const std::size_t k = config.kernel;
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    LayerParams<Real> lp;
    const std::size_t hid = config.r_channels[l];
    for (std::size_t d = 0; d < config.gu_units[l]; ++d) {
      lp.units.push_back(ConvLstmParams<Real>::zeros(config.gu_input_channels(l), hid, k));
    }
    lp.mlp = MlpParams<Real>::zeros(config.action_dim, config.mlp_hidden, config.gu_units[l]);
    lp.pred_w = BasicTensor<Real>(Shape{config.target_channels[l], hid, k, k});
    lp.pred_b = BasicTensor<Real>(Shape{config.target_channels[l]});
    if (l >= 1) {
      lp.du_w = BasicTensor<Real>(Shape{config.target_channels[l], config.error_channels(l - 1), k, k});
      lp.du_b = BasicTensor<Real>(Shape{config.target_channels[l]});
    }
    if (l + 1 < config.num_layers) {
      lp.devconv_w = BasicTensor<Real>(Shape{hid, config.r_channels[l + 1], k, k});
      lp.devconv_b = BasicTensor<Real>(Shape{hid});
    }
    p.layers_.push_back(std::move(lp));
  }
  return p;
}

namespace {

template <class Layers, class Fn>
void visit_layers(Layers& layers, Fn&& fn) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& lp = layers[l];
    const std::string pre = "l" + std::to_string(l) + ".";
    for (std::size_t d = 0; d < lp.units.size(); ++d) {
      for (std::size_t g = 0; g < kNumGates; ++g) {
        const std::string base = pre + "gu" + std::to_string(d) + "." + kGateNames[g] + ".";
        fn(base + "wx", lp.units[d].gates[g].input_kernels);
        fn(base + "wh", lp.units[d].gates[g].hidden_kernels);
        fn(base + "b", lp.units[d].gates[g].bias);
      }
    }
    fn(pre + "mlp.w1", lp.mlp.w1);
    fn(pre + "mlp.b1", lp.mlp.b1);
    fn(pre + "mlp.w2", lp.mlp.w2);
    fn(pre + "mlp.b2", lp.mlp.b2);
    fn(pre + "pred.w", lp.pred_w);
    fn(pre + "pred.b", lp.pred_b);
    if (l >= 1) {
      fn(pre + "du.w", lp.du_w);
      fn(pre + "du.b", lp.du_b);
    }
    if (l + 1 < layers.size()) {
      fn(pre + "devconv.w", lp.devconv_w);
      fn(pre + "devconv.b", lp.devconv_b);
    }
  }
}

}  // namespace

template <class Real>
void Parameters<Real>::for_each(
    const std::function<void(const std::string&, BasicTensor<Real>&)>& fn) {
  visit_layers(layers_, fn);
}

template <class Real>
void Parameters<Real>::for_each(
    const std::function<void(const std::string&, const BasicTensor<Real>&)>& fn) const {
  visit_layers(layers_, fn);
}

template <class Real>
std::size_t Parameters<Real>::tensor_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const BasicTensor<Real>&) { ++n; });
  return n;
}

template <class Real>
std::size_t Parameters<Real>::scalar_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const BasicTensor<Real>& t) { n += t.size(); });
  return n;
}

template <class Real>
BasicTensor<Real>* Parameters<Real>::find(const std::string& name) {
  BasicTensor<Real>* hit = nullptr;
  for_each([&](const std::string& n, BasicTensor<Real>& t) {
    if (n == name) hit = &t;
  });
  return hit;
}

// ---------------------------------------------------------------------------

template <class Real>
NetworkState<Real> init_state(const NetworkConfig& config) {
  config.validate();
  NetworkState<Real> states(config.num_layers);
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    const std::size_t h = config.layer_height(l), w = config.layer_width(l);
    auto& s = states[l];
    for (std::size_t d = 0; d < config.gu_units[l]; ++d) {
      s.units.push_back(ConvLstmState<Real>::zeros(config.r_channels[l], h, w));
    }
    s.attention.assign(config.gu_units[l], Real(0));
    s.r = BasicTensor<Real>(Shape{config.r_channels[l], h, w});
    s.prediction = BasicTensor<Real>(Shape{config.target_channels[l], h, w});
    s.target = BasicTensor<Real>(Shape{config.target_channels[l], h, w});
    s.error = BasicTensor<Real>(Shape{config.error_channels(l), h, w});
  }
  return states;
}

template <class Real>
BasicTensor<Real> combine_units(std::span<const Real> weights,
                                std::span<const BasicTensor<Real>> hidden) {
  require(!hidden.empty() && weights.size() == hidden.size(),
          "combine_units: weight/unit count mismatch");
  BasicTensor<Real> r(hidden[0].shape());
  for (std::size_t d = 0; d < hidden.size(); ++d) {
    require(hidden[d].shape() == r.shape(), "combine_units: unit shape mismatch");
    const Real w = weights[d];
    for (std::size_t n = 0; n < r.size(); ++n) r[n] += w * hidden[d][n];
  }
  return r;
}

namespace {

template <class Real>
std::vector<Real> attention_weights(const LayerParams<Real>& lp, std::span<const Real> action,
                                    const StepOptions& opts, MlpCache<Real>* cache) {
  const std::size_t units = lp.units.size();
  switch (opts.attention) {
    case AttentionMode::learned:
      return action_mlp(lp.mlp, action, cache);
    case AttentionMode::uniform:
      return std::vector<Real>(units, Real(1) / static_cast<Real>(units));
    case AttentionMode::one_hot: {
      require(opts.one_hot_unit < units, "one_hot_unit out of range");
      std::vector<Real> w(units, Real(0));
      w[opts.one_hot_unit] = Real(1);
      return w;
    }
  }
  return {};
}

}  // namespace

template <class Real>
void topdown_pass(const Parameters<Real>& params, NetworkState<Real>& states,
                  std::span<const Real> action, const StepOptions& opts, StepTrace<Real>* trace) {
  const NetworkConfig& cfg = params.config();
  require(action.size() == cfg.action_dim,
          "action dimension " + std::to_string(action.size()) + " != configured " +
              std::to_string(cfg.action_dim));
  require(states.size() == cfg.num_layers, "state/config layer count mismatch");
  const ConvOptions conv = cfg.conv_options();
  if (trace) trace->layers.assign(cfg.num_layers, {});

  for (std::size_t li = cfg.num_layers; li-- > 0;) {
    const LayerParams<Real>& lp = params.layer(li);
    LayerState<Real>& st = states[li];
    LayerTrace<Real>* lt = trace ? &trace->layers[li] : nullptr;

    BasicTensor<Real> input;
    if (li + 1 < cfg.num_layers) {
      const BasicTensor<Real>& above = states[li + 1].r;
      BasicTensor<Real> up = upsample2x(above, cfg.layer_height(li), cfg.layer_width(li));
      BasicTensor<Real> td = conv2d(up, lp.devconv_w, lp.devconv_b, conv);
      input = concat_channels(st.error, td);
      if (lt) {
        lt->topdown_source = above;
        lt->topdown_upsampled = std::move(up);
      }
    } else {
      input = st.error;
    }

    std::vector<BasicTensor<Real>> hidden;
    hidden.reserve(lp.units.size());
    if (lt) lt->units.resize(lp.units.size());
    for (std::size_t d = 0; d < lp.units.size(); ++d) {
      st.units[d] = convlstm_step(lp.units[d], st.units[d], input, conv,
                                  lt ? &lt->units[d] : nullptr);
      hidden.push_back(st.units[d].h);
    }
    st.attention = attention_weights(lp, action, opts, lt ? &lt->mlp : nullptr);
    st.r = combine_units<Real>(st.attention, hidden);
    if (lt) {
      if (opts.attention != AttentionMode::learned) lt->mlp.weights = st.attention;
      lt->hidden = std::move(hidden);
      lt->r = st.r;
    }
  }
}

template <class Real>
void bottomup_pass(const Parameters<Real>& params, NetworkState<Real>& states,
                   const BasicTensor<Real>& frame, StepTrace<Real>* trace) {
  const NetworkConfig& cfg = params.config();
  const Shape expect{cfg.channels, cfg.height, cfg.width};
  require(frame.shape() == expect,
          "frame shape " + frame.shape().str() + " != configured " + expect.str());
  const ConvOptions conv = cfg.conv_options();
  if (trace && trace->layers.size() != cfg.num_layers) trace->layers.assign(cfg.num_layers, {});

  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const LayerParams<Real>& lp = params.layer(l);
    LayerState<Real>& st = states[l];
    LayerTrace<Real>* lt = trace ? &trace->layers[l] : nullptr;

    if (l == 0) {
      st.target = frame;
    } else {
      BasicTensor<Real> act = relu(conv2d(states[l - 1].error, lp.du_w, lp.du_b, conv));
      MaxPoolOutput<Real> pooled = maxpool2x2(act);
      st.target = std::move(pooled.output);
      if (lt) {
        lt->du_act = std::move(act);
        lt->pool_argmax = std::move(pooled.argmax);
      }
    }
    st.prediction = relu(conv2d(st.r, lp.pred_w, lp.pred_b, conv));

    const std::size_t n = st.target.size();
    BasicTensor<Real> err(Shape{2 * st.target.dim(0), st.target.dim(1), st.target.dim(2)});
    for (std::size_t i = 0; i < n; ++i) {
      const Real diff = st.target[i] - st.prediction[i];
      err[i] = diff > Real(0) ? diff : Real(0);
      err[n + i] = -diff > Real(0) ? -diff : Real(0);
    }
    st.error = std::move(err);
    if (lt) {
      lt->prediction = st.prediction;
      lt->target = st.target;
      lt->error = st.error;
    }
  }
}

template <class Real>
BasicTensor<Real> network_step(const Parameters<Real>& params, NetworkState<Real>& states,
                               const BasicTensor<Real>& frame, std::span<const Real> action,
                               const StepOptions& opts, StepTrace<Real>* trace) {
  topdown_pass(params, states, action, opts, trace);
  // Xhat_0 is a function of R_0(t) alone; the frame only enters the error.
  bottomup_pass(params, states, frame, trace);
  return states[0].prediction;
}

template <class Real>
RolloutResult<Real> rollout(const Parameters<Real>& params,
                            std::span<const BasicTensor<Real>> frames,
                            std::span<const std::vector<Real>> actions, const StepOptions& opts,
                            std::vector<StepTrace<Real>>* traces) {
  require(!frames.empty(), "rollout: empty sequence");
  require(frames.size() == actions.size(), "rollout: frame/action count mismatch");
  NetworkState<Real> states = init_state<Real>(params.config());
  RolloutResult<Real> res;
  res.predictions.reserve(frames.size());
  if (traces) traces->assign(frames.size(), {});
  for (std::size_t t = 0; t < frames.size(); ++t) {
    StepTrace<Real>* tr = traces ? &(*traces)[t] : nullptr;
    topdown_pass(params, states, std::span<const Real>(actions[t]), opts, tr);
    bottomup_pass(params, states, frames[t], tr);
    res.predictions.push_back(states[0].prediction);
    std::vector<Real> means;
    for (const auto& st : states) means.push_back(mean(st.error));
    res.error_means.push_back(std::move(means));
  }
  return res;
}

template <class Real>
RolloutResult<Real> rollout(const Parameters<Real>& params, const Sequence& sequence,
                            const StepOptions& opts, std::vector<StepTrace<Real>>* traces) {
  std::vector<BasicTensor<Real>> frames;
  std::vector<std::vector<Real>> actions;
  frames.reserve(sequence.length());
  for (const auto& f : sequence.frames) frames.push_back(f.template cast<Real>());
  for (const auto& a : sequence.actions) actions.emplace_back(a.begin(), a.end());
  return rollout(params, std::span<const BasicTensor<Real>>(frames),
                 std::span<const std::vector<Real>>(actions), opts, traces);
}

#define AFA_INSTANTIATE_NETWORK(R)                                                              \
  template class Parameters<R>;                                                                 \
  template NetworkState<R> init_state<R>(const NetworkConfig&);                                 \
  template BasicTensor<R> combine_units(std::span<const R>, std::span<const BasicTensor<R>>);   \
  template void topdown_pass(const Parameters<R>&, NetworkState<R>&, std::span<const R>,        \
                             const StepOptions&, StepTrace<R>*);                                \
  template void bottomup_pass(const Parameters<R>&, NetworkState<R>&, const BasicTensor<R>&,    \
                              StepTrace<R>*);                                                   \
  template BasicTensor<R> network_step(const Parameters<R>&, NetworkState<R>&,                  \
                                       const BasicTensor<R>&, std::span<const R>,               \
                                       const StepOptions&, StepTrace<R>*);                      \
  template RolloutResult<R> rollout(const Parameters<R>&, std::span<const BasicTensor<R>>,      \
                                    std::span<const std::vector<R>>, const StepOptions&,        \
                                    std::vector<StepTrace<R>>*);                                \
  template RolloutResult<R> rollout(const Parameters<R>&, const Sequence&, const StepOptions&,  \
                                    std::vector<StepTrace<R>>*);

AFA_INSTANTIATE_NETWORK(float)
AFA_INSTANTIATE_NETWORK(double)

}  // namespace afa
