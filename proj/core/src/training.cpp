#include "afa/training.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <stdexcept>

#include "afa/errors.hpp"

namespace afa {

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw std::invalid_argument("learning rate must be > 0");
  if (max_iterations == 0) throw std::invalid_argument("max_iterations must be >= 1");
  if (threshold_window == 0) throw std::invalid_argument("threshold_window must be >= 1");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw std::invalid_argument("Adam betas must be in [0, 1)");
  }
  if (!(epsilon > 0)) throw std::invalid_argument("Adam epsilon must be > 0");
  if (!(surrogate_slope >= 0 && surrogate_slope <= 1)) {
    throw std::invalid_argument("surrogate_slope must be in [0, 1]");
  }
  for (double w : layer_weights) {
    if (!(w >= 0)) throw std::invalid_argument("layer weights must be >= 0");
  }
  if (!layer_weights.empty() && !(layer_weights[0] > 0)) {
    throw std::invalid_argument("layer 0 weight must be > 0");
  }
}

std::vector<double> resolve_layer_weights(const TrainConfig& train, const NetworkConfig& config) {
  if (train.layer_weights.empty()) {
    std::vector<double> w(config.num_layers, 0.1);
    w[0] = 1.0;
    return w;
  }
  if (train.layer_weights.size() != config.num_layers) {
    throw ConfigError("expected " + std::to_string(config.num_layers) + " layer weights, got " +
                      std::to_string(train.layer_weights.size()));
  }
  return train.layer_weights;
}

template <class Real>
Real compute_loss(const std::vector<std::vector<Real>>& error_means,
                  const std::vector<double>& layer_weights) {
  if (error_means.size() < 2) {
    throw std::invalid_argument("compute_loss needs at least 2 timesteps");
  }
  Real loss = 0;
  for (std::size_t t = 1; t < error_means.size(); ++t) {
    for (std::size_t l = 0; l < error_means[t].size(); ++l) {
      loss += static_cast<Real>(layer_weights.at(l)) * error_means[t][l];
    }
  }
  return loss;
}

template <class Real>
Parameters<Real> backward(const Parameters<Real>& params, const std::vector<StepTrace<Real>>& traces,
                          const std::vector<double>& layer_weights, Real prediction_leak) {
  const NetworkConfig& cfg = params.config();
  const std::size_t num_layers = cfg.num_layers;
  const ConvOptions conv = cfg.conv_options();
  Parameters<Real> grads = Parameters<Real>::zeros(cfg);
  if (traces.empty()) return grads;

  // Gradients flowing into step t from step t+1.
  std::vector<BasicTensor<Real>> g_err_carry(num_layers);
  std::vector<std::vector<BasicTensor<Real>>> g_h(num_layers), g_c(num_layers);
  for (std::size_t l = 0; l < num_layers; ++l) {
    const std::size_t h = cfg.layer_height(l), w = cfg.layer_width(l);
    g_err_carry[l] = BasicTensor<Real>(Shape{cfg.error_channels(l), h, w});
    for (std::size_t d = 0; d < cfg.gu_units[l]; ++d) {
      g_h[l].emplace_back(Shape{cfg.r_channels[l], h, w});
      g_c[l].emplace_back(Shape{cfg.r_channels[l], h, w});
    }
  }

  for (std::size_t t = traces.size(); t-- > 0;) {
    const StepTrace<Real>& tr = traces[t];
    const Real time_weight = t >= 1 ? Real(1) : Real(0);

    std::vector<BasicTensor<Real>> g_err(num_layers), g_r(num_layers);
    for (std::size_t l = 0; l < num_layers; ++l) {
      g_err[l] = g_err_carry[l];
      const Real direct = time_weight * static_cast<Real>(layer_weights.at(l)) /
                          static_cast<Real>(g_err[l].size());
      if (direct != Real(0)) {
        for (auto& v : g_err[l].data()) v += direct;
      }
      g_r[l] = BasicTensor<Real>(tr.layers[l].r.shape());
    }

    // Bottom-up pass in reverse: E_l -> (X_l, Xhat_l) -> (E_{l-1} via DU, R_l).
    for (std::size_t l = num_layers; l-- > 0;) {
      const LayerTrace<Real>& lt = tr.layers[l];
      const LayerParams<Real>& lp = params.layer(l);
      LayerParams<Real>& gp = grads.layer(l);
      const std::size_t n = lt.target.size();
      BasicTensor<Real> g_target(lt.target.shape());
      BasicTensor<Real> g_pred(lt.prediction.shape());
      for (std::size_t i = 0; i < n; ++i) {
        const Real gpos = lt.error[i] > Real(0) ? g_err[l][i] : Real(0);
        const Real gneg = lt.error[n + i] > Real(0) ? g_err[l][n + i] : Real(0);
        g_target[i] = gpos - gneg;
        g_pred[i] = gneg - gpos;
      }
      BasicTensor<Real> g_pre(lt.prediction.shape());
      relu_backward(lt.prediction, g_pred, g_pre);
      if (prediction_leak != Real(0)) {
        for (std::size_t i = 0; i < n; ++i) {
          if (!(lt.prediction[i] > Real(0))) g_pre[i] += prediction_leak * g_pred[i];
        }
      }
      conv2d_backward(lt.r, lp.pred_w, g_pre, conv, &g_r[l], gp.pred_w, gp.pred_b);

      if (l >= 1) {
        BasicTensor<Real> g_act(lt.du_act.shape());
        maxpool2x2_backward(g_target, lt.pool_argmax, g_act);
        BasicTensor<Real> g_du(lt.du_act.shape());
        relu_backward(lt.du_act, g_act, g_du);
        conv2d_backward(tr.layers[l - 1].error, lp.du_w, g_du, conv, &g_err[l - 1], gp.du_w,
                        gp.du_b);
      }
    }

    // Top-down pass in reverse: R_l -> (h_l^d, w) -> GU inputs -> (E_l(t-1), R_{l+1}(t)).
    for (std::size_t l = 0; l < num_layers; ++l) {
      const LayerTrace<Real>& lt = tr.layers[l];
      const LayerParams<Real>& lp = params.layer(l);
      LayerParams<Real>& gp = grads.layer(l);
      const std::size_t units = lp.units.size();
      const std::vector<Real>& weights = lt.mlp.weights;

      std::vector<Real> g_w(units);
      BasicTensor<Real> g_in(lt.units[0].input.shape());
      for (std::size_t d = 0; d < units; ++d) {
        g_w[d] = dot(g_r[l], lt.hidden[d]);
        BasicTensor<Real> g_hd = g_h[l][d];
        axpy(weights[d], g_r[l], g_hd);
        ConvLstmGrads<Real> cg =
            convlstm_backward(lp.units[d], lt.units[d], g_hd, g_c[l][d], conv, gp.units[d]);
        axpy(Real(1), cg.input, g_in);
        g_h[l][d] = std::move(cg.h_prev);
        g_c[l][d] = std::move(cg.c_prev);
      }
      if (!lt.mlp.hidden.empty()) {
        action_mlp_backward(lp.mlp, lt.mlp, std::span<const Real>(g_w), gp.mlp);
      }

      g_err_carry[l].set_zero();
      accumulate_channel_slice(g_in, 0, g_err_carry[l]);
      if (l + 1 < num_layers) {
        BasicTensor<Real> g_td(Shape{cfg.r_channels[l], g_in.dim(1), g_in.dim(2)});
        accumulate_channel_slice(g_in, cfg.error_channels(l), g_td);
        BasicTensor<Real> g_up(lt.topdown_upsampled.shape());
        conv2d_backward(lt.topdown_upsampled, lp.devconv_w, g_td, conv, &g_up, gp.devconv_w,
                        gp.devconv_b);
        upsample2x_backward(g_up, g_r[l + 1]);
      }
    }
  }
  return grads;
}

template <class Real>
Parameters<Real> init_parameters(const NetworkConfig& config, std::mt19937_64& rng) {
  Parameters<Real> p = Parameters<Real>::zeros(config);
  p.for_each([&](const std::string& name, BasicTensor<Real>& t) {
    if (t.rank() == 1) {
      const bool forget = name.size() >= 4 && name.compare(name.size() - 4, 4, ".f.b") == 0;
      t.fill(forget ? Real(1) : Real(0));
      return;
    }
    double fan_in = 0, fan_out = 0;
    if (t.rank() == 4) {
      const double area = static_cast<double>(t.dim(2) * t.dim(3));
      fan_out = static_cast<double>(t.dim(0)) * area;
      fan_in = static_cast<double>(t.dim(1)) * area;
    } else {
      fan_out = static_cast<double>(t.dim(0));
      fan_in = static_cast<double>(t.dim(1));
    }
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.data()) v = static_cast<Real>(dist(rng));
  });
  return p;
}

template <class Real>
Adam<Real>::Adam(const Parameters<Real>& like, double lr, double beta1, double beta2,
                 double epsilon)
    : m_(Parameters<Real>::zeros(like.config())),
      v_(Parameters<Real>::zeros(like.config())),
      lr_(lr),
      beta1_(beta1),
      beta2_(beta2),
      eps_(epsilon) {}

template <class Real>
void Adam<Real>::step(Parameters<Real>& params, const Parameters<Real>& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  std::vector<const BasicTensor<Real>*> g;
  grads.for_each([&](const std::string&, const BasicTensor<Real>& t) { g.push_back(&t); });
  std::vector<BasicTensor<Real>*> m, v;
  m_.for_each([&](const std::string&, BasicTensor<Real>& t) { m.push_back(&t); });
  v_.for_each([&](const std::string&, BasicTensor<Real>& t) { v.push_back(&t); });
  std::size_t k = 0;
  const Real b1 = static_cast<Real>(beta1_), b2 = static_cast<Real>(beta2_);
  params.for_each([&](const std::string&, BasicTensor<Real>& p) {
    const BasicTensor<Real>& gk = *g[k];
    BasicTensor<Real>& mk = *m[k];
    BasicTensor<Real>& vk = *v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      mk[i] = b1 * mk[i] + (Real(1) - b1) * gk[i];
      vk[i] = b2 * vk[i] + (Real(1) - b2) * gk[i] * gk[i];
      const double mhat = static_cast<double>(mk[i]) / c1;
      const double vhat = static_cast<double>(vk[i]) / c2;
      p[i] -= static_cast<Real>(lr_ * mhat / (std::sqrt(vhat) + eps_));
    }
    ++k;
  });
}

namespace {

void check_dims(const Dataset& data, const NetworkConfig& net) {
  if (data.height != net.height || data.width != net.width || data.channels != net.channels ||
      data.action_dim != net.action_dim) {
    throw ConfigError("dataset dims " + std::to_string(data.channels) + "x" +
                      std::to_string(data.height) + "x" + std::to_string(data.width) + " A=" +
                      std::to_string(data.action_dim) + " do not match network " +
                      std::to_string(net.channels) + "x" + std::to_string(net.height) + "x" +
                      std::to_string(net.width) + " A=" + std::to_string(net.action_dim));
  }
}

}  // namespace

TrainResult train(const Dataset& data, const TrainConfig& config, const NetworkConfig& net) {
  net.validate();
  std::mt19937_64 rng(config.seed);
  return train(data, config, init_parameters<float>(net, rng));
}

TrainResult train(const Dataset& data, const TrainConfig& config, Parameters<float> start) {
  config.validate();
  data.validate();
  const NetworkConfig& net = start.config();
  check_dims(data, net);
  if (data.sequences.empty()) throw std::invalid_argument("train: empty dataset");
  const std::vector<double> weights = resolve_layer_weights(config, net);

  TrainResult result;
  result.params = std::move(start);
  Adam<float> opt(result.params, config.learning_rate, config.beta1, config.beta2, config.epsilon);

  std::mt19937_64 order_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(data.sequences.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();

  std::deque<double> window;
  double window_sum = 0;
  std::vector<StepTrace<float>> traces;

  for (std::size_t iter = 1; iter <= config.max_iterations; ++iter) {
    if (cursor == order.size()) {
      std::shuffle(order.begin(), order.end(), order_rng);
      cursor = 0;
    }
    const Sequence& seq = data.sequences[order[cursor++]];
    RolloutResult<float> res = rollout(result.params, seq, {}, &traces);

    double loss = 0;
    for (std::size_t l = 0; l < net.num_layers; ++l) {
      double layer_loss = 0;
      for (std::size_t t = 1; t < res.error_means.size(); ++t) {
        layer_loss += weights[l] * static_cast<double>(res.error_means[t][l]);
      }
      if (!std::isfinite(layer_loss)) throw TrainingDiverged(iter, l);
      loss += layer_loss;
    }

    const float leak =
        iter <= config.surrogate_iterations ? static_cast<float>(config.surrogate_slope) : 0.0f;
    opt.step(result.params, backward(result.params, traces, weights, leak));
    result.losses.push_back(loss);
    result.iterations = iter;
    if (config.on_iteration) config.on_iteration(iter, loss);

    window.push_back(loss);
    window_sum += loss;
    if (window.size() > config.threshold_window) {
      window_sum -= window.front();
      window.pop_front();
    }
    if (config.threshold && window.size() == config.threshold_window &&
        window_sum / static_cast<double>(window.size()) <= *config.threshold) {
      result.reached_threshold = true;
      break;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Gradient checking

namespace {

// Hash of every ReLU on/off decision and max-pool winner in a recorded rollout.
std::uint64_t activation_signature(const std::vector<StepTrace<double>>& traces) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ULL;
  };
  for (const auto& tr : traces) {
    for (const auto& lt : tr.layers) {
      for (double v : lt.prediction.data()) mix(v > 0);
      for (double v : lt.error.data()) mix(v > 0);
      for (double v : lt.du_act.data()) mix(v > 0);
      for (std::uint32_t a : lt.pool_argmax) mix(a);
    }
  }
  return h;
}

struct Instance {
  std::vector<Tensor64> frames;
  std::vector<std::vector<double>> actions;
};

// Evaluated in extended precision so central differences of tiny gradients
// are not swamped by the last-ulp noise of a double loss.
long double instance_loss(const Parameters<double>& p, const Instance& inst,
                          const std::vector<double>& weights, std::uint64_t* signature) {
  std::vector<StepTrace<double>> traces;
  rollout(p, std::span<const Tensor64>(inst.frames),
          std::span<const std::vector<double>>(inst.actions), {}, &traces);
  if (signature) *signature = activation_signature(traces);
  long double loss = 0;
  for (std::size_t t = 1; t < traces.size(); ++t) {
    for (std::size_t l = 0; l < traces[t].layers.size(); ++l) {
      const Tensor64& e = traces[t].layers[l].error;
      long double sum = 0;
      for (double v : e.data()) sum += v;
      loss += static_cast<long double>(weights[l]) * sum / static_cast<long double>(e.size());
    }
  }
  return loss;
}

}  // namespace

GradCheckReport gradient_check(const NetworkConfig& config, const GradCheckOptions& options) {
  config.validate();
  if (options.steps < 2) throw std::invalid_argument("gradient_check needs at least 2 steps");
  std::mt19937_64 rng(options.seed);
  TrainConfig defaults;
  const std::vector<double> weights = resolve_layer_weights(defaults, config);
  std::uniform_real_distribution<double> small(-0.1, 0.1), unit(0.0, 1.0);

  // Redraw instances whose prediction ReLUs are dead everywhere; their gradients are
  // identically zero and would pass trivially.
  constexpr std::size_t kMaxDraws = 16;
  Parameters<double> params, analytic;
  Instance inst;
  std::vector<StepTrace<double>> traces;
  bool degenerate = true;
  std::size_t draws = 0;
  while (degenerate && draws < kMaxDraws) {
    ++draws;
    params = init_parameters<double>(config, rng);
    params.for_each([&](const std::string&, Tensor64& t) {
      if (t.rank() == 1) {
        for (auto& v : t.data()) v += small(rng);
      }
    });
    inst = Instance{};
    for (std::size_t s = 0; s < options.steps; ++s) {
      Tensor64 f(Shape{config.channels, config.height, config.width});
      for (auto& v : f.data()) v = unit(rng);
      inst.frames.push_back(std::move(f));
      std::vector<double> a(config.action_dim);
      for (auto& v : a) v = unit(rng);
      inst.actions.push_back(std::move(a));
    }
    rollout(params, std::span<const Tensor64>(inst.frames),
            std::span<const std::vector<double>>(inst.actions), {}, &traces);
    analytic = backward(params, traces, weights);
    degenerate = false;
    analytic.for_each([&](const std::string&, const Tensor64& g) {
      degenerate = degenerate || std::all_of(g.data().begin(), g.data().end(),
                                             [](double v) { return v == 0.0; });
    });
  }
  if (options.corrupt) options.corrupt(analytic);
  std::uint64_t base_sig = activation_signature(traces);

  std::vector<std::string> names;
  std::vector<Tensor64*> tensors;
  params.for_each([&](const std::string& n, Tensor64& t) {
    names.push_back(n);
    tensors.push_back(&t);
  });
  std::vector<const Tensor64*> grads;
  analytic.for_each([&](const std::string&, const Tensor64& t) { grads.push_back(&t); });

  GradCheckReport report;
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    Tensor64& t = *tensors[k];
    TensorCheck tc{names[k], 0.0, 0, 0};
    std::vector<std::size_t> candidates(t.size());
    std::iota(candidates.begin(), candidates.end(), std::size_t{0});
    std::shuffle(candidates.begin(), candidates.end(), rng);

    for (std::size_t idx : candidates) {
      if (tc.checked >= options.samples_per_tensor) break;
      const double orig = t[idx];
      std::uint64_t sig_plus = 0, sig_minus = 0;
      t[idx] = orig + options.eps;
      const long double lp = instance_loss(params, inst, weights, &sig_plus);
      t[idx] = orig - options.eps;
      const long double lm = instance_loss(params, inst, weights, &sig_minus);
      t[idx] = orig;
      if (sig_plus != base_sig || sig_minus != base_sig) {
        ++tc.skipped;
        continue;
      }
      const double numeric = static_cast<double>((lp - lm) / (2 * options.eps));
      const double a = (*grads[k])[idx];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-7});
      tc.max_rel_error = std::max(tc.max_rel_error, std::abs(a - numeric) / denom);
      ++tc.checked;
    }
    if (tc.max_rel_error >= report.max_rel_error) {
      report.max_rel_error = tc.max_rel_error;
      report.worst_tensor = tc.name;
    }
    report.tensors.push_back(std::move(tc));
  }
  report.draws = draws;
  report.degenerate = degenerate;
  report.passed = !degenerate && report.max_rel_error < options.tol;
  for (const auto& tc : report.tensors) {
    if (tc.checked == 0) report.passed = false;
  }
  return report;
}

#define AFA_INSTANTIATE_TRAINING(R)                                                              \
  template R compute_loss(const std::vector<std::vector<R>>&, const std::vector<double>&);       \
  template Parameters<R> backward(const Parameters<R>&, const std::vector<StepTrace<R>>&,        \
                                  const std::vector<double>&, R);                                \
  template Parameters<R> init_parameters<R>(const NetworkConfig&, std::mt19937_64&);             \
  template class Adam<R>;

AFA_INSTANTIATE_TRAINING(float)
AFA_INSTANTIATE_TRAINING(double)

}  // namespace afa
