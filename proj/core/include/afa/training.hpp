#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "afa/network.hpp"
#include "afa/sequence.hpp"

namespace afa {

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t max_iterations = 100000;
  /// Stop once the mean loss over the last `threshold_window` iterations drops to this value.
  std::optional<double> threshold;
  std::size_t threshold_window = 1;
  /// lambda_l; empty means 1.0 for layer 0 and 0.1 above.
  std::vector<double> layer_weights;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  /// For the first `surrogate_iterations` updates, prediction ReLUs that are inactive
  /// pass `surrogate_slope` times their incoming gradient. 0 iterations gives exact
  /// gradients throughout.
  std::size_t surrogate_iterations = 500;
  double surrogate_slope = 0.1;
  /// Called after every iteration with (1-based iteration, loss).
  std::function<void(std::size_t, double)> on_iteration;

  void validate() const;
};

/// lambda_l for every layer of `config`, applying the defaults.
std::vector<double> resolve_layer_weights(const TrainConfig& train, const NetworkConfig& config);

/// sum_{t>=1} sum_l lambda_l * mean(E_l(t)); error_means is indexed [t][l].
template <class Real>
Real compute_loss(const std::vector<std::vector<Real>>& error_means,
                  const std::vector<double>& layer_weights);

/// Reverse-mode gradients of compute_loss through a recorded rollout (BPTT over all steps).
/// A nonzero `prediction_leak` lets that fraction of the gradient through inactive
/// prediction ReLUs; the result is then no longer the exact gradient.
template <class Real>
Parameters<Real> backward(const Parameters<Real>& params, const std::vector<StepTrace<Real>>& traces,
                          const std::vector<double>& layer_weights, Real prediction_leak = Real(0));

/// Glorot-uniform weights, zero biases, forget-gate bias 1.
template <class Real>
Parameters<Real> init_parameters(const NetworkConfig& config, std::mt19937_64& rng);

template <class Real>
class Adam {
 public:
  Adam(const Parameters<Real>& like, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double epsilon = 1e-8);
  void step(Parameters<Real>& params, const Parameters<Real>& grads);
  std::size_t steps() const { return t_; }

 private:
  Parameters<Real> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

struct TrainResult {
  Parameters<float> params;
  std::vector<double> losses;
  std::size_t iterations = 0;
  bool reached_threshold = false;
};

/// One iteration = one full-sequence rollout + one optimizer update. Sequences are
/// visited in a seeded shuffled order, reshuffled each epoch.
TrainResult train(const Dataset& data, const TrainConfig& config, const NetworkConfig& net);

/// Continues training from given parameters (fresh optimizer state).
TrainResult train(const Dataset& data, const TrainConfig& config, Parameters<float> start);

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-4;
  /// Elements checked per tensor; tensors smaller than this are checked exhaustively.
  std::size_t samples_per_tensor = 12;
  std::size_t steps = 3;
  std::uint64_t seed = 0;
  /// Test hook: tamper with analytic gradients before comparison.
  std::function<void(Parameters<double>&)> corrupt;
};

struct TensorCheck {
  std::string name;
  double max_rel_error = 0;
  std::size_t checked = 0;
  /// Elements whose finite-difference stencil crossed a ReLU or max-pool switch.
  std::size_t skipped = 0;
};

struct GradCheckReport {
  std::vector<TensorCheck> tensors;
  double max_rel_error = 0;
  std::string worst_tensor;
  /// Random instances drawn until every tensor had a nonzero analytic gradient.
  std::size_t draws = 0;
  /// No draw qualified; the check then fails.
  bool degenerate = false;
  bool passed = false;
};

/// Compares analytic and central-difference gradients on a random instance of
/// `config` (64-bit arithmetic).
GradCheckReport gradient_check(const NetworkConfig& config, const GradCheckOptions& options = {});

}  // namespace afa
