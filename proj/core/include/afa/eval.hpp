#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "afa/network.hpp"
#include "afa/sequence.hpp"

namespace afa {

struct SequenceMetrics {
  double model_mse = 0;     // mean over t >= 1 of (Xhat_0(t) - frame(t))^2
  double baseline_mse = 0;  // same for the copy-last-frame predictor
  std::size_t counted_frames = 0;
};

struct EvalReport {
  std::vector<SequenceMetrics> sequences;
  double model_mse = 0;
  double baseline_mse = 0;
  /// Mean of E_l(t) across sequences, indexed [t][l].
  std::vector<std::vector<double>> layer_error;
};

struct EvalOptions {
  std::size_t threads = 1;
  StepOptions step;
};

/// Throws ConfigError when the model and dataset dims disagree. Aggregates are
/// reduced in sequence order, so any thread count gives identical numbers.
EvalReport eval_mse(const Parameters<float>& params, const Dataset& data,
                    const EvalOptions& options = {});

/// Fraction of steps t >= min_t where argmax Xhat_0(t) hits the argmax of frame(t).
double argmax_accuracy(const Parameters<float>& params, const Dataset& data,
                       std::size_t min_t = 2, const EvalOptions& options = {});

struct SwapProbeOptions {
  std::vector<float> right_action{1.0f, 0.0f};
  std::vector<float> down_action{0.0f, 1.0f};
  std::size_t min_t = 1;
  /// Last timestep probed (inclusive). The default probes only the first transition,
  /// where the model has seen the object once; kFullHistory probes every step.
  std::size_t max_t = 1;
  static constexpr std::size_t kFullHistory = static_cast<std::size_t>(-1);
  StepOptions step;
  std::size_t threads = 1;
};

struct SwapProbeResult {
  std::size_t states = 0;
  double accuracy = 0;        // over both actions
  double right_accuracy = 0;
  double down_accuracy = 0;
  double argmax_differs = 0;  // fraction of states whose two predictions have different argmax
  double bitwise_identical = 0;  // fraction of states whose two predictions are bitwise equal
  std::vector<double> accuracy_by_t;  // [t], over both actions; 0 outside [min_t, max_t]
};

/// Replays each sequence's frames under a constant right action and a constant down
/// action. A probe state (sequence, min_t <= t <= max_t) is correct for an action when
/// argmax Xhat_0(t) sits one cell from the object in frame t-1 in that direction
/// (with wrap-around). Frames must each have a unique argmax.
SwapProbeResult action_swap_probe(const Parameters<float>& params, const Dataset& data,
                                  const SwapProbeOptions& options = {});

struct GuDump {
  std::size_t layer = 0;
  std::vector<std::vector<Tensor>> units;  // [t][d] hidden state h_l^d(t)
  std::vector<std::vector<float>> weights;  // [t] attention w(t)
  std::vector<Tensor> combined;             // [t] R_l(t)
};

/// Rolls the sequence forward and captures one layer's generative bank.
/// `action_override` replaces every action of the sequence when set.
GuDump dump_gu(const Parameters<float>& params, const Sequence& sequence, std::size_t layer,
               const std::optional<std::vector<float>>& action_override = std::nullopt);

/// Writes t{T}_gu{d}_c{C}.pgm, t{T}_R_c{C}.pgm (activations mapped from [-1,1] to
/// [0,1]) and attention.tsv into `dir`. Returns the number of PGM files written.
std::size_t write_gu_dump(const GuDump& dump, const std::filesystem::path& dir);

/// Tab-separated "t w_1 .. w_D" rows.
std::string attention_table(const GuDump& dump);

/// ASCII "P2" image, maxval 255, pixel = round(clamp(v, 0, 1) * 255).
/// Accepts H x W or 1 x H x W tensors.
std::string pgm_string(const Tensor& image);
void export_pgm(const Tensor& image, const std::filesystem::path& path);

/// Index of the first maximum over all elements.
std::size_t argmax_index(const Tensor& t);

}  // namespace afa
