#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "afa/checkpoint.hpp"
#include "afa/data.hpp"
#include "afa/errors.hpp"
#include "afa/eval.hpp"
#include "afa/network.hpp"
#include "afa/training.hpp"

namespace afa {
namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Applies key=value lines to options that were not given on the command line.
void merge_config_file(CLI::App& app, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::map<std::string, int> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    const std::string where = path + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    CLI::Option* opt = app.get_option_no_throw("--" + key);
    if (opt == nullptr || key == "config" || key == "help") {
      throw ConfigError(where + ": unknown key '" + key + "' for " + app.get_name());
    }
    if (seen[key]++) throw ConfigError(where + ": duplicate key '" + key + "'");
    if (opt->count() > 0) continue;
    try {
      opt->add_result(value);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
}

struct Command {
  CLI::App* app = nullptr;
  std::string config_path;
  CLI::Option* seed_opt = nullptr;
  std::vector<std::string> required;
  std::function<int(std::ostream&)> run;
};

void add_seed(Command& c, std::uint64_t& seed) {
  c.seed_opt = c.app->add_option("--seed", seed, "RNG seed (falls back to $AFA_SEED, then 0)")
                   ->capture_default_str();
}

void apply_env_seed(Command& c) {
  if (c.seed_opt == nullptr || c.seed_opt->count() > 0) return;
  const char* env = std::getenv("AFA_SEED");
  if (env == nullptr || *env == '\0') return;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(env, &used);
    if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
    c.seed_opt->add_result(std::to_string(v));
    c.seed_opt->run_callback();
  } catch (const std::exception&) {
    throw ConfigError(std::string("AFA_SEED is not an unsigned integer: '") + env + "'");
  }
}

Tensor channel_plane(const Tensor& t, std::size_t c) {
  const std::size_t h = t.dim(1), w = t.dim(2);
  Tensor out(Shape{h, w});
  for (std::size_t i = 0; i < h * w; ++i) out[i] = t[c * h * w + i];
  return out;
}

std::string zero_pad(std::size_t v, std::size_t width) {
  std::string s = std::to_string(v);
  return s.size() >= width ? s : std::string(width - s.size(), '0') + s;
}

StepOptions parse_attention(const std::string& mode, std::size_t unit) {
  StepOptions s;
  if (mode == "uniform") s.attention = AttentionMode::uniform;
  if (mode == "one-hot") s.attention = AttentionMode::one_hot;
  s.one_hot_unit = unit;
  return s;
}

void check_attention(const StepOptions& s, const NetworkConfig& cfg) {
  if (s.attention != AttentionMode::one_hot) return;
  for (std::size_t d : cfg.gu_units) {
    if (s.one_hot_unit >= d) {
      throw ConfigError("--unit " + std::to_string(s.one_hot_unit) + " exceeds a layer with " +
                        std::to_string(d) + " generative units");
    }
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw IoError("failed writing '" + path + "'");
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Action-modulated predictive-coding network: data generation, training and evaluation",
               "afa"};
  app.require_subcommand(1, 1);
  app.footer("Every subcommand accepts --config FILE with key=value lines named after its long\n"
             "flags. Flags given on the command line override the file.\n"
             "Exit codes: 0 success, 1 usage/validation error, 2 I/O or format error.");
  std::vector<Command> commands;
  auto add_command = [&](const std::string& name, const std::string& help) -> Command& {
    Command& c = commands.emplace_back();
    c.app = app.add_subcommand(name, help);
    c.app->add_option("--config", c.config_path, "key=value file of defaults for this subcommand");
    return c;
  };
  commands.reserve(8);

  // gen-minworld -------------------------------------------------------------
  MinWorldConfig mw;
  std::string mw_out;
  std::vector<std::string> mw_dirs{"right", "down"};
  {
    Command& c = add_command("gen-minworld", "Generate the moving-pixel world dataset (AFAP)");
    c.app->add_option("--out", mw_out, "Output .afap path (required)");
    c.app->add_option("--height", mw.height, "Frame height")->capture_default_str();
    c.app->add_option("--width", mw.width, "Frame width")->capture_default_str();
    c.app->add_option("--length", mw.length, "Frames per sequence")->capture_default_str();
    c.app->add_option("--directions", mw_dirs, "Comma-separated subset of right,down")
        ->delimiter(',')
        ->check(CLI::IsMember({"right", "down"}))
        ->capture_default_str();
    c.required = {"out"};
    c.run = [&](std::ostream& o) {
      mw.directions.clear();
      for (const auto& d : mw_dirs) {
        mw.directions.push_back(d == "right" ? Direction::right : Direction::down);
      }
      const Dataset data = gen_minworld(mw);
      write_dataset(mw_out, data);
      o << "wrote " << data.sequences.size() << " sequences to " << mw_out << "\n";
      return 0;
    };
  }

  // gen-linetracer -----------------------------------------------------------
  LineTracerConfig lt;
  std::string lt_out;
  {
    Command& c = add_command("gen-linetracer", "Simulate the line-following robot and record its camera");
    c.app->add_option("--out", lt_out, "Output .afap path (required)");
    c.app->add_option("--steps", lt.steps, "Simulated timesteps (frames)")->capture_default_str();
    c.app->add_option("--seq-len", lt.sequence_length, "Frames per stored sequence")
        ->capture_default_str();
    c.app->add_option("--dt", lt.drive.dt, "Integration step, seconds")->capture_default_str();
    c.app->add_option("--speed", lt.speed, "Forward speed, m/s")->capture_default_str();
    c.app->add_option("--gain", lt.gain, "Steering gain, rad/s per metre of offset")
        ->capture_default_str();
    c.app->add_option("--lookahead", lt.lookahead, "Steering look-ahead distance, m")
        ->capture_default_str();
    c.app->add_option("--noise", lt.noise, "Std-dev of steering jitter, rad/s")->capture_default_str();
    c.app->add_option("--noise-smoothing", lt.noise_smoothing, "AR(1) coefficient of the jitter")
        ->capture_default_str();
    c.app->add_option("--start-fraction", lt.start_fraction,
                      "Start position along the bottom straight, in [-0.5, 0.5]")
        ->capture_default_str();
    c.app->add_option("--track-width", lt.track.width, "Track centreline width, m")
        ->capture_default_str();
    c.app->add_option("--track-height", lt.track.height, "Track centreline height, m")
        ->capture_default_str();
    c.app->add_option("--corner-radius", lt.track.corner_radius, "Track corner radius, m")
        ->capture_default_str();
    c.app->add_option("--line-width", lt.track.line_width, "Painted line width, m")
        ->capture_default_str();
    add_seed(c, lt.seed);
    c.required = {"out"};
    c.run = [&](std::ostream& o) {
      const LineTracerRun run = simulate_linetracer(lt);
      write_dataset(lt_out, run.data);
      o << "wrote " << run.data.sequences.size() << " sequences (" << run.states.size()
        << " frames) to " << lt_out << "\n";
      return 0;
    };
  }

  // train --------------------------------------------------------------------
  std::string tr_data, tr_out, tr_init, tr_loss_log, tr_pad = "zero";
  std::size_t tr_layers = 2, tr_gu = 2, tr_mlp_hidden = 4, tr_kernel = 3, tr_padding = 1;
  std::size_t tr_log_every = 1000;
  std::vector<std::size_t> tr_r_channels, tr_target_channels;
  std::optional<double> tr_threshold;
  TrainConfig tc;
  {
    Command& c = add_command("train", "Train a network on an AFAP dataset and write an AFAC checkpoint");
    c.app->add_option("--data", tr_data, "Training .afap path (required)");
    c.app->add_option("--out", tr_out, "Output .afac checkpoint (required)");
    c.app->add_option("--init", tr_init,
                      "Continue from this checkpoint (its architecture replaces the network flags)");
    c.app->add_option("--layers", tr_layers, "Number of layers L")->capture_default_str();
    c.app->add_option("--gu", tr_gu, "Generative units per layer D")->capture_default_str();
    c.app->add_option("--mlp-hidden", tr_mlp_hidden, "Hidden units of the action MLP")
        ->capture_default_str();
    c.app->add_option("--kernel", tr_kernel, "Convolution kernel size")->capture_default_str();
    c.app->add_option("--padding", tr_padding, "Convolution padding")->capture_default_str();
    c.app->add_option("--pad-mode", tr_pad, "Padding mode: zero or circular")
        ->check(CLI::IsMember({"zero", "circular"}))
        ->capture_default_str();
    c.app->add_option("--r-channels", tr_r_channels,
                      "Comma-separated GU hidden channels per layer (default 8*2^l)")
        ->delimiter(',');
    c.app->add_option("--target-channels", tr_target_channels,
                      "Comma-separated target channels for layers 1.. (default 8*2^(l-1))")
        ->delimiter(',');
    c.app->add_option("--iters", tc.max_iterations, "Maximum iterations")->capture_default_str();
    c.app->add_option("--lr", tc.learning_rate, "Adam learning rate")->capture_default_str();
    c.app->add_option("--threshold", tr_threshold, "Stop once the windowed mean loss reaches this");
    c.app->add_option("--threshold-window", tc.threshold_window,
                      "Iterations averaged for the threshold test")
        ->capture_default_str();
    c.app->add_option("--layer-weights", tc.layer_weights,
                      "Comma-separated loss weight per layer (default 1,0.1,0.1,...)")
        ->delimiter(',');
    c.app->add_option("--beta1", tc.beta1, "Adam first-moment decay")->capture_default_str();
    c.app->add_option("--beta2", tc.beta2, "Adam second-moment decay")->capture_default_str();
    c.app->add_option("--epsilon", tc.epsilon, "Adam epsilon")->capture_default_str();
    c.app->add_option("--warmup-iters", tc.surrogate_iterations,
                      "Initial iterations in which inactive prediction ReLUs leak gradient")
        ->capture_default_str();
    c.app->add_option("--warmup-slope", tc.surrogate_slope,
                      "Fraction of gradient leaked during the warm-up")
        ->capture_default_str();
    c.app->add_option("--loss-log", tr_loss_log, "Write 'iteration<TAB>loss' rows to this file");
    c.app->add_option("--log-every", tr_log_every, "Print progress every N iterations (0: never)")
        ->capture_default_str();
    add_seed(c, tc.seed);
    c.required = {"data", "out"};
    c.run = [&](std::ostream& o) {
      const Dataset data = read_dataset(tr_data);
      tc.threshold = tr_threshold;
      std::ostringstream log;
      tc.on_iteration = [&](std::size_t it, double loss) {
        if (!tr_loss_log.empty()) log << it << "\t" << num(loss) << "\n";
        if (tr_log_every > 0 && it % tr_log_every == 0) {
          o << "iter " << it << " loss " << num(loss) << "\n" << std::flush;
        }
      };
      TrainResult res;
      if (!tr_init.empty()) {
        res = train(data, tc, load_checkpoint(tr_init));
      } else {
        NetworkConfig net = NetworkConfig::make(tr_layers, data.height, data.width, data.channels,
                                                data.action_dim, tr_gu);
        net.mlp_hidden = tr_mlp_hidden;
        net.kernel = tr_kernel;
        net.padding = tr_padding;
        net.pad_mode = pad_mode_from_string(tr_pad);
        if (!tr_r_channels.empty()) net.r_channels = tr_r_channels;
        if (!tr_target_channels.empty()) {
          net.target_channels.assign(1, data.channels);
          net.target_channels.insert(net.target_channels.end(), tr_target_channels.begin(),
                                     tr_target_channels.end());
        }
        res = train(data, tc, net);
      }
      save_checkpoint(tr_out, res.params);
      if (!tr_loss_log.empty()) write_text(tr_loss_log, log.str());
      o << "iterations " << res.iterations << "\n";
      o << "final_loss " << num(res.losses.empty() ? 0.0 : res.losses.back()) << "\n";
      o << "reached_threshold " << (res.reached_threshold ? "yes" : "no") << "\n";
      o << "wrote " << tr_out << "\n";
      return 0;
    };
  }

  // predict ------------------------------------------------------------------
  std::string pr_model, pr_data, pr_dir, pr_attention = "learned";
  long long pr_sequence = -1;
  std::size_t pr_unit = 0;
  {
    Command& c = add_command("predict", "Write one PGM per predicted frame");
    c.app->add_option("--model", pr_model, "Checkpoint .afac (required)");
    c.app->add_option("--data", pr_data, "Dataset .afap (required)");
    c.app->add_option("--out-dir", pr_dir, "Output directory (required)");
    c.app->add_option("--sequence", pr_sequence, "Only this sequence index (-1: all)")
        ->capture_default_str();
    c.app->add_option("--attention", pr_attention, "learned, uniform or one-hot")
        ->check(CLI::IsMember({"learned", "uniform", "one-hot"}))
        ->capture_default_str();
    c.app->add_option("--unit", pr_unit, "Selected unit for --attention one-hot")
        ->capture_default_str();
    c.required = {"model", "data", "out-dir"};
    c.run = [&](std::ostream& o) {
      const Parameters<float> params = load_checkpoint(pr_model);
      const Dataset data = read_dataset(pr_data);
      const StepOptions step = parse_attention(pr_attention, pr_unit);
      check_attention(step, params.config());
      if (pr_sequence >= static_cast<long long>(data.sequences.size())) {
        throw std::invalid_argument("--sequence " + std::to_string(pr_sequence) + " out of range (" +
                                    std::to_string(data.sequences.size()) + " sequences)");
      }
      const NetworkConfig& cfg = params.config();
      if (cfg.height != data.height || cfg.width != data.width || cfg.channels != data.channels ||
          cfg.action_dim != data.action_dim) {
        throw ConfigError("checkpoint and dataset dimensions differ");
      }
      std::error_code ec;
      std::filesystem::create_directories(pr_dir, ec);
      if (ec) throw IoError("cannot create '" + pr_dir + "': " + ec.message());
      std::size_t files = 0;
      for (std::size_t s = 0; s < data.sequences.size(); ++s) {
        if (pr_sequence >= 0 && static_cast<std::size_t>(pr_sequence) != s) continue;
        const auto preds = rollout(params, data.sequences[s], step).predictions;
        for (std::size_t t = 0; t < preds.size(); ++t) {
          for (std::size_t ch = 0; ch < data.channels; ++ch) {
            std::string name = "s" + zero_pad(s, 3) + "_t" + zero_pad(t, 3);
            if (data.channels > 1) name += "_c" + zero_pad(ch, 2);
            export_pgm(channel_plane(preds[t], ch), std::filesystem::path(pr_dir) / (name + ".pgm"));
            ++files;
          }
        }
      }
      o << "wrote " << files << " PGM files to " << pr_dir << "\n";
      return 0;
    };
  }

  // eval ---------------------------------------------------------------------
  std::string ev_model, ev_data, ev_report, ev_errors, ev_attention = "learned";
  std::size_t ev_threads = 1, ev_unit = 0, ev_min_t = 2, ev_probe_min_t = 1;
  long long ev_probe_max_t = 1;
  bool ev_accuracy = false, ev_probe = false;
  {
    Command& c = add_command("eval", "Prediction MSE against the copy-last-frame baseline");
    c.app->add_option("--model", ev_model, "Checkpoint .afac (required)");
    c.app->add_option("--data", ev_data, "Dataset .afap (required)");
    c.app->add_option("--threads", ev_threads, "Worker threads over sequences")->capture_default_str();
    c.app->add_option("--attention", ev_attention, "learned, uniform or one-hot")
        ->check(CLI::IsMember({"learned", "uniform", "one-hot"}))
        ->capture_default_str();
    c.app->add_option("--unit", ev_unit, "Selected unit for --attention one-hot")
        ->capture_default_str();
    c.app->add_flag("--accuracy", ev_accuracy, "Also report next-frame argmax accuracy");
    c.app->add_option("--min-t", ev_min_t, "First timestep counted by --accuracy")
        ->capture_default_str();
    c.app->add_flag("--probe", ev_probe,
                    "Also run the right/down action-swap probe (single-pixel datasets only)");
    c.app->add_option("--probe-min-t", ev_probe_min_t, "First timestep probed")
        ->capture_default_str();
    c.app->add_option("--probe-max-t", ev_probe_max_t, "Last timestep probed (-1: sequence end)")
        ->capture_default_str();
    c.app->add_option("--report", ev_report, "Per-sequence TSV: sequence, model_mse, baseline_mse");
    c.app->add_option("--errors", ev_errors, "Mean E_l(t) TSV: t, E_0 .. E_{L-1}");
    c.required = {"model", "data"};
    c.run = [&](std::ostream& o) {
      const Parameters<float> params = load_checkpoint(ev_model);
      const Dataset data = read_dataset(ev_data);
      EvalOptions eo;
      eo.threads = ev_threads;
      eo.step = parse_attention(ev_attention, ev_unit);
      check_attention(eo.step, params.config());
      const EvalReport rep = eval_mse(params, data, eo);
      o << "model_mse " << num(rep.model_mse) << "\n";
      o << "baseline_mse " << num(rep.baseline_mse) << "\n";
      o << "mse_ratio " << num(rep.baseline_mse > 0 ? rep.model_mse / rep.baseline_mse : 0.0) << "\n";
      if (ev_accuracy) {
        o << "argmax_accuracy " << num(argmax_accuracy(params, data, ev_min_t, eo)) << "\n";
      }
      if (ev_probe) {
        SwapProbeOptions so;
        so.threads = ev_threads;
        so.step = eo.step;
        so.min_t = ev_probe_min_t;
        so.max_t = ev_probe_max_t < 0 ? SwapProbeOptions::kFullHistory
                                      : static_cast<std::size_t>(ev_probe_max_t);
        const SwapProbeResult p = action_swap_probe(params, data, so);
        o << "probe_states " << p.states << "\n";
        o << "probe_accuracy " << num(p.accuracy) << "\n";
        o << "probe_right_accuracy " << num(p.right_accuracy) << "\n";
        o << "probe_down_accuracy " << num(p.down_accuracy) << "\n";
        o << "probe_argmax_differs " << num(p.argmax_differs) << "\n";
        o << "probe_bitwise_identical " << num(p.bitwise_identical) << "\n";
        o << "probe_accuracy_by_t";
        for (double a : p.accuracy_by_t) o << " " << num(a);
        o << "\n";
      }
      if (!ev_report.empty()) {
        std::ostringstream r;
        r << "sequence\tmodel_mse\tbaseline_mse\tframes\n";
        for (std::size_t s = 0; s < rep.sequences.size(); ++s) {
          const auto& m = rep.sequences[s];
          r << s << "\t" << num(m.model_mse) << "\t" << num(m.baseline_mse) << "\t"
            << m.counted_frames << "\n";
        }
        write_text(ev_report, r.str());
      }
      if (!ev_errors.empty()) {
        std::ostringstream r;
        r << "t";
        for (std::size_t l = 0; l < params.config().num_layers; ++l) r << "\tE_" << l;
        r << "\n";
        for (std::size_t t = 0; t < rep.layer_error.size(); ++t) {
          r << t;
          for (double v : rep.layer_error[t]) r << "\t" << num(v);
          r << "\n";
        }
        write_text(ev_errors, r.str());
      }
      return 0;
    };
  }

  // gradcheck ----------------------------------------------------------------
  std::size_t gc_layers = 1, gc_gu = 2, gc_height = 4, gc_width = 4, gc_channels = 1, gc_actions = 2;
  std::string gc_pad = "zero";
  GradCheckOptions gco;
  {
    Command& c = add_command("gradcheck", "Compare analytic and finite-difference gradients (64-bit)");
    c.app->add_option("--layers", gc_layers, "Number of layers")->capture_default_str();
    c.app->add_option("--gu", gc_gu, "Generative units per layer")->capture_default_str();
    c.app->add_option("--height", gc_height, "Frame height")->capture_default_str();
    c.app->add_option("--width", gc_width, "Frame width")->capture_default_str();
    c.app->add_option("--channels", gc_channels, "Frame channels")->capture_default_str();
    c.app->add_option("--action-dim", gc_actions, "Action vector length")->capture_default_str();
    c.app->add_option("--pad-mode", gc_pad, "Padding mode: zero or circular")
        ->check(CLI::IsMember({"zero", "circular"}))
        ->capture_default_str();
    c.app->add_option("--steps", gco.steps, "Timesteps T")->capture_default_str();
    c.app->add_option("--eps", gco.eps, "Central-difference step")->capture_default_str();
    c.app->add_option("--tol", gco.tol, "Maximum allowed relative error")->capture_default_str();
    c.app->add_option("--samples", gco.samples_per_tensor, "Elements checked per tensor")
        ->capture_default_str();
    add_seed(c, gco.seed);
    c.run = [&](std::ostream& o) {
      NetworkConfig net =
          NetworkConfig::make(gc_layers, gc_height, gc_width, gc_channels, gc_actions, gc_gu);
      net.pad_mode = pad_mode_from_string(gc_pad);
      const GradCheckReport rep = gradient_check(net, gco);
      o << "tensor\tmax_rel_error\tchecked\tskipped\n";
      for (const auto& t : rep.tensors) {
        o << t.name << "\t" << num(t.max_rel_error) << "\t" << t.checked << "\t" << t.skipped << "\n";
      }
      o << "instances_drawn " << rep.draws << (rep.degenerate ? " (all degenerate)" : "") << "\n";
      o << "max_rel_error " << num(rep.max_rel_error) << " (" << rep.worst_tensor << ")\n";
      o << (rep.passed ? "PASS" : "FAIL") << "\n";
      return rep.passed ? 0 : 1;
    };
  }

  // dump-gu ------------------------------------------------------------------
  std::string du_model, du_data, du_dir;
  std::size_t du_sequence = 0, du_layer = 0;
  std::vector<float> du_action;
  {
    Command& c = add_command("dump-gu", "Export generative-unit activations and attention weights");
    c.app->add_option("--model", du_model, "Checkpoint .afac (required)");
    c.app->add_option("--data", du_data, "Dataset .afap (required)");
    c.app->add_option("--out-dir", du_dir, "Output directory (required)");
    c.app->add_option("--sequence", du_sequence, "Sequence index")->capture_default_str();
    c.app->add_option("--layer", du_layer, "Layer to dump")->capture_default_str();
    c.app->add_option("--action", du_action,
                      "Comma-separated action applied at every step instead of the recorded one")
        ->delimiter(',');
    c.required = {"model", "data", "out-dir"};
    c.run = [&](std::ostream& o) {
      const Parameters<float> params = load_checkpoint(du_model);
      const Dataset data = read_dataset(du_data);
      if (du_sequence >= data.sequences.size()) {
        throw std::invalid_argument("--sequence " + std::to_string(du_sequence) + " out of range (" +
                                    std::to_string(data.sequences.size()) + " sequences)");
      }
      std::optional<std::vector<float>> override_action;
      if (!du_action.empty()) {
        if (du_action.size() != params.config().action_dim) {
          throw std::invalid_argument("--action needs " + std::to_string(params.config().action_dim) +
                                      " values");
        }
        override_action = du_action;
      }
      if (params.config().height != data.height || params.config().width != data.width ||
          params.config().channels != data.channels ||
          params.config().action_dim != data.action_dim) {
        throw ConfigError("checkpoint and dataset dimensions differ");
      }
      const GuDump dump = dump_gu(params, data.sequences[du_sequence], du_layer, override_action);
      const std::size_t files = write_gu_dump(dump, du_dir);
      o << "wrote " << files << " PGM files and attention.tsv to " << du_dir << "\n";
      return 0;
    };
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  for (Command& c : commands) {
    if (!c.app->parsed()) continue;
    try {
      if (!c.config_path.empty()) merge_config_file(*c.app, c.config_path);
      apply_env_seed(c);
      for (const auto& name : c.required) {
        if (c.app->get_option("--" + name)->count() == 0) {
          err << "error: --" << name << " is required\n"
              << "Run 'afa " << c.app->get_name() << " --help' for usage.\n";
          return 1;
        }
      }
      out << "# afa " << c.app->get_name() << "\n" << c.app->config_to_str(true, false);
      out << "# ---\n";
      return c.run(out);
    } catch (const FormatError& e) {
      err << "format error: " << e.what() << "\n";
      return 2;
    } catch (const IoError& e) {
      err << "I/O error: " << e.what() << "\n";
      return 2;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return 1;
    }
  }
  return 1;
}

int cli_dispatch(int argc, const char* const* argv) {
  return cli_dispatch(argc, argv, std::cout, std::cerr);
}

}  // namespace afa
