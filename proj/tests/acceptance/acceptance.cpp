// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>

#include "afa/checkpoint.hpp"
#include "afa/data.hpp"
#include "afa/errors.hpp"
#include "afa/eval.hpp"
#include "afa/training.hpp"

using namespace afa;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void verdict(bool ok, const char* name, const std::string& detail) {
  std::printf("[%s] %s: %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

void info(const std::string& text) {
  std::printf("[INFO] %s\n", text.c_str());
  std::fflush(stdout);
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

TrainResult train_logged(const char* tag, const Dataset& data, TrainConfig tc, const NetworkConfig& net) {
  const auto t0 = Clock::now();
  tc.on_iteration = [&](std::size_t it, double loss) {
    if (it % 500 == 0) info(fmt("%s iter %zu loss %.6g (%.0fs)", tag, it, loss, seconds_since(t0)));
  };
  return train(data, tc, net);
}

// ---------------------------------------------------------------------------

void gradient_correctness() {
  const auto t0 = Clock::now();
  GradCheckOptions small;
  small.steps = 3;
  auto r1 = gradient_check(NetworkConfig::make(1, 4, 4, 1, 2, 2), small);
  GradCheckOptions big;
  big.steps = 4;
  auto r2 = gradient_check(NetworkConfig::make(2, 8, 12, 1, 2, 2), big);
  const double secs = seconds_since(t0);
  const bool ok = r1.passed && r2.passed && r1.max_rel_error < 1e-4 && r2.max_rel_error < 1e-4 &&
                  secs < 60.0;
  verdict(ok, "gradient correctness",
          fmt("1-layer max rel %.3g (%s), 2-layer max rel %.3g (%s), %.1fs", r1.max_rel_error,
              r1.worst_tensor.c_str(), r2.max_rel_error, r2.worst_tensor.c_str(), secs));
}

bool chain_ok(std::size_t layers) {
  auto cfg = NetworkConfig::make(layers, 8, 12, 1, 2);
  std::mt19937_64 rng(0);
  auto p = init_parameters<float>(cfg, rng);
  auto st = init_state<float>(cfg);
  Tensor frame(Shape{1, 8, 12});
  frame.at(0, 3, 5) = 1.0f;
  const std::vector<float> a{1.0f, 0.0f};
  network_step<float>(p, st, frame, a);
  const std::size_t h[] = {8, 4, 2}, w[] = {12, 6, 3};
  bool ok = st.size() == layers;
  for (std::size_t l = 0; ok && l < layers; ++l) {
    const std::size_t c = cfg.target_channels[l];
    ok = st[l].target.shape() == Shape{c, h[l], w[l]} &&
         st[l].prediction.shape() == Shape{c, h[l], w[l]} &&
         st[l].error.shape() == Shape{2 * c, h[l], w[l]} &&
         st[l].r.shape() == Shape{cfg.r_channels[l], h[l], w[l]};
  }
  return ok;
}

void shape_conformance() {
  const bool two = chain_ok(2), three = chain_ok(3);
  verdict(two && three, "shape conformance",
          fmt("2-layer %s, 3-layer %s (8x12 -> 4x6 -> 2x3, E = 2C)", two ? "ok" : "bad",
              three ? "ok" : "bad"));
}

// ---------------------------------------------------------------------------

void minworld_and_ablation(const Dataset& data, Parameters<float>& trained_out) {
  auto net = NetworkConfig::make(2, 8, 12, 1, 2, 2);
  net.pad_mode = PadMode::circular;
  TrainConfig tc;
  tc.learning_rate = 0.001;
  tc.max_iterations = 3000;
  tc.seed = 0;
  const auto t0 = Clock::now();
  auto res = train_logged("minworld", data, tc, net);
  const double train_secs = seconds_since(t0);
  trained_out = res.params;

  const auto mse = eval_mse(res.params, data);
  const double acc = argmax_accuracy(res.params, data, 2);
  const auto probe = action_swap_probe(res.params, data);
  const bool a = acc >= 0.95;
  const bool b = mse.model_mse < 0.5 * mse.baseline_mse;
  const bool c = probe.accuracy >= 0.90;
  verdict(a && b && c, "minimalistic world",
          fmt("%zu iters in %.0fs; argmax acc %.4f (>=0.95), mse %.3g vs baseline %.3g "
              "(ratio %.3g, <0.5), swap-probe acc %.4f (>=0.90)",
              res.iterations, train_secs, acc, mse.model_mse, mse.baseline_mse,
              mse.model_mse / mse.baseline_mse, probe.accuracy));

  SwapProbeOptions full;
  full.max_t = SwapProbeOptions::kFullHistory;
  const auto fp = action_swap_probe(res.params, data, full);
  std::ostringstream by_t;
  for (std::size_t t = 1; t < fp.accuracy_by_t.size(); ++t) by_t << (t > 1 ? " " : "") << fmt("%.2f", fp.accuracy_by_t[t]);
  info(fmt("full-history swap probe: acc %.4f, differs %.4f, by t [%s]", fp.accuracy,
           fp.argmax_differs, by_t.str().c_str()));

  SwapProbeOptions uni;
  uni.step.attention = AttentionMode::uniform;
  const auto up = action_swap_probe(res.params, data, uni);
  const bool ok = up.bitwise_identical == 1.0 && probe.argmax_differs >= 0.90;
  verdict(ok, "action ablation",
          fmt("uniform attention: %.4f of %zu states bitwise identical; trained: argmax differs on "
              "%.4f (>=0.90)",
              up.bitwise_identical, up.states, probe.argmax_differs));
}

void line_tracer() {
  LineTracerConfig train_cfg;
  train_cfg.steps = 5000;
  train_cfg.drive.dt = 0.02;
  train_cfg.seed = 1;
  LineTracerConfig test_cfg = train_cfg;
  test_cfg.steps = 1000;
  test_cfg.seed = 2;
  test_cfg.start_fraction = 0.3;
  const Dataset train_data = simulate_linetracer(train_cfg).data;
  const Dataset test_data = simulate_linetracer(test_cfg).data;

  auto net = NetworkConfig::make(3, 8, 12, 1, 2, 2);
  net.mlp_hidden = 4;
  TrainConfig tc;
  tc.max_iterations = 1000;
  tc.seed = 0;
  const auto t0 = Clock::now();
  auto res = train_logged("line tracer", train_data, tc, net);
  const double secs = seconds_since(t0);
  const auto rep = eval_mse(res.params, test_data);
  verdict(rep.model_mse < rep.baseline_mse, "line tracer",
          fmt("%zu steps, %zu iters in %.0fs; held-out mse %.5g vs copy-last %.5g (ratio %.3f)",
              train_cfg.steps, res.iterations, secs, rep.model_mse, rep.baseline_mse,
              rep.model_mse / rep.baseline_mse));
}

void gu_dump_invariant(const Parameters<float>& params, const Dataset& data) {
  std::size_t steps = 0, exact = 0, wrong_count = 0;
  for (const auto& seq : data.sequences) {
    std::vector<StepTrace<float>> traces;
    (void)rollout<float>(params, seq, {}, &traces);
    for (std::size_t l = 0; l < params.config().num_layers; ++l) {
      const GuDump dump = dump_gu(params, seq, l);
      for (std::size_t t = 0; t < seq.length(); ++t) {
        ++steps;
        if (dump.units[t].size() != 2) ++wrong_count;
        Tensor r(dump.combined[t].shape());
        for (std::size_t d = 0; d < dump.units[t].size(); ++d)
          for (std::size_t i = 0; i < r.size(); ++i) r[i] += dump.weights[t][d] * dump.units[t][d][i];
        if (bitwise_equal(r, dump.combined[t]) && bitwise_equal(r, traces[t].layers[l].r)) ++exact;
      }
    }
  }
  verdict(exact == steps && wrong_count == 0, "GU-dump invariant",
          fmt("%zu/%zu layer-steps reconstruct R bitwise; %zu with a unit count other than 2", exact,
              steps, wrong_count));
}

template <class F>
bool rejects(F&& f) {
  try {
    f();
  } catch (const FormatError&) {
    return true;
  } catch (...) {
    return false;
  }
  return false;
}

void determinism_and_formats(const Dataset& mw) {
  namespace fs = std::filesystem;
  MinWorldConfig small_cfg;
  small_cfg.height = 4;
  small_cfg.width = 4;
  small_cfg.length = 5;
  const Dataset small = gen_minworld(small_cfg);
  auto net = NetworkConfig::make(2, 4, 4, 1, 2, 2);
  TrainConfig tc;
  tc.max_iterations = 20;
  tc.seed = 11;
  const auto c1 = encode_checkpoint(train(small, tc, net).params);
  const auto c2 = encode_checkpoint(train(small, tc, net).params);
  const bool deterministic = c1 == c2;

  const auto dir = fs::temp_directory_path() / "afa_acceptance";
  fs::create_directories(dir);
  write_dataset(dir / "mw.afap", mw);
  const bool afap = encode_dataset(read_dataset(dir / "mw.afap")) == encode_dataset(mw) &&
                    fs::file_size(dir / "mw.afap") == 903964;
  save_checkpoint(dir / "m.afac", decode_checkpoint(c1));
  std::ifstream in(dir / "m.afac", std::ios::binary);
  const std::vector<std::uint8_t> reread((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  const bool afac = reread == c1;

  Tensor img(Shape{1, 8, 12});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>((i * 53) % 256) / 255.0f;
  std::istringstream pgm(pgm_string(img));
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  pgm >> magic >> w >> h >> maxval;
  Tensor back(Shape{1, h, w});
  for (std::size_t i = 0; i < back.size(); ++i) {
    int v = 0;
    pgm >> v;
    back[i] = static_cast<float>(v) / 255.0f;
  }
  const bool pgm_ok = magic == "P2" && maxval == 255 && bitwise_equal(back, img);

  std::size_t tried = 0, rejected = 0;
  const auto ds = encode_dataset(small);
  for (std::size_t cut = 0; cut < ds.size(); cut += 7) {
    ++tried;
    rejected += rejects([&] { decode_dataset(std::span(ds.data(), cut)); });
  }
  for (std::size_t cut = 0; cut < c1.size(); cut += 13) {
    ++tried;
    rejected += rejects([&] { decode_checkpoint(std::span(c1.data(), cut)); });
  }
  auto bad = c1;
  bad[0] ^= 0xff;
  ++tried;
  rejected += rejects([&] { decode_checkpoint(bad); });
  bad = ds;
  bad[4] = 7;
  ++tried;
  rejected += rejects([&] { decode_dataset(bad); });
  fs::remove_all(dir);

  const bool ok = deterministic && afap && afac && pgm_ok && rejected == tried;
  verdict(ok, "determinism and formats",
          fmt("checkpoints %s; AFAP %s; AFAC %s; PGM %s; %zu/%zu corrupted inputs rejected",
              deterministic ? "identical" : "DIFFER", afap ? "exact" : "MISMATCH",
              afac ? "exact" : "MISMATCH", pgm_ok ? "exact" : "MISMATCH", rejected, tried));
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  gradient_correctness();
  shape_conformance();
  const Dataset mw = gen_minworld();
  Parameters<float> trained;
  minworld_and_ablation(mw, trained);
  line_tracer();
  gu_dump_invariant(trained, mw);
  determinism_and_formats(mw);
  info(fmt("total %.0fs, %d failing", seconds_since(t0), failures));
  return failures == 0 ? 0 : 1;
}
