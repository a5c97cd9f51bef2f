#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "afa/data.hpp"
#include "afa/errors.hpp"
#include "afa/eval.hpp"
#include "afa/training.hpp"

using namespace afa;
namespace fs = std::filesystem;

namespace {

Parameters<float> random_params(std::size_t layers = 2, std::size_t gu = 2, std::uint64_t seed = 1) {
  auto cfg = NetworkConfig::make(layers, 8, 12, 1, 2, gu);
  std::mt19937_64 rng(seed);
  return init_parameters<float>(cfg, rng);
}

// Minimal P2 reader for round-trip checks.
Tensor parse_pgm(const std::string& text) {
  std::istringstream in(text);
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  EXPECT_EQ(magic, "P2");
  EXPECT_EQ(maxval, 255u);
  Tensor t(Shape{1, h, w});
  for (std::size_t i = 0; i < h * w; ++i) {
    int v = -1;
    in >> v;
    EXPECT_GE(v, 0);
    t[i] = static_cast<float>(v) / 255.0f;
  }
  return t;
}

fs::path fresh_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST(EvalMse, ZeroModelAndCopyLastBaseline) {
  auto data = gen_minworld();
  auto p = Parameters<float>::zeros(NetworkConfig::make(2, 8, 12, 1, 2));
  auto rep = eval_mse(p, data);
  EXPECT_NEAR(rep.model_mse, 1.0 / 96.0, 1e-9);
  EXPECT_NEAR(rep.baseline_mse, 2.0 / 96.0, 1e-9);
  ASSERT_EQ(rep.sequences.size(), 192u);
  EXPECT_EQ(rep.sequences[0].counted_frames, 11u);
  ASSERT_EQ(rep.layer_error.size(), 12u);
  EXPECT_NEAR(rep.layer_error[1][0], 1.0 / 192.0, 1e-9);
}

TEST(EvalMse, ThreadCountDoesNotChangeResults) {
  auto data = gen_minworld();
  auto p = random_params();
  auto one = eval_mse(p, data, {1, {}});
  for (std::size_t th : {2u, 3u, 7u}) {
    auto many = eval_mse(p, data, {th, {}});
    EXPECT_EQ(many.model_mse, one.model_mse);
    EXPECT_EQ(many.baseline_mse, one.baseline_mse);
    EXPECT_EQ(many.layer_error, one.layer_error);
    EXPECT_EQ(argmax_accuracy(p, data, 2, {th, {}}), argmax_accuracy(p, data, 2, {1, {}}));
  }
}

TEST(EvalMse, DimensionMismatchIsConfigError) {
  MinWorldConfig mc;
  mc.height = 4;
  auto data = gen_minworld(mc);
  EXPECT_THROW(eval_mse(random_params(), data), ConfigError);
  EXPECT_THROW(action_swap_probe(random_params(), data), ConfigError);
}

TEST(ArgmaxAccuracy, ZeroModelHitsOnlyIndexZero) {
  auto data = gen_minworld();
  auto p = Parameters<float>::zeros(NetworkConfig::make(2, 8, 12, 1, 2));
  // An all-zero prediction has argmax 0, which is correct exactly when the
  // object sits at (0,0): 2 directions x 10 timesteps (t >= 2) out of 192 x 10.
  std::size_t hits = 0;
  for (const auto& s : data.sequences)
    for (std::size_t t = 2; t < s.length(); ++t) hits += argmax_index(s.frames[t]) == 0;
  EXPECT_DOUBLE_EQ(argmax_accuracy(p, data), static_cast<double>(hits) / (192.0 * 10.0));
}

TEST(SwapProbe, UniformAttentionGivesIdenticalPredictions) {
  auto data = gen_minworld();
  SwapProbeOptions opt;
  opt.step.attention = AttentionMode::uniform;
  auto r = action_swap_probe(random_params(), data, opt);
  EXPECT_EQ(r.states, 192u);
  EXPECT_EQ(r.bitwise_identical, 1.0);
  EXPECT_EQ(r.argmax_differs, 0.0);
  EXPECT_LE(r.accuracy, 0.5);

  opt.max_t = SwapProbeOptions::kFullHistory;
  auto full = action_swap_probe(random_params(), data, opt);
  EXPECT_EQ(full.states, 192u * 11u);
  EXPECT_EQ(full.accuracy_by_t.size(), 12u);
  EXPECT_EQ(full.bitwise_identical, 1.0);
}

TEST(SwapProbe, RejectsAmbiguousFrames) {
  auto data = gen_minworld();
  data.sequences[5].frames[0].at(0, 7, 11) = 1.0f;
  EXPECT_THROW(action_swap_probe(random_params(), data), std::invalid_argument);
}

TEST(GuDump, ReconstructsStoredRBitwise) {
  auto data = gen_minworld();
  for (std::size_t layers : {2u, 3u}) {
    auto p = random_params(layers, 2, 9);
    for (std::size_t l = 0; l < layers; ++l) {
      auto dump = dump_gu(p, data.sequences[17], l);
      ASSERT_EQ(dump.units.size(), 12u);
      std::vector<StepTrace<float>> traces;
      (void)rollout<float>(p, data.sequences[17], {}, &traces);
      for (std::size_t t = 0; t < 12; ++t) {
        ASSERT_EQ(dump.units[t].size(), 2u);
        ASSERT_EQ(dump.weights[t].size(), 2u);
        Tensor r = combine_units<float>(dump.weights[t], dump.units[t]);
        EXPECT_TRUE(bitwise_equal(r, dump.combined[t]));
        EXPECT_TRUE(bitwise_equal(r, traces[t].layers[l].r));
        // Independent sum in unit order.
        Tensor manual(r.shape());
        for (std::size_t i = 0; i < r.size(); ++i) {
          float acc = 0.0f;
          for (std::size_t d = 0; d < 2; ++d) acc += dump.weights[t][d] * dump.units[t][d][i];
          manual[i] = acc;
        }
        EXPECT_TRUE(bitwise_equal(manual, dump.combined[t]));
      }
    }
  }
}

TEST(GuDump, ActionOverrideChangesAttention) {
  auto data = gen_minworld();
  auto p = random_params();
  auto right = dump_gu(p, data.sequences[0], 0, std::vector<float>{1, 0});
  auto down = dump_gu(p, data.sequences[0], 0, std::vector<float>{0, 1});
  EXPECT_NE(right.weights[0], down.weights[0]);
  EXPECT_THROW(dump_gu(p, data.sequences[0], 2), std::invalid_argument);
}

TEST(GuDump, WritesTwoUnitImagesPerStep) {
  auto data = gen_minworld();
  auto p = random_params();
  auto dump = dump_gu(p, data.sequences[3], 0);
  auto dir = fresh_dir("afa_gu_dump_test");
  const std::size_t channels = 8;
  EXPECT_EQ(write_gu_dump(dump, dir), 12u * (2u + 1u) * channels);
  EXPECT_TRUE(fs::exists(dir / "t000_gu0_c00.pgm"));
  EXPECT_TRUE(fs::exists(dir / "t011_gu1_c07.pgm"));
  EXPECT_TRUE(fs::exists(dir / "t005_R_c03.pgm"));
  EXPECT_FALSE(fs::exists(dir / "t000_gu2_c00.pgm"));
  std::ifstream tsv(dir / "attention.tsv");
  std::string header;
  std::getline(tsv, header);
  EXPECT_EQ(header, "t\tw_1\tw_2");
  std::size_t rows = 0;
  for (std::string line; std::getline(tsv, line);) ++rows;
  EXPECT_EQ(rows, 12u);
  fs::remove_all(dir);
}

TEST(Pgm, HeaderScaleAndClamp) {
  Tensor f(Shape{1, 8, 12});
  f.at(0, 0, 0) = 1.0f;
  f.at(0, 0, 1) = 2.0f;
  f.at(0, 0, 2) = -1.0f;
  f.at(0, 0, 3) = 0.5f;
  const std::string s = pgm_string(f);
  EXPECT_EQ(s.rfind("P2\n12 8\n255\n", 0), 0u);
  Tensor back = parse_pgm(s);
  EXPECT_EQ(back.at(0, 0, 0), 1.0f);
  EXPECT_EQ(back.at(0, 0, 1), 1.0f);
  EXPECT_EQ(back.at(0, 0, 2), 0.0f);
  EXPECT_EQ(back.at(0, 0, 3), 128.0f / 255.0f);

  const std::string zero = pgm_string(Tensor(Shape{8, 12}));
  Tensor z = parse_pgm(zero);
  for (float v : z.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Pgm, QuantisedImagesRoundTripExactly) {
  Tensor f(Shape{1, 8, 12});
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>((i * 37) % 256) / 255.0f;
  Tensor back = parse_pgm(pgm_string(f));
  EXPECT_TRUE(bitwise_equal(back, f));
  auto path = fs::temp_directory_path() / "afa_test.pgm";
  export_pgm(f, path);
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), pgm_string(f));
  fs::remove(path);
  EXPECT_THROW(export_pgm(f, "/nonexistent/dir/x.pgm"), IoError);
}
