#include <gtest/gtest.h>

#include <random>
#include <set>

#include "afa/network.hpp"
#include "afa/training.hpp"

using namespace afa;

namespace {

std::vector<float> act(float a, float b) { return {a, b}; }

Tensor impulse(std::size_t y, std::size_t x) {
  Tensor f(Shape{1, 8, 12});
  f.at(0, y, x) = 1.0f;
  return f;
}

}  // namespace

TEST(ShapeChain, TwoLayer) {
  auto cfg = NetworkConfig::make(2, 8, 12, 1, 2);
  cfg.validate();
  std::mt19937_64 rng(0);
  auto p = init_parameters<float>(cfg, rng);
  auto st = init_state<float>(cfg);
  StepTrace<float> trace;
  network_step<float>(p, st, impulse(2, 3), act(1, 0), {}, &trace);
  ASSERT_EQ(st.size(), 2u);
  EXPECT_EQ(st[0].prediction.shape(), (Shape{1, 8, 12}));
  EXPECT_EQ(st[0].error.shape(), (Shape{2, 8, 12}));
  EXPECT_EQ(st[0].r.shape(), (Shape{8, 8, 12}));
  EXPECT_EQ(st[1].target.shape(), (Shape{8, 4, 6}));
  EXPECT_EQ(st[1].prediction.shape(), (Shape{8, 4, 6}));
  EXPECT_EQ(st[1].error.shape(), (Shape{16, 4, 6}));
  EXPECT_EQ(st[1].r.shape(), (Shape{16, 4, 6}));
  EXPECT_EQ(trace.layers[1].du_act.shape(), (Shape{8, 8, 12}));
  EXPECT_EQ(cfg.error_channels(1), 2 * cfg.target_channels[1]);
  EXPECT_EQ(cfg.gu_input_channels(0), 2u + 8u);
  EXPECT_EQ(cfg.gu_input_channels(1), 16u);
}

TEST(ShapeChain, ThreeLayer) {
  auto cfg = NetworkConfig::make(3, 8, 12, 1, 2);
  std::mt19937_64 rng(0);
  auto p = init_parameters<float>(cfg, rng);
  auto st = init_state<float>(cfg);
  network_step<float>(p, st, impulse(0, 0), act(0, 1));
  const std::size_t h[] = {8, 4, 2}, w[] = {12, 6, 3};
  for (std::size_t l = 0; l < 3; ++l) {
    EXPECT_EQ(cfg.layer_height(l), h[l]);
    EXPECT_EQ(cfg.layer_width(l), w[l]);
    const std::size_t c = cfg.target_channels[l];
    EXPECT_EQ(st[l].target.shape(), (Shape{c, h[l], w[l]}));
    EXPECT_EQ(st[l].error.shape(), (Shape{2 * c, h[l], w[l]}));
    EXPECT_EQ(st[l].units.size(), cfg.gu_units[l]);
    EXPECT_EQ(st[l].attention.size(), cfg.gu_units[l]);
  }
  EXPECT_EQ(st[2].error.shape(), (Shape{32, 2, 3}));
}

TEST(NetworkConfig, TextRoundTripAndValidation) {
  auto cfg = NetworkConfig::make(3, 8, 12, 1, 2, 3);
  cfg.pad_mode = PadMode::circular;
  cfg.mlp_hidden = 7;
  EXPECT_EQ(NetworkConfig::from_text(cfg.to_text()), cfg);
  auto bad = cfg;
  bad.gu_units.pop_back();
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.kernel = 4;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.target_channels[0] = 2;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  EXPECT_THROW(pad_mode_from_string("reflect"), std::invalid_argument);
}

TEST(Parameters, NamesAreUniqueAndStable) {
  auto cfg = NetworkConfig::make(2, 8, 12, 1, 2);
  auto p = Parameters<float>::zeros(cfg);
  std::set<std::string> names;
  std::size_t scalars = 0;
  p.for_each([&](const std::string& n, const Tensor& t) {
    names.insert(n);
    scalars += t.size();
  });
  EXPECT_EQ(names.size(), p.tensor_count());
  EXPECT_EQ(scalars, p.scalar_count());
  ASSERT_NE(p.find("l0.gu1.f.b"), nullptr);
  EXPECT_EQ(p.find("l0.gu1.f.b")->shape(), (Shape{8}));
  EXPECT_NE(p.find("l1.du.w"), nullptr);
  EXPECT_EQ(p.find("l0.du.w"), nullptr);
  EXPECT_EQ(p.find("l1.devconv.w"), nullptr);
  EXPECT_EQ(p.find("l0.devconv.w")->shape(), (Shape{8, 16, 3, 3}));
}

TEST(Init, ForgetBiasOneOtherBiasesZero) {
  auto cfg = NetworkConfig::make(2, 8, 12, 1, 2);
  std::mt19937_64 rng(4);
  auto p = init_parameters<float>(cfg, rng);
  p.for_each([&](const std::string& n, const Tensor& t) {
    const bool bias = n.ends_with(".b") || n.ends_with("b1") || n.ends_with("b2");
    if (!bias) return;
    const float want = n.find(".f.b") != std::string::npos ? 1.0f : 0.0f;
    for (float v : t.data()) EXPECT_EQ(v, want) << n;
  });
  // Glorot bound sqrt(6 / (fan_in + fan_out)) for the prediction conv: 8*9 in, 1*9 out.
  const float bound = std::sqrt(6.0f / (72.0f + 9.0f));
  for (float v : p.layer(0).pred_w.data()) EXPECT_LE(std::abs(v), bound);
}

TEST(Network, PredictionNeverSeesCurrentFrame) {
  auto cfg = NetworkConfig::make(2, 8, 12, 1, 2);
  std::mt19937_64 rng(1);
  auto p = init_parameters<float>(cfg, rng);
  auto a = init_state<float>(cfg);
  network_step<float>(p, a, impulse(1, 1), act(1, 0));
  auto b = a;
  Tensor pa = network_step<float>(p, a, impulse(1, 2), act(1, 0));
  Tensor pb = network_step<float>(p, b, impulse(6, 9), act(1, 0));
  EXPECT_TRUE(bitwise_equal(pa, pb));
  EXPECT_FALSE(bitwise_equal(a[0].error, b[0].error));
}

TEST(Network, ErrorIsRectifiedDifference) {
  auto cfg = NetworkConfig::make(2, 8, 12, 1, 2);
  std::mt19937_64 rng(2);
  auto p = init_parameters<float>(cfg, rng);
  p.layer(0).pred_b.fill(0.3f);
  auto st = init_state<float>(cfg);
  Tensor frame = impulse(3, 4);
  Tensor xhat = network_step<float>(p, st, frame, act(0, 1));
  const std::size_t n = 96;
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_GE(xhat[i], 0.0f);
    EXPECT_EQ(st[0].error[i], std::max(frame[i] - xhat[i], 0.0f));
    EXPECT_EQ(st[0].error[n + i], std::max(xhat[i] - frame[i], 0.0f));
  }
}

TEST(Network, UniformAttentionIgnoresAction) {
  auto cfg = NetworkConfig::make(2, 8, 12, 1, 2);
  std::mt19937_64 rng(3);
  auto p = init_parameters<float>(cfg, rng);
  StepOptions uni{AttentionMode::uniform, 0};
  auto a = init_state<float>(cfg), b = init_state<float>(cfg);
  for (int t = 0; t < 4; ++t) {
    Tensor f = impulse(2, static_cast<std::size_t>(t));
    Tensor pa = network_step<float>(p, a, f, act(1, 0), uni);
    Tensor pb = network_step<float>(p, b, f, act(0, 1), uni);
    ASSERT_TRUE(bitwise_equal(pa, pb)) << t;
  }
  EXPECT_EQ(a[0].attention, (std::vector<float>{0.5f, 0.5f}));
}

TEST(Network, OneHotSelectsUnit) {
  auto cfg = NetworkConfig::make(1, 4, 4, 1, 2, 3);
  std::mt19937_64 rng(3);
  auto p = init_parameters<float>(cfg, rng);
  auto st = init_state<float>(cfg);
  StepTrace<float> tr;
  Tensor f(Shape{1, 4, 4}, 0.5f);
  network_step<float>(p, st, f, act(1, 0), {AttentionMode::one_hot, 2}, &tr);
  network_step<float>(p, st, f, act(1, 0), {AttentionMode::one_hot, 2}, &tr);
  EXPECT_EQ(st[0].attention, (std::vector<float>{0, 0, 1}));
  EXPECT_TRUE(bitwise_equal(st[0].r, tr.layers[0].hidden[2]));
}

TEST(Network, CombineUnitsWeightedSum) {
  Tensor h0(Shape{1, 1, 2}, std::vector<float>{1, 2});
  Tensor h1(Shape{1, 1, 2}, std::vector<float>{10, 20});
  std::vector<Tensor> hs{h0, h1};
  std::vector<float> w{0.25f, 0.75f};
  Tensor r = combine_units<float>(w, hs);
  EXPECT_FLOAT_EQ(r[0], 7.75f);
  EXPECT_FLOAT_EQ(r[1], 15.5f);
}

TEST(Network, ZeroParamsPredictNothing) {
  auto cfg = NetworkConfig::make(2, 8, 12, 1, 2);
  auto p = Parameters<float>::zeros(cfg);
  std::vector<Tensor> frames{impulse(0, 0), impulse(0, 1), impulse(0, 2)};
  std::vector<std::vector<float>> actions(3, act(1, 0));
  auto res = rollout<float>(p, frames, actions);
  for (const auto& x : res.predictions)
    for (float v : x.data()) EXPECT_EQ(v, 0.0f);
  EXPECT_FLOAT_EQ(res.error_means[1][0], 1.0f / 192.0f);
  EXPECT_EQ(res.error_means[1][1], 0.0f);
}
