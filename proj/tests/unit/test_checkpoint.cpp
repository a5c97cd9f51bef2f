#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "afa/checkpoint.hpp"
#include "afa/errors.hpp"
#include "afa/training.hpp"

using namespace afa;

namespace {

Parameters<float> sample_params(std::uint64_t seed = 1) {
  auto cfg = NetworkConfig::make(2, 8, 12, 1, 2);
  cfg.pad_mode = PadMode::circular;
  std::mt19937_64 rng(seed);
  return init_parameters<float>(cfg, rng);
}

void expect_same(const Parameters<float>& a, const Parameters<float>& b) {
  EXPECT_EQ(a.config(), b.config());
  std::vector<std::pair<std::string, const Tensor*>> ta;
  a.for_each([&](const std::string& n, const Tensor& t) { ta.emplace_back(n, &t); });
  std::size_t i = 0;
  b.for_each([&](const std::string& n, const Tensor& t) {
    ASSERT_LT(i, ta.size());
    EXPECT_EQ(n, ta[i].first);
    EXPECT_TRUE(bitwise_equal(t, *ta[i].second)) << n;
    ++i;
  });
  EXPECT_EQ(i, ta.size());
}

}  // namespace

TEST(Afac, RoundTripIsExact) {
  auto p = sample_params();
  (*p.find("l0.pred.b"))[0] = -0.0f;
  (*p.find("l1.mlp.w1"))[0] = std::numeric_limits<float>::denorm_min();
  auto bytes = encode_checkpoint(p);
  ASSERT_GE(bytes.size(), 8u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "AFAC");
  auto back = decode_checkpoint(bytes);
  expect_same(p, back);
  EXPECT_EQ(encode_checkpoint(back), bytes);
  EXPECT_TRUE(std::signbit((*back.find("l0.pred.b"))[0]));
}

TEST(Afac, FileRoundTripAndExpectedConfig) {
  auto p = sample_params();
  const auto path = std::filesystem::temp_directory_path() / "afa_test.afac";
  save_checkpoint(path, p);
  expect_same(p, load_checkpoint(path));
  expect_same(p, load_checkpoint(path, p.config()));
  auto other = p.config();
  other.pad_mode = PadMode::zero;
  EXPECT_THROW(load_checkpoint(path, other), ConfigError);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), IoError);
}

TEST(Afac, TruncationIsRejectedEverywhere) {
  auto cfg = NetworkConfig::make(1, 4, 4, 1, 2, 1);
  cfg.r_channels = {2};
  std::mt19937_64 rng(0);
  auto bytes = encode_checkpoint(init_parameters<float>(cfg, rng));
  for (std::size_t cut = 0; cut < bytes.size(); ++cut) {
    std::vector<std::uint8_t> t(bytes.begin(), bytes.begin() + static_cast<long>(cut));
    EXPECT_THROW(decode_checkpoint(t), FormatError) << cut;
  }
  auto extra = bytes;
  extra.push_back(1);
  EXPECT_THROW(decode_checkpoint(extra), FormatError);
}

TEST(Afac, CorruptedHeaderAndTensorsAreRejected) {
  auto bytes = encode_checkpoint(sample_params());
  auto bad = bytes;
  bad[1] = 'X';
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  bad = bytes;
  bad[4] = 2;
  EXPECT_THROW(decode_checkpoint(bad), FormatError);

  // Flip a byte inside the embedded config text.
  bad = bytes;
  const std::string text(bytes.begin() + 12, bytes.end());
  const auto pos = text.find("layers=2");
  ASSERT_NE(pos, std::string::npos);
  bad[12 + pos + 7] = '3';
  EXPECT_THROW(decode_checkpoint(bad), FormatError);

  // Rename the first tensor.
  bad = bytes;
  const auto name = text.find("l0.gu0.i.wx");
  ASSERT_NE(name, std::string::npos);
  bad[12 + name + 1] = '7';
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
}

TEST(Afac, RandomByteFlipsNeverCrash) {
  auto cfg = NetworkConfig::make(1, 4, 4, 1, 2, 1);
  cfg.r_channels = {2};
  std::mt19937_64 rng(0);
  auto bytes = encode_checkpoint(init_parameters<float>(cfg, rng));
  std::uniform_int_distribution<std::size_t> at(0, bytes.size() - 1);
  std::uniform_int_distribution<int> val(0, 255);
  for (int trial = 0; trial < 2000; ++trial) {
    auto bad = bytes;
    bad[at(rng)] = static_cast<std::uint8_t>(val(rng));
    try {
      (void)decode_checkpoint(bad);
    } catch (const FormatError&) {
    }
  }
}
