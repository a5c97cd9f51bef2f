#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "afa/checkpoint.hpp"
#include "afa/data.hpp"
#include "cli.hpp"

namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out, err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "afa");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = afa::cli_dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("afa_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    unsetenv("AFA_SEED");
  }
  void TearDown() override {
    fs::remove_all(dir_);
    unsetenv("AFA_SEED");
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(dir_ / name) << text;
    return path(name);
  }
  fs::path dir_;
};

bool has_line(const std::string& text, const std::string& line) {
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);)
    if (l == line) return true;
  return false;
}

}  // namespace

TEST_F(CliTest, HelpOnEverySubcommandExitsZero) {
  EXPECT_EQ(run({"--help"}).code, 0);
  for (const char* cmd :
       {"gen-minworld", "gen-linetracer", "train", "predict", "eval", "gradcheck", "dump-gu"}) {
    CliRun r = run({cmd, "--help"});
    EXPECT_EQ(r.code, 0) << cmd;
    EXPECT_NE(r.out.find("--config"), std::string::npos) << cmd;
  }
}

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"gen-minworld"}).code, 1);
  EXPECT_EQ(run({"gen-minworld", "--out", path("a.afap"), "--height", "x"}).code, 1);
  EXPECT_EQ(run({"gen-minworld", "--out", path("a.afap"), "--directions", "left"}).code, 1);
  EXPECT_EQ(run({"train", "--data", path("a.afap"), "--out", path("m.afac"), "--pad-mode", "mirror"}).code, 1);
}

TEST_F(CliTest, IoAndFormatErrorsExitTwo) {
  EXPECT_EQ(run({"eval", "--model", path("missing.afac"), "--data", path("missing.afap")}).code, 2);
  const std::string junk = write("junk.afap", "not a dataset");
  EXPECT_EQ(run({"train", "--data", junk, "--out", path("m.afac"), "--iters", "1"}).code, 2);
  EXPECT_EQ(run({"gen-minworld", "--config", path("nope.cfg")}).code, 2);
}

TEST_F(CliTest, ConfigFileKeysAreValidated) {
  const std::string unknown = write("u.cfg", "out = x.afap\nbogus = 1\n");
  EXPECT_EQ(run({"gen-minworld", "--config", unknown}).code, 1);
  const std::string dup = write("d.cfg", "height = 4\nheight = 5\n");
  EXPECT_EQ(run({"gen-minworld", "--out", path("a.afap"), "--config", dup}).code, 1);
  const std::string bad = write("b.cfg", "height\n");
  EXPECT_EQ(run({"gen-minworld", "--out", path("a.afap"), "--config", bad}).code, 1);
}

TEST_F(CliTest, PrecedenceFlagFileEnvDefault) {
  const std::string out = path("lt.afap");
  const std::string cfg = write("lt.cfg", "# comment\nsteps = 50\nseed = 7\nout = \"" + out + "\"\n");

  CliRun r = run({"gen-linetracer", "--out", out, "--steps", "50"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(has_line(r.out, "seed=0")) << r.out;

  setenv("AFA_SEED", "5", 1);
  r = run({"gen-linetracer", "--out", out, "--steps", "50"});
  EXPECT_TRUE(has_line(r.out, "seed=5")) << r.out;
  const auto env_bytes = afa::encode_dataset(afa::read_dataset(out));

  r = run({"gen-linetracer", "--config", cfg});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(has_line(r.out, "seed=7")) << r.out;
  EXPECT_TRUE(has_line(r.out, "steps=50")) << r.out;

  r = run({"gen-linetracer", "--config", cfg, "--seed", "5"});
  EXPECT_TRUE(has_line(r.out, "seed=5")) << r.out;
  EXPECT_EQ(afa::encode_dataset(afa::read_dataset(out)), env_bytes);

  setenv("AFA_SEED", "abc", 1);
  EXPECT_EQ(run({"gen-linetracer", "--out", out, "--steps", "50"}).code, 1);
}

TEST_F(CliTest, EndToEndPipeline) {
  const std::string data = path("mw.afap");
  ASSERT_EQ(run({"gen-minworld", "--out", data, "--height", "4", "--width", "6", "--length", "5"}).code, 0);
  EXPECT_EQ(afa::read_dataset(data).sequences.size(), 48u);

  const std::string model = path("m.afac");
  const std::string log = path("loss.tsv");
  CliRun r = run({"train", "--data", data, "--out", model, "--layers", "2", "--r-channels", "4,4",
               "--target-channels", "2", "--iters", "3", "--pad-mode", "circular",
               "--loss-log", log, "--seed", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("iterations 3"), std::string::npos) << r.out;
  auto params = afa::load_checkpoint(model);
  EXPECT_EQ(params.config().pad_mode, afa::PadMode::circular);
  EXPECT_TRUE(fs::exists(log));

  r = run({"eval", "--model", model, "--data", data, "--threads", "2", "--probe"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("model_mse"), std::string::npos);
  EXPECT_NE(r.out.find("probe_accuracy"), std::string::npos);

  const std::string pred = path("pred");
  r = run({"predict", "--model", model, "--data", data, "--out-dir", pred, "--sequence", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(fs::path(pred) / "s001_t004.pgm"));

  const std::string gu = path("gu");
  r = run({"dump-gu", "--model", model, "--data", data, "--out-dir", gu, "--layer", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(fs::path(gu) / "attention.tsv"));
  EXPECT_TRUE(fs::exists(fs::path(gu) / "t004_gu1_c03.pgm"));

  const std::string other = path("other.afap");
  ASSERT_EQ(run({"gen-minworld", "--out", other}).code, 0);
  EXPECT_EQ(run({"eval", "--model", model, "--data", other}).code, 1);
}

TEST_F(CliTest, GradcheckReportsVerdict) {
  CliRun r = run({"gradcheck"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("PASS"), std::string::npos);
  r = run({"gradcheck", "--tol", "0"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("FAIL"), std::string::npos);
}
