#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cips/checkpoint.hpp"
#include "cips/generator.hpp"
#include "cips/image.hpp"
#include "cips/synthesis.hpp"
#include "cips/verify.hpp"

namespace fs = std::filesystem;
using namespace cips;

namespace {

struct RunResult {
  int code = -1;
  std::string output;
};

// Runs the CLI with stdout and stderr merged.
RunResult cli(const std::string& args) {
  const std::string cmd = std::string("'") + CIPS_CLI_PATH + "' " + args + " 2>&1";
  RunResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("cips_cli_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
    ckpt_ = dir_ / "desk.ckpt";
    save_checkpoint(ckpt_, Generator(GeneratorConfig::desk(), 1));
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
  fs::path ckpt_;
};

}  // namespace

TEST_F(Cli, SampleIsRepeatableAndMatchesLibrary) {
  ASSERT_EQ(cli("sample --ckpt " + ckpt_.string() + " --seed 7 --out " + path("a.png")).code, 0);
  ASSERT_EQ(cli("sample --ckpt " + ckpt_.string() + " --seed 7 --threads 3 --out " + path("b.png")).code, 0);
  const std::string a = slurp(path("a.png"));
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(path("b.png")));
  const auto lib = sample_png_bytes(Generator(GeneratorConfig::desk(), 1), 7);
  EXPECT_EQ(a, std::string(lib.begin(), lib.end()));
}

TEST_F(Cli, FoveateLogsBudget) {
  const auto r = cli("foveate --config desk --model-seed 1 --seed 3 --fraction 0.25 --out " + path("f.png") +
                     " --sparse-out " + path("f.json"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("synthesized 64 of 256 pixels"), std::string::npos) << r.output;
  const Image img = read_png(path("f.png"));
  EXPECT_EQ(img.height, 16u);
  const auto sparse = nlohmann::json::parse(slurp(path("f.json")));
  EXPECT_EQ(sparse["pixels"].size(), 64u);
}

TEST_F(Cli, ParamsPaperDefaultWithinTolerance) {
  const auto r = cli(std::string("params --json --config ") + CIPS_SOURCE_DIR + "/configs/paper-default.toml");
  ASSERT_EQ(r.code, 0) << r.output;
  const auto j = nlohmann::json::parse(r.output);
  const double total = j["model"]["total"].get<double>();
  EXPECT_LT(std::abs(total - 45.9e6) / 45.9e6, 0.05) << total;
}

TEST_F(Cli, ParamsTableListsComponents) {
  const auto r = cli("params --config desk");
  ASSERT_EQ(r.code, 0) << r.output;
  for (const char* row : {"mapping", "fourier", "embeddings", "backbone", "rgb", "total"})
    EXPECT_NE(r.output.find(row), std::string::npos) << row;
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli("sample --no-such-flag").code, 2);
  EXPECT_EQ(cli("frobnicate").code, 2);
  EXPECT_EQ(cli("sample --ckpt " + path("missing.ckpt") + " --out " + path("x.png")).code, 2);
  std::ofstream(path("bad.toml")) << "[model\nhidden_dim = ";
  EXPECT_EQ(cli("sample --config " + path("bad.toml") + " --out " + path("x.png")).code, 2);
  std::ofstream(path("garbage.ckpt")) << "not a checkpoint";
  EXPECT_EQ(cli("info --ckpt " + path("garbage.ckpt")).code, 2);
}

TEST_F(Cli, InfoReportsCheckpointMetadata) {
  const auto r = cli("info --ckpt " + ckpt_.string());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find(config_hash(GeneratorConfig::desk())), std::string::npos) << r.output;
}

TEST_F(Cli, TrainWritesLoadableCheckpoint) {
  const auto r = cli("train --config desk --steps 2 --out " + path("t.ckpt") + " --metrics " + path("m.ndjson"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NO_THROW(load_checkpoint(path("t.ckpt")));
  std::istringstream metrics(slurp(path("m.ndjson")));
  std::string line;
  std::size_t lines = 0;
  while (std::getline(metrics, line)) {
    EXPECT_TRUE(nlohmann::json::parse(line).contains("d_loss"));
    ++lines;
  }
  EXPECT_EQ(lines, 2u);
}

TEST_F(Cli, AnalysisCommandsProduceFiles) {
  const std::string ck = " --ckpt " + ckpt_.string();
  EXPECT_EQ(cli("spectrum" + ck + " --count 4 --out-prefix " + path("spec")).code, 0);
  EXPECT_TRUE(fs::exists(path("spec.csv")));
  EXPECT_EQ(slurp(path("spec.csv")).rfind("radius,power\n", 0), 0u);
  EXPECT_EQ(cli("pca-embed" + ck + " --out " + path("pca.png")).code, 0);
  EXPECT_TRUE(fs::exists(path("pca.png")));
  EXPECT_EQ(cli("interpolate" + ck + " --seed-a 1 --seed-b 2 --steps 4 --out " + path("lerp.png")).code, 0);
  EXPECT_EQ(read_png(path("lerp.png")).width, 4u * 16u + 3u);  // 1-pixel gutters
}

TEST_F(Cli, VerifyReportsPassLines) {
  const auto r = cli("verify --only P2,P5");
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("PASS P2"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("PASS P5"), std::string::npos) << r.output;
}
