#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

#include "facelab/cli.hpp"
#include "facelab/config.hpp"
#include "facelab/error.hpp"
#include "facelab/manifest.hpp"
#include "test_util.hpp"

namespace facelab {
namespace {

using testing::TempDir;
using testing::write_text;

TEST(Config, EmptyTextGivesDefaults) {
  EXPECT_EQ(resolve_config_text(""), RunConfig{});
  EXPECT_EQ(resolve_config_text("# only a comment\n\n"), RunConfig{});
  EXPECT_EQ(resolve_config(std::nullopt), RunConfig{});
}

TEST(Config, FileThenOverrides) {
  const std::string text = "[schedule]\nlr = 0.2\nbatch_size = 64\n[run]\nseed = 5\n";
  const auto file_only = resolve_config_text(text);
  EXPECT_EQ(file_only.schedule.base_lr, 0.2);
  EXPECT_EQ(file_only.schedule.batch_size, 64);
  EXPECT_EQ(file_only.seed, 5u);
  const auto both = resolve_config_text(text, {"schedule.lr=0.3", "run.seed=9"});
  EXPECT_EQ(both.schedule.base_lr, 0.3);
  EXPECT_EQ(both.schedule.batch_size, 64);
  EXPECT_EQ(both.seed, 9u);
}

TEST(Config, PresetAndVariantResetBeforeExplicitKeys) {
  // The explicit key comes first in the file but still wins over the preset.
  const auto c = resolve_config_text("[schedule]\nbatch_size = 16\npreset = sst250\n[head]\nscale = 10\nvariant = arcface\n");
  EXPECT_EQ(c.schedule.total_epochs, 250);
  EXPECT_EQ(c.schedule.batch_size, 16);
  EXPECT_EQ(c.head.variant, HeadVariant::ArcFace);
  EXPECT_EQ(c.head.scale, 10.0);
  EXPECT_EQ(c.head.margin, default_head_spec(HeadVariant::ArcFace, 2, 512).margin);
}

TEST(Config, EchoIsAFixedPoint) {
  auto c = resolve_config_text("[head]\nvariant = npcface\n[schedule]\nmilestones = 3, 5\nlr = 0.0123456789\n"
                               "[transform]\nmean = 1.5, 2.25, 3\n[run]\nmode = semi_siamese\nseed = 123\n");
  const auto text = config_to_text(c);
  EXPECT_EQ(resolve_config_text(text), c);
  EXPECT_EQ(config_to_text(resolve_config_text(text)), text);
  EXPECT_EQ(resolve_config_text(config_to_text(RunConfig{})), RunConfig{});
}

TEST(Config, UnknownKeySuggestsNearest) {
  EXPECT_EQ(nearest_config_key("schedle.lr"), "schedule.lr");
  EXPECT_EQ(nearest_config_key("head.variantt"), "head.variant");
  try {
    resolve_config_text("[schedle]\nlr = 0.1\n", {}, "a.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("a.cfg:2:"), std::string::npos) << msg;
    EXPECT_NE(msg.find("schedule.lr"), std::string::npos) << msg;
  }
  EXPECT_EQ(levenshtein("kitten", "sitting"), 3u);
  EXPECT_EQ(levenshtein("", "abc"), 3u);
}

TEST(Config, TypeAndSyntaxErrors) {
  EXPECT_THROW(resolve_config_text("[schedule]\nbatch_size = abc\n"), ConfigError);
  EXPECT_THROW(resolve_config_text("[schedule]\nlr = fast\n"), ConfigError);
  EXPECT_THROW(resolve_config_text("[transform]\ncrop_enabled = maybe\n"), ConfigError);
  EXPECT_THROW(resolve_config_text("[transform]\nmean = 1, 2\n"), ConfigError);
  EXPECT_THROW(resolve_config_text("lr = 0.1\n"), ConfigError);
  EXPECT_THROW(resolve_config_text("[schedule\n"), ConfigError);
  EXPECT_THROW(resolve_config_text("[schedule]\nlr\n"), ConfigError);
  EXPECT_THROW(resolve_config_text("", {"schedule.lr"}), ConfigError);
  EXPECT_THROW(resolve_config_text("[run]\nseed = -3\n"), ConfigError);
}

TEST(Config, EveryKeyDocumented) {
  for (const auto& k : config_keys()) {
    EXPECT_NE(k.key.find('.'), std::string::npos) << k.key;
    EXPECT_FALSE(k.help.empty()) << k.key;
    EXPECT_FALSE(k.type.empty()) << k.key;
  }
}

TEST(Config, SearchPath) {
  TempDir dir;
  write_text(dir / "conf/x.cfg", "[run]\nseed = 4\n");
  EXPECT_THROW(find_config_file("x.cfg"), IoError);
  const std::string value = "/nonexistent:" + (dir / "conf").string();
  setenv(kConfigPathEnv, value.c_str(), 1);
  EXPECT_EQ(find_config_file("x.cfg"), dir / "conf/x.cfg");
  EXPECT_EQ(resolve_config(std::filesystem::path("x.cfg")).seed, 4u);
  unsetenv(kConfigPathEnv);
}

TEST(Config, ShippedConfigsResolve) {
  for (const auto& entry : std::filesystem::directory_iterator(FACELAB_SOURCE_DIR "/configs")) {
    if (entry.path().extension() != ".cfg") continue;
    EXPECT_NO_THROW(validate_run_config(resolve_config(entry.path()))) << entry.path();
  }
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "facelab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  const auto start = std::chrono::steady_clock::now();
  const int rc = parse_and_dispatch(static_cast<int>(argv.size()), argv.data());
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(seconds, 120.0) << args[1];
  return rc;
}

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run_cli({"--help"}), 0);
  for (const char* cmd : {"train", "extract", "eval", "eval-verify", "eval-identify", "synth-mask", "pipeline-demo", "synth-data"}) {
    EXPECT_EQ(run_cli({cmd, "--help"}), 0) << cmd;
  }
  EXPECT_EQ(run_cli({}), 2);
  EXPECT_EQ(run_cli({"train", "--bogus"}), 2);
  EXPECT_EQ(run_cli({"no-such-command"}), 2);
}

TEST(Cli, EndToEndSmoke) {
  TempDir dir;
  const std::string d = (dir / "data").string();
  ASSERT_EQ(run_cli({"--log-level", "warn", "synth-data", "--out", d, "--identities", "4", "--images-per-id", "3", "--size", "32",
                     "--uv-size", "32", "--pairs", "20", "--templates", "--annotations"}),
            0);
  const std::string run = (dir / "run").string();
  ASSERT_EQ(run_cli({"--log-level", "warn", "train", "--manifest", d + "/manifest.tsv", "--out", run, "--set",
                     "backbone.width=0.25", "backbone.embedding_dim=16", "backbone.input_height=16",
                     "backbone.input_width=16", "transform.resize_width=16", "transform.resize_height=16",
                     "schedule.total_epochs=2", "schedule.milestones=1", "schedule.batch_size=4"}),
            0);
  const std::string ckpt = run + "/checkpoints/epoch_002.fxzc";
  ASSERT_TRUE(std::filesystem::exists(ckpt));
  EXPECT_TRUE(std::filesystem::exists(dir / "run/config.cfg"));
  EXPECT_EQ(resolve_config(dir / "run/config.cfg").schedule.total_epochs, 2);
  EXPECT_EQ(run_cli({"--log-level", "warn", "train", "--manifest", d + "/manifest.tsv", "--out", run, "--config",
                     run + "/config.cfg", "--resume", run + "/checkpoints/epoch_001.fxzc"}),
            0);
  const std::string store = (dir / "s.fxze").string();
  EXPECT_EQ(run_cli({"--log-level", "warn", "extract", "--manifest", d + "/manifest.tsv", "--out", store, "--checkpoint", ckpt}), 0);
  EXPECT_EQ(run_cli({"--log-level", "warn", "eval-verify", "--pairs", d + "/pairs.tsv", "--store", store, "--folds", "5",
                     "--report", (dir / "v.json").string()}),
            0);
  std::ifstream v(dir / "v.json");
  EXPECT_EQ(nlohmann::json::parse(v)["folds"].size(), 5u);
  EXPECT_EQ(run_cli({"--log-level", "warn", "eval", "--protocol", "verify", "--pairs", d + "/pairs.tsv", "--store",
                     d + "/manifest.tsv", "--checkpoint", ckpt, "--folds", "5", "--out", run}),
            0);
  EXPECT_TRUE(std::filesystem::exists(dir / "run/reports/verify.json"));
  EXPECT_EQ(run_cli({"--log-level", "warn", "eval-identify", "--probe", store, "--gallery", store, "--kmax", "3"}), 0);
  const std::string masked = (dir / "masked").string();
  EXPECT_EQ(run_cli({"--log-level", "warn", "synth-mask", "--manifest", d + "/manifest.tsv", "--posmaps", d + "/posmaps",
                     "--templates", d + "/templates", "--out", masked, "--seed", "3"}),
            0);
  EXPECT_EQ(load_manifest(dir / "masked/manifest.tsv").samples.size(), 24u);
  EXPECT_EQ(run_cli({"--log-level", "warn", "eval-identify", "--masked", "--probe", masked + "/manifest.tsv", "--gallery",
                     store, "--checkpoint", ckpt, "--kmax", "2"}),
            0);
  EXPECT_EQ(run_cli({"--log-level", "warn", "pipeline-demo", "--checkpoint", ckpt, "--images", d + "/images/id0000/000.png",
                     d + "/images/id0001/000.png", "--out", (dir / "demo").string()}),
            0);
  EXPECT_TRUE(std::filesystem::exists(dir / "demo/reports/pipeline.json"));
  // Runtime failures exit 1.
  EXPECT_EQ(run_cli({"--log-level", "off", "train", "--manifest", (dir / "none.tsv").string(), "--out", run}), 1);
  EXPECT_EQ(run_cli({"--log-level", "off", "train", "--manifest", d + "/manifest.tsv", "--out", run, "--set", "schedle.lr=1"}), 1);
}

}  // namespace
}  // namespace facelab
