#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <regex>
#include <sstream>

#include "cli/app.hpp"
#include "cli/run_config.hpp"
#include "gim/error.hpp"
#include "gim/qnet.hpp"
#include "gim/ingestion.hpp"

namespace gim::cli {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result gim(std::vector<std::string> args) {
  args.insert(args.begin(), "gim");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("gim_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string at(const std::string& name) const { return (dir_ / name).string(); }

  void write(const std::string& name, const std::string& text) const { std::ofstream(dir_ / name) << text; }

  // simulate + ingest into <prefix>sim and <prefix>ing
  void small_dataset(const std::string& prefix = "") const {
    ASSERT_EQ(gim({"simulate", "--simulate.games", "4", "--run-dir", at(prefix + "sim")}).code, 0);
    ASSERT_EQ(gim({"ingest", "--paths.events", at(prefix + "sim/events.csv"), "--run-dir", at(prefix + "ing")}).code, 0);
  }

  std::vector<std::string> tiny_train(const std::string& run, const std::string& sequences) const {
    return {"train", "--paths.sequences", sequences, "--network.lstm_hidden", "6", "--network.dense_widths", "5,4",
            "--train.max_steps", "20", "--train.eval_every", "10", "--train.eval_sample", "200", "--run-dir", at(run)};
  }

  fs::path dir_;
};

TEST_F(CliTest, HelpOnEverySubcommandListsItsKeys) {
  for (const std::string cmd : {"simulate", "ingest", "train", "rank", "ticker", "evaluate", "check-grad", "config"}) {
    const Result r = gim({cmd, "--help"});
    EXPECT_EQ(r.code, 0) << cmd;
    EXPECT_NE(r.out.find("--config"), std::string::npos) << cmd;
    for (const auto& def : key_table()) {
      const bool listed = cmd == "config" ||
                          std::find(def.commands.begin(), def.commands.end(), cmd) != def.commands.end();
      if (listed) EXPECT_NE(r.out.find(def.flag()), std::string::npos) << cmd << " " << def.flag();
    }
  }
  EXPECT_EQ(gim({"--help"}).code, 0);
}

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(gim({}).code, 1);
  EXPECT_EQ(gim({"fly"}).code, 1);
  EXPECT_EQ(gim({"train", "--train.no_such_key", "3"}).code, 1);
  const Result missing = gim({"train", "--run-dir", at("x")});
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.err.find("--paths.sequences"), std::string::npos);
  const Result bad = gim({"check-grad", "--check_grad.tolerance", "tiny", "--run-dir", at("x")});
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("--check_grad.tolerance"), std::string::npos);
  EXPECT_FALSE(fs::exists(at("x")));
}

TEST_F(CliTest, UnknownConfigKeyNamesFileAndLine) {
  write("bad.ini", "[train]\nbatch_size = 8\n\n[train]\nlerning_rate = 0.1\n");
  const Result r = gim({"check-grad", "--config", at("bad.ini"), "--run-dir", at("x")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find(at("bad.ini") + ":5"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("lerning_rate"), std::string::npos);
}

TEST_F(CliTest, BadConfigValueNamesWhereItWasSet) {
  write("c.ini", "[check_grad]\n\ntolerance = oops\n");
  const Result r = gim({"check-grad", "--config", at("c.ini"), "--run-dir", at("x")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find(at("c.ini") + ":3"), std::string::npos) << r.err;
}

TEST_F(CliTest, MissingInputFileIsADataError) {
  const Result r = gim({"train", "--paths.sequences", at("nope.bin"), "--run-dir", at("x")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--paths.sequences"), std::string::npos);
  EXPECT_NE(r.err.find("nope.bin"), std::string::npos);
}

TEST_F(CliTest, FlagsOverrideConfigFileOverrideDefaults) {
  write("c.ini", "[train]\nbatch_size = 8\nseed = 9\n");
  const Result r = gim({"config", "--dump", "--config", at("c.ini"), "--train.seed", "11"});
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("batch_size = 8\n"), std::string::npos);
  EXPECT_NE(r.out.find("seed = 11\n"), std::string::npos);
  EXPECT_NE(r.out.find("max_steps = 100000\n"), std::string::npos);
}

TEST_F(CliTest, DumpedConfigReloadsToTheSameHash) {
  RunConfig base;
  base.apply_flag("train.seed", "5");
  std::ostringstream dumped;
  base.dump(dumped);
  write("dump.ini", dumped.str());
  RunConfig reloaded;
  reloaded.apply_file(at("dump.ini"));
  EXPECT_EQ(reloaded.hash(), base.hash());
  EXPECT_NE(RunConfig().hash(), base.hash());
  RunConfig run_only;
  run_only.apply_flag("run.threads", "4");
  EXPECT_EQ(run_only.hash(), RunConfig().hash());
}

TEST_F(CliTest, RunDirectoryIsTimestampPlusConfigHash) {
  const Result r = gim({"check-grad", "--check_grad.trace_lengths", "2", "--run.root", at("runs")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::string path = r.out.substr(0, r.out.find('\n'));
  const std::string name = fs::path(path).filename().string();
  EXPECT_TRUE(std::regex_match(name, std::regex(R"(\d{8}T\d{6}Z-[0-9a-f]{16})"))) << name;
  EXPECT_TRUE(fs::exists(fs::path(path) / "config.ini"));
  EXPECT_TRUE(fs::exists(fs::path(path) / "grad_check.csv"));
  const Result again = gim({"check-grad", "--check_grad.trace_lengths", "2", "--run.root", at("runs")});
  ASSERT_EQ(again.code, 0);
  EXPECT_NE(again.out, r.out);
}

TEST_F(CliTest, FailedGradientCheckExitsThree) {
  const Result r = gim({"check-grad", "--check_grad.tolerance", "1e-30", "--check_grad.trace_lengths", "3",
                        "--run-dir", at("cg")});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(slurp(at("cg/grad_check.csv")).find("false"), std::string::npos);
}

TEST_F(CliTest, TickerOnAbsentGameExitsTwoNamingIt) {
  small_dataset();
  ASSERT_EQ(gim(tiny_train("tr", at("ing/sequences.bin"))).code, 0);
  const Result r = gim({"ticker", "--paths.sequences", at("ing/sequences.bin"), "--paths.checkpoint",
                        at("tr/checkpoint.bin"), "--game-id", "NOT_A_GAME", "--run-dir", at("tk")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("NOT_A_GAME"), std::string::npos);
  const Result ok = gim({"ticker", "--paths.sequences", at("ing/sequences.bin"), "--paths.checkpoint",
                         at("tr/checkpoint.bin"), "--ticker.game_id", "G00001", "--run-dir", at("tk")});
  EXPECT_EQ(ok.code, 0) << ok.err;
  EXPECT_EQ(slurp(at("tk/ticker.csv")).substr(0, 34), "game_time,q_home,q_away,q_neither\n");
}

TEST_F(CliTest, ZeroStepTrainingWritesTheInitialization) {
  small_dataset();
  auto args = tiny_train("tr", at("ing/sequences.bin"));
  args.insert(args.end(), {"--train.max_steps", "0", "--train.seed", "42"});
  ASSERT_EQ(gim(args).code, 0);
  const Dataset ds = load_dataset(at("ing/sequences.bin"));
  NetworkConfig net;
  net.input_width = encoded_width(ds.vocabulary.size());
  net.lstm_hidden = 6;
  net.dense_widths = {5, 4};
  EXPECT_EQ(load_checkpoint(at("tr/checkpoint.bin")), init_params(net, 42, ds.scaler, ds.vocabulary));
  const std::string log = slurp(at("tr/train_log.csv"));
  EXPECT_EQ(log.substr(0, 30), "step,batch_loss,eval_td_error\n");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 2);
}

TEST_F(CliTest, PipelineIsBitwiseReproducible) {
  for (const std::string p : {"a_", "b_"}) {
    small_dataset(p);
    ASSERT_EQ(gim(tiny_train(p + "tr", at(p + "ing/sequences.bin"))).code, 0);
    ASSERT_EQ(gim({"rank", "--paths.sequences", at(p + "ing/sequences.bin"), "--paths.checkpoint",
                   at(p + "tr/checkpoint.bin"), "--paths.stats", at(p + "sim/stats.csv"), "--run-dir", at(p + "rk")})
                  .code,
              0);
    const Result ev = gim({"evaluate", "--paths.sequences", at(p + "ing/sequences.bin"), "--paths.checkpoint",
                           at(p + "tr/checkpoint.bin"), "--paths.stats", at(p + "sim/stats.csv"), "--evaluate.oracle",
                           "true", "--evaluate.min_games", "1", "--run-dir", at(p + "ev")});
    ASSERT_EQ(ev.code, 0) << ev.err;
  }
  for (const std::string f : {"sim/events.csv", "sim/stats.csv", "ing/sequences.bin", "tr/checkpoint.bin",
                              "tr/train_log.csv", "rk/rankings.csv", "ev/metrics.csv", "ev/correlations_pearson.csv",
                              "ev/correlations_spearman.csv", "ev/t_tests.csv", "ev/round_by_round.csv",
                              "ev/auto_correlation.csv", "ev/oracle_comparison.csv"}) {
    const std::string a = slurp(at("a_" + f));
    EXPECT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, slurp(at("b_" + f))) << f;
  }
}

}  // namespace
}  // namespace gim::cli
