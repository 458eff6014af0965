// Copyright 2026 The adagg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "adagg/binary_io.hpp"
#include "adagg/commands.hpp"
#include "adagg/config.hpp"
#include "adagg/error.hpp"
#include "adagg/simulator.hpp"

namespace adagg {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("adagg_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Config base(const std::string& extra = "") const {
    return Config::parse("out.dir = " + (dir_ / "out").string() + "\n" + extra);
  }

  int run(const std::string& cmd, const Config& cfg) {
    out_.str("");
    err_.str("");
    return cli::run_command(cmd, cfg, out_, err_);
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

TEST(Config, DigestIgnoresOrderWhitespaceAndComments) {
  const Config a = Config::parse("agg.kind=adaptive\nagg.c=10\n");
  const Config b = Config::parse("# comment\n  agg.c =   10   \n\nagg.kind= adaptive # trailing\n");
  EXPECT_EQ(a.digest(), b.digest());
  EXPECT_EQ(a.canonical(), b.canonical());
  const Config c = Config::parse("agg.kind=adaptive\nagg.c=9\n");
  EXPECT_NE(a.digest(), c.digest());
}

TEST(Config, ExplicitDefaultDoesNotChangeDigest) {
  EXPECT_EQ(Config::parse("").digest(), Config::parse("sim.rounds=30\n").digest());
}

TEST(Config, RejectsMalformedInput) {
  EXPECT_THROW(Config::parse("agg.kind\n"), UsageError);
  EXPECT_THROW(Config::parse("agg.knd=fedavg\n"), UsageError);
  EXPECT_THROW(Config::parse("sim.rounds=3\nsim.rounds=4\n"), UsageError);
  EXPECT_THROW((void)Config::parse("sim.rounds=three\n").get_int("sim.rounds"), UsageError);
  EXPECT_THROW((void)Config::parse("sim.shuffle_local=maybe\n").get_bool("sim.shuffle_local"), UsageError);
}

TEST(Config, MapsOntoSimulation) {
  const Config c = Config::parse(
      "attack.kind=backdoor\nattack.attackers=3\nagg.kind=multi_krum\nagg.m=2\nsim.rounds=7\nagg.eps=0.25\n");
  const sim::SimConfig s = to_sim_config(c);
  EXPECT_EQ(s.rounds, 7);
  EXPECT_EQ(s.attack.attacker_ids, (std::set<int>{0, 1, 2}));
  EXPECT_EQ(s.aggregator.krum_m, 2);
  EXPECT_EQ(*s.aggregator.eps, 0.25);
  EXPECT_FALSE(s.aggregator.c.has_value());
  EXPECT_THROW(to_sim_config(Config::parse("agg.kind=trimmed\n")), UsageError);
  EXPECT_THROW(to_sim_config(Config::parse("agg.eps=1.5\n")), UsageError);
}

TEST(Config, EveryKeyHasHelp) {
  for (const auto& k : config_keys()) EXPECT_FALSE(k.help.empty()) << k.key;
}

TEST_F(CliTest, PartitionCountsMatchShards) {
  ASSERT_EQ(run("partition", base()), cli::kOk) << err_.str();
  std::ifstream f(dir_ / "out" / "shards.bin", std::ios::binary);
  const auto shards = data::load_shards(f);
  std::ifstream csv(dir_ / "out" / "partition_counts.csv");
  std::string line;
  std::getline(csv, line);
  std::size_t row = 0;
  while (std::getline(csv, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    ASSERT_EQ(cells.size(), 13u);
    std::size_t sum = 0;
    for (int l = 1; l <= 10; ++l) sum += std::stoul(cells[static_cast<std::size_t>(l)]);
    EXPECT_EQ(sum, std::stoul(cells[11]));
    EXPECT_EQ(sum, shards[row].sample_count());
    ++row;
  }
  EXPECT_EQ(row, shards.size());
}

TEST_F(CliTest, NonPositiveAlphaExitsTwo) {
  EXPECT_EQ(run("partition", base("partition.alpha=0\n")), cli::kInvalidConfig);
  EXPECT_NE(err_.str().find("alpha"), std::string::npos);
}

TEST_F(CliTest, SimulateSmokeAndRecount) {
  ASSERT_EQ(run("simulate", base()), cli::kOk) << err_.str();
  const std::string csv = slurp(dir_ / "out" / "metrics.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 31);
  // last row acc equals re-evaluation of the saved checkpoint
  const auto last_nl = csv.rfind('\n', csv.size() - 2);
  const std::string last = csv.substr(last_nl + 1);
  const double acc = std::stod(last.substr(last.find(',') + 1));
  std::ifstream f(dir_ / "out" / "final_model.lvec", std::ios::binary);
  const LayeredVector v = load_layered(f);
  const sim::SimConfig sc = to_sim_config(base());
  nn::Mlp m = sim::init_task_model(sc.hidden, 0);
  sim::vector_to_model(v, m);
  EXPECT_EQ(sim::eval_accuracy(m, sim::prepare_data(sc).eval), acc);
  // manifest id is referenced by every row
  const auto manifest = nlohmann::json::parse(slurp(dir_ / "out" / "manifest_simulate.json"));
  const std::string id = manifest.at("id");
  EXPECT_EQ(id, cli::manifest_id("simulate", base()));
  std::stringstream ss(csv);
  std::string line;
  std::getline(ss, line);
  while (std::getline(ss, line)) EXPECT_EQ(line.substr(line.rfind(',') + 1), id);
  EXPECT_EQ(manifest.at("config_digest").get<std::string>(), io::hex64(base().digest()));
}

TEST_F(CliTest, SimulateTwiceIsByteIdentical) {
  const Config c = base("sim.rounds=5\nattack.kind=backdoor\nattack.attackers=2\nagg.kind=coord_median\n");
  ASSERT_EQ(run("simulate", c), cli::kOk);
  const std::string first = slurp(dir_ / "out" / "metrics.csv");
  ASSERT_EQ(run("simulate", c), cli::kOk);
  EXPECT_EQ(first, slurp(dir_ / "out" / "metrics.csv"));
}

TEST_F(CliTest, ManifestIdsDifferAcrossConfigsAndCommands) {
  const Config a = base();
  const Config b = base("sim.rounds=3\n");
  EXPECT_NE(cli::manifest_id("simulate", a), cli::manifest_id("simulate", b));
  EXPECT_NE(cli::manifest_id("simulate", a), cli::manifest_id("partition", a));
}

TEST_F(CliTest, DivergentRunExitsThree) {
  EXPECT_EQ(run("simulate", base("sim.lr=1e200\nsim.rounds=3\n")), cli::kAborted);
  EXPECT_NE(err_.str().find("round"), std::string::npos);
}

TEST_F(CliTest, MissingUpstreamArtifactsExitFour) {
  EXPECT_EQ(run("train-defense", base()), cli::kMissingArtifact);
  EXPECT_EQ(run("importance", base()), cli::kMissingArtifact);
  EXPECT_EQ(run("simulate", base("agg.kind=adaptive\nagg.model=" + (dir_ / "nope.attn").string() + "\n")),
            cli::kMissingArtifact);
}

TEST_F(CliTest, SyntheticPipelineProducesCheckpointReportAndImportance) {
  const Config c = base("collect.source=synthetic\nsynthetic.count=64\nsynthetic.validation=16\ndefense.epochs=2\n");
  ASSERT_EQ(run("collect", c), cli::kOk) << err_.str();
  ASSERT_EQ(run("train-defense", c), cli::kOk) << err_.str();
  EXPECT_TRUE(fs::is_regular_file(dir_ / "out" / "defense.attn"));
  const std::string report = slurp(dir_ / "out" / "validation.csv");
  EXPECT_EQ(std::count(report.begin(), report.end(), '\n'), 3);
  ASSERT_EQ(run("importance", c), cli::kOk) << err_.str();
  const std::string imp = slurp(dir_ / "out" / "importance.csv");
  EXPECT_EQ(std::count(imp.begin(), imp.end(), '\n'), 31);  // header + F = 30
}

TEST_F(CliTest, VerifyBoundsDefaultPasses) {
  EXPECT_EQ(run("verify-bounds", base()), cli::kOk) << out_.str();
  EXPECT_NE(out_.str().find("0 violations"), std::string::npos);
}

TEST_F(CliTest, OverridesAndUnknownCommands) {
  const fs::path cfg = dir_ / "a.cfg";
  {
    std::ofstream f(cfg);
    f << "out.dir=" << (dir_ / "out").string() << "\nsim.rounds=2\n";
  }
  EXPECT_EQ(cli::run_command("simulate", cfg, {"sim.rounds=1"}, out_, err_), cli::kOk);
  const std::string csv = slurp(dir_ / "out" / "metrics.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  EXPECT_EQ(cli::run_command("simulate", cfg, {"bogus"}, out_, err_), cli::kInvalidConfig);
  EXPECT_EQ(cli::run_command("simulate", dir_ / "missing.cfg", {}, out_, err_), cli::kInvalidConfig);
  EXPECT_EQ(cli::run_command("frobnicate", cfg, {}, out_, err_), cli::kInvalidConfig);
}

}  // namespace
}  // namespace adagg
