// Copyright 2026 The GraphMeta Authors.
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

#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "graphmeta/engine.h"
#include "graphmeta/seeds.h"

namespace graphmeta {
namespace {

CampaignConfig Config(const std::string& seed, const std::string& backend,
                      int rounds, uint64_t rng_seed) {
  CampaignConfig c;
  c.seed = seed;
  c.backend = backend;
  c.rounds = rounds;
  c.rng_seed = rng_seed;
  return c;
}

TEST(ConfigTest, JsonRoundTrip) {
  CampaignConfig c = Config("cnn", "mutant:M2", 12, 77);
  c.epsilon.decay = 0.9;
  c.qr.gamma = 0.5;
  c.feeds.count = 2;
  c.random_ablation = true;
  const CampaignConfig back = CampaignConfig::FromJson(c.ToJson());
  EXPECT_EQ(back.ToJson(), c.ToJson());
}

TEST(ConfigTest, RejectsBadInput) {
  EXPECT_THROW(CampaignConfig::FromJson({{"seed", "mlp"}}), ConfigError);
  EXPECT_THROW(CampaignConfig::FromJson({{"rng_seed", 1}, {"sed", "mlp"}}),
               ConfigError);
  EXPECT_THROW(CampaignConfig::FromJson({{"rng_seed", 1}, {"seed", "vgg"}}),
               ConfigError);
  EXPECT_THROW(
      CampaignConfig::FromJson({{"rng_seed", 1}, {"backend", "mutant:M9"}}),
      ConfigError);
  EXPECT_THROW(CampaignConfig::FromJson({{"rng_seed", 1}, {"rounds", 0}}),
               ConfigError);
  EXPECT_THROW(CampaignConfig::FromJson({{"rng_seed", 1}, {"gamma", 1.0}}),
               ConfigError);
  EXPECT_THROW(CampaignConfig::FromJson({{"rng_seed", "one"}}), ConfigError);
  EXPECT_THROW(CampaignConfig::FromJson(nlohmann::json::array()), ConfigError);
}

TEST(ConfigTest, SeedThresholdsOverride) {
  const CampaignConfig c = CampaignConfig::FromJson(
      {{"rng_seed", 1},
       {"seed", "cnn"},
       {"thresholds", {{"loss_tol", 0.1}}},
       {"seed_thresholds", {{"cnn", {{"loss_tol", 0.2}}}, {"mlp", {{"loss_tol", 0.3}}}}}});
  EXPECT_EQ(c.thresholds.loss_tol, 0.2);
}

TEST(CampaignTest, DeterministicInRngSeed) {
  const CampaignConfig c = Config("slice_concat", "mutant:M5", 15, 3);
  const CampaignResult a = RunCampaign(c);
  const CampaignResult b = RunCampaign(c);
  EXPECT_EQ(a.rounds, b.rounds);
  EXPECT_EQ(a.bugs, b.bugs);
  EXPECT_EQ(a.checkpoint, b.checkpoint);
  EXPECT_EQ(a.MetricsCsv(), b.MetricsCsv());
  const CampaignResult other = RunCampaign(Config("slice_concat", "mutant:M5", 15, 4));
  EXPECT_NE(a.rounds, other.rounds);
}

TEST(CampaignTest, ResumeFromCheckpointMatchesUninterruptedRun) {
  for (const char* backend : {"reference", "mutant:M3"}) {
    const CampaignConfig c = Config("cnn", backend, 12, 5);
    const CampaignResult full = RunCampaign(c);
    Campaign first(c);
    for (int i = 0; i < 7; ++i) first.RunRound();
    const nlohmann::json checkpoint =
        nlohmann::json::parse(first.Checkpoint().dump());
    Campaign resumed(c, checkpoint);
    EXPECT_EQ(resumed.round(), 7);
    const CampaignResult rest = resumed.Finish();
    EXPECT_EQ(rest.rounds, full.rounds) << backend;
    EXPECT_EQ(rest.bugs, full.bugs) << backend;
    EXPECT_EQ(rest.checkpoint, full.checkpoint) << backend;
    EXPECT_EQ(rest.signatures, full.signatures);
    EXPECT_EQ(rest.edge_pairs, full.edge_pairs);
  }
}

TEST(CampaignTest, LedgerIsMonotoneAndRewardsAreConsistent) {
  Campaign campaign(Config("resnet", "reference", 15, 6));
  size_t sigs = 0, pairs = 0;
  while (!campaign.done()) {
    campaign.RunRound();
    EXPECT_GE(campaign.ledger().signatures().size(), sigs);
    EXPECT_GE(campaign.ledger().edge_pairs().size(), pairs);
    sigs = campaign.ledger().signatures().size();
    pairs = campaign.ledger().edge_pairs().size();
  }
  const CampaignResult r = campaign.Finish();
  EXPECT_EQ(r.retained + r.crashes + r.invalid, 15);
  for (const RoundRecord& rec : r.rounds) {
    if (rec.outcome == RoundOutcome::kRetained) {
      ASSERT_TRUE(rec.diversity.has_value());
      EXPECT_DOUBLE_EQ(rec.reward, (rec.diversity->lic + rec.diversity->lpc +
                                    rec.diversity->lsc) / 3.0);
    } else {
      EXPECT_EQ(rec.reward, -1.0);
    }
  }
  EXPECT_EQ(campaign.pool().size(), static_cast<size_t>(r.retained));
}

TEST(CampaignTest, CrashRoundsScoreMinusOneAndReselect) {
  const CampaignResult r = RunCampaign(Config("cnn", "mutant:M3", 10, 7));
  ASSERT_GT(r.crashes, 0);
  for (const RoundRecord& rec : r.rounds) {
    if (rec.outcome != RoundOutcome::kCrash) continue;
    EXPECT_EQ(rec.reward, kCrashReward);
    EXPECT_TRUE(rec.reselected);
    EXPECT_FALSE(rec.diversity.has_value());
  }
  std::istringstream csv(r.MetricsCsv());
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "round,lic,lpc,lsc,reward");
  int rows = 0;
  bool empty_metrics = false;
  while (std::getline(csv, line)) {
    ++rows;
    empty_metrics |= line.find(",,,-1") != std::string::npos;
  }
  EXPECT_EQ(rows, 10);
  EXPECT_TRUE(empty_metrics);
  bool crash_report = false;
  for (const BugReport& b : r.bugs) {
    crash_report |= b.kind == BugKind::kCrash &&
                    b.evidence.phase == Phase::kBackward;
  }
  EXPECT_TRUE(crash_report);
}

TEST(CampaignTest, SeedThatCrashesIsReportedAtRoundZero) {
  // The autoencoder pads only its spatial axes, which the M7 Pad rejects.
  const CampaignResult r = RunCampaign(Config("autoencoder", "mutant:M7", 3, 1));
  ASSERT_FALSE(r.bugs.empty());
  EXPECT_EQ(r.bugs[0].kind, BugKind::kCrash);
  EXPECT_EQ(r.bugs[0].round, 0);
  EXPECT_TRUE(r.bugs[0].lineage.empty());
  const std::vector<BugReport> replayed = ReplayReport(r.config, r.bugs[0]);
  ASSERT_EQ(replayed.size(), 1u);
  EXPECT_EQ(replayed[0], r.bugs[0]);
}

TEST(CampaignTest, PoolLineagesReplayToIdenticalGraphs) {
  Campaign campaign(Config("transpose_reshape", "reference", 12, 8));
  campaign.Finish();
  const Graph seed = FindSeed("transpose_reshape");
  for (const ReplayEntry& e : campaign.pool().entries()) {
    const Graph g = ReplayLineage(seed, e.lineage);
    EXPECT_EQ(g, e.graph);
    EXPECT_EQ(GraphFingerprint(g), GraphFingerprint(e.graph));
  }
  std::vector<RewriteStep> tampered = campaign.pool().entries().back().lineage;
  tampered.back().anchors.target = -5;
  EXPECT_THROW(ReplayLineage(seed, tampered), ExecutionError);
}

TEST(CampaignTest, ReportsReplay) {
  for (const char* backend : {"mutant:M2", "mutant:M5", "mutant:M4"}) {
    const std::string seed = std::string(backend) == "mutant:M5" ? "slice_concat" : "cnn";
    const CampaignResult r = RunCampaign(Config(seed, backend, 20, 2));
    ASSERT_FALSE(r.bugs.empty()) << backend;
    for (size_t i = 0; i < r.bugs.size(); i += 5) {
      const std::vector<BugReport> got = ReplayReport(r.config, r.bugs[i]);
      bool found = false;
      for (const BugReport& g : got) found |= g == r.bugs[i];
      EXPECT_TRUE(found) << backend << " report " << i;
    }
  }
}

TEST(CampaignTest, ReferenceCampaignsAreSilent) {
  for (const std::string& seed : SeedLabels()) {
    const CampaignResult r = RunCampaign(Config(seed, "reference", 10, 9));
    EXPECT_TRUE(r.bugs.empty()) << seed;
  }
}

TEST(CampaignTest, RandomAblationExploresEveryRelation) {
  CampaignConfig c = Config("mlp", "reference", 30, 10);
  c.random_ablation = true;
  c.detect = false;
  const CampaignResult r = RunCampaign(c);
  std::set<SmrKind> used;
  for (const RoundRecord& rec : r.rounds) used.insert(rec.smr);
  EXPECT_EQ(used.size(), static_cast<size_t>(kNumSmrs));
  EXPECT_EQ(r.checkpoint["epsilon"], 1.0);
}

TEST(CampaignTest, LineageDocumentCarriesFingerprints) {
  const CampaignResult r = RunCampaign(Config("mlp", "reference", 4, 11));
  const nlohmann::json doc = r.LineageJson();
  ASSERT_EQ(doc["models"].size(), 4u);
  const Graph seed = FindSeed("mlp");
  for (size_t i = 0; i < 4; ++i) {
    const auto& m = doc["models"][i];
    if (m["outcome"] != "retained") continue;
    EXPECT_EQ(m["fingerprint"].get<uint64_t>(),
              GraphFingerprint(ReplayLineage(seed, r.rounds[i].lineage)));
  }
  EXPECT_EQ(CampaignConfig::FromJson(doc["config"]).ToJson(), r.config.ToJson());
}

TEST(SuiteTest, RowAndSummaryJson) {
  SuiteSummary s;
  SuiteRow row;
  row.name = "M1/mlp/1";
  row.backend = "mutant:M1";
  row.seed = "mlp";
  row.rng_seed = 1;
  row.expect = BugKind::kAccuracy;
  row.detected = true;
  row.reports = 3;
  row.rounds_to_detect = 2;
  s.rows.push_back(row);
  SuiteRow ref;
  ref.name = "reference/mlp";
  ref.backend = "reference";
  ref.seed = "mlp";
  s.rows.push_back(ref);
  EXPECT_TRUE(s.passed());
  EXPECT_EQ(s.faults_detected(), 1);
  EXPECT_EQ(s.false_positives(), 0);
  const SuiteSummary back = SuiteSummary::FromJson(s.ToJson());
  EXPECT_EQ(back.rows, s.rows);
  EXPECT_NE(s.Table().find("M1/mlp/1"), std::string::npos);
  s.rows[1].reports = 1;
  EXPECT_FALSE(s.passed());
}

TEST(SuiteTest, CasesCoverEveryFault) {
  const std::vector<SuiteCase> cases = ValidationCases(2, 10);
  std::set<std::string> faults;
  int reference = 0;
  for (const SuiteCase& c : cases) {
    if (c.expect) {
      faults.insert(c.config.backend);
    } else {
      EXPECT_EQ(c.config.backend, "reference");
      ++reference;
    }
    EXPECT_EQ(c.config.rounds, 10);
  }
  EXPECT_EQ(faults.size(), static_cast<size_t>(kNumFaults));
  EXPECT_EQ(cases.size(), static_cast<size_t>(2 * kNumFaults + reference));
  EXPECT_GE(reference, 6);
}

}  // namespace
}  // namespace graphmeta
