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

// Campaign driver: the guided generation loop, the final detection sweep,
// lineage replay, and the planted-fault validation suite.

#ifndef GRAPHMETA_ENGINE_H_
#define GRAPHMETA_ENGINE_H_

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "graphmeta/backend.h"
#include "graphmeta/guidance.h"
#include "graphmeta/metrics.h"
#include "graphmeta/oracles.h"
#include "graphmeta/rewrites.h"
#include "graphmeta/rng.h"

namespace graphmeta {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FeedSpec {
  int count = 3;
  // Probability that a float feed element is replaced by NaN.
  double special_value_rate = 0.0;
};

struct CampaignConfig {
  std::string seed = "mlp";
  std::string backend = "reference";
  int rounds = 100;
  uint64_t rng_seed = 0;
  EpsilonSchedule epsilon;
  QrConfig qr;
  Thresholds thresholds;
  FeedSpec feeds;
  int anchor_count = 2;
  // Pins epsilon to 1: uniform structure-relation choice.
  bool random_ablation = false;
  // Also reselect a seed from the pool after a below-median reward.
  bool reselect_on_low_reward = false;
  // Run the final sweep; off skips detection and keeps only crash reports.
  bool detect = true;

  nlohmann::json ToJson() const;
  // "rng_seed" is required. Throws ConfigError.
  static CampaignConfig FromJson(const nlohmann::json& j);
  // Throws ConfigError on unknown seed/backend labels or bad ranges.
  void Check() const;
};

enum class RoundOutcome { kRetained, kCrash, kInvalid };

std::string_view RoundOutcomeName(RoundOutcome outcome);

struct RoundRecord {
  int round = 0;
  RoundOutcome outcome = RoundOutcome::kRetained;
  SmrKind smr = SmrKind::kSmr1;
  std::optional<Diversity> diversity;
  double reward = 0.0;
  // Thompson reselection took place after this round.
  bool reselected = false;
  // Steps from the original seed to the generated model.
  std::vector<RewriteStep> lineage;
  // GraphFingerprint of the generated model; empty when the rewrite failed.
  std::optional<uint64_t> fingerprint;
  std::string note;

  nlohmann::json ToJson() const;
  static RoundRecord FromJson(const nlohmann::json& j);
  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

struct CampaignResult {
  CampaignConfig config;
  std::vector<BugReport> bugs;
  std::vector<RoundRecord> rounds;
  int retained = 0;
  int crashes = 0;
  int invalid = 0;
  size_t signatures = 0;
  size_t edge_pairs = 0;
  nlohmann::json checkpoint;
  std::chrono::milliseconds elapsed{0};

  // round,lic,lpc,lsc,reward
  std::string MetricsCsv() const;
  std::string BugsJsonl() const;
  nlohmann::json LineageJson() const;
};

// Re-applies `lineage` to `seed`. Throws ExecutionError{kRewrite} when a step
// does not reproduce.
Graph ReplayLineage(const Graph& seed, const std::vector<RewriteStep>& lineage);

// Stable 64-bit fingerprint of the canonical serialization.
uint64_t GraphFingerprint(const Graph& g);

class Campaign {
 public:
  explicit Campaign(CampaignConfig config);
  // Resumes from a checkpoint written by Checkpoint().
  Campaign(CampaignConfig config, const nlohmann::json& checkpoint);
  ~Campaign();

  Campaign(const Campaign&) = delete;
  Campaign& operator=(const Campaign&) = delete;

  bool done() const;
  int round() const;
  void RunRound();
  nlohmann::json Checkpoint() const;
  // Runs the remaining rounds and the sweep.
  CampaignResult Finish();

  const ReplayPool& pool() const;
  const DiversityLedger& ledger() const;

 private:
  struct State;
  std::unique_ptr<State> state_;
};

CampaignResult RunCampaign(const CampaignConfig& config);

// Regenerates the reported model from its lineage and re-runs detection on
// it; returns the reports produced for that model.
std::vector<BugReport> ReplayReport(const CampaignConfig& config,
                                    const BugReport& report);

struct SuiteCase {
  std::string name;
  CampaignConfig config;
  // Expected kind; nullopt for soundness cases that must stay silent.
  std::optional<BugKind> expect;
};

struct SuiteRow {
  std::string name;
  std::string backend;
  std::string seed;
  uint64_t rng_seed = 0;
  std::optional<BugKind> expect;
  bool detected = false;
  int reports = 0;
  // Reports of a kind other than the expected one.
  int other_reports = 0;
  std::optional<int> rounds_to_detect;
  int invalid = 0;
  int64_t millis = 0;

  bool passed() const {
    return expect ? detected : reports == 0;
  }
  nlohmann::json ToJson() const;
  static SuiteRow FromJson(const nlohmann::json& j);
  friend bool operator==(const SuiteRow&, const SuiteRow&) = default;
};

struct SuiteSummary {
  std::vector<SuiteRow> rows;
  int64_t millis = 0;

  bool passed() const;
  // Faults detected in every run / faults exercised.
  int faults_detected() const;
  int false_positives() const;
  std::string Table() const;
  nlohmann::json ToJson() const;
  static SuiteSummary FromJson(const nlohmann::json& j);
};

// Designated seed per fault and the reference soundness campaigns.
std::vector<SuiteCase> ValidationCases(int rng_seeds = 5, int rounds = 100);
SuiteSummary RunValidationSuite(const std::vector<SuiteCase>& cases);

// Worker count for the sweep: GRAPHMETA_THREADS if set, else hardware.
int SweepThreads();

}  // namespace graphmeta

#endif  // GRAPHMETA_ENGINE_H_
