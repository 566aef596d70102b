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

// Command-line front end for campaigns, replay, validation and inspection.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "graphmeta/backend.h"
#include "graphmeta/engine.h"
#include "graphmeta/rng.h"
#include "graphmeta/seeds.h"
#include "graphmeta/serialize.h"

namespace fs = std::filesystem;
using namespace graphmeta;

namespace {

nlohmann::json ReadJson(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return nlohmann::json::parse(in);
}

void WriteFile(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

int Run(const std::string& config_path, const std::string& out_dir,
        const std::string& resume_path) {
  const CampaignConfig config = CampaignConfig::FromJson(ReadJson(config_path));
  fs::create_directories(out_dir);
  std::unique_ptr<Campaign> campaign =
      resume_path.empty()
          ? std::make_unique<Campaign>(config)
          : std::make_unique<Campaign>(config, ReadJson(resume_path));
  const CampaignResult result = campaign->Finish();
  const fs::path out(out_dir);
  WriteFile(out / "bugs.jsonl", result.BugsJsonl());
  WriteFile(out / "metrics.csv", result.MetricsCsv());
  WriteFile(out / "checkpoint.json", result.checkpoint.dump(1) + "\n");
  WriteFile(out / "lineage.json", result.LineageJson().dump(1) + "\n");
  std::cout << "rounds " << result.rounds.size() << " retained "
            << result.retained << " crashes " << result.crashes << " invalid "
            << result.invalid << " signatures " << result.signatures
            << " edge_pairs " << result.edge_pairs << " reports "
            << result.bugs.size() << " ms " << result.elapsed.count() << "\n";
  return 0;
}

int Replay(const std::string& lineage_path) {
  const nlohmann::json doc = ReadJson(lineage_path);
  const CampaignConfig config = CampaignConfig::FromJson(doc.at("config"));
  const Graph seed = FindSeed(config.seed);
  int mismatches = 0;
  for (const auto& m : doc.at("models")) {
    if (m.at("fingerprint").is_null()) continue;
    std::vector<RewriteStep> lineage;
    for (const auto& step : m.at("lineage")) {
      lineage.push_back(StepFromJson(step));
    }
    if (GraphFingerprint(ReplayLineage(seed, lineage)) !=
        m["fingerprint"].get<uint64_t>()) {
      std::cout << "model round " << m.at("round") << ": graph differs\n";
      ++mismatches;
    }
  }
  int index = 0;
  for (const auto& r : doc.at("reports")) {
    const BugReport expected = BugReport::FromJson(r);
    const std::vector<BugReport> got = ReplayReport(config, expected);
    bool matched = false;
    for (const BugReport& g : got) matched = matched || g == expected;
    std::cout << "report " << index++ << " " << BugKindName(expected.kind)
              << " round " << expected.round << ": "
              << (matched ? "reproduced" : "NOT reproduced") << "\n";
    if (!matched) ++mismatches;
  }
  return mismatches == 0 ? 0 : 1;
}

int Validate(int rng_seeds, int rounds, const std::string& json_path) {
  const SuiteSummary summary =
      RunValidationSuite(ValidationCases(rng_seeds, rounds));
  std::cout << summary.Table();
  if (!json_path.empty()) WriteFile(json_path, summary.ToJson().dump(1));
  return summary.passed() ? 0 : 1;
}

int Trace(const std::string& seed_label, const std::string& backend_id,
          bool full, uint64_t rng_seed) {
  const Graph seed = FindSeed(seed_label);
  const auto backend = MakeBackend(backend_id);
  Rng rng(rng_seed);
  const Feeds feeds = RandomFeeds(seed, rng);
  const ExecutionTrace trace = backend->ExecuteTrainingStep(seed, feeds);
  std::cout << DumpTraceJsonl(seed, trace, full);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graphmeta metamorphic testing campaigns"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string resume_path;
  auto* run = app.add_subcommand("run", "Run one campaign");
  run->add_option("--config", config_path, "Campaign config JSON")
      ->required()
      ->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_option("--resume", resume_path, "Checkpoint to resume from")
      ->check(CLI::ExistingFile);

  std::string lineage_path;
  auto* replay = app.add_subcommand("replay", "Reproduce reports of a run");
  replay->add_option("--lineage", lineage_path, "lineage.json of a run")
      ->required()
      ->check(CLI::ExistingFile);

  int rng_seeds = 5;
  int rounds = 100;
  std::string suite_json;
  auto* validate =
      app.add_subcommand("validate", "Run the planted-fault suite");
  validate->add_option("--rng-seeds", rng_seeds, "Runs per fault")
      ->check(CLI::PositiveNumber);
  validate->add_option("--rounds", rounds, "Rounds per campaign")
      ->check(CLI::PositiveNumber);
  validate->add_option("--json", suite_json, "Write the summary as JSON");

  auto* graph = app.add_subcommand("graph", "Graph inspection");
  graph->require_subcommand(1);
  std::string dump_seed;
  auto* dump = graph->add_subcommand("dump", "Print a seed graph as JSON");
  dump->add_option("--seed", dump_seed, "Seed label")->required();

  std::string trace_seed;
  std::string trace_backend = "reference";
  bool trace_full = false;
  uint64_t trace_rng = 0;
  auto* trace = app.add_subcommand("trace", "Per-node training-step trace");
  trace->add_option("--seed", trace_seed, "Seed label")->required();
  trace->add_option("--backend", trace_backend, "Backend id");
  trace->add_option("--rng-seed", trace_rng, "Feed stream seed");
  trace->add_flag("--full", trace_full, "Include tensor data");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return Run(config_path, out_dir, resume_path);
    if (*replay) return Replay(lineage_path);
    if (*validate) return Validate(rng_seeds, rounds, suite_json);
    if (*dump) {
      std::cout << GraphToJson(FindSeed(dump_seed)).dump(1) << "\n";
      return 0;
    }
    if (*trace) return Trace(trace_seed, trace_backend, trace_full, trace_rng);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
