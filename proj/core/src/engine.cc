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

#include "graphmeta/engine.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

#include "graphmeta/seeds.h"
#include "graphmeta/serialize.h"

namespace graphmeta {
namespace {

// Feed values come from their own stream so they do not depend on how many
// rounds have been played.
constexpr uint64_t kFeedStream = 0xfeedf00d;

const std::set<std::string>& ConfigKeys() {
  static const std::set<std::string> keys = {
      "seed",         "backend",         "rounds",
      "rng_seed",     "epsilon",         "gamma",
      "learning_rate", "kappa",          "clip_norm",
      "on_action_target", "thresholds",  "seed_thresholds",
      "feeds",        "anchor_count",    "random_ablation",
      "reselect_on_low_reward", "detect"};
  return keys;
}

bool FeedsFinite(const Feeds& feeds) {
  for (const auto& [id, v] : feeds) {
    if (!v.AllFinite()) return false;
  }
  return true;
}

bool ActivationsFinite(const ExecutionTrace& t) {
  for (const TensorValue& v : t.outputs) {
    if (!v.AllFinite()) return false;
  }
  return true;
}

double MeanAbsActivation(const ExecutionTrace& t) {
  double sum = 0.0;
  int64_t n = 0;
  for (const TensorValue& v : t.outputs) {
    for (double x : v.data) {
      if (std::isfinite(x)) {
        sum += std::fabs(x);
        ++n;
      }
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

std::vector<Feeds> MakeFeeds(const CampaignConfig& config, const Graph& seed) {
  Rng rng(config.rng_seed ^ kFeedStream);
  std::vector<Feeds> feeds;
  for (int i = 0; i < config.feeds.count; ++i) {
    feeds.push_back(RandomFeeds(seed, rng, config.feeds.special_value_rate));
  }
  return feeds;
}

struct Regenerated {
  Graph graph;
  std::vector<int> zero_nodes;
  EquivalenceClass equivalence = EquivalenceClass::kExact;
  std::optional<Graph> pre_imr;
};

Regenerated Regenerate(const Graph& seed,
                       const std::vector<RewriteStep>& lineage) {
  Regenerated r{seed, {}, EquivalenceClass::kExact, std::nullopt};
  for (const RewriteStep& step : lineage) {
    RewriteOutcome out = Transform(r.graph, step);
    if (!out.ok()) throw *out.error;
    if (!(out.step == step)) {
      throw ExecutionError(Phase::kRewrite, std::nullopt,
                           "lineage step does not reproduce");
    }
    r.graph = std::move(out.graph);
    r.pre_imr = std::move(out.pre_imr);
    r.zero_nodes.insert(r.zero_nodes.end(), out.zero_nodes.begin(),
                        out.zero_nodes.end());
    if (out.equivalence == EquivalenceClass::kApprox) {
      r.equivalence = EquivalenceClass::kApprox;
    }
  }
  return r;
}

struct Judgement {
  RoundOutcome outcome = RoundOutcome::kRetained;
  std::optional<BugReport> crash;
  std::string note;
  double max_abs = 0.0;
  double mean_abs = 0.0;
};

// Executes one training step per feed and applies the invalid-model guards.
Judgement Judge(const Backend& backend, const Graph& model,
                const std::vector<Feeds>& feeds,
                std::optional<double> parent_max_abs) {
  Judgement j;
  for (size_t f = 0; f < feeds.size(); ++f) {
    ExecutionTrace trace;
    try {
      trace = backend.ExecuteTrainingStep(model, feeds[f]);
    } catch (const ExecutionError& e) {
      CrashVerdict v = ClassifyCrash(e, model, parent_max_abs);
      if (v.invalid) {
        j.outcome = RoundOutcome::kInvalid;
        j.note = v.reason;
      } else {
        j.outcome = RoundOutcome::kCrash;
        v.report.evidence.feed = static_cast<int>(f);
        j.crash = std::move(v.report);
        j.note = e.what();
      }
      return j;
    } catch (const std::exception& e) {
      j.outcome = RoundOutcome::kInvalid;
      j.note = e.what();
      return j;
    }
    const double m = MaxAbsActivation(trace);
    j.max_abs = std::max(j.max_abs, m);
    if (f == 0) j.mean_abs = MeanAbsActivation(trace);
    if (m > kMagnitudeLimit) {
      j.outcome = RoundOutcome::kInvalid;
      j.note = "activation magnitude " + FormatDouble(m);
      return j;
    }
    if (FeedsFinite(feeds[f]) && !ActivationsFinite(trace)) {
      j.outcome = RoundOutcome::kInvalid;
      j.note = "non-finite activations on finite feeds";
      return j;
    }
  }
  return j;
}

void Stamp(BugReport& r, const CampaignConfig& config, int round,
           const std::vector<RewriteStep>& lineage) {
  r.backend = config.backend;
  r.seed = config.seed;
  r.round = round;
  r.lineage = lineage;
}

struct Baseline {
  bool ok = false;
  std::vector<ExecutionTrace> traces;
  double max_abs = 0.0;
};

// Equivalent models should cost about the same: the model against itself
// before its last interface relation.
std::vector<BugReport> DetectEquivalentCost(const Backend& backend,
                                            const CampaignConfig& config,
                                            const Regenerated& model,
                                            const Feeds& feeds) {
  if (!model.pre_imr) return {};
  try {
    const ExecutionTrace before = backend.ExecuteForward(*model.pre_imr, feeds);
    const ExecutionTrace after = backend.ExecuteForward(model.graph, feeds);
    return DetectEfficiency(model.graph, after, *model.pre_imr, before,
                            config.thresholds);
  } catch (const ExecutionError&) {
    return {};
  }
}

// Detection for one retained model against the seed baseline.
std::vector<BugReport> DetectModel(const Backend& backend,
                                   const CampaignConfig& config,
                                   const Graph& seed, const Baseline& baseline,
                                   const std::vector<Feeds>& feeds,
                                   const Regenerated& model, int round,
                                   const std::vector<RewriteStep>& lineage) {
  std::vector<BugReport> reports;
  if (!baseline.ok) return reports;
  const LayerMap layers = SeedLayerMap(seed);
  std::set<std::string> seen;
  for (size_t f = 0; f < feeds.size(); ++f) {
    ExecutionTrace trace;
    try {
      trace = backend.ExecuteTrainingStep(model.graph, feeds[f]);
    } catch (const ExecutionError& e) {
      CrashVerdict v = ClassifyCrash(e, model.graph, std::nullopt);
      if (!v.invalid) {
        v.report.evidence.feed = static_cast<int>(f);
        reports.push_back(std::move(v.report));
      }
      break;
    }
    AccuracyInput in;
    in.seed = &baseline.traces[f];
    in.model = &model.graph;
    in.trace = &trace;
    in.layers = layers;
    in.zero_nodes = model.zero_nodes;
    in.equivalence = model.equivalence;
    in.feed = static_cast<int>(f);
    std::vector<BugReport> found = DetectAccuracy(in, config.thresholds);
    if (f == 0) {
      for (auto& r : DetectResource(model.graph, trace, seed,
                                    baseline.traces[0], config.thresholds)) {
        found.push_back(std::move(r));
      }
      for (auto& r : DetectEquivalentCost(backend, config, model, feeds[0])) {
        found.push_back(std::move(r));
      }
    }
    for (auto& r : found) {
      if (seen.insert(r.evidence.check).second) reports.push_back(std::move(r));
    }
  }
  for (auto& r : reports) Stamp(r, config, round, lineage);
  return reports;
}

template <typename Fn>
void ParallelFor(size_t n, Fn&& fn) {
  const size_t workers =
      std::min(n, static_cast<size_t>(std::max(1, SweepThreads())));
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> threads;
  for (size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : threads) t.join();
}

nlohmann::json Lineage(const std::vector<RewriteStep>& lineage) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& s : lineage) j.push_back(StepToJson(s));
  return j;
}

std::vector<RewriteStep> LineageFrom(const nlohmann::json& j) {
  std::vector<RewriteStep> out;
  for (const auto& s : j) out.push_back(StepFromJson(s));
  return out;
}

}  // namespace

nlohmann::json CampaignConfig::ToJson() const {
  return {{"seed", seed},
          {"backend", backend},
          {"rounds", rounds},
          {"rng_seed", rng_seed},
          {"epsilon",
           {{"start", epsilon.epsilon},
            {"end", epsilon.end},
            {"decay", epsilon.decay}}},
          {"gamma", qr.gamma},
          {"learning_rate", qr.learning_rate},
          {"kappa", qr.kappa},
          {"clip_norm", qr.clip_norm},
          {"on_action_target", qr.on_action_target},
          {"thresholds", thresholds.ToJson()},
          {"feeds",
           {{"count", feeds.count},
            {"special_value_rate", feeds.special_value_rate}}},
          {"anchor_count", anchor_count},
          {"random_ablation", random_ablation},
          {"reselect_on_low_reward", reselect_on_low_reward},
          {"detect", detect}};
}

CampaignConfig CampaignConfig::FromJson(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!ConfigKeys().contains(key)) {
      throw ConfigError("unknown config key: " + key);
    }
  }
  if (!j.contains("rng_seed")) throw ConfigError("rng_seed is required");
  CampaignConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.backend = j.value("backend", c.backend);
    c.rounds = j.value("rounds", c.rounds);
    c.rng_seed = j.at("rng_seed").get<uint64_t>();
    if (j.contains("epsilon")) {
      const auto& e = j["epsilon"];
      c.epsilon.epsilon = e.value("start", c.epsilon.epsilon);
      c.epsilon.end = e.value("end", c.epsilon.end);
      c.epsilon.decay = e.value("decay", c.epsilon.decay);
    }
    c.qr.gamma = j.value("gamma", c.qr.gamma);
    c.qr.learning_rate = j.value("learning_rate", c.qr.learning_rate);
    c.qr.kappa = j.value("kappa", c.qr.kappa);
    c.qr.clip_norm = j.value("clip_norm", c.qr.clip_norm);
    c.qr.on_action_target = j.value("on_action_target", c.qr.on_action_target);
    if (j.contains("thresholds")) {
      c.thresholds = Thresholds::FromJson(j["thresholds"]);
    }
    if (j.contains("seed_thresholds") && j["seed_thresholds"].contains(c.seed)) {
      c.thresholds = Thresholds::FromJson(j["seed_thresholds"][c.seed]);
    }
    if (j.contains("feeds")) {
      c.feeds.count = j["feeds"].value("count", c.feeds.count);
      c.feeds.special_value_rate =
          j["feeds"].value("special_value_rate", c.feeds.special_value_rate);
    }
    c.anchor_count = j.value("anchor_count", c.anchor_count);
    c.random_ablation = j.value("random_ablation", c.random_ablation);
    c.reselect_on_low_reward =
        j.value("reselect_on_low_reward", c.reselect_on_low_reward);
    c.detect = j.value("detect", c.detect);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  c.Check();
  return c;
}

void CampaignConfig::Check() const {
  try {
    FindSeed(seed);
    MakeBackend(backend);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (rounds < 1) throw ConfigError("rounds must be >= 1");
  if (feeds.count < 1) throw ConfigError("feeds.count must be >= 1");
  if (anchor_count < 1) throw ConfigError("anchor_count must be >= 1");
  if (!(qr.gamma > 0.0 && qr.gamma < 1.0)) {
    throw ConfigError("gamma must lie in (0, 1)");
  }
  if (!(epsilon.end <= epsilon.epsilon && epsilon.epsilon <= 1.0)) {
    throw ConfigError("epsilon schedule must satisfy end <= start <= 1");
  }
}

std::string_view RoundOutcomeName(RoundOutcome outcome) {
  switch (outcome) {
    case RoundOutcome::kRetained:
      return "retained";
    case RoundOutcome::kCrash:
      return "crash";
    case RoundOutcome::kInvalid:
      return "invalid";
  }
  return "unknown";
}

nlohmann::json RoundRecord::ToJson() const {
  nlohmann::json j = {{"round", round},
                      {"outcome", RoundOutcomeName(outcome)},
                      {"smr", SmrName(smr)},
                      {"reward", reward},
                      {"reselected", reselected},
                      {"lineage", Lineage(lineage)},
                      {"note", note}};
  j["fingerprint"] = fingerprint ? nlohmann::json(*fingerprint) : nlohmann::json();
  if (diversity) {
    j["diversity"] = {{"lic", diversity->lic},
                      {"lpc", diversity->lpc},
                      {"lsc", diversity->lsc},
                      {"reward", diversity->reward}};
  }
  return j;
}

RoundRecord RoundRecord::FromJson(const nlohmann::json& j) {
  RoundRecord r;
  r.round = j.at("round").get<int>();
  const std::string outcome = j.at("outcome").get<std::string>();
  for (RoundOutcome o : {RoundOutcome::kRetained, RoundOutcome::kCrash,
                         RoundOutcome::kInvalid}) {
    if (RoundOutcomeName(o) == outcome) r.outcome = o;
  }
  r.smr = ParseSmr(j.at("smr").get<std::string>());
  r.reward = j.at("reward").get<double>();
  r.reselected = j.at("reselected").get<bool>();
  r.lineage = LineageFrom(j.at("lineage"));
  r.note = j.at("note").get<std::string>();
  if (!j.at("fingerprint").is_null()) {
    r.fingerprint = j["fingerprint"].get<uint64_t>();
  }
  if (j.contains("diversity")) {
    const auto& d = j["diversity"];
    r.diversity = Diversity{d.at("lic").get<double>(), d.at("lpc").get<double>(),
                            d.at("lsc").get<double>(),
                            d.at("reward").get<double>()};
  }
  return r;
}

std::string CampaignResult::MetricsCsv() const {
  std::ostringstream out;
  out << "round,lic,lpc,lsc,reward\n";
  for (const RoundRecord& r : rounds) {
    out << r.round << ',';
    if (r.diversity) {
      out << FormatDouble(r.diversity->lic) << ','
          << FormatDouble(r.diversity->lpc) << ','
          << FormatDouble(r.diversity->lsc) << ',';
    } else {
      out << ",,,";
    }
    out << FormatDouble(r.reward) << '\n';
  }
  return out.str();
}

std::string CampaignResult::BugsJsonl() const {
  std::string out;
  for (const BugReport& b : bugs) out += b.ToJson().dump() + '\n';
  return out;
}

nlohmann::json CampaignResult::LineageJson() const {
  nlohmann::json models = nlohmann::json::array();
  for (const RoundRecord& r : rounds) {
    nlohmann::json m = {{"round", r.round},
                        {"outcome", RoundOutcomeName(r.outcome)},
                        {"lineage", Lineage(r.lineage)}};
    m["fingerprint"] =
        r.fingerprint ? nlohmann::json(*r.fingerprint) : nlohmann::json();
    models.push_back(std::move(m));
  }
  nlohmann::json reports = nlohmann::json::array();
  for (const BugReport& b : bugs) reports.push_back(b.ToJson());
  return {{"config", config.ToJson()},
          {"seed", config.seed},
          {"models", models},
          {"reports", reports}};
}

Graph ReplayLineage(const Graph& seed,
                    const std::vector<RewriteStep>& lineage) {
  return Regenerate(seed, lineage).graph;
}

uint64_t GraphFingerprint(const Graph& g) {
  // FNV-1a over the canonical bytes.
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : Serialize(g)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct Campaign::State {
  CampaignConfig config;
  std::unique_ptr<Backend> backend;
  Graph seed;
  std::vector<Feeds> feeds;
  Baseline baseline;
  Rng rng;
  QuantileValueFn q;
  QuantileValueFn target;
  EpsilonSchedule epsilon;
  ReplayPool pool;
  DiversityLedger ledger;

  Graph current;
  std::vector<RewriteStep> lineage;
  std::vector<int> zero_nodes;
  EquivalenceClass equivalence = EquivalenceClass::kExact;
  double current_max_abs = 0.0;
  FeatureContext ctx;
  std::optional<size_t> pending_credit;

  int round = 0;
  std::vector<RoundRecord> records;
  std::vector<BugReport> bugs;
  int retained = 0;
  int crashes = 0;
  int invalid = 0;
  std::chrono::steady_clock::time_point start =
      std::chrono::steady_clock::now();

  explicit State(CampaignConfig c)
      : config(std::move(c)),
        backend(MakeBackend(config.backend)),
        seed(FindSeed(config.seed)),
        feeds(MakeFeeds(config, seed)),
        rng(config.rng_seed) {
    epsilon = config.epsilon;
    if (config.random_ablation) {
      epsilon.epsilon = 1.0;
      epsilon.end = 1.0;
      epsilon.decay = 1.0;
    }
    ComputeBaseline();
    ResetToSeed();
  }

  void ComputeBaseline() {
    baseline.ok = true;
    for (size_t f = 0; f < feeds.size(); ++f) {
      try {
        baseline.traces.push_back(
            backend->ExecuteTrainingStep(seed, feeds[f]));
        baseline.max_abs =
            std::max(baseline.max_abs, MaxAbsActivation(baseline.traces.back()));
      } catch (const ExecutionError& e) {
        baseline.ok = false;
        CrashVerdict v = ClassifyCrash(e, seed, std::nullopt);
        if (!v.invalid) {
          v.report.evidence.feed = static_cast<int>(f);
          Stamp(v.report, config, 0, {});
          bugs.push_back(std::move(v.report));
        }
        return;
      }
    }
  }

  void ResetToSeed() {
    current = seed;
    lineage.clear();
    zero_nodes.clear();
    equivalence = EquivalenceClass::kExact;
    current_max_abs = baseline.max_abs;
    ctx.rounds_since_seed = 0;
    ctx.mean_abs_activation =
        baseline.ok ? std::optional(MeanAbsActivation(baseline.traces[0]))
                    : std::nullopt;
  }

  void AdoptEntry(size_t index) {
    const ReplayEntry& e = pool.entries()[index];
    current = e.graph;
    lineage = e.lineage;
    zero_nodes = e.zero_nodes;
    equivalence = e.equivalence;
    current_max_abs = e.max_abs;
    ctx.rounds_since_seed = 0;
  }

  // Thompson reselection; falls back to the original seed on an empty pool.
  void Reselect() {
    try {
      const size_t index = pool.ThompsonSelect(rng);
      AdoptEntry(index);
      pending_credit = index;
    } catch (const EmptyPoolError&) {
      ResetToSeed();
      pending_credit.reset();
    }
  }

  void RunRound() {
    ++round;
    const Features phi = Featurize(current, ctx);
    const SmrKind smr = SelectSmr(q, phi, epsilon.epsilon, rng);
    RewriteStep step;
    step.smr = smr;
    step.insert = SelectInsert(rng);
    step.imr = SelectImr(rng);
    step.seed = rng.NextSeed();
    step.anchor_count = config.anchor_count;

    RoundRecord record;
    record.round = round;
    record.smr = smr;

    RewriteOutcome out = Transform(current, step);
    std::vector<RewriteStep> child_lineage = lineage;
    child_lineage.push_back(out.step);
    record.lineage = child_lineage;
    if (out.ok()) record.fingerprint = GraphFingerprint(out.graph);

    Judgement j;
    if (!out.ok()) {
      j.outcome = RoundOutcome::kInvalid;
      j.note = out.error->what();
    } else {
      j = Judge(*backend, out.graph, feeds, current_max_abs);
    }

    Transition t;
    t.state = phi;
    t.action = static_cast<int>(smr);
    const double median = pool.MedianReward();
    const bool pool_was_empty = pool.empty();
    bool reselect = false;
    if (j.outcome != RoundOutcome::kRetained) {
      record.outcome = j.outcome;
      record.reward = kCrashReward;
      record.note = j.note;
      if (j.crash) {
        Stamp(*j.crash, config, round, child_lineage);
        bugs.push_back(*j.crash);
        ++crashes;
      } else {
        ++invalid;
      }
      t.reward = kCrashReward;
      t.done = true;
      t.next = phi;
      reselect = true;
      if (pending_credit) pool.Credit(*pending_credit, false);
    } else {
      record.outcome = RoundOutcome::kRetained;
      const Diversity d = CalDiversity(out.graph, ledger);
      record.diversity = d;
      record.reward = d.reward;
      ++retained;
      if (pending_credit) {
        pool.Credit(*pending_credit, pool_was_empty || d.reward >= median);
      }
      ReplayEntry entry;
      entry.graph = out.graph;
      entry.reward = d.reward;
      entry.lineage = child_lineage;
      entry.round = round;
      entry.zero_nodes = zero_nodes;
      entry.zero_nodes.insert(entry.zero_nodes.end(), out.zero_nodes.begin(),
                              out.zero_nodes.end());
      entry.equivalence = out.equivalence == EquivalenceClass::kApprox
                              ? EquivalenceClass::kApprox
                              : equivalence;
      entry.max_abs = j.max_abs;
      entry.pre_imr = out.pre_imr;
      pool.Add(entry);

      current = entry.graph;
      lineage = entry.lineage;
      zero_nodes = entry.zero_nodes;
      equivalence = entry.equivalence;
      current_max_abs = entry.max_abs;
      ctx.lic = d.lic;
      ctx.lpc = d.lpc;
      ctx.lsc = d.lsc;
      ctx.mean_abs_activation = j.mean_abs;
      ++ctx.rounds_since_seed;
      t.reward = d.reward;
      t.done = false;
      reselect = config.reselect_on_low_reward && !pool_was_empty &&
                 d.reward < median;
    }
    pending_credit.reset();
    ctx.last_smr = smr;
    ctx.last_crash = j.outcome != RoundOutcome::kRetained;
    if (reselect) {
      Reselect();
      record.reselected = true;
    }
    if (!t.done) t.next = Featurize(current, ctx);
    q.Update(target, t, config.qr);
    target = q;
    epsilon.Step();
    records.push_back(std::move(record));
  }

  nlohmann::json Checkpoint() const {
    nlohmann::json entries = nlohmann::json::array();
    for (const ReplayEntry& e : pool.entries()) {
      entries.push_back({{"round", e.round},
                         {"reward", e.reward},
                         {"alpha", e.alpha},
                         {"beta", e.beta},
                         {"max_abs", e.max_abs},
                         {"lineage", Lineage(e.lineage)}});
    }
    nlohmann::json records_json = nlohmann::json::array();
    for (const auto& r : records) records_json.push_back(r.ToJson());
    nlohmann::json bugs_json = nlohmann::json::array();
    for (const auto& b : bugs) bugs_json.push_back(b.ToJson());
    nlohmann::json ctx_json = {
        {"lic", ctx.lic},
        {"lpc", ctx.lpc},
        {"lsc", ctx.lsc},
        {"rounds_since_seed", ctx.rounds_since_seed},
        {"mean_abs_activation",
         ctx.mean_abs_activation ? nlohmann::json(*ctx.mean_abs_activation)
                                 : nlohmann::json()},
        {"last_smr", ctx.last_smr ? nlohmann::json(SmrName(*ctx.last_smr))
                                  : nlohmann::json()},
        {"last_crash", ctx.last_crash}};
    return {{"round", round},
            {"q", q.ToJson()},
            {"epsilon", epsilon.epsilon},
            {"rng", rng.State()},
            {"pool", entries},
            {"current",
             {{"lineage", Lineage(lineage)}, {"max_abs", current_max_abs}}},
            {"context", ctx_json},
            {"pending_credit", pending_credit
                                   ? nlohmann::json(*pending_credit)
                                   : nlohmann::json()},
            {"records", records_json},
            {"bugs", bugs_json},
            {"counts",
             {{"retained", retained},
              {"crashes", crashes},
              {"invalid", invalid}}}};
  }

  void Restore(const nlohmann::json& j) {
    round = j.at("round").get<int>();
    q = QuantileValueFn::FromJson(j.at("q"));
    target = q;
    epsilon.epsilon = j.at("epsilon").get<double>();
    rng.Restore(j.at("rng").get<std::string>());
    for (const auto& e : j.at("pool")) {
      ReplayEntry entry;
      Regenerated r = Regenerate(seed, LineageFrom(e.at("lineage")));
      entry.graph = std::move(r.graph);
      entry.zero_nodes = std::move(r.zero_nodes);
      entry.equivalence = r.equivalence;
      entry.pre_imr = std::move(r.pre_imr);
      entry.lineage = LineageFrom(e.at("lineage"));
      entry.round = e.at("round").get<int>();
      entry.reward = e.at("reward").get<double>();
      entry.alpha = e.at("alpha").get<double>();
      entry.beta = e.at("beta").get<double>();
      entry.max_abs = e.at("max_abs").get<double>();
      ledger.Update(entry.graph);
      pool.Add(std::move(entry));
    }
    const auto& cur = j.at("current");
    lineage = LineageFrom(cur.at("lineage"));
    Regenerated r = Regenerate(seed, lineage);
    current = std::move(r.graph);
    zero_nodes = std::move(r.zero_nodes);
    equivalence = r.equivalence;
    current_max_abs = cur.at("max_abs").get<double>();
    const auto& c = j.at("context");
    ctx.lic = c.at("lic").get<double>();
    ctx.lpc = c.at("lpc").get<double>();
    ctx.lsc = c.at("lsc").get<double>();
    ctx.rounds_since_seed = c.at("rounds_since_seed").get<int>();
    ctx.mean_abs_activation.reset();
    if (!c.at("mean_abs_activation").is_null()) {
      ctx.mean_abs_activation = c["mean_abs_activation"].get<double>();
    }
    ctx.last_smr.reset();
    if (!c.at("last_smr").is_null()) {
      ctx.last_smr = ParseSmr(c["last_smr"].get<std::string>());
    }
    ctx.last_crash = c.at("last_crash").get<bool>();
    pending_credit.reset();
    if (!j.at("pending_credit").is_null()) {
      pending_credit = j["pending_credit"].get<size_t>();
    }
    records.clear();
    for (const auto& r2 : j.at("records")) {
      records.push_back(RoundRecord::FromJson(r2));
    }
    bugs.clear();
    for (const auto& b : j.at("bugs")) bugs.push_back(BugReport::FromJson(b));
    retained = j["counts"].at("retained").get<int>();
    crashes = j["counts"].at("crashes").get<int>();
    invalid = j["counts"].at("invalid").get<int>();
  }

  std::vector<BugReport> Sweep() const {
    const auto& entries = pool.entries();
    std::vector<std::vector<BugReport>> found(entries.size());
    ParallelFor(entries.size(), [&](size_t i) {
      const ReplayEntry& e = entries[i];
      Regenerated model{e.graph, e.zero_nodes, e.equivalence, e.pre_imr};
      found[i] = DetectModel(*backend, config, seed, baseline, feeds, model,
                             e.round, e.lineage);
    });
    std::vector<BugReport> out;
    for (auto& list : found) {
      for (auto& r : list) out.push_back(std::move(r));
    }
    return out;
  }
};

Campaign::Campaign(CampaignConfig config)
    : state_(std::make_unique<State>(std::move(config))) {
  state_->config.Check();
}

Campaign::Campaign(CampaignConfig config, const nlohmann::json& checkpoint)
    : Campaign(std::move(config)) {
  state_->Restore(checkpoint);
}

Campaign::~Campaign() = default;

bool Campaign::done() const { return state_->round >= state_->config.rounds; }
int Campaign::round() const { return state_->round; }
void Campaign::RunRound() { state_->RunRound(); }
nlohmann::json Campaign::Checkpoint() const { return state_->Checkpoint(); }
const ReplayPool& Campaign::pool() const { return state_->pool; }
const DiversityLedger& Campaign::ledger() const { return state_->ledger; }

CampaignResult Campaign::Finish() {
  while (!done()) RunRound();
  State& s = *state_;
  CampaignResult result;
  result.config = s.config;
  result.bugs = s.bugs;
  if (s.config.detect) {
    std::vector<BugReport> swept = s.Sweep();
    result.bugs.insert(result.bugs.end(), swept.begin(), swept.end());
    std::stable_sort(result.bugs.begin(), result.bugs.end(),
                     [](const BugReport& a, const BugReport& b) {
                       return a.round < b.round;
                     });
  }
  result.rounds = s.records;
  result.retained = s.retained;
  result.crashes = s.crashes;
  result.invalid = s.invalid;
  result.signatures = s.ledger.signatures().size();
  result.edge_pairs = s.ledger.edge_pairs().size();
  result.checkpoint = s.Checkpoint();
  result.elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - s.start);
  return result;
}

CampaignResult RunCampaign(const CampaignConfig& config) {
  Campaign campaign(config);
  return campaign.Finish();
}

std::vector<BugReport> ReplayReport(const CampaignConfig& config,
                                    const BugReport& report) {
  config.Check();
  const Graph seed = FindSeed(config.seed);
  const auto backend = MakeBackend(config.backend);
  const std::vector<Feeds> feeds = MakeFeeds(config, seed);
  const Regenerated model = Regenerate(seed, report.lineage);

  if (report.kind == BugKind::kCrash) {
    if (report.lineage.empty()) {
      for (size_t f = 0; f < feeds.size(); ++f) {
        try {
          backend->ExecuteTrainingStep(seed, feeds[f]);
        } catch (const ExecutionError& e) {
          CrashVerdict v = ClassifyCrash(e, seed, std::nullopt);
          if (v.invalid) return {};
          v.report.evidence.feed = static_cast<int>(f);
          Stamp(v.report, config, report.round, report.lineage);
          return {v.report};
        }
      }
      return {};
    }
    std::vector<RewriteStep> parent_steps(report.lineage.begin(),
                                          report.lineage.end() - 1);
    const Graph parent = ReplayLineage(seed, parent_steps);
    const Judgement parent_j = Judge(*backend, parent, feeds, std::nullopt);
    const Judgement j = Judge(*backend, model.graph, feeds, parent_j.max_abs);
    if (!j.crash) return {};
    BugReport r = *j.crash;
    Stamp(r, config, report.round, report.lineage);
    return {r};
  }

  Baseline baseline;
  baseline.ok = true;
  for (const Feeds& f : feeds) {
    baseline.traces.push_back(backend->ExecuteTrainingStep(seed, f));
  }
  return DetectModel(*backend, config, seed, baseline, feeds, model,
                     report.round, report.lineage);
}

nlohmann::json SuiteRow::ToJson() const {
  return {{"name", name},
          {"backend", backend},
          {"seed", seed},
          {"rng_seed", rng_seed},
          {"expect", expect ? nlohmann::json(BugKindName(*expect))
                            : nlohmann::json()},
          {"detected", detected},
          {"reports", reports},
          {"other_reports", other_reports},
          {"rounds_to_detect", rounds_to_detect
                                   ? nlohmann::json(*rounds_to_detect)
                                   : nlohmann::json()},
          {"invalid", invalid},
          {"millis", millis}};
}

SuiteRow SuiteRow::FromJson(const nlohmann::json& j) {
  SuiteRow r;
  r.name = j.at("name").get<std::string>();
  r.backend = j.at("backend").get<std::string>();
  r.seed = j.at("seed").get<std::string>();
  r.rng_seed = j.at("rng_seed").get<uint64_t>();
  if (!j.at("expect").is_null()) {
    r.expect = ParseBugKind(j["expect"].get<std::string>());
  }
  r.detected = j.at("detected").get<bool>();
  r.reports = j.at("reports").get<int>();
  r.other_reports = j.at("other_reports").get<int>();
  if (!j.at("rounds_to_detect").is_null()) {
    r.rounds_to_detect = j["rounds_to_detect"].get<int>();
  }
  r.invalid = j.at("invalid").get<int>();
  r.millis = j.at("millis").get<int64_t>();
  return r;
}

bool SuiteSummary::passed() const {
  return std::all_of(rows.begin(), rows.end(),
                     [](const SuiteRow& r) { return r.passed(); });
}

int SuiteSummary::faults_detected() const {
  std::map<std::string, bool> faults;
  for (const SuiteRow& r : rows) {
    if (!r.expect) continue;
    auto [it, fresh] = faults.emplace(r.backend, true);
    it->second = it->second && r.detected;
  }
  return static_cast<int>(std::count_if(
      faults.begin(), faults.end(), [](const auto& f) { return f.second; }));
}

int SuiteSummary::false_positives() const {
  int n = 0;
  for (const SuiteRow& r : rows) {
    if (!r.expect) n += r.reports;
  }
  return n;
}

std::string SuiteSummary::Table() const {
  std::ostringstream out;
  out << std::left << std::setw(28) << "case" << std::setw(12) << "expect"
      << std::setw(10) << "detected" << std::setw(9) << "reports"
      << std::setw(8) << "first" << std::setw(9) << "invalid"
      << "ms\n";
  for (const SuiteRow& r : rows) {
    out << std::left << std::setw(28) << r.name << std::setw(12)
        << (r.expect ? std::string(BugKindName(*r.expect)) : "none")
        << std::setw(10) << (r.expect ? (r.detected ? "yes" : "NO") : "-")
        << std::setw(9) << r.reports << std::setw(8)
        << (r.rounds_to_detect ? std::to_string(*r.rounds_to_detect) : "-")
        << std::setw(9) << r.invalid << r.millis << '\n';
  }
  out << "faults detected in every run: " << faults_detected()
      << ", reference false positives: " << false_positives()
      << ", total ms: " << millis << '\n';
  return out.str();
}

nlohmann::json SuiteSummary::ToJson() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const SuiteRow& r : rows) rows_json.push_back(r.ToJson());
  return {{"rows", rows_json}, {"millis", millis}};
}

SuiteSummary SuiteSummary::FromJson(const nlohmann::json& j) {
  SuiteSummary s;
  for (const auto& r : j.at("rows")) s.rows.push_back(SuiteRow::FromJson(r));
  s.millis = j.at("millis").get<int64_t>();
  return s;
}

std::vector<SuiteCase> ValidationCases(int rng_seeds, int rounds) {
  struct Designation {
    FaultId fault;
    const char* seed;
    BugKind kind;
    double special_value_rate;
  };
  static constexpr Designation kDesignations[] = {
      {FaultId::kM1, "mlp", BugKind::kAccuracy, 0.05},
      {FaultId::kM2, "cnn", BugKind::kAccuracy, 0.0},
      {FaultId::kM3, "cnn", BugKind::kCrash, 0.0},
      {FaultId::kM4, "autoencoder", BugKind::kEfficiency, 0.0},
      {FaultId::kM5, "slice_concat", BugKind::kResource, 0.0},
      {FaultId::kM6, "cnn", BugKind::kAccuracy, 0.0},
      {FaultId::kM7, "cnn", BugKind::kCrash, 0.0},
  };
  std::vector<SuiteCase> cases;
  for (const Designation& d : kDesignations) {
    for (int s = 1; s <= rng_seeds; ++s) {
      SuiteCase c;
      c.config.seed = d.seed;
      c.config.backend = "mutant:" + std::string(FaultName(d.fault));
      c.config.rounds = rounds;
      c.config.rng_seed = static_cast<uint64_t>(s);
      c.config.feeds.special_value_rate = d.special_value_rate;
      c.expect = d.kind;
      c.name = std::string(FaultName(d.fault)) + "/" + d.seed + "/" +
               std::to_string(s);
      cases.push_back(std::move(c));
    }
  }
  for (const std::string& label : SeedLabels()) {
    SuiteCase c;
    c.config.seed = label;
    c.config.rounds = rounds;
    c.config.rng_seed = 1;
    c.name = "reference/" + label;
    cases.push_back(std::move(c));
  }
  SuiteCase nan_case;
  nan_case.config.seed = "mlp";
  nan_case.config.rounds = rounds;
  nan_case.config.rng_seed = 1;
  nan_case.config.feeds.special_value_rate = 0.05;
  nan_case.name = "reference/mlp+nan";
  cases.push_back(std::move(nan_case));
  return cases;
}

SuiteSummary RunValidationSuite(const std::vector<SuiteCase>& cases) {
  const auto start = std::chrono::steady_clock::now();
  SuiteSummary summary;
  for (const SuiteCase& c : cases) {
    const CampaignResult result = RunCampaign(c.config);
    SuiteRow row;
    row.name = c.name;
    row.backend = c.config.backend;
    row.seed = c.config.seed;
    row.rng_seed = c.config.rng_seed;
    row.expect = c.expect;
    row.reports = static_cast<int>(result.bugs.size());
    row.invalid = result.invalid;
    row.millis = result.elapsed.count();
    for (const BugReport& b : result.bugs) {
      if (c.expect && b.kind == *c.expect) {
        row.detected = true;
        if (!row.rounds_to_detect || b.round < *row.rounds_to_detect) {
          row.rounds_to_detect = b.round;
        }
      } else {
        ++row.other_reports;
      }
    }
    summary.rows.push_back(std::move(row));
  }
  summary.millis = std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::steady_clock::now() - start)
                       .count();
  return summary;
}

int SweepThreads() {
  if (const char* env = std::getenv("GRAPHMETA_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

}  // namespace graphmeta
