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

#include "graphmeta/oracles.h"

#include <cmath>
#include <limits>

#include "graphmeta/serialize.h"

namespace graphmeta {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

nlohmann::json Number(double v) {
  if (std::isfinite(v)) return v;
  return FormatDouble(v);
}

double ReadNumber(const nlohmann::json& j) {
  if (j.is_string()) return ParseDouble(j.get<std::string>());
  return j.get<double>();
}

double ElementDistance(double a, double b) {
  if (std::isnan(a) || std::isnan(b)) {
    return std::isnan(a) && std::isnan(b) ? 0.0 : kInf;
  }
  if (std::isinf(a) || std::isinf(b)) return a == b ? 0.0 : kInf;
  return std::fabs(a - b);
}

bool Outlier(double v) { return !std::isfinite(v); }

// Position where exactly one side holds NaN/Inf, if any.
std::optional<size_t> InconsistentOutlier(const TensorValue& a,
                                          const TensorValue& b) {
  const size_t n = std::min(a.data.size(), b.data.size());
  for (size_t i = 0; i < n; ++i) {
    if (Outlier(a.data[i]) != Outlier(b.data[i])) return i;
  }
  return std::nullopt;
}

bool AllFinite(const ExecutionTrace& t) {
  for (const TensorValue& v : t.outputs) {
    if (!v.AllFinite()) return false;
  }
  return true;
}

double MaxAbs(const TensorValue& t) {
  double m = 0.0;
  for (double v : t.data) {
    if (std::isnan(v)) return kInf;
    m = std::max(m, std::fabs(v));
  }
  return m;
}

// Elementwise node whose output drops a NaN present in an input.
std::optional<int> UnpropagatedNaN(const Graph& g, const ExecutionTrace& t) {
  for (const Node& node : g.nodes()) {
    if (!IsElementwiseUnary(node.op) && !IsElementwiseBinary(node.op)) {
      continue;
    }
    const TensorValue& out = t.outputs[node.id];
    for (int in : node.inputs) {
      const TensorValue& x = t.outputs[in];
      const bool scalar = x.shape.rank() == 0 && out.numel() != 1;
      for (int64_t i = 0; i < out.numel(); ++i) {
        if (std::isnan(x.data[scalar ? 0 : i]) && !std::isnan(out.data[i])) {
          return node.id;
        }
      }
    }
  }
  return std::nullopt;
}

BugReport Report(BugKind kind, std::string check, std::optional<int> node,
                 double value, double threshold, int feed,
                 std::string message = "") {
  BugReport r;
  r.kind = kind;
  r.evidence.check = std::move(check);
  r.evidence.node = node;
  r.evidence.value = value;
  r.evidence.feed = feed;
  r.evidence.message = std::move(message);
  r.threshold = threshold;
  return r;
}

}  // namespace

double Thresholds::Accuracy(DType dtype, EquivalenceClass cls) const {
  const auto& table =
      cls == EquivalenceClass::kExact ? accuracy_exact : accuracy_approx;
  auto it = table.find(dtype);
  if (it != table.end()) return it->second;
  return table.at(DType::kF32);
}

nlohmann::json Thresholds::ToJson() const {
  nlohmann::json exact = nlohmann::json::object();
  nlohmann::json approx = nlohmann::json::object();
  for (const auto& [d, v] : accuracy_exact) exact[std::string(DTypeName(d))] = v;
  for (const auto& [d, v] : accuracy_approx) {
    approx[std::string(DTypeName(d))] = v;
  }
  return {{"accuracy_exact", exact},       {"accuracy_approx", approx},
          {"loss_tol", loss_tol},          {"grad_tol", grad_tol},
          {"resource_ratio", resource_ratio}, {"leak_bytes", leak_bytes},
          {"efficiency_ratio", efficiency_ratio}};
}

Thresholds Thresholds::FromJson(const nlohmann::json& j) {
  Thresholds t;
  auto table = [&](const char* key, std::map<DType, double>& out) {
    if (!j.contains(key)) return;
    for (const auto& [name, v] : j.at(key).items()) {
      out[ParseDType(name)] = v.get<double>();
    }
  };
  table("accuracy_exact", t.accuracy_exact);
  table("accuracy_approx", t.accuracy_approx);
  t.loss_tol = j.value("loss_tol", t.loss_tol);
  t.grad_tol = j.value("grad_tol", t.grad_tol);
  t.resource_ratio = j.value("resource_ratio", t.resource_ratio);
  t.leak_bytes = j.value("leak_bytes", t.leak_bytes);
  t.efficiency_ratio = j.value("efficiency_ratio", t.efficiency_ratio);
  return t;
}

std::string_view BugKindName(BugKind kind) {
  switch (kind) {
    case BugKind::kAccuracy:
      return "accuracy";
    case BugKind::kCrash:
      return "crash";
    case BugKind::kResource:
      return "resource";
    case BugKind::kEfficiency:
      return "efficiency";
  }
  return "unknown";
}

BugKind ParseBugKind(std::string_view name) {
  for (BugKind k : {BugKind::kAccuracy, BugKind::kCrash, BugKind::kResource,
                    BugKind::kEfficiency}) {
    if (BugKindName(k) == name) return k;
  }
  throw std::invalid_argument("unknown bug kind: " + std::string(name));
}

nlohmann::json StepToJson(const RewriteStep& step) {
  return {{"smr", SmrName(step.smr)},
          {"imr", step.imr ? nlohmann::json(ImrName(*step.imr))
                           : nlohmann::json()},
          {"insert", InsertName(step.insert)},
          {"seed", step.seed},
          {"anchor_count", step.anchor_count},
          {"anchors",
           {{"sources", step.anchors.sources},
            {"target", step.anchors.target}}}};
}

RewriteStep StepFromJson(const nlohmann::json& j) {
  RewriteStep step;
  step.smr = ParseSmr(j.at("smr").get<std::string>());
  if (!j.at("imr").is_null()) {
    step.imr = ParseImr(j.at("imr").get<std::string>());
  }
  step.insert = ParseInsert(j.at("insert").get<std::string>());
  step.seed = j.at("seed").get<uint64_t>();
  step.anchor_count = j.value("anchor_count", 2);
  if (j.contains("anchors")) {
    step.anchors.sources = j["anchors"].at("sources").get<std::vector<int>>();
    step.anchors.target = j["anchors"].at("target").get<int>();
  }
  return step;
}

nlohmann::json BugReport::ToJson() const {
  nlohmann::json lineage_json = nlohmann::json::array();
  for (const auto& step : lineage) lineage_json.push_back(StepToJson(step));
  nlohmann::json ev = {
      {"check", evidence.check},
      {"node", evidence.node ? nlohmann::json(*evidence.node)
                             : nlohmann::json()},
      {"value", Number(evidence.value)},
      {"phase", evidence.phase ? nlohmann::json(PhaseName(*evidence.phase))
                               : nlohmann::json()},
      {"message", evidence.message},
      {"feed", evidence.feed}};
  if (evidence.wall_time_ratio) {
    ev["wall_time_ratio"] = Number(*evidence.wall_time_ratio);
  }
  return {{"kind", BugKindName(kind)}, {"backend", backend},
          {"seed", seed},              {"round", round},
          {"lineage", lineage_json},   {"evidence", ev},
          {"threshold", Number(threshold)}};
}

BugReport BugReport::FromJson(const nlohmann::json& j) {
  BugReport r;
  r.kind = ParseBugKind(j.at("kind").get<std::string>());
  r.backend = j.at("backend").get<std::string>();
  r.seed = j.at("seed").get<std::string>();
  r.round = j.at("round").get<int>();
  for (const auto& s : j.at("lineage")) r.lineage.push_back(StepFromJson(s));
  const auto& ev = j.at("evidence");
  r.evidence.check = ev.at("check").get<std::string>();
  if (!ev.at("node").is_null()) r.evidence.node = ev["node"].get<int>();
  r.evidence.value = ReadNumber(ev.at("value"));
  if (!ev.at("phase").is_null()) {
    r.evidence.phase = ParsePhase(ev["phase"].get<std::string>());
  }
  r.evidence.message = ev.at("message").get<std::string>();
  r.evidence.feed = ev.at("feed").get<int>();
  if (ev.contains("wall_time_ratio")) {
    r.evidence.wall_time_ratio = ReadNumber(ev["wall_time_ratio"]);
  }
  r.threshold = ReadNumber(j.at("threshold"));
  return r;
}

double Chebyshev(const TensorValue& a, const TensorValue& b) {
  if (a.shape != b.shape) {
    throw GraphError(GraphErrorKind::kShapeMismatch, -1,
                     "compared layers have shapes " + a.shape.ToString() +
                         " and " + b.shape.ToString());
  }
  double d = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    d = std::max(d, ElementDistance(a.data[i], b.data[i]));
  }
  return d;
}

LayerMap SeedLayerMap(const Graph& seed) {
  LayerMap map;
  for (const Node& node : seed.nodes()) {
    if (!IsSource(node.op)) map.emplace_back(node.id, node.id);
  }
  return map;
}

std::map<int, double> ChebyshevLayerDistance(const ExecutionTrace& m,
                                             const ExecutionTrace& n,
                                             const LayerMap& layers) {
  std::map<int, double> out;
  for (const auto& [a, b] : layers) {
    out[a] = Chebyshev(m.outputs.at(a), n.outputs.at(b));
  }
  return out;
}

std::vector<BugReport> DetectAccuracy(const AccuracyInput& in,
                                      const Thresholds& thresholds) {
  std::vector<BugReport> reports;
  const ExecutionTrace& m = *in.seed;
  const ExecutionTrace& n = *in.trace;
  bool outlier_reported = false;
  if (AllFinite(m)) {
    bool layer_reported = false;
    for (const auto& [a, b] : in.layers) {
      const TensorValue& x = m.outputs.at(a);
      const TensorValue& y = n.outputs.at(b);
      if (!IsFloat(x.dtype)) continue;
      if (!outlier_reported) {
        if (auto pos = InconsistentOutlier(x, y)) {
          reports.push_back(Report(BugKind::kAccuracy, "outlier", b, kInf, 0.0,
                                   in.feed,
                                   "NaN/Inf at element " +
                                       std::to_string(*pos) +
                                       " in one model only"));
          outlier_reported = true;
          continue;
        }
      }
      const double limit = thresholds.Accuracy(x.dtype, in.equivalence);
      const double d = Chebyshev(x, y);
      if (!layer_reported && d > limit) {
        reports.push_back(
            Report(BugKind::kAccuracy, "layer", b, d, limit, in.feed));
        layer_reported = true;
      }
    }
    if (m.loss && n.loss) {
      const double d = ElementDistance(*m.loss, *n.loss);
      if (d > thresholds.loss_tol) {
        reports.push_back(Report(BugKind::kAccuracy, "loss", std::nullopt, d,
                                 thresholds.loss_tol, in.feed));
      }
    }
    for (const auto& [id, grad] : m.gradients) {
      auto it = n.gradients.find(id);
      if (it == n.gradients.end()) continue;
      const double d = Chebyshev(grad, it->second);
      if (d > thresholds.grad_tol) {
        reports.push_back(Report(BugKind::kAccuracy, "gradient", id, d,
                                 thresholds.grad_tol, in.feed));
        break;
      }
    }
    for (int z : in.zero_nodes) {
      const TensorValue& v = n.outputs.at(z);
      const double limit = thresholds.Accuracy(v.dtype, in.equivalence);
      const double d = MaxAbs(v);
      if (d > limit) {
        reports.push_back(
            Report(BugKind::kAccuracy, "zero_branch", z, d, limit, in.feed));
        break;
      }
    }
  }
  if (!outlier_reported) {
    if (auto node = UnpropagatedNaN(*in.model, n)) {
      reports.push_back(Report(BugKind::kAccuracy, "outlier", *node, kInf, 0.0,
                               in.feed, "NaN input not propagated"));
    }
  }
  return reports;
}

int64_t ModelBytes(const Graph& g) {
  int64_t bytes = 0;
  for (const Node& node : g.nodes()) {
    bytes += node.out_shape.numel() * DTypeBytes(node.out_dtype);
  }
  return bytes;
}

std::vector<BugReport> DetectResource(const Graph& model,
                                      const ExecutionTrace& trace,
                                      const Graph& baseline_model,
                                      const ExecutionTrace& baseline,
                                      const Thresholds& thresholds) {
  std::vector<BugReport> reports;
  if (trace.leaked_bytes > thresholds.leak_bytes) {
    reports.push_back(Report(BugKind::kResource, "leak", std::nullopt,
                             static_cast<double>(trace.leaked_bytes),
                             static_cast<double>(thresholds.leak_bytes), -1));
  }
  const double size_ratio = static_cast<double>(ModelBytes(model)) /
                            std::max<int64_t>(1, ModelBytes(baseline_model));
  const double peak_ratio =
      static_cast<double>(trace.peak_alloc_bytes) /
      std::max<int64_t>(1, baseline.peak_alloc_bytes);
  const double ratio = peak_ratio / size_ratio;
  if (ratio > thresholds.resource_ratio) {
    reports.push_back(Report(BugKind::kResource, "peak", std::nullopt, ratio,
                             thresholds.resource_ratio, -1));
  }
  return reports;
}

std::vector<BugReport> DetectEfficiency(const Graph& model,
                                        const ExecutionTrace& trace,
                                        const Graph& baseline_model,
                                        const ExecutionTrace& baseline,
                                        const Thresholds& thresholds) {
  // Ids present in both graphs whose node was rebuilt.
  int64_t before = 0;
  int64_t after = 0;
  int sites = 0;
  const int common = std::min(model.size(), baseline_model.size());
  for (int id = 0; id < common; ++id) {
    const Node& m = model.node(id);
    const Node& s = baseline_model.node(id);
    if (IsSource(m.op) || (m.op == s.op && m.attrs == s.attrs &&
                           m.inputs == s.inputs)) {
      continue;
    }
    before += baseline.node_costs[id];
    after += trace.node_costs[id];
    ++sites;
  }
  double normalized = 0.0;
  if (sites > 0) {
    normalized = static_cast<double>(after) / std::max<int64_t>(1, before);
  } else {
    const double node_ratio = static_cast<double>(model.size()) /
                              std::max(1, baseline_model.size());
    const double cost_ratio = static_cast<double>(trace.cost_units) /
                              std::max<int64_t>(1, baseline.cost_units);
    normalized = cost_ratio / node_ratio;
  }
  const double ratio =
      normalized > 0.0 ? std::max(normalized, 1.0 / normalized) : 0.0;
  if (ratio <= thresholds.efficiency_ratio) return {};
  const double wall =
      static_cast<double>(trace.wall_time.count()) /
      std::max<int64_t>(1, baseline.wall_time.count());
  BugReport r = Report(BugKind::kEfficiency, "cost", std::nullopt, ratio,
                       thresholds.efficiency_ratio, -1,
                       sites > 0 ? "rebuilt nodes: " + std::to_string(sites)
                                 : "whole-model cost");
  r.evidence.wall_time_ratio = wall;
  return {r};
}

double MaxAbsActivation(const ExecutionTrace& trace) {
  double m = 0.0;
  for (const TensorValue& v : trace.outputs) {
    for (double x : v.data) {
      if (std::isinf(x)) return kInf;
      if (!std::isnan(x)) m = std::max(m, std::fabs(x));
    }
  }
  return m;
}

CrashVerdict ClassifyCrash(const ExecutionError& error, const Graph& g,
                           std::optional<double> prior_max_abs) {
  CrashVerdict v;
  try {
    Validate(g);
  } catch (const GraphError& e) {
    v.invalid = true;
    v.reason = std::string("invalid graph: ") + e.what();
    return v;
  }
  if (prior_max_abs && *prior_max_abs > kMagnitudeLimit) {
    v.invalid = true;
    v.reason = "activation magnitude " + FormatDouble(*prior_max_abs) +
               " exceeds the numeric range";
    return v;
  }
  v.report = Report(BugKind::kCrash, "crash", error.node(), 0.0, 0.0, -1,
                    error.message());
  v.report.evidence.phase = error.phase();
  return v;
}

}  // namespace graphmeta
