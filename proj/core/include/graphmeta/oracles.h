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

// Bug detectors over execution traces: accuracy (Chebyshev layer distance,
// loss, gradients, zero branches, NaN/Inf outliers), resource, efficiency,
// and crash classification.

#ifndef GRAPHMETA_ORACLES_H_
#define GRAPHMETA_ORACLES_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "graphmeta/backend.h"
#include "graphmeta/graph.h"
#include "graphmeta/rewrites.h"

namespace graphmeta {

struct Thresholds {
  // Chebyshev limits per dtype for exact- and approx-class rewrites.
  std::map<DType, double> accuracy_exact = {{DType::kF32, 1e-6},
                                            {DType::kF64, 1e-12},
                                            {DType::kF16, 1e-3}};
  std::map<DType, double> accuracy_approx = {{DType::kF32, 1e-4},
                                             {DType::kF64, 1e-10},
                                             {DType::kF16, 1e-2}};
  double loss_tol = 1e-6;
  double grad_tol = 1e-4;
  double resource_ratio = 2.0;
  int64_t leak_bytes = 0;
  double efficiency_ratio = 3.0;

  double Accuracy(DType dtype, EquivalenceClass cls) const;

  nlohmann::json ToJson() const;
  // Missing keys keep their defaults.
  static Thresholds FromJson(const nlohmann::json& j);
};

enum class BugKind { kAccuracy, kCrash, kResource, kEfficiency };

std::string_view BugKindName(BugKind kind);
BugKind ParseBugKind(std::string_view name);

struct Evidence {
  // layer, loss, gradient, outlier, zero_branch, leak, peak, cost, crash.
  std::string check;
  std::optional<int> node;
  double value = 0.0;
  std::optional<Phase> phase;
  std::string message;
  // Index of the feed that exposed the bug; -1 when not feed-specific.
  int feed = -1;
  // Measured wall-time ratio for cost reports. Timing varies between runs,
  // so it takes no part in equality.
  std::optional<double> wall_time_ratio;

  friend bool operator==(const Evidence& a, const Evidence& b) {
    return a.check == b.check && a.node == b.node && a.value == b.value &&
           a.phase == b.phase && a.message == b.message && a.feed == b.feed;
  }
};

struct BugReport {
  BugKind kind = BugKind::kAccuracy;
  std::string backend;
  std::string seed;
  int round = 0;
  std::vector<RewriteStep> lineage;
  Evidence evidence;
  double threshold = 0.0;

  nlohmann::json ToJson() const;
  static BugReport FromJson(const nlohmann::json& j);

  friend bool operator==(const BugReport&, const BugReport&) = default;
};

nlohmann::json StepToJson(const RewriteStep& step);
RewriteStep StepFromJson(const nlohmann::json& j);

// max |a - b|; NaN or Inf against a different value is +inf, matching
// non-finite values are 0. Throws GraphError{kShapeMismatch}.
double Chebyshev(const TensorValue& a, const TensorValue& b);

// Pairs (node in m, node in n).
using LayerMap = std::vector<std::pair<int, int>>;

// Identity map over the non-source nodes of `seed`.
LayerMap SeedLayerMap(const Graph& seed);

std::map<int, double> ChebyshevLayerDistance(const ExecutionTrace& m,
                                             const ExecutionTrace& n,
                                             const LayerMap& layers);

struct AccuracyInput {
  const ExecutionTrace* seed = nullptr;
  const Graph* model = nullptr;
  const ExecutionTrace* trace = nullptr;
  LayerMap layers;
  std::vector<int> zero_nodes;
  EquivalenceClass equivalence = EquivalenceClass::kExact;
  int feed = -1;
};

// Cross-model checks run only when the seed trace is all-finite; the
// NaN-propagation check on the model's own trace always runs. At most one
// report per check.
std::vector<BugReport> DetectAccuracy(const AccuracyInput& in,
                                      const Thresholds& thresholds);

// Total bytes of every node output.
int64_t ModelBytes(const Graph& g);

// Peak allocation normalized by model size against the baseline, and leaks.
std::vector<BugReport> DetectResource(const Graph& model,
                                      const ExecutionTrace& trace,
                                      const Graph& baseline_model,
                                      const ExecutionTrace& baseline,
                                      const Thresholds& thresholds);

// Compares two equivalent models. When nodes sharing an id were rebuilt, the
// ratio is their summed cost; otherwise it is the total cost ratio normalized
// by the node-count ratio. Either is taken in whichever direction exceeds 1.
// Wall time is evidence only.
std::vector<BugReport> DetectEfficiency(const Graph& model,
                                        const ExecutionTrace& trace,
                                        const Graph& baseline_model,
                                        const ExecutionTrace& baseline,
                                        const Thresholds& thresholds);

inline constexpr double kMagnitudeLimit = 1e30;

// Largest finite |value| in the trace, or +inf when any element is Inf.
double MaxAbsActivation(const ExecutionTrace& trace);

struct CrashVerdict {
  bool invalid = false;
  std::string reason;
  // Meaningful when !invalid.
  BugReport report;
};

// Invalid when `g` fails validation or the previous trace of the model had
// an activation beyond kMagnitudeLimit; otherwise a Crash report.
CrashVerdict ClassifyCrash(const ExecutionError& error, const Graph& g,
                           std::optional<double> prior_max_abs);

}  // namespace graphmeta

#endif  // GRAPHMETA_ORACLES_H_
