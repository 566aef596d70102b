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

// Generation guidance: state featurization, a quantile-regression value
// function with epsilon-greedy structure-relation selection, and the replay
// pool with Thompson-sampling seed reselection.

#ifndef GRAPHMETA_GUIDANCE_H_
#define GRAPHMETA_GUIDANCE_H_

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "graphmeta/graph.h"
#include "graphmeta/rewrites.h"
#include "graphmeta/rng.h"

namespace graphmeta {

inline constexpr int kNumActions = kNumSmrs;
inline constexpr int kNumQuantiles = 32;
inline constexpr int kFeatureDim = 26 + kNumOpKinds;

using Features = std::array<double, kFeatureDim>;

struct FeatureContext {
  double lic = 0.0;
  double lpc = 0.0;
  double lsc = 0.0;
  int rounds_since_seed = 0;
  // Mean |activation| over the last trace, when one exists.
  std::optional<double> mean_abs_activation;
  std::optional<SmrKind> last_smr;
  bool last_crash = false;
};

// Layout: per-OpKind node fractions (26), depth/64, max fan-out/16,
// nodes/256, lic, lpc, lsc, rounds/100, float-node fraction,
// log-scaled mean |activation|, dtype fractions (5), rank fractions (6),
// last-SMR one-hot (4), last-crash flag, constant 1.
Features Featurize(const Graph& g, const FeatureContext& ctx);

struct Transition {
  Features state{};
  int action = 0;
  double reward = 0.0;
  Features next{};
  bool done = false;
};

struct QrConfig {
  double gamma = 0.99;
  double learning_rate = 1e-3;
  double kappa = 1.0;
  double clip_norm = 10.0;
  // Use the transition's action instead of the greedy one for the target.
  bool on_action_target = false;
};

// Z(s, a)_j = theta[a][j] . phi(s) + b[a][j]; Q(s, a) = mean_j Z(s, a)_j.
class QuantileValueFn {
 public:
  using QuantileRow = std::array<double, kNumQuantiles>;

  QuantileValueFn();

  QuantileRow Quantiles(const Features& phi, int action) const;
  double Q(const Features& phi, int action) const;
  std::array<double, kNumActions> QValues(const Features& phi) const;
  // Ties resolve to the lowest action.
  int Greedy(const Features& phi) const;

  // One gradient step on the quantile Huber loss; returns the loss.
  double Update(const QuantileValueFn& target, const Transition& t,
                const QrConfig& config);

  static double Midpoint(int j) {
    return (2.0 * j + 1.0) / (2.0 * kNumQuantiles);
  }

  double& weight(int a, int j, int f) { return theta_[Index(a, j, f)]; }
  double& bias(int a, int j) { return bias_[a * kNumQuantiles + j]; }

  nlohmann::json ToJson() const;
  static QuantileValueFn FromJson(const nlohmann::json& j);

  friend bool operator==(const QuantileValueFn&,
                         const QuantileValueFn&) = default;

 private:
  static size_t Index(int a, int j, int f) {
    return (static_cast<size_t>(a) * kNumQuantiles + j) * kFeatureDim + f;
  }

  std::vector<double> theta_;
  std::vector<double> bias_;
};

struct EpsilonSchedule {
  double epsilon = 1.0;
  double end = 0.05;
  double decay = 0.97;

  void Step();
};

// Draw p ~ U(0,1); p <= epsilon explores uniformly, else greedy.
SmrKind SelectSmr(const QuantileValueFn& q, const Features& phi,
                  double epsilon, Rng& rng);
ImrKind SelectImr(Rng& rng);
InsertKind SelectInsert(Rng& rng);

struct ReplayEntry {
  Graph graph;
  double reward = 0.0;
  double alpha = 1.0;
  double beta = 1.0;
  std::vector<RewriteStep> lineage;
  // Campaign round that produced the model.
  int round = 0;
  // Zero-branch nodes accumulated along the lineage.
  std::vector<int> zero_nodes;
  EquivalenceClass equivalence = EquivalenceClass::kExact;
  // Largest |activation| seen when the model was judged.
  double max_abs = 0.0;
  // The equivalent model before the last interface relation, if any.
  std::optional<Graph> pre_imr;
};

class EmptyPoolError : public std::runtime_error {
 public:
  EmptyPoolError() : std::runtime_error("replay pool is empty") {}
};

class ReplayPool {
 public:
  void Add(ReplayEntry entry) { entries_.push_back(std::move(entry)); }
  bool empty() const { return entries_.empty(); }
  size_t size() const { return entries_.size(); }
  const std::vector<ReplayEntry>& entries() const { return entries_; }
  ReplayEntry& at(size_t i) { return entries_.at(i); }

  // Index of the entry with the largest Beta draw. Throws EmptyPoolError.
  size_t ThompsonSelect(Rng& rng) const;
  // Success increments alpha, failure increments beta.
  void Credit(size_t index, bool success);
  double MedianReward() const;

 private:
  std::vector<ReplayEntry> entries_;
};

}  // namespace graphmeta

#endif  // GRAPHMETA_GUIDANCE_H_
