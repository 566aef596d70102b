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

// Diversity metrics: layer input coverage (LIC), layer parameter coverage
// (LPC), layer sequence coverage (LSC), and the reward built from them.

#ifndef GRAPHMETA_METRICS_H_
#define GRAPHMETA_METRICS_H_

#include <set>

#include "graphmeta/graph.h"

namespace graphmeta {

// LIC universes: 5 dtypes, ranks 0..5, 16 shape buckets.
inline constexpr int kNumRanks = kMaxRank + 1;
inline constexpr int kNumShapeBuckets = 16;
inline constexpr int kLicDenominator = kNumDTypes + kNumRanks + kNumShapeBuckets;

inline constexpr double kCrashReward = -1.0;

// 0: at most one element. 1..12: element bands {2-16, 17-256, 257-4096}
// crossed with rank <= 2 vs > 2 and has-unit-dim vs not. 13: > 4096 and
// rank <= 2. 14/15: > 4096, rank > 2, with/without a unit dim.
int ShapeBucket(const Shape& shape);

struct LicCounts {
  int dtypes = 0;
  int ranks = 0;
  int buckets = 0;

  double value() const {
    return static_cast<double>(dtypes + ranks + buckets) / kLicDenominator;
  }
};

// Over the inputs of every non-source node.
LicCounts CountLicInputs(const Graph& g);
double Lic(const Graph& g);

// Cumulative layer signatures and operator pairs seen in a campaign.
class DiversityLedger {
 public:
  void Update(const Graph& g);

  const std::set<LayerSignature>& signatures() const { return signatures_; }
  const std::set<EdgePair>& edge_pairs() const { return edge_pairs_; }

 private:
  std::set<LayerSignature> signatures_;
  std::set<EdgePair> edge_pairs_;
};

// Both expect the ledger to already include `g`.
double Lpc(const Graph& g, const DiversityLedger& ledger);
double Lsc(const Graph& g, const DiversityLedger& ledger);

struct Diversity {
  double lic = 0.0;
  double lpc = 0.0;
  double lsc = 0.0;
  double reward = 0.0;

  friend bool operator==(const Diversity&, const Diversity&) = default;
};

// Updates the ledger with `g`, then scores it; reward is the mean.
Diversity CalDiversity(const Graph& g, DiversityLedger& ledger);

}  // namespace graphmeta

#endif  // GRAPHMETA_METRICS_H_
