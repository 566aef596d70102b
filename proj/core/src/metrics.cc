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

#include "graphmeta/metrics.h"

#include <bitset>

namespace graphmeta {

int ShapeBucket(const Shape& shape) {
  const int64_t n = shape.numel();
  if (n <= 1) return 0;
  const bool high_rank = shape.rank() > 2;
  const bool unit = shape.has_unit_dim();
  if (n > 4096) {
    if (!high_rank) return 13;
    return unit ? 14 : 15;
  }
  const int band = n <= 16 ? 0 : (n <= 256 ? 1 : 2);
  return 1 + band * 4 + (high_rank ? 2 : 0) + (unit ? 0 : 1);
}

LicCounts CountLicInputs(const Graph& g) {
  std::bitset<kNumDTypes> dtypes;
  std::bitset<kNumRanks> ranks;
  std::bitset<kNumShapeBuckets> buckets;
  for (const Node& node : g.nodes()) {
    if (IsSource(node.op)) continue;
    for (int in : node.inputs) {
      const Node& src = g.node(in);
      dtypes.set(static_cast<int>(src.out_dtype));
      ranks.set(src.out_shape.rank());
      buckets.set(ShapeBucket(src.out_shape));
    }
  }
  return {static_cast<int>(dtypes.count()), static_cast<int>(ranks.count()),
          static_cast<int>(buckets.count())};
}

double Lic(const Graph& g) { return CountLicInputs(g).value(); }

void DiversityLedger::Update(const Graph& g) {
  for (const auto& s : Signatures(g)) signatures_.insert(s);
  for (const auto& p : EdgePairs(g)) edge_pairs_.insert(p);
}

double Lpc(const Graph& g, const DiversityLedger& ledger) {
  if (ledger.signatures().empty()) return 0.0;
  return static_cast<double>(Signatures(g).size()) /
         static_cast<double>(ledger.signatures().size());
}

double Lsc(const Graph& g, const DiversityLedger& ledger) {
  if (ledger.edge_pairs().empty()) return 0.0;
  return static_cast<double>(EdgePairs(g).size()) /
         static_cast<double>(ledger.edge_pairs().size());
}

Diversity CalDiversity(const Graph& g, DiversityLedger& ledger) {
  ledger.Update(g);
  Diversity d;
  d.lic = Lic(g);
  d.lpc = Lpc(g, ledger);
  d.lsc = Lsc(g, ledger);
  d.reward = (d.lic + d.lpc + d.lsc) / 3.0;
  return d;
}

}  // namespace graphmeta
