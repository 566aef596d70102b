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

#include <gtest/gtest.h>

#include "graphmeta/graph.h"
#include "graphmeta/metrics.h"
#include "graphmeta/seeds.h"

namespace graphmeta {
namespace {

using List = std::vector<int64_t>;

TEST(ShapeBucketTest, HandValues) {
  EXPECT_EQ(ShapeBucket(Shape{}), 0);
  EXPECT_EQ(ShapeBucket(Shape{1}), 0);
  EXPECT_EQ(ShapeBucket(Shape{1, 1, 1}), 0);
  EXPECT_EQ(ShapeBucket(Shape{1, 16}), 1);
  EXPECT_EQ(ShapeBucket(Shape{16}), 2);
  EXPECT_EQ(ShapeBucket(Shape{2, 1, 8}), 3);
  EXPECT_EQ(ShapeBucket(Shape{2, 2, 4}), 4);
  EXPECT_EQ(ShapeBucket(Shape{17}), 6);
  EXPECT_EQ(ShapeBucket(Shape{1, 2, 128}), 7);
  EXPECT_EQ(ShapeBucket(Shape{4096}), 10);
  EXPECT_EQ(ShapeBucket(Shape{2, 2, 1024}), 12);
  EXPECT_EQ(ShapeBucket(Shape{4097}), 13);
  EXPECT_EQ(ShapeBucket(Shape{1, 64, 65}), 14);
  EXPECT_EQ(ShapeBucket(Shape{2, 64, 33}), 15);
}

TEST(ShapeBucketTest, CoversAllSixteenBuckets) {
  std::set<int> seen;
  for (int64_t n : {1, 2, 16, 17, 256, 257, 4096, 4097, 100000}) {
    for (const Shape& s : {Shape{n}, Shape{1, n}, Shape{2, 2, n}, Shape{1, 2, n}}) {
      const int b = ShapeBucket(s);
      EXPECT_GE(b, 0);
      EXPECT_LT(b, kNumShapeBuckets);
      seen.insert(b);
    }
  }
  EXPECT_EQ(static_cast<int>(seen.size()), kNumShapeBuckets);
}

// Inputs seen by layers: [2,3] twice, [2,1] twice, [] once.
Graph SixOfTwentySeven() {
  GraphBuilder b("lic");
  const int x = b.AddInput(DType::kF32, Shape{2, 3});
  const int n = b.Add(OpKind::kNeg, {x});
  const int r = b.Add(OpKind::kReduceSum, {n},
                      {{"axes", List{1}}, {"keepdims", int64_t{1}}});
  const int t = b.Add(OpKind::kTanh, {r});
  const int s = b.Add(OpKind::kReduceSum, {t},
                      {{"axes", List{0, 1}}, {"keepdims", int64_t{0}}});
  b.SetOutputs({b.Add(OpKind::kNeg, {s})});
  return b.Build();
}

TEST(LicTest, SixOfTwentySeven) {
  const LicCounts c = CountLicInputs(SixOfTwentySeven());
  EXPECT_EQ(c.dtypes, 1);
  EXPECT_EQ(c.ranks, 2);
  EXPECT_EQ(c.buckets, 3);
  EXPECT_DOUBLE_EQ(Lic(SixOfTwentySeven()), 6.0 / 27.0);
  EXPECT_NEAR(Lic(SixOfTwentySeven()), 0.222, 1e-3);
  EXPECT_EQ(kLicDenominator, 27);
}

TEST(LicTest, SourcesAloneContributeNothing) {
  GraphBuilder b("empty");
  b.SetOutputs({b.AddInput(DType::kF32, Shape{3})});
  EXPECT_EQ(Lic(b.Build()), 0.0);
}

Graph Branchy() {
  GraphBuilder b("branchy");
  const int x = b.AddInput(DType::kF32, Shape{2, 3});
  const int w = b.AddConst(TensorValue(DType::kF32, Shape{3, 4}), true);
  const int m = b.Add(OpKind::kMatMul, {x, w});
  const int r = b.Add(OpKind::kReLU, {m});
  const int t = b.Add(OpKind::kTanh, {m});
  b.SetOutputs({b.Add(OpKind::kAdd, {r, t})});
  return b.Build();
}

Graph Chain() {
  GraphBuilder b("chain");
  const int x = b.AddInput(DType::kF32, Shape{4});
  int h = b.Add(OpKind::kNeg, {x});
  h = b.Add(OpKind::kAbs, {h});
  h = b.Add(OpKind::kSquare, {h});
  b.SetOutputs({b.Add(OpKind::kSigmoid, {h})});
  return b.Build();
}

TEST(DiversityTest, FirstModelScoresOne) {
  DiversityLedger ledger;
  const Diversity d = CalDiversity(Branchy(), ledger);
  EXPECT_EQ(d.lpc, 1.0);
  EXPECT_EQ(d.lsc, 1.0);
  EXPECT_DOUBLE_EQ(d.reward, (d.lic + d.lpc + d.lsc) / 3.0);
}

TEST(DiversityTest, CumulativeRatiosByHand) {
  DiversityLedger ledger;
  CalDiversity(Branchy(), ledger);
  const Diversity d = CalDiversity(Chain(), ledger);
  // 4 + 4 signatures; 4 + 3 operator pairs.
  EXPECT_EQ(ledger.signatures().size(), 8u);
  EXPECT_EQ(ledger.edge_pairs().size(), 7u);
  EXPECT_DOUBLE_EQ(d.lpc, 4.0 / 8.0);
  EXPECT_DOUBLE_EQ(d.lsc, 3.0 / 7.0);
  EXPECT_DOUBLE_EQ(Lpc(Branchy(), ledger), 0.5);
  EXPECT_DOUBLE_EQ(Lsc(Branchy(), ledger), 4.0 / 7.0);
  EXPECT_DOUBLE_EQ(d.reward, (d.lic + d.lpc + d.lsc) / 3.0);
}

TEST(DiversityTest, SevenOfTwentyPairs) {
  // 20 distinct pairs from a chain over every unary op and its permutations.
  DiversityLedger ledger;
  const OpKind ops[] = {OpKind::kNeg, OpKind::kAbs, OpKind::kSquare,
                        OpKind::kReLU, OpKind::kTanh};
  for (OpKind a : ops) {
    for (OpKind c : ops) {
      if (a == c) continue;
      GraphBuilder b("pair");
      const int x = b.AddInput(DType::kF32, Shape{2});
      b.SetOutputs({b.Add(c, {b.Add(a, {x})})});
      ledger.Update(b.Build());
    }
  }
  ASSERT_EQ(ledger.edge_pairs().size(), 20u);
  GraphBuilder b("seven");
  int h = b.AddInput(DType::kF32, Shape{2});
  for (OpKind op : {OpKind::kNeg, OpKind::kAbs, OpKind::kSquare, OpKind::kReLU,
                    OpKind::kTanh, OpKind::kNeg, OpKind::kSquare,
                    OpKind::kTanh}) {
    h = b.Add(op, {h});
  }
  b.SetOutputs({h});
  const Graph seven = b.Build();
  ASSERT_EQ(EdgePairs(seven).size(), 7u);
  ledger.Update(seven);
  EXPECT_EQ(ledger.edge_pairs().size(), 20u);
  EXPECT_DOUBLE_EQ(Lsc(seven, ledger), 0.35);
}

TEST(DiversityTest, RepeatedModelLeavesLedgerFixed) {
  DiversityLedger ledger;
  CalDiversity(Branchy(), ledger);
  CalDiversity(Chain(), ledger);
  const size_t sigs = ledger.signatures().size();
  const size_t pairs = ledger.edge_pairs().size();
  const double lsc = Lsc(Chain(), ledger);
  CalDiversity(Branchy(), ledger);
  EXPECT_EQ(ledger.signatures().size(), sigs);
  EXPECT_EQ(ledger.edge_pairs().size(), pairs);
  EXPECT_EQ(Lsc(Chain(), ledger), lsc);
}

TEST(DiversityTest, CrashRewardIsMinusOne) { EXPECT_EQ(kCrashReward, -1.0); }

TEST(DiversityTest, MetricsStayInUnitInterval) {
  DiversityLedger ledger;
  for (const Graph& g : SeedLibrary()) {
    const Diversity d = CalDiversity(g, ledger);
    for (double v : {d.lic, d.lpc, d.lsc, d.reward}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

}  // namespace
}  // namespace graphmeta
