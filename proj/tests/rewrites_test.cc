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

#include <algorithm>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "graphmeta/backend.h"
#include "graphmeta/oracles.h"
#include "graphmeta/rewrites.h"
#include "graphmeta/rng.h"
#include "graphmeta/seeds.h"

namespace graphmeta {
namespace {

// True when `b` reads `a`, directly or transitively.
bool DependsOn(const Graph& g, int b, int a) {
  std::vector<int> stack = {b};
  std::set<int> seen;
  while (!stack.empty()) {
    const int n = stack.back();
    stack.pop_back();
    if (n == a) return true;
    if (!seen.insert(n).second) continue;
    for (int in : g.node(n).inputs) stack.push_back(in);
  }
  return false;
}

void ExpectBitIdentical(const Graph& seed, const Graph& model,
                        const Feeds& feeds, const char* what) {
  ReferenceBackend ref;
  const auto a = ref.ExecuteTrainingStep(seed, feeds);
  const auto b = ref.ExecuteTrainingStep(model, feeds);
  ASSERT_EQ(seed.outputs(), model.outputs()) << what;
  for (int out : seed.outputs()) {
    EXPECT_TRUE(SameValues(a.outputs[out], b.outputs[out]))
        << what << " output " << out;
  }
  EXPECT_EQ(*a.loss, *b.loss) << what;
  for (const auto& [id, grad] : a.gradients) {
    EXPECT_TRUE(SameValues(grad, b.gradients.at(id)))
        << what << " gradient " << id;
  }
}

TEST(RewriteTest, StructureRelationsPreserveOutputsExactly) {
  for (const Graph& seed : SeedLibrary()) {
    Rng rng(21);
    for (int s = 0; s < kNumSmrs; ++s) {
      for (int ins = 0; ins < kNumInserts; ++ins) {
        RewriteStep step;
        step.smr = static_cast<SmrKind>(s);
        step.insert = static_cast<InsertKind>(ins);
        step.seed = rng.NextSeed();
        const RewriteOutcome out = Transform(seed, step);
        ASSERT_TRUE(out.ok()) << seed.label() << " " << SmrName(step.smr);
        EXPECT_EQ(out.equivalence, EquivalenceClass::kExact);
        ExpectBitIdentical(seed, out.graph, RandomFeeds(seed, rng),
                           seed.label().c_str());
      }
    }
  }
}

TEST(RewriteTest, ZeroBranchNodesAreExactlyZero) {
  ReferenceBackend ref;
  for (const Graph& seed : SeedLibrary()) {
    Rng rng(22);
    for (int s = 0; s < kNumSmrs; ++s) {
      RewriteStep step;
      step.smr = static_cast<SmrKind>(s);
      step.insert = static_cast<InsertKind>(rng.UniformInt(kNumInserts));
      step.seed = rng.NextSeed();
      const RewriteOutcome out = Transform(seed, step);
      ASSERT_TRUE(out.ok());
      ASSERT_FALSE(out.zero_nodes.empty());
      const auto trace = ref.ExecuteForward(out.graph, RandomFeeds(seed, rng));
      for (int z : out.zero_nodes) {
        for (double v : trace.outputs[z].data) EXPECT_EQ(v, 0.0);
      }
    }
  }
}

TEST(RewriteTest, ChainedRewritesStayEquivalent) {
  for (const Graph& seed : SeedLibrary()) {
    Rng rng(23);
    Graph g = seed;
    for (int round = 0; round < 12; ++round) {
      RewriteStep step;
      step.smr = static_cast<SmrKind>(rng.UniformInt(kNumSmrs));
      step.insert = static_cast<InsertKind>(rng.UniformInt(kNumInserts));
      const int imr = rng.UniformInt(kNumImrs + 1);
      if (imr < kNumImrs && static_cast<ImrKind>(imr) != ImrKind::kImr1b) {
        step.imr = static_cast<ImrKind>(imr);
      }
      step.seed = rng.NextSeed();
      const RewriteOutcome out = Transform(g, step);
      ASSERT_TRUE(out.ok());
      g = out.graph;
    }
    ExpectBitIdentical(seed, g, RandomFeeds(seed, rng), seed.label().c_str());
  }
}

TEST(RewriteTest, ExactInterfaceRelationsPreserveOutputsExactly) {
  for (ImrKind kind : {ImrKind::kImr1a, ImrKind::kImr2a, ImrKind::kImr2b}) {
    EXPECT_EQ(EquivalenceOf(kind), EquivalenceClass::kExact);
    int applied = 0;
    for (const Graph& seed : SeedLibrary()) {
      Rng rng(24);
      for (int trial = 0; trial < 4; ++trial) {
        RewriteStep step;
        step.smr = static_cast<SmrKind>(trial);
        step.insert = InsertKind::kConvBnRelu;
        step.imr = kind;
        step.seed = rng.NextSeed();
        const RewriteOutcome out = Transform(seed, step);
        ASSERT_TRUE(out.ok());
        if (!out.step.imr) continue;
        ++applied;
        ASSERT_TRUE(out.pre_imr.has_value());
        ExpectBitIdentical(seed, out.graph, RandomFeeds(seed, rng),
                           ImrName(kind).data());
      }
    }
    EXPECT_GT(applied, 0) << ImrName(kind);
  }
}

TEST(RewriteTest, ApproximateRelationStaysWithinTolerance) {
  EXPECT_EQ(EquivalenceOf(ImrKind::kImr1b), EquivalenceClass::kApprox);
  ReferenceBackend ref;
  const Thresholds thr;
  for (const Graph& seed : SeedLibrary()) {
    Rng rng(25);
    const Graph g = ApplyImr(seed, ImrKind::kImr1b, rng);
    const Feeds feeds = RandomFeeds(seed, rng);
    const auto a = ref.ExecuteForward(seed, feeds);
    const auto b = ref.ExecuteForward(g, feeds);
    for (int out : seed.outputs()) {
      EXPECT_LE(Chebyshev(a.outputs[out], b.outputs[out]),
                thr.Accuracy(DType::kF32, EquivalenceClass::kApprox));
    }
  }
}

TEST(RewriteTest, TransformIsDeterministicInItsSeed) {
  const Graph seed = FindSeed("resnet");
  RewriteStep step;
  step.smr = SmrKind::kSmr3;
  step.insert = InsertKind::kDownSample;
  step.imr = ImrKind::kImr1a;
  step.seed = 99;
  const RewriteOutcome a = Transform(seed, step);
  const RewriteOutcome b = Transform(seed, step);
  EXPECT_EQ(a.graph, b.graph);
  EXPECT_EQ(a.step, b.step);
  step.seed = 100;
  EXPECT_FALSE(Transform(seed, step).graph == a.graph);
}

TEST(RewriteTest, RewritesKeepSeedIdsAndOutputs) {
  Rng rng(26);
  for (const Graph& seed : SeedLibrary()) {
    RewriteStep step;
    step.smr = SmrKind::kSmr1;
    step.insert = InsertKind::kMatMulTanh;
    step.seed = rng.NextSeed();
    const RewriteOutcome out = Transform(seed, step);
    ASSERT_TRUE(out.ok());
    EXPECT_GT(out.graph.size(), seed.size());
    for (int id = 0; id < seed.size(); ++id) {
      EXPECT_EQ(out.graph.node(id).out_shape, seed.node(id).out_shape);
    }
  }
}

TEST(AnchorTest, SourcesNeverDependOnTarget) {
  Rng rng(27);
  for (const Graph& g : SeedLibrary()) {
    const std::vector<int> eligible = EligibleNodes(g);
    for (int trial = 0; trial < 50; ++trial) {
      const Anchors a = PickAnchors(g, 2, rng);
      EXPECT_TRUE(std::find(eligible.begin(), eligible.end(), a.target) !=
                  eligible.end());
      ASSERT_EQ(a.sources.size(), 2u);
      EXPECT_NE(a.sources[0], a.sources[1]);
      for (int s : a.sources) {
        EXPECT_TRUE(s == a.target || !DependsOn(g, s, a.target));
      }
    }
  }
}

TEST(AnchorTest, NoEligibleNodeRaises) {
  GraphBuilder b("tiny");
  const int x = b.AddInput(DType::kI32, Shape{2});
  b.SetOutputs({x});
  Rng rng(1);
  try {
    PickAnchors(b.Build(), 2, rng);
    FAIL() << "expected RewriteError";
  } catch (const RewriteError& e) {
    EXPECT_EQ(e.kind(), RewriteErrorKind::kNoAnchor);
  }
}

TEST(InsertTest, InsertsKeepInputShape) {
  Rng rng(28);
  for (const Shape& shape :
       {Shape{2, 12}, Shape{1, 4, 6, 6}, Shape{2, 3, 4}, Shape{7}}) {
    for (int k = 0; k < kNumInserts; ++k) {
      GraphBuilder b("insert");
      const int x = b.AddInput(DType::kF32, shape);
      const int y = BuildInsert(b, static_cast<InsertKind>(k), x, rng);
      EXPECT_EQ(b.node(y).out_shape, shape)
          << InsertName(static_cast<InsertKind>(k)) << " " << shape.ToString();
      b.SetOutputs({y});
      EXPECT_NO_THROW(Validate(b.Build()));
    }
  }
}

TEST(InsertTest, AlignShapesProducesCommonShape) {
  GraphBuilder b("align");
  const int a = b.AddInput(DType::kF32, Shape{2, 3});
  const int c = b.AddInput(DType::kF32, Shape{4, 1, 5});
  const auto [x, y] = AlignShapes(b, a, c);
  EXPECT_EQ(b.node(x).out_shape, b.node(y).out_shape);
  EXPECT_EQ(b.node(x).out_shape.rank(), 3);
}

TEST(RewriteTest, NamesRoundTrip) {
  for (int k = 0; k < kNumSmrs; ++k) {
    EXPECT_EQ(ParseSmr(SmrName(static_cast<SmrKind>(k))), static_cast<SmrKind>(k));
  }
  for (int k = 0; k < kNumImrs; ++k) {
    EXPECT_EQ(ParseImr(ImrName(static_cast<ImrKind>(k))), static_cast<ImrKind>(k));
  }
  for (int k = 0; k < kNumInserts; ++k) {
    EXPECT_EQ(ParseInsert(InsertName(static_cast<InsertKind>(k))),
              static_cast<InsertKind>(k));
  }
  EXPECT_THROW(ParseSmr("SMR5"), std::invalid_argument);
}

}  // namespace
}  // namespace graphmeta
