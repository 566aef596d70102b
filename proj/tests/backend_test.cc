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
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "graphmeta/backend.h"
#include "graphmeta/half.h"
#include "graphmeta/rng.h"
#include "graphmeta/seeds.h"
#include "random_graphs.h"

namespace graphmeta {
namespace {

using testing::List;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double RelErr(double a, double b) {
  return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

TEST(BackendTest, MatMulByHand) {
  GraphBuilder b("mm");
  const int x = b.AddInput(DType::kF64, Shape{2, 2});
  const int w = b.AddConst(TensorValue(DType::kF64, Shape{2, 1}, {5, 6}), true);
  b.SetOutputs({b.Add(OpKind::kMatMul, {x, w})});
  const Graph g = b.Build();
  ReferenceBackend ref;
  const auto trace =
      ref.ExecuteForward(g, {{x, TensorValue(DType::kF64, Shape{2, 2}, {1, 2, 3, 4})}});
  EXPECT_EQ(trace.outputs[2].data, (std::vector<double>{17, 39}));
  EXPECT_EQ(trace.cost_units, 2 * 2 * 1);
}

// Direct convolution written out loop by loop.
std::vector<double> NaiveConv(const TensorValue& x, const TensorValue& w,
                              int64_t stride, int64_t pad) {
  const int64_t n = x.shape.dim(0), c = x.shape.dim(1), h = x.shape.dim(2),
                wd = x.shape.dim(3);
  const int64_t o = w.shape.dim(0), k = w.shape.dim(2);
  const int64_t oh = (h + 2 * pad - k) / stride + 1;
  const int64_t ow = (wd + 2 * pad - k) / stride + 1;
  std::vector<double> out;
  for (int64_t b = 0; b < n; ++b)
    for (int64_t oc = 0; oc < o; ++oc)
      for (int64_t y = 0; y < oh; ++y)
        for (int64_t xx = 0; xx < ow; ++xx) {
          double s = 0.0;
          for (int64_t ic = 0; ic < c; ++ic)
            for (int64_t ky = 0; ky < k; ++ky)
              for (int64_t kx = 0; kx < k; ++kx) {
                const int64_t iy = y * stride + ky - pad;
                const int64_t ix = xx * stride + kx - pad;
                if (iy < 0 || ix < 0 || iy >= h || ix >= wd) continue;
                s += x.data[((b * c + ic) * h + iy) * wd + ix] *
                     w.data[((oc * c + ic) * k + ky) * k + kx];
              }
          out.push_back(s);
        }
  return out;
}

TEST(BackendTest, ConvMatchesDirectLoops) {
  Rng rng(1);
  for (int64_t pad : {0, 1, 2}) {
    for (int64_t stride : {1, 2}) {
      GraphBuilder b("conv");
      const int x = b.AddInput(DType::kF64, Shape{2, 3, 6, 5});
      TensorValue wt(DType::kF64, Shape{4, 3, 3, 3});
      for (double& v : wt.data) v = rng.Normal();
      const int w = b.AddConst(wt, true);
      b.SetOutputs({b.Add(OpKind::kConv2D, {x, w},
                          {{"stride", List{stride, stride}},
                           {"pad", List{pad, pad}},
                           {"kernel", List{3, 3}},
                           {"in_channels", int64_t{3}},
                           {"out_channels", int64_t{4}}})});
      const Graph g = b.Build();
      const Feeds feeds = testing::NormalFeeds(g, rng);
      const auto trace = ReferenceBackend().ExecuteForward(g, feeds);
      const std::vector<double> expected =
          NaiveConv(feeds.at(x), wt, stride, pad);
      ASSERT_EQ(trace.outputs[2].data.size(), expected.size());
      for (size_t i = 0; i < expected.size(); ++i) {
        EXPECT_NEAR(trace.outputs[2].data[i], expected[i], 1e-12);
      }
    }
  }
}

TEST(BackendTest, SoftmaxCrossEntropyOfEqualLogitsIsLogClasses) {
  GraphBuilder b("sce");
  const int logits = b.AddInput(DType::kF64, Shape{2, 4});
  const int labels = b.AddInput(DType::kI32, Shape{2});
  b.SetOutputs({b.Add(OpKind::kSoftmaxCrossEntropy, {logits, labels})});
  const Graph g = b.Build();
  const Feeds feeds = {{logits, TensorValue(DType::kF64, Shape{2, 4})},
                       {labels, TensorValue(DType::kI32, Shape{2}, {0, 3})}};
  EXPECT_NEAR(ReferenceBackend().Loss(g, feeds), std::log(4.0), 1e-15);
  const auto trace = ReferenceBackend().ExecuteTrainingStep(g, feeds);
  // d/dz = (softmax - onehot) / batch.
  EXPECT_NEAR(trace.gradients.at(logits).data[0], (0.25 - 1.0) / 2, 1e-15);
  EXPECT_NEAR(trace.gradients.at(logits).data[1], 0.25 / 2, 1e-15);
}

TEST(BackendTest, LossIsMeanOfFirstOutputWithoutCrossEntropy) {
  GraphBuilder b("mean");
  const int x = b.AddInput(DType::kF64, Shape{4});
  b.SetOutputs({b.Add(OpKind::kSquare, {x})});
  const Graph g = b.Build();
  const Feeds feeds = {{x, TensorValue(DType::kF64, Shape{4}, {1, 2, 3, 4})}};
  const auto trace = ReferenceBackend().ExecuteTrainingStep(g, feeds);
  EXPECT_EQ(*trace.loss, 30.0 / 4);
  EXPECT_EQ(trace.gradients.at(x).data, (std::vector<double>{0.5, 1, 1.5, 2}));
}

TEST(BackendTest, ReluFamilyPropagatesNaNAndHasZeroKinkGradient) {
  GraphBuilder b("relu");
  const int x = b.AddInput(DType::kF64, Shape{4});
  const int r = b.Add(OpKind::kReLU6, {x});
  b.SetOutputs({b.Add(OpKind::kAbs, {r})});
  const Graph g = b.Build();
  const Feeds feeds = {{x, TensorValue(DType::kF64, Shape{4}, {kNaN, 0, 6, 7})}};
  const auto trace = ReferenceBackend().ExecuteForward(g, feeds);
  EXPECT_TRUE(std::isnan(trace.outputs[r].data[0]));
  EXPECT_EQ(trace.outputs[r].data[3], 6.0);
  const Feeds finite = {{x, TensorValue(DType::kF64, Shape{4}, {-1, 0, 6, 3})}};
  const auto step = ReferenceBackend().ExecuteTrainingStep(g, finite);
  EXPECT_EQ(step.gradients.at(x).data, (std::vector<double>{0, 0, 0, 0.25}));
}

TEST(BackendTest, TrainingCostIsThreeTimesForward) {
  const Graph g = FindSeed("cnn");
  Rng rng(2);
  const Feeds feeds = RandomFeeds(g, rng);
  ReferenceBackend ref;
  const auto fwd = ref.ExecuteForward(g, feeds);
  const auto step = ref.ExecuteTrainingStep(g, feeds);
  EXPECT_EQ(step.cost_units, 3 * fwd.cost_units);
  EXPECT_EQ(step.leaked_bytes, 0);
  EXPECT_GT(step.peak_alloc_bytes, fwd.peak_alloc_bytes);
}

TEST(BackendTest, MissingFeedIsRejected) {
  const Graph g = FindSeed("mlp");
  EXPECT_THROW(ReferenceBackend().ExecuteForward(g, {}), std::invalid_argument);
}

TEST(BackendTest, NonFloatFirstOutputFailsInLossPhase) {
  GraphBuilder b("int");
  const int x = b.AddInput(DType::kI32, Shape{2});
  const int y = b.AddInput(DType::kF32, Shape{2});
  b.SetOutputs({x, b.Add(OpKind::kNeg, {y})});
  const Graph g = b.Build();
  const Feeds feeds = {{x, TensorValue(DType::kI32, Shape{2})},
                       {y, TensorValue(DType::kF32, Shape{2})}};
  try {
    ReferenceBackend().ExecuteTrainingStep(g, feeds);
    FAIL() << "expected ExecutionError";
  } catch (const ExecutionError& e) {
    EXPECT_EQ(e.phase(), Phase::kLoss);
  }
}

TEST(ArenaTest, TracksLiveAndPeak) {
  Arena arena;
  const int a = arena.Allocate(100);
  const int b = arena.Allocate(50);
  arena.Release(a);
  EXPECT_EQ(arena.live_bytes(), 50);
  EXPECT_EQ(arena.peak_bytes(), 150);
  arena.Allocate(20);
  arena.Release(b);
  EXPECT_EQ(arena.live_bytes(), 20);
  arena.ReleaseAll();
  EXPECT_EQ(arena.live_bytes(), 0);
  EXPECT_EQ(arena.peak_bytes(), 150);
}

// Reverse mode against central differences on every seed.
TEST(GradientTest, SeedsMatchFiniteDifferences) {
  ReferenceBackend ref;
  for (const Graph& g : SeedLibrary()) {
    Rng rng(4);
    const Feeds feeds = RandomFeeds(g, rng);
    const auto trace = ref.ExecuteTrainingStep(g, feeds);
    if (NearKink(g, trace, 1e-3)) continue;
    for (const auto& [id, grad] : trace.gradients) {
      const TensorValue fd = FiniteDifferenceGrad(ref, g, feeds, id, 1e-4);
      for (int64_t i = 0; i < fd.numel(); ++i) {
        EXPECT_LT(RelErr(grad.data[i], fd.data[i]), 1e-3)
            << g.label() << " node " << id << " element " << i;
      }
    }
  }
}

TEST(GradientTest, RandomSmoothGraphsMatchFiniteDifferences) {
  ReferenceBackend ref;
  Rng rng(6);
  double worst = 0.0;
  for (int trial = 0; trial < 60; ++trial) {
    const Graph g = testing::RandomSmoothGraph(rng, 4 + rng.UniformInt(17));
    const Feeds feeds = testing::NormalFeeds(g, rng);
    const auto trace = ref.ExecuteTrainingStep(g, feeds);
    for (const auto& [id, grad] : trace.gradients) {
      const TensorValue fd = FiniteDifferenceGrad(ref, g, feeds, id, 1e-4);
      for (int64_t i = 0; i < fd.numel(); ++i) {
        worst = std::max(worst, RelErr(grad.data[i], fd.data[i]));
      }
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(GradientTest, UnreachableSourcesGetZeroGradients) {
  GraphBuilder b("unreached");
  const int x = b.AddInput(DType::kF32, Shape{3});
  const int y = b.AddInput(DType::kF32, Shape{3});
  b.SetOutputs({b.Add(OpKind::kTanh, {x})});
  const Graph g = b.Build();
  const Feeds feeds = {{x, TensorValue::Filled(DType::kF32, Shape{3}, 0.5)},
                       {y, TensorValue::Filled(DType::kF32, Shape{3}, 1.0)}};
  const auto trace = ReferenceBackend().ExecuteTrainingStep(g, feeds);
  EXPECT_TRUE(SameValues(trace.gradients.at(y), TensorValue(DType::kF32, Shape{3})));
}

Graph OneOp(OpKind op, Shape shape, AttrMap attrs = {}) {
  GraphBuilder b("one");
  const int x = b.AddInput(DType::kF32, std::move(shape));
  b.SetOutputs({b.Add(op, {x}, std::move(attrs))});
  return b.Build();
}

TEST(MutantTest, M1ReluSixMapsNaNToZero) {
  const Graph g = OneOp(OpKind::kReLU6, Shape{2});
  const Feeds feeds = {{0, TensorValue(DType::kF32, Shape{2}, {kNaN, 7})}};
  const auto out = MakeBackend("mutant:M1")->ExecuteForward(g, feeds);
  EXPECT_EQ(out.outputs[1].data, (std::vector<double>{0, 6}));
}

TEST(MutantTest, M2MulRoundsToHalf) {
  GraphBuilder b("mul");
  const int x = b.AddInput(DType::kF32, Shape{1});
  b.SetOutputs({b.Add(OpKind::kMul, {x, x})});
  const Graph g = b.Build();
  const Feeds feeds = {{x, TensorValue(DType::kF32, Shape{1}, {RoundTo(DType::kF32, 1.1)})}};
  const double exact = RoundTo(DType::kF32, feeds.at(x).data[0] * feeds.at(x).data[0]);
  EXPECT_EQ(ReferenceBackend().ExecuteForward(g, feeds).outputs[1].data[0], exact);
  EXPECT_EQ(MakeBackend("mutant:M2")->ExecuteForward(g, feeds).outputs[1].data[0],
            RoundToHalf(exact));
}

TEST(MutantTest, M3SliceBackwardFails) {
  const Graph g = OneOp(OpKind::kSlice, Shape{4},
                        {{"begin", List{1}}, {"size", List{2}}});
  const Feeds feeds = {{0, TensorValue(DType::kF32, Shape{4})}};
  EXPECT_NO_THROW(MakeBackend("mutant:M3")->ExecuteForward(g, feeds));
  try {
    MakeBackend("mutant:M3")->ExecuteTrainingStep(g, feeds);
    FAIL() << "expected ExecutionError";
  } catch (const ExecutionError& e) {
    EXPECT_EQ(e.phase(), Phase::kBackward);
    EXPECT_EQ(e.node(), 1);
  }
}

TEST(MutantTest, M4PaddedConvCostsHundredfold) {
  for (int64_t pad : {0, 1}) {
    GraphBuilder b("conv");
    const int x = b.AddInput(DType::kF32, Shape{1, 1, 4, 4});
    const int w = b.AddConst(TensorValue(DType::kF32, Shape{1, 1, 3, 3}), true);
    b.SetOutputs({b.Add(OpKind::kConv2D, {x, w},
                        {{"stride", List{1, 1}},
                         {"pad", List{pad, pad}},
                         {"kernel", List{3, 3}},
                         {"in_channels", int64_t{1}},
                         {"out_channels", int64_t{1}}})});
    const Graph g = b.Build();
    const Feeds feeds = {{x, TensorValue(DType::kF32, Shape{1, 1, 4, 4})}};
    const int64_t ref = ReferenceBackend().ExecuteForward(g, feeds).cost_units;
    const int64_t mut = MakeBackend("mutant:M4")->ExecuteForward(g, feeds).cost_units;
    EXPECT_EQ(mut, pad ? 100 * ref : ref);
  }
}

TEST(MutantTest, M5SliceLeaksOneKiB) {
  const Graph g = FindSeed("slice_concat");
  int slices = 0;
  for (const Node& n : g.nodes()) slices += n.op == OpKind::kSlice;
  Rng rng(1);
  const Feeds feeds = RandomFeeds(g, rng);
  EXPECT_EQ(ReferenceBackend().ExecuteTrainingStep(g, feeds).leaked_bytes, 0);
  EXPECT_EQ(MakeBackend("mutant:M5")->ExecuteTrainingStep(g, feeds).leaked_bytes,
            1024 * slices);
}

TEST(MutantTest, M6AbsGradientAtZeroIsNaN) {
  const Graph g = OneOp(OpKind::kAbs, Shape{2});
  const Feeds feeds = {{0, TensorValue(DType::kF32, Shape{2}, {0, 2})}};
  const auto ref = ReferenceBackend().ExecuteTrainingStep(g, feeds);
  const auto mut = MakeBackend("mutant:M6")->ExecuteTrainingStep(g, feeds);
  EXPECT_EQ(ref.gradients.at(0).data[0], 0.0);
  EXPECT_TRUE(std::isnan(mut.gradients.at(0).data[0]));
  EXPECT_EQ(mut.gradients.at(0).data[1], 0.5);
}

TEST(MutantTest, M7PadFailsWithAnUnpaddedAxis) {
  const Feeds feeds = {{0, TensorValue(DType::kF32, Shape{2, 2})}};
  const auto m7 = MakeBackend("mutant:M7");
  const Graph full = OneOp(OpKind::kPad, Shape{2, 2}, {{"pads", List{1, 0, 0, 1}}});
  EXPECT_NO_THROW(m7->ExecuteForward(full, feeds));
  const Graph partial = OneOp(OpKind::kPad, Shape{2, 2}, {{"pads", List{0, 0, 1, 1}}});
  EXPECT_NO_THROW(ReferenceBackend().ExecuteForward(partial, feeds));
  try {
    m7->ExecuteForward(partial, feeds);
    FAIL() << "expected ExecutionError";
  } catch (const ExecutionError& e) {
    EXPECT_EQ(e.phase(), Phase::kForward);
    EXPECT_EQ(e.node(), 1);
  }
}

TEST(MutantTest, BackendIdsParse) {
  EXPECT_EQ(MakeBackend("reference")->Id(), "reference");
  for (int k = 1; k <= kNumFaults; ++k) {
    const std::string id = "mutant:M" + std::to_string(k);
    EXPECT_EQ(MakeBackend(id)->Id(), id);
  }
  EXPECT_THROW(MakeBackend("mutant:M8"), std::invalid_argument);
  EXPECT_THROW(MakeBackend("tensorflow"), std::invalid_argument);
}

TEST(BackendTest, TraceDumpHasOneLinePerNode) {
  const Graph g = FindSeed("mlp");
  Rng rng(1);
  const auto trace = ReferenceBackend().ExecuteTrainingStep(g, RandomFeeds(g, rng));
  std::istringstream lines(DumpTraceJsonl(g, trace, false));
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    EXPECT_NE(line.find("\"has_nan\""), std::string::npos);
    EXPECT_EQ(line.find("\"data\""), std::string::npos);
    ++count;
  }
  EXPECT_EQ(count, g.size());
}

TEST(BackendTest, ExecutionIsDeterministic) {
  for (const Graph& g : SeedLibrary()) {
    Rng rng(8);
    const Feeds feeds = RandomFeeds(g, rng);
    const auto a = ReferenceBackend().ExecuteTrainingStep(g, feeds);
    const auto b = ReferenceBackend().ExecuteTrainingStep(g, feeds);
    EXPECT_EQ(*a.loss, *b.loss);
    for (int id = 0; id < g.size(); ++id) {
      EXPECT_TRUE(SameValues(a.outputs[id], b.outputs[id]));
    }
  }
}

}  // namespace
}  // namespace graphmeta
