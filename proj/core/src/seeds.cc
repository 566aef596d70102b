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

#include "graphmeta/seeds.h"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace graphmeta {
namespace {

using List = std::vector<int64_t>;

// Fixed so the seed library is identical in every process.
constexpr uint64_t kWeightStream = 0x5eed;

class SeedBuilder {
 public:
  SeedBuilder(std::string label, uint64_t salt)
      : b_(std::move(label)), rng_(kWeightStream ^ salt) {}

  GraphBuilder& b() { return b_; }

  int Weight(Shape shape, double scale, bool trainable = true) {
    TensorValue t(DType::kF32, std::move(shape));
    for (double& v : t.data) v = rng_.Normal(0.0, scale);
    return b_.AddConst(std::move(t), trainable);
  }

  int Filled(Shape shape, double value, bool trainable) {
    return b_.AddConst(TensorValue::Filled(DType::kF32, std::move(shape), value),
                       trainable);
  }

  int Conv(int x, int64_t in_ch, int64_t out_ch, int64_t k, int64_t pad,
           int64_t stride = 1) {
    const int w = Weight(Shape{out_ch, in_ch, k, k},
                         1.0 / std::sqrt(static_cast<double>(in_ch * k * k)));
    return b_.Add(OpKind::kConv2D, {x, w},
                  {{"stride", List{stride, stride}},
                   {"pad", List{pad, pad}},
                   {"kernel", List{k, k}},
                   {"in_channels", in_ch},
                   {"out_channels", out_ch}});
  }

  int BatchNorm(int x, int64_t channels) {
    const int scale = Filled(Shape{channels}, 1.0, true);
    const int bias = Filled(Shape{channels}, 0.0, true);
    TensorValue mean(DType::kF32, Shape{channels});
    TensorValue var(DType::kF32, Shape{channels});
    for (int64_t c = 0; c < channels; ++c) {
      mean.data[c] = rng_.Normal(0.0, 0.1);
      var.data[c] = 1.0 + 0.25 * rng_.Uniform();
    }
    const int m = b_.AddConst(std::move(mean), false);
    const int v = b_.AddConst(std::move(var), false);
    return b_.Add(OpKind::kBatchNormInference, {x, scale, bias, m, v});
  }

  int Dense(int x, int64_t in, int64_t out) {
    const int w =
        Weight(Shape{in, out}, 1.0 / std::sqrt(static_cast<double>(in)));
    return b_.Add(OpKind::kMatMul, {x, w});
  }

  Graph Build(std::vector<int> outputs) {
    b_.SetOutputs(std::move(outputs));
    return b_.Build();
  }

 private:
  GraphBuilder b_;
  Rng rng_;
};

Graph Cnn() {
  SeedBuilder s("cnn", 1);
  auto& b = s.b();
  const int x = b.AddInput(DType::kF32, Shape{2, 3, 8, 8});
  const int labels = b.AddInput(DType::kI32, Shape{2});
  int h = s.Conv(x, 3, 4, 3, 1);
  h = s.BatchNorm(h, 4);
  h = b.Add(OpKind::kReLU, {h});
  h = b.Add(OpKind::kMaxPool2D, {h},
            {{"kernel", List{2, 2}}, {"stride", List{2, 2}}});
  h = b.Add(OpKind::kFlatten, {h}, {{"axis", int64_t{1}}});
  h = s.Dense(h, 64, 10);
  const int bias = s.Weight(Shape{2, 10}, 0.01);
  const int logits = b.Add(OpKind::kAdd, {h, bias});
  const int loss = b.Add(OpKind::kSoftmaxCrossEntropy, {logits, labels});
  return s.Build({logits, loss});
}

Graph Resnet() {
  SeedBuilder s("resnet", 2);
  auto& b = s.b();
  const int x = b.AddInput(DType::kF32, Shape{1, 4, 6, 6});
  int h = x;
  for (int block = 0; block < 2; ++block) {
    int y = s.Conv(h, 4, 4, 3, 1);
    y = s.BatchNorm(y, 4);
    y = b.Add(OpKind::kReLU, {y});
    y = s.Conv(y, 4, 4, 3, 1);
    y = s.BatchNorm(y, 4);
    y = b.Add(OpKind::kAdd, {y, h});
    h = b.Add(OpKind::kReLU, {y});
  }
  h = b.Add(OpKind::kAvgPool2D, {h},
            {{"kernel", List{2, 2}}, {"stride", List{2, 2}}});
  h = b.Add(OpKind::kFlatten, {h}, {{"axis", int64_t{1}}});
  h = s.Dense(h, 36, 5);
  return s.Build({h});
}

Graph Mlp() {
  SeedBuilder s("mlp", 3);
  auto& b = s.b();
  const int x = b.AddInput(DType::kF32, Shape{4, 16});
  int h = s.Dense(x, 16, 32);
  const int bias = s.Weight(Shape{4, 32}, 0.01);
  h = b.Add(OpKind::kAdd, {h, bias});
  h = b.Add(OpKind::kReLU6, {h});
  h = s.Dense(h, 32, 16);
  h = b.Add(OpKind::kTanh, {h});
  h = s.Dense(h, 16, 8);
  h = b.Add(OpKind::kSigmoid, {h});
  return s.Build({h});
}

Graph Autoencoder() {
  SeedBuilder s("autoencoder", 4);
  auto& b = s.b();
  const int x = b.AddInput(DType::kF32, Shape{1, 2, 8, 8});
  int h = s.Conv(x, 2, 4, 3, 0);
  h = b.Add(OpKind::kTanh, {h});
  h = s.Conv(h, 4, 4, 3, 0);
  h = b.Add(OpKind::kTanh, {h});
  h = b.Add(OpKind::kPad, {h}, {{"pads", List{0, 0, 0, 0, 3, 3, 3, 3}}});
  h = s.Conv(h, 4, 2, 3, 0);
  h = b.Add(OpKind::kSigmoid, {h});
  return s.Build({h});
}

Graph SliceConcat() {
  SeedBuilder s("slice_concat", 5);
  auto& b = s.b();
  const int x = b.AddInput(DType::kF32, Shape{2, 12});
  int left = b.Add(OpKind::kSlice, {x},
                   {{"begin", List{0, 0}}, {"size", List{2, 6}}});
  int right = b.Add(OpKind::kSlice, {x},
                    {{"begin", List{0, 6}}, {"size", List{2, 6}}});
  left = b.Add(OpKind::kTanh, {left});
  right = b.Add(OpKind::kReLU, {right});
  int h = b.Add(OpKind::kConcat, {left, right}, {{"axis", int64_t{1}}});
  h = s.Dense(h, 12, 12);
  h = b.Add(OpKind::kSlice, {h}, {{"begin", List{0, 2}}, {"size", List{2, 8}}});
  h = b.Add(OpKind::kSigmoid, {h});
  return s.Build({h});
}

Graph TransposeReshape() {
  SeedBuilder s("transpose_reshape", 6);
  auto& b = s.b();
  const int x = b.AddInput(DType::kF32, Shape{2, 3, 4});
  int h = b.Add(OpKind::kTranspose, {x}, {{"perm", List{0, 2, 1}}});
  h = b.Add(OpKind::kReshape, {h}, {{"shape", List{8, 3}}});
  h = s.Dense(h, 3, 6);
  h = b.Add(OpKind::kReLU, {h});
  h = b.Add(OpKind::kReshape, {h}, {{"shape", List{2, 4, 6}}});
  h = b.Add(OpKind::kReduceMean, {h},
            {{"axes", List{1}}, {"keepdims", int64_t{0}}});
  h = b.Add(OpKind::kTanh, {h});
  h = b.Add(OpKind::kReduceSum, {h},
            {{"axes", List{1}}, {"keepdims", int64_t{1}}});
  return s.Build({h});
}

}  // namespace

std::vector<Graph> SeedLibrary() {
  return {Cnn(), Resnet(), Mlp(), Autoencoder(), SliceConcat(),
          TransposeReshape()};
}

std::vector<std::string> SeedLabels() {
  std::vector<std::string> labels;
  for (const Graph& g : SeedLibrary()) labels.push_back(g.label());
  return labels;
}

Graph FindSeed(std::string_view label) {
  for (Graph& g : SeedLibrary()) {
    if (g.label() == label) return std::move(g);
  }
  throw std::invalid_argument("unknown seed: " + std::string(label));
}

Feeds RandomFeeds(const Graph& g, Rng& rng, double special_value_rate) {
  const auto consumers = g.Consumers();
  Feeds feeds;
  for (int id : g.inputs()) {
    const Node& node = g.node(id);
    TensorValue t(node.out_dtype, node.out_shape);
    if (IsFloat(node.out_dtype)) {
      for (double& v : t.data) {
        v = rng.Normal();
        if (special_value_rate > 0.0 && rng.Uniform() < special_value_rate) {
          v = std::numeric_limits<double>::quiet_NaN();
        }
      }
    } else {
      int classes = 4;
      for (int c : consumers[id]) {
        const Node& consumer = g.node(c);
        if (consumer.op == OpKind::kSoftmaxCrossEntropy) {
          classes = static_cast<int>(g.node(consumer.inputs[0]).out_shape.dim(1));
        }
      }
      for (double& v : t.data) v = rng.UniformInt(classes);
    }
    t.Canonicalize();
    feeds[id] = std::move(t);
  }
  return feeds;
}

}  // namespace graphmeta
