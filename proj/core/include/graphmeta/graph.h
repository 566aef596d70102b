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

// Computational-graph IR: typed tensor nodes in an immutable DAG.
//
// Node ids are dense and equal to the node's index; they are assigned in
// insertion order by GraphBuilder. A rewrite that replaces a node keeps its
// id for the node that produces the equivalent value, so ids of a seed graph
// stay meaningful in every graph derived from it.

#ifndef GRAPHMETA_GRAPH_H_
#define GRAPHMETA_GRAPH_H_

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "graphmeta/tensor.h"

namespace graphmeta {

enum class OpKind : uint8_t {
  kInput,
  kConst,
  kAdd,
  kSub,
  kMul,
  kNeg,
  kAbs,
  kSquare,
  kReLU,
  kReLU6,
  kTanh,
  kSigmoid,
  kMatMul,
  kConv2D,
  kMaxPool2D,
  kAvgPool2D,
  kPad,
  kTranspose,
  kReshape,
  kFlatten,
  kSlice,
  kConcat,
  kReduceMean,
  kReduceSum,
  kBatchNormInference,
  kSoftmaxCrossEntropy,
};

inline constexpr int kNumOpKinds = 26;

std::string_view OpName(OpKind op);
// Throws std::invalid_argument on an unknown name.
OpKind ParseOpKind(std::string_view name);
int OpArity(OpKind op);
bool IsElementwiseUnary(OpKind op);
bool IsElementwiseBinary(OpKind op);
// Input and Const are graph sources, not layers.
inline bool IsSource(OpKind op) {
  return op == OpKind::kInput || op == OpKind::kConst;
}

using AttrValue = std::variant<int64_t, std::vector<int64_t>>;
using AttrMap = std::map<std::string, AttrValue>;

struct Node {
  int id = -1;
  OpKind op = OpKind::kInput;
  std::vector<int> inputs;
  AttrMap attrs;
  DType out_dtype = DType::kF32;
  Shape out_shape;
  // Const nodes only.
  std::shared_ptr<const TensorValue> payload;

  bool HasAttr(const std::string& name) const { return attrs.contains(name); }
  // Both throw GraphError{kBadAttr} when missing or of the wrong kind.
  int64_t IntAttr(const std::string& name) const;
  const std::vector<int64_t>& ListAttr(const std::string& name) const;
  bool trainable() const;
};

enum class GraphErrorKind { kCycle, kDanglingRef, kShapeMismatch, kBadAttr };

std::string_view GraphErrorKindName(GraphErrorKind kind);

class GraphError : public std::runtime_error {
 public:
  GraphError(GraphErrorKind kind, int node, const std::string& message);

  GraphErrorKind kind() const { return kind_; }
  // -1 when the error is not tied to a node.
  int node() const { return node_; }

 private:
  GraphErrorKind kind_;
  int node_;
};

class Graph {
 public:
  Graph() = default;
  Graph(std::vector<Node> nodes, std::vector<int> inputs,
        std::vector<int> outputs, std::string label);

  const std::vector<Node>& nodes() const { return *nodes_; }
  const Node& node(int id) const { return (*nodes_)[id]; }
  int size() const { return static_cast<int>(nodes_->size()); }
  const std::vector<int>& inputs() const { return inputs_; }
  const std::vector<int>& outputs() const { return outputs_; }
  const std::string& label() const { return label_; }

  // consumers[id] lists the ids reading node `id`, ascending, one entry per
  // edge.
  std::vector<std::vector<int>> Consumers() const;

  Graph WithLabel(std::string label) const;

  // Structural equality: nodes (including Const payload values), inputs,
  // outputs and label.
  friend bool operator==(const Graph& a, const Graph& b);

 private:
  std::shared_ptr<const std::vector<Node>> nodes_ =
      std::make_shared<const std::vector<Node>>();
  std::vector<int> inputs_;
  std::vector<int> outputs_;
  std::string label_;
};

// Infers the output dtype/shape of `op` applied to `inputs`.
// Throws GraphError{kShapeMismatch} or GraphError{kBadAttr}.
std::pair<DType, Shape> InferOutput(OpKind op, const AttrMap& attrs,
                                    std::span<const Node* const> inputs,
                                    int node_id = -1);

// Throws the first violation found as GraphError.
void Validate(const Graph& g);

// Returns `g` with out_dtype/out_shape recomputed for every non-source node.
Graph InferShapes(const Graph& g);

// Kahn order with ties broken by ascending id.
std::vector<int> TopoOrder(const Graph& g);

struct LayerSignature {
  OpKind op;
  // Canonical "key=value;..." rendering, keys sorted.
  std::string attrs;

  friend auto operator<=>(const LayerSignature&,
                          const LayerSignature&) = default;
};

struct EdgePair {
  OpKind producer;
  OpKind consumer;

  friend auto operator<=>(const EdgePair&, const EdgePair&) = default;
};

std::string RenderAttrs(const AttrMap& attrs);
LayerSignature SignatureOf(const Node& node);
// Over non-source nodes.
std::set<LayerSignature> Signatures(const Graph& g);
// Over edges whose producer is not a source.
std::set<EdgePair> EdgePairs(const Graph& g);

// Mutable construction surface; Build() validates.
class GraphBuilder {
 public:
  explicit GraphBuilder(std::string label);
  explicit GraphBuilder(const Graph& g);

  int AddInput(DType dtype, Shape shape);
  int AddConst(TensorValue value, bool trainable);
  // Infers the output type immediately; throws GraphError.
  int Add(OpKind op, std::vector<int> inputs, AttrMap attrs = {});

  // Rebuilds node `id` in place. The new output type must equal the old one
  // unless `allow_retype` is set.
  void Replace(int id, OpKind op, std::vector<int> inputs, AttrMap attrs,
               bool allow_retype = false);
  // Redirects every edge `producer -> consumer` to read `replacement`.
  void Redirect(int consumer, int producer, int replacement);

  void SetOutputs(std::vector<int> outputs) { outputs_ = std::move(outputs); }
  void SetLabel(std::string label) { label_ = std::move(label); }

  const Node& node(int id) const { return nodes_.at(id); }
  int size() const { return static_cast<int>(nodes_.size()); }
  const std::vector<int>& outputs() const { return outputs_; }
  std::vector<int> ConsumersOf(int id) const;

  Graph Build() const;

 private:
  std::vector<Node> nodes_;
  std::vector<int> inputs_;
  std::vector<int> outputs_;
  std::string label_;
};

}  // namespace graphmeta

#endif  // GRAPHMETA_GRAPH_H_
