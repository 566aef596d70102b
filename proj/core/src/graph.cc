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

#include "graphmeta/graph.h"

#include <algorithm>
#include <array>
#include <functional>
#include <queue>
#include <sstream>

namespace graphmeta {
namespace {

struct OpInfo {
  OpKind op;
  std::string_view name;
  int arity;
};

constexpr std::array<OpInfo, kNumOpKinds> kOpTable = {{
    {OpKind::kInput, "Input", 0},
    {OpKind::kConst, "Const", 0},
    {OpKind::kAdd, "Add", 2},
    {OpKind::kSub, "Sub", 2},
    {OpKind::kMul, "Mul", 2},
    {OpKind::kNeg, "Neg", 1},
    {OpKind::kAbs, "Abs", 1},
    {OpKind::kSquare, "Square", 1},
    {OpKind::kReLU, "ReLU", 1},
    {OpKind::kReLU6, "ReLU6", 1},
    {OpKind::kTanh, "Tanh", 1},
    {OpKind::kSigmoid, "Sigmoid", 1},
    {OpKind::kMatMul, "MatMul", 2},
    {OpKind::kConv2D, "Conv2D", 2},
    {OpKind::kMaxPool2D, "MaxPool2D", 1},
    {OpKind::kAvgPool2D, "AvgPool2D", 1},
    {OpKind::kPad, "Pad", 1},
    {OpKind::kTranspose, "Transpose", 1},
    {OpKind::kReshape, "Reshape", 1},
    {OpKind::kFlatten, "Flatten", 1},
    {OpKind::kSlice, "Slice", 1},
    {OpKind::kConcat, "Concat", 2},
    {OpKind::kReduceMean, "ReduceMean", 1},
    {OpKind::kReduceSum, "ReduceSum", 1},
    {OpKind::kBatchNormInference, "BatchNormInference", 5},
    {OpKind::kSoftmaxCrossEntropy, "SoftmaxCrossEntropy", 2},
}};

[[noreturn]] void Fail(GraphErrorKind kind, int node, const std::string& msg) {
  throw GraphError(kind, node, msg);
}

int64_t GetInt(const AttrMap& attrs, const std::string& name, int node) {
  auto it = attrs.find(name);
  if (it == attrs.end() || !std::holds_alternative<int64_t>(it->second)) {
    Fail(GraphErrorKind::kBadAttr, node, "missing int attr '" + name + "'");
  }
  return std::get<int64_t>(it->second);
}

const std::vector<int64_t>& GetList(const AttrMap& attrs,
                                    const std::string& name, int node,
                                    size_t expected_len) {
  auto it = attrs.find(name);
  if (it == attrs.end() ||
      !std::holds_alternative<std::vector<int64_t>>(it->second)) {
    Fail(GraphErrorKind::kBadAttr, node, "missing list attr '" + name + "'");
  }
  const auto& list = std::get<std::vector<int64_t>>(it->second);
  if (expected_len != 0 && list.size() != expected_len) {
    Fail(GraphErrorKind::kBadAttr, node,
         "attr '" + name + "' must have " + std::to_string(expected_len) +
             " entries");
  }
  return list;
}

void RequireFloat(const Node& n, int node) {
  if (!IsFloat(n.out_dtype)) {
    Fail(GraphErrorKind::kShapeMismatch, node,
         "operand " + std::to_string(n.id) + " must be floating point");
  }
}

void RequireRank(const Node& n, int rank, int node) {
  if (n.out_shape.rank() != rank) {
    Fail(GraphErrorKind::kShapeMismatch, node,
         "operand " + std::to_string(n.id) + " must have rank " +
             std::to_string(rank) + ", got " + n.out_shape.ToString());
  }
}

// Output extent of a sliding window; fails when the window does not fit.
int64_t WindowExtent(int64_t in, int64_t kernel, int64_t stride, int64_t pad,
                     int node) {
  if (kernel < 1 || stride < 1 || pad < 0) {
    Fail(GraphErrorKind::kBadAttr, node, "bad window attrs");
  }
  const int64_t span = in + 2 * pad - kernel;
  if (span < 0) {
    Fail(GraphErrorKind::kShapeMismatch, node, "window larger than input");
  }
  return span / stride + 1;
}

}  // namespace

std::string_view OpName(OpKind op) {
  return kOpTable[static_cast<size_t>(op)].name;
}

OpKind ParseOpKind(std::string_view name) {
  for (const auto& info : kOpTable) {
    if (info.name == name) return info.op;
  }
  throw std::invalid_argument("unknown op: " + std::string(name));
}

int OpArity(OpKind op) { return kOpTable[static_cast<size_t>(op)].arity; }

bool IsElementwiseUnary(OpKind op) {
  switch (op) {
    case OpKind::kNeg:
    case OpKind::kAbs:
    case OpKind::kSquare:
    case OpKind::kReLU:
    case OpKind::kReLU6:
    case OpKind::kTanh:
    case OpKind::kSigmoid:
      return true;
    default:
      return false;
  }
}

bool IsElementwiseBinary(OpKind op) {
  return op == OpKind::kAdd || op == OpKind::kSub || op == OpKind::kMul;
}

int64_t Node::IntAttr(const std::string& name) const {
  return GetInt(attrs, name, id);
}

const std::vector<int64_t>& Node::ListAttr(const std::string& name) const {
  return GetList(attrs, name, id, 0);
}

bool Node::trainable() const {
  if (op != OpKind::kConst) return false;
  auto it = attrs.find("trainable");
  return it != attrs.end() && std::holds_alternative<int64_t>(it->second) &&
         std::get<int64_t>(it->second) != 0;
}

std::string_view GraphErrorKindName(GraphErrorKind kind) {
  switch (kind) {
    case GraphErrorKind::kCycle:
      return "Cycle";
    case GraphErrorKind::kDanglingRef:
      return "DanglingRef";
    case GraphErrorKind::kShapeMismatch:
      return "ShapeMismatch";
    case GraphErrorKind::kBadAttr:
      return "BadAttr";
  }
  return "?";
}

GraphError::GraphError(GraphErrorKind kind, int node,
                       const std::string& message)
    : std::runtime_error(std::string(GraphErrorKindName(kind)) +
                         (node >= 0 ? " at node " + std::to_string(node)
                                    : std::string()) +
                         ": " + message),
      kind_(kind),
      node_(node) {}

Graph::Graph(std::vector<Node> nodes, std::vector<int> inputs,
             std::vector<int> outputs, std::string label)
    : nodes_(std::make_shared<const std::vector<Node>>(std::move(nodes))),
      inputs_(std::move(inputs)),
      outputs_(std::move(outputs)),
      label_(std::move(label)) {}

std::vector<std::vector<int>> Graph::Consumers() const {
  std::vector<std::vector<int>> consumers(nodes_->size());
  for (const Node& n : *nodes_) {
    for (int in : n.inputs) {
      if (in >= 0 && in < size()) consumers[in].push_back(n.id);
    }
  }
  return consumers;
}

Graph Graph::WithLabel(std::string label) const {
  Graph copy = *this;
  copy.label_ = std::move(label);
  return copy;
}

bool operator==(const Graph& a, const Graph& b) {
  if (a.label_ != b.label_ || a.inputs_ != b.inputs_ ||
      a.outputs_ != b.outputs_ || a.size() != b.size()) {
    return false;
  }
  for (int i = 0; i < a.size(); ++i) {
    const Node& x = a.node(i);
    const Node& y = b.node(i);
    if (x.id != y.id || x.op != y.op || x.inputs != y.inputs ||
        x.attrs != y.attrs || x.out_dtype != y.out_dtype ||
        x.out_shape != y.out_shape) {
      return false;
    }
    if (static_cast<bool>(x.payload) != static_cast<bool>(y.payload)) {
      return false;
    }
    if (x.payload && !SameValues(*x.payload, *y.payload)) return false;
  }
  return true;
}

std::pair<DType, Shape> InferOutput(OpKind op, const AttrMap& attrs,
                                    std::span<const Node* const> in,
                                    int node) {
  if (static_cast<int>(in.size()) != OpArity(op)) {
    Fail(GraphErrorKind::kBadAttr, node,
         std::string(OpName(op)) + " expects " +
             std::to_string(OpArity(op)) + " inputs, got " +
             std::to_string(in.size()));
  }
  std::pair<DType, Shape> out;
  switch (op) {
    case OpKind::kInput:
    case OpKind::kConst:
      Fail(GraphErrorKind::kBadAttr, node, "sources carry declared types");
    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul: {
      const Node& a = *in[0];
      const Node& b = *in[1];
      RequireFloat(a, node);
      RequireFloat(b, node);
      if (a.out_dtype != b.out_dtype) {
        Fail(GraphErrorKind::kShapeMismatch, node, "operand dtypes differ");
      }
      if (a.out_shape == b.out_shape || b.out_shape.rank() == 0) {
        out = {a.out_dtype, a.out_shape};
      } else if (a.out_shape.rank() == 0) {
        out = {a.out_dtype, b.out_shape};
      } else {
        Fail(GraphErrorKind::kShapeMismatch, node,
             "cannot combine " + a.out_shape.ToString() + " and " +
                 b.out_shape.ToString());
      }
      break;
    }
    case OpKind::kNeg:
    case OpKind::kAbs:
    case OpKind::kSquare:
    case OpKind::kReLU:
    case OpKind::kReLU6:
    case OpKind::kTanh:
    case OpKind::kSigmoid:
      RequireFloat(*in[0], node);
      out = {in[0]->out_dtype, in[0]->out_shape};
      break;
    case OpKind::kMatMul: {
      const Node& a = *in[0];
      const Node& b = *in[1];
      RequireFloat(a, node);
      RequireRank(a, 2, node);
      RequireRank(b, 2, node);
      if (a.out_dtype != b.out_dtype) {
        Fail(GraphErrorKind::kShapeMismatch, node, "operand dtypes differ");
      }
      if (a.out_shape.dim(1) != b.out_shape.dim(0)) {
        Fail(GraphErrorKind::kShapeMismatch, node,
             "MatMul " + a.out_shape.ToString() + " x " +
                 b.out_shape.ToString());
      }
      out = {a.out_dtype, Shape{a.out_shape.dim(0), b.out_shape.dim(1)}};
      break;
    }
    case OpKind::kConv2D: {
      const Node& x = *in[0];
      const Node& w = *in[1];
      RequireFloat(x, node);
      RequireRank(x, 4, node);
      RequireRank(w, 4, node);
      if (x.out_dtype != w.out_dtype) {
        Fail(GraphErrorKind::kShapeMismatch, node, "operand dtypes differ");
      }
      const auto& stride = GetList(attrs, "stride", node, 2);
      const auto& pad = GetList(attrs, "pad", node, 2);
      const auto& kernel = GetList(attrs, "kernel", node, 2);
      const int64_t in_ch = GetInt(attrs, "in_channels", node);
      const int64_t out_ch = GetInt(attrs, "out_channels", node);
      if (w.out_shape.dim(0) != out_ch || w.out_shape.dim(1) != in_ch ||
          w.out_shape.dim(2) != kernel[0] || w.out_shape.dim(3) != kernel[1]) {
        Fail(GraphErrorKind::kBadAttr, node,
             "weight shape " + w.out_shape.ToString() +
                 " disagrees with conv attrs");
      }
      if (x.out_shape.dim(1) != in_ch) {
        Fail(GraphErrorKind::kShapeMismatch, node,
             "input channels " + std::to_string(x.out_shape.dim(1)) +
                 " != " + std::to_string(in_ch));
      }
      const int64_t oh =
          WindowExtent(x.out_shape.dim(2), kernel[0], stride[0], pad[0], node);
      const int64_t ow =
          WindowExtent(x.out_shape.dim(3), kernel[1], stride[1], pad[1], node);
      out = {x.out_dtype, Shape{x.out_shape.dim(0), out_ch, oh, ow}};
      break;
    }
    case OpKind::kMaxPool2D:
    case OpKind::kAvgPool2D: {
      const Node& x = *in[0];
      RequireFloat(x, node);
      RequireRank(x, 4, node);
      const auto& kernel = GetList(attrs, "kernel", node, 2);
      const auto& stride = GetList(attrs, "stride", node, 2);
      const int64_t oh =
          WindowExtent(x.out_shape.dim(2), kernel[0], stride[0], 0, node);
      const int64_t ow =
          WindowExtent(x.out_shape.dim(3), kernel[1], stride[1], 0, node);
      out = {x.out_dtype,
             Shape{x.out_shape.dim(0), x.out_shape.dim(1), oh, ow}};
      break;
    }
    case OpKind::kPad: {
      const Node& x = *in[0];
      const int rank = x.out_shape.rank();
      const auto& pads = GetList(attrs, "pads", node, 2 * rank);
      std::vector<int64_t> dims = x.out_shape.dims();
      for (int i = 0; i < rank; ++i) {
        if (pads[2 * i] < 0 || pads[2 * i + 1] < 0) {
          Fail(GraphErrorKind::kBadAttr, node, "negative padding");
        }
        dims[i] += pads[2 * i] + pads[2 * i + 1];
      }
      out = {x.out_dtype, Shape(std::move(dims))};
      break;
    }
    case OpKind::kTranspose: {
      const Node& x = *in[0];
      const int rank = x.out_shape.rank();
      const auto& perm = GetList(attrs, "perm", node, rank);
      std::vector<bool> seen(rank, false);
      std::vector<int64_t> dims(rank);
      for (int i = 0; i < rank; ++i) {
        if (perm[i] < 0 || perm[i] >= rank || seen[perm[i]]) {
          Fail(GraphErrorKind::kBadAttr, node, "perm is not a permutation");
        }
        seen[perm[i]] = true;
        dims[i] = x.out_shape.dim(static_cast<int>(perm[i]));
      }
      out = {x.out_dtype, Shape(std::move(dims))};
      break;
    }
    case OpKind::kReshape: {
      const Node& x = *in[0];
      const auto& dims = GetList(attrs, "shape", node, 0);
      Shape target(dims);
      for (int64_t d : dims) {
        if (d < 0) Fail(GraphErrorKind::kBadAttr, node, "negative dim");
      }
      if (target.numel() != x.out_shape.numel()) {
        Fail(GraphErrorKind::kShapeMismatch, node,
             "cannot reshape " + x.out_shape.ToString() + " to " +
                 target.ToString());
      }
      out = {x.out_dtype, std::move(target)};
      break;
    }
    case OpKind::kFlatten: {
      const Node& x = *in[0];
      const int64_t axis = GetInt(attrs, "axis", node);
      if (axis < 0 || axis > x.out_shape.rank()) {
        Fail(GraphErrorKind::kBadAttr, node, "flatten axis out of range");
      }
      int64_t outer = 1;
      int64_t inner = 1;
      for (int i = 0; i < x.out_shape.rank(); ++i) {
        (i < axis ? outer : inner) *= x.out_shape.dim(i);
      }
      out = {x.out_dtype, Shape{outer, inner}};
      break;
    }
    case OpKind::kSlice: {
      const Node& x = *in[0];
      const int rank = x.out_shape.rank();
      const auto& begin = GetList(attrs, "begin", node, rank);
      const auto& size = GetList(attrs, "size", node, rank);
      for (int i = 0; i < rank; ++i) {
        if (begin[i] < 0 || size[i] < 0 ||
            begin[i] + size[i] > x.out_shape.dim(i)) {
          Fail(GraphErrorKind::kShapeMismatch, node,
               "slice out of bounds on axis " + std::to_string(i));
        }
      }
      out = {x.out_dtype, Shape(size)};
      break;
    }
    case OpKind::kConcat: {
      const Node& a = *in[0];
      const Node& b = *in[1];
      const int64_t axis = GetInt(attrs, "axis", node);
      const int rank = a.out_shape.rank();
      if (a.out_dtype != b.out_dtype || b.out_shape.rank() != rank ||
          axis < 0 || axis >= rank) {
        Fail(GraphErrorKind::kShapeMismatch, node, "bad concat operands");
      }
      std::vector<int64_t> dims = a.out_shape.dims();
      for (int i = 0; i < rank; ++i) {
        if (i == axis) {
          dims[i] += b.out_shape.dim(i);
        } else if (dims[i] != b.out_shape.dim(i)) {
          Fail(GraphErrorKind::kShapeMismatch, node,
               "concat extents differ on axis " + std::to_string(i));
        }
      }
      out = {a.out_dtype, Shape(std::move(dims))};
      break;
    }
    case OpKind::kReduceMean:
    case OpKind::kReduceSum: {
      const Node& x = *in[0];
      RequireFloat(x, node);
      const auto& axes = GetList(attrs, "axes", node, 0);
      const bool keep = GetInt(attrs, "keepdims", node) != 0;
      std::vector<bool> reduced(x.out_shape.rank(), false);
      for (int64_t a : axes) {
        if (a < 0 || a >= x.out_shape.rank() || reduced[a]) {
          Fail(GraphErrorKind::kBadAttr, node, "bad reduction axes");
        }
        reduced[a] = true;
      }
      std::vector<int64_t> dims;
      for (int i = 0; i < x.out_shape.rank(); ++i) {
        if (!reduced[i]) {
          dims.push_back(x.out_shape.dim(i));
        } else if (keep) {
          dims.push_back(1);
        }
      }
      out = {x.out_dtype, Shape(std::move(dims))};
      break;
    }
    case OpKind::kBatchNormInference: {
      const Node& x = *in[0];
      RequireFloat(x, node);
      if (x.out_shape.rank() < 2) {
        Fail(GraphErrorKind::kShapeMismatch, node, "BN input rank < 2");
      }
      const int64_t channels = x.out_shape.dim(1);
      for (size_t i = 1; i < in.size(); ++i) {
        if (in[i]->out_dtype != x.out_dtype ||
            in[i]->out_shape != Shape{channels}) {
          Fail(GraphErrorKind::kShapeMismatch, node,
               "BN parameter must be [" + std::to_string(channels) + "]");
        }
      }
      out = {x.out_dtype, x.out_shape};
      break;
    }
    case OpKind::kSoftmaxCrossEntropy: {
      const Node& logits = *in[0];
      const Node& labels = *in[1];
      RequireFloat(logits, node);
      RequireRank(logits, 2, node);
      if (labels.out_dtype != DType::kI32 ||
          labels.out_shape != Shape{logits.out_shape.dim(0)}) {
        Fail(GraphErrorKind::kShapeMismatch, node,
             "labels must be I32 [batch]");
      }
      out = {logits.out_dtype, Shape{}};
      break;
    }
  }
  if (out.second.rank() > kMaxRank) {
    Fail(GraphErrorKind::kShapeMismatch, node, "rank exceeds 5");
  }
  return out;
}

namespace {

// Structural checks shared by Validate and InferShapes.
void CheckStructure(const Graph& g) {
  const int n = g.size();
  for (int i = 0; i < n; ++i) {
    const Node& node = g.node(i);
    if (node.id != i) {
      Fail(GraphErrorKind::kBadAttr, i, "node ids must be dense");
    }
    for (int in : node.inputs) {
      if (in == i) Fail(GraphErrorKind::kCycle, i, "node reads itself");
      if (in < 0 || in >= n) {
        Fail(GraphErrorKind::kDanglingRef, i,
             "input " + std::to_string(in) + " does not exist");
      }
    }
  }
  if (static_cast<int>(TopoOrder(g).size()) != n) {
    Fail(GraphErrorKind::kCycle, -1, "graph contains a cycle");
  }
  for (int i = 0; i < n; ++i) {
    const Node& node = g.node(i);
    if (static_cast<int>(node.inputs.size()) != OpArity(node.op)) {
      Fail(GraphErrorKind::kBadAttr, i,
           std::string(OpName(node.op)) + " expects " +
               std::to_string(OpArity(node.op)) + " inputs, got " +
               std::to_string(node.inputs.size()));
    }
    if (node.out_shape.rank() > kMaxRank) {
      Fail(GraphErrorKind::kShapeMismatch, i, "rank exceeds 5");
    }
    if (node.op == OpKind::kConst) {
      if (!node.payload || node.payload->dtype != node.out_dtype ||
          node.payload->shape != node.out_shape) {
        Fail(GraphErrorKind::kBadAttr, i, "const payload disagrees with type");
      }
    }
  }
  for (int in : g.inputs()) {
    if (in < 0 || in >= n) {
      Fail(GraphErrorKind::kDanglingRef, -1, "graph input does not exist");
    }
    if (g.node(in).op != OpKind::kInput) {
      Fail(GraphErrorKind::kBadAttr, in, "graph input is not an Input node");
    }
  }
  for (int i = 0; i < n; ++i) {
    if (g.node(i).op == OpKind::kInput &&
        std::find(g.inputs().begin(), g.inputs().end(), i) ==
            g.inputs().end()) {
      Fail(GraphErrorKind::kBadAttr, i, "Input node not listed as input");
    }
  }
  if (g.outputs().empty()) {
    Fail(GraphErrorKind::kBadAttr, -1, "graph has no outputs");
  }
  for (int out : g.outputs()) {
    if (out < 0 || out >= n) {
      Fail(GraphErrorKind::kDanglingRef, -1, "graph output does not exist");
    }
  }
}

std::pair<DType, Shape> InferNode(const Node& node,
                                  const std::vector<Node>& nodes) {
  std::vector<const Node*> ins;
  ins.reserve(node.inputs.size());
  for (int in : node.inputs) ins.push_back(&nodes[in]);
  return InferOutput(node.op, node.attrs, ins, node.id);
}

}  // namespace

void Validate(const Graph& g) {
  CheckStructure(g);
  for (int id : TopoOrder(g)) {
    const Node& node = g.node(id);
    if (IsSource(node.op)) continue;
    auto [dtype, shape] = InferNode(node, g.nodes());
    if (dtype != node.out_dtype || shape != node.out_shape) {
      Fail(GraphErrorKind::kShapeMismatch, id,
           "declared " + std::string(DTypeName(node.out_dtype)) +
               node.out_shape.ToString() + " but inferred " +
               std::string(DTypeName(dtype)) + shape.ToString());
    }
  }
}

Graph InferShapes(const Graph& g) {
  CheckStructure(g);
  std::vector<Node> nodes = g.nodes();
  for (int id : TopoOrder(g)) {
    Node& node = nodes[id];
    if (IsSource(node.op)) continue;
    auto [dtype, shape] = InferNode(node, nodes);
    node.out_dtype = dtype;
    node.out_shape = std::move(shape);
  }
  return Graph(std::move(nodes), g.inputs(), g.outputs(), g.label());
}

std::vector<int> TopoOrder(const Graph& g) {
  const int n = g.size();
  std::vector<int> pending(n, 0);
  std::vector<std::vector<int>> consumers(n);
  for (const Node& node : g.nodes()) {
    for (int in : node.inputs) {
      if (in < 0 || in >= n) continue;
      ++pending[node.id];
      consumers[in].push_back(node.id);
    }
  }
  std::priority_queue<int, std::vector<int>, std::greater<>> ready;
  for (int i = 0; i < n; ++i) {
    if (pending[i] == 0) ready.push(i);
  }
  std::vector<int> order;
  order.reserve(n);
  while (!ready.empty()) {
    const int id = ready.top();
    ready.pop();
    order.push_back(id);
    for (int c : consumers[id]) {
      if (--pending[c] == 0) ready.push(c);
    }
  }
  return order;
}

std::string RenderAttrs(const AttrMap& attrs) {
  std::ostringstream os;
  bool first = true;
  for (const auto& [key, value] : attrs) {
    if (!first) os << ';';
    first = false;
    os << key << '=';
    if (const auto* i = std::get_if<int64_t>(&value)) {
      os << *i;
    } else {
      const auto& list = std::get<std::vector<int64_t>>(value);
      os << '[';
      for (size_t k = 0; k < list.size(); ++k) {
        if (k) os << ',';
        os << list[k];
      }
      os << ']';
    }
  }
  return os.str();
}

LayerSignature SignatureOf(const Node& node) {
  return {node.op, RenderAttrs(node.attrs)};
}

std::set<LayerSignature> Signatures(const Graph& g) {
  std::set<LayerSignature> out;
  for (const Node& node : g.nodes()) {
    if (!IsSource(node.op)) out.insert(SignatureOf(node));
  }
  return out;
}

std::set<EdgePair> EdgePairs(const Graph& g) {
  std::set<EdgePair> out;
  for (const Node& node : g.nodes()) {
    for (int in : node.inputs) {
      const OpKind producer = g.node(in).op;
      if (!IsSource(producer)) out.insert({producer, node.op});
    }
  }
  return out;
}

GraphBuilder::GraphBuilder(std::string label) : label_(std::move(label)) {}

GraphBuilder::GraphBuilder(const Graph& g)
    : nodes_(g.nodes()),
      inputs_(g.inputs()),
      outputs_(g.outputs()),
      label_(g.label()) {}

int GraphBuilder::AddInput(DType dtype, Shape shape) {
  Node node;
  node.id = size();
  node.op = OpKind::kInput;
  node.out_dtype = dtype;
  node.out_shape = std::move(shape);
  nodes_.push_back(std::move(node));
  inputs_.push_back(nodes_.back().id);
  return nodes_.back().id;
}

int GraphBuilder::AddConst(TensorValue value, bool trainable) {
  Node node;
  node.id = size();
  node.op = OpKind::kConst;
  node.attrs["trainable"] = int64_t{trainable ? 1 : 0};
  value.Canonicalize();
  node.out_dtype = value.dtype;
  node.out_shape = value.shape;
  node.payload = std::make_shared<const TensorValue>(std::move(value));
  nodes_.push_back(std::move(node));
  return nodes_.back().id;
}

int GraphBuilder::Add(OpKind op, std::vector<int> inputs, AttrMap attrs) {
  const int id = size();
  std::vector<const Node*> ins;
  for (int in : inputs) {
    if (in < 0 || in >= id) {
      Fail(GraphErrorKind::kDanglingRef, id,
           "input " + std::to_string(in) + " does not exist");
    }
    ins.push_back(&nodes_[in]);
  }
  auto [dtype, shape] = InferOutput(op, attrs, ins, id);
  Node node;
  node.id = id;
  node.op = op;
  node.inputs = std::move(inputs);
  node.attrs = std::move(attrs);
  node.out_dtype = dtype;
  node.out_shape = std::move(shape);
  nodes_.push_back(std::move(node));
  return id;
}

void GraphBuilder::Replace(int id, OpKind op, std::vector<int> inputs,
                           AttrMap attrs, bool allow_retype) {
  std::vector<const Node*> ins;
  for (int in : inputs) {
    if (in < 0 || in >= size()) {
      Fail(GraphErrorKind::kDanglingRef, id,
           "input " + std::to_string(in) + " does not exist");
    }
    ins.push_back(&nodes_[in]);
  }
  auto [dtype, shape] = InferOutput(op, attrs, ins, id);
  Node& node = nodes_.at(id);
  if (!allow_retype && (dtype != node.out_dtype || shape != node.out_shape)) {
    Fail(GraphErrorKind::kShapeMismatch, id, "replacement changes type");
  }
  node.op = op;
  node.inputs = std::move(inputs);
  node.attrs = std::move(attrs);
  node.out_dtype = dtype;
  node.out_shape = std::move(shape);
  node.payload.reset();
}

void GraphBuilder::Redirect(int consumer, int producer, int replacement) {
  for (int& in : nodes_.at(consumer).inputs) {
    if (in == producer) in = replacement;
  }
}

std::vector<int> GraphBuilder::ConsumersOf(int id) const {
  std::vector<int> out;
  for (const Node& node : nodes_) {
    if (std::find(node.inputs.begin(), node.inputs.end(), id) !=
        node.inputs.end()) {
      out.push_back(node.id);
    }
  }
  return out;
}

Graph GraphBuilder::Build() const {
  Graph g(nodes_, inputs_, outputs_, label_);
  Validate(g);
  return g;
}

}  // namespace graphmeta
