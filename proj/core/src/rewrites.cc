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

#include "graphmeta/rewrites.h"

#include <algorithm>
#include <array>
#include <numeric>

namespace graphmeta {
namespace {

using List = std::vector<int64_t>;

constexpr std::array<std::string_view, kNumSmrs> kSmrNames = {
    "SMR1", "SMR2", "SMR3", "SMR4"};
constexpr std::array<std::string_view, kNumImrs> kImrNames = {
    "IMR1a", "IMR1b", "IMR2a", "IMR2b"};
constexpr std::array<std::string_view, kNumInserts> kInsertNames = {
    "single_op", "conv_bn_relu", "downsample", "matmul_tanh", "slice_concat"};

// Keeps the zero branch of a late-campaign model from exploding in size.
constexpr int64_t kMaxAlignedElements = 1 << 14;
constexpr int kAnchorAttempts = 8;
constexpr double kInsertWeightScale = 0.05;

template <typename E, size_t N>
E ParseName(const std::array<std::string_view, N>& names,
            std::string_view name, const char* what) {
  for (size_t i = 0; i < N; ++i) {
    if (names[i] == name) return static_cast<E>(i);
  }
  throw std::invalid_argument(std::string("unknown ") + what + ": " +
                              std::string(name));
}

// Right-aligned elementwise maximum of the shapes.
Shape UnionShape(const std::vector<Shape>& shapes) {
  int rank = 0;
  for (const Shape& s : shapes) rank = std::max(rank, s.rank());
  std::vector<int64_t> dims(rank, 0);
  std::vector<bool> zero(rank, false);
  std::vector<bool> nonzero(rank, false);
  for (const Shape& s : shapes) {
    const int offset = rank - s.rank();
    for (int d = 0; d < rank; ++d) {
      const int64_t v = d < offset ? 1 : s.dim(d - offset);
      dims[d] = std::max(dims[d], v);
      (v == 0 ? zero : nonzero)[d] = true;
    }
  }
  for (int d = 0; d < rank; ++d) {
    if (zero[d] && nonzero[d]) {
      throw RewriteError(RewriteErrorKind::kAlign,
                         "cannot pad an empty axis " + std::to_string(d));
    }
  }
  return Shape(std::move(dims));
}

int AlignTo(GraphBuilder& b, int id, const Shape& target) {
  Shape shape = b.node(id).out_shape;
  if (shape == target) return id;
  if (shape.rank() < target.rank()) {
    List dims(target.rank() - shape.rank(), 1);
    dims.insert(dims.end(), shape.dims().begin(), shape.dims().end());
    id = b.Add(OpKind::kReshape, {id}, {{"shape", dims}});
    shape = Shape(dims);
  }
  List pads(2 * target.rank(), 0);
  bool any = false;
  for (int d = 0; d < target.rank(); ++d) {
    const int64_t extra = target.dim(d) - shape.dim(d);
    if (extra < 0 || (extra > 0 && shape.dim(d) == 0)) {
      throw RewriteError(RewriteErrorKind::kAlign,
                         "cannot align " + shape.ToString() + " to " +
                             target.ToString());
    }
    pads[2 * d + 1] = extra;
    any = any || extra > 0;
  }
  if (any) id = b.Add(OpKind::kPad, {id}, {{"pads", pads}});
  return id;
}

// Inverse of AlignTo: crops `id` back to `target`.
int CropTo(GraphBuilder& b, int id, const Shape& target) {
  const Shape shape = b.node(id).out_shape;
  if (shape == target) return id;
  const int extra = shape.rank() - target.rank();
  List begin(shape.rank(), 0);
  List size(extra, 1);
  size.insert(size.end(), target.dims().begin(), target.dims().end());
  id = b.Add(OpKind::kSlice, {id}, {{"begin", begin}, {"size", size}});
  if (extra > 0) id = b.Add(OpKind::kReshape, {id}, {{"shape", target.dims()}});
  return id;
}

std::vector<bool> Descendants(const Graph& g, int root) {
  const auto consumers = g.Consumers();
  std::vector<bool> seen(g.size(), false);
  std::vector<int> stack = {root};
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    for (int c : consumers[id]) {
      if (!seen[c]) {
        seen[c] = true;
        stack.push_back(c);
      }
    }
  }
  return seen;
}

int InsertWeight(GraphBuilder& b, DType dtype, Shape shape, Rng& rng) {
  TensorValue t(dtype, std::move(shape));
  for (double& v : t.data) v = rng.Normal(0.0, kInsertWeightScale);
  return b.AddConst(std::move(t), true);
}

int InsertBatchNorm(GraphBuilder& b, int x, DType dtype, int64_t channels) {
  const Shape c{channels};
  const int scale = b.AddConst(TensorValue::Filled(dtype, c, 1.0), true);
  const int bias = b.AddConst(TensorValue::Filled(dtype, c, 0.0), true);
  const int mean = b.AddConst(TensorValue::Filled(dtype, c, 0.0), false);
  const int var = b.AddConst(TensorValue::Filled(dtype, c, 1.0), false);
  return b.Add(OpKind::kBatchNormInference, {x, scale, bias, mean, var});
}

struct ConvParams {
  int64_t kh, kw, sh, sw, ph, pw;
};

int InsertConv(GraphBuilder& b, int x, const ConvParams& p, Rng& rng) {
  const Node in = b.node(x);
  const int64_t c = in.out_shape.dim(1);
  const int w = InsertWeight(b, in.out_dtype, Shape{c, c, p.kh, p.kw}, rng);
  return b.Add(OpKind::kConv2D, {x, w},
               {{"stride", List{p.sh, p.sw}},
                {"pad", List{p.ph, p.pw}},
                {"kernel", List{p.kh, p.kw}},
                {"in_channels", c},
                {"out_channels", c}});
}

// Views `x` as NCHW; non-4D tensors become [1, 1, 1, numel].
int AsImage(GraphBuilder& b, int x, bool* is_image) {
  const Shape s = b.node(x).out_shape;
  *is_image = s.rank() == 4;
  if (*is_image) return x;
  return b.Add(OpKind::kReshape, {x}, {{"shape", List{1, 1, 1, s.numel()}}});
}

int Restore(GraphBuilder& b, int x, const Shape& shape) {
  if (b.node(x).out_shape == shape) return x;
  return b.Add(OpKind::kReshape, {x}, {{"shape", shape.dims()}});
}

int SingleOp(GraphBuilder& b, int input, Rng& rng) {
  static constexpr OpKind kOps[] = {OpKind::kNeg,   OpKind::kAbs,
                                    OpKind::kSquare, OpKind::kReLU,
                                    OpKind::kReLU6, OpKind::kTanh,
                                    OpKind::kSigmoid};
  return b.Add(kOps[rng.UniformInt(std::size(kOps))], {input});
}

int ConvBnRelu(GraphBuilder& b, int input, Rng& rng) {
  const Shape shape = b.node(input).out_shape;
  bool image = false;
  int h = AsImage(b, input, &image);
  const ConvParams p = image ? ConvParams{3, 3, 1, 1, 1, 1}
                             : ConvParams{1, 3, 1, 1, 0, 1};
  h = InsertConv(b, h, p, rng);
  h = InsertBatchNorm(b, h, b.node(h).out_dtype, b.node(h).out_shape.dim(1));
  h = b.Add(OpKind::kReLU, {h});
  return Restore(b, h, shape);
}

int DownSample(GraphBuilder& b, int input, Rng& rng) {
  const Shape shape = b.node(input).out_shape;
  bool image = false;
  const int x = AsImage(b, input, &image);
  const Shape img = b.node(x).out_shape;
  const int64_t k = image ? 3 : 1;
  const int64_t pad = image ? 1 : 0;
  const DType dtype = b.node(x).out_dtype;
  const int64_t c = img.dim(1);
  int main = InsertConv(b, x, {k, 3, 2, 2, pad, 1}, rng);
  main = InsertBatchNorm(b, main, dtype, c);
  main = b.Add(OpKind::kReLU, {main});
  main = InsertConv(b, main, {k, 3, 1, 1, pad, 1}, rng);
  main = InsertBatchNorm(b, main, dtype, c);
  int shortcut = InsertConv(b, x, {1, 1, 2, 2, 0, 0}, rng);
  shortcut = InsertBatchNorm(b, shortcut, dtype, c);
  int h = b.Add(OpKind::kAdd, {main, shortcut});
  h = b.Add(OpKind::kReLU, {h});
  h = AlignTo(b, h, img);
  return Restore(b, h, shape);
}

int MatMulTanh(GraphBuilder& b, int input, Rng& rng) {
  const Shape shape = b.node(input).out_shape;
  const int64_t n = shape.numel();
  int64_t cols = shape.rank() == 0 ? 1 : shape.dim(shape.rank() - 1);
  if (cols > 64 || cols == 0) {
    cols = 1;
    for (int64_t d = 64; d >= 1; --d) {
      if (n % d == 0) {
        cols = d;
        break;
      }
    }
  }
  int h = input;
  const Shape flat{n / cols, cols};
  if (shape != flat) h = b.Add(OpKind::kReshape, {h}, {{"shape", flat.dims()}});
  const int w = InsertWeight(b, b.node(h).out_dtype, Shape{cols, cols}, rng);
  h = b.Add(OpKind::kMatMul, {h, w});
  h = b.Add(OpKind::kTanh, {h});
  return Restore(b, h, shape);
}

int SliceConcat(GraphBuilder& b, int input, Rng& /*rng*/) {
  const Shape shape = b.node(input).out_shape;
  int h = input;
  if (shape.rank() == 0 || shape.dim(shape.rank() - 1) < 2) {
    if (shape.numel() < 2) return b.Add(OpKind::kTanh, {input});
    h = b.Add(OpKind::kReshape, {h}, {{"shape", List{shape.numel()}}});
  }
  const Shape s = b.node(h).out_shape;
  const int last = s.rank() - 1;
  const int64_t half = s.dim(last) / 2;
  List begin(s.rank(), 0);
  List size = s.dims();
  size[last] = half;
  int left = b.Add(OpKind::kSlice, {h}, {{"begin", begin}, {"size", size}});
  begin[last] = half;
  size[last] = s.dim(last) - half;
  int right = b.Add(OpKind::kSlice, {h}, {{"begin", begin}, {"size", size}});
  left = b.Add(OpKind::kTanh, {left});
  right = b.Add(OpKind::kReLU, {right});
  h = b.Add(OpKind::kConcat, {left, right}, {{"axis", int64_t{last}}});
  return Restore(b, h, shape);
}

// Zero branch of the structure relation over the aligned sources.
int ZeroBranch(GraphBuilder& b, SmrKind kind, const std::vector<int>& src) {
  auto sum = [&](size_t from) {
    int acc = src[from];
    for (size_t i = from + 1; i < src.size(); ++i) {
      acc = b.Add(OpKind::kAdd, {acc, src[i]});
    }
    return acc;
  };
  switch (kind) {
    case SmrKind::kSmr1: {
      const int sq = b.Add(OpKind::kSquare, {sum(0)});
      return b.Add(OpKind::kReLU, {b.Add(OpKind::kNeg, {sq})});
    }
    case SmrKind::kSmr2: {
      const int lhs = b.Add(OpKind::kAbs, {sum(0)});
      int rhs = b.Add(OpKind::kAbs, {src[0]});
      for (size_t i = 1; i < src.size(); ++i) {
        rhs = b.Add(OpKind::kAdd, {rhs, b.Add(OpKind::kAbs, {src[i]})});
      }
      return b.Add(OpKind::kReLU, {b.Add(OpKind::kSub, {lhs, rhs})});
    }
    case SmrKind::kSmr3: {
      const int rest = sum(1);
      const int diff = b.Add(OpKind::kSub, {b.Add(OpKind::kAbs, {src[0]}),
                                            b.Add(OpKind::kAbs, {rest})});
      const int lhs = b.Add(OpKind::kAbs, {diff});
      const int rhs = b.Add(OpKind::kAbs, {b.Add(OpKind::kAdd, {src[0], rest})});
      return b.Add(OpKind::kReLU, {b.Add(OpKind::kSub, {lhs, rhs})});
    }
    case SmrKind::kSmr4: {
      const DType dtype = b.node(src[0]).out_dtype;
      const int minus_one =
          b.AddConst(TensorValue::Scalar(dtype, -1.0), false);
      // The pair reads a private view so its gradients cancel before they
      // reach the anchor's other consumers.
      const int view = b.Add(OpKind::kReshape, {src[0]},
                             {{"shape", b.node(src[0]).out_shape.dims()}});
      const int neg = b.Add(OpKind::kMul, {view, minus_one});
      return b.Add(OpKind::kAdd, {view, neg});
    }
  }
  throw std::logic_error("unknown SMR");
}

std::vector<int> ImrSites(const Graph& g, ImrKind kind) {
  std::vector<int> sites;
  for (const Node& node : g.nodes()) {
    bool ok = false;
    switch (kind) {
      case ImrKind::kImr1a:
        ok = IsElementwiseUnary(node.op) && node.out_shape.rank() >= 2;
        break;
      case ImrKind::kImr1b:
        ok = (node.op == OpKind::kMatMul || node.op == OpKind::kConv2D ||
              node.op == OpKind::kBatchNormInference ||
              node.op == OpKind::kAdd || node.op == OpKind::kSub) &&
             IsFloat(g.node(node.inputs[0]).out_dtype);
        break;
      case ImrKind::kImr2a:
        if (node.op == OpKind::kConv2D) {
          const auto& pad = node.ListAttr("pad");
          ok = pad[0] != 0 || pad[1] != 0;
        }
        break;
      case ImrKind::kImr2b:
        ok = node.op == OpKind::kSlice;
        break;
    }
    if (ok) sites.push_back(node.id);
  }
  return sites;
}

}  // namespace

std::string_view SmrName(SmrKind kind) {
  return kSmrNames[static_cast<int>(kind)];
}
std::string_view ImrName(ImrKind kind) {
  return kImrNames[static_cast<int>(kind)];
}
std::string_view InsertName(InsertKind kind) {
  return kInsertNames[static_cast<int>(kind)];
}
SmrKind ParseSmr(std::string_view name) {
  return ParseName<SmrKind>(kSmrNames, name, "SMR");
}
ImrKind ParseImr(std::string_view name) {
  return ParseName<ImrKind>(kImrNames, name, "IMR");
}
InsertKind ParseInsert(std::string_view name) {
  return ParseName<InsertKind>(kInsertNames, name, "insert structure");
}

EquivalenceClass EquivalenceOf(ImrKind kind) {
  return kind == ImrKind::kImr1b ? EquivalenceClass::kApprox
                                 : EquivalenceClass::kExact;
}

std::vector<int> EligibleNodes(const Graph& g) {
  std::vector<int> out;
  for (const Node& node : g.nodes()) {
    if (!IsSource(node.op) && IsFloat(node.out_dtype) &&
        node.out_shape.numel() > 0) {
      out.push_back(node.id);
    }
  }
  return out;
}

Anchors PickAnchors(const Graph& g, int count, Rng& rng) {
  if (count < 1) throw std::invalid_argument("anchor count must be >= 1");
  const std::vector<int> eligible = EligibleNodes(g);
  if (static_cast<int>(eligible.size()) < count) {
    throw RewriteError(RewriteErrorKind::kNoAnchor,
                       "graph has " + std::to_string(eligible.size()) +
                           " eligible nodes, need " + std::to_string(count));
  }
  const auto consumers = g.Consumers();
  std::vector<int> preferred;
  std::vector<int> fallback;
  for (int id : eligible) {
    (consumers[id].empty() ? fallback : preferred).push_back(id);
  }
  for (std::vector<int>* pool : {&preferred, &fallback}) {
    std::vector<int> targets = *pool;
    while (!targets.empty()) {
      const int pick = rng.UniformInt(static_cast<int>(targets.size()));
      const int target = targets[pick];
      targets.erase(targets.begin() + pick);
      const std::vector<bool> below = Descendants(g, target);
      std::vector<int> candidates;
      for (int id : eligible) {
        if (!below[id]) candidates.push_back(id);
      }
      if (static_cast<int>(candidates.size()) < count) continue;
      Anchors anchors;
      anchors.target = target;
      for (int i = 0; i < count; ++i) {
        const int j = i + rng.UniformInt(static_cast<int>(candidates.size()) - i);
        std::swap(candidates[i], candidates[j]);
        anchors.sources.push_back(candidates[i]);
      }
      return anchors;
    }
  }
  throw RewriteError(RewriteErrorKind::kNoAnchor,
                     "no target admits " + std::to_string(count) +
                         " independent sources");
}

std::pair<int, int> AlignShapes(GraphBuilder& b, int a, int c) {
  if (b.node(a).out_dtype != b.node(c).out_dtype) {
    throw RewriteError(RewriteErrorKind::kAlign, "dtypes differ");
  }
  const Shape target = UnionShape({b.node(a).out_shape, b.node(c).out_shape});
  return {AlignTo(b, a, target), AlignTo(b, c, target)};
}

int BuildInsert(GraphBuilder& b, InsertKind kind, int input, Rng& rng) {
  switch (kind) {
    case InsertKind::kSingleOp:
      return SingleOp(b, input, rng);
    case InsertKind::kConvBnRelu:
      return ConvBnRelu(b, input, rng);
    case InsertKind::kDownSample:
      return DownSample(b, input, rng);
    case InsertKind::kMatMulTanh:
      return MatMulTanh(b, input, rng);
    case InsertKind::kSliceConcat:
      return SliceConcat(b, input, rng);
  }
  throw std::logic_error("unknown insert");
}

RewriteOutcome ApplySmr(const Graph& g, SmrKind kind, InsertKind insert,
                        Rng& rng, int anchor_count) {
  const int count = kind == SmrKind::kSmr4 ? 1 : anchor_count;
  Anchors anchors;
  Shape zero_shape;
  for (int attempt = 0;; ++attempt) {
    anchors = PickAnchors(g, count, rng);
    std::vector<Shape> shapes;
    for (int s : anchors.sources) shapes.push_back(g.node(s).out_shape);
    zero_shape = UnionShape(shapes);
    const Shape all =
        UnionShape({zero_shape, g.node(anchors.target).out_shape});
    if (all.numel() <= kMaxAlignedElements) break;
    if (attempt + 1 == kAnchorAttempts) {
      throw RewriteError(RewriteErrorKind::kAlign,
                         "aligned branch would hold " +
                             std::to_string(all.numel()) + " elements");
    }
  }

  RewriteOutcome outcome;
  outcome.step.smr = kind;
  outcome.step.insert = insert;
  outcome.step.anchor_count = anchor_count;
  outcome.step.anchors = anchors;
  try {
    GraphBuilder b(g);
    std::vector<int> sources;
    for (int s : anchors.sources) sources.push_back(AlignTo(b, s, zero_shape));
    const int z = ZeroBranch(b, kind, sources);
    const int target = anchors.target;
    const Shape target_shape = g.node(target).out_shape;
    const int s = BuildInsert(b, insert, target, rng);
    const auto [za, sa] = AlignShapes(b, z, s);
    const int p = b.Add(OpKind::kMul, {za, sa});
    const int spliced = CropTo(b, p, target_shape);
    const int sum = b.Add(OpKind::kAdd, {target, spliced});
    std::vector<int> readers = g.Consumers()[target];
    readers.erase(std::unique(readers.begin(), readers.end()), readers.end());
    for (int r : readers) b.Redirect(r, target, sum);
    outcome.zero_nodes = {z, spliced};
    outcome.graph = b.Build();
  } catch (const GraphError& e) {
    outcome.error = ExecutionError(Phase::kRewrite, e.node() >= 0
                                                        ? std::optional(e.node())
                                                        : std::nullopt,
                                   e.what());
  }
  return outcome;
}

Graph ApplyImr(const Graph& g, ImrKind kind, Rng& rng) {
  const std::vector<int> sites = ImrSites(g, kind);
  if (sites.empty()) {
    throw RewriteError(RewriteErrorKind::kNotApplicable,
                       std::string(ImrName(kind)) + " has no site");
  }
  const Node site = g.node(sites[rng.UniformInt(static_cast<int>(sites.size()))]);
  GraphBuilder b(g);
  switch (kind) {
    case ImrKind::kImr1a: {
      const int rank = site.out_shape.rank();
      List perm(rank);
      std::iota(perm.begin(), perm.end(), 0);
      while (std::is_sorted(perm.begin(), perm.end())) {
        for (int i = rank - 1; i > 0; --i) {
          std::swap(perm[i], perm[rng.UniformInt(i + 1)]);
        }
      }
      List inverse(rank);
      for (int i = 0; i < rank; ++i) inverse[perm[i]] = i;
      const int in = b.Add(OpKind::kTranspose, {site.inputs[0]},
                           {{"perm", perm}});
      const int op = b.Add(site.op, {in}, site.attrs);
      b.Replace(site.id, OpKind::kTranspose, {op}, {{"perm", inverse}});
      break;
    }
    case ImrKind::kImr1b: {
      const int x = site.inputs[0];
      const int c = b.AddConst(
          TensorValue::Scalar(g.node(x).out_dtype, kImrEpsilon), false);
      const int up = b.Add(OpKind::kAdd, {x, c});
      const int down = b.Add(OpKind::kSub, {up, c});
      std::vector<int> inputs = site.inputs;
      inputs[0] = down;
      b.Replace(site.id, site.op, inputs, site.attrs);
      break;
    }
    case ImrKind::kImr2a: {
      const auto& pad = site.ListAttr("pad");
      const int padded =
          b.Add(OpKind::kPad, {site.inputs[0]},
                {{"pads", List{0, 0, 0, 0, pad[0], pad[0], pad[1], pad[1]}}});
      AttrMap attrs = site.attrs;
      attrs["pad"] = List{0, 0};
      b.Replace(site.id, OpKind::kConv2D, {padded, site.inputs[1]}, attrs);
      break;
    }
    case ImrKind::kImr2b: {
      const int rank = site.out_shape.rank();
      List pads(2 * rank, 0);
      bool any = false;
      while (!any && rank > 0) {
        for (int64_t& p : pads) {
          p = rng.UniformInt(3);
          any = any || p != 0;
        }
      }
      List begin = site.ListAttr("begin");
      for (int d = 0; d < rank; ++d) begin[d] += pads[2 * d];
      const int padded =
          b.Add(OpKind::kPad, {site.inputs[0]}, {{"pads", pads}});
      AttrMap attrs = site.attrs;
      attrs["begin"] = begin;
      b.Replace(site.id, OpKind::kSlice, {padded}, attrs);
      break;
    }
  }
  return b.Build();
}

RewriteOutcome Transform(const Graph& g, RewriteStep step) {
  Rng rng(step.seed);
  RewriteOutcome outcome;
  try {
    outcome = ApplySmr(g, step.smr, step.insert, rng, step.anchor_count);
  } catch (const RewriteError& e) {
    outcome.error = ExecutionError(Phase::kRewrite, std::nullopt, e.what());
    outcome.step = step;
    return outcome;
  }
  step.anchors = outcome.step.anchors;
  if (outcome.ok() && step.imr) {
    try {
      Graph rewritten = ApplyImr(outcome.graph, *step.imr, rng);
      outcome.pre_imr = std::move(outcome.graph);
      outcome.graph = std::move(rewritten);
      outcome.equivalence = EquivalenceOf(*step.imr);
    } catch (const RewriteError&) {
      step.imr.reset();
    } catch (const GraphError& e) {
      outcome.error = ExecutionError(Phase::kRewrite, std::nullopt, e.what());
    }
  }
  outcome.step = step;
  return outcome;
}

}  // namespace graphmeta
