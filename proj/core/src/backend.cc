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

#include "graphmeta/backend.h"

#include <algorithm>
#include <climits>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "graphmeta/half.h"
#include "graphmeta/serialize.h"
#include "kernels.h"

namespace graphmeta {

std::string_view PhaseName(Phase phase) {
  switch (phase) {
    case Phase::kForward:
      return "forward";
    case Phase::kLoss:
      return "loss";
    case Phase::kBackward:
      return "backward";
    case Phase::kRewrite:
      return "rewrite";
  }
  return "unknown";
}

Phase ParsePhase(std::string_view name) {
  for (Phase p : {Phase::kForward, Phase::kLoss, Phase::kBackward,
                  Phase::kRewrite}) {
    if (PhaseName(p) == name) return p;
  }
  throw std::invalid_argument("unknown phase: " + std::string(name));
}

ExecutionError::ExecutionError(Phase phase, std::optional<int> node,
                               const std::string& message)
    : std::runtime_error(std::string(PhaseName(phase)) +
                         (node ? " at node " + std::to_string(*node) : "") +
                         ": " + message),
      phase_(phase),
      node_(node),
      message_(message) {}

int Arena::Allocate(int64_t bytes) {
  sizes_.push_back(bytes);
  live_ += bytes;
  peak_ = std::max(peak_, live_);
  return static_cast<int>(sizes_.size()) - 1;
}

void Arena::Release(int handle) {
  live_ -= sizes_.at(handle);
  sizes_[handle] = 0;
}

void Arena::ReleaseAll() {
  for (int64_t& s : sizes_) s = 0;
  live_ = 0;
}

struct Backend::ForwardState {
  std::vector<TensorValue> values;
  std::vector<int64_t> costs;
  int64_t cost_units = 0;
  // Buffers still owned by the executor.
  std::vector<int> handles;
};

TensorValue Backend::Forward(const Node& node, Inputs inputs,
                             Arena& /*arena*/) const {
  return kernels::Forward(node, inputs);
}

std::vector<std::optional<TensorValue>> Backend::Backward(
    const Node& node, Inputs inputs, const TensorValue& output,
    const TensorValue& grad) const {
  return kernels::Backward(node, inputs, output, grad);
}

int64_t Backend::ForwardCost(const Node& node, Inputs inputs,
                             const TensorValue& output) const {
  return kernels::ForwardCost(node, inputs, output);
}

namespace {

std::vector<const TensorValue*> Gather(const Node& node,
                                       const std::vector<TensorValue>& v) {
  std::vector<const TensorValue*> in;
  in.reserve(node.inputs.size());
  for (int i : node.inputs) in.push_back(&v[i]);
  return in;
}

TensorValue SourceValue(const Node& node, const Feeds& feeds) {
  auto it = feeds.find(node.id);
  if (it == feeds.end()) {
    if (node.op == OpKind::kConst) return *node.payload;
    throw std::invalid_argument("no feed for input node " +
                                std::to_string(node.id));
  }
  const TensorValue& feed = it->second;
  if (feed.dtype != node.out_dtype || feed.shape != node.out_shape) {
    throw std::invalid_argument(
        "feed for node " + std::to_string(node.id) + " is " +
        std::string(DTypeName(feed.dtype)) + feed.shape.ToString() +
        ", expected " + std::string(DTypeName(node.out_dtype)) +
        node.out_shape.ToString());
  }
  TensorValue value = feed;
  value.Canonicalize();
  return value;
}

struct LossSpec {
  double loss = 0.0;
  int node = -1;
  TensorValue seed;
};

LossSpec ComputeLoss(const Graph& g, const std::vector<TensorValue>& values) {
  for (int out : g.outputs()) {
    if (g.node(out).op == OpKind::kSoftmaxCrossEntropy) {
      const TensorValue& v = values[out];
      return {v.data[0], out, TensorValue::Filled(v.dtype, v.shape, 1.0)};
    }
  }
  const int out = g.outputs().front();
  const TensorValue& v = values[out];
  if (!IsFloat(v.dtype)) {
    throw ExecutionError(Phase::kLoss, out,
                         "loss output has non-float dtype " +
                             std::string(DTypeName(v.dtype)));
  }
  if (v.numel() == 0) {
    return {0.0, out, TensorValue(v.dtype, v.shape)};
  }
  double sum = 0.0;
  for (double x : v.data) sum += x;
  const double n = static_cast<double>(v.numel());
  return {RoundTo(v.dtype, sum / n), out,
          TensorValue::Filled(v.dtype, v.shape, 1.0 / n)};
}

}  // namespace

Backend::ForwardState Backend::RunForward(const Graph& g, const Feeds& feeds,
                                          bool keep_activations,
                                          Arena& arena) const {
  const int n = g.size();
  ForwardState state;
  state.values.resize(n);
  state.costs.assign(n, 0);
  state.handles.assign(n, -1);

  std::vector<int> remaining(n, 0);
  for (const Node& node : g.nodes()) {
    for (int i : node.inputs) ++remaining[i];
  }
  std::vector<bool> pinned(n, keep_activations);
  for (int out : g.outputs()) pinned[out] = true;

  for (int id : TopoOrder(g)) {
    const Node& node = g.node(id);
    if (IsSource(node.op)) {
      state.values[id] = SourceValue(node, feeds);
    } else {
      const auto in = Gather(node, state.values);
      try {
        state.values[id] = Forward(node, in, arena);
        state.costs[id] = ForwardCost(node, in, state.values[id]);
      } catch (const ExecutionError&) {
        throw;
      } catch (const std::exception& e) {
        throw ExecutionError(Phase::kForward, id, e.what());
      }
      state.cost_units += state.costs[id];
    }
    state.handles[id] = arena.Allocate(state.values[id].bytes());
    for (int i : node.inputs) {
      if (--remaining[i] == 0 && !pinned[i] && state.handles[i] >= 0) {
        arena.Release(state.handles[i]);
        state.handles[i] = -1;
      }
    }
    if (remaining[id] == 0 && !pinned[id]) {
      arena.Release(state.handles[id]);
      state.handles[id] = -1;
    }
  }
  return state;
}

ExecutionTrace Backend::ExecuteForward(const Graph& g,
                                       const Feeds& feeds) const {
  const auto start = std::chrono::steady_clock::now();
  Arena arena;
  ForwardState state = RunForward(g, feeds, false, arena);
  for (int h : state.handles) {
    if (h >= 0) arena.Release(h);
  }
  ExecutionTrace trace;
  trace.outputs = std::move(state.values);
  trace.node_costs = std::move(state.costs);
  trace.cost_units = state.cost_units;
  trace.peak_alloc_bytes = arena.peak_bytes();
  trace.leaked_bytes = arena.live_bytes();
  trace.wall_time = std::chrono::duration_cast<std::chrono::nanoseconds>(
      std::chrono::steady_clock::now() - start);
  return trace;
}

double Backend::Loss(const Graph& g, const Feeds& feeds) const {
  Arena arena;
  ForwardState state = RunForward(g, feeds, false, arena);
  return ComputeLoss(g, state.values).loss;
}

ExecutionTrace Backend::ExecuteTrainingStep(const Graph& g,
                                            const Feeds& feeds) const {
  const auto start = std::chrono::steady_clock::now();
  Arena arena;
  ForwardState state = RunForward(g, feeds, true, arena);
  const LossSpec loss = ComputeLoss(g, state.values);

  // Per node: (consumer key, input slot, contribution).
  struct Contribution {
    int key;
    int slot;
    TensorValue grad;
  };
  const int n = g.size();
  std::vector<std::vector<Contribution>> pending(n);
  pending[loss.node].push_back({INT_MAX, 0, loss.seed});

  std::vector<int> order = TopoOrder(g);
  int64_t backward_cost = 0;
  std::map<int, TensorValue> source_grads;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int id = *it;
    const Node& node = g.node(id);
    auto& contributions = pending[id];
    if (contributions.empty() || !IsFloat(node.out_dtype)) continue;
    std::stable_sort(contributions.begin(), contributions.end(),
                     [](const Contribution& a, const Contribution& b) {
                       if (a.key != b.key) return a.key > b.key;
                       return a.slot < b.slot;
                     });
    TensorValue total = std::move(contributions.front().grad);
    for (size_t c = 1; c < contributions.size(); ++c) {
      const auto& add = contributions[c].grad.data;
      for (size_t i = 0; i < total.data.size(); ++i) {
        total.data[i] = RoundTo(total.dtype, total.data[i] + add[i]);
      }
    }
    contributions.clear();
    const int handle = arena.Allocate(total.bytes());
    if (IsSource(node.op)) {
      source_grads[id] = std::move(total);
      arena.Release(handle);
      continue;
    }
    const auto in = Gather(node, state.values);
    std::vector<std::optional<TensorValue>> grads;
    try {
      grads = Backward(node, in, state.values[id], total);
    } catch (const ExecutionError&) {
      throw;
    } catch (const std::exception& e) {
      throw ExecutionError(Phase::kBackward, id, e.what());
    }
    backward_cost += 2 * state.costs[id];
    for (size_t slot = 0; slot < grads.size() && slot < node.inputs.size();
         ++slot) {
      if (!grads[slot]) continue;
      const int producer = node.inputs[slot];
      if (!IsFloat(g.node(producer).out_dtype)) continue;
      pending[producer].push_back(
          {id, static_cast<int>(slot), std::move(*grads[slot])});
    }
    arena.Release(handle);
  }

  ExecutionTrace trace;
  for (const Node& node : g.nodes()) {
    const bool wants = (node.op == OpKind::kInput && IsFloat(node.out_dtype)) ||
                       (node.op == OpKind::kConst && node.trainable());
    if (!wants) continue;
    auto it = source_grads.find(node.id);
    trace.gradients[node.id] =
        it != source_grads.end()
            ? std::move(it->second)
            : TensorValue(node.out_dtype, node.out_shape);
  }
  for (int h : state.handles) {
    if (h >= 0) arena.Release(h);
  }
  trace.outputs = std::move(state.values);
  trace.loss = loss.loss;
  trace.node_costs = std::move(state.costs);
  trace.cost_units = state.cost_units + backward_cost;
  trace.peak_alloc_bytes = arena.peak_bytes();
  trace.leaked_bytes = arena.live_bytes();
  trace.wall_time = std::chrono::duration_cast<std::chrono::nanoseconds>(
      std::chrono::steady_clock::now() - start);
  return trace;
}

std::string_view FaultName(FaultId fault) {
  static constexpr std::string_view kNames[] = {"M1", "M2", "M3", "M4",
                                                "M5", "M6", "M7"};
  return kNames[static_cast<int>(fault) - 1];
}

FaultId ParseFault(std::string_view name) {
  for (int k = 1; k <= kNumFaults; ++k) {
    const auto f = static_cast<FaultId>(k);
    if (FaultName(f) == name) return f;
  }
  throw std::invalid_argument("unknown fault: " + std::string(name));
}

namespace {

constexpr int64_t kLeakBytes = 1024;
constexpr int64_t kSlowConvFactor = 100;

class MutantBackend final : public Backend {
 public:
  explicit MutantBackend(FaultSpec spec) : spec_(std::move(spec)) {}

  std::string Id() const override {
    return "mutant:" + std::string(FaultName(spec_.fault));
  }

 protected:
  TensorValue Forward(const Node& node, Inputs inputs,
                      Arena& arena) const override {
    if (!Fires(node)) return Backend::Forward(node, inputs, arena);
    switch (spec_.fault) {
      case FaultId::kM1:
        if (node.op == OpKind::kReLU6) {
          TensorValue out = Backend::Forward(node, inputs, arena);
          for (double& v : out.data) {
            if (std::isnan(v)) v = 0.0;
          }
          return out;
        }
        break;
      case FaultId::kM2:
        if (node.op == OpKind::kMul) {
          TensorValue out = Backend::Forward(node, inputs, arena);
          for (double& v : out.data) v = RoundToHalf(v);
          return out;
        }
        break;
      case FaultId::kM5:
        if (node.op == OpKind::kSlice) arena.Allocate(kLeakBytes);
        break;
      case FaultId::kM7:
        if (node.op == OpKind::kPad) {
          const auto& pads = node.ListAttr("pads");
          const Shape& in = inputs[0]->shape;
          for (int d = 0; d < in.rank(); ++d) {
            if (pads[2 * d] + pads[2 * d + 1] == 0 || in.dim(d) == 0) {
              throw ExecutionError(Phase::kForward, node.id,
                                   "pad kernel rejects axis " +
                                       std::to_string(d));
            }
          }
        }
        break;
      default:
        break;
    }
    return Backend::Forward(node, inputs, arena);
  }

  std::vector<std::optional<TensorValue>> Backward(
      const Node& node, Inputs inputs, const TensorValue& output,
      const TensorValue& grad) const override {
    if (Fires(node)) {
      if (spec_.fault == FaultId::kM3 && node.op == OpKind::kSlice) {
        throw ExecutionError(Phase::kBackward, node.id,
                             "slice gradient kernel failed");
      }
      if (spec_.fault == FaultId::kM6 && node.op == OpKind::kAbs) {
        auto grads = Backend::Backward(node, inputs, output, grad);
        for (size_t i = 0; i < inputs[0]->data.size(); ++i) {
          if (inputs[0]->data[i] == 0.0) {
            grads[0]->data[i] = std::numeric_limits<double>::quiet_NaN();
          }
        }
        return grads;
      }
    }
    return Backend::Backward(node, inputs, output, grad);
  }

  int64_t ForwardCost(const Node& node, Inputs inputs,
                      const TensorValue& output) const override {
    int64_t cost = Backend::ForwardCost(node, inputs, output);
    if (spec_.fault == FaultId::kM4 && node.op == OpKind::kConv2D &&
        Fires(node)) {
      const auto& pad = node.ListAttr("pad");
      if (pad[0] != 0 || pad[1] != 0) cost *= kSlowConvFactor;
    }
    return cost;
  }

 private:
  bool Fires(const Node& node) const {
    return !spec_.trigger || spec_.trigger(node);
  }

  FaultSpec spec_;
};

// Copy of `g` with every F32 node and payload widened to F64.
Graph Widen(const Graph& g) {
  std::vector<Node> nodes = g.nodes();
  for (Node& node : nodes) {
    if (node.out_dtype == DType::kF32) node.out_dtype = DType::kF64;
    if (node.payload && node.payload->dtype == DType::kF32) {
      auto wide = std::make_shared<TensorValue>(*node.payload);
      wide->dtype = DType::kF64;
      node.payload = std::move(wide);
    }
  }
  return Graph(std::move(nodes), g.inputs(), g.outputs(), g.label());
}

Feeds Widen(Feeds feeds) {
  for (auto& [id, value] : feeds) {
    if (value.dtype == DType::kF32) value.dtype = DType::kF64;
  }
  return feeds;
}

}  // namespace

std::unique_ptr<Backend> MakeMutantBackend(FaultSpec spec) {
  return std::make_unique<MutantBackend>(std::move(spec));
}

std::unique_ptr<Backend> MakeBackend(std::string_view id) {
  if (id == "reference") return std::make_unique<ReferenceBackend>();
  constexpr std::string_view kPrefix = "mutant:";
  if (id.starts_with(kPrefix)) {
    return MakeMutantBackend({ParseFault(id.substr(kPrefix.size())), nullptr});
  }
  throw std::invalid_argument("unknown backend: " + std::string(id));
}

TensorValue FiniteDifferenceGrad(const Backend& backend, const Graph& g,
                                 const Feeds& feeds, int wrt, double h) {
  // Evaluated in double precision so the step is not swamped by rounding.
  const Graph wide = Widen(g);
  Feeds base = Widen(feeds);
  const Node& node = wide.node(wrt);
  if (!base.contains(wrt)) {
    if (node.op != OpKind::kConst) {
      throw std::invalid_argument("no feed for node " + std::to_string(wrt));
    }
    base[wrt] = *node.payload;
  }
  TensorValue point = base[wrt];
  TensorValue grad(DType::kF64, point.shape);
  for (int64_t i = 0; i < point.numel(); ++i) {
    Feeds shifted = base;
    shifted[wrt].data[i] = point.data[i] + h;
    const double up = backend.Loss(wide, shifted);
    shifted[wrt].data[i] = point.data[i] - h;
    const double down = backend.Loss(wide, shifted);
    grad.data[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

bool NearKink(const Graph& g, const ExecutionTrace& trace, double h) {
  for (const Node& node : g.nodes()) {
    switch (node.op) {
      case OpKind::kReLU:
      case OpKind::kAbs:
        for (double x : trace.outputs[node.inputs[0]].data) {
          if (std::fabs(x) < h) return true;
        }
        break;
      case OpKind::kReLU6:
        for (double x : trace.outputs[node.inputs[0]].data) {
          if (std::fabs(x) < h || std::fabs(x - 6.0) < h) return true;
        }
        break;
      case OpKind::kMaxPool2D: {
        const TensorValue& x = trace.outputs[node.inputs[0]];
        const auto& kernel = node.ListAttr("kernel");
        const auto& stride = node.ListAttr("stride");
        const Shape& out = node.out_shape;
        const int64_t hh = x.shape.dim(2), ww = x.shape.dim(3);
        for (int64_t b = 0; b < x.shape.dim(0) * x.shape.dim(1); ++b) {
          for (int64_t oy = 0; oy < out.dim(2); ++oy) {
            for (int64_t ox = 0; ox < out.dim(3); ++ox) {
              std::vector<double> window;
              for (int64_t ky = 0; ky < kernel[0]; ++ky) {
                for (int64_t kx = 0; kx < kernel[1]; ++kx) {
                  window.push_back(x.data[(b * hh + oy * stride[0] + ky) * ww +
                                          ox * stride[1] + kx]);
                }
              }
              std::sort(window.begin(), window.end(), std::greater<>());
              if (window.size() > 1 && window[0] - window[1] < 2.0 * h) {
                return true;
              }
            }
          }
        }
        break;
      }
      default:
        break;
    }
  }
  return false;
}

std::string DumpTraceJsonl(const Graph& g, const ExecutionTrace& trace,
                           bool full) {
  std::ostringstream out;
  for (const Node& node : g.nodes()) {
    const TensorValue& v = trace.outputs.at(node.id);
    nlohmann::json row;
    row["id"] = node.id;
    row["op"] = OpName(node.op);
    row["dtype"] = DTypeName(v.dtype);
    row["shape"] = v.shape.dims();
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    bool any = false;
    for (double x : v.data) {
      if (std::isnan(x)) continue;
      lo = std::min(lo, x);
      hi = std::max(hi, x);
      any = true;
    }
    row["min"] = any ? nlohmann::json(FormatDouble(lo)) : nlohmann::json();
    row["max"] = any ? nlohmann::json(FormatDouble(hi)) : nlohmann::json();
    row["has_nan"] = v.HasNaN();
    row["has_inf"] = v.HasInf();
    if (full) {
      nlohmann::json data = nlohmann::json::array();
      for (double x : v.data) data.push_back(FormatDouble(x));
      row["data"] = std::move(data);
    }
    out << row.dump() << '\n';
  }
  return out.str();
}

}  // namespace graphmeta
