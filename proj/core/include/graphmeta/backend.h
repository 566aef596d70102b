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

// Graph execution: the reference interpreter (forward, scalar loss,
// reverse-mode gradients, deterministic cost and allocation accounting) and
// the mutant backends that plant one fault each.
//
// Reference conventions:
//   * ReLU/ReLU6 propagate NaN.
//   * Subgradients at kinks are 0 (Abs at 0, ReLU at 0, ReLU6 at 0 and 6).
//   * Reductions accumulate in double in row-major input order and round
//     once to the node dtype.
//   * Gradient contributions into a node are summed in descending order of
//     the consuming node id; the loss seed sorts before every consumer.
//
// Cost table (forward units; a training step adds 2x forward for every
// non-source node):
//   elementwise, Pad, Slice, Transpose, Reshape, Flatten, Concat, BN: numel
//   MatMul: m*k*n        Conv2D: out_numel * in_channels * kh * kw
//   pooling: out_numel * kh * kw        reductions: input numel
//   SoftmaxCrossEntropy: batch * classes          Input/Const: 0

#ifndef GRAPHMETA_BACKEND_H_
#define GRAPHMETA_BACKEND_H_

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "graphmeta/graph.h"
#include "graphmeta/tensor.h"

namespace graphmeta {

// Values for Input nodes. Entries keyed by a Const id override its payload.
using Feeds = std::map<int, TensorValue>;

enum class Phase { kForward, kLoss, kBackward, kRewrite };

std::string_view PhaseName(Phase phase);
Phase ParsePhase(std::string_view name);

class ExecutionError : public std::runtime_error {
 public:
  ExecutionError(Phase phase, std::optional<int> node,
                 const std::string& message);

  Phase phase() const { return phase_; }
  std::optional<int> node() const { return node_; }
  const std::string& message() const { return message_; }

 private:
  Phase phase_;
  std::optional<int> node_;
  std::string message_;
};

struct ExecutionTrace {
  // Indexed by node id; covers every node.
  std::vector<TensorValue> outputs;
  std::optional<double> loss;
  // Float Inputs and trainable Consts; zero tensors when unreachable.
  std::map<int, TensorValue> gradients;
  std::vector<int64_t> node_costs;
  int64_t cost_units = 0;
  std::chrono::nanoseconds wall_time{0};
  int64_t peak_alloc_bytes = 0;
  int64_t leaked_bytes = 0;
};

// Byte-level bookkeeping of tensor buffers for one execution.
class Arena {
 public:
  int Allocate(int64_t bytes);
  void Release(int handle);
  void ReleaseAll();

  int64_t live_bytes() const { return live_; }
  int64_t peak_bytes() const { return peak_; }

 private:
  std::vector<int64_t> sizes_;
  int64_t live_ = 0;
  int64_t peak_ = 0;
};

class Backend {
 public:
  virtual ~Backend() = default;

  virtual std::string Id() const = 0;

  // Throws ExecutionError{kForward}; std::invalid_argument when feeds do not
  // cover the graph inputs.
  ExecutionTrace ExecuteForward(const Graph& g, const Feeds& feeds) const;
  // Forward, scalar loss, and reverse-mode gradients; no weight update.
  // The loss is the value of a SoftmaxCrossEntropy output when the graph
  // has one, else the mean of outputs[0].
  ExecutionTrace ExecuteTrainingStep(const Graph& g, const Feeds& feeds) const;
  double Loss(const Graph& g, const Feeds& feeds) const;

 protected:
  using Inputs = std::span<const TensorValue* const>;

  virtual TensorValue Forward(const Node& node, Inputs inputs,
                              Arena& arena) const;
  // One entry per input; nullopt for inputs that take no gradient.
  virtual std::vector<std::optional<TensorValue>> Backward(
      const Node& node, Inputs inputs, const TensorValue& output,
      const TensorValue& grad) const;
  virtual int64_t ForwardCost(const Node& node, Inputs inputs,
                              const TensorValue& output) const;

 private:
  struct ForwardState;
  ForwardState RunForward(const Graph& g, const Feeds& feeds,
                          bool keep_activations, Arena& arena) const;
};

class ReferenceBackend final : public Backend {
 public:
  std::string Id() const override { return "reference"; }
};

enum class FaultId { kM1 = 1, kM2, kM3, kM4, kM5, kM6, kM7 };

inline constexpr int kNumFaults = 7;

std::string_view FaultName(FaultId fault);
FaultId ParseFault(std::string_view name);

struct FaultSpec {
  FaultId fault = FaultId::kM1;
  // Narrows the fault site; nullptr fires at every site of the fault's op.
  std::function<bool(const Node&)> trigger;
};

// Fault table:
//   M1 ReLU6 maps NaN to 0.
//   M2 Mul rounds its result to binary16.
//   M3 Slice backward kernel fails.
//   M4 Conv2D with nonzero padding costs 100x.
//   M5 Slice leaks a 1 KiB scratch buffer per execution.
//   M6 Abs gradient at 0 is NaN.
//   M7 Pad fails when any axis is left unpadded or has zero extent.
std::unique_ptr<Backend> MakeMutantBackend(FaultSpec spec);
// "reference" or "mutant:M<k>". Throws std::invalid_argument.
std::unique_ptr<Backend> MakeBackend(std::string_view id);

// Central-difference estimate of d loss / d wrt (an Input or Const id),
// returned as F64.
TensorValue FiniteDifferenceGrad(const Backend& backend, const Graph& g,
                                 const Feeds& feeds, int wrt, double h);

// True when an input of a ReLU/ReLU6/Abs/MaxPool2D node lies within `h` of
// a point where the op is not differentiable.
bool NearKink(const Graph& g, const ExecutionTrace& trace, double h);

// One JSON object per node: id, shape, dtype, min, max, has_nan, has_inf
// (and "data" when `full`).
std::string DumpTraceJsonl(const Graph& g, const ExecutionTrace& trace,
                           bool full);

}  // namespace graphmeta

#endif  // GRAPHMETA_BACKEND_H_
