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

// Equivalence-preserving graph rewrites: the four structure relations that
// splice a provably-zero branch into a model, the interface relations that
// re-express one operator, and the library of insert structures.

#ifndef GRAPHMETA_REWRITES_H_
#define GRAPHMETA_REWRITES_H_

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "graphmeta/backend.h"
#include "graphmeta/graph.h"
#include "graphmeta/rng.h"

namespace graphmeta {

// SMR1 complete square, SMR2 absolute inequality, SMR3 triangle inequality,
// SMR4 inverse number.
enum class SmrKind { kSmr1, kSmr2, kSmr3, kSmr4 };
inline constexpr int kNumSmrs = 4;

// IMR1a transpose around an elementwise node, IMR1b add/subtract a tiny
// constant before an affine node, IMR2a Conv2D padding attr to explicit Pad,
// IMR2b Slice re-indexed over a padded input.
enum class ImrKind { kImr1a, kImr1b, kImr2a, kImr2b };
inline constexpr int kNumImrs = 4;

enum class InsertKind {
  kSingleOp,
  kConvBnRelu,
  kDownSample,
  kMatMulTanh,
  kSliceConcat,
};
inline constexpr int kNumInserts = 5;

enum class EquivalenceClass { kExact, kApprox };

std::string_view SmrName(SmrKind kind);
std::string_view ImrName(ImrKind kind);
std::string_view InsertName(InsertKind kind);
// All three throw std::invalid_argument.
SmrKind ParseSmr(std::string_view name);
ImrKind ParseImr(std::string_view name);
InsertKind ParseInsert(std::string_view name);

EquivalenceClass EquivalenceOf(ImrKind kind);

// The constant IMR1b adds and subtracts.
inline constexpr double kImrEpsilon = 1e-30;

enum class RewriteErrorKind { kNoAnchor, kNotApplicable, kAlign };

class RewriteError : public std::runtime_error {
 public:
  RewriteError(RewriteErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  RewriteErrorKind kind() const { return kind_; }

 private:
  RewriteErrorKind kind_;
};

struct Anchors {
  // The zero branch reads these (n2, n4, ...).
  std::vector<int> sources;
  // The splice point (n5).
  int target = -1;

  friend bool operator==(const Anchors&, const Anchors&) = default;
};

// Non-source float nodes with at least one element.
std::vector<int> EligibleNodes(const Graph& g);

// Samples `count` distinct sources and a target such that no source depends
// on the target. Targets with consumers are preferred. Throws
// RewriteError{kNoAnchor}.
Anchors PickAnchors(const Graph& g, int count, Rng& rng);

// Makes the outputs of `a` and `b` share one shape by prepending unit dims
// (Reshape) and zero-padding trailing edges (Pad). Returns the aligned ids.
// Throws RewriteError{kAlign}.
std::pair<int, int> AlignShapes(GraphBuilder& b, int a, int c);

// Appends an insert structure reading `input`; the returned node has the
// input's dtype and shape. Weights are fresh trainable Consts ~ N(0, 0.05^2).
int BuildInsert(GraphBuilder& b, InsertKind kind, int input, Rng& rng);

// One generation step: a structure relation, then optionally an interface
// relation, all randomness drawn from `seed`.
struct RewriteStep {
  SmrKind smr = SmrKind::kSmr1;
  std::optional<ImrKind> imr;
  InsertKind insert = InsertKind::kSingleOp;
  uint64_t seed = 0;
  int anchor_count = 2;
  // Filled in by Transform.
  Anchors anchors;

  friend bool operator==(const RewriteStep&, const RewriteStep&) = default;
};

struct RewriteOutcome {
  Graph graph;
  RewriteStep step;
  EquivalenceClass equivalence = EquivalenceClass::kExact;
  // Nodes whose value must be exactly zero on finite feeds.
  std::vector<int> zero_nodes;
  // The model before the interface relation; set when one was applied.
  std::optional<Graph> pre_imr;
  // Set when the rewrite could not produce a valid graph.
  std::optional<ExecutionError> error;

  bool ok() const { return !error.has_value(); }
};

// Applies the structure relation. On success the result validates.
RewriteOutcome ApplySmr(const Graph& g, SmrKind kind, InsertKind insert,
                        Rng& rng, int anchor_count = 2);

// Throws RewriteError{kNotApplicable} when `g` has no eligible site, and
// GraphError if the result fails validation.
Graph ApplyImr(const Graph& g, ImrKind kind, Rng& rng);

// ApplySmr then ApplyImr. An interface relation with no site is dropped
// (step.imr reset); any other failure is reported through `error`.
RewriteOutcome Transform(const Graph& g, RewriteStep step);

}  // namespace graphmeta

#endif  // GRAPHMETA_REWRITES_H_
