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

// Reference tensor kernels. Internal to the backend.

#ifndef GRAPHMETA_SRC_KERNELS_H_
#define GRAPHMETA_SRC_KERNELS_H_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "graphmeta/graph.h"
#include "graphmeta/tensor.h"

namespace graphmeta::kernels {

using Inputs = std::span<const TensorValue* const>;

// Result is rounded to node.out_dtype.
TensorValue Forward(const Node& node, Inputs inputs);

std::vector<std::optional<TensorValue>> Backward(const Node& node,
                                                 Inputs inputs,
                                                 const TensorValue& output,
                                                 const TensorValue& grad);

int64_t ForwardCost(const Node& node, Inputs inputs,
                    const TensorValue& output);

}  // namespace graphmeta::kernels

#endif  // GRAPHMETA_SRC_KERNELS_H_
