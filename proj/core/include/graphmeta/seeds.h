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

// Seed models and feed generation.

#ifndef GRAPHMETA_SEEDS_H_
#define GRAPHMETA_SEEDS_H_

#include <string>
#include <string_view>
#include <vector>

#include "graphmeta/backend.h"
#include "graphmeta/graph.h"
#include "graphmeta/rng.h"

namespace graphmeta {

// Labels: cnn, resnet, mlp, autoencoder, slice_concat, transpose_reshape.
// Weights come from a fixed per-seed stream, so the library is a constant.
std::vector<Graph> SeedLibrary();
std::vector<std::string> SeedLabels();
// Throws std::invalid_argument on an unknown label.
Graph FindSeed(std::string_view label);

// Standard-normal values for float Inputs. I32 Inputs feeding a
// SoftmaxCrossEntropy get labels in [0, classes); other integer inputs get
// values in [0, 4). With `special_value_rate` > 0 each float element is
// replaced by NaN with that probability.
Feeds RandomFeeds(const Graph& g, Rng& rng, double special_value_rate = 0.0);

}  // namespace graphmeta

#endif  // GRAPHMETA_SEEDS_H_
