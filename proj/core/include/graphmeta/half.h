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

#ifndef GRAPHMETA_HALF_H_
#define GRAPHMETA_HALF_H_

namespace graphmeta {

// Rounds to the nearest IEEE-754 binary16 value (ties to even). Magnitudes
// at or above 65520 overflow to infinity; subnormals are kept.
double RoundToHalf(double value);

}  // namespace graphmeta

#endif  // GRAPHMETA_HALF_H_
