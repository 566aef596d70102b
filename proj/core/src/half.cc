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

#include "graphmeta/half.h"

#include <cmath>
#include <limits>

namespace graphmeta {

double RoundToHalf(double value) {
  if (!std::isfinite(value) || value == 0.0) return value;
  const double magnitude = std::fabs(value);
  // 65504 is the largest finite half; the midpoint to the next binade
  // (65536) is 65520, which rounds to even, i.e. overflows.
  if (magnitude >= 65520.0) {
    return std::copysign(std::numeric_limits<double>::infinity(), value);
  }
  int exponent = 0;
  std::frexp(magnitude, &exponent);
  const int binade = exponent - 1;
  // 10 explicit mantissa bits; below 2^-14 the spacing is fixed at 2^-24.
  const double quantum =
      binade < -14 ? std::ldexp(1.0, -24) : std::ldexp(1.0, binade - 10);
  const double rounded = std::nearbyint(magnitude / quantum) * quantum;
  return std::copysign(rounded, value);
}

}  // namespace graphmeta
