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

#ifndef GRAPHMETA_RNG_H_
#define GRAPHMETA_RNG_H_

#include <cstdint>
#include <random>
#include <string>

namespace graphmeta {

// Seeded random stream. Distribution objects are constructed per draw so the
// engine state alone determines every future value; State()/Restore() give
// exact pause/resume.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  uint64_t NextSeed() { return engine_(); }
  // U[0, 1).
  double Uniform();
  double Normal(double mean = 0.0, double stddev = 1.0);
  // Uniform over [0, n).
  int UniformInt(int n);
  double Beta(double alpha, double beta);

  std::string State() const;
  void Restore(const std::string& state);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace graphmeta

#endif  // GRAPHMETA_RNG_H_
