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

#include "graphmeta/rng.h"

#include <sstream>
#include <stdexcept>

namespace graphmeta {

double Rng::Uniform() {
  return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
}

double Rng::Normal(double mean, double stddev) {
  return std::normal_distribution<double>(mean, stddev)(engine_);
}

int Rng::UniformInt(int n) {
  if (n <= 0) throw std::invalid_argument("UniformInt needs n > 0");
  return std::uniform_int_distribution<int>(0, n - 1)(engine_);
}

double Rng::Beta(double alpha, double beta) {
  const double x = std::gamma_distribution<double>(alpha, 1.0)(engine_);
  const double y = std::gamma_distribution<double>(beta, 1.0)(engine_);
  return x / (x + y);
}

std::string Rng::State() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::Restore(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  if (!is) throw std::invalid_argument("malformed rng state");
}

}  // namespace graphmeta
