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

#ifndef GRAPHMETA_SERIALIZE_H_
#define GRAPHMETA_SERIALIZE_H_

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "graphmeta/graph.h"

namespace graphmeta {

class ParseError : public std::runtime_error {
 public:
  ParseError(size_t offset, const std::string& message);

  // Byte offset of the failure. Schema violations found after a successful
  // JSON parse report the document length.
  size_t offset() const { return offset_; }

 private:
  size_t offset_;
};

// Canonical JSON: nodes by id, attribute keys sorted, compact separators.
// Const payloads are stored under attrs["value"] as shortest round-trip
// decimal strings.
std::string Serialize(const Graph& g);
Graph Deserialize(std::string_view text);

nlohmann::json GraphToJson(const Graph& g);
// Throws ParseError (offset 0) on schema violations.
Graph GraphFromJson(const nlohmann::json& j);

std::string FormatDouble(double value);
// Throws std::invalid_argument.
double ParseDouble(std::string_view text);

}  // namespace graphmeta

#endif  // GRAPHMETA_SERIALIZE_H_
