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

#include "graphmeta/serialize.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <system_error>

namespace graphmeta {

using nlohmann::json;

ParseError::ParseError(size_t offset, const std::string& message)
    : std::runtime_error("parse error at byte " + std::to_string(offset) +
                         ": " + message),
      offset_(offset) {}

std::string FormatDouble(double value) {
  if (std::isnan(value)) return "nan";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, end);
}

double ParseDouble(std::string_view text) {
  double value = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw std::invalid_argument("not a decimal number: " + std::string(text));
  }
  return value;
}

json GraphToJson(const Graph& g) {
  json nodes = json::array();
  for (const Node& node : g.nodes()) {
    json attrs = json::object();
    for (const auto& [key, value] : node.attrs) {
      if (const auto* i = std::get_if<int64_t>(&value)) {
        attrs[key] = *i;
      } else {
        attrs[key] = std::get<std::vector<int64_t>>(value);
      }
    }
    if (node.payload) {
      json values = json::array();
      for (double v : node.payload->data) values.push_back(FormatDouble(v));
      attrs["value"] = std::move(values);
    }
    nodes.push_back({{"id", node.id},
                     {"op", OpName(node.op)},
                     {"inputs", node.inputs},
                     {"attrs", std::move(attrs)},
                     {"dtype", DTypeName(node.out_dtype)},
                     {"shape", node.out_shape.dims()}});
  }
  return {{"label", g.label()},
          {"inputs", g.inputs()},
          {"outputs", g.outputs()},
          {"nodes", std::move(nodes)}};
}

std::string Serialize(const Graph& g) { return GraphToJson(g).dump(); }

namespace {

Graph FromJsonAt(const json& j, size_t offset) {
  try {
    if (!j.is_object()) throw ParseError(offset, "graph must be an object");
    const json& jnodes = j.at("nodes");
    if (!jnodes.is_array() || jnodes.empty()) {
      throw ParseError(offset, "graph has no nodes");
    }
    std::vector<Node> nodes;
    nodes.reserve(jnodes.size());
    for (const json& jn : jnodes) {
      Node node;
      node.id = jn.at("id").get<int>();
      node.op = ParseOpKind(jn.at("op").get<std::string>());
      node.inputs = jn.at("inputs").get<std::vector<int>>();
      node.out_dtype = ParseDType(jn.at("dtype").get<std::string>());
      node.out_shape = Shape(jn.at("shape").get<std::vector<int64_t>>());
      for (const auto& [key, value] : jn.at("attrs").items()) {
        if (key == "value" && node.op == OpKind::kConst) {
          std::vector<double> data;
          for (const json& s : value) {
            data.push_back(ParseDouble(s.get<std::string>()));
          }
          node.payload = std::make_shared<const TensorValue>(
              node.out_dtype, node.out_shape, std::move(data));
        } else if (value.is_number_integer()) {
          node.attrs[key] = value.get<int64_t>();
        } else if (value.is_array()) {
          node.attrs[key] = value.get<std::vector<int64_t>>();
        } else {
          throw ParseError(offset, "attr '" + key + "' must be int or list");
        }
      }
      nodes.push_back(std::move(node));
    }
    std::sort(nodes.begin(), nodes.end(),
              [](const Node& a, const Node& b) { return a.id < b.id; });
    Graph g(std::move(nodes), j.at("inputs").get<std::vector<int>>(),
            j.at("outputs").get<std::vector<int>>(),
            j.at("label").get<std::string>());
    Validate(g);
    return g;
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(offset, e.what());
  }
}

}  // namespace

Graph GraphFromJson(const json& j) { return FromJsonAt(j, 0); }

Graph Deserialize(std::string_view text) {
  json j;
  try {
    j = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(e.byte, e.what());
  }
  return FromJsonAt(j, text.size());
}

}  // namespace graphmeta
