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

#ifndef GRAPHMETA_TENSOR_H_
#define GRAPHMETA_TENSOR_H_

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace graphmeta {

enum class DType : uint8_t { kF32, kF64, kF16, kI32, kBool };

inline constexpr int kNumDTypes = 5;
inline constexpr int kMaxRank = 5;

std::string_view DTypeName(DType dtype);
// Throws std::invalid_argument on an unknown name.
DType ParseDType(std::string_view name);
bool IsFloat(DType dtype);
int64_t DTypeBytes(DType dtype);

// Rounds `value` to the nearest value representable in `dtype`.
// F64 is the identity; integer types truncate toward zero.
double RoundTo(DType dtype, double value);

class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<int64_t> dims) : dims_(dims) {}
  explicit Shape(std::vector<int64_t> dims) : dims_(std::move(dims)) {}

  const std::vector<int64_t>& dims() const { return dims_; }
  int rank() const { return static_cast<int>(dims_.size()); }
  int64_t dim(int axis) const { return dims_[axis]; }
  int64_t numel() const;
  bool has_unit_dim() const;

  // Row-major strides, in elements.
  std::vector<int64_t> Strides() const;

  std::string ToString() const;

  friend bool operator==(const Shape&, const Shape&) = default;
  friend auto operator<=>(const Shape&, const Shape&) = default;

 private:
  std::vector<int64_t> dims_;
};

// Dense row-major tensor. Every dtype is stored as double; values are kept
// representable in the declared dtype by RoundTo() at every producer.
struct TensorValue {
  DType dtype = DType::kF32;
  Shape shape;
  std::vector<double> data;

  TensorValue() = default;
  TensorValue(DType dtype, Shape shape);
  TensorValue(DType dtype, Shape shape, std::vector<double> data);

  static TensorValue Scalar(DType dtype, double value);
  static TensorValue Filled(DType dtype, Shape shape, double value);

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int64_t bytes() const { return numel() * DTypeBytes(dtype); }
  bool AllFinite() const;
  bool HasNaN() const;
  bool HasInf() const;

  // Rounds every element to `dtype` in place.
  void Canonicalize();
};

// Value identity: same dtype and shape, and elementwise equal where NaN
// matches NaN. Signed zeros compare equal.
bool SameValues(const TensorValue& a, const TensorValue& b);

}  // namespace graphmeta

#endif  // GRAPHMETA_TENSOR_H_
