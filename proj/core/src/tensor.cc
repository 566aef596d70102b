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

#include "graphmeta/tensor.h"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "graphmeta/half.h"

namespace graphmeta {

std::string_view DTypeName(DType dtype) {
  switch (dtype) {
    case DType::kF32:
      return "F32";
    case DType::kF64:
      return "F64";
    case DType::kF16:
      return "F16";
    case DType::kI32:
      return "I32";
    case DType::kBool:
      return "BOOL";
  }
  return "?";
}

DType ParseDType(std::string_view name) {
  for (DType d : {DType::kF32, DType::kF64, DType::kF16, DType::kI32,
                  DType::kBool}) {
    if (DTypeName(d) == name) return d;
  }
  throw std::invalid_argument("unknown dtype: " + std::string(name));
}

bool IsFloat(DType dtype) {
  return dtype == DType::kF32 || dtype == DType::kF64 || dtype == DType::kF16;
}

int64_t DTypeBytes(DType dtype) {
  switch (dtype) {
    case DType::kF64:
      return 8;
    case DType::kF32:
    case DType::kI32:
      return 4;
    case DType::kF16:
      return 2;
    case DType::kBool:
      return 1;
  }
  return 0;
}

double RoundTo(DType dtype, double value) {
  switch (dtype) {
    case DType::kF64:
      return value;
    case DType::kF32:
      return static_cast<double>(static_cast<float>(value));
    case DType::kF16:
      return RoundToHalf(value);
    case DType::kI32:
      return std::isfinite(value) ? std::trunc(value) : 0.0;
    case DType::kBool:
      return value != 0.0 ? 1.0 : 0.0;
  }
  return value;
}

int64_t Shape::numel() const {
  int64_t n = 1;
  for (int64_t d : dims_) n *= d;
  return n;
}

bool Shape::has_unit_dim() const {
  for (int64_t d : dims_) {
    if (d == 1) return true;
  }
  return false;
}

std::vector<int64_t> Shape::Strides() const {
  std::vector<int64_t> strides(dims_.size(), 1);
  for (int i = rank() - 2; i >= 0; --i) {
    strides[i] = strides[i + 1] * dims_[i + 1];
  }
  return strides;
}

std::string Shape::ToString() const {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < dims_.size(); ++i) {
    if (i) os << ',';
    os << dims_[i];
  }
  os << ']';
  return os.str();
}

TensorValue::TensorValue(DType dtype, Shape shape)
    : dtype(dtype), shape(std::move(shape)) {
  data.assign(static_cast<size_t>(this->shape.numel()), 0.0);
}

TensorValue::TensorValue(DType dtype, Shape shape, std::vector<double> data)
    : dtype(dtype), shape(std::move(shape)), data(std::move(data)) {
  if (static_cast<int64_t>(this->data.size()) != this->shape.numel()) {
    throw std::invalid_argument("tensor data length " +
                                std::to_string(this->data.size()) +
                                " does not match shape " +
                                this->shape.ToString());
  }
}

TensorValue TensorValue::Scalar(DType dtype, double value) {
  return TensorValue(dtype, Shape{}, {RoundTo(dtype, value)});
}

TensorValue TensorValue::Filled(DType dtype, Shape shape, double value) {
  TensorValue t(dtype, std::move(shape));
  std::fill(t.data.begin(), t.data.end(), RoundTo(dtype, value));
  return t;
}

bool TensorValue::AllFinite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool TensorValue::HasNaN() const {
  for (double v : data) {
    if (std::isnan(v)) return true;
  }
  return false;
}

bool TensorValue::HasInf() const {
  for (double v : data) {
    if (std::isinf(v)) return true;
  }
  return false;
}

void TensorValue::Canonicalize() {
  if (dtype == DType::kF64) return;
  for (double& v : data) v = RoundTo(dtype, v);
}

bool SameValues(const TensorValue& a, const TensorValue& b) {
  if (a.dtype != b.dtype || a.shape != b.shape) return false;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double x = a.data[i];
    const double y = b.data[i];
    if (std::isnan(x) && std::isnan(y)) continue;
    if (x != y) return false;
  }
  return true;
}

}  // namespace graphmeta
