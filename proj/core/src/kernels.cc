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

#include "kernels.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace graphmeta::kernels {
namespace {

constexpr double kBatchNormEpsilon = 1e-5;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

TensorValue Zeros(const Node& node) {
  return TensorValue(node.out_dtype, node.out_shape);
}

TensorValue ZerosLike(const TensorValue& t) {
  return TensorValue(t.dtype, t.shape);
}

TensorValue Rounded(TensorValue t) {
  t.Canonicalize();
  return t;
}

// Visits every multi-index of `shape` in row-major order.
template <typename Fn>
void ForEachIndex(const Shape& shape, Fn&& fn) {
  const int rank = shape.rank();
  const int64_t total = shape.numel();
  std::vector<int64_t> idx(rank, 0);
  for (int64_t flat = 0; flat < total; ++flat) {
    fn(idx, flat);
    for (int d = rank - 1; d >= 0; --d) {
      if (++idx[d] < shape.dim(d)) break;
      idx[d] = 0;
    }
  }
}

double UnaryForward(OpKind op, double x) {
  switch (op) {
    case OpKind::kNeg:
      return -x;
    case OpKind::kAbs:
      return std::fabs(x);
    case OpKind::kSquare:
      return x * x;
    case OpKind::kReLU:
      if (std::isnan(x)) return x;
      return x > 0.0 ? x : 0.0;
    case OpKind::kReLU6:
      if (std::isnan(x)) return x;
      return x > 0.0 ? (x < 6.0 ? x : 6.0) : 0.0;
    case OpKind::kTanh:
      return std::tanh(x);
    case OpKind::kSigmoid:
      return 1.0 / (1.0 + std::exp(-x));
    default:
      throw std::logic_error("not an elementwise unary op");
  }
}

double UnaryBackward(OpKind op, double x, double y, double g) {
  switch (op) {
    case OpKind::kNeg:
      return -g;
    case OpKind::kAbs:
      if (std::isnan(x)) return kNaN;
      return x > 0.0 ? g : (x < 0.0 ? -g : 0.0);
    case OpKind::kSquare:
      return 2.0 * x * g;
    case OpKind::kReLU:
      return x > 0.0 ? g : 0.0;
    case OpKind::kReLU6:
      return (x > 0.0 && x < 6.0) ? g : 0.0;
    case OpKind::kTanh:
      return g * (1.0 - y * y);
    case OpKind::kSigmoid:
      return g * y * (1.0 - y);
    default:
      throw std::logic_error("not an elementwise unary op");
  }
}

double BinaryForward(OpKind op, double a, double b) {
  switch (op) {
    case OpKind::kAdd:
      return a + b;
    case OpKind::kSub:
      return a - b;
    case OpKind::kMul:
      return a * b;
    default:
      throw std::logic_error("not an elementwise binary op");
  }
}

// Gradient for an operand that may have been broadcast from a scalar.
TensorValue ReduceToOperand(const TensorValue& operand,
                            const std::vector<double>& grad) {
  TensorValue out = ZerosLike(operand);
  if (operand.shape.rank() == 0 && grad.size() != 1) {
    double sum = 0.0;
    for (double v : grad) sum += v;
    out.data[0] = sum;
  } else if (operand.shape.rank() == 0 && grad.size() == 1) {
    out.data[0] = grad[0];
  } else {
    out.data = grad;
  }
  return Rounded(std::move(out));
}

struct ConvGeometry {
  int64_t n, c, h, w, o, kh, kw, sh, sw, ph, pw, oh, ow;
};

ConvGeometry Geometry(const Node& node, const TensorValue& x,
                      const TensorValue& out) {
  const auto& stride = node.ListAttr("stride");
  const auto& pad = node.ListAttr("pad");
  const auto& kernel = node.ListAttr("kernel");
  return {x.shape.dim(0),  x.shape.dim(1),   x.shape.dim(2),
          x.shape.dim(3),  out.shape.dim(1), kernel[0],
          kernel[1],       stride[0],        stride[1],
          pad[0],          pad[1],           out.shape.dim(2),
          out.shape.dim(3)};
}

TensorValue ConvForward(const Node& node, const TensorValue& x,
                        const TensorValue& w) {
  TensorValue out = Zeros(node);
  const ConvGeometry g = Geometry(node, x, out);
  int64_t o_flat = 0;
  for (int64_t n = 0; n < g.n; ++n) {
    for (int64_t o = 0; o < g.o; ++o) {
      for (int64_t oy = 0; oy < g.oh; ++oy) {
        for (int64_t ox = 0; ox < g.ow; ++ox, ++o_flat) {
          double acc = 0.0;
          for (int64_t c = 0; c < g.c; ++c) {
            for (int64_t ky = 0; ky < g.kh; ++ky) {
              const int64_t iy = oy * g.sh - g.ph + ky;
              if (iy < 0 || iy >= g.h) continue;
              for (int64_t kx = 0; kx < g.kw; ++kx) {
                const int64_t ix = ox * g.sw - g.pw + kx;
                if (ix < 0 || ix >= g.w) continue;
                acc += x.data[((n * g.c + c) * g.h + iy) * g.w + ix] *
                       w.data[((o * g.c + c) * g.kh + ky) * g.kw + kx];
              }
            }
          }
          out.data[o_flat] = acc;
        }
      }
    }
  }
  return Rounded(std::move(out));
}

std::vector<std::optional<TensorValue>> ConvBackward(const Node& node,
                                                     const TensorValue& x,
                                                     const TensorValue& w,
                                                     const TensorValue& out,
                                                     const TensorValue& grad) {
  const ConvGeometry g = Geometry(node, x, out);
  TensorValue dx = ZerosLike(x);
  TensorValue dw = ZerosLike(w);
  int64_t o_flat = 0;
  for (int64_t n = 0; n < g.n; ++n) {
    for (int64_t o = 0; o < g.o; ++o) {
      for (int64_t oy = 0; oy < g.oh; ++oy) {
        for (int64_t ox = 0; ox < g.ow; ++ox, ++o_flat) {
          const double gv = grad.data[o_flat];
          for (int64_t c = 0; c < g.c; ++c) {
            for (int64_t ky = 0; ky < g.kh; ++ky) {
              const int64_t iy = oy * g.sh - g.ph + ky;
              if (iy < 0 || iy >= g.h) continue;
              for (int64_t kx = 0; kx < g.kw; ++kx) {
                const int64_t ix = ox * g.sw - g.pw + kx;
                if (ix < 0 || ix >= g.w) continue;
                const int64_t xi = ((n * g.c + c) * g.h + iy) * g.w + ix;
                const int64_t wi = ((o * g.c + c) * g.kh + ky) * g.kw + kx;
                dx.data[xi] += gv * w.data[wi];
                dw.data[wi] += gv * x.data[xi];
              }
            }
          }
        }
      }
    }
  }
  return {Rounded(std::move(dx)), Rounded(std::move(dw))};
}

TensorValue PoolForward(const Node& node, const TensorValue& x) {
  TensorValue out = Zeros(node);
  const auto& kernel = node.ListAttr("kernel");
  const auto& stride = node.ListAttr("stride");
  const int64_t n = x.shape.dim(0), c = x.shape.dim(1), h = x.shape.dim(2),
                w = x.shape.dim(3);
  const int64_t oh = out.shape.dim(2), ow = out.shape.dim(3);
  const bool is_max = node.op == OpKind::kMaxPool2D;
  const double area = static_cast<double>(kernel[0] * kernel[1]);
  int64_t o_flat = 0;
  for (int64_t b = 0; b < n * c; ++b) {
    for (int64_t oy = 0; oy < oh; ++oy) {
      for (int64_t ox = 0; ox < ow; ++ox, ++o_flat) {
        double acc = is_max ? -std::numeric_limits<double>::infinity() : 0.0;
        bool saw_nan = false;
        for (int64_t ky = 0; ky < kernel[0]; ++ky) {
          for (int64_t kx = 0; kx < kernel[1]; ++kx) {
            const double v =
                x.data[(b * h + oy * stride[0] + ky) * w + ox * stride[1] + kx];
            if (is_max) {
              if (std::isnan(v)) saw_nan = true;
              acc = std::max(acc, v);
            } else {
              acc += v;
            }
          }
        }
        out.data[o_flat] = is_max ? (saw_nan ? kNaN : acc) : acc / area;
      }
    }
  }
  return Rounded(std::move(out));
}

TensorValue PoolBackward(const Node& node, const TensorValue& x,
                         const TensorValue& out, const TensorValue& grad) {
  TensorValue dx = ZerosLike(x);
  const auto& kernel = node.ListAttr("kernel");
  const auto& stride = node.ListAttr("stride");
  const int64_t n = x.shape.dim(0), c = x.shape.dim(1), h = x.shape.dim(2),
                w = x.shape.dim(3);
  const int64_t oh = out.shape.dim(2), ow = out.shape.dim(3);
  const bool is_max = node.op == OpKind::kMaxPool2D;
  const double area = static_cast<double>(kernel[0] * kernel[1]);
  int64_t o_flat = 0;
  for (int64_t b = 0; b < n * c; ++b) {
    for (int64_t oy = 0; oy < oh; ++oy) {
      for (int64_t ox = 0; ox < ow; ++ox, ++o_flat) {
        const double gv = grad.data[o_flat];
        const double target = out.data[o_flat];
        bool routed = false;
        for (int64_t ky = 0; ky < kernel[0]; ++ky) {
          for (int64_t kx = 0; kx < kernel[1]; ++kx) {
            const int64_t xi =
                (b * h + oy * stride[0] + ky) * w + ox * stride[1] + kx;
            if (!is_max) {
              dx.data[xi] += gv / area;
            } else if (!routed &&
                       (x.data[xi] == target ||
                        (std::isnan(target) && std::isnan(x.data[xi])))) {
              dx.data[xi] += gv;
              routed = true;
            }
          }
        }
      }
    }
  }
  return Rounded(std::move(dx));
}

TensorValue PadForward(const Node& node, const TensorValue& x) {
  TensorValue out = Zeros(node);
  const auto& pads = node.ListAttr("pads");
  const auto out_strides = out.shape.Strides();
  ForEachIndex(x.shape, [&](const std::vector<int64_t>& idx, int64_t flat) {
    int64_t off = 0;
    for (size_t d = 0; d < idx.size(); ++d) {
      off += (idx[d] + pads[2 * d]) * out_strides[d];
    }
    out.data[off] = x.data[flat];
  });
  return Rounded(std::move(out));
}

TensorValue PadBackward(const Node& node, const TensorValue& x,
                        const TensorValue& grad) {
  TensorValue dx = ZerosLike(x);
  const auto& pads = node.ListAttr("pads");
  const auto g_strides = grad.shape.Strides();
  ForEachIndex(x.shape, [&](const std::vector<int64_t>& idx, int64_t flat) {
    int64_t off = 0;
    for (size_t d = 0; d < idx.size(); ++d) {
      off += (idx[d] + pads[2 * d]) * g_strides[d];
    }
    dx.data[flat] = grad.data[off];
  });
  return dx;
}

TensorValue TransposeApply(const TensorValue& x,
                           const std::vector<int64_t>& perm, const Shape& out_shape,
                           DType dtype) {
  TensorValue out(dtype, out_shape);
  const auto in_strides = x.shape.Strides();
  ForEachIndex(out_shape, [&](const std::vector<int64_t>& idx, int64_t flat) {
    int64_t off = 0;
    for (size_t d = 0; d < idx.size(); ++d) off += idx[d] * in_strides[perm[d]];
    out.data[flat] = x.data[off];
  });
  return out;
}

TensorValue SliceForward(const Node& node, const TensorValue& x) {
  TensorValue out = Zeros(node);
  const auto& begin = node.ListAttr("begin");
  const auto in_strides = x.shape.Strides();
  ForEachIndex(out.shape, [&](const std::vector<int64_t>& idx, int64_t flat) {
    int64_t off = 0;
    for (size_t d = 0; d < idx.size(); ++d) {
      off += (idx[d] + begin[d]) * in_strides[d];
    }
    out.data[flat] = x.data[off];
  });
  return out;
}

TensorValue SliceBackward(const Node& node, const TensorValue& x,
                          const TensorValue& grad) {
  TensorValue dx = ZerosLike(x);
  const auto& begin = node.ListAttr("begin");
  const auto in_strides = x.shape.Strides();
  ForEachIndex(grad.shape, [&](const std::vector<int64_t>& idx, int64_t flat) {
    int64_t off = 0;
    for (size_t d = 0; d < idx.size(); ++d) {
      off += (idx[d] + begin[d]) * in_strides[d];
    }
    dx.data[off] = grad.data[flat];
  });
  return dx;
}

// Splits `total` row-major along `axis` into outer / extent / inner blocks.
struct AxisBlocks {
  int64_t outer = 1;
  int64_t inner = 1;
};

AxisBlocks Blocks(const Shape& shape, int axis) {
  AxisBlocks b;
  for (int i = 0; i < axis; ++i) b.outer *= shape.dim(i);
  for (int i = axis + 1; i < shape.rank(); ++i) b.inner *= shape.dim(i);
  return b;
}

TensorValue ConcatForward(const Node& node, const TensorValue& a,
                          const TensorValue& b) {
  TensorValue out = Zeros(node);
  const int axis = static_cast<int>(node.IntAttr("axis"));
  const AxisBlocks blk = Blocks(a.shape, axis);
  const int64_t ea = a.shape.dim(axis) * blk.inner;
  const int64_t eb = b.shape.dim(axis) * blk.inner;
  int64_t o = 0;
  for (int64_t i = 0; i < blk.outer; ++i) {
    for (int64_t k = 0; k < ea; ++k) out.data[o++] = a.data[i * ea + k];
    for (int64_t k = 0; k < eb; ++k) out.data[o++] = b.data[i * eb + k];
  }
  return out;
}

std::vector<std::optional<TensorValue>> ConcatBackward(const Node& node,
                                                       const TensorValue& a,
                                                       const TensorValue& b,
                                                       const TensorValue& grad) {
  TensorValue da = ZerosLike(a);
  TensorValue db = ZerosLike(b);
  const int axis = static_cast<int>(node.IntAttr("axis"));
  const AxisBlocks blk = Blocks(a.shape, axis);
  const int64_t ea = a.shape.dim(axis) * blk.inner;
  const int64_t eb = b.shape.dim(axis) * blk.inner;
  int64_t o = 0;
  for (int64_t i = 0; i < blk.outer; ++i) {
    for (int64_t k = 0; k < ea; ++k) da.data[i * ea + k] = grad.data[o++];
    for (int64_t k = 0; k < eb; ++k) db.data[i * eb + k] = grad.data[o++];
  }
  return {std::move(da), std::move(db)};
}

// Maps each input flat index to its reduced output flat index.
std::vector<int64_t> ReductionMap(const Node& node, const Shape& in_shape,
                                  int64_t* count) {
  const auto& axes = node.ListAttr("axes");
  std::vector<bool> reduced(in_shape.rank(), false);
  for (int64_t a : axes) reduced[a] = true;
  std::vector<int64_t> kept_dims;
  for (int d = 0; d < in_shape.rank(); ++d) {
    if (!reduced[d]) kept_dims.push_back(in_shape.dim(d));
  }
  const auto kept_strides = Shape(kept_dims).Strides();
  *count = 1;
  for (int d = 0; d < in_shape.rank(); ++d) {
    if (reduced[d]) *count *= in_shape.dim(d);
  }
  std::vector<int64_t> map(static_cast<size_t>(in_shape.numel()));
  ForEachIndex(in_shape, [&](const std::vector<int64_t>& idx, int64_t flat) {
    int64_t off = 0;
    int k = 0;
    for (int d = 0; d < in_shape.rank(); ++d) {
      if (!reduced[d]) off += idx[d] * kept_strides[k++];
    }
    map[flat] = off;
  });
  return map;
}

TensorValue ReduceForward(const Node& node, const TensorValue& x) {
  TensorValue out = Zeros(node);
  int64_t count = 1;
  const auto map = ReductionMap(node, x.shape, &count);
  for (size_t i = 0; i < map.size(); ++i) out.data[map[i]] += x.data[i];
  if (node.op == OpKind::kReduceMean) {
    for (double& v : out.data) v /= static_cast<double>(count);
  }
  return Rounded(std::move(out));
}

TensorValue ReduceBackward(const Node& node, const TensorValue& x,
                           const TensorValue& grad) {
  TensorValue dx = ZerosLike(x);
  int64_t count = 1;
  const auto map = ReductionMap(node, x.shape, &count);
  const double scale =
      node.op == OpKind::kReduceMean ? 1.0 / static_cast<double>(count) : 1.0;
  for (size_t i = 0; i < map.size(); ++i) dx.data[i] = grad.data[map[i]] * scale;
  return Rounded(std::move(dx));
}

TensorValue BatchNormForward(const Node& node, Inputs in) {
  const TensorValue& x = *in[0];
  TensorValue out = Zeros(node);
  const AxisBlocks blk = Blocks(x.shape, 1);
  const int64_t channels = x.shape.dim(1);
  int64_t i = 0;
  for (int64_t o = 0; o < blk.outer; ++o) {
    for (int64_t c = 0; c < channels; ++c) {
      const double scale = in[1]->data[c], bias = in[2]->data[c],
                   mean = in[3]->data[c], var = in[4]->data[c];
      const double inv = 1.0 / std::sqrt(var + kBatchNormEpsilon);
      for (int64_t k = 0; k < blk.inner; ++k, ++i) {
        out.data[i] = (x.data[i] - mean) * inv * scale + bias;
      }
    }
  }
  return Rounded(std::move(out));
}

std::vector<std::optional<TensorValue>> BatchNormBackward(
    Inputs in, const TensorValue& grad) {
  const TensorValue& x = *in[0];
  TensorValue dx = ZerosLike(x);
  TensorValue ds = ZerosLike(*in[1]);
  TensorValue db = ZerosLike(*in[2]);
  TensorValue dm = ZerosLike(*in[3]);
  TensorValue dv = ZerosLike(*in[4]);
  const AxisBlocks blk = Blocks(x.shape, 1);
  const int64_t channels = x.shape.dim(1);
  int64_t i = 0;
  for (int64_t o = 0; o < blk.outer; ++o) {
    for (int64_t c = 0; c < channels; ++c) {
      const double scale = in[1]->data[c], mean = in[3]->data[c],
                   var = in[4]->data[c];
      const double denom = var + kBatchNormEpsilon;
      const double inv = 1.0 / std::sqrt(denom);
      for (int64_t k = 0; k < blk.inner; ++k, ++i) {
        const double g = grad.data[i];
        const double centered = x.data[i] - mean;
        dx.data[i] = g * scale * inv;
        ds.data[c] += g * centered * inv;
        db.data[c] += g;
        dm.data[c] -= g * scale * inv;
        dv.data[c] += g * scale * centered * -0.5 * inv / denom;
      }
    }
  }
  return {Rounded(std::move(dx)), Rounded(std::move(ds)),
          Rounded(std::move(db)), Rounded(std::move(dm)),
          Rounded(std::move(dv))};
}

TensorValue SoftmaxCrossEntropyForward(const Node& node,
                                       const TensorValue& logits,
                                       const TensorValue& labels) {
  const int64_t batch = logits.shape.dim(0);
  const int64_t classes = logits.shape.dim(1);
  double total = 0.0;
  for (int64_t n = 0; n < batch; ++n) {
    const double* row = &logits.data[n * classes];
    const int64_t label = static_cast<int64_t>(labels.data[n]);
    if (label < 0 || label >= classes) {
      throw std::out_of_range("label " + std::to_string(label) +
                              " outside [0, " + std::to_string(classes) + ")");
    }
    double peak = -std::numeric_limits<double>::infinity();
    for (int64_t c = 0; c < classes; ++c) peak = std::max(peak, row[c]);
    double sum = 0.0;
    for (int64_t c = 0; c < classes; ++c) sum += std::exp(row[c] - peak);
    total += std::log(sum) + peak - row[label];
    if (std::isnan(row[0]) || std::isnan(peak)) total = kNaN;
  }
  TensorValue out = Zeros(node);
  out.data[0] = batch > 0 ? total / static_cast<double>(batch) : 0.0;
  return Rounded(std::move(out));
}

TensorValue SoftmaxCrossEntropyBackward(const TensorValue& logits,
                                        const TensorValue& labels,
                                        const TensorValue& grad) {
  TensorValue dl = ZerosLike(logits);
  const int64_t batch = logits.shape.dim(0);
  const int64_t classes = logits.shape.dim(1);
  const double g = grad.data[0] / static_cast<double>(batch);
  for (int64_t n = 0; n < batch; ++n) {
    const double* row = &logits.data[n * classes];
    double peak = -std::numeric_limits<double>::infinity();
    for (int64_t c = 0; c < classes; ++c) peak = std::max(peak, row[c]);
    double sum = 0.0;
    for (int64_t c = 0; c < classes; ++c) sum += std::exp(row[c] - peak);
    const int64_t label = static_cast<int64_t>(labels.data[n]);
    for (int64_t c = 0; c < classes; ++c) {
      const double p = std::exp(row[c] - peak) / sum;
      dl.data[n * classes + c] = g * (p - (c == label ? 1.0 : 0.0));
    }
  }
  return Rounded(std::move(dl));
}

}  // namespace

TensorValue Forward(const Node& node, Inputs in) {
  const OpKind op = node.op;
  if (IsElementwiseUnary(op)) {
    TensorValue out = Zeros(node);
    for (size_t i = 0; i < out.data.size(); ++i) {
      out.data[i] = UnaryForward(op, in[0]->data[i]);
    }
    return Rounded(std::move(out));
  }
  if (IsElementwiseBinary(op)) {
    TensorValue out = Zeros(node);
    const TensorValue& a = *in[0];
    const TensorValue& b = *in[1];
    const bool a_scalar = a.shape.rank() == 0;
    const bool b_scalar = b.shape.rank() == 0;
    for (size_t i = 0; i < out.data.size(); ++i) {
      out.data[i] = BinaryForward(op, a.data[a_scalar ? 0 : i],
                                  b.data[b_scalar ? 0 : i]);
    }
    return Rounded(std::move(out));
  }
  switch (op) {
    case OpKind::kMatMul: {
      TensorValue out = Zeros(node);
      const TensorValue& a = *in[0];
      const TensorValue& b = *in[1];
      const int64_t m = a.shape.dim(0), k = a.shape.dim(1), n = b.shape.dim(1);
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
          double acc = 0.0;
          for (int64_t t = 0; t < k; ++t) {
            acc += a.data[i * k + t] * b.data[t * n + j];
          }
          out.data[i * n + j] = acc;
        }
      }
      return Rounded(std::move(out));
    }
    case OpKind::kConv2D:
      return ConvForward(node, *in[0], *in[1]);
    case OpKind::kMaxPool2D:
    case OpKind::kAvgPool2D:
      return PoolForward(node, *in[0]);
    case OpKind::kPad:
      return PadForward(node, *in[0]);
    case OpKind::kTranspose:
      return TransposeApply(*in[0], node.ListAttr("perm"), node.out_shape,
                            node.out_dtype);
    case OpKind::kReshape:
    case OpKind::kFlatten:
      return TensorValue(node.out_dtype, node.out_shape, in[0]->data);
    case OpKind::kSlice:
      return SliceForward(node, *in[0]);
    case OpKind::kConcat:
      return ConcatForward(node, *in[0], *in[1]);
    case OpKind::kReduceMean:
    case OpKind::kReduceSum:
      return ReduceForward(node, *in[0]);
    case OpKind::kBatchNormInference:
      return BatchNormForward(node, in);
    case OpKind::kSoftmaxCrossEntropy:
      return SoftmaxCrossEntropyForward(node, *in[0], *in[1]);
    default:
      throw std::logic_error("no forward kernel for " +
                             std::string(OpName(op)));
  }
}

std::vector<std::optional<TensorValue>> Backward(const Node& node, Inputs in,
                                                 const TensorValue& output,
                                                 const TensorValue& grad) {
  const OpKind op = node.op;
  if (IsElementwiseUnary(op)) {
    TensorValue dx = ZerosLike(*in[0]);
    for (size_t i = 0; i < dx.data.size(); ++i) {
      dx.data[i] =
          UnaryBackward(op, in[0]->data[i], output.data[i], grad.data[i]);
    }
    return {Rounded(std::move(dx))};
  }
  if (IsElementwiseBinary(op)) {
    const TensorValue& a = *in[0];
    const TensorValue& b = *in[1];
    const bool a_scalar = a.shape.rank() == 0;
    const bool b_scalar = b.shape.rank() == 0;
    std::vector<double> ga(grad.data.size()), gb(grad.data.size());
    for (size_t i = 0; i < grad.data.size(); ++i) {
      const double g = grad.data[i];
      const double av = a.data[a_scalar ? 0 : i];
      const double bv = b.data[b_scalar ? 0 : i];
      switch (op) {
        case OpKind::kAdd:
          ga[i] = g;
          gb[i] = g;
          break;
        case OpKind::kSub:
          ga[i] = g;
          gb[i] = -g;
          break;
        default:
          ga[i] = g * bv;
          gb[i] = g * av;
          break;
      }
    }
    return {ReduceToOperand(a, ga), ReduceToOperand(b, gb)};
  }
  switch (op) {
    case OpKind::kMatMul: {
      const TensorValue& a = *in[0];
      const TensorValue& b = *in[1];
      const int64_t m = a.shape.dim(0), k = a.shape.dim(1), n = b.shape.dim(1);
      TensorValue da = ZerosLike(a);
      TensorValue db = ZerosLike(b);
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t t = 0; t < k; ++t) {
          double acc = 0.0;
          for (int64_t j = 0; j < n; ++j) {
            acc += grad.data[i * n + j] * b.data[t * n + j];
          }
          da.data[i * k + t] = acc;
        }
      }
      for (int64_t t = 0; t < k; ++t) {
        for (int64_t j = 0; j < n; ++j) {
          double acc = 0.0;
          for (int64_t i = 0; i < m; ++i) {
            acc += a.data[i * k + t] * grad.data[i * n + j];
          }
          db.data[t * n + j] = acc;
        }
      }
      return {Rounded(std::move(da)), Rounded(std::move(db))};
    }
    case OpKind::kConv2D:
      return ConvBackward(node, *in[0], *in[1], output, grad);
    case OpKind::kMaxPool2D:
    case OpKind::kAvgPool2D:
      return {PoolBackward(node, *in[0], output, grad)};
    case OpKind::kPad:
      return {PadBackward(node, *in[0], grad)};
    case OpKind::kTranspose: {
      const auto& perm = node.ListAttr("perm");
      std::vector<int64_t> inverse(perm.size());
      for (size_t i = 0; i < perm.size(); ++i) inverse[perm[i]] = i;
      return {TransposeApply(grad, inverse, in[0]->shape, in[0]->dtype)};
    }
    case OpKind::kReshape:
    case OpKind::kFlatten:
      return {TensorValue(in[0]->dtype, in[0]->shape, grad.data)};
    case OpKind::kSlice:
      return {SliceBackward(node, *in[0], grad)};
    case OpKind::kConcat:
      return ConcatBackward(node, *in[0], *in[1], grad);
    case OpKind::kReduceMean:
    case OpKind::kReduceSum:
      return {ReduceBackward(node, *in[0], grad)};
    case OpKind::kBatchNormInference:
      return BatchNormBackward(in, grad);
    case OpKind::kSoftmaxCrossEntropy:
      return {SoftmaxCrossEntropyBackward(*in[0], *in[1], grad), std::nullopt};
    default:
      throw std::logic_error("no backward kernel for " +
                             std::string(OpName(op)));
  }
}

int64_t ForwardCost(const Node& node, Inputs in, const TensorValue& output) {
  switch (node.op) {
    case OpKind::kInput:
    case OpKind::kConst:
      return 0;
    case OpKind::kMatMul:
      return in[0]->shape.dim(0) * in[0]->shape.dim(1) * in[1]->shape.dim(1);
    case OpKind::kConv2D:
      return output.numel() * in[1]->shape.dim(1) * in[1]->shape.dim(2) *
             in[1]->shape.dim(3);
    case OpKind::kMaxPool2D:
    case OpKind::kAvgPool2D: {
      const auto& kernel = node.ListAttr("kernel");
      return output.numel() * kernel[0] * kernel[1];
    }
    case OpKind::kReduceMean:
    case OpKind::kReduceSum:
      return in[0]->numel();
    case OpKind::kSoftmaxCrossEntropy:
      return in[0]->numel();
    default:
      return output.numel();
  }
}

}  // namespace graphmeta::kernels
