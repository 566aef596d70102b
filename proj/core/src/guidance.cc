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

#include "graphmeta/guidance.h"

#include <algorithm>
#include <cmath>

#include "graphmeta/metrics.h"

namespace graphmeta {
namespace {

constexpr double kDepthScale = 64.0;
constexpr double kWidthScale = 16.0;
constexpr double kSizeScale = 256.0;
constexpr double kRoundScale = 100.0;
// log10 of the largest activation the magnitude guard tolerates.
constexpr double kLogActivationScale = 30.0;

double Huber(double u, double kappa) {
  const double a = std::fabs(u);
  return a <= kappa ? 0.5 * u * u : kappa * (a - 0.5 * kappa);
}

double HuberSlope(double u, double kappa) {
  if (std::fabs(u) <= kappa) return u;
  return u > 0 ? kappa : -kappa;
}

}  // namespace

Features Featurize(const Graph& g, const FeatureContext& ctx) {
  Features f{};
  const int n = g.size();
  const double total = std::max(1, n);
  std::vector<int> depth(n, 0);
  int max_depth = 0;
  int floats = 0;
  std::array<int, kNumDTypes> dtypes{};
  std::array<int, kNumRanks> ranks{};
  for (int id : TopoOrder(g)) {
    const Node& node = g.node(id);
    for (int in : node.inputs) depth[id] = std::max(depth[id], depth[in] + 1);
    max_depth = std::max(max_depth, depth[id]);
  }
  size_t max_fanout = 0;
  for (const auto& c : g.Consumers()) max_fanout = std::max(max_fanout, c.size());
  for (const Node& node : g.nodes()) {
    f[static_cast<int>(node.op)] += 1.0 / total;
    if (IsFloat(node.out_dtype)) ++floats;
    ++dtypes[static_cast<int>(node.out_dtype)];
    ++ranks[node.out_shape.rank()];
  }
  int k = kNumOpKinds;
  f[k++] = max_depth / kDepthScale;
  f[k++] = static_cast<double>(max_fanout) / kWidthScale;
  f[k++] = n / kSizeScale;
  f[k++] = ctx.lic;
  f[k++] = ctx.lpc;
  f[k++] = ctx.lsc;
  f[k++] = ctx.rounds_since_seed / kRoundScale;
  f[k++] = floats / total;
  double act = 0.0;
  if (ctx.mean_abs_activation) {
    const double m = *ctx.mean_abs_activation;
    act = std::isfinite(m)
              ? std::min(1.0, std::log10(1.0 + m) / kLogActivationScale)
              : 1.0;
  }
  f[k++] = act;
  for (int d : dtypes) f[k++] = d / total;
  for (int r : ranks) f[k++] = r / total;
  for (int a = 0; a < kNumActions; ++a) {
    f[k++] = ctx.last_smr && static_cast<int>(*ctx.last_smr) == a ? 1.0 : 0.0;
  }
  f[k++] = ctx.last_crash ? 1.0 : 0.0;
  f[k++] = 1.0;
  return f;
}

QuantileValueFn::QuantileValueFn()
    : theta_(static_cast<size_t>(kNumActions) * kNumQuantiles * kFeatureDim,
             0.0),
      bias_(static_cast<size_t>(kNumActions) * kNumQuantiles, 0.0) {}

QuantileValueFn::QuantileRow QuantileValueFn::Quantiles(const Features& phi,
                                                        int action) const {
  QuantileRow z{};
  for (int j = 0; j < kNumQuantiles; ++j) {
    const double* w = &theta_[Index(action, j, 0)];
    double acc = bias_[action * kNumQuantiles + j];
    for (int f = 0; f < kFeatureDim; ++f) acc += w[f] * phi[f];
    z[j] = acc;
  }
  return z;
}

double QuantileValueFn::Q(const Features& phi, int action) const {
  const QuantileRow z = Quantiles(phi, action);
  double sum = 0.0;
  for (double v : z) sum += v;
  return sum / kNumQuantiles;
}

std::array<double, kNumActions> QuantileValueFn::QValues(
    const Features& phi) const {
  std::array<double, kNumActions> q{};
  for (int a = 0; a < kNumActions; ++a) q[a] = Q(phi, a);
  return q;
}

int QuantileValueFn::Greedy(const Features& phi) const {
  const auto q = QValues(phi);
  return static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin());
}

double QuantileValueFn::Update(const QuantileValueFn& target,
                               const Transition& t, const QrConfig& config) {
  QuantileRow y{};
  if (!t.done) {
    const int next_action =
        config.on_action_target ? t.action : target.Greedy(t.next);
    y = target.Quantiles(t.next, next_action);
    for (double& v : y) v = t.reward + config.gamma * v;
  } else {
    y.fill(t.reward);
  }
  const QuantileRow z = Quantiles(t.state, t.action);
  QuantileRow grad{};
  double loss = 0.0;
  for (int j = 0; j < kNumQuantiles; ++j) {
    const double tau = Midpoint(j);
    for (int k = 0; k < kNumQuantiles; ++k) {
      const double u = y[k] - z[j];
      const double weight = std::fabs(tau - (u < 0.0 ? 1.0 : 0.0));
      loss += weight * Huber(u, config.kappa) / config.kappa / kNumQuantiles;
      grad[j] -= weight * HuberSlope(u, config.kappa) / config.kappa /
                 kNumQuantiles;
    }
  }
  double phi_sq = 1.0;
  for (double v : t.state) phi_sq += v * v;
  double norm_sq = 0.0;
  for (double g : grad) norm_sq += g * g * phi_sq;
  const double norm = std::sqrt(norm_sq);
  const double scale = norm > config.clip_norm ? config.clip_norm / norm : 1.0;
  for (int j = 0; j < kNumQuantiles; ++j) {
    const double step = config.learning_rate * scale * grad[j];
    double* w = &theta_[Index(t.action, j, 0)];
    for (int f = 0; f < kFeatureDim; ++f) w[f] -= step * t.state[f];
    bias_[t.action * kNumQuantiles + j] -= step;
  }
  return loss;
}

nlohmann::json QuantileValueFn::ToJson() const {
  return {{"actions", kNumActions},
          {"quantiles", kNumQuantiles},
          {"features", kFeatureDim},
          {"theta", theta_},
          {"bias", bias_}};
}

QuantileValueFn QuantileValueFn::FromJson(const nlohmann::json& j) {
  QuantileValueFn q;
  if (j.at("actions") != kNumActions || j.at("quantiles") != kNumQuantiles ||
      j.at("features") != kFeatureDim) {
    throw std::invalid_argument("checkpoint dimensions do not match");
  }
  q.theta_ = j.at("theta").get<std::vector<double>>();
  q.bias_ = j.at("bias").get<std::vector<double>>();
  if (q.theta_.size() != QuantileValueFn().theta_.size() ||
      q.bias_.size() != QuantileValueFn().bias_.size()) {
    throw std::invalid_argument("checkpoint parameter count mismatch");
  }
  return q;
}

void EpsilonSchedule::Step() { epsilon = std::max(end, decay * epsilon); }

SmrKind SelectSmr(const QuantileValueFn& q, const Features& phi,
                  double epsilon, Rng& rng) {
  const double p = rng.Uniform();
  if (p <= epsilon) return static_cast<SmrKind>(rng.UniformInt(kNumSmrs));
  return static_cast<SmrKind>(q.Greedy(phi));
}

ImrKind SelectImr(Rng& rng) {
  return static_cast<ImrKind>(rng.UniformInt(kNumImrs));
}

InsertKind SelectInsert(Rng& rng) {
  return static_cast<InsertKind>(rng.UniformInt(kNumInserts));
}

size_t ReplayPool::ThompsonSelect(Rng& rng) const {
  if (entries_.empty()) throw EmptyPoolError();
  size_t best = 0;
  double best_draw = -1.0;
  for (size_t i = 0; i < entries_.size(); ++i) {
    const double draw = rng.Beta(entries_[i].alpha, entries_[i].beta);
    if (draw > best_draw) {
      best_draw = draw;
      best = i;
    }
  }
  return best;
}

void ReplayPool::Credit(size_t index, bool success) {
  ReplayEntry& e = entries_.at(index);
  (success ? e.alpha : e.beta) += 1.0;
}

double ReplayPool::MedianReward() const {
  if (entries_.empty()) return 0.0;
  std::vector<double> r;
  r.reserve(entries_.size());
  for (const auto& e : entries_) r.push_back(e.reward);
  std::sort(r.begin(), r.end());
  const size_t m = r.size() / 2;
  return r.size() % 2 ? r[m] : 0.5 * (r[m - 1] + r[m]);
}

}  // namespace graphmeta
