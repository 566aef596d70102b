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

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include "graphmeta/guidance.h"
#include "graphmeta/rng.h"
#include "graphmeta/seeds.h"

namespace graphmeta {
namespace {

Features SomeFeatures(uint64_t seed) {
  Rng rng(seed);
  Features phi{};
  for (double& v : phi) v = rng.Uniform();
  phi.back() = 1.0;
  return phi;
}

// Quantile Huber loss written from its definition: sum over predicted
// quantiles j, mean over target samples k.
double OracleLoss(const std::array<double, kNumQuantiles>& z,
                  const std::array<double, kNumQuantiles>& y, double kappa) {
  double loss = 0.0;
  for (int j = 0; j < kNumQuantiles; ++j) {
    const double tau = (j + 0.5) / kNumQuantiles;
    for (int k = 0; k < kNumQuantiles; ++k) {
      const double u = y[k] - z[j];
      const double huber = std::fabs(u) <= kappa
                               ? 0.5 * u * u
                               : kappa * (std::fabs(u) - 0.5 * kappa);
      loss += std::fabs(tau - (u < 0 ? 1.0 : 0.0)) * huber / kappa;
    }
  }
  return loss / kNumQuantiles;
}

TEST(EpsilonTest, SequenceMatchesClosedForm) {
  EpsilonSchedule s;
  double expected = 1.0;
  for (int step = 0; step < 100; ++step) {
    EXPECT_DOUBLE_EQ(s.epsilon, expected) << step;
    s.Step();
    expected = std::max(0.05, 0.97 * expected);
  }
  EXPECT_EQ(s.epsilon, 0.05);
}

TEST(QuantileTest, InitialValuesAreZeroAndGreedyTiesGoLow) {
  const QuantileValueFn q;
  const Features phi = SomeFeatures(1);
  for (int a = 0; a < kNumActions; ++a) EXPECT_EQ(q.Q(phi, a), 0.0);
  EXPECT_EQ(q.Greedy(phi), 0);
}

TEST(QuantileTest, LossAndStepMatchOracle) {
  QuantileValueFn q;
  Rng rng(2);
  for (int a = 0; a < kNumActions; ++a) {
    for (int j = 0; j < kNumQuantiles; ++j) {
      q.bias(a, j) = rng.Normal(0.0, 0.3);
      for (int f = 0; f < kFeatureDim; ++f) q.weight(a, j, f) = rng.Normal(0.0, 0.05);
    }
  }
  const QuantileValueFn target = q;
  Transition t;
  t.state = SomeFeatures(3);
  t.next = SomeFeatures(4);
  t.action = 2;
  t.reward = 0.4;
  QrConfig config;
  config.clip_norm = 1e9;
  config.learning_rate = 1e-4;
  config.kappa = 0.5;

  std::array<double, kNumQuantiles> y = target.Quantiles(t.next, target.Greedy(t.next));
  for (double& v : y) v = t.reward + config.gamma * v;
  const double expected_loss = OracleLoss(q.Quantiles(t.state, t.action), y, config.kappa);

  QuantileValueFn updated = q;
  const double loss = updated.Update(target, t, config);
  EXPECT_NEAR(loss, expected_loss, 1e-12);

  // Each parameter moved by -lr * dL/dparam, checked by central differences
  // on the oracle loss.
  for (int j : {0, 7, 31}) {
    for (int f : {0, 10, kFeatureDim - 1}) {
      QuantileValueFn plus = q, minus = q;
      const double h = 1e-6;
      plus.weight(t.action, j, f) += h;
      minus.weight(t.action, j, f) -= h;
      const double grad =
          (OracleLoss(plus.Quantiles(t.state, t.action), y, config.kappa) -
           OracleLoss(minus.Quantiles(t.state, t.action), y, config.kappa)) /
          (2 * h);
      const double moved = updated.weight(t.action, j, f) - q.weight(t.action, j, f);
      EXPECT_NEAR(moved, -config.learning_rate * grad, 1e-9);
    }
  }
  // Other actions are untouched.
  EXPECT_EQ(updated.Quantiles(t.state, 0), q.Quantiles(t.state, 0));
}

TEST(QuantileTest, GradientNormIsClipped) {
  QuantileValueFn q;
  Transition t;
  t.state = SomeFeatures(5);
  t.done = true;
  t.reward = 1000.0;
  QrConfig config;
  config.clip_norm = 0.5;
  config.learning_rate = 1.0;
  QuantileValueFn updated = q;
  updated.Update(q, t, config);
  double norm_sq = 0.0;
  for (int j = 0; j < kNumQuantiles; ++j) {
    const double db = updated.bias(t.action, j) - q.bias(t.action, j);
    norm_sq += db * db;
    for (int f = 0; f < kFeatureDim; ++f) {
      const double dw = updated.weight(t.action, j, f) - q.weight(t.action, j, f);
      norm_sq += dw * dw;
    }
  }
  EXPECT_NEAR(std::sqrt(norm_sq), 0.5, 1e-9);
}

TEST(QuantileTest, ConvergesToTerminalTarget) {
  QuantileValueFn q;
  Transition t;
  t.state = SomeFeatures(6);
  t.action = 1;
  t.done = true;
  t.reward = 0.7;
  QrConfig config;
  config.learning_rate = 0.05;
  for (int step = 0; step < 20000; ++step) {
    const QuantileValueFn target = q;
    q.Update(target, t, config);
  }
  for (double z : q.Quantiles(t.state, t.action)) EXPECT_NEAR(z, 0.7, 1e-3);
  EXPECT_NEAR(q.Q(t.state, t.action), 0.7, 1e-3);
}

TEST(QuantileTest, LearnsQuantilesOfATwoPointReward) {
  // Rewards 0 and 1 with equal odds: quantiles below the median go to 0,
  // those above to 1.
  QuantileValueFn q;
  Rng rng(7);
  Transition t;
  t.state = SomeFeatures(8);
  t.done = true;
  QrConfig config;
  config.learning_rate = 0.01;
  for (int step = 0; step < 40000; ++step) {
    t.reward = rng.Uniform() < 0.5 ? 0.0 : 1.0;
    const QuantileValueFn target = q;
    q.Update(target, t, config);
  }
  const auto z = q.Quantiles(t.state, 0);
  EXPECT_LT(z[4], 0.2);
  EXPECT_GT(z[27], 0.8);
  EXPECT_NEAR(q.Q(t.state, 0), 0.5, 0.1);
}

TEST(QuantileTest, JsonRoundTrip) {
  QuantileValueFn q;
  q.weight(3, 5, 7) = 0.25;
  q.bias(1, 2) = -1.5;
  EXPECT_EQ(QuantileValueFn::FromJson(q.ToJson()), q);
  nlohmann::json bad = q.ToJson();
  bad["quantiles"] = 16;
  EXPECT_THROW(QuantileValueFn::FromJson(bad), std::invalid_argument);
}

TEST(SelectionTest, GreedyWhenEpsilonZeroUniformWhenOne) {
  QuantileValueFn q;
  const Features phi = SomeFeatures(9);
  for (int j = 0; j < kNumQuantiles; ++j) q.bias(2, j) = 1.0;
  Rng rng(10);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(SelectSmr(q, phi, 0.0, rng), SmrKind::kSmr3);
  }
  std::array<int, kNumSmrs> counts{};
  for (int i = 0; i < 8000; ++i) ++counts[static_cast<int>(SelectSmr(q, phi, 1.0, rng))];
  for (int c : counts) EXPECT_NEAR(c / 8000.0, 0.25, 0.03);
}

TEST(ThompsonTest, FrequenciesMatchBetaComparisonProbabilities) {
  const std::vector<std::pair<double, double>> arms = {
      {2, 5}, {4, 4}, {6, 3}, {1, 1}};
  ReplayPool pool;
  for (auto [a, b] : arms) {
    ReplayEntry e;
    e.alpha = a;
    e.beta = b;
    pool.Add(e);
  }
  // P(arm i draws the maximum) = integral of pdf_i * prod_{j != i} cdf_j.
  std::vector<double> expected;
  for (size_t i = 0; i < arms.size(); ++i) {
    auto integrand = [&](double x) {
      boost::math::beta_distribution<> di(arms[i].first, arms[i].second);
      double v = boost::math::pdf(di, x);
      for (size_t j = 0; j < arms.size(); ++j) {
        if (j == i) continue;
        boost::math::beta_distribution<> dj(arms[j].first, arms[j].second);
        v *= boost::math::cdf(dj, x);
      }
      return v;
    };
    expected.push_back(
        boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
            integrand, 0.0, 1.0));
  }
  double total = 0.0;
  for (double p : expected) total += p;
  EXPECT_NEAR(total, 1.0, 1e-9);

  Rng rng(11);
  std::vector<int> counts(arms.size(), 0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) ++counts[pool.ThompsonSelect(rng)];
  for (size_t i = 0; i < arms.size(); ++i) {
    EXPECT_NEAR(counts[i] / static_cast<double>(draws), expected[i], 0.02) << i;
  }
}

TEST(ThompsonTest, BetaDrawsMatchMoments) {
  Rng rng(12);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.Beta(3.0, 7.0);
    ASSERT_GE(x, 0.0);
    ASSERT_LE(x, 1.0);
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  EXPECT_NEAR(mean, 0.3, 0.005);
  EXPECT_NEAR(var, 3.0 * 7.0 / (100.0 * 11.0), 0.001);
}

TEST(PoolTest, CreditAndMedian) {
  ReplayPool pool;
  EXPECT_THROW(
      {
        Rng rng(1);
        pool.ThompsonSelect(rng);
      },
      EmptyPoolError);
  for (double r : {0.5, 0.1, 0.9, 0.3}) {
    ReplayEntry e;
    e.reward = r;
    pool.Add(e);
  }
  EXPECT_DOUBLE_EQ(pool.MedianReward(), 0.4);
  ReplayEntry e;
  e.reward = 0.2;
  pool.Add(e);
  EXPECT_DOUBLE_EQ(pool.MedianReward(), 0.3);
  pool.Credit(1, true);
  pool.Credit(1, false);
  pool.Credit(1, false);
  EXPECT_EQ(pool.entries()[1].alpha, 2.0);
  EXPECT_EQ(pool.entries()[1].beta, 3.0);
}

TEST(FeatureTest, LayoutAndRanges) {
  EXPECT_EQ(kFeatureDim, 52);
  FeatureContext ctx;
  ctx.lic = 0.3;
  ctx.last_smr = SmrKind::kSmr2;
  ctx.last_crash = true;
  for (const Graph& g : SeedLibrary()) {
    const Features phi = Featurize(g, ctx);
    double op_fraction = 0.0;
    for (int k = 0; k < kNumOpKinds; ++k) op_fraction += phi[k];
    EXPECT_NEAR(op_fraction, 1.0, 1e-12) << g.label();
    EXPECT_EQ(phi.back(), 1.0);
    for (double v : phi) {
      EXPECT_TRUE(std::isfinite(v));
      EXPECT_GE(v, 0.0);
    }
  }
}

}  // namespace
}  // namespace graphmeta
