// Copyright 2026 The CloudNine Authors. All Rights Reserved.
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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_util.hpp"

namespace cloudnine {
namespace {

const Region& asia() { return default_regions()[0]; }

GridLayout layout10() {
  GridLayout l = default_layout(asia());
  l.rows = 10;
  l.cols = 10;
  return l;
}

TEST(Field, ZeroAmplitudeIsZero) {
  FieldSpec spec;
  spec.amplitude_range = {0.0, 0.0};
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> lat(30, 40), lon(120, 132);
  for (int i = 0; i < 50; ++i) {
    const GeoPoint p(lat(rng), lon(rng));
    for (int v = 0; v < kNumStateVariables; ++v) EXPECT_EQ(eval_field(spec, static_cast<Variable>(v), p, i), 0.0);
  }
}

TEST(Field, Deterministic) {
  FieldSpec spec;
  const GeoPoint p(35.2, 127.1);
  for (int v = 0; v < kNumVariables; ++v) {
    EXPECT_EQ(eval_field(spec, static_cast<Variable>(v), p, 17), eval_field(spec, static_cast<Variable>(v), p, 17));
  }
}

TEST(Field, DerivedVariables) {
  FieldSpec spec;
  const GeoPoint p(34.0, 125.0);
  const double t = eval_field(spec, Variable::kT, p, 3);
  const double q = eval_field(spec, Variable::kQ, p, 3);
  EXPECT_DOUBLE_EQ(eval_field(spec, Variable::kBA, p, 3), 0.1 * t + 0.05 * q + 0.2);
  EXPECT_DOUBLE_EQ(eval_field(spec, Variable::kTB, p, 3), t + 0.3 * q);
}

TEST(Field, StepChangeBoundedByGradientTimesDrift) {
  // Each bump centre moves at most `drift` degrees per step and a Gaussian
  // bump of amplitude A has gradient magnitude at most |A| e^(-1/2) / sigma.
  FieldSpec spec;
  const double sigma = spec.length_scale_deg;
  const double bound = spec.n_modes * spec.amplitude_range.second * std::exp(-0.5) / sigma * spec.drift_deg_per_step;
  const FieldModel field(spec);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> lat(28, 42), lon(118, 134);
  std::uniform_int_distribution<int> step(0, 500);
  for (int i = 0; i < 2000; ++i) {
    const GeoPoint p(lat(rng), lon(rng));
    const int t = step(rng);
    for (int v = 0; v < kNumStateVariables; ++v) {
      const auto var = static_cast<Variable>(v);
      EXPECT_LE(std::abs(field.eval(var, p, t + 1) - field.eval(var, p, t)), bound);
    }
  }
}

TEST(Snapshot, NoObservationsGivesGridOnly) {
  const auto spec = region_field_spec(FieldSpec{}, asia(), layout10());
  std::map<std::string, int> counts;
  for (const auto& [k, v] : default_obs_counts()) counts[k] = 0;
  const auto s = make_snapshot(spec, asia(), layout10(), counts, 5, 1);
  EXPECT_EQ(s.graph.nodes.size(), 100u);
  EXPECT_TRUE(s.obs_nodes().empty());
}

TEST(Snapshot, UnknownSourceRejected) {
  const auto spec = region_field_spec(FieldSpec{}, asia(), layout10());
  EXPECT_THROW(make_snapshot(spec, asia(), layout10(), {{"RADAR", 3}}, 1, 1), Error);
  EXPECT_THROW(make_snapshot(spec, asia(), layout10(), {{"GridPoint", 3}}, 1, 1), Error);
}

TEST(Snapshot, BackgroundTargetsAndObservations) {
  const auto layout = layout10();
  const auto spec = region_field_spec(FieldSpec{}, asia(), layout);
  const auto s = make_snapshot(spec, asia(), layout, default_obs_counts(), 8, 3);
  const FieldModel field(spec);
  EXPECT_EQ(s.obs_nodes().size(), 60u);
  EXPECT_EQ(s.targets.size(), s.grid_nodes().size());
  for (const auto* n : s.grid_nodes()) {
    const auto bg = field.state(n->location, 7);
    for (int v = 0; v < kNumStateVariables; ++v) EXPECT_EQ(n->values[v], bg[v]);
    EXPECT_EQ(s.targets.at(n->id), field.state(n->location, 8));
  }
  for (const auto& n : s.graph.nodes) {
    EXPECT_TRUE(asia().box.contains(n.location));
    EXPECT_NO_THROW(validate_node(n));
    EXPECT_EQ(n.mask, kind_mask(n.kind));
  }
}

TEST(Snapshot, GridAdjacencyMatchesOracle) {
  const auto layout = layout10();
  const auto spec = region_field_spec(FieldSpec{}, asia(), layout);
  std::map<std::string, int> none;
  const auto s = make_snapshot(spec, asia(), layout, none, 1, 1);
  EXPECT_EQ(s.graph.edges, testing::brute_force_edges(s.graph.nodes, kDefaultRadiusKm));
  // 0.45 degrees of longitude at 33-37 N is well inside 50 km; of latitude it is just outside.
  EXPECT_EQ(s.graph.edges.size(), 90u);
}

TEST(Snapshot, NoiselessSondeEqualsTruth) {
  FieldSpec base;
  for (auto& [k, v] : base.noise_std) v = 0.0;
  const auto layout = layout10();
  const auto spec = region_field_spec(base, asia(), layout);
  const auto s = make_snapshot(spec, asia(), layout, {{"SONDE", 30}}, 4, 9);
  const FieldModel field(spec);
  ASSERT_EQ(s.obs_nodes().size(), 30u);
  for (const auto* n : s.obs_nodes()) {
    const auto truth = field.state(n->location, 4);
    for (int v = 0; v < kNumStateVariables; ++v) EXPECT_EQ(n->values[v], truth[v]);
  }
}

TEST(Snapshot, SondeNoiseMeanAbsoluteError) {
  FieldSpec base;
  const double sigma = 0.2;
  base.noise_std[NodeKind::kSonde] = sigma;
  const auto layout = layout10();
  const auto spec = region_field_spec(base, asia(), layout);
  const FieldModel field(spec);
  double sum = 0.0;
  int n = 0;
  for (int t = 1; t <= 10; ++t) {
    const auto s = make_snapshot(spec, asia(), layout, {{"SONDE", 250}}, t, 77);
    for (const auto* node : s.obs_nodes()) {
      const auto truth = field.state(node->location, t);
      for (int v = 0; v < kNumStateVariables; ++v) {
        sum += std::abs(node->values[v] - truth[v]);
        ++n;
      }
    }
  }
  const double expected = sigma * std::sqrt(2.0 / std::numbers::pi);
  const double se = sigma * std::sqrt(1.0 - 2.0 / std::numbers::pi) / std::sqrt(static_cast<double>(n));
  EXPECT_NEAR(sum / n, expected, 3.0 * se);
}

TEST(Dataset, Reproducible) {
  const auto a = testing::small_dataset(8, 3, {"Asia", "Europe"});
  const auto b = testing::small_dataset(8, 3, {"Asia", "Europe"});
  EXPECT_EQ(a.snapshots, b.snapshots);
  EXPECT_EQ(a.norm_stats, b.norm_stats);
  const auto c = testing::small_dataset(8, 4, {"Asia", "Europe"});
  EXPECT_NE(a.snapshots, c.snapshots);
}

TEST(Dataset, SortedWithUniqueIds) {
  const auto ds = testing::small_dataset(6, 3, {"Europe", "Asia"});
  std::set<NodeId> ids;
  for (std::size_t i = 0; i < ds.snapshots.size(); ++i) {
    if (i > 0) EXPECT_LE(ds.snapshots[i - 1].time_index(), ds.snapshots[i].time_index());
    for (const auto& n : ds.snapshots[i].graph.nodes) EXPECT_TRUE(ids.insert(n.id).second);
  }
}

TEST(Dataset, SplitByTime) {
  const auto ds = testing::small_dataset(20);
  EXPECT_EQ(ds.select(Split::kTrain).size(), 14u);
  EXPECT_EQ(ds.select(Split::kValidation).size(), 3u);
  EXPECT_EQ(ds.select(Split::kTest).size(), 3u);
  for (const auto* s : ds.select(Split::kTrain)) EXPECT_LE(s->time_index(), 14);
}

TEST(Dataset, TrainSplitIsStandardized) {
  const auto ds = testing::small_dataset(20);
  ASSERT_TRUE(ds.normalized());
  for (int v = 0; v < kNumVariables; ++v) {
    // Two-pass moments, computed here from the normalized values.
    std::vector<double> xs;
    for (const auto* s : ds.select(Split::kTrain)) {
      for (const auto& n : s->graph.nodes) {
        if (n.mask[v]) xs.push_back(n.values[v]);
      }
    }
    ASSERT_FALSE(xs.empty());
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(xs.size()));
    EXPECT_GT(mean, -1e-9);
    EXPECT_LT(mean, 1e-9);
    EXPECT_GT(sd, 1.0 - 1e-6);
    EXPECT_LT(sd, 1.0 + 1e-6);
  }
}

TEST(Dataset, MasksUnchangedByNormalization) {
  DatasetConfig cfg;
  cfg.snapshots = 4;
  auto raw = generate_dataset(cfg);
  const auto ds = split_and_normalize(raw, 0.5);
  for (std::size_t i = 0; i < raw.snapshots.size(); ++i) {
    for (std::size_t j = 0; j < raw.snapshots[i].graph.nodes.size(); ++j) {
      EXPECT_EQ(raw.snapshots[i].graph.nodes[j].mask, ds.snapshots[i].graph.nodes[j].mask);
    }
  }
}

TEST(Dataset, ConstantFieldIsDegenerate) {
  DatasetConfig cfg;
  cfg.snapshots = 4;
  cfg.field.amplitude_range = {0.0, 0.0};
  for (auto& [k, v] : cfg.field.noise_std) v = 0.0;
  try {
    build_dataset(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateData);
  }
}

TEST(Dataset, SplitPreconditions) {
  DatasetConfig cfg;
  cfg.snapshots = 1;
  EXPECT_THROW(build_dataset(cfg), Error);
  cfg.snapshots = 4;
  EXPECT_THROW(split_and_normalize(generate_dataset(cfg), 1.0), Error);
}

TEST(NormStats, RoundTrip) {
  const auto ds = testing::small_dataset(10);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> x(0.0, 10.0);
  for (int i = 0; i < 1000; ++i) {
    const int v = i % kNumVariables;
    const double value = x(rng);
    EXPECT_NEAR(ds.norm_stats->denormalize(ds.norm_stats->normalize(value, v), v), value, 1e-12);
  }
}

}  // namespace
}  // namespace cloudnine
