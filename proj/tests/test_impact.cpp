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

#include <random>

#include "test_util.hpp"

namespace cloudnine {
namespace {

constexpr StateVector kZeroClim{0, 0, 0, 0};

/// Single-pass (Welford) moments, independent of compute_metrics.
Metrics streaming_metrics(const Matrix& pred, const Matrix& truth, const StateVector& clim) {
  double n = 0, mean_a = 0, mean_b = 0, m2a = 0, m2b = 0, cab = 0, se = 0, ae = 0;
  for (Eigen::Index r = 0; r < pred.rows(); ++r) {
    for (int c = 0; c < 4; ++c) {
      const double a = pred(r, c) - clim[c];
      const double b = truth(r, c) - clim[c];
      n += 1;
      const double da = a - mean_a;
      mean_a += da / n;
      const double db = b - mean_b;
      mean_b += db / n;
      m2a += da * (a - mean_a);
      m2b += db * (b - mean_b);
      cab += da * (b - mean_b);
      se += (a - b) * (a - b);
      ae += std::abs(a - b);
    }
  }
  return {std::sqrt(se / n), ae / n, cab / std::sqrt(m2a * m2b)};
}

TEST(Metrics, PerfectPrediction) {
  const Matrix t = Matrix::Random(20, 4);
  const auto m = compute_metrics(t, t, kZeroClim);
  EXPECT_EQ(m.rmse, 0.0);
  EXPECT_EQ(m.mae, 0.0);
  EXPECT_NEAR(m.acc, 1.0, 1e-15);
}

TEST(Metrics, ConstantOffset) {
  const Matrix t = Matrix::Random(20, 4);
  const Matrix p = t.array() + 0.1;
  const auto m = compute_metrics(p, t, kZeroClim);
  EXPECT_NEAR(m.rmse, 0.1, 1e-12);
  EXPECT_NEAR(m.mae, 0.1, 1e-12);
  EXPECT_NEAR(m.acc, 1.0, 1e-12);
}

TEST(Metrics, MatchesStreamingOracle) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0, 1);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix t(250, 4), p(250, 4);
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      t.data()[i] = g(rng);
      p.data()[i] = 0.7 * t.data()[i] + 0.5 * g(rng);
    }
    const StateVector clim{0.1, -0.2, 0.05, 0.3};
    const auto a = compute_metrics(p, t, clim);
    const auto b = streaming_metrics(p, t, clim);
    EXPECT_NEAR(a.rmse, b.rmse, 1e-10);
    EXPECT_NEAR(a.mae, b.mae, 1e-10);
    EXPECT_NEAR(a.acc, b.acc, 1e-10);
    EXPECT_GE(a.rmse, a.mae);
    EXPECT_GE(a.mae, 0.0);
  }
}

TEST(Metrics, InvariantUnderRowOrder) {
  const Matrix t = Matrix::Random(30, 4);
  const Matrix p = Matrix::Random(30, 4);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(30);
  perm.setIdentity();
  std::mt19937_64 rng(2);
  std::shuffle(perm.indices().data(), perm.indices().data() + 30, rng);
  const auto a = compute_metrics(p, t, kZeroClim);
  const auto b = compute_metrics(perm * p, perm * t, kZeroClim);
  EXPECT_NEAR(a.rmse, b.rmse, 1e-12);
  EXPECT_NEAR(a.mae, b.mae, 1e-12);
  EXPECT_NEAR(a.acc, b.acc, 1e-12);
}

TEST(Metrics, ZeroVarianceIsDegenerate) {
  const Matrix c = Matrix::Constant(5, 4, 0.3);
  try {
    compute_metrics(c, Matrix::Random(5, 4), kZeroClim);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateData);
  }
}

TEST(Occlude, EmptySetIsIdentity) {
  const auto ds = testing::small_dataset(2);
  EXPECT_EQ(occlude(ds.snapshots[0].graph, {}), ds.snapshots[0].graph);
}

TEST(Occlude, ClearsSlotsAndMask) {
  const auto ds = testing::small_dataset(2);
  const auto& g = ds.snapshots[0].graph;
  const MetNode* gpsro = nullptr;
  for (const auto& n : g.nodes) {
    if (n.kind == NodeKind::kGpsro) gpsro = &n;
  }
  ASSERT_NE(gpsro, nullptr);
  ASSERT_NE(gpsro->values[4], 0.0);
  const auto o = occlude(g, {gpsro->id});
  const auto& n = o.node(gpsro->id);
  EXPECT_EQ(n.values[4], 0.0);
  EXPECT_EQ(n.mask, SlotMask{});
  EXPECT_TRUE(n.occluded());
  EXPECT_EQ(o.edges, g.edges);
}

TEST(Occlude, Idempotent) {
  const auto ds = testing::small_dataset(2);
  const auto& g = ds.snapshots[0].graph;
  std::set<NodeId> ids;
  for (const auto* n : ds.snapshots[0].obs_nodes()) {
    if (ids.size() < 4) ids.insert(n->id);
  }
  const auto once = occlude(g, ids);
  EXPECT_EQ(occlude(once, ids), once);
}

TEST(Occlude, Errors) {
  const auto ds = testing::small_dataset(2);
  const auto& s = ds.snapshots[0];
  try {
    occlude(s.graph, {s.grid_nodes().front()->id});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
  }
  try {
    occlude(s.graph, {42});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotFound);
  }
}

TEST(Occlude, AllObservationsEqualsGridOnlyGraph) {
  const auto ds = testing::small_dataset(3);
  const auto m = testing::small_model(4);
  for (const auto& s : ds.snapshots) {
    std::set<NodeId> obs;
    std::vector<MetNode> grid;
    for (const auto& n : s.graph.nodes) {
      if (is_observation(n.kind)) {
        obs.insert(n.id);
      } else {
        grid.push_back(n);
      }
    }
    const auto occluded = predict(m, occlude(s.graph, obs));
    const auto grid_only_graph = build_graph(grid, kDefaultRadiusKm, s.region(), true);
    const auto grid_only = predict(m, grid_only_graph);
    for (const auto& n : grid) {
      const auto a = static_cast<Eigen::Index>(*s.graph.index_of(n.id));
      const auto b = static_cast<Eigen::Index>(*grid_only_graph.index_of(n.id));
      EXPECT_LT((occluded.row(a) - grid_only.row(b)).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Fidelity, OcclusionCount) {
  EXPECT_EQ(occlusion_count(0.2, 0), 0);
  EXPECT_EQ(occlusion_count(0.2, 60), 12);
  EXPECT_EQ(occlusion_count(0.2, 13), 3);
  EXPECT_EQ(occlusion_count(1e-6, 13), 1);
  EXPECT_EQ(occlusion_count(1.0, 13), 13);
}

TEST(Fidelity, RankingBreaksTiesById) {
  const auto ds = testing::small_dataset(2);
  const auto& g = ds.snapshots[0].graph;
  const auto asc = rank_observations(g, {}, false);
  const auto desc = rank_observations(g, {}, true);
  EXPECT_EQ(asc, desc);
  EXPECT_TRUE(std::is_sorted(asc.begin(), asc.end()));
}

TEST(Fidelity, PerGraphMatchesManualOcclusion) {
  const auto ds = testing::small_dataset(4);
  const auto m = testing::small_model(5);
  const auto clim = climatology(ds);
  const auto& s = ds.snapshots[3];
  const auto impacts = impact_by_id(graph_context_impacts(m, s.graph));
  const auto report = fidelity(m, {&s}, {impacts}, 0.2, clim);
  ASSERT_EQ(report.per_graph.size(), 1u);

  std::vector<std::pair<double, NodeId>> ranked;
  for (const auto* n : s.obs_nodes()) ranked.emplace_back(impacts.at(n->id), n->id);
  std::sort(ranked.begin(), ranked.end(), [](auto a, auto b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
  const int k = static_cast<int>(std::ceil(0.2 * static_cast<double>(ranked.size()) - 1e-9));
  std::set<NodeId> top;
  for (int i = 0; i < k; ++i) top.insert(ranked[static_cast<std::size_t>(i)].second);
  const double base = snapshot_metrics(predict(m, s.graph), s, clim).acc;
  const double after = snapshot_metrics(predict(m, occlude(s.graph, top)), s, clim).acc;
  EXPECT_NEAR(report.fi_plus, base - after, 1e-12);
  EXPECT_EQ(report.per_graph[0].occluded, k);
  EXPECT_EQ(report.n_targets, static_cast<int>(s.targets.size()));
}

TEST(Fidelity, GraphsWithoutObservationsSkipped) {
  const auto ds = testing::small_dataset(4);
  const auto m = testing::small_model(6);
  const auto clim = climatology(ds);
  Snapshot bare = ds.snapshots[3];
  std::vector<MetNode> grid;
  for (const auto* n : bare.grid_nodes()) grid.push_back(*n);
  bare.graph = build_graph(grid, kDefaultRadiusKm, bare.region(), true);
  EXPECT_THROW(fidelity(m, {&bare}, 0.2, clim), Error);
  const auto r = fidelity(m, {&bare, &ds.snapshots[2]}, 0.2, clim);
  EXPECT_EQ(r.skipped, 1);
  EXPECT_EQ(r.n_graphs, 1);
  EXPECT_THROW(fidelity(m, {&ds.snapshots[2]}, 0.0, clim), Error);
}

ObservationImpact obs(NodeId id, NodeKind kind, double impact, int contexts, int t = 1, double lat = 35,
                      double lon = 127, std::string region = "Asia") {
  return {id, kind, GeoPoint(lat, lon), t, std::move(region), impact, contexts};
}

TEST(Aggregate, SingleObservation) {
  const auto t = aggregate_impacts(default_regions(), {obs(1, NodeKind::kSonde, 0.7, 1)}, GroupKey::kObservationType);
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0].key, "SONDE");
  EXPECT_EQ(t.rows[0].mean, 0.7);
  EXPECT_EQ(t.rows[0].count, 1);
  const auto w = aggregate_impacts(default_regions(), {obs(1, NodeKind::kSonde, 0.7, 3)}, GroupKey::kObservationType);
  EXPECT_DOUBLE_EQ(w.rows[0].mean, 0.7);
  EXPECT_EQ(w.rows[0].count, 3);
}

TEST(Aggregate, TwoTypes) {
  const auto t = aggregate_impacts(
      default_regions(),
      {obs(1, NodeKind::kGpsro, 0.1, 1), obs(2, NodeKind::kAmv, 0.3, 1), obs(3, NodeKind::kAmv, 0.5, 1)},
      GroupKey::kObservationType);
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0].key, "GPSRO");
  EXPECT_DOUBLE_EQ(t.rows[0].mean, 0.1);
  EXPECT_EQ(t.rows[1].key, "AMV");
  EXPECT_DOUBLE_EQ(t.rows[1].mean, 0.4);
  EXPECT_DOUBLE_EQ(t.rows[1].std, 0.1);
  EXPECT_EQ(t.rows[1].n_obs, 2);
}

TEST(Aggregate, WholeRegionCellIsGlobalMean) {
  const std::vector<ObservationImpact> xs = {obs(1, NodeKind::kSonde, 0.2, 2, 1, 10, 70),
                                             obs(2, NodeKind::kAmv, 0.6, 1, 1, 55, 140)};
  AggregationOptions opts;
  opts.grid_cell_deg = 90.0;
  const auto t = aggregate_impacts(default_regions(), xs, GroupKey::kGridCell, opts);
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_DOUBLE_EQ(t.rows[0].mean, (0.2 * 2 + 0.6) / 3);
}

TEST(Aggregate, TimeWindowLabels) {
  AggregationOptions opts;
  opts.time_window = 10;
  const auto t = aggregate_impacts(default_regions(),
                                   {obs(1, NodeKind::kSonde, 1, 1, 3), obs(2, NodeKind::kSonde, 2, 1, 10),
                                    obs(3, NodeKind::kSonde, 3, 1, 19)},
                                   GroupKey::kTimeWindow, opts);
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0].key, "0-9");
  EXPECT_EQ(t.rows[1].key, "10-19");
  EXPECT_DOUBLE_EQ(t.rows[1].mean, 2.5);
}

TEST(Aggregate, BadInputs) {
  EXPECT_THROW(parse_group_key("station"), Error);
  AggregationOptions opts;
  opts.time_window = 0;
  EXPECT_THROW(aggregate_impacts(default_regions(), {}, GroupKey::kTimeWindow, opts), Error);
}

TEST(Aggregate, GrandMeanIdenticalAcrossKeys) {
  const auto ds = testing::small_dataset(6, 3, {"Asia", "Europe"});
  const auto m = testing::small_model(7);
  std::vector<const MetGraph*> slice;
  for (const auto& s : ds.snapshots) slice.push_back(&s.graph);
  const auto impacts = aggregate_contexts(m, slice);
  long pairs = 0;
  double weighted = 0.0;
  for (const auto& o : impacts) {
    pairs += o.contexts;
    weighted += o.impact * o.contexts;
  }
  AggregationOptions opts;
  opts.time_window = 4;
  opts.grid_cell_deg = 0.5;
  for (auto key : {GroupKey::kObservationType, GroupKey::kRegion, GroupKey::kTimeWindow, GroupKey::kGridCell}) {
    const auto t = aggregate_impacts(ds, impacts, key, opts);
    long count = 0;
    int n_obs = 0;
    for (const auto& r : t.rows) {
      count += r.count;
      n_obs += r.n_obs;
    }
    EXPECT_EQ(count, pairs);
    EXPECT_EQ(n_obs, static_cast<int>(impacts.size()));
    EXPECT_NEAR(t.grand_mean(), weighted / static_cast<double>(pairs), 1e-12);
  }
}

}  // namespace
}  // namespace cloudnine
