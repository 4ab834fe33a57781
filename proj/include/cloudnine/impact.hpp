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

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "cloudnine/error.hpp"
#include "cloudnine/geo.hpp"
#include "cloudnine/lrp.hpp"
#include "cloudnine/model.hpp"
#include "cloudnine/synthetic.hpp"

namespace cloudnine {

// ---------------------------------------------------------------------------
// Prediction metrics
// ---------------------------------------------------------------------------

struct Metrics {
  double rmse = 0.0;
  double mae = 0.0;
  double acc = 0.0;
};

/// Pooled over rows and the four channels. ACC is the Pearson correlation
/// of the anomalies (pred - climatology) and (truth - climatology).
inline Metrics compute_metrics(const Matrix& pred, const Matrix& truth, const StateVector& climatology) {
  if (pred.rows() != truth.rows() || pred.cols() != kPredictionWidth || truth.cols() != kPredictionWidth) {
    fail(ErrorCode::kInvalidArgument, "metric inputs must both be n x 4");
  }
  if (pred.rows() == 0) fail(ErrorCode::kInvalidArgument, "metric inputs are empty");
  const double n = static_cast<double>(pred.size());
  const Matrix diff = pred - truth;
  Metrics out;
  out.rmse = std::sqrt(diff.squaredNorm() / n);
  out.mae = diff.cwiseAbs().sum() / n;

  Matrix a = pred, b = truth;
  for (int c = 0; c < kPredictionWidth; ++c) {
    a.col(c).array() -= climatology[c];
    b.col(c).array() -= climatology[c];
  }
  const double ma = a.mean();
  const double mb = b.mean();
  const auto ca = (a.array() - ma);
  const auto cb = (b.array() - mb);
  const double saa = ca.square().sum();
  const double sbb = cb.square().sum();
  if (!(saa > 0.0) || !(sbb > 0.0)) {
    fail(ErrorCode::kDegenerateData, "anomaly correlation undefined: zero-variance anomalies");
  }
  out.acc = std::clamp((ca * cb).sum() / std::sqrt(saa * sbb), -1.0, 1.0);
  return out;
}

/// Rows of `m` belonging to grid nodes with targets, plus the matching truth.
inline std::pair<Matrix, Matrix> grid_rows(const Matrix& m, const Snapshot& s) {
  const auto targets = make_targets(s);
  Matrix pred(targets.count, kPredictionWidth), truth(targets.count, kPredictionWidth);
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (!targets.present[static_cast<std::size_t>(r)]) continue;
    pred.row(k) = m.row(r);
    truth.row(k) = targets.values.row(r);
    ++k;
  }
  return {pred, truth};
}

inline Metrics snapshot_metrics(const Matrix& predictions, const Snapshot& s, const StateVector& clim) {
  const auto [pred, truth] = grid_rows(predictions, s);
  return compute_metrics(pred, truth, clim);
}

/// Metrics pooled over many snapshots.
inline Metrics pooled_metrics(const Model* m, const std::vector<const Snapshot*>& snaps, const StateVector& clim) {
  Eigen::Index rows = 0;
  for (const auto* s : snaps) rows += static_cast<Eigen::Index>(s->targets.size());
  Matrix pred(rows, kPredictionWidth), truth(rows, kPredictionWidth);
  Eigen::Index k = 0;
  for (const auto* s : snaps) {
    const Matrix p = m ? predict(*m, s->graph) : persistence_predictions(s->graph);
    const auto [gp, gt] = grid_rows(p, *s);
    pred.middleRows(k, gp.rows()) = gp;
    truth.middleRows(k, gt.rows()) = gt;
    k += gp.rows();
  }
  return compute_metrics(pred, truth, clim);
}

// ---------------------------------------------------------------------------
// Occlusion and fidelity
// ---------------------------------------------------------------------------

/// Copy of `g` with the selected observations' value slots zeroed and mask
/// bits cleared. Edges are kept. Grid nodes cannot be occluded.
inline MetGraph occlude(const MetGraph& g, const std::set<NodeId>& node_ids) {
  MetGraph out = g;
  for (const auto id : node_ids) {
    const auto idx = g.index_of(id);
    if (!idx) fail(ErrorCode::kNotFound, "cannot occlude unknown node " + std::to_string(id));
    auto& n = out.nodes[*idx];
    if (!is_observation(n.kind)) {
      fail(ErrorCode::kInvalidArgument, "cannot occlude grid (target) node " + std::to_string(id));
    }
    n.values.fill(0.0);
    n.mask.fill(false);
  }
  return out;
}

struct GraphFidelity {
  std::string region;
  int time_index = 0;
  int n_obs = 0;
  int occluded = 0;
  double acc = 0.0;
  double acc_top = 0.0;
  double acc_bottom = 0.0;
  double rmse = 0.0;
  double rmse_top = 0.0;
  double rmse_bottom = 0.0;
};

struct FidelityReport {
  double fi_plus = 0.0;   // mean ACC drop, most important observations occluded
  double fi_minus = 0.0;  // mean ACC drop, least important observations occluded
  double fi_plus_rmse = 0.0;
  double fi_minus_rmse = 0.0;
  double fraction = 0.2;
  int n_targets = 0;  // grid targets evaluated
  int n_graphs = 0;
  int skipped = 0;
  std::vector<GraphFidelity> per_graph;
};

inline int occlusion_count(double fraction, int n_obs) {
  if (n_obs == 0) return 0;
  return std::clamp(static_cast<int>(std::ceil(fraction * n_obs - 1e-9)), 1, n_obs);
}

/// Observation ids sorted by impact, descending (or ascending), ties broken
/// by ascending id.
inline std::vector<NodeId> rank_observations(const MetGraph& g, const std::map<NodeId, double>& impacts,
                                             bool descending) {
  std::vector<std::pair<double, NodeId>> entries;
  for (const auto& n : g.nodes) {
    if (!is_observation(n.kind) || n.occluded()) continue;
    auto it = impacts.find(n.id);
    entries.emplace_back(it == impacts.end() ? 0.0 : it->second, n.id);
  }
  std::sort(entries.begin(), entries.end(), [descending](const auto& a, const auto& b) {
    if (a.first != b.first) return descending ? a.first > b.first : a.first < b.first;
    return a.second < b.second;
  });
  std::vector<NodeId> out;
  for (const auto& e : entries) out.push_back(e.second);
  return out;
}

/// Occludes the top and bottom `fraction` of observation nodes of every
/// graph, ranked by impact, and reports the mean ACC (and RMSE) change.
/// Graphs without observations are skipped.
inline FidelityReport fidelity(const Model& m, const std::vector<const Snapshot*>& snaps,
                               const std::vector<std::map<NodeId, double>>& impacts, double fraction,
                               const StateVector& clim) {
  if (!(fraction > 0.0 && fraction <= 1.0)) fail(ErrorCode::kInvalidArgument, "fraction must be in (0, 1]");
  if (snaps.size() != impacts.size()) fail(ErrorCode::kInvalidArgument, "one impact map per graph required");
  FidelityReport report;
  report.fraction = fraction;
  for (std::size_t i = 0; i < snaps.size(); ++i) {
    const auto& s = *snaps[i];
    const auto top = rank_observations(s.graph, impacts[i], true);
    const int n_obs = static_cast<int>(top.size());
    const int k = occlusion_count(fraction, n_obs);
    if (k == 0) {
      ++report.skipped;
      continue;
    }
    const auto bottom = rank_observations(s.graph, impacts[i], false);
    const auto base = snapshot_metrics(predict(m, s.graph), s, clim);
    const auto top_g = occlude(s.graph, std::set<NodeId>(top.begin(), top.begin() + k));
    const auto bottom_g = occlude(s.graph, std::set<NodeId>(bottom.begin(), bottom.begin() + k));
    const auto mt = snapshot_metrics(predict(m, top_g), s, clim);
    const auto mb = snapshot_metrics(predict(m, bottom_g), s, clim);
    report.per_graph.push_back({s.region().name, s.time_index(), n_obs, k, base.acc, mt.acc, mb.acc, base.rmse,
                                mt.rmse, mb.rmse});
    report.n_targets += static_cast<int>(s.targets.size());
  }
  if (report.per_graph.empty()) fail(ErrorCode::kInvalidArgument, "no graph with observations to evaluate");
  for (const auto& gf : report.per_graph) {
    report.fi_plus += gf.acc - gf.acc_top;
    report.fi_minus += gf.acc - gf.acc_bottom;
    report.fi_plus_rmse += gf.rmse_top - gf.rmse;
    report.fi_minus_rmse += gf.rmse_bottom - gf.rmse;
  }
  const double n = static_cast<double>(report.per_graph.size());
  report.n_graphs = static_cast<int>(report.per_graph.size());
  report.fi_plus /= n;
  report.fi_minus /= n;
  report.fi_plus_rmse /= n;
  report.fi_minus_rmse /= n;
  return report;
}

/// Fidelity with per-graph impacts computed from context-averaged LRP.
inline FidelityReport fidelity(const Model& m, const std::vector<const Snapshot*>& snaps, double fraction,
                               const StateVector& clim) {
  std::vector<std::map<NodeId, double>> impacts;
  impacts.reserve(snaps.size());
  for (const auto* s : snaps) impacts.push_back(impact_by_id(graph_context_impacts(m, s->graph)));
  return fidelity(m, snaps, impacts, fraction, clim);
}

// ---------------------------------------------------------------------------
// Multi-resolution aggregation
// ---------------------------------------------------------------------------

enum class GroupKey { kObservationType, kRegion, kTimeWindow, kGridCell };

inline std::string_view to_string(GroupKey k) {
  switch (k) {
    case GroupKey::kObservationType: return "observation_type";
    case GroupKey::kRegion: return "region";
    case GroupKey::kTimeWindow: return "time_window";
    case GroupKey::kGridCell: return "grid_cell";
  }
  return "";
}

inline GroupKey parse_group_key(std::string_view name) {
  for (auto k : {GroupKey::kObservationType, GroupKey::kRegion, GroupKey::kTimeWindow, GroupKey::kGridCell}) {
    if (to_string(k) == name) return k;
  }
  fail(ErrorCode::kInvalidArgument, "unknown group key '" + std::string(name) + "'");
}

struct ImpactRow {
  std::string key;
  double mean = 0.0;  // context-weighted mean impact
  long count = 0;     // (observation, context) pairs
  double std = 0.0;   // context-weighted standard deviation
  int n_obs = 0;
};

struct ImpactTable {
  GroupKey group_key = GroupKey::kObservationType;
  std::vector<ImpactRow> rows;

  /// Count-weighted mean over all rows.
  double grand_mean() const {
    double sum = 0.0;
    long count = 0;
    for (const auto& r : rows) {
      sum += r.mean * static_cast<double>(r.count);
      count += r.count;
    }
    return count > 0 ? sum / static_cast<double>(count) : 0.0;
  }
};

struct AggregationOptions {
  int time_window = 10;
  double grid_cell_deg = 1.0;
};

inline ImpactTable aggregate_impacts(const std::vector<Region>& regions, const std::vector<ObservationImpact>& impacts,
                                     GroupKey key, const AggregationOptions& opts = {}) {
  if (opts.time_window < 1) fail(ErrorCode::kInvalidArgument, "time_window must be >= 1");
  if (!(opts.grid_cell_deg > 0.0)) fail(ErrorCode::kInvalidArgument, "grid_cell_deg must be > 0");

  using SortKey = std::tuple<int, long, long, std::string>;
  struct Acc {
    std::string label;
    std::vector<std::pair<double, int>> members;  // (impact, contexts)
  };
  std::map<SortKey, Acc> groups;
  for (const auto& o : impacts) {
    SortKey sk;
    std::string label;
    switch (key) {
      case GroupKey::kObservationType:
        sk = {static_cast<int>(o.kind), 0, 0, ""};
        label = std::string(to_string(o.kind));
        break;
      case GroupKey::kRegion: {
        const int ord = region_ordinal(Region{o.region, {}});
        sk = {ord, 0, 0, o.region};
        label = o.region;
        break;
      }
      case GroupKey::kTimeWindow: {
        const long w = static_cast<long>(std::floor(static_cast<double>(o.time_index) / opts.time_window));
        sk = {0, w, 0, ""};
        label = std::to_string(w * opts.time_window) + "-" + std::to_string((w + 1) * opts.time_window - 1);
        break;
      }
      case GroupKey::kGridCell: {
        const auto region = find_region(o.region, regions);
        const Box box = region ? region->box : Box{-90.0, 90.0, -180.0, 180.0};
        const long n_lat = std::max(1L, static_cast<long>(std::ceil((box.lat_max - box.lat_min) / opts.grid_cell_deg)));
        const long n_lon = std::max(1L, static_cast<long>(std::ceil((box.lon_max - box.lon_min) / opts.grid_cell_deg)));
        const long r = std::clamp(static_cast<long>(std::floor((o.location.lat - box.lat_min) / opts.grid_cell_deg)), 0L, n_lat - 1);
        const long c = std::clamp(static_cast<long>(std::floor((o.location.lon - box.lon_min) / opts.grid_cell_deg)), 0L, n_lon - 1);
        sk = {region_ordinal(Region{o.region, {}}), r, c, o.region};
        label = o.region + ":" + std::to_string(r) + ":" + std::to_string(c);
        break;
      }
    }
    auto& acc = groups[sk];
    acc.label = label;
    acc.members.emplace_back(o.impact, o.contexts);
  }

  ImpactTable table;
  table.group_key = key;
  for (const auto& [sk, acc] : groups) {
    ImpactRow row;
    row.key = acc.label;
    row.n_obs = static_cast<int>(acc.members.size());
    double wsum = 0.0;
    for (const auto& [v, w] : acc.members) {
      row.count += w;
      wsum += v * w;
    }
    if (row.count > 0) {
      row.mean = wsum / static_cast<double>(row.count);
      double var = 0.0;
      for (const auto& [v, w] : acc.members) var += w * (v - row.mean) * (v - row.mean);
      row.std = std::sqrt(var / static_cast<double>(row.count));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline std::vector<Region> dataset_regions(const Dataset& ds) {
  std::vector<Region> out;
  for (const auto& s : ds.snapshots) {
    if (std::none_of(out.begin(), out.end(), [&](const Region& r) { return r.name == s.region().name; })) {
      out.push_back(s.region());
    }
  }
  std::sort(out.begin(), out.end(), [](const Region& a, const Region& b) {
    return std::make_pair(region_ordinal(a), a.name) < std::make_pair(region_ordinal(b), b.name);
  });
  return out;
}

inline ImpactTable aggregate_impacts(const Dataset& ds, const std::vector<ObservationImpact>& impacts, GroupKey key,
                                     const AggregationOptions& opts = {}) {
  return aggregate_impacts(dataset_regions(ds), impacts, key, opts);
}

}  // namespace cloudnine
