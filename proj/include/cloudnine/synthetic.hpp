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

// Synthetic atmospheres: smooth drifting fields, grid backgrounds and noisy
// observations, and the train/validation/test split with z-score
// normalization.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cloudnine/error.hpp"
#include "cloudnine/geo.hpp"

namespace cloudnine {

using StateVector = std::array<double, kNumStateVariables>;

/// Parameters of the synthetic atmosphere. Each of U, V, T, Q is a sum of
/// `n_modes` Gaussian bumps whose centres orbit slowly inside `domain`;
/// BA and TB are fixed functions of T and Q at the same point.
struct FieldSpec {
  std::uint64_t seed = 42;
  int n_modes = 6;
  std::pair<double, double> amplitude_range{0.5, 1.5};
  double length_scale_deg = 2.5;
  double drift_deg_per_step = 1.5;
  std::map<NodeKind, double> noise_std = default_noise();
  Box domain{30.0, 40.0, 120.0, 132.0};

  static std::map<NodeKind, double> default_noise() {
    std::map<NodeKind, double> noise;
    for (int k = 1; k < kNumNodeKinds; ++k) noise[static_cast<NodeKind>(k)] = 0.05;
    noise[NodeKind::kSonde] = 0.03;
    noise[NodeKind::kGpsro] = 0.01;
    return noise;
  }

  void validate() const {
    if (n_modes < 1) fail(ErrorCode::kInvalidArgument, "n_modes must be >= 1");
    if (!(length_scale_deg > 0.0)) fail(ErrorCode::kInvalidArgument, "length_scale_deg must be > 0");
    if (amplitude_range.first > amplitude_range.second || amplitude_range.first < 0.0) {
      fail(ErrorCode::kInvalidArgument, "amplitude_range must satisfy 0 <= lo <= hi");
    }
    if (drift_deg_per_step < 0.0) fail(ErrorCode::kInvalidArgument, "drift must be >= 0");
    for (const auto& [kind, s] : noise_std) {
      if (!(s >= 0.0)) fail(ErrorCode::kInvalidArgument, "noise_std must be >= 0");
    }
    if (!domain.valid()) fail(ErrorCode::kInvalidArgument, "field domain box is invalid");
  }

  friend bool operator==(const FieldSpec&, const FieldSpec&) = default;
};

inline double ba_from_state(double t, double q) { return 0.1 * t + 0.05 * q + 0.2; }
inline double tb_from_state(double t, double q) { return t + 0.3 * q; }

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace detail

struct Bump {
  double lat0 = 0.0;
  double lon0 = 0.0;
  double orbit_radius = 0.0;
  double angular_speed = 0.0;
  double phase = 0.0;
  double amplitude = 0.0;

  std::pair<double, double> centre(int t) const {
    const double a = angular_speed * t + phase;
    return {lat0 + orbit_radius * std::cos(a), lon0 + orbit_radius * std::sin(a)};
  }
};

/// Precomputed bump sets for one FieldSpec.
class FieldModel {
 public:
  explicit FieldModel(const FieldSpec& spec) : spec_(spec) {
    spec_.validate();
    const double sigma = spec_.length_scale_deg;
    for (int v = 0; v < kNumStateVariables; ++v) {
      std::mt19937_64 rng(detail::splitmix64(spec_.seed * 31 + static_cast<std::uint64_t>(v)));
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      auto& bumps = bumps_[v];
      for (int k = 0; k < spec_.n_modes; ++k) {
        Bump b;
        b.lat0 = spec_.domain.lat_min + unit(rng) * (spec_.domain.lat_max - spec_.domain.lat_min);
        b.lon0 = spec_.domain.lon_min + unit(rng) * (spec_.domain.lon_max - spec_.domain.lon_min);
        b.orbit_radius = sigma * (0.5 + unit(rng));
        b.angular_speed = spec_.drift_deg_per_step / b.orbit_radius;
        b.phase = unit(rng) * 2.0 * std::numbers::pi;
        const auto [lo, hi] = spec_.amplitude_range;
        const double magnitude = lo + unit(rng) * (hi - lo);
        b.amplitude = unit(rng) < 0.5 ? -magnitude : magnitude;
        bumps.push_back(b);
      }
    }
  }

  const FieldSpec& spec() const { return spec_; }
  const std::vector<Bump>& bumps(Variable v) const { return bumps_.at(static_cast<int>(v)); }

  double eval(Variable var, const GeoPoint& p, int t) const {
    switch (var) {
      case Variable::kBA: return ba_from_state(eval(Variable::kT, p, t), eval(Variable::kQ, p, t));
      case Variable::kTB: return tb_from_state(eval(Variable::kT, p, t), eval(Variable::kQ, p, t));
      default: break;
    }
    const double inv2s2 = 1.0 / (2.0 * spec_.length_scale_deg * spec_.length_scale_deg);
    double sum = 0.0;
    for (const auto& b : bumps_[static_cast<int>(var)]) {
      const auto [clat, clon] = b.centre(t);
      const double dlat = p.lat - clat;
      const double dlon = p.lon - clon;
      sum += b.amplitude * std::exp(-(dlat * dlat + dlon * dlon) * inv2s2);
    }
    return sum;
  }

  StateVector state(const GeoPoint& p, int t) const {
    return {eval(Variable::kU, p, t), eval(Variable::kV, p, t), eval(Variable::kT, p, t),
            eval(Variable::kQ, p, t)};
  }

  SlotValues all_slots(const GeoPoint& p, int t) const {
    const auto s = state(p, t);
    return {s[0], s[1], s[2], s[3], ba_from_state(s[2], s[3]), tb_from_state(s[2], s[3])};
  }

 private:
  FieldSpec spec_;
  std::array<std::vector<Bump>, kNumStateVariables> bumps_;
};

inline double eval_field(const FieldSpec& spec, Variable var, const GeoPoint& p, int t) {
  return FieldModel(spec).eval(var, p, t);
}

/// Regular lat/lon grid tile placed inside a region.
struct GridLayout {
  double origin_lat = 0.0;
  double origin_lon = 0.0;
  int rows = 12;
  int cols = 12;
  double spacing_deg = 0.45;

  Box extent() const {
    return {origin_lat, origin_lat + (rows - 1) * spacing_deg, origin_lon,
            origin_lon + (cols - 1) * spacing_deg};
  }

  friend bool operator==(const GridLayout&, const GridLayout&) = default;
};

inline GridLayout default_layout(const Region& region) {
  GridLayout layout;
  if (region.name == "Asia") {
    layout.origin_lat = 33.0, layout.origin_lon = 124.0;
  } else if (region.name == "Europe") {
    layout.origin_lat = 45.0, layout.origin_lon = 2.0;
  } else if (region.name == "NorthAmerica") {
    layout.origin_lat = 35.0, layout.origin_lon = -100.0;
  } else if (region.name == "Australia") {
    layout.origin_lat = -35.0, layout.origin_lon = 140.0;
  } else {
    layout.origin_lat = region.box.lat_min, layout.origin_lon = region.box.lon_min;
  }
  return layout;
}

/// Observation counts per source for a desk-scale snapshot of 60 observations.
inline std::map<std::string, int> default_obs_counts() {
  return {{"AIRCRAFT", 12}, {"SONDE", 9}, {"GPSRO", 6}, {"AMV", 5},  {"AMSU-A", 4}, {"AMSR2", 4},
          {"ATMS", 4},      {"CrIS", 4},  {"GK2A", 4},  {"IASI", 4}, {"MHS", 4}};
}

/// Snapshot: grid backgrounds at t-1, observations at t, and the true state
/// at t for every grid node.
struct Snapshot {
  MetGraph graph;
  std::map<NodeId, StateVector> targets;

  const Region& region() const { return graph.region; }
  int time_index() const { return graph.time_index; }

  std::vector<const MetNode*> grid_nodes() const {
    std::vector<const MetNode*> out;
    for (const auto& n : graph.nodes) {
      if (!is_observation(n.kind)) out.push_back(&n);
    }
    return out;
  }
  std::vector<const MetNode*> obs_nodes() const {
    std::vector<const MetNode*> out;
    for (const auto& n : graph.nodes) {
      if (is_observation(n.kind)) out.push_back(&n);
    }
    return out;
  }

  friend bool operator==(const Snapshot&, const Snapshot&) = default;
};

inline int region_ordinal(const Region& region) {
  const auto& regions = default_regions();
  for (std::size_t i = 0; i < regions.size(); ++i) {
    if (regions[i].name == region.name) return static_cast<int>(i);
  }
  return static_cast<int>(regions.size());
}

/// Ids are unique across a multi-region dataset: region, time and local
/// index are packed into one integer.
inline NodeId snapshot_id_base(const Region& region, int t) {
  return (static_cast<NodeId>(region_ordinal(region)) + 1) * 1'000'000'000LL +
         static_cast<NodeId>(t) * 10'000LL;
}

/// Field spec whose bump domain covers `layout` with a margin of one length
/// scale; the seed is mixed with the region so regions are independent.
inline FieldSpec region_field_spec(const FieldSpec& base, const Region& region,
                                   const GridLayout& layout) {
  FieldSpec spec = base;
  const Box ext = layout.extent();
  const double m = base.length_scale_deg;
  spec.domain = {ext.lat_min - m, ext.lat_max + m, ext.lon_min - m, ext.lon_max + m};
  spec.seed = detail::splitmix64(base.seed ^ (static_cast<std::uint64_t>(region_ordinal(region)) << 40));
  return spec;
}

inline Snapshot make_snapshot(const FieldSpec& spec, const Region& region, const GridLayout& layout,
                              const std::map<std::string, int>& obs_counts, int t,
                              std::uint64_t rng_seed) {
  if (!(layout.spacing_deg > 0.0)) fail(ErrorCode::kInvalidArgument, "grid spacing must be > 0");
  if (layout.rows < 1 || layout.cols < 1) fail(ErrorCode::kInvalidArgument, "grid must be non-empty");
  const Box tile = layout.extent();
  if (!region.box.contains(GeoPoint(tile.lat_min, tile.lon_min)) ||
      !region.box.contains(GeoPoint(tile.lat_max, tile.lon_max))) {
    fail(ErrorCode::kInvalidArgument, "grid layout extends outside region " + region.name);
  }
  std::vector<std::pair<NodeKind, int>> counts;
  for (const auto& [name, count] : obs_counts) {
    const auto kind = parse_node_kind(name);
    if (!kind || !is_observation(*kind)) {
      fail(ErrorCode::kInvalidArgument, "unknown observation source '" + name + "'");
    }
    if (count < 0) fail(ErrorCode::kInvalidArgument, "negative observation count for " + name);
    counts.emplace_back(*kind, count);
  }
  std::sort(counts.begin(), counts.end());

  const FieldModel field(spec);
  const NodeId base = snapshot_id_base(region, t);
  Snapshot snap;
  std::vector<MetNode> nodes;
  NodeId local = 0;
  for (int r = 0; r < layout.rows; ++r) {
    for (int c = 0; c < layout.cols; ++c) {
      const GeoPoint p(layout.origin_lat + r * layout.spacing_deg,
                       layout.origin_lon + c * layout.spacing_deg);
      const auto background = field.state(p, t - 1);
      const NodeId id = base + local++;
      nodes.push_back(make_node(id, NodeKind::kGridPoint, p, t,
                                {background[0], background[1], background[2], background[3], 0, 0}));
      snap.targets[id] = field.state(p, t);
    }
  }

  std::mt19937_64 rng(rng_seed ^ static_cast<std::uint64_t>(t));
  std::uniform_real_distribution<double> lat_dist(tile.lat_min, tile.lat_max);
  std::uniform_real_distribution<double> lon_dist(tile.lon_min, tile.lon_max);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (const auto& [kind, count] : counts) {
    const auto it = spec.noise_std.find(kind);
    const double sigma = it == spec.noise_std.end() ? 0.0 : it->second;
    const auto mask = kind_mask(kind);
    for (int i = 0; i < count; ++i) {
      const double lat = lat_dist(rng);
      const double lon = lon_dist(rng);
      const GeoPoint p(lat, lon);
      auto values = field.all_slots(p, t);
      for (int s = 0; s < kNumVariables; ++s) {
        if (mask[s]) values[s] += sigma * gauss(rng);
      }
      nodes.push_back(make_node(base + local++, kind, p, t, values));
    }
  }
  snap.graph = build_graph(std::move(nodes), kDefaultRadiusKm, region, false);
  return snap;
}

// ---------------------------------------------------------------------------
// Dataset and normalization
// ---------------------------------------------------------------------------

struct NormStats {
  std::array<double, kNumVariables> mean{};
  std::array<double, kNumVariables> std{1, 1, 1, 1, 1, 1};

  double normalize(double x, int var) const { return (x - mean[var]) / std[var]; }
  double denormalize(double z, int var) const { return z * std[var] + mean[var]; }

  friend bool operator==(const NormStats&, const NormStats&) = default;
};

enum class Split { kTrain, kValidation, kTest };

struct DatasetConfig {
  FieldSpec field;
  std::vector<std::string> regions{"Asia"};
  int snapshots = 200;
  std::map<std::string, int> obs_counts = default_obs_counts();
  std::map<std::string, GridLayout> layouts;  // per region; defaults if absent
  double train_fraction = 0.7;

  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct Dataset {
  DatasetConfig config;
  std::vector<Snapshot> snapshots;  // sorted by (time_index, region ordinal)
  std::optional<NormStats> norm_stats;
  int train_end_time = 0;  // time < train_end_time is train
  int val_end_time = 0;    // train_end_time <= time < val_end_time is validation

  bool normalized() const { return norm_stats.has_value(); }

  Split split_of(int time_index) const {
    if (time_index < train_end_time) return Split::kTrain;
    if (time_index < val_end_time) return Split::kValidation;
    return Split::kTest;
  }

  std::vector<const Snapshot*> select(Split split) const {
    std::vector<const Snapshot*> out;
    for (const auto& s : snapshots) {
      if (split_of(s.time_index()) == split) out.push_back(&s);
    }
    return out;
  }

  const Snapshot* find(std::string_view region, int time_index) const {
    for (const auto& s : snapshots) {
      if (s.region().name == region && s.time_index() == time_index) return &s;
    }
    return nullptr;
  }
};

inline GridLayout layout_for(const DatasetConfig& cfg, const Region& region) {
  auto it = cfg.layouts.find(region.name);
  return it == cfg.layouts.end() ? default_layout(region) : it->second;
}

/// Generates raw (unnormalized) snapshots for time indices 1..snapshots in
/// every configured region.
inline Dataset generate_dataset(const DatasetConfig& cfg) {
  if (cfg.snapshots < 1) fail(ErrorCode::kInvalidArgument, "snapshot count must be >= 1");
  Dataset ds;
  ds.config = cfg;
  std::vector<Region> regions;
  for (const auto& name : cfg.regions) {
    const auto region = find_region(name);
    if (!region) fail(ErrorCode::kInvalidArgument, "unknown region '" + name + "'");
    regions.push_back(*region);
  }
  for (int t = 1; t <= cfg.snapshots; ++t) {
    for (const auto& region : regions) {
      const auto layout = layout_for(cfg, region);
      const auto spec = region_field_spec(cfg.field, region, layout);
      const std::uint64_t seed =
          detail::splitmix64(cfg.field.seed ^ (static_cast<std::uint64_t>(region_ordinal(region)) << 20));
      ds.snapshots.push_back(make_snapshot(spec, region, layout, cfg.obs_counts, t, seed));
    }
  }
  std::stable_sort(ds.snapshots.begin(), ds.snapshots.end(), [](const Snapshot& a, const Snapshot& b) {
    return std::make_pair(a.time_index(), region_ordinal(a.region())) <
           std::make_pair(b.time_index(), region_ordinal(b.region()));
  });
  return ds;
}

/// Splits by time (earliest `train_fraction` of distinct time indices is
/// train; the remainder is halved into validation then test), computes
/// per-variable z-score statistics on the train split, and normalizes every
/// value slot and target.
inline Dataset split_and_normalize(const Dataset& raw, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    fail(ErrorCode::kInvalidArgument, "train_fraction must be in (0, 1)");
  }
  if (raw.snapshots.size() < 2) fail(ErrorCode::kInvalidArgument, "need at least 2 snapshots to split");
  if (raw.normalized()) fail(ErrorCode::kInvalidArgument, "dataset is already normalized");

  std::set<int> time_set;
  for (const auto& s : raw.snapshots) time_set.insert(s.time_index());
  const std::vector<int> times(time_set.begin(), time_set.end());
  if (times.size() < 2) fail(ErrorCode::kInvalidArgument, "need at least 2 distinct time indices");
  const int n = static_cast<int>(times.size());
  const int n_train = std::clamp(static_cast<int>(std::floor(train_fraction * n)), 1, n - 1);
  const int n_val = (n - n_train) / 2;

  Dataset ds = raw;
  ds.config.train_fraction = train_fraction;
  ds.train_end_time = times[n_train];
  ds.val_end_time = n_train + n_val < n ? times[n_train + n_val] : times.back() + 1;

  std::array<double, kNumVariables> sum{}, sum_sq{};
  std::array<std::size_t, kNumVariables> count{};
  for (const auto& s : ds.snapshots) {
    if (ds.split_of(s.time_index()) != Split::kTrain) continue;
    for (const auto& node : s.graph.nodes) {
      for (int v = 0; v < kNumVariables; ++v) {
        if (!node.mask[v]) continue;
        sum[v] += node.values[v];
        count[v] += 1;
      }
    }
  }
  for (int v = 0; v < kNumVariables; ++v) {
    if (count[v] == 0) continue;
    sum[v] /= static_cast<double>(count[v]);
  }
  for (const auto& s : ds.snapshots) {
    if (ds.split_of(s.time_index()) != Split::kTrain) continue;
    for (const auto& node : s.graph.nodes) {
      for (int v = 0; v < kNumVariables; ++v) {
        if (!node.mask[v]) continue;
        const double d = node.values[v] - sum[v];
        sum_sq[v] += d * d;
      }
    }
  }
  NormStats stats;
  for (int v = 0; v < kNumVariables; ++v) {
    if (count[v] == 0) continue;  // variable never observed: identity transform
    const double sd = std::sqrt(sum_sq[v] / static_cast<double>(count[v]));
    if (!(sd > 0.0)) {
      fail(ErrorCode::kDegenerateData,
           "variable " + std::string(kVariableNames[v]) + " has zero variance on the train split");
    }
    stats.mean[v] = sum[v];
    stats.std[v] = sd;
  }

  for (auto& s : ds.snapshots) {
    for (auto& node : s.graph.nodes) {
      for (int v = 0; v < kNumVariables; ++v) {
        if (node.mask[v]) node.values[v] = stats.normalize(node.values[v], v);
      }
    }
    for (auto& [id, target] : s.targets) {
      for (int v = 0; v < kNumStateVariables; ++v) target[v] = stats.normalize(target[v], v);
    }
    s.graph.normalized = true;
  }
  ds.norm_stats = stats;
  return ds;
}

/// Per-variable mean of the (normalized) train-split targets.
inline StateVector climatology(const Dataset& ds) {
  StateVector mean{};
  std::size_t count = 0;
  for (const auto* s : ds.select(Split::kTrain)) {
    for (const auto& [id, target] : s->targets) {
      for (int v = 0; v < kNumStateVariables; ++v) mean[v] += target[v];
      ++count;
    }
  }
  if (count == 0) return mean;
  for (auto& m : mean) m /= static_cast<double>(count);
  return mean;
}

/// Raw generation followed by split and normalization.
inline Dataset build_dataset(const DatasetConfig& cfg) {
  return split_and_normalize(generate_dataset(cfg), cfg.train_fraction);
}

}  // namespace cloudnine
