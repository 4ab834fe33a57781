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
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cloudnine/error.hpp"

namespace cloudnine {

using NodeId = std::int64_t;

inline constexpr double kEarthRadiusKm = 6371.0088;
inline constexpr double kDefaultRadiusKm = 50.0;
inline constexpr double kDefaultPressureHpa = 500.0;

// ---------------------------------------------------------------------------
// Variables and node kinds
// ---------------------------------------------------------------------------

/// Value slots, in the fixed order used by every feature vector.
enum class Variable : int { kU = 0, kV = 1, kT = 2, kQ = 3, kBA = 4, kTB = 5 };

inline constexpr int kNumVariables = 6;
inline constexpr int kNumStateVariables = 4;  // U, V, T, Q

inline constexpr std::array<std::string_view, kNumVariables> kVariableNames = {
    "U", "V", "T", "Q", "BA", "TB"};

inline std::optional<Variable> parse_variable(std::string_view name) {
  for (int i = 0; i < kNumVariables; ++i) {
    if (kVariableNames[i] == name) return static_cast<Variable>(i);
  }
  return std::nullopt;
}

enum class NodeKind : int {
  kGridPoint = 0,
  kAircraft,
  kGpsro,
  kSonde,
  kAmv,
  kAmsuA,
  kAmsr2,
  kAtms,
  kCris,
  kGk2a,
  kIasi,
  kMhs,
};

inline constexpr int kNumNodeKinds = 12;

inline constexpr std::array<std::string_view, kNumNodeKinds> kNodeKindNames = {
    "GridPoint", "AIRCRAFT", "GPSRO", "SONDE", "AMV",  "AMSU-A",
    "AMSR2",     "ATMS",     "CrIS",  "GK2A",  "IASI", "MHS"};

inline std::string_view to_string(NodeKind kind) {
  return kNodeKindNames[static_cast<int>(kind)];
}

inline std::optional<NodeKind> parse_node_kind(std::string_view name) {
  for (int i = 0; i < kNumNodeKinds; ++i) {
    if (kNodeKindNames[i] == name) return static_cast<NodeKind>(i);
  }
  return std::nullopt;
}

inline bool is_observation(NodeKind kind) { return kind != NodeKind::kGridPoint; }

using SlotMask = std::array<bool, kNumVariables>;
using SlotValues = std::array<double, kNumVariables>;

/// Slots carried by each node kind. Grid points hold the model state.
inline SlotMask kind_mask(NodeKind kind) {
  switch (kind) {
    case NodeKind::kGridPoint: return {true, true, true, true, false, false};
    case NodeKind::kAircraft: return {true, true, true, false, false, false};
    case NodeKind::kGpsro: return {false, false, false, false, true, false};
    case NodeKind::kSonde: return {true, true, true, true, false, false};
    default: return {false, false, false, false, false, true};
  }
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;
  double pressure_level = kDefaultPressureHpa;

  GeoPoint() = default;
  GeoPoint(double lat_deg, double lon_deg, double pressure_hpa = kDefaultPressureHpa)
      : lat(lat_deg), lon(lon_deg), pressure_level(pressure_hpa) {
    if (!(lat >= -90.0 && lat <= 90.0)) {
      fail(ErrorCode::kInvalidArgument, "latitude out of range: " + std::to_string(lat));
    }
    if (!(lon >= -180.0 && lon < 180.0)) {
      fail(ErrorCode::kInvalidArgument, "longitude out of range: " + std::to_string(lon));
    }
    if (!(pressure_level > 0.0)) {
      fail(ErrorCode::kInvalidArgument, "pressure level must be positive");
    }
  }

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

inline double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

/// Great-circle distance on a sphere of radius kEarthRadiusKm. Pressure
/// level is ignored.
inline double haversine_km(const GeoPoint& a, const GeoPoint& b) {
  const double phi1 = deg2rad(a.lat);
  const double phi2 = deg2rad(b.lat);
  const double dphi = phi2 - phi1;
  const double dlambda = deg2rad(b.lon - a.lon);
  const double s1 = std::sin(dphi / 2.0);
  const double s2 = std::sin(dlambda / 2.0);
  const double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

/// Axis-aligned lat/lon box with inclusive bounds.
struct Box {
  double lat_min = 0.0;
  double lat_max = 0.0;
  double lon_min = 0.0;
  double lon_max = 0.0;

  bool contains(const GeoPoint& p) const {
    return p.lat >= lat_min && p.lat <= lat_max && p.lon >= lon_min && p.lon <= lon_max;
  }
  bool valid() const { return lat_min < lat_max && lon_min <= lon_max; }

  friend bool operator==(const Box&, const Box&) = default;
};

inline bool boxes_overlap(const Box& a, const Box& b) {
  return a.lat_min <= b.lat_max && b.lat_min <= a.lat_max && a.lon_min <= b.lon_max &&
         b.lon_min <= a.lon_max;
}

struct Region {
  std::string name;
  Box box;

  friend bool operator==(const Region&, const Region&) = default;
};

inline const std::vector<Region>& default_regions() {
  static const std::vector<Region> regions = {
      {"Asia", {0.0, 60.0, 60.0, 150.0}},
      {"Europe", {35.0, 70.0, -10.0, 40.0}},
      {"NorthAmerica", {15.0, 70.0, -170.0, -50.0}},
      {"Australia", {-45.0, -10.0, 110.0, 155.0}},
  };
  return regions;
}

inline std::optional<Region> find_region(std::string_view name,
                                         std::span<const Region> regions = default_regions()) {
  for (const auto& r : regions) {
    if (r.name == name) return r;
  }
  return std::nullopt;
}

/// Returns the unique box containing `p`, or nothing. Overlapping boxes are
/// rejected because the result would not be unique.
inline std::optional<Region> assign_region(const GeoPoint& p,
                                           std::span<const Region> regions = default_regions()) {
  for (std::size_t i = 0; i < regions.size(); ++i) {
    for (std::size_t j = i + 1; j < regions.size(); ++j) {
      if (boxes_overlap(regions[i].box, regions[j].box)) {
        fail(ErrorCode::kInvalidArgument,
             "regions overlap: " + regions[i].name + " and " + regions[j].name);
      }
    }
  }
  for (const auto& r : regions) {
    if (r.box.contains(p)) return r;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Nodes and graphs
// ---------------------------------------------------------------------------

struct MetNode {
  NodeId id = 0;
  NodeKind kind = NodeKind::kGridPoint;
  GeoPoint location;
  int time_index = 0;
  SlotValues values{};
  SlotMask mask{};

  /// Occluded observations carry an all-false mask.
  bool occluded() const {
    return is_observation(kind) && std::none_of(mask.begin(), mask.end(), [](bool b) { return b; });
  }

  friend bool operator==(const MetNode&, const MetNode&) = default;
};

/// Builds a node whose mask follows its kind; slots outside the mask are zeroed.
inline MetNode make_node(NodeId id, NodeKind kind, const GeoPoint& location, int time_index,
                         const SlotValues& values) {
  MetNode n;
  n.id = id;
  n.kind = kind;
  n.location = location;
  n.time_index = time_index;
  n.mask = kind_mask(kind);
  for (int i = 0; i < kNumVariables; ++i) n.values[i] = n.mask[i] ? values[i] : 0.0;
  return n;
}

inline void validate_node(const MetNode& n) {
  for (int i = 0; i < kNumVariables; ++i) {
    if (!n.mask[i] && n.values[i] != 0.0) {
      fail(ErrorCode::kInvalidArgument,
           "node " + std::to_string(n.id) + ": value present in masked slot " +
               std::string(kVariableNames[i]));
    }
  }
  if (n.mask != kind_mask(n.kind) && !n.occluded()) {
    fail(ErrorCode::kInvalidArgument,
         "node " + std::to_string(n.id) + ": mask does not match kind " +
             std::string(to_string(n.kind)));
  }
}

using Edge = std::pair<NodeId, NodeId>;

struct MetGraph {
  std::vector<MetNode> nodes;  // ascending id
  std::vector<Edge> edges;     // (a, b) with a < b, sorted
  Region region;
  int time_index = 0;
  bool normalized = false;

  std::size_t size() const { return nodes.size(); }

  std::optional<std::size_t> index_of(NodeId id) const {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), id,
                               [](const MetNode& n, NodeId v) { return n.id < v; });
    if (it == nodes.end() || it->id != id) return std::nullopt;
    return static_cast<std::size_t>(it - nodes.begin());
  }

  const MetNode& node(NodeId id) const {
    auto idx = index_of(id);
    if (!idx) fail(ErrorCode::kNotFound, "unknown node id " + std::to_string(id));
    return nodes[*idx];
  }

  friend bool operator==(const MetGraph&, const MetGraph&) = default;
};

/// Neighbor lists by node index, excluding self.
inline std::vector<std::vector<std::size_t>> adjacency_lists(const MetGraph& g) {
  std::vector<std::vector<std::size_t>> adj(g.size());
  for (const auto& [a, b] : g.edges) {
    const auto ia = *g.index_of(a);
    const auto ib = *g.index_of(b);
    adj[ia].push_back(ib);
    adj[ib].push_back(ia);
  }
  for (auto& list : adj) std::sort(list.begin(), list.end());
  return adj;
}

namespace detail {

inline constexpr double kCellDeg = 0.5;
inline constexpr int kLonCells = static_cast<int>(360.0 / kCellDeg);

inline int lat_cell(double lat) { return static_cast<int>(std::floor((lat + 90.0) / kCellDeg)); }
inline int lon_cell(double lon) {
  int c = static_cast<int>(std::floor((lon + 180.0) / kCellDeg));
  return ((c % kLonCells) + kLonCells) % kLonCells;
}
inline std::int64_t cell_key(int lat_c, int lon_c) {
  return static_cast<std::int64_t>(lat_c) * 1000 + lon_c;
}

/// Largest longitude difference (degrees) two points within `radius_km` can
/// have when neither is poleward of `max_abs_lat`. Returns 180 when any
/// longitude is possible.
inline double max_lon_span_deg(double radius_km, double max_abs_lat) {
  if (max_abs_lat >= 90.0) return 180.0;
  const double ratio = std::sin(radius_km / (2.0 * kEarthRadiusKm)) / std::cos(deg2rad(max_abs_lat));
  if (ratio >= 1.0) return 180.0;
  // Small outward margin so rounding never shrinks the window.
  return 2.0 * std::asin(ratio) * 180.0 / std::numbers::pi * (1.0 + 1e-9) + 1e-9;
}

}  // namespace detail

/// Connects every pair of nodes whose great-circle distance is at most
/// `radius_km`. Nodes are bucketed into 0.5 degree cells; the longitude
/// search window widens with latitude so the result matches an exhaustive
/// pairwise scan exactly.
inline MetGraph build_graph(std::vector<MetNode> nodes, double radius_km = kDefaultRadiusKm,
                            Region region = {}, bool normalized = false) {
  if (!(radius_km >= 0.0)) fail(ErrorCode::kInvalidArgument, "radius must be non-negative");
  std::sort(nodes.begin(), nodes.end(), [](const MetNode& a, const MetNode& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    if (nodes[i].id == nodes[i - 1].id) {
      fail(ErrorCode::kInvalidArgument, "duplicate node id " + std::to_string(nodes[i].id));
    }
  }
  int time_index = nodes.empty() ? 0 : nodes.front().time_index;
  for (const auto& n : nodes) {
    validate_node(n);
    if (n.time_index != time_index) {
      fail(ErrorCode::kInvalidArgument, "nodes span more than one time index");
    }
  }

  std::unordered_map<std::int64_t, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& p = nodes[i].location;
    buckets[detail::cell_key(detail::lat_cell(p.lat), detail::lon_cell(p.lon))].push_back(i);
  }

  const double lat_span = radius_km / (kEarthRadiusKm * std::numbers::pi / 180.0);
  const int lat_reach = static_cast<int>(std::ceil(lat_span / detail::kCellDeg));
  const int max_lat_cell = detail::lat_cell(90.0);

  std::vector<Edge> edges;
  std::unordered_set<std::int64_t> visited;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& p = nodes[i].location;
    const int lc = detail::lat_cell(p.lat);
    const double max_abs_lat = std::min(90.0, std::abs(p.lat) + lat_span);
    const double lon_span = detail::max_lon_span_deg(radius_km, max_abs_lat);
    visited.clear();
    for (int la = std::max(0, lc - lat_reach); la <= std::min(max_lat_cell, lc + lat_reach); ++la) {
      std::vector<int> lon_cells;
      if (lon_span >= 180.0 - detail::kCellDeg) {
        for (int c = 0; c < detail::kLonCells; ++c) lon_cells.push_back(c);
      } else {
        const int lo = static_cast<int>(std::floor((p.lon - lon_span + 180.0) / detail::kCellDeg));
        const int hi = static_cast<int>(std::floor((p.lon + lon_span + 180.0) / detail::kCellDeg));
        for (int c = lo; c <= hi; ++c) {
          lon_cells.push_back(((c % detail::kLonCells) + detail::kLonCells) % detail::kLonCells);
        }
      }
      for (int lo_c : lon_cells) {
        const auto key = detail::cell_key(la, lo_c);
        if (!visited.insert(key).second) continue;
        auto it = buckets.find(key);
        if (it == buckets.end()) continue;
        for (std::size_t j : it->second) {
          if (j <= i) continue;
          if (haversine_km(p, nodes[j].location) <= radius_km) {
            edges.emplace_back(nodes[i].id, nodes[j].id);
          }
        }
      }
    }
  }
  std::sort(edges.begin(), edges.end());

  MetGraph g;
  g.nodes = std::move(nodes);
  g.edges = std::move(edges);
  g.region = std::move(region);
  g.time_index = time_index;
  g.normalized = normalized;
  return g;
}

/// Node indices within `hops` edges of `target`, ascending.
inline std::vector<std::size_t> context_indices(const MetGraph& g,
                                                const std::vector<std::vector<std::size_t>>& adj,
                                                std::size_t target, int hops) {
  std::vector<int> depth(g.size(), -1);
  std::deque<std::size_t> queue{target};
  depth[target] = 0;
  std::vector<std::size_t> out{target};
  while (!queue.empty()) {
    const auto u = queue.front();
    queue.pop_front();
    if (depth[u] >= hops) continue;
    for (auto v : adj[u]) {
      if (depth[v] >= 0) continue;
      depth[v] = depth[u] + 1;
      out.push_back(v);
      queue.push_back(v);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Induced subgraph on the nodes within `hops` edges of `target_id`.
inline MetGraph extract_context(const MetGraph& g, NodeId target_id, int hops) {
  if (hops < 1) fail(ErrorCode::kInvalidArgument, "hops must be >= 1");
  const auto target = g.index_of(target_id);
  if (!target) fail(ErrorCode::kNotFound, "unknown target id " + std::to_string(target_id));
  const auto adj = adjacency_lists(g);
  const auto keep = context_indices(g, adj, *target, hops);

  MetGraph sub;
  sub.region = g.region;
  sub.time_index = g.time_index;
  sub.normalized = g.normalized;
  std::unordered_set<NodeId> ids;
  for (auto i : keep) {
    sub.nodes.push_back(g.nodes[i]);
    ids.insert(g.nodes[i].id);
  }
  for (const auto& e : g.edges) {
    if (ids.count(e.first) && ids.count(e.second)) sub.edges.push_back(e);
  }
  return sub;
}

}  // namespace cloudnine
