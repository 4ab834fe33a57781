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

#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <vector>

#include "cloudnine/cloudnine.hpp"

namespace cloudnine::testing {

/// Spherical law of cosines, coded independently of the library.
inline double cosine_law_km(double lat1, double lon1, double lat2, double lon2) {
  const double k = std::numbers::pi / 180.0;
  const double c = std::sin(lat1 * k) * std::sin(lat2 * k) +
                   std::cos(lat1 * k) * std::cos(lat2 * k) * std::cos((lon2 - lon1) * k);
  return 6371.0088 * std::acos(std::clamp(c, -1.0, 1.0));
}

/// Random observation and grid nodes in a box, consecutive ids from `first_id`.
inline std::vector<MetNode> random_nodes(std::mt19937_64& rng, int n, const Box& box, NodeId first_id = 1) {
  std::uniform_real_distribution<double> lat(box.lat_min, box.lat_max);
  std::uniform_real_distribution<double> lon(box.lon_min, box.lon_max);
  std::uniform_int_distribution<int> kind(0, kNumNodeKinds - 1);
  std::normal_distribution<double> val(0.0, 1.0);
  std::vector<MetNode> out;
  for (int i = 0; i < n; ++i) {
    SlotValues v{};
    for (auto& x : v) x = val(rng);
    out.push_back(make_node(first_id + i, static_cast<NodeKind>(kind(rng)), GeoPoint(lat(rng), lon(rng)), 0, v));
  }
  return out;
}

/// Exhaustive pairwise edge list.
inline std::vector<Edge> brute_force_edges(const std::vector<MetNode>& nodes, double radius_km) {
  std::vector<Edge> out;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      if (nodes[i].id >= nodes[j].id) continue;
      if (cosine_law_km(nodes[i].location.lat, nodes[i].location.lon, nodes[j].location.lat,
                        nodes[j].location.lon) <= radius_km + 1e-6 &&
          haversine_km(nodes[i].location, nodes[j].location) <= radius_km) {
        out.emplace_back(nodes[i].id, nodes[j].id);
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Node ids within `hops` of `target`, by repeated frontier expansion over
/// the raw edge list.
inline std::set<NodeId> frontier_oracle(const MetGraph& g, NodeId target, int hops) {
  std::set<NodeId> seen{target};
  std::set<NodeId> frontier{target};
  for (int h = 0; h < hops; ++h) {
    std::set<NodeId> next;
    for (const auto& [a, b] : g.edges) {
      if (frontier.count(a) && !seen.count(b)) next.insert(b);
      if (frontier.count(b) && !seen.count(a)) next.insert(a);
    }
    seen.insert(next.begin(), next.end());
    frontier = std::move(next);
  }
  return seen;
}

/// Small normalized dataset for fast tests.
inline Dataset small_dataset(int snapshots = 12, std::uint64_t seed = 7,
                             std::vector<std::string> regions = {"Asia"}) {
  DatasetConfig cfg;
  cfg.snapshots = snapshots;
  cfg.field.seed = seed;
  cfg.regions = std::move(regions);
  for (const auto& r : cfg.regions) {
    auto layout = default_layout(*find_region(r));
    layout.rows = 5;
    layout.cols = 5;
    cfg.layouts[r] = layout;
  }
  cfg.obs_counts = {{"AIRCRAFT", 4}, {"SONDE", 3}, {"GPSRO", 2}, {"AMV", 2}, {"IASI", 2}};
  return build_dataset(cfg);
}

/// Random model with the given widths.
inline Model small_model(std::uint64_t seed, std::vector<int> dims = {kFeatureWidth, 8, 8}) {
  return Model::init(dims, seed);
}

}  // namespace cloudnine::testing

namespace cloudnine::testing {

/// Dataset of snapshots with a 3x3 grid and nine observations each.
inline Dataset tiny_dataset(int snapshots = 6, std::uint64_t seed = 5) {
  DatasetConfig cfg;
  cfg.snapshots = snapshots;
  cfg.field.seed = seed;
  auto layout = default_layout(*find_region("Asia"));
  layout.rows = 3;
  layout.cols = 3;
  cfg.layouts["Asia"] = layout;
  cfg.obs_counts = {{"AIRCRAFT", 3}, {"SONDE", 2}, {"GPSRO", 2}, {"IASI", 2}};
  return build_dataset(cfg);
}

/// Dense, loop-based forward pass used as an independent oracle.
inline std::pair<Matrix, Matrix> naive_forward(const Model& m, const MetGraph& g) {
  const auto n = g.size();
  std::vector<double> deg(n, 1.0);
  std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0));
  auto active = [&](std::size_t i) { return !g.nodes[i].occluded(); };
  for (const auto& [x, y] : g.edges) {
    const auto i = *g.index_of(x), j = *g.index_of(y);
    if (!active(i) || !active(j)) continue;
    a[i][j] = a[j][i] = 1.0;
    deg[i] += 1.0;
    deg[j] += 1.0;
  }
  for (std::size_t i = 0; i < n; ++i) a[i][i] = 1.0;
  std::vector<std::vector<double>> h(n, std::vector<double>(kFeatureWidth, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& node = g.nodes[i];
    h[i][static_cast<std::size_t>(node.kind)] = 1.0;
    for (int v = 0; v < kNumVariables; ++v) {
      if (node.mask[v]) {
        h[i][kNumNodeKinds + v] = node.values[v];
        h[i][kNumNodeKinds + kNumVariables + v] = 1.0;
      }
    }
  }
  for (const auto& layer : m.gcn) {
    const auto din = static_cast<std::size_t>(layer.in_dim()), dout = static_cast<std::size_t>(layer.out_dim());
    std::vector<std::vector<double>> next(n, std::vector<double>(dout, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t o = 0; o < dout; ++o) {
        double z = layer.bias(static_cast<Eigen::Index>(o));
        for (std::size_t j = 0; j < n; ++j) {
          if (a[i][j] == 0.0) continue;
          const double w = a[i][j] / std::sqrt(deg[i] * deg[j]);
          for (std::size_t f = 0; f < din; ++f) {
            z += w * h[j][f] * layer.weight(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(o));
          }
        }
        next[i][o] = z > 0.0 ? z : 0.0;
      }
    }
    h = std::move(next);
  }
  auto head = [&](const Dense& d) {
    Matrix out(static_cast<Eigen::Index>(n), d.out_dim());
    for (std::size_t i = 0; i < n; ++i) {
      for (Eigen::Index o = 0; o < d.out_dim(); ++o) {
        double z = d.bias(o);
        for (Eigen::Index f = 0; f < d.in_dim(); ++f) z += h[i][static_cast<std::size_t>(f)] * d.weight(f, o);
        out(static_cast<Eigen::Index>(i), o) = z;
      }
    }
    return out;
  };
  return {head(m.regress_head), head(m.recon_head)};
}

}  // namespace cloudnine::testing
