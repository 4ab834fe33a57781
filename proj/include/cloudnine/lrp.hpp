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

// Epsilon-rule relevance propagation through a cached GCN forward pass.
//
// Relevance starts at the prediction head output of one grid node and is
// redistributed stage by stage in proportion to the forward contributions
//   z_(i,f)->(j,g) = Â_ji * H_if * W_fg
// divided by the stabilized pre-activation z_jg + eps * sign(z_jg). Bias
// shares are dropped. Only rows reachable from the target are touched, so
// the cost of one explanation scales with the size of its context.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cloudnine/error.hpp"
#include "cloudnine/geo.hpp"
#include "cloudnine/model.hpp"

namespace cloudnine {

inline constexpr double kDefaultLrpEpsilon = 1e-6;

/// Explained output channel(s): one of U, V, T, Q, or their sum.
enum class TargetVariable : int { kU = 0, kV = 1, kT = 2, kQ = 3, kAll = 4 };

inline std::string_view to_string(TargetVariable v) {
  static constexpr std::array<std::string_view, 5> names = {"U", "V", "T", "Q", "ALL"};
  return names[static_cast<int>(v)];
}

inline std::optional<TargetVariable> parse_target_variable(std::string_view name) {
  static constexpr std::array<std::string_view, 5> names = {"U", "V", "T", "Q", "ALL"};
  for (int i = 0; i < 5; ++i) {
    if (names[i] == name) return static_cast<TargetVariable>(i);
  }
  return std::nullopt;
}

struct ExplainTarget {
  NodeId node_id = 0;
  TargetVariable variable = TargetVariable::kAll;
};

struct RelevanceMap {
  ExplainTarget target;
  std::vector<NodeId> node_ids;  // row order
  Matrix rel;                    // n x 24
  double epsilon = kDefaultLrpEpsilon;
  double target_value = 0.0;     // explained output
};

struct NodeImportance {
  std::vector<NodeId> node_ids;
  std::vector<double> signed_importance;
  std::vector<double> abs_importance;
};

namespace detail {

inline double stabilize(double z, double eps) { return z + (z >= 0.0 ? eps : -eps); }

}  // namespace detail

inline RelevanceMap lrp_explain(const Model& m, const MetGraph& g, const ActivationCache& cache,
                                const ExplainTarget& target, double epsilon = kDefaultLrpEpsilon) {
  if (!(epsilon > 0.0)) fail(ErrorCode::kInvalidArgument, "epsilon must be > 0");
  if (cache.graph_hash != graph_hash(g) || cache.input.rows() != static_cast<Eigen::Index>(g.size())) {
    fail(ErrorCode::kStaleCache, "activation cache does not belong to this graph");
  }
  if (static_cast<int>(cache.pre.size()) != m.layer_count()) {
    fail(ErrorCode::kStaleCache, "activation cache layer count does not match the model");
  }
  const auto t_idx = g.index_of(target.node_id);
  if (!t_idx) fail(ErrorCode::kNotFound, "unknown target node " + std::to_string(target.node_id));
  if (g.nodes[*t_idx].kind != NodeKind::kGridPoint) {
    fail(ErrorCode::kInvalidArgument, "explain target " + std::to_string(target.node_id) + " is not a grid node");
  }
  const auto t = static_cast<Eigen::Index>(*t_idx);
  const SparseMatrix& adj = cache.adjacency.matrix;

  // Head stage. z at the head output equals the prediction itself.
  const Matrix& h_last = cache.last_hidden();
  const RowVector z_head = m.regress_head.apply(h_last.row(t));
  RowVector s_head = RowVector::Zero(kPredictionWidth);
  double target_value = 0.0;
  for (int c = 0; c < kPredictionWidth; ++c) {
    if (target.variable != TargetVariable::kAll && static_cast<int>(target.variable) != c) continue;
    target_value += z_head(c);
    s_head(c) = z_head(c) / detail::stabilize(z_head(c), epsilon);
  }

  // Relevance on the current hidden layer, restricted to `rows`.
  std::vector<Eigen::Index> rows{t};
  Matrix r_rows = h_last.row(t).cwiseProduct(s_head * m.regress_head.weight.transpose());

  for (int l = m.layer_count() - 1; l >= 0; --l) {
    const auto ul = static_cast<std::size_t>(l);
    const Matrix& z = cache.pre[ul];
    const Dense& layer = m.gcn[ul];
    // s_jg = R_jg / stab(z_jg); ReLU passes relevance only through active units.
    Matrix s(static_cast<Eigen::Index>(rows.size()), layer.out_dim());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto j = rows[k];
      for (Eigen::Index gc = 0; gc < layer.out_dim(); ++gc) {
        const double zj = z(j, gc);
        s(static_cast<Eigen::Index>(k), gc) = zj > 0.0 ? r_rows(static_cast<Eigen::Index>(k), gc) / detail::stabilize(zj, epsilon) : 0.0;
      }
    }
    const Matrix back = s * layer.weight.transpose();  // |rows| x d_in

    // Scatter through Â: C_i = Σ_j Â_ji back_j.
    std::map<Eigen::Index, RowVector> spread;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto j = rows[k];
      for (SparseMatrix::InnerIterator it(adj, j); it; ++it) {
        auto [pos, inserted] = spread.try_emplace(it.col(), RowVector::Zero(layer.in_dim()));
        pos->second += it.value() * back.row(static_cast<Eigen::Index>(k));
      }
    }
    const Matrix& h_in = cache.hidden(l);
    std::vector<Eigen::Index> next_rows;
    Matrix next(static_cast<Eigen::Index>(spread.size()), layer.in_dim());
    Eigen::Index k = 0;
    for (const auto& [i, c] : spread) {
      next_rows.push_back(i);
      next.row(k++) = h_in.row(i).cwiseProduct(c);
    }
    rows = std::move(next_rows);
    r_rows = std::move(next);
  }

  RelevanceMap out;
  out.target = target;
  out.epsilon = epsilon;
  out.target_value = target_value;
  out.rel = Matrix::Zero(static_cast<Eigen::Index>(g.size()), cache.input.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.rel.row(rows[k]) = r_rows.row(static_cast<Eigen::Index>(k));
  out.node_ids.reserve(g.size());
  for (const auto& n : g.nodes) out.node_ids.push_back(n.id);
  return out;
}

/// |Σ relevance − explained output| / |explained output|; absolute when the
/// output is zero.
inline double conservation_residual(const RelevanceMap& r) {
  const double diff = std::abs(r.rel.sum() - r.target_value);
  return r.target_value != 0.0 ? diff / std::abs(r.target_value) : diff;
}

inline NodeImportance node_importance(const RelevanceMap& r) {
  NodeImportance out;
  out.node_ids = r.node_ids;
  out.signed_importance.resize(r.node_ids.size());
  out.abs_importance.resize(r.node_ids.size());
  for (Eigen::Index i = 0; i < r.rel.rows(); ++i) {
    out.signed_importance[static_cast<std::size_t>(i)] = r.rel.row(i).sum();
    out.abs_importance[static_cast<std::size_t>(i)] = r.rel.row(i).cwiseAbs().sum();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Context aggregation
// ---------------------------------------------------------------------------

/// Context-averaged impact of one observation.
struct ObservationImpact {
  NodeId id = 0;
  NodeKind kind = NodeKind::kAircraft;
  GeoPoint location;
  int time_index = 0;
  std::string region;
  double impact = 0.0;  // mean abs importance over contexts; 0 when none
  int contexts = 0;
};

using ObsSelector = std::function<bool(const MetNode&)>;

inline bool all_observations(const MetNode& n) { return is_observation(n.kind); }

/// Explains every grid node of `g` (variable ALL) and averages each selected
/// observation's abs importance over the grid-target contexts (within
/// `layer_count` hops) that contain it.
inline std::vector<ObservationImpact> graph_context_impacts(const Model& m, const MetGraph& g,
                                                            const ObsSelector& selector = all_observations,
                                                            double epsilon = kDefaultLrpEpsilon) {
  const auto fwd = forward(m, g);
  const auto adj = adjacency_lists(g);
  std::vector<double> sum(g.size(), 0.0);
  std::vector<int> count(g.size(), 0);
  for (std::size_t t = 0; t < g.size(); ++t) {
    if (g.nodes[t].kind != NodeKind::kGridPoint) continue;
    const auto rel = lrp_explain(m, g, fwd.cache, {g.nodes[t].id, TargetVariable::kAll}, epsilon);
    const auto imp = node_importance(rel);
    for (auto i : context_indices(g, adj, t, m.layer_count())) {
      if (!is_observation(g.nodes[i].kind)) continue;
      sum[i] += imp.abs_importance[i];
      count[i] += 1;
    }
  }
  std::vector<ObservationImpact> out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& n = g.nodes[i];
    if (!is_observation(n.kind) || !selector(n)) continue;
    out.push_back({n.id, n.kind, n.location, n.time_index, g.region.name,
                   count[i] > 0 ? sum[i] / count[i] : 0.0, count[i]});
  }
  return out;
}

/// Context-averaged impacts over a slice of graphs, ascending by id.
inline std::vector<ObservationImpact> aggregate_contexts(const Model& m, const std::vector<const MetGraph*>& slice,
                                                         const ObsSelector& selector = all_observations,
                                                         double epsilon = kDefaultLrpEpsilon) {
  if (slice.empty()) fail(ErrorCode::kInvalidArgument, "empty graph slice");
  std::map<NodeId, ObservationImpact> merged;
  for (const auto* g : slice) {
    for (auto& o : graph_context_impacts(m, *g, selector, epsilon)) {
      auto [it, inserted] = merged.try_emplace(o.id, o);
      if (inserted) continue;
      // Same observation seen in another graph: pool the contexts.
      auto& acc = it->second;
      const int total = acc.contexts + o.contexts;
      acc.impact = total > 0 ? (acc.impact * acc.contexts + o.impact * o.contexts) / total : 0.0;
      acc.contexts = total;
    }
  }
  std::vector<ObservationImpact> out;
  out.reserve(merged.size());
  for (auto& [id, o] : merged) out.push_back(std::move(o));
  return out;
}

inline std::map<NodeId, double> impact_by_id(const std::vector<ObservationImpact>& impacts) {
  std::map<NodeId, double> out;
  for (const auto& o : impacts) out[o.id] = o.impact;
  return out;
}

}  // namespace cloudnine
