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

// JSON and CSV formats: graphs, dataset directories, model checkpoints,
// explanations and reports. Objects are emitted with sorted keys, and
// doubles are written in shortest round-trip decimal form, so files are
// byte-stable and reload bit-exactly.

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cloudnine/error.hpp"
#include "cloudnine/geo.hpp"
#include "cloudnine/impact.hpp"
#include "cloudnine/lrp.hpp"
#include "cloudnine/model.hpp"
#include "cloudnine/synthetic.hpp"

namespace cloudnine::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kFormatVersion = 1;

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kNotFound, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out << content;
  if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidArgument, what + ": malformed JSON: " + e.what());
  }
}

/// Runs `fn`, turning JSON type/key errors into kInvalidArgument.
template <typename Fn>
auto guarded(const std::string& what, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidArgument, what + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Geometry and graphs
// ---------------------------------------------------------------------------

inline json to_json(const Box& b) {
  return {{"lat_min", b.lat_min}, {"lat_max", b.lat_max}, {"lon_min", b.lon_min}, {"lon_max", b.lon_max}};
}

inline Box box_from_json(const json& j) {
  return {j.at("lat_min").get<double>(), j.at("lat_max").get<double>(), j.at("lon_min").get<double>(),
          j.at("lon_max").get<double>()};
}

inline json to_json(const Region& r) {
  json j = to_json(r.box);
  j["name"] = r.name;
  return j;
}

inline Region region_from_json(const json& j) { return {j.at("name").get<std::string>(), box_from_json(j)}; }

inline json to_json(const MetNode& n) {
  json values = json::array(), mask = json::array();
  for (int v = 0; v < kNumVariables; ++v) {
    values.push_back(n.values[v]);
    mask.push_back(n.mask[v]);
  }
  return {{"id", n.id},
          {"kind", std::string(to_string(n.kind))},
          {"lat", n.location.lat},
          {"lon", n.location.lon},
          {"pressure", n.location.pressure_level},
          {"time", n.time_index},
          {"values", values},
          {"mask", mask}};
}

inline MetNode node_from_json(const json& j) {
  MetNode n;
  n.id = j.at("id").get<NodeId>();
  const auto kind = parse_node_kind(j.at("kind").get<std::string>());
  if (!kind) fail(ErrorCode::kInvalidArgument, "unknown node kind " + j.at("kind").dump());
  n.kind = *kind;
  n.location = GeoPoint(j.at("lat").get<double>(), j.at("lon").get<double>(), j.at("pressure").get<double>());
  n.time_index = j.at("time").get<int>();
  const auto& values = j.at("values");
  const auto& mask = j.at("mask");
  if (values.size() != kNumVariables || mask.size() != kNumVariables) {
    fail(ErrorCode::kInvalidArgument, "node values/mask must have 6 entries");
  }
  for (int v = 0; v < kNumVariables; ++v) {
    n.values[v] = values[v].get<double>();
    n.mask[v] = mask[v].get<bool>();
  }
  validate_node(n);
  return n;
}

inline json to_json(const MetGraph& g) {
  json nodes = json::array(), edges = json::array();
  for (const auto& n : g.nodes) nodes.push_back(to_json(n));
  for (const auto& [a, b] : g.edges) edges.push_back(json::array({a, b}));
  return {{"nodes", nodes},
          {"edges", edges},
          {"region", to_json(g.region)},
          {"time_index", g.time_index},
          {"normalized", g.normalized}};
}

inline MetGraph graph_from_json(const json& j) {
  return guarded("graph", [&] {
    MetGraph g;
    for (const auto& jn : j.at("nodes")) g.nodes.push_back(node_from_json(jn));
    std::sort(g.nodes.begin(), g.nodes.end(), [](const MetNode& a, const MetNode& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < g.nodes.size(); ++i) {
      if (g.nodes[i].id == g.nodes[i - 1].id) fail(ErrorCode::kInvalidArgument, "duplicate node id in graph");
    }
    for (const auto& je : j.at("edges")) {
      Edge e{je.at(0).get<NodeId>(), je.at(1).get<NodeId>()};
      if (!(e.first < e.second) || !g.index_of(e.first) || !g.index_of(e.second)) {
        fail(ErrorCode::kInvalidArgument, "invalid edge " + je.dump());
      }
      g.edges.push_back(e);
    }
    std::sort(g.edges.begin(), g.edges.end());
    g.region = region_from_json(j.at("region"));
    g.time_index = j.at("time_index").get<int>();
    g.normalized = j.value("normalized", false);
    return g;
  });
}

inline json to_json(const Snapshot& s) {
  json j = to_json(s.graph);
  json targets = json::object();
  for (const auto& [id, t] : s.targets) targets[std::to_string(id)] = json::array({t[0], t[1], t[2], t[3]});
  j["targets"] = targets;
  return j;
}

inline Snapshot snapshot_from_json(const json& j) {
  return guarded("snapshot", [&] {
    Snapshot s;
    s.graph = graph_from_json(j);
    for (const auto& [key, value] : j.at("targets").items()) {
      const NodeId id = std::stoll(key);
      if (!s.graph.index_of(id)) fail(ErrorCode::kInvalidArgument, "target for unknown node " + key);
      StateVector t{};
      for (int v = 0; v < kNumStateVariables; ++v) t[v] = value.at(v).get<double>();
      s.targets[id] = t;
    }
    return s;
  });
}

// ---------------------------------------------------------------------------
// Dataset directory
// ---------------------------------------------------------------------------

inline json to_json(const FieldSpec& f) {
  json noise = json::object();
  for (const auto& [kind, s] : f.noise_std) noise[std::string(to_string(kind))] = s;
  return {{"seed", f.seed},
          {"n_modes", f.n_modes},
          {"amplitude_range", json::array({f.amplitude_range.first, f.amplitude_range.second})},
          {"length_scale_deg", f.length_scale_deg},
          {"drift_deg_per_step", f.drift_deg_per_step},
          {"noise_std", noise},
          {"domain", to_json(f.domain)}};
}

inline FieldSpec field_spec_from_json(const json& j) {
  FieldSpec f;
  f.seed = j.at("seed").get<std::uint64_t>();
  f.n_modes = j.at("n_modes").get<int>();
  f.amplitude_range = {j.at("amplitude_range").at(0).get<double>(), j.at("amplitude_range").at(1).get<double>()};
  f.length_scale_deg = j.at("length_scale_deg").get<double>();
  f.drift_deg_per_step = j.at("drift_deg_per_step").get<double>();
  f.noise_std.clear();
  for (const auto& [name, s] : j.at("noise_std").items()) {
    const auto kind = parse_node_kind(name);
    if (!kind) fail(ErrorCode::kInvalidArgument, "unknown source in noise_std: " + name);
    f.noise_std[*kind] = s.get<double>();
  }
  f.domain = box_from_json(j.at("domain"));
  return f;
}

inline json to_json(const GridLayout& l) {
  return {{"origin_lat", l.origin_lat}, {"origin_lon", l.origin_lon}, {"rows", l.rows}, {"cols", l.cols},
          {"spacing_deg", l.spacing_deg}};
}

inline GridLayout layout_from_json(const json& j) {
  return {j.at("origin_lat").get<double>(), j.at("origin_lon").get<double>(), j.at("rows").get<int>(),
          j.at("cols").get<int>(), j.at("spacing_deg").get<double>()};
}

inline json to_json(const DatasetConfig& c) {
  json layouts = json::object();
  for (const auto& [name, l] : c.layouts) layouts[name] = to_json(l);
  return {{"field", to_json(c.field)},         {"regions", c.regions},       {"snapshots", c.snapshots},
          {"obs_counts", c.obs_counts},        {"layouts", layouts},         {"train_fraction", c.train_fraction}};
}

inline DatasetConfig dataset_config_from_json(const json& j) {
  DatasetConfig c;
  c.field = field_spec_from_json(j.at("field"));
  c.regions = j.at("regions").get<std::vector<std::string>>();
  c.snapshots = j.at("snapshots").get<int>();
  c.obs_counts = j.at("obs_counts").get<std::map<std::string, int>>();
  for (const auto& [name, l] : j.at("layouts").items()) c.layouts[name] = layout_from_json(l);
  c.train_fraction = j.at("train_fraction").get<double>();
  return c;
}

inline json to_json(const NormStats& s) {
  json mean = json::array(), sd = json::array();
  for (int v = 0; v < kNumVariables; ++v) {
    mean.push_back(s.mean[v]);
    sd.push_back(s.std[v]);
  }
  return {{"variables", json::array({"U", "V", "T", "Q", "BA", "TB"})}, {"mean", mean}, {"std", sd}};
}

inline NormStats norm_stats_from_json(const json& j) {
  NormStats s;
  for (int v = 0; v < kNumVariables; ++v) {
    s.mean[v] = j.at("mean").at(v).get<double>();
    s.std[v] = j.at("std").at(v).get<double>();
    if (!(s.std[v] > 0.0)) fail(ErrorCode::kInvalidArgument, "norm_stats std must be > 0");
  }
  return s;
}

inline std::string snapshot_file_name(const Snapshot& s) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%05d", s.time_index());
  return "graphs/" + s.region().name + "_" + buf + ".json";
}

inline std::string dump(const json& j) { return j.dump(); }

/// Writes `meta.json` and one graph file per snapshot under `dir`.
inline void save_dataset(const Dataset& ds, const fs::path& dir) {
  json files = json::array();
  for (const auto& s : ds.snapshots) {
    const auto name = snapshot_file_name(s);
    write_file(dir / name, dump(to_json(s)));
    files.push_back({{"region", s.region().name}, {"time_index", s.time_index()}, {"file", name}});
  }
  json meta = {{"format", "cloudnine-dataset"},
               {"version", kFormatVersion},
               {"config", to_json(ds.config)},
               {"normalized", ds.normalized()},
               {"norm_stats", ds.norm_stats ? to_json(*ds.norm_stats) : json(nullptr)},
               {"split",
                {{"train_fraction", ds.config.train_fraction},
                 {"train_end_time", ds.train_end_time},
                 {"val_end_time", ds.val_end_time}}},
               {"snapshots", files}};
  write_file(dir / "meta.json", meta.dump(2));
}

inline Dataset load_dataset(const fs::path& dir) {
  const auto meta_path = dir / "meta.json";
  if (!fs::exists(meta_path)) fail(ErrorCode::kNotFound, "no dataset at " + dir.string() + " (meta.json missing)");
  const json meta = parse_json(read_file(meta_path), meta_path.string());
  return guarded("dataset meta", [&] {
    if (meta.at("format") != "cloudnine-dataset") fail(ErrorCode::kInvalidArgument, "not a dataset meta file");
    Dataset ds;
    ds.config = dataset_config_from_json(meta.at("config"));
    if (!meta.at("norm_stats").is_null()) ds.norm_stats = norm_stats_from_json(meta.at("norm_stats"));
    ds.train_end_time = meta.at("split").at("train_end_time").get<int>();
    ds.val_end_time = meta.at("split").at("val_end_time").get<int>();
    for (const auto& entry : meta.at("snapshots")) {
      const auto path = dir / entry.at("file").get<std::string>();
      auto s = snapshot_from_json(parse_json(read_file(path), path.string()));
      if (s.graph.normalized != ds.normalized()) {
        fail(ErrorCode::kInvalidArgument, path.string() + ": normalization flag disagrees with meta.json");
      }
      ds.snapshots.push_back(std::move(s));
    }
    std::stable_sort(ds.snapshots.begin(), ds.snapshots.end(), [](const Snapshot& a, const Snapshot& b) {
      return std::make_pair(a.time_index(), region_ordinal(a.region())) <
             std::make_pair(b.time_index(), region_ordinal(b.region()));
    });
    return ds;
  });
}

// ---------------------------------------------------------------------------
// Model checkpoint
// ---------------------------------------------------------------------------

inline json to_json(const Dense& d) {
  json w = json::array(), b = json::array();
  for (Eigen::Index r = 0; r < d.weight.rows(); ++r) {
    for (Eigen::Index c = 0; c < d.weight.cols(); ++c) w.push_back(d.weight(r, c));
  }
  for (Eigen::Index c = 0; c < d.bias.size(); ++c) b.push_back(d.bias(c));
  return {{"rows", d.weight.rows()}, {"cols", d.weight.cols()}, {"weight", w}, {"bias", b}};
}

inline Dense dense_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& w = j.at("weight");
  const auto& b = j.at("bias");
  if (static_cast<Eigen::Index>(w.size()) != rows * cols || static_cast<Eigen::Index>(b.size()) != cols) {
    fail(ErrorCode::kInvalidArgument, "checkpoint layer shape does not match its arrays");
  }
  Dense d = Dense::zeros(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) d.weight(r, c) = w[static_cast<std::size_t>(r * cols + c)].get<double>();
  }
  for (Eigen::Index c = 0; c < cols; ++c) d.bias(c) = b[static_cast<std::size_t>(c)].get<double>();
  return d;
}

inline json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"epochs_pretrain", c.epochs_pretrain},
          {"epochs_finetune", c.epochs_finetune},
          {"lambda_recon", c.lambda_recon},
          {"seed", c.seed},
          {"grad_clip", c.grad_clip}};
}

/// Missing keys keep their defaults, so partial configs are accepted.
inline TrainConfig train_config_from_json(const json& j) {
  return guarded("train config", [&] {
    TrainConfig c;
    if (!j.is_object()) fail(ErrorCode::kInvalidArgument, "train config must be an object");
    c.lr = j.value("lr", c.lr);
    c.epochs_pretrain = j.value("epochs_pretrain", c.epochs_pretrain);
    c.epochs_finetune = j.value("epochs_finetune", c.epochs_finetune);
    c.lambda_recon = j.value("lambda_recon", c.lambda_recon);
    c.seed = j.value("seed", c.seed);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.validate();
    return c;
  });
}

struct Checkpoint {
  Model model;
  TrainConfig config;
  std::optional<NormStats> norm_stats;
};

inline json to_json(const Checkpoint& ck) {
  json layers = json::array();
  for (const auto& l : ck.model.gcn) layers.push_back(to_json(l));
  return {{"format", "cloudnine-gcn"},
          {"version", kFormatVersion},
          {"number_encoding", "json-decimal-roundtrip"},
          {"dims", ck.model.dims()},
          {"layers", layers},
          {"regress_head", to_json(ck.model.regress_head)},
          {"recon_head", to_json(ck.model.recon_head)},
          {"train_config", to_json(ck.config)},
          {"norm_stats", ck.norm_stats ? to_json(*ck.norm_stats) : json(nullptr)}};
}

inline Checkpoint checkpoint_from_json(const json& j) {
  return guarded("checkpoint", [&] {
    if (j.at("format") != "cloudnine-gcn") fail(ErrorCode::kInvalidArgument, "not a model checkpoint");
    Checkpoint ck;
    for (const auto& l : j.at("layers")) ck.model.gcn.push_back(dense_from_json(l));
    ck.model.regress_head = dense_from_json(j.at("regress_head"));
    ck.model.recon_head = dense_from_json(j.at("recon_head"));
    ck.model.validate();
    if (ck.model.dims() != j.at("dims").get<std::vector<int>>()) {
      fail(ErrorCode::kInvalidArgument, "checkpoint dims disagree with layer shapes");
    }
    ck.config = train_config_from_json(j.at("train_config"));
    if (!j.at("norm_stats").is_null()) ck.norm_stats = norm_stats_from_json(j.at("norm_stats"));
    return ck;
  });
}

inline void save_checkpoint(const Checkpoint& ck, const fs::path& path) { write_file(path, dump(to_json(ck))); }

inline Checkpoint load_checkpoint(const fs::path& path) {
  return checkpoint_from_json(parse_json(read_file(path), path.string()));
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline json to_json(const RelevanceMap& r) {
  const auto imp = node_importance(r);
  json nodes = json::array();
  for (std::size_t i = 0; i < imp.node_ids.size(); ++i) {
    nodes.push_back({{"id", imp.node_ids[i]}, {"signed", imp.signed_importance[i]}, {"abs", imp.abs_importance[i]}});
  }
  return {{"target", {{"node_id", r.target.node_id}, {"variable", std::string(to_string(r.target.variable))}}},
          {"epsilon", r.epsilon},
          {"target_value", r.target_value},
          {"conservation_residual", conservation_residual(r)},
          {"nodes", nodes}};
}

inline json to_json(const Metrics& m) { return {{"rmse", m.rmse}, {"mae", m.mae}, {"acc", m.acc}}; }

inline json to_json(const FidelityReport& f) {
  json per_graph = json::array();
  for (const auto& g : f.per_graph) {
    per_graph.push_back({{"region", g.region},
                         {"time_index", g.time_index},
                         {"n_obs", g.n_obs},
                         {"occluded", g.occluded},
                         {"acc", g.acc},
                         {"acc_top", g.acc_top},
                         {"acc_bottom", g.acc_bottom},
                         {"rmse", g.rmse},
                         {"rmse_top", g.rmse_top},
                         {"rmse_bottom", g.rmse_bottom}});
  }
  return {{"fi_plus", f.fi_plus},
          {"fi_minus", f.fi_minus},
          {"fi_plus_rmse", f.fi_plus_rmse},
          {"fi_minus_rmse", f.fi_minus_rmse},
          {"fraction", f.fraction},
          {"n_targets", f.n_targets},
          {"n_graphs", f.n_graphs},
          {"skipped", f.skipped},
          {"per_graph", per_graph}};
}

inline json to_json(const ImpactTable& t) {
  json rows = json::array();
  for (const auto& r : t.rows) {
    rows.push_back({{"key", r.key}, {"mean", r.mean}, {"count", r.count}, {"std", r.std}, {"n_obs", r.n_obs}});
  }
  return {{"group_by", std::string(to_string(t.group_key))}, {"rows", rows}};
}

/// CSV with header `key,mean,count,std,n_obs`.
inline std::string to_csv(const ImpactTable& t) {
  std::ostringstream out;
  out << "key,mean,count,std,n_obs\n";
  out << std::setprecision(17);
  for (const auto& r : t.rows) out << r.key << ',' << r.mean << ',' << r.count << ',' << r.std << ',' << r.n_obs << '\n';
  return out.str();
}

inline json to_json(const std::vector<EpochRecord>& history) {
  json out = json::array();
  for (const auto& h : history) {
    out.push_back({{"phase", h.phase}, {"epoch", h.epoch}, {"train_loss", h.train_loss},
                   {"val_loss", std::isfinite(h.val_loss) ? json(h.val_loss) : json(nullptr)}});
  }
  return out;
}

inline json to_json(const ObservationImpact& o) {
  return {{"id", o.id},         {"kind", std::string(to_string(o.kind))}, {"lat", o.location.lat},
          {"lon", o.location.lon}, {"time", o.time_index},                  {"region", o.region},
          {"impact", o.impact}, {"contexts", o.contexts}};
}

}  // namespace cloudnine::io
