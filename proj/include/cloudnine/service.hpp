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

// HTTP/JSON service over a loaded dataset and a frozen model.
//
// Shared state is read-mostly: handlers take a snapshot of the model pointer
// when they start, and a finished training job swaps in a new model in one
// step. Cache keys carry the model hash, so a swap invalidates them.

#pragma once

#include <atomic>
#include <charconv>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "cloudnine/error.hpp"
#include "cloudnine/impact.hpp"
#include "cloudnine/io.hpp"
#include "cloudnine/lrp.hpp"
#include "cloudnine/model.hpp"
#include "cloudnine/synthetic.hpp"

namespace cloudnine::service {

using json = nlohmann::json;
namespace fs = std::filesystem;

struct ServiceConfig {
  std::string data_dir;
  std::string model_path;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string ui_dir;
};

/// Parses "HOST:PORT".
inline void apply_addr(ServiceConfig& cfg, const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) fail(ErrorCode::kInvalidArgument, "address must be HOST:PORT");
  cfg.host = addr.substr(0, colon);
  int port = 0;
  const auto* first = addr.data() + colon + 1;
  const auto* last = addr.data() + addr.size();
  auto [ptr, ec] = std::from_chars(first, last, port);
  if (ec != std::errc() || ptr != last || port < 0 || port > 65535) {
    fail(ErrorCode::kInvalidArgument, "invalid port in address '" + addr + "'");
  }
  cfg.port = port;
}

/// Config file keys: data_dir, model_path, addr, ui_dir.
inline ServiceConfig load_config(const fs::path& path) {
  const json j = io::parse_json(io::read_file(path), path.string());
  return io::guarded("service config", [&] {
    ServiceConfig cfg;
    cfg.data_dir = j.value("data_dir", cfg.data_dir);
    cfg.model_path = j.value("model_path", cfg.model_path);
    cfg.ui_dir = j.value("ui_dir", cfg.ui_dir);
    if (j.contains("addr")) apply_addr(cfg, j.at("addr").get<std::string>());
    return cfg;
  });
}

enum class JobState { kQueued, kRunning, kDone, kFailed };

inline const char* to_string(JobState s) {
  switch (s) {
    case JobState::kQueued: return "queued";
    case JobState::kRunning: return "running";
    case JobState::kDone: return "done";
    case JobState::kFailed: return "failed";
  }
  return "unknown";
}

struct JobStatus {
  int id = 0;
  std::string kind = "train";
  JobState state = JobState::kQueued;
  double progress = 0.0;
  std::string message;

  bool terminal() const { return state == JobState::kDone || state == JobState::kFailed; }
};

inline json to_json(const JobStatus& j) {
  return {{"id", j.id}, {"kind", j.kind}, {"state", to_string(j.state)}, {"progress", j.progress}, {"message", j.message}};
}

struct ApiResponse {
  int status = 200;
  json body;
};

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return 400;
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kConflict: return 409;
    case ErrorCode::kDegenerateData: return 422;
    default: return 500;
  }
}

inline ApiResponse error_response(int status, const std::string& code, const std::string& message) {
  return {status, {{"code", code}, {"message", message}}};
}

struct FrozenModel {
  Model model;
  std::uint64_t hash = 0;
};

/// Dataset, model, caches and the job registry.
class AppState {
 public:
  AppState(std::optional<Dataset> dataset, std::optional<Model> model, std::string model_path = {})
      : model_path_(std::move(model_path)) {
    if (dataset && !dataset->snapshots.empty()) {
      if (!dataset->normalized()) fail(ErrorCode::kInvalidArgument, "service requires a normalized dataset");
      dataset_ = std::make_shared<const Dataset>(std::move(*dataset));
      climatology_ = climatology(*dataset_);
    }
    if (model) set_model(std::move(*model));
  }

  ~AppState() {
    cancel_.store(true);
    std::lock_guard lock(thread_mutex_);
    for (auto& t : threads_) {
      if (t.joinable()) t.join();
    }
  }

  std::shared_ptr<const Dataset> dataset() const { return dataset_; }
  const StateVector& clim() const { return climatology_; }

  std::shared_ptr<const FrozenModel> model() const {
    std::shared_lock lock(model_mutex_);
    return model_;
  }

  void set_model(Model m) {
    auto frozen = std::make_shared<FrozenModel>();
    frozen->hash = model_hash(m);
    frozen->model = std::move(m);
    std::unique_lock lock(model_mutex_);
    model_ = std::move(frozen);
  }

  const std::string& model_path() const { return model_path_; }

  std::optional<std::string> cached_explanation(const std::string& key) const {
    std::lock_guard lock(cache_mutex_);
    auto it = explain_cache_.find(key);
    if (it == explain_cache_.end()) return std::nullopt;
    return it->second;
  }
  void store_explanation(const std::string& key, std::string body) {
    std::lock_guard lock(cache_mutex_);
    explain_cache_.emplace(key, std::move(body));
  }

  /// Context-averaged impacts of one snapshot under `m`, computed once.
  std::vector<ObservationImpact> snapshot_impacts(const FrozenModel& m, const Snapshot& s) {
    const auto key = impact_key(m, s);
    {
      std::lock_guard lock(cache_mutex_);
      auto it = impact_cache_.find(key);
      if (it != impact_cache_.end()) return it->second;
    }
    auto impacts = graph_context_impacts(m.model, s.graph);
    std::lock_guard lock(cache_mutex_);
    return impact_cache_.emplace(key, std::move(impacts)).first->second;
  }

  std::optional<std::vector<ObservationImpact>> cached_snapshot_impacts(const FrozenModel& m, const Snapshot& s) const {
    std::lock_guard lock(cache_mutex_);
    auto it = impact_cache_.find(impact_key(m, s));
    if (it == impact_cache_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<JobStatus> job(int id) const {
    std::lock_guard lock(job_mutex_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) return std::nullopt;
    return it->second;
  }

  /// Starts a background training job; nothing if one is already running.
  std::optional<JobStatus> start_training(const TrainConfig& cfg) {
    bool expected = false;
    if (!training_.compare_exchange_strong(expected, true)) return std::nullopt;
    JobStatus status;
    {
      std::lock_guard lock(job_mutex_);
      status.id = next_job_id_++;
      jobs_[status.id] = status;
    }
    std::lock_guard lock(thread_mutex_);
    threads_.emplace_back([this, cfg, id = status.id] { run_training(id, cfg); });
    return status;
  }

  bool training() const { return training_.load(); }

 private:
  static std::string impact_key(const FrozenModel& m, const Snapshot& s) {
    return std::to_string(m.hash) + "|" + s.region().name + "|" + std::to_string(s.time_index());
  }

  void update_job(int id, JobState state, double progress, const std::string& message) {
    std::lock_guard lock(job_mutex_);
    auto& j = jobs_[id];
    if (j.terminal()) return;
    j.state = state;
    j.progress = progress;
    j.message = message;
  }

  void run_training(int id, TrainConfig cfg) {
    update_job(id, JobState::kRunning, 0.0, "training");
    try {
      const auto initial = Model::init(default_dims(), cfg.seed);
      auto result = train(initial, *dataset_, cfg, [this, id](double fraction, const EpochRecord& rec) {
        if (cancel_.load()) fail(ErrorCode::kConflict, "training cancelled");
        std::ostringstream msg;
        msg << rec.phase << " epoch " << rec.epoch << " loss " << rec.train_loss;
        update_job(id, JobState::kRunning, fraction, msg.str());
      });
      if (!model_path_.empty()) {
        // Write to a sibling file first so a crash never leaves a torn checkpoint.
        const fs::path target(model_path_);
        const fs::path tmp = target.string() + ".tmp";
        io::save_checkpoint({result.model, cfg, dataset_->norm_stats}, tmp);
        fs::rename(tmp, target);
      }
      set_model(std::move(result.model));
      update_job(id, JobState::kDone, 1.0, "model updated");
    } catch (const std::exception& e) {
      update_job(id, JobState::kFailed, 0.0, e.what());
    }
    training_.store(false);
  }

  std::shared_ptr<const Dataset> dataset_;
  StateVector climatology_{};
  std::string model_path_;

  mutable std::shared_mutex model_mutex_;
  std::shared_ptr<const FrozenModel> model_;

  mutable std::mutex cache_mutex_;
  std::map<std::string, std::string> explain_cache_;
  std::map<std::string, std::vector<ObservationImpact>> impact_cache_;

  mutable std::mutex job_mutex_;
  std::map<int, JobStatus> jobs_;
  int next_job_id_ = 1;
  std::atomic<bool> training_{false};
  std::atomic<bool> cancel_{false};

  std::mutex thread_mutex_;
  std::vector<std::thread> threads_;
};

// ---------------------------------------------------------------------------
// Handlers
// ---------------------------------------------------------------------------

using Params = std::multimap<std::string, std::string>;

namespace detail {

inline std::optional<std::string> param(const Params& p, const std::string& key) {
  auto it = p.find(key);
  if (it == p.end() || it->second.empty()) return std::nullopt;
  return it->second;
}

inline double parse_double(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size() || !std::isfinite(v)) throw std::invalid_argument(what);
    return v;
  } catch (const std::exception&) {
    fail(ErrorCode::kInvalidArgument, "invalid number for " + what + ": '" + text + "'");
  }
}

inline long long parse_int(const std::string& text, const std::string& what) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    fail(ErrorCode::kInvalidArgument, "invalid integer for " + what + ": '" + text + "'");
  }
  return v;
}

inline Box parse_bbox(const std::string& text) {
  std::vector<double> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(parse_double(item, "bbox"));
  if (parts.size() != 4) fail(ErrorCode::kInvalidArgument, "bbox must be lat_min,lon_min,lat_max,lon_max");
  Box b{parts[0], parts[2], parts[1], parts[3]};
  if (b.lat_min > b.lat_max || b.lon_min > b.lon_max || b.lat_min < -90 || b.lat_max > 90 || b.lon_min < -180 ||
      b.lon_max > 180) {
    fail(ErrorCode::kInvalidArgument, "bbox bounds are out of order or out of range");
  }
  return b;
}

inline json parse_body(const std::string& body) {
  if (body.empty()) return json::object();
  auto j = io::parse_json(body, "request body");
  if (!j.is_object()) fail(ErrorCode::kInvalidArgument, "request body must be a JSON object");
  return j;
}

}  // namespace detail

class Api {
 public:
  explicit Api(std::shared_ptr<AppState> state) : state_(std::move(state)) {}

  AppState& state() { return *state_; }

  ApiResponse health() const {
    return {200, {{"status", "ok"}, {"dataset", state_->dataset() != nullptr}, {"model", state_->model() != nullptr}}};
  }

  ApiResponse regions() const {
    return guard([&] {
      const auto ds = require_dataset();
      json out = json::array();
      for (const auto& r : dataset_regions(*ds)) {
        int count = 0, t_min = 0, t_max = 0;
        for (const auto& s : ds->snapshots) {
          if (s.region().name != r.name) continue;
          t_min = count == 0 ? s.time_index() : std::min(t_min, s.time_index());
          t_max = count == 0 ? s.time_index() : std::max(t_max, s.time_index());
          ++count;
        }
        json jr = io::to_json(r);
        jr["snapshot_count"] = count;
        jr["time_min"] = t_min;
        jr["time_max"] = t_max;
        out.push_back(jr);
      }
      return ApiResponse{200, {{"regions", out}}};
    });
  }

  ApiResponse graph(const Params& p) const {
    return guard([&] {
      const auto ds = require_dataset();
      const auto& s = require_snapshot(*ds, p);
      json out = {{"graph", io::to_json(s.graph)},
                  {"norm_stats", io::to_json(*ds->norm_stats)},
                  {"split", split_name(ds->split_of(s.time_index()))},
                  {"predictions", nullptr},
                  {"impacts", nullptr}};
      if (const auto m = state_->model()) {
        const Matrix pred = predict(m->model, s.graph);
        json jp = json::object();
        for (std::size_t i = 0; i < s.graph.size(); ++i) {
          if (is_observation(s.graph.nodes[i].kind)) continue;
          const auto r = static_cast<Eigen::Index>(i);
          jp[std::to_string(s.graph.nodes[i].id)] = {pred(r, 0), pred(r, 1), pred(r, 2), pred(r, 3)};
        }
        out["predictions"] = jp;
        if (auto cached = state_->cached_snapshot_impacts(*m, s)) {
          json ji = json::object();
          for (const auto& o : *cached) ji[std::to_string(o.id)] = o.impact;
          out["impacts"] = ji;
        }
      }
      return ApiResponse{200, out};
    });
  }

  ApiResponse context(const Params& p) const {
    return guard([&] {
      const auto ds = require_dataset();
      const auto& s = require_snapshot(*ds, p);
      const auto id_text = detail::param(p, "node_id");
      if (!id_text) fail(ErrorCode::kInvalidArgument, "node_id is required");
      const int hops = static_cast<int>(detail::parse_int(detail::param(p, "hops").value_or("2"), "hops"));
      const auto sub = extract_context(s.graph, detail::parse_int(*id_text, "node_id"), hops);
      json edges = json::array();
      for (const auto& [a, b] : sub.edges) {
        edges.push_back({{"a", a}, {"b", b}, {"km", haversine_km(sub.node(a).location, sub.node(b).location)}});
      }
      return ApiResponse{200, {{"graph", io::to_json(sub)}, {"edges_km", edges}}};
    });
  }

  /// Body: {region, time, node_id, variable, epsilon?}.
  ApiResponse explain(const std::string& body) {
    return guard([&] {
      const json req = detail::parse_body(body);
      const auto ds = require_dataset();
      const auto m = require_model();
      const auto region = io::guarded("explain", [&] { return req.at("region").get<std::string>(); });
      const int time = io::guarded("explain", [&] { return req.at("time").get<int>(); });
      const NodeId node = io::guarded("explain", [&] { return req.at("node_id").get<NodeId>(); });
      const auto var_name = io::guarded("explain", [&] { return req.value("variable", std::string("ALL")); });
      const double epsilon = io::guarded("explain", [&] { return req.value("epsilon", kDefaultLrpEpsilon); });
      const auto variable = parse_target_variable(var_name);
      if (!variable) fail(ErrorCode::kInvalidArgument, "variable must be one of U, V, T, Q, ALL");
      const auto* s = ds->find(region, time);
      if (!s) fail(ErrorCode::kNotFound, "no snapshot for region '" + region + "' at time " + std::to_string(time));

      std::ostringstream key;
      key << m->hash << '|' << region << '|' << time << '|' << node << '|' << var_name << '|' << std::hexfloat
          << epsilon;
      if (auto hit = state_->cached_explanation(key.str())) return ApiResponse{200, json::parse(*hit)};

      const auto fwd = forward(m->model, s->graph);
      const auto rel = lrp_explain(m->model, s->graph, fwd.cache, {node, *variable}, epsilon);
      json out = io::to_json(rel);
      out["region"] = region;
      out["time"] = time;
      state_->store_explanation(key.str(), out.dump());
      return ApiResponse{200, out};
    });
  }

  ApiResponse impacts(const Params& p) {
    return guard([&] {
      const auto ds = require_dataset();
      const auto m = require_model();
      const auto key = parse_group_key(detail::param(p, "group_by").value_or("observation_type"));
      AggregationOptions opts;
      if (auto w = detail::param(p, "time_window")) opts.time_window = static_cast<int>(detail::parse_int(*w, "time_window"));
      if (auto c = detail::param(p, "cell_deg")) opts.grid_cell_deg = detail::parse_double(*c, "cell_deg");
      const auto region = detail::param(p, "region");
      const long long t_from = detail::parse_int(detail::param(p, "time_from").value_or("-1000000000"), "time_from");
      const long long t_to = detail::parse_int(detail::param(p, "time_to").value_or("1000000000"), "time_to");
      std::vector<ObservationImpact> all;
      for (const auto& s : ds->snapshots) {
        if (region && s.region().name != *region) continue;
        if (s.time_index() < t_from || s.time_index() > t_to) continue;
        auto part = state_->snapshot_impacts(*m, s);
        all.insert(all.end(), part.begin(), part.end());
      }
      std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
      json out = io::to_json(aggregate_impacts(*ds, all, key, opts));
      out["observation_count"] = all.size();
      if (detail::param(p, "include_observations") == "1") {
        json obs = json::array();
        for (const auto& o : all) obs.push_back(io::to_json(o));
        out["observations"] = obs;
      }
      return ApiResponse{200, out};
    });
  }

  /// Body: {region?, fraction?, split?}; split is train|validation|test|all.
  ApiResponse fidelity_report(const std::string& body) {
    return guard([&] {
      const json req = detail::parse_body(body);
      const auto ds = require_dataset();
      const auto m = require_model();
      const auto region = io::guarded("fidelity", [&] { return req.value("region", std::string()); });
      const double fraction = io::guarded("fidelity", [&] { return req.value("fraction", 0.2); });
      const auto split = io::guarded("fidelity", [&] { return req.value("split", std::string("test")); });
      if (split != "train" && split != "validation" && split != "test" && split != "all") {
        fail(ErrorCode::kInvalidArgument, "split must be train, validation, test or all");
      }
      if (!region.empty() && !find_region(region, dataset_regions(*ds))) {
        fail(ErrorCode::kNotFound, "region '" + region + "' is not in the dataset");
      }
      std::vector<const Snapshot*> snaps;
      std::vector<std::map<NodeId, double>> impacts;
      for (const auto& s : ds->snapshots) {
        if (!region.empty() && s.region().name != region) continue;
        if (split != "all" && split_name(ds->split_of(s.time_index())) != split) continue;
        snaps.push_back(&s);
        impacts.push_back(impact_by_id(state_->snapshot_impacts(*m, s)));
      }
      if (snaps.empty()) fail(ErrorCode::kNotFound, "no snapshots match the request");
      json out = io::to_json(cloudnine::fidelity(m->model, snaps, impacts, fraction, state_->clim()));
      out["region"] = region;
      out["split"] = split;
      return ApiResponse{200, out};
    });
  }

  /// Body: {region, time, node_ids}. Metrics before and after occluding the
  /// given observations.
  ApiResponse occlusion(const std::string& body) {
    return guard([&] {
      const json req = detail::parse_body(body);
      const auto ds = require_dataset();
      const auto m = require_model();
      const auto region = io::guarded("occlude", [&] { return req.at("region").get<std::string>(); });
      const int time = io::guarded("occlude", [&] { return req.at("time").get<int>(); });
      const auto ids = io::guarded("occlude", [&] { return req.value("node_ids", std::vector<NodeId>{}); });
      const auto* s = ds->find(region, time);
      if (!s) fail(ErrorCode::kNotFound, "no snapshot for region '" + region + "' at time " + std::to_string(time));
      const auto occluded = occlude(s->graph, std::set<NodeId>(ids.begin(), ids.end()));
      const auto before = snapshot_metrics(predict(m->model, s->graph), *s, state_->clim());
      const auto after = snapshot_metrics(predict(m->model, occluded), *s, state_->clim());
      return ApiResponse{200,
                         {{"before", io::to_json(before)},
                          {"after", io::to_json(after)},
                          {"acc_drop", before.acc - after.acc},
                          {"rmse_increase", after.rmse - before.rmse},
                          {"occluded", std::set<NodeId>(ids.begin(), ids.end()).size()}}};
    });
  }

  /// Body: {config?: TrainConfig fields}.
  ApiResponse start_train(const std::string& body) {
    return guard([&] {
      const json req = detail::parse_body(body);
      require_dataset();
      const auto cfg = io::train_config_from_json(req.value("config", json::object()));
      auto job = state_->start_training(cfg);
      if (!job) return error_response(409, "busy", "a training job is already running");
      return ApiResponse{202, to_json(*job)};
    });
  }

  ApiResponse job(const std::string& id_text) const {
    return guard([&] {
      const auto id = detail::parse_int(id_text, "job id");
      auto j = state_->job(static_cast<int>(id));
      if (!j) fail(ErrorCode::kNotFound, "unknown job " + id_text);
      return ApiResponse{200, to_json(*j)};
    });
  }

  ApiResponse search(const Params& p) const {
    return guard([&] {
      const auto ds = require_dataset();
      std::optional<Box> bbox;
      if (auto b = detail::param(p, "bbox")) bbox = detail::parse_bbox(*b);
      std::optional<NodeKind> kind;
      if (auto t = detail::param(p, "type")) {
        kind = parse_node_kind(*t);
        if (!kind || !is_observation(*kind)) fail(ErrorCode::kInvalidArgument, "unknown observation type '" + *t + "'");
      }
      std::optional<long long> time;
      if (auto t = detail::param(p, "time")) time = detail::parse_int(*t, "time");
      const auto region = detail::param(p, "region");
      const auto limit = detail::parse_int(detail::param(p, "limit").value_or("10000"), "limit");
      if (limit < 1) fail(ErrorCode::kInvalidArgument, "limit must be >= 1");

      json results = json::array();
      long long total = 0;
      for (const auto& s : ds->snapshots) {
        if (time && s.time_index() != *time) continue;
        if (region && s.region().name != *region) continue;
        for (const auto& n : s.graph.nodes) {
          if (!is_observation(n.kind)) continue;
          if (kind && n.kind != *kind) continue;
          if (bbox && !bbox->contains(n.location)) continue;
          ++total;
          if (static_cast<long long>(results.size()) >= limit) continue;
          results.push_back({{"id", n.id},
                             {"kind", std::string(to_string(n.kind))},
                             {"lat", n.location.lat},
                             {"lon", n.location.lon},
                             {"time", n.time_index},
                             {"region", s.region().name}});
        }
      }
      return ApiResponse{200, {{"results", results}, {"total", total}, {"truncated", total > limit}}};
    });
  }

  ApiResponse model_info() const {
    return guard([&] {
      const auto m = require_model();
      std::ostringstream hash;
      hash << std::hex << m->hash;
      return ApiResponse{200, {{"dims", m->model.dims()}, {"hash", hash.str()}, {"parameters", m->model.parameter_count()}}};
    });
  }

 private:
  template <typename Fn>
  static ApiResponse guard(Fn&& fn) {
    try {
      return fn();
    } catch (const Unavailable& u) {
      return error_response(409, u.code, u.message);
    } catch (const Error& e) {
      return error_response(http_status(e.code()), to_string(e.code()), e.what());
    } catch (const std::exception& e) {
      return error_response(500, "internal", e.what());
    }
  }

  struct Unavailable {
    std::string code;
    std::string message;
  };

  static std::string split_name(Split s) {
    switch (s) {
      case Split::kTrain: return "train";
      case Split::kValidation: return "validation";
      case Split::kTest: return "test";
    }
    return "";
  }

  std::shared_ptr<const Dataset> require_dataset() const {
    auto ds = state_->dataset();
    if (!ds) throw Unavailable{"no_dataset", "no dataset loaded"};
    return ds;
  }

  std::shared_ptr<const FrozenModel> require_model() const {
    auto m = state_->model();
    if (!m) throw Unavailable{"no_model", "no model loaded; train or load one first"};
    return m;
  }

  static const Snapshot& require_snapshot(const Dataset& ds, const Params& p) {
    const auto region = detail::param(p, "region");
    const auto time = detail::param(p, "time");
    if (!region || !time) fail(ErrorCode::kInvalidArgument, "region and time are required");
    const auto* s = ds.find(*region, static_cast<int>(detail::parse_int(*time, "time")));
    if (!s) fail(ErrorCode::kNotFound, "no snapshot for region '" + *region + "' at time " + *time);
    return *s;
  }

  std::shared_ptr<AppState> state_;
};

// ---------------------------------------------------------------------------
// HTTP binding
// ---------------------------------------------------------------------------

/// Loads whatever the config points at. A missing dataset or model is not
/// fatal; the affected endpoints answer 409 until one is available.
inline std::shared_ptr<AppState> load_state(const ServiceConfig& cfg, std::vector<std::string>* warnings = nullptr) {
  std::optional<Dataset> ds;
  std::optional<Model> model;
  auto warn = [&](const std::string& w) {
    if (warnings) warnings->push_back(w);
  };
  if (!cfg.data_dir.empty()) {
    try {
      ds = io::load_dataset(cfg.data_dir);
    } catch (const Error& e) {
      warn(e.what());
    }
  }
  if (!cfg.model_path.empty() && fs::exists(cfg.model_path)) {
    try {
      model = io::load_checkpoint(cfg.model_path).model;
    } catch (const Error& e) {
      warn(e.what());
    }
  }
  return std::make_shared<AppState>(std::move(ds), std::move(model), cfg.model_path);
}

class Server {
 public:
  Server(std::shared_ptr<AppState> state, const std::string& ui_dir = {}) : api_(std::move(state)) {
    http_.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                               {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                               {"Access-Control-Allow-Headers", "Content-Type"}});
    http_.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    http_.Get("/api/health", [this](const auto&, auto& res) { send(res, api_.health()); });
    http_.Get("/api/regions", [this](const auto&, auto& res) { send(res, api_.regions()); });
    http_.Get("/api/graph", [this](const auto& req, auto& res) { send(res, api_.graph(req.params)); });
    http_.Get("/api/context", [this](const auto& req, auto& res) { send(res, api_.context(req.params)); });
    http_.Post("/api/explain", [this](const auto& req, auto& res) { send(res, api_.explain(req.body)); });
    http_.Get("/api/impacts", [this](const auto& req, auto& res) { send(res, api_.impacts(req.params)); });
    http_.Post("/api/fidelity", [this](const auto& req, auto& res) { send(res, api_.fidelity_report(req.body)); });
    http_.Post("/api/occlude", [this](const auto& req, auto& res) { send(res, api_.occlusion(req.body)); });
    http_.Post("/api/train", [this](const auto& req, auto& res) { send(res, api_.start_train(req.body)); });
    http_.Get(R"(/api/jobs/(\d+))", [this](const auto& req, auto& res) { send(res, api_.job(req.matches[1])); });
    http_.Get("/api/observations/search", [this](const auto& req, auto& res) { send(res, api_.search(req.params)); });
    http_.Get("/api/model", [this](const auto&, auto& res) { send(res, api_.model_info()); });
    if (!ui_dir.empty() && fs::is_directory(ui_dir)) http_.set_mount_point("/", ui_dir);
  }

  Api& api() { return api_; }

  /// Binds to `host:port` (port 0 picks a free one) and returns the port.
  int bind(const std::string& host, int port) {
    const int bound = port == 0 ? http_.bind_to_any_port(host) : (http_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) fail(ErrorCode::kIo, "cannot bind " + host + ":" + std::to_string(port));
    return bound;
  }

  bool listen_after_bind() { return http_.listen_after_bind(); }
  void stop() { http_.stop(); }
  void wait_until_ready() { http_.wait_until_ready(); }

 private:
  static void send(httplib::Response& res, const ApiResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  }

  Api api_;
  httplib::Server http_;
};

}  // namespace cloudnine::service
