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

// Command-line front end: dataset generation, training, evaluation,
// explanation, impact tables, fidelity and the HTTP service.

#include <csignal>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cloudnine/cloudnine.hpp"

namespace {

using namespace cloudnine;
using json = nlohmann::json;

void emit(const std::string& text, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << text << "\n";
  } else {
    io::write_file(out, text + "\n");
  }
}

std::optional<Split> parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "validation") return Split::kValidation;
  if (name == "test") return Split::kTest;
  if (name == "all") return std::nullopt;
  fail(ErrorCode::kInvalidArgument, "split must be train, validation, test or all");
}

std::vector<const Snapshot*> select(const Dataset& ds, const std::string& split, const std::string& region) {
  const auto s = parse_split(split);
  std::vector<const Snapshot*> out;
  for (const auto& snap : ds.snapshots) {
    if (s && ds.split_of(snap.time_index()) != *s) continue;
    if (!region.empty() && snap.region().name != region) continue;
    out.push_back(&snap);
  }
  if (out.empty()) fail(ErrorCode::kNotFound, "no snapshots match split '" + split + "'" +
                                                  (region.empty() ? "" : " and region '" + region + "'"));
  return out;
}

service::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph-network observation impact toolkit"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset directory");
  std::vector<std::string> gen_regions{"all"};
  int gen_snapshots = 200;
  std::uint64_t gen_seed = 42;
  std::string gen_out;
  double gen_train_fraction = 0.7;
  double gen_drift = FieldSpec{}.drift_deg_per_step;
  gen->add_option("--region", gen_regions, "Region names, or 'all'")->delimiter(',');
  gen->add_option("--snapshots", gen_snapshots, "Time steps per region")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "Field and observation seed");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--train-fraction", gen_train_fraction, "Fraction of time steps used for training");
  gen->add_option("--drift", gen_drift, "Feature drift in degrees per step");

  // train
  auto* tr = app.add_subcommand("train", "Train a model on a dataset directory");
  std::string tr_data, tr_out, tr_config, tr_history;
  TrainConfig tr_cfg;
  tr->add_option("--data", tr_data, "Dataset directory")->required();
  tr->add_option("--out", tr_out, "Checkpoint path")->required();
  tr->add_option("--config", tr_config, "Training config JSON (flags override)");
  tr->add_option("--seed", tr_cfg.seed, "Initialization and shuffle seed");
  tr->add_option("--epochs-pretrain", tr_cfg.epochs_pretrain, "Reconstruction-only epochs");
  tr->add_option("--epochs-finetune", tr_cfg.epochs_finetune, "Joint-loss epochs");
  tr->add_option("--lr", tr_cfg.lr, "Adam learning rate");
  tr->add_option("--lambda", tr_cfg.lambda_recon, "Reconstruction loss weight");
  tr->add_option("--grad-clip", tr_cfg.grad_clip, "Global gradient norm clip");
  tr->add_option("--history", tr_history, "Write per-epoch losses as JSON");
  bool tr_quiet = false;
  tr->add_flag("--quiet", tr_quiet, "Suppress progress output");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Prediction metrics of a model against persistence");
  std::string ev_data, ev_model, ev_split = "test", ev_region, ev_out;
  ev->add_option("--data", ev_data, "Dataset directory")->required();
  ev->add_option("--model", ev_model, "Checkpoint path")->required();
  ev->add_option("--split", ev_split, "train, validation, test or all");
  ev->add_option("--region", ev_region, "Restrict to one region");
  ev->add_option("--out", ev_out, "Output file (default stdout)");

  // explain
  auto* ex = app.add_subcommand("explain", "Relevance map for one grid node");
  std::string ex_data, ex_model, ex_region, ex_variable = "ALL", ex_out;
  int ex_time = 0;
  NodeId ex_node = 0;
  double ex_eps = kDefaultLrpEpsilon;
  ex->add_option("--data", ex_data, "Dataset directory")->required();
  ex->add_option("--model", ex_model, "Checkpoint path")->required();
  ex->add_option("--region", ex_region, "Region name")->required();
  ex->add_option("--time", ex_time, "Time index")->required();
  ex->add_option("--node", ex_node, "Grid node id")->required();
  ex->add_option("--variable", ex_variable, "U, V, T, Q or ALL");
  ex->add_option("--epsilon", ex_eps, "Stabilizer");
  ex->add_option("--out", ex_out, "Output file (default stdout)");

  // impacts
  auto* im = app.add_subcommand("impacts", "Aggregated observation impacts as CSV");
  std::string im_data, im_model, im_group = "observation_type", im_region, im_out, im_format = "csv";
  int im_from = std::numeric_limits<int>::min(), im_to = std::numeric_limits<int>::max();
  AggregationOptions im_opts;
  im->add_option("--data", im_data, "Dataset directory")->required();
  im->add_option("--model", im_model, "Checkpoint path")->required();
  im->add_option("--group-by", im_group, "observation_type, region, time_window or grid_cell");
  im->add_option("--time-from", im_from, "First time index (inclusive)");
  im->add_option("--time-to", im_to, "Last time index (inclusive)");
  im->add_option("--region", im_region, "Restrict to one region");
  im->add_option("--time-window", im_opts.time_window, "Steps per time window");
  im->add_option("--cell-deg", im_opts.grid_cell_deg, "Grid cell size in degrees");
  im->add_option("--format", im_format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  im->add_option("--out", im_out, "Output file (default stdout)");

  // fidelity
  auto* fi = app.add_subcommand("fidelity", "Occlusion fidelity report as JSON");
  std::string fi_data, fi_model, fi_split = "test", fi_region, fi_out;
  double fi_fraction = 0.2;
  fi->add_option("--data", fi_data, "Dataset directory")->required();
  fi->add_option("--model", fi_model, "Checkpoint path")->required();
  fi->add_option("--fraction", fi_fraction, "Fraction of observations occluded");
  fi->add_option("--split", fi_split, "train, validation, test or all");
  fi->add_option("--region", fi_region, "Restrict to one region");
  fi->add_option("--out", fi_out, "Output file (default stdout)");

  // serve
  auto* sv = app.add_subcommand("serve", "Run the HTTP service");
  std::string sv_config, sv_data, sv_model, sv_addr, sv_ui;
  sv->add_option("--config", sv_config, "Service config JSON");
  sv->add_option("--data", sv_data, "Dataset directory");
  sv->add_option("--model", sv_model, "Checkpoint path (written by training jobs)");
  sv->add_option("--addr", sv_addr, "HOST:PORT");
  sv->add_option("--ui", sv_ui, "Directory with the built UI bundle");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      DatasetConfig cfg;
      cfg.snapshots = gen_snapshots;
      cfg.field.seed = gen_seed;
      cfg.field.drift_deg_per_step = gen_drift;
      cfg.train_fraction = gen_train_fraction;
      cfg.regions.clear();
      for (const auto& r : gen_regions) {
        if (r == "all") {
          for (const auto& d : default_regions()) cfg.regions.push_back(d.name);
        } else {
          cfg.regions.push_back(r);
        }
      }
      const auto ds = build_dataset(cfg);
      io::save_dataset(ds, gen_out);
      std::cerr << "wrote " << ds.snapshots.size() << " snapshots to " << gen_out << "\n";
    } else if (*tr) {
      const auto ds = io::load_dataset(tr_data);
      TrainConfig cfg = tr_cfg;
      if (!tr_config.empty()) {
        cfg = io::train_config_from_json(io::parse_json(io::read_file(tr_config), tr_config));
        for (const auto* opt : tr->get_options()) {
          if (opt->count() == 0) continue;
          const auto& name = opt->get_name();
          if (name == "--seed") cfg.seed = tr_cfg.seed;
          if (name == "--epochs-pretrain") cfg.epochs_pretrain = tr_cfg.epochs_pretrain;
          if (name == "--epochs-finetune") cfg.epochs_finetune = tr_cfg.epochs_finetune;
          if (name == "--lr") cfg.lr = tr_cfg.lr;
          if (name == "--lambda") cfg.lambda_recon = tr_cfg.lambda_recon;
          if (name == "--grad-clip") cfg.grad_clip = tr_cfg.grad_clip;
        }
      }
      const auto result = train(Model::init(default_dims(), cfg.seed), ds, cfg,
                                [&](double, const EpochRecord& r) {
                                  if (tr_quiet || (r.epoch + 1) % 10 != 0) return;
                                  std::cerr << r.phase << " epoch " << r.epoch + 1 << " train " << r.train_loss
                                            << " val " << r.val_loss << "\n";
                                });
      io::save_checkpoint({result.model, cfg, ds.norm_stats}, tr_out);
      if (!tr_history.empty()) io::write_file(tr_history, io::to_json(result.history).dump(2) + "\n");
      const auto test = ds.select(Split::kTest);
      if (!test.empty()) {
        const auto clim = climatology(ds);
        json summary = {{"model", io::to_json(pooled_metrics(&result.model, test, clim))},
                        {"persistence", io::to_json(pooled_metrics(nullptr, test, clim))}};
        std::cout << summary.dump(2) << "\n";
      }
    } else if (*ev) {
      const auto ds = io::load_dataset(ev_data);
      const auto model = io::load_checkpoint(ev_model).model;
      const auto snaps = select(ds, ev_split, ev_region);
      const auto clim = climatology(ds);
      json out = {{"split", ev_split},
                  {"snapshots", snaps.size()},
                  {"model", io::to_json(pooled_metrics(&model, snaps, clim))},
                  {"persistence", io::to_json(pooled_metrics(nullptr, snaps, clim))}};
      emit(out.dump(2), ev_out);
    } else if (*ex) {
      const auto ds = io::load_dataset(ex_data);
      const auto model = io::load_checkpoint(ex_model).model;
      const auto variable = parse_target_variable(ex_variable);
      if (!variable) fail(ErrorCode::kInvalidArgument, "variable must be one of U, V, T, Q, ALL");
      const auto* s = ds.find(ex_region, ex_time);
      if (!s) fail(ErrorCode::kNotFound, "no snapshot for region '" + ex_region + "' at time " + std::to_string(ex_time));
      const auto fwd = forward(model, s->graph);
      emit(io::to_json(lrp_explain(model, s->graph, fwd.cache, {ex_node, *variable}, ex_eps)).dump(2), ex_out);
    } else if (*im) {
      const auto ds = io::load_dataset(im_data);
      const auto model = io::load_checkpoint(im_model).model;
      const auto key = parse_group_key(im_group);
      std::vector<const MetGraph*> slice;
      for (const auto& s : ds.snapshots) {
        if (!im_region.empty() && s.region().name != im_region) continue;
        if (s.time_index() < im_from || s.time_index() > im_to) continue;
        slice.push_back(&s.graph);
      }
      std::vector<ObservationImpact> impacts;
      if (!slice.empty()) impacts = aggregate_contexts(model, slice);
      const auto table = aggregate_impacts(ds, impacts, key, im_opts);
      emit(im_format == "csv" ? io::to_csv(table) : io::to_json(table).dump(2), im_out);
    } else if (*fi) {
      const auto ds = io::load_dataset(fi_data);
      const auto model = io::load_checkpoint(fi_model).model;
      const auto snaps = select(ds, fi_split, fi_region);
      emit(io::to_json(fidelity(model, snaps, fi_fraction, climatology(ds))).dump(2), fi_out);
    } else if (*sv) {
      service::ServiceConfig cfg;
      if (!sv_config.empty()) cfg = service::load_config(sv_config);
      if (!sv_data.empty()) cfg.data_dir = sv_data;
      if (!sv_model.empty()) cfg.model_path = sv_model;
      if (!sv_addr.empty()) service::apply_addr(cfg, sv_addr);
      if (!sv_ui.empty()) cfg.ui_dir = sv_ui;
      std::vector<std::string> warnings;
      auto state = service::load_state(cfg, &warnings);
      for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
      service::Server server(state, cfg.ui_dir);
      const int port = server.bind(cfg.host, cfg.port);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "listening on http://" << cfg.host << ":" << port << "\n";
      server.listen_after_bind();
      g_server = nullptr;
    }
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return 1;
  }
  return 0;
}
