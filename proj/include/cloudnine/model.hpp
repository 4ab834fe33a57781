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

// Graph convolutional network with a regression head (U, V, T, Q at grid
// nodes) and a reconstruction head (all six value slots), trained with Adam.

#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "cloudnine/error.hpp"
#include "cloudnine/geo.hpp"
#include "cloudnine/synthetic.hpp"

namespace cloudnine {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Row layout: [12 one-hot NodeKind | 6 value slots | 6 mask bits].
inline constexpr int kOneHotOffset = 0;
inline constexpr int kValueOffset = kNumNodeKinds;
inline constexpr int kMaskOffset = kNumNodeKinds + kNumVariables;
inline constexpr int kFeatureWidth = kNumNodeKinds + 2 * kNumVariables;

using FeatureMatrix = Matrix;

/// One row per node in ascending id order.
inline FeatureMatrix encode_features(const MetGraph& g) {
  if (!g.normalized) {
    fail(ErrorCode::kInvalidArgument, "graph values are not normalized; apply norm_stats first");
  }
  FeatureMatrix x = FeatureMatrix::Zero(static_cast<Eigen::Index>(g.size()), kFeatureWidth);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& n = g.nodes[i];
    const auto r = static_cast<Eigen::Index>(i);
    x(r, kOneHotOffset + static_cast<int>(n.kind)) = 1.0;
    for (int v = 0; v < kNumVariables; ++v) {
      if (!n.mask[v]) continue;
      x(r, kValueOffset + v) = n.values[v];
      x(r, kMaskOffset + v) = 1.0;
    }
  }
  return x;
}

namespace detail {

class Fnv1a {
 public:
  void add_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001B3ull;
    }
  }
  template <typename T>
  void add(const T& v) {
    add_bytes(&v, sizeof(T));
  }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 0xCBF29CE484222325ull;
};

}  // namespace detail

inline std::uint64_t graph_hash(const MetGraph& g) {
  detail::Fnv1a h;
  h.add(g.time_index);
  for (const auto& n : g.nodes) {
    h.add(n.id);
    h.add(static_cast<int>(n.kind));
    h.add(n.location.lat);
    h.add(n.location.lon);
    for (int v = 0; v < kNumVariables; ++v) {
      h.add(n.values[v]);
      h.add(static_cast<unsigned char>(n.mask[v]));
    }
  }
  for (const auto& [a, b] : g.edges) {
    h.add(a);
    h.add(b);
  }
  return h.value();
}

/// Symmetric-normalized adjacency with self-loops, D^-1/2 (A + I) D^-1/2.
/// Edges touching occluded observations are left out so an occluded
/// observation has no influence on any other node.
struct AdjacencyOp {
  SparseMatrix matrix;

  Eigen::Index size() const { return matrix.rows(); }

  static AdjacencyOp build(const MetGraph& g) {
    const auto n = static_cast<Eigen::Index>(g.size());
    std::vector<char> active(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) active[i] = !g.nodes[i].occluded();
    std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
    pairs.reserve(g.edges.size());
    std::vector<double> degree(g.size(), 1.0);
    for (const auto& [a, b] : g.edges) {
      const auto ia = *g.index_of(a);
      const auto ib = *g.index_of(b);
      if (!active[ia] || !active[ib]) continue;
      pairs.emplace_back(static_cast<Eigen::Index>(ia), static_cast<Eigen::Index>(ib));
      degree[ia] += 1.0;
      degree[ib] += 1.0;
    }
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(2 * pairs.size() + g.size());
    for (Eigen::Index i = 0; i < n; ++i) triplets.emplace_back(i, i, 1.0 / degree[i]);
    for (const auto& [i, j] : pairs) {
      const double w = 1.0 / std::sqrt(degree[i] * degree[j]);
      triplets.emplace_back(i, j, w);
      triplets.emplace_back(j, i, w);
    }
    AdjacencyOp op;
    op.matrix.resize(n, n);
    op.matrix.setFromTriplets(triplets.begin(), triplets.end());
    op.matrix.makeCompressed();
    return op;
  }
};

struct Dense {
  Matrix weight;  // d_in x d_out
  RowVector bias;

  Eigen::Index in_dim() const { return weight.rows(); }
  Eigen::Index out_dim() const { return weight.cols(); }

  Matrix apply(const Matrix& x) const {
    Matrix z = x * weight;
    z.rowwise() += bias;
    return z;
  }

  static Dense zeros(Eigen::Index in, Eigen::Index out) {
    return {Matrix::Zero(in, out), RowVector::Zero(out)};
  }

  friend bool operator==(const Dense& a, const Dense& b) {
    return a.weight.rows() == b.weight.rows() && a.weight.cols() == b.weight.cols() &&
           a.bias.size() == b.bias.size() && a.weight == b.weight && a.bias == b.bias;
  }
};

inline constexpr int kPredictionWidth = kNumStateVariables;
inline constexpr int kReconstructionWidth = kNumVariables;

/// GCN stack followed by two affine heads reading the last hidden state.
struct Model {
  std::vector<Dense> gcn;
  Dense regress_head;  // d_h x 4
  Dense recon_head;    // d_h x 6

  /// Glorot-uniform weights from `seed`, zero biases.
  static Model init(const std::vector<int>& dims, std::uint64_t seed) {
    if (dims.size() < 2 || dims.front() != kFeatureWidth) {
      fail(ErrorCode::kInvalidArgument, "model dims must start with the feature width (24)");
    }
    std::mt19937_64 rng(seed);
    auto glorot = [&rng](int in, int out) {
      const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
      std::uniform_real_distribution<double> dist(-limit, limit);
      Dense d = Dense::zeros(in, out);
      for (int r = 0; r < in; ++r) {
        for (int c = 0; c < out; ++c) d.weight(r, c) = dist(rng);
      }
      return d;
    };
    Model m;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) m.gcn.push_back(glorot(dims[l], dims[l + 1]));
    m.regress_head = glorot(dims.back(), kPredictionWidth);
    m.recon_head = glorot(dims.back(), kReconstructionWidth);
    return m;
  }

  static Model zeros_like(const Model& m) {
    Model z;
    for (const auto& l : m.gcn) z.gcn.push_back(Dense::zeros(l.in_dim(), l.out_dim()));
    z.regress_head = Dense::zeros(m.regress_head.in_dim(), m.regress_head.out_dim());
    z.recon_head = Dense::zeros(m.recon_head.in_dim(), m.recon_head.out_dim());
    return z;
  }

  std::vector<int> dims() const {
    std::vector<int> d;
    if (gcn.empty()) return d;
    d.push_back(static_cast<int>(gcn.front().in_dim()));
    for (const auto& l : gcn) d.push_back(static_cast<int>(l.out_dim()));
    return d;
  }

  int layer_count() const { return static_cast<int>(gcn.size()); }

  /// Every parameter block, in a fixed order: GCN layers, regression head,
  /// reconstruction head.
  std::vector<Dense*> blocks() {
    std::vector<Dense*> out;
    for (auto& l : gcn) out.push_back(&l);
    out.push_back(&regress_head);
    out.push_back(&recon_head);
    return out;
  }
  std::vector<const Dense*> blocks() const {
    std::vector<const Dense*> out;
    for (const auto& l : gcn) out.push_back(&l);
    out.push_back(&regress_head);
    out.push_back(&recon_head);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto* b : blocks()) n += static_cast<std::size_t>(b->weight.size() + b->bias.size());
    return n;
  }

  void validate() const {
    if (gcn.empty()) fail(ErrorCode::kInvalidArgument, "model has no GCN layers");
    for (std::size_t l = 0; l < gcn.size(); ++l) {
      if (gcn[l].bias.size() != gcn[l].out_dim()) {
        fail(ErrorCode::kInvalidArgument, "bias width mismatch in layer " + std::to_string(l));
      }
      if (l > 0 && gcn[l].in_dim() != gcn[l - 1].out_dim()) {
        fail(ErrorCode::kInvalidArgument, "layer dims incompatible at layer " + std::to_string(l));
      }
    }
    const auto h = gcn.back().out_dim();
    if (regress_head.in_dim() != h || regress_head.out_dim() != kPredictionWidth ||
        recon_head.in_dim() != h || recon_head.out_dim() != kReconstructionWidth) {
      fail(ErrorCode::kInvalidArgument, "head dims incompatible with final hidden layer");
    }
  }

  friend bool operator==(const Model&, const Model&) = default;
};

inline std::uint64_t model_hash(const Model& m) {
  detail::Fnv1a h;
  for (const auto* b : m.blocks()) {
    h.add(b->weight.rows());
    h.add(b->weight.cols());
    h.add_bytes(b->weight.data(), sizeof(double) * static_cast<std::size_t>(b->weight.size()));
    h.add_bytes(b->bias.data(), sizeof(double) * static_cast<std::size_t>(b->bias.size()));
  }
  return h.value();
}

/// Intermediates of one forward pass. aggregated[l] = Â H_l,
/// pre[l] = aggregated[l] W_l + b_l, post[l] = ReLU(pre[l]) = H_{l+1}.
struct ActivationCache {
  AdjacencyOp adjacency;
  Matrix input;
  std::vector<Matrix> aggregated;
  std::vector<Matrix> pre;
  std::vector<Matrix> post;
  std::uint64_t graph_hash = 0;

  const Matrix& hidden(int l) const { return l == 0 ? input : post[static_cast<std::size_t>(l - 1)]; }
  const Matrix& last_hidden() const { return post.back(); }
};

struct ForwardResult {
  Matrix predictions;      // n x 4
  Matrix reconstructions;  // n x 6
  ActivationCache cache;
};

inline ForwardResult forward(const Model& m, const FeatureMatrix& x, AdjacencyOp adjacency) {
  m.validate();
  if (x.cols() != m.gcn.front().in_dim()) {
    fail(ErrorCode::kInvalidArgument, "feature width " + std::to_string(x.cols()) +
                                          " does not match model input " +
                                          std::to_string(m.gcn.front().in_dim()));
  }
  if (adjacency.size() != x.rows()) fail(ErrorCode::kInvalidArgument, "adjacency size mismatch");
  ForwardResult out;
  auto& c = out.cache;
  c.adjacency = std::move(adjacency);
  c.input = x;
  const Matrix* h = &c.input;
  for (const auto& layer : m.gcn) {
    c.aggregated.push_back(c.adjacency.matrix * (*h));
    c.pre.push_back(layer.apply(c.aggregated.back()));
    c.post.push_back(c.pre.back().cwiseMax(0.0));
    h = &c.post.back();
  }
  out.predictions = m.regress_head.apply(*h);
  out.reconstructions = m.recon_head.apply(*h);
  return out;
}

inline ForwardResult forward(const Model& m, const MetGraph& g) {
  auto out = forward(m, encode_features(g), AdjacencyOp::build(g));
  out.cache.graph_hash = graph_hash(g);
  return out;
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// Regression targets aligned with graph rows; only grid rows are present.
struct TargetMatrix {
  Matrix values;              // n x 4
  std::vector<char> present;  // per row
  int count = 0;
};

inline TargetMatrix make_targets(const Snapshot& s) {
  TargetMatrix t;
  const auto n = static_cast<Eigen::Index>(s.graph.size());
  t.values = Matrix::Zero(n, kPredictionWidth);
  t.present.assign(s.graph.size(), 0);
  for (std::size_t i = 0; i < s.graph.size(); ++i) {
    auto it = s.targets.find(s.graph.nodes[i].id);
    if (it == s.targets.end()) continue;
    for (int v = 0; v < kPredictionWidth; ++v) t.values(static_cast<Eigen::Index>(i), v) = it->second[v];
    t.present[i] = 1;
    ++t.count;
  }
  return t;
}

struct LossParts {
  double regression = 0.0;
  double reconstruction = 0.0;
  double total = 0.0;
};

enum class Objective { kFull, kReconstruction };

/// MSE over grid rows and the four predicted channels, plus lambda times the
/// masked MSE between the reconstruction head and the input value slots.
inline LossParts loss(const Matrix& pred, const Matrix& recon, const TargetMatrix& targets,
                      const FeatureMatrix& features, double lambda_recon) {
  if (targets.count == 0) fail(ErrorCode::kInvalidArgument, "no grid nodes with targets");
  LossParts out;
  for (Eigen::Index r = 0; r < pred.rows(); ++r) {
    if (!targets.present[static_cast<std::size_t>(r)]) continue;
    out.regression += (pred.row(r) - targets.values.row(r)).squaredNorm();
  }
  out.regression /= static_cast<double>(targets.count * kPredictionWidth);
  const auto mask = features.middleCols(kMaskOffset, kNumVariables);
  const auto values = features.middleCols(kValueOffset, kNumVariables);
  const double denom = mask.sum();
  if (denom > 0.0) {
    out.reconstruction = (mask.array() * (recon - values).array().square()).sum() / denom;
  }
  out.total = out.regression + lambda_recon * out.reconstruction;
  return out;
}

inline double objective_value(const LossParts& parts, Objective objective) {
  return objective == Objective::kFull ? parts.total : parts.reconstruction;
}

/// Parameter gradients of the chosen objective for one forward pass. The
/// result has the same shape as the model.
inline Model backward(const Model& m, const ForwardResult& fwd, const TargetMatrix& targets,
                      double lambda_recon, Objective objective = Objective::kFull) {
  const auto& c = fwd.cache;
  const auto n = c.input.rows();
  Model grad = Model::zeros_like(m);

  Matrix d_pred = Matrix::Zero(n, kPredictionWidth);
  if (objective == Objective::kFull) {
    if (targets.count == 0) fail(ErrorCode::kInvalidArgument, "no grid nodes with targets");
    const double scale = 2.0 / static_cast<double>(targets.count * kPredictionWidth);
    for (Eigen::Index r = 0; r < n; ++r) {
      if (!targets.present[static_cast<std::size_t>(r)]) continue;
      d_pred.row(r) = scale * (fwd.predictions.row(r) - targets.values.row(r));
    }
  }
  Matrix d_recon = Matrix::Zero(n, kReconstructionWidth);
  const auto mask = c.input.middleCols(kMaskOffset, kNumVariables);
  const double denom = mask.sum();
  const double recon_weight = objective == Objective::kFull ? lambda_recon : 1.0;
  if (denom > 0.0 && recon_weight != 0.0) {
    d_recon = (2.0 * recon_weight / denom) *
              (mask.array() * (fwd.reconstructions - c.input.middleCols(kValueOffset, kNumVariables)).array())
                  .matrix();
  }

  const Matrix& h_last = c.last_hidden();
  grad.regress_head.weight = h_last.transpose() * d_pred;
  grad.regress_head.bias = d_pred.colwise().sum();
  grad.recon_head.weight = h_last.transpose() * d_recon;
  grad.recon_head.bias = d_recon.colwise().sum();
  Matrix d_h = d_pred * m.regress_head.weight.transpose() + d_recon * m.recon_head.weight.transpose();

  for (int l = m.layer_count() - 1; l >= 0; --l) {
    const auto ul = static_cast<std::size_t>(l);
    const Matrix d_z = (c.pre[ul].array() > 0.0).select(d_h, 0.0);
    grad.gcn[ul].weight = c.aggregated[ul].transpose() * d_z;
    grad.gcn[ul].bias = d_z.colwise().sum();
    if (l > 0) {
      const Matrix d_agg = d_z * m.gcn[ul].weight.transpose();
      d_h = c.adjacency.matrix.transpose() * d_agg;
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  double lr = 1e-3;
  int epochs_pretrain = 50;
  int epochs_finetune = 200;
  double lambda_recon = 0.5;
  std::uint64_t seed = 42;
  double grad_clip = 5.0;

  void validate() const {
    if (!(lr > 0.0)) fail(ErrorCode::kInvalidArgument, "lr must be > 0");
    if (!(lambda_recon >= 0.0)) fail(ErrorCode::kInvalidArgument, "lambda_recon must be >= 0");
    if (epochs_pretrain < 0 || epochs_finetune < 0) {
      fail(ErrorCode::kInvalidArgument, "epoch counts must be >= 0");
    }
    if (!(grad_clip > 0.0)) fail(ErrorCode::kInvalidArgument, "grad_clip must be > 0");
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline const std::vector<int>& default_dims() {
  static const std::vector<int> dims = {kFeatureWidth, 64, 64};
  return dims;
}

struct EpochRecord {
  std::string phase;  // "pretrain" or "finetune"
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();  // NaN without a validation split
};

struct TrainResult {
  Model model;
  std::vector<EpochRecord> history;
};

/// Adam with bias correction.
class Adam {
 public:
  Adam(const Model& m, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(Model::zeros_like(m)), v_(Model::zeros_like(m)) {}

  void step(Model& params, const Model& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto p = params.blocks();
    auto mb = m_.blocks();
    auto vb = v_.blocks();
    const auto g = grad.blocks();
    for (std::size_t i = 0; i < p.size(); ++i) {
      update(p[i]->weight, mb[i]->weight, vb[i]->weight, g[i]->weight, c1, c2);
      update(p[i]->bias, mb[i]->bias, vb[i]->bias, g[i]->bias, c1, c2);
    }
  }

 private:
  template <typename M>
  void update(M& param, M& m1, M& m2, const M& g, double c1, double c2) {
    m1 = beta1_ * m1 + (1.0 - beta1_) * g;
    m2 = beta2_ * m2 + (1.0 - beta2_) * g.cwiseProduct(g);
    param.array() -= lr_ * (m1.array() / c1) / ((m2.array() / c2).sqrt() + eps_);
  }

  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  Model m_, v_;
};

inline double gradient_norm(const Model& grad) {
  double sq = 0.0;
  for (const auto* b : grad.blocks()) sq += b->weight.squaredNorm() + b->bias.squaredNorm();
  return std::sqrt(sq);
}

inline void scale_gradients(Model& grad, double factor) {
  for (auto* b : grad.blocks()) {
    b->weight *= factor;
    b->bias *= factor;
  }
}

/// Pre-encoded training example.
struct Example {
  FeatureMatrix features;
  AdjacencyOp adjacency;
  TargetMatrix targets;

  static Example from(const Snapshot& s) {
    return {encode_features(s.graph), AdjacencyOp::build(s.graph), make_targets(s)};
  }
};

inline double mean_objective(const Model& m, const std::vector<Example>& examples, double lambda,
                             Objective objective) {
  if (examples.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (const auto& ex : examples) {
    const auto fwd = forward(m, ex.features, ex.adjacency);
    sum += objective_value(loss(fwd.predictions, fwd.reconstructions, ex.targets, ex.features, lambda),
                           objective);
  }
  return sum / static_cast<double>(examples.size());
}

using ProgressFn = std::function<void(double fraction, const EpochRecord& record)>;

/// Two-phase training, one graph per step: reconstruction-only pretraining,
/// then the full loss. Graph order is reshuffled each epoch from `cfg.seed`.
/// Throws kDiverged when the loss becomes non-finite; the input model is
/// never modified.
inline TrainResult train(const Model& initial, const Dataset& ds, const TrainConfig& cfg,
                         const ProgressFn& progress = {}) {
  cfg.validate();
  initial.validate();
  if (!ds.normalized()) fail(ErrorCode::kInvalidArgument, "dataset must be split and normalized");
  std::vector<Example> train_set, val_set;
  for (const auto* s : ds.select(Split::kTrain)) train_set.push_back(Example::from(*s));
  for (const auto* s : ds.select(Split::kValidation)) val_set.push_back(Example::from(*s));
  if (train_set.empty()) fail(ErrorCode::kInvalidArgument, "train split is empty");

  TrainResult result{initial, {}};
  Model& model = result.model;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  const int total_epochs = cfg.epochs_pretrain + cfg.epochs_finetune;
  int done = 0;
  auto run_phase = [&](Objective objective, int epochs, const char* phase) {
    Adam adam(model, cfg.lr);
    for (int e = 0; e < epochs; ++e) {
      std::shuffle(order.begin(), order.end(), rng);
      double sum = 0.0;
      for (std::size_t k = 0; k < order.size(); ++k) {
        const auto& ex = train_set[order[k]];
        const auto fwd = forward(model, ex.features, ex.adjacency);
        const double value = objective_value(
            loss(fwd.predictions, fwd.reconstructions, ex.targets, ex.features, cfg.lambda_recon), objective);
        if (!std::isfinite(value)) {
          fail(ErrorCode::kDiverged, std::string("loss became non-finite during ") + phase + " epoch " +
                                         std::to_string(e) + " step " + std::to_string(k));
        }
        sum += value;
        Model grad = backward(model, fwd, ex.targets, cfg.lambda_recon, objective);
        const double norm = gradient_norm(grad);
        if (!std::isfinite(norm)) {
          fail(ErrorCode::kDiverged, std::string("non-finite gradient during ") + phase + " epoch " +
                                         std::to_string(e));
        }
        if (norm > cfg.grad_clip) scale_gradients(grad, cfg.grad_clip / norm);
        adam.step(model, grad);
      }
      EpochRecord rec{phase, e, sum / static_cast<double>(order.size()),
                      mean_objective(model, val_set, cfg.lambda_recon, objective)};
      result.history.push_back(rec);
      ++done;
      if (progress) progress(static_cast<double>(done) / std::max(1, total_epochs), rec);
    }
  };
  run_phase(Objective::kReconstruction, cfg.epochs_pretrain, "pretrain");
  run_phase(Objective::kFull, cfg.epochs_finetune, "finetune");
  return result;
}

/// Predictions for every row of the snapshot graph.
inline Matrix predict(const Model& m, const MetGraph& g) { return forward(m, g).predictions; }

/// Grid background values as predictions (obs rows zero).
inline Matrix persistence_predictions(const MetGraph& g) {
  Matrix p = Matrix::Zero(static_cast<Eigen::Index>(g.size()), kPredictionWidth);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (is_observation(g.nodes[i].kind)) continue;
    for (int v = 0; v < kPredictionWidth; ++v) p(static_cast<Eigen::Index>(i), v) = g.nodes[i].values[v];
  }
  return p;
}

// ---------------------------------------------------------------------------
// Gradient check
// ---------------------------------------------------------------------------

struct GradientCheckResult {
  double max_relative_error = 0.0;
  int checked = 0;
  int skipped_kinks = 0;
};

namespace detail {

inline std::vector<char> relu_pattern(const ForwardResult& f) {
  std::vector<char> pattern;
  for (const auto& z : f.cache.pre) {
    for (Eigen::Index i = 0; i < z.size(); ++i) pattern.push_back(z.data()[i] > 0.0);
  }
  return pattern;
}

}  // namespace detail

/// Compares analytic gradients of the full loss with central differences.
/// Relative error is |a - n| / max(|a|, |n|, 1e-6). Coordinates whose
/// perturbation flips any ReLU are skipped. `max_coords` = 0 checks every
/// parameter; otherwise that many coordinates are drawn with `seed`.
inline GradientCheckResult gradient_check(const Model& m, const Snapshot& s, double lambda_recon,
                                          double eps = 1e-5, int max_coords = 0, std::uint64_t seed = 0) {
  const auto ex = Example::from(s);
  const auto base = forward(m, ex.features, ex.adjacency);
  const auto analytic = backward(m, base, ex.targets, lambda_recon);
  const auto base_pattern = detail::relu_pattern(base);

  struct Coord {
    std::size_t block;
    bool is_bias;
    Eigen::Index index;
  };
  std::vector<Coord> coords;
  const auto blocks = m.blocks();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (Eigen::Index i = 0; i < blocks[b]->weight.size(); ++i) coords.push_back({b, false, i});
    for (Eigen::Index i = 0; i < blocks[b]->bias.size(); ++i) coords.push_back({b, true, i});
  }
  if (max_coords > 0 && static_cast<std::size_t>(max_coords) < coords.size()) {
    std::mt19937_64 rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(static_cast<std::size_t>(max_coords));
  }

  auto eval = [&](const Model& p, std::vector<char>* pattern) {
    const auto f = forward(p, ex.features, ex.adjacency);
    if (pattern) *pattern = detail::relu_pattern(f);
    return loss(f.predictions, f.reconstructions, ex.targets, ex.features, lambda_recon).total;
  };

  GradientCheckResult result;
  const auto grad_blocks = analytic.blocks();
  Model probe = m;
  for (const auto& c : coords) {
    auto* pb = probe.blocks()[c.block];
    double* slot = c.is_bias ? pb->bias.data() + c.index : pb->weight.data() + c.index;
    const double original = *slot;
    std::vector<char> plus_pattern, minus_pattern;
    *slot = original + eps;
    const double up = eval(probe, &plus_pattern);
    *slot = original - eps;
    const double down = eval(probe, &minus_pattern);
    *slot = original;
    if (plus_pattern != base_pattern || minus_pattern != base_pattern) {
      ++result.skipped_kinks;
      continue;
    }
    const double numeric = (up - down) / (2.0 * eps);
    const auto* gb = grad_blocks[c.block];
    const double a = c.is_bias ? gb->bias(c.index) : gb->weight.data()[c.index];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
    result.max_relative_error = std::max(result.max_relative_error, rel);
    ++result.checked;
  }
  return result;
}

}  // namespace cloudnine
