// Copyright 2026 The voqa Authors. All Rights Reserved.
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

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "voqa/embedding.hpp"
#include "voqa/error.hpp"

namespace voqa {

using Matrix = FrameFeatures;
using Eigen::VectorXd;

enum class FeatureMode { kSfmLast, kSfmWs, kLldOnly, kSfmWsJsh, kSfmWsCpp };

inline std::string_view to_string(FeatureMode m) {
  switch (m) {
    case FeatureMode::kSfmLast: return "sfm_last";
    case FeatureMode::kSfmWs: return "sfm_ws";
    case FeatureMode::kLldOnly: return "lld_only";
    case FeatureMode::kSfmWsJsh: return "sfm_ws+jsh";
    case FeatureMode::kSfmWsCpp: return "sfm_ws+cpp";
  }
  return "?";
}

inline FeatureMode parse_feature_mode(std::string_view s) {
  for (auto m : {FeatureMode::kSfmLast, FeatureMode::kSfmWs, FeatureMode::kLldOnly,
                 FeatureMode::kSfmWsJsh, FeatureMode::kSfmWsCpp}) {
    if (to_string(m) == s) return m;
  }
  fail(ErrorCode::kConfigError, "unknown feature mode '" + std::string(s) + "'");
}

inline bool uses_embeddings(FeatureMode m) { return m != FeatureMode::kLldOnly; }
inline bool uses_weighted_sum(FeatureMode m) {
  return m == FeatureMode::kSfmWs || m == FeatureMode::kSfmWsJsh || m == FeatureMode::kSfmWsCpp;
}
// Number of appended descriptors: jitter, shimmer, HNR and optionally CPP.
inline std::size_t lld_width(FeatureMode m) {
  switch (m) {
    case FeatureMode::kLldOnly:
    case FeatureMode::kSfmWsJsh: return 3;
    case FeatureMode::kSfmWsCpp: return 4;
    default: return 0;
  }
}

enum class Mode { kTrain, kEval };

struct ModelConfig {
  FeatureMode features = FeatureMode::kSfmWsJsh;
  std::size_t embed_dim = 0;   // D; 0 for lld_only
  std::size_t num_layers = 0;  // stack layers, used by weighted-sum modes
  std::size_t num_targets = 6;
  std::array<std::size_t, 3> hidden = {512, 256, 128};
  std::size_t attention_dim = 64;
  double dropout = 0.3;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  std::size_t lld_dim() const { return lld_width(features); }
  std::size_t input_dim() const { return embed_dim + lld_dim(); }
};

// One FC -> BN -> ReLU -> dropout block.
struct DenseBn {
  Matrix W;  // out x in
  VectorXd b, gamma, beta;
  VectorXd running_mean, running_var;
};

struct ModelParams {
  VectorXd layer_logits;
  std::array<DenseBn, 3> fc;
  Matrix W_h;  // attention_dim x hidden3
  VectorXd b_h;
  VectorXd w_attn;  // attention_dim
  VectorXd b_attn;  // size 1
  Matrix W_out;     // num_targets x hidden3
  VectorXd b_out;
};

namespace detail {

template <class T>
auto flat(T& m) {
  return std::span(m.data(), static_cast<std::size_t>(m.size()));
}

}  // namespace detail

// Visits every trainable tensor as (name, flat span). Order is fixed and is
// the checkpoint and optimizer order.
template <class P, class F>
void visit_trainable(P& p, F&& f) {
  if (p.layer_logits.size() > 0) f(std::string_view("layer_logits"), detail::flat(p.layer_logits));
  static constexpr std::array<std::string_view, 3> kW = {"fc1.W", "fc2.W", "fc3.W"};
  static constexpr std::array<std::string_view, 3> kB = {"fc1.b", "fc2.b", "fc3.b"};
  static constexpr std::array<std::string_view, 3> kG = {"fc1.gamma", "fc2.gamma", "fc3.gamma"};
  static constexpr std::array<std::string_view, 3> kBeta = {"fc1.beta", "fc2.beta", "fc3.beta"};
  for (std::size_t i = 0; i < 3; ++i) {
    f(kW[i], detail::flat(p.fc[i].W));
    f(kB[i], detail::flat(p.fc[i].b));
    f(kG[i], detail::flat(p.fc[i].gamma));
    f(kBeta[i], detail::flat(p.fc[i].beta));
  }
  f(std::string_view("attn.W_h"), detail::flat(p.W_h));
  f(std::string_view("attn.b_h"), detail::flat(p.b_h));
  f(std::string_view("attn.w"), detail::flat(p.w_attn));
  f(std::string_view("attn.b"), detail::flat(p.b_attn));
  f(std::string_view("head.W"), detail::flat(p.W_out));
  f(std::string_view("head.b"), detail::flat(p.b_out));
}

// Batch-norm running statistics (not trained by gradient).
template <class P, class F>
void visit_buffers(P& p, F&& f) {
  static constexpr std::array<std::string_view, 3> kM = {"fc1.running_mean", "fc2.running_mean",
                                                         "fc3.running_mean"};
  static constexpr std::array<std::string_view, 3> kV = {"fc1.running_var", "fc2.running_var",
                                                         "fc3.running_var"};
  for (std::size_t i = 0; i < 3; ++i) {
    f(kM[i], detail::flat(p.fc[i].running_mean));
    f(kV[i], detail::flat(p.fc[i].running_var));
  }
}

// Same shapes as `p`, every value zero.
inline ModelParams zeros_like(const ModelParams& p) {
  ModelParams z = p;
  visit_trainable(z, [](std::string_view, std::span<double> s) { std::fill(s.begin(), s.end(), 0.0); });
  visit_buffers(z, [](std::string_view, std::span<double> s) { std::fill(s.begin(), s.end(), 0.0); });
  return z;
}

inline std::size_t num_trainable(const ModelParams& p) {
  std::size_t n = 0;
  visit_trainable(p, [&n](std::string_view, std::span<const double> s) { n += s.size(); });
  return n;
}

// PyTorch-style init: weights and biases U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
// BN affine (1, 0), running stats (0, 1), layer logits 0.
inline ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.input_dim() == 0) fail(ErrorCode::kConfigError, "model input width is zero");
  if (cfg.num_targets == 0) fail(ErrorCode::kConfigError, "model needs at least one target");
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](Matrix& m, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  };
  auto uniform_vec = [&rng](VectorXd& v, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = u(rng);
  };
  ModelParams p;
  p.layer_logits = VectorXd::Zero(uses_weighted_sum(cfg.features)
                                      ? static_cast<Eigen::Index>(cfg.num_layers)
                                      : 0);
  std::size_t in = cfg.input_dim();
  for (std::size_t i = 0; i < 3; ++i) {
    const auto out = static_cast<Eigen::Index>(cfg.hidden[i]);
    auto& l = p.fc[i];
    l.W.resize(out, static_cast<Eigen::Index>(in));
    l.b.resize(out);
    uniform(l.W, in);
    uniform_vec(l.b, in);
    l.gamma = VectorXd::Ones(out);
    l.beta = VectorXd::Zero(out);
    l.running_mean = VectorXd::Zero(out);
    l.running_var = VectorXd::Ones(out);
    in = cfg.hidden[i];
  }
  const auto att = static_cast<Eigen::Index>(cfg.attention_dim);
  const auto h3 = static_cast<Eigen::Index>(cfg.hidden[2]);
  p.W_h.resize(att, h3);
  p.b_h.resize(att);
  uniform(p.W_h, cfg.hidden[2]);
  uniform_vec(p.b_h, cfg.hidden[2]);
  p.w_attn.resize(att);
  p.b_attn.resize(1);
  uniform_vec(p.w_attn, cfg.attention_dim);
  uniform_vec(p.b_attn, cfg.attention_dim);
  p.W_out.resize(static_cast<Eigen::Index>(cfg.num_targets), h3);
  p.b_out.resize(static_cast<Eigen::Index>(cfg.num_targets));
  uniform(p.W_out, cfg.hidden[2]);
  uniform_vec(p.b_out, cfg.hidden[2]);
  return p;
}

// Appends the (already standardized) descriptors to every frame. An empty
// `lld` leaves the features unchanged.
inline Matrix fuse(const Matrix& xs, const VectorXd& lld) {
  if (lld.size() == 0) return xs;
  Matrix out(xs.rows(), xs.cols() + lld.size());
  out.leftCols(xs.cols()) = xs;
  out.rightCols(lld.size()).rowwise() = lld.transpose();
  return out;
}

// Activations kept by a train-mode backbone pass.
struct BackboneCache {
  std::array<Matrix, 3> input;   // layer input
  std::array<Matrix, 3> xhat;    // normalized pre-activation
  std::array<VectorXd, 3> inv_std;
  std::array<Matrix, 3> bn_out;  // gamma * xhat + beta
  std::array<Matrix, 3> mask;    // dropout scale per element (0 or 1/(1-p))
};

// Per frame h = dropout(ReLU(BN(W h_prev + b))). Train mode normalizes with
// statistics over all rows of `x` and updates the running statistics; eval
// mode uses the running statistics and no dropout.
inline Matrix backbone_forward(const Matrix& x, ModelParams& p, Mode mode, const ModelConfig& cfg,
                               std::mt19937_64* rng = nullptr, BackboneCache* cache = nullptr) {
  if (static_cast<std::size_t>(x.cols()) != static_cast<std::size_t>(p.fc[0].W.cols())) {
    fail(ErrorCode::kShapeError, "backbone input width " + std::to_string(x.cols()) +
                                     " != " + std::to_string(p.fc[0].W.cols()));
  }
  Matrix h = x;
  for (std::size_t i = 0; i < 3; ++i) {
    auto& l = p.fc[i];
    Matrix z = h * l.W.transpose();
    z.rowwise() += l.b.transpose();
    Matrix xhat(z.rows(), z.cols());
    VectorXd inv_std(z.cols());
    if (mode == Mode::kTrain) {
      const double m = static_cast<double>(z.rows());
      const VectorXd mu = z.colwise().mean().transpose();
      Matrix centered = z.rowwise() - mu.transpose();
      const VectorXd var = centered.colwise().squaredNorm().transpose() / m;
      inv_std = (var.array() + cfg.bn_eps).rsqrt();
      xhat = centered.array().rowwise() * inv_std.transpose().array();
      l.running_mean = (1.0 - cfg.bn_momentum) * l.running_mean + cfg.bn_momentum * mu;
      const VectorXd unbiased = m > 1.0 ? VectorXd(var * (m / (m - 1.0))) : var;
      l.running_var = (1.0 - cfg.bn_momentum) * l.running_var + cfg.bn_momentum * unbiased;
    } else {
      inv_std = (l.running_var.array() + cfg.bn_eps).rsqrt();
      xhat = (z.rowwise() - l.running_mean.transpose()).array().rowwise() *
             inv_std.transpose().array();
    }
    Matrix y = (xhat.array().rowwise() * l.gamma.transpose().array()).rowwise() +
               l.beta.transpose().array();
    Matrix a = y.cwiseMax(0.0);
    Matrix mask;
    if (mode == Mode::kTrain && cfg.dropout > 0.0) {
      if (rng == nullptr) fail(ErrorCode::kInvalidArgument, "train-mode dropout needs an RNG");
      const double keep = 1.0 - cfg.dropout;
      mask.resize(a.rows(), a.cols());
      // u * 2^-53 < keep, compared on the integers in one vectorized pass
      // (keep * 2^53 is exact for keep in (0, 1]).
      Eigen::Array<std::uint64_t, Eigen::Dynamic, 1> draws(mask.size());
      for (Eigen::Index k = 0; k < draws.size(); ++k) draws[k] = (*rng)() >> 11;
      const auto cut = static_cast<std::uint64_t>(keep * 0x1.0p53);
      Eigen::Map<Eigen::ArrayXd>(mask.data(), mask.size()) = (draws < cut).cast<double>() * (1.0 / keep);
      a.array() *= mask.array();
    }
    if (cache != nullptr) {
      cache->input[i] = std::move(h);
      cache->xhat[i] = std::move(xhat);
      cache->inv_std[i] = std::move(inv_std);
      cache->bn_out[i] = std::move(y);
      cache->mask[i] = std::move(mask);
    }
    h = std::move(a);
  }
  return h;
}

inline Matrix backbone_forward(const Matrix& x, const ModelParams& p, const ModelConfig& cfg) {
  ModelParams copy = p;
  return backbone_forward(x, copy, Mode::kEval, cfg);
}

struct AttentionSummary {
  VectorXd alpha;  // per-frame weights
  VectorXd z;      // pooled hidden vector
  Matrix proj;     // tanh(W_h H_t + b_h), kept for backward
};

// e_t = w_attn . tanh(W_h H_t + b_h) + b_attn; alpha = softmax over frames;
// z = sum_t alpha_t H_t.
inline AttentionSummary attention_pool(const Eigen::Ref<const Matrix>& h, const ModelParams& p) {
  if (h.rows() < 1) fail(ErrorCode::kShapeError, "attention needs at least one frame");
  AttentionSummary s;
  s.proj = h * p.W_h.transpose();
  s.proj.rowwise() += p.b_h.transpose();
  s.proj = s.proj.array().tanh();
  VectorXd e = s.proj * p.w_attn;
  e.array() += p.b_attn(0);
  s.alpha = LayerWeights::softmax(e);
  s.z = h.transpose() * s.alpha;
  return s;
}

// Fused per-utterance input. `stack` may be null for lld_only; `lld` is the
// standardized descriptor vector (empty when the mode has none).
struct ModelInput {
  const EmbeddingStack* stack = nullptr;
  VectorXd lld;
};

inline Matrix frame_features(const ModelInput& in, const ModelParams& p, const ModelConfig& cfg) {
  if (static_cast<std::size_t>(in.lld.size()) != cfg.lld_dim()) {
    fail(ErrorCode::kShapeError, "expected " + std::to_string(cfg.lld_dim()) + " descriptors, got " +
                                     std::to_string(in.lld.size()));
  }
  if (!uses_embeddings(cfg.features)) return Matrix(in.lld.transpose());
  if (in.stack == nullptr) fail(ErrorCode::kMissingEmbeddings, "input has no embedding stack");
  if (in.stack->dim != cfg.embed_dim) {
    fail(ErrorCode::kShapeError, "stack dim " + std::to_string(in.stack->dim) + " != model dim " +
                                     std::to_string(cfg.embed_dim));
  }
  const Matrix xs = uses_weighted_sum(cfg.features) ? aggregate(*in.stack, p.layer_logits)
                                                    : last_layer(*in.stack);
  return fuse(xs, in.lld);
}

// Regression head on top of pooled features; no output activation.
inline VectorXd predict(const ModelInput& in, const ModelParams& p, const ModelConfig& cfg) {
  const Matrix h = backbone_forward(frame_features(in, p, cfg), p, cfg);
  const auto att = attention_pool(h, p);
  return p.W_out * att.z + p.b_out;
}

// Trainable network with a batch forward and the matching reverse pass.
class Model {
 public:
  Model() = default;
  Model(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg), params_(init_params(cfg, seed)) {}
  Model(ModelConfig cfg, ModelParams params) : cfg_(cfg), params_(std::move(params)) {}

  const ModelConfig& config() const { return cfg_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

  // N x num_targets predictions. Train mode caches activations for backward
  // and draws dropout masks from `rng`.
  Matrix forward(const std::vector<ModelInput>& batch, Mode mode, std::mt19937_64* rng = nullptr) {
    if (batch.empty()) fail(ErrorCode::kShapeError, "empty batch");
    cache_ = Cache{};
    std::vector<Matrix> feats;
    feats.reserve(batch.size());
    Eigen::Index rows = 0;
    for (const auto& in : batch) {
      feats.push_back(frame_features(in, params_, cfg_));
      rows += feats.back().rows();
    }
    Matrix x(rows, static_cast<Eigen::Index>(cfg_.input_dim()));
    std::vector<Eigen::Index> offsets{0};
    for (const auto& f : feats) {
      x.middleRows(offsets.back(), f.rows()) = f;
      offsets.push_back(offsets.back() + f.rows());
    }
    BackboneCache* bc = mode == Mode::kTrain ? &cache_.backbone : nullptr;
    Matrix h = backbone_forward(x, params_, mode, cfg_, rng, bc);

    Matrix out(static_cast<Eigen::Index>(batch.size()), static_cast<Eigen::Index>(cfg_.num_targets));
    Matrix pooled(static_cast<Eigen::Index>(batch.size()), h.cols());
    std::vector<AttentionSummary> att;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto n = offsets[i + 1] - offsets[i];
      att.push_back(attention_pool(h.middleRows(offsets[i], n), params_));
      pooled.row(static_cast<Eigen::Index>(i)) = att.back().z.transpose();
    }
    out = pooled * params_.W_out.transpose();
    out.rowwise() += params_.b_out.transpose();

    if (mode == Mode::kTrain) {
      cache_.valid = true;
      cache_.inputs = batch;
      cache_.offsets = std::move(offsets);
      cache_.x = std::move(x);
      cache_.h = std::move(h);
      cache_.pooled = std::move(pooled);
      cache_.attention = std::move(att);
    }
    return out;
  }

  // Gradients of a scalar loss for the last train-mode forward, given
  // dL/dpredictions (N x num_targets).
  ModelParams backward(const Matrix& grad_out) {
    if (!cache_.valid) {
      fail(ErrorCode::kCalledBeforeForward, "backward needs a preceding train-mode forward");
    }
    if (grad_out.rows() != cache_.pooled.rows() ||
        static_cast<std::size_t>(grad_out.cols()) != cfg_.num_targets) {
      fail(ErrorCode::kShapeError, "upstream gradient shape mismatch");
    }
    ModelParams g = zeros_like(params_);
    const auto& p = params_;

    g.W_out = grad_out.transpose() * cache_.pooled;
    g.b_out = grad_out.colwise().sum().transpose();
    const Matrix d_pooled = grad_out * p.W_out;

    Matrix dh = Matrix::Zero(cache_.h.rows(), cache_.h.cols());
    for (std::size_t i = 0; i < cache_.attention.size(); ++i) {
      const auto& a = cache_.attention[i];
      const auto off = cache_.offsets[i];
      const auto n = cache_.offsets[i + 1] - off;
      const auto h = cache_.h.middleRows(off, n);
      const VectorXd dz = d_pooled.row(static_cast<Eigen::Index>(i)).transpose();
      dh.middleRows(off, n) += a.alpha * dz.transpose();
      const VectorXd d_alpha = h * dz;
      const VectorXd de = a.alpha.array() * (d_alpha.array() - a.alpha.dot(d_alpha));
      g.b_attn(0) += de.sum();
      g.w_attn += a.proj.transpose() * de;
      const Matrix d_pre =
          (de * p.w_attn.transpose()).array() * (1.0 - a.proj.array().square());
      g.W_h += d_pre.transpose() * h;
      g.b_h += d_pre.colwise().sum().transpose();
      dh.middleRows(off, n) += d_pre * p.W_h;
    }

    const auto& bc = cache_.backbone;
    Matrix d = std::move(dh);
    for (int i = 2; i >= 0; --i) {
      const auto& l = p.fc[static_cast<std::size_t>(i)];
      auto& gl = g.fc[static_cast<std::size_t>(i)];
      if (bc.mask[i].size() > 0) d.array() *= bc.mask[i].array();
      d.array() *= (bc.bn_out[i].array() > 0.0).cast<double>();
      gl.gamma = (d.array() * bc.xhat[i].array()).colwise().sum().transpose();
      gl.beta = d.colwise().sum().transpose();
      const Matrix dxhat = d.array().rowwise() * l.gamma.transpose().array();
      const double m = static_cast<double>(d.rows());
      const Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
      const Eigen::RowVectorXd sum_dxhat_xhat = (dxhat.array() * bc.xhat[i].array()).colwise().sum();
      Matrix dz = (m * dxhat).rowwise() - sum_dxhat;
      dz -= (bc.xhat[i].array().rowwise() * sum_dxhat_xhat.array()).matrix();
      dz = dz.array().rowwise() * (bc.inv_std[i].transpose().array() / m);
      gl.W = dz.transpose() * bc.input[i];
      gl.b = dz.colwise().sum().transpose();
      d = dz * l.W;
    }

    if (g.layer_logits.size() > 0) {
      const auto embed = static_cast<Eigen::Index>(cfg_.embed_dim);
      for (std::size_t i = 0; i < cache_.inputs.size(); ++i) {
        const auto off = cache_.offsets[i];
        const auto n = cache_.offsets[i + 1] - off;
        const Matrix xs = cache_.x.block(off, 0, n, embed);
        const Matrix dxs = d.block(off, 0, n, embed);
        g.layer_logits += aggregate_backward(*cache_.inputs[i].stack, p.layer_logits, xs, dxs);
      }
    }
    return g;
  }

  bool has_cache() const { return cache_.valid; }
  // Activations of the last train-mode forward, or null.
  const BackboneCache* last_backbone() const { return cache_.valid ? &cache_.backbone : nullptr; }

 private:
  struct Cache {
    bool valid = false;
    std::vector<ModelInput> inputs;
    std::vector<Eigen::Index> offsets;
    Matrix x, h, pooled;
    BackboneCache backbone;
    std::vector<AttentionSummary> attention;
  };

  ModelConfig cfg_;
  ModelParams params_;
  Cache cache_;
};

}  // namespace voqa
