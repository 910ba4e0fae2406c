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

// Central-difference gradient check of the full model and loss, shared by
// the unit tests and the acceptance runner.

#include <map>
#include <random>
#include <string>
#include <vector>

#include "voqa/loss.hpp"
#include "voqa/model.hpp"

namespace gradcheck {

struct Fixture {
  voqa::ModelConfig cfg;
  std::vector<voqa::EmbeddingStack> stacks;
  std::vector<voqa::ModelInput> batch;
  voqa::Matrix target;
  voqa::VectorXd y_max;
};

inline Fixture make_fixture(std::uint64_t seed, voqa::FeatureMode mode, double dropout) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> frames(4, 10);
  Fixture f;
  f.cfg.features = mode;
  f.cfg.embed_dim = voqa::uses_embeddings(mode) ? 8 : 0;
  f.cfg.num_layers = 3;
  f.cfg.num_targets = 2;
  f.cfg.hidden = {8, 6, 5};
  f.cfg.attention_dim = 4;
  f.cfg.dropout = dropout;
  const std::size_t n = 8;
  f.stacks.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& s = f.stacks[i];
    s.num_layers = 3;
    s.num_frames = static_cast<std::size_t>(frames(rng));
    s.dim = 8;
    s.values.resize(s.num_layers * s.num_frames * s.dim);
    for (float& v : s.values) v = static_cast<float>(g(rng));
  }
  for (std::size_t i = 0; i < n; ++i) {
    voqa::ModelInput in;
    if (voqa::uses_embeddings(mode)) in.stack = &f.stacks[i];
    in.lld = voqa::VectorXd(static_cast<Eigen::Index>(f.cfg.lld_dim()));
    for (Eigen::Index k = 0; k < in.lld.size(); ++k) in.lld(k) = g(rng);
    f.batch.push_back(in);
  }
  f.target.resize(static_cast<Eigen::Index>(n), 2);
  for (Eigen::Index i = 0; i < f.target.size(); ++i) f.target.data()[i] = 2.0 + g(rng);
  f.y_max = voqa::target_max(f.target);
  return f;
}

inline std::string group_of(const std::string& tensor) {
  if (tensor == "layer_logits") return "layer_logits";
  if (tensor.find(".gamma") != std::string::npos || tensor.find(".beta") != std::string::npos) {
    return "bn_affine";
  }
  if (tensor.rfind("fc", 0) == 0) return "fc";
  if (tensor.rfind("attn", 0) == 0) return "attention";
  return "head";
}

struct Result {
  std::map<std::string, double> worst_by_group;
  std::size_t checked = 0;
  // Elements whose +-step evaluations flip a ReLU; the difference quotient
  // there straddles a kink and is not a derivative estimate.
  std::size_t kinks = 0;
  double worst = 0.0;
};

// Sign pattern of every ReLU input in the last train-mode forward.
inline std::vector<bool> relu_pattern(const voqa::Model& m) {
  std::vector<bool> out;
  const auto* c = m.last_backbone();
  for (const auto& y : c->bn_out) {
    for (Eigen::Index i = 0; i < y.size(); ++i) out.push_back(y.data()[i] > 0.0);
  }
  return out;
}

// Central differences use the fourth-order stencil at the given step.
// Max over every scalar parameter of |a - f| / max(|a|, |f|, floor), with
// the same dropout masks in every evaluation. Entries below `floor` in
// magnitude are thereby held to an absolute bound of floor * tolerance, which
// sits above the difference quotient's own round-off and truncation error.
inline Result run(std::uint64_t seed, voqa::FeatureMode mode = voqa::FeatureMode::kSfmWsJsh,
                  double dropout = 0.3, double beta = 1.0, double step = 1e-4,
                  double floor = 1e-3) {
  auto f = make_fixture(seed, mode, dropout);
  voqa::Model model(f.cfg, seed + 1000);
  {
    // Non-trivial layer weights and BN affine parameters.
    std::mt19937_64 rng(seed + 7);
    std::normal_distribution<double> g(0.0, 0.5);
    auto& p = model.params();
    for (Eigen::Index i = 0; i < p.layer_logits.size(); ++i) p.layer_logits(i) = g(rng);
    for (auto& l : p.fc) {
      for (Eigen::Index i = 0; i < l.gamma.size(); ++i) {
        l.gamma(i) = 1.0 + g(rng);
        l.beta(i) = g(rng);
      }
    }
  }
  const std::uint64_t mask_seed = seed * 31 + 5;
  auto loss_at = [&]() {
    std::mt19937_64 rng(mask_seed);
    auto pred = model.forward(f.batch, voqa::Mode::kTrain, &rng);
    return voqa::wmse(pred, f.target, f.y_max, beta);
  };
  const auto base = loss_at();
  const auto base_pattern = relu_pattern(model);
  const auto grads = model.backward(base.grad);

  std::vector<std::pair<std::string, std::vector<double>>> analytic;
  voqa::visit_trainable(grads, [&](std::string_view name, std::span<const double> s) {
    analytic.emplace_back(std::string(name), std::vector<double>(s.begin(), s.end()));
  });

  Result r;
  std::size_t t = 0;
  std::vector<std::pair<std::string, std::span<double>>> tensors;
  voqa::visit_trainable(model.params(), [&](std::string_view name, std::span<double> s) {
    tensors.emplace_back(std::string(name), s);
  });
  for (auto& [name, span] : tensors) {
    const auto group = group_of(name);
    double& worst = r.worst_by_group[group];
    for (std::size_t i = 0; i < span.size(); ++i) {
      const double keep = span[i];
      // Fourth-order central stencil at +-step and +-2*step.
      double f[4];
      bool kink = false;
      const double offsets[4] = {2.0 * step, step, -step, -2.0 * step};
      for (int k = 0; k < 4; ++k) {
        span[i] = keep + offsets[k];
        f[k] = loss_at().value;
        kink = kink || relu_pattern(model) != base_pattern;
      }
      span[i] = keep;
      if (kink) {
        ++r.kinks;
        continue;
      }
      const double fd = (-f[0] + 8.0 * f[1] - 8.0 * f[2] + f[3]) / (12.0 * step);
      const double a = analytic[t].second[i];
      const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), floor});
      worst = std::max(worst, rel);
      r.worst = std::max(r.worst, rel);
      ++r.checked;
    }
    ++t;
  }
  return r;
}

}  // namespace gradcheck
