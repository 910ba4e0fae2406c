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

#include <cmath>
#include <string>
#include <vector>

#include "voqa/error.hpp"
#include "voqa/model.hpp"

namespace voqa {

struct AdamWConfig {
  double lr = 0.002;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamWState {
  std::vector<std::vector<double>> m, v;  // one entry per trainable tensor
  long step = 0;
};

// Decoupled weight decay (theta -= lr*wd*theta) followed by the
// bias-corrected Adam update. Throws before touching any parameter when a
// gradient is not finite.
inline void adamw_step(ModelParams& params, const ModelParams& grads, AdamWState& state,
                       const AdamWConfig& cfg) {
  std::vector<std::span<const double>> g;
  visit_trainable(grads, [&g](std::string_view, std::span<const double> s) { g.push_back(s); });
  for (const auto& s : g) {
    for (double v : s) {
      if (!std::isfinite(v)) fail(ErrorCode::kNonFiniteGradient, "non-finite gradient");
    }
  }
  if (state.m.empty()) {
    for (const auto& s : g) {
      state.m.emplace_back(s.size(), 0.0);
      state.v.emplace_back(s.size(), 0.0);
    }
  }
  if (state.m.size() != g.size()) fail(ErrorCode::kShapeError, "optimizer state does not match params");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  std::size_t t = 0;
  visit_trainable(params, [&](std::string_view, std::span<double> p) {
    auto& m = state.m[t];
    auto& v = state.v[t];
    const auto& gt = g[t];
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] -= cfg.lr * cfg.weight_decay * p[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gt[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gt[i] * gt[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    ++t;
  });
}

}  // namespace voqa
