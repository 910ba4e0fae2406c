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
#include <memory>
#include <string>
#include <vector>

#include "voqa/embedding.hpp"
#include "voqa/error.hpp"
#include "voqa/lld.hpp"
#include "voqa/model.hpp"

namespace voqa {

// One labeled utterance with everything the model may consume.
struct Example {
  std::string utterance_id;
  std::string speaker_id;
  std::string subset;  // "A" (sustained vowel) or "S" (sentences)
  std::string role = "clean";
  std::string noise_kind;
  std::string snr_db;
  VectorXd label;
  LldVector lld;
  std::shared_ptr<const EmbeddingStack> stack;
};

// Descriptor values consumed by a feature mode, NaN where unmeasured.
inline std::vector<double> lld_values(const LldVector& v, FeatureMode mode) {
  switch (lld_width(mode)) {
    case 0: return {};
    case 3: return {v.jitter_local, v.shimmer_local, v.hnr_db};
    default: return {v.jitter_local, v.shimmer_local, v.hnr_db, v.cpp_db};
  }
}

// Standardization with training-set statistics. Unmeasured descriptors are
// replaced by the training mean, i.e. 0 after standardization.
struct LldNormalizer {
  VectorXd mean;
  VectorXd stddev;

  std::size_t width() const { return static_cast<std::size_t>(mean.size()); }

  static LldNormalizer fit(const std::vector<Example>& train, FeatureMode mode) {
    const std::size_t a = lld_width(mode);
    LldNormalizer n;
    n.mean = VectorXd::Zero(static_cast<Eigen::Index>(a));
    n.stddev = VectorXd::Ones(static_cast<Eigen::Index>(a));
    for (std::size_t k = 0; k < a; ++k) {
      double sum = 0.0, sq = 0.0;
      std::size_t cnt = 0;
      for (const auto& e : train) {
        const double v = lld_values(e.lld, mode)[k];
        if (std::isnan(v)) continue;
        sum += v;
        ++cnt;
      }
      if (cnt == 0) continue;
      const double mu = sum / static_cast<double>(cnt);
      for (const auto& e : train) {
        const double v = lld_values(e.lld, mode)[k];
        if (!std::isnan(v)) sq += (v - mu) * (v - mu);
      }
      const double sd = std::sqrt(sq / static_cast<double>(cnt));
      n.mean(static_cast<Eigen::Index>(k)) = mu;
      n.stddev(static_cast<Eigen::Index>(k)) = sd > 1e-12 ? sd : 1.0;
    }
    return n;
  }

  VectorXd apply(const LldVector& v, FeatureMode mode, std::size_t* imputed = nullptr) const {
    const auto raw = lld_values(v, mode);
    if (raw.size() != width()) fail(ErrorCode::kShapeError, "descriptor width does not match normalizer");
    VectorXd out(static_cast<Eigen::Index>(raw.size()));
    for (std::size_t k = 0; k < raw.size(); ++k) {
      const auto i = static_cast<Eigen::Index>(k);
      if (std::isnan(raw[k])) {
        out(i) = 0.0;
        if (imputed) ++*imputed;
      } else {
        out(i) = (raw[k] - mean(i)) / stddev(i);
      }
    }
    return out;
  }
};

inline std::vector<ModelInput> make_inputs(const std::vector<Example>& examples, const LldNormalizer& norm,
                                           FeatureMode mode, std::size_t* imputed = nullptr) {
  std::vector<ModelInput> out;
  out.reserve(examples.size());
  std::vector<std::string> missing;
  for (const auto& e : examples) {
    ModelInput in;
    if (uses_embeddings(mode)) {
      if (!e.stack) missing.push_back(e.utterance_id);
      in.stack = e.stack.get();
    }
    in.lld = norm.apply(e.lld, mode, imputed);
    out.push_back(std::move(in));
  }
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) list += (i ? ", " : "") + missing[i];
    if (missing.size() > 20) list += ", ...";
    fail(ErrorCode::kMissingEmbeddings, std::to_string(missing.size()) + " utterances lack embeddings: " + list);
  }
  return out;
}

inline Matrix label_matrix(const std::vector<Example>& examples) {
  if (examples.empty()) return Matrix(0, 0);
  Matrix y(static_cast<Eigen::Index>(examples.size()), examples.front().label.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].label.size() != y.cols()) fail(ErrorCode::kShapeError, "label widths differ");
    y.row(static_cast<Eigen::Index>(i)) = examples[i].label.transpose();
  }
  return y;
}

}  // namespace voqa
