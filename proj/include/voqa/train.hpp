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

#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "voqa/error.hpp"
#include "voqa/loss.hpp"
#include "voqa/model.hpp"
#include "voqa/optim.hpp"
#include "voqa/synthetic.hpp"

namespace voqa {

struct TrainConfig {
  int epochs = 100;
  double learning_rate = 0.002;
  double weight_decay = 1e-5;
  double beta = 1.0;  // WMSE severity emphasis
  std::size_t batch_size = 16;
  double dropout = 0.3;
  std::uint64_t seed = 0;
  std::array<std::size_t, 3> hidden = {512, 256, 128};
  std::size_t attention_dim = 64;

  static constexpr std::size_t kMinBatch = 4;  // batch-norm statistics

  void validate() const {
    if (epochs < 1) fail(ErrorCode::kConfigError, "epochs must be >= 1");
    if (!(learning_rate >= 0.0)) fail(ErrorCode::kConfigError, "learning_rate must be >= 0");
    if (!(weight_decay >= 0.0)) fail(ErrorCode::kConfigError, "weight_decay must be >= 0");
    if (!(beta >= 0.0)) fail(ErrorCode::kConfigError, "beta must be >= 0");
    if (batch_size < kMinBatch) fail(ErrorCode::kConfigError, "batch_size must be >= 4");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail(ErrorCode::kConfigError, "dropout must lie in [0, 1)");
    for (auto h : hidden)
      if (h == 0) fail(ErrorCode::kConfigError, "hidden sizes must be positive");
    if (attention_dim == 0) fail(ErrorCode::kConfigError, "attention_dim must be positive");
  }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  bool has_validation = false;
  AttributeMetrics validation;
};

struct TrainOutcome {
  Model final_model;
  Model best_model;
  int best_epoch = 0;
  std::vector<EpochRecord> log;
};

// Minibatch boundaries over n shuffled items; a trailing batch smaller than
// the batch-norm minimum joins the previous one.
inline std::vector<std::pair<std::size_t, std::size_t>> batch_bounds(std::size_t n, std::size_t batch) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t s = 0; s < n; s += batch) out.emplace_back(s, std::min(n, s + batch));
  if (out.size() > 1 && out.back().second - out.back().first < TrainConfig::kMinBatch) {
    const auto last = out.back();
    out.pop_back();
    out.back().second = last.second;
  }
  return out;
}

// Eval-mode predictions, chunked so large sets stay within memory.
inline Matrix predict_all(Model& model, const std::vector<ModelInput>& inputs, std::size_t chunk = 64) {
  Matrix out(static_cast<Eigen::Index>(inputs.size()), static_cast<Eigen::Index>(model.config().num_targets));
  for (std::size_t s = 0; s < inputs.size(); s += chunk) {
    const std::size_t e = std::min(inputs.size(), s + chunk);
    std::vector<ModelInput> part(inputs.begin() + static_cast<std::ptrdiff_t>(s),
                                 inputs.begin() + static_cast<std::ptrdiff_t>(e));
    out.middleRows(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(e - s)) =
        model.forward(part, Mode::kEval);
  }
  return out;
}

// Fixed-epoch AdamW training under WMSE. Data order, dropout masks and
// initialization all derive from cfg.seed. The best model is the one with
// the lowest validation macro RMSE, or the lowest training loss when no
// validation set is given. Hidden sizes, attention width and dropout come
// from `cfg` and override those in `model_cfg`.
inline TrainOutcome train_model(ModelConfig model_cfg, const TrainConfig& cfg,
                                const std::vector<ModelInput>& x, const Matrix& y,
                                const std::vector<ModelInput>* val_x = nullptr, const Matrix* val_y = nullptr,
                                const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  model_cfg.hidden = cfg.hidden;
  model_cfg.attention_dim = cfg.attention_dim;
  model_cfg.dropout = cfg.dropout;
  if (x.empty()) fail(ErrorCode::kInvalidArgument, "training set is empty");
  if (static_cast<std::size_t>(y.rows()) != x.size()) fail(ErrorCode::kShapeError, "label rows != inputs");
  if (x.size() < TrainConfig::kMinBatch) {
    fail(ErrorCode::kInvalidArgument, "training set needs at least 4 utterances for batch norm");
  }
  if (static_cast<std::size_t>(y.cols()) != model_cfg.num_targets) {
    fail(ErrorCode::kShapeError, "label width != model targets");
  }
  const VectorXd y_max = target_max(y);
  for (Eigen::Index k = 0; k < y_max.size(); ++k) {
    if (!(y_max(k) > 0.0)) fail(ErrorCode::kDegenerateScale, "training targets have non-positive maximum");
  }

  std::mt19937_64 rng(mix_seed(cfg.seed, "train"));
  Model model(model_cfg, mix_seed(cfg.seed, "init"));
  model.params().b_out = y.colwise().mean().transpose();

  AdamWConfig opt{cfg.learning_rate, cfg.weight_decay};
  AdamWState state;
  TrainOutcome out;
  double best_score = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    double loss_sum = 0.0;
    for (const auto& [s, e] : batch_bounds(order.size(), cfg.batch_size)) {
      std::vector<ModelInput> batch;
      Matrix target(static_cast<Eigen::Index>(e - s), y.cols());
      for (std::size_t i = s; i < e; ++i) {
        batch.push_back(x[order[i]]);
        target.row(static_cast<Eigen::Index>(i - s)) = y.row(static_cast<Eigen::Index>(order[i]));
      }
      const Matrix pred = model.forward(batch, Mode::kTrain, &rng);
      const auto loss = wmse(pred, target, y_max, cfg.beta);
      const auto grads = model.backward(loss.grad);
      adamw_step(model.params(), grads, state, opt);
      loss_sum += loss.value * static_cast<double>(e - s);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(x.size());
    double score = rec.train_loss;
    if (val_x && val_y && !val_x->empty()) {
      rec.has_validation = true;
      rec.validation = score_matrix(predict_all(model, *val_x), *val_y);
      score = rec.validation.macro_rmse;
    }
    if (score < best_score) {
      best_score = score;
      out.best_epoch = epoch;
      out.best_model = Model(model_cfg, model.params());
    }
    if (on_epoch) on_epoch(rec);
    out.log.push_back(std::move(rec));
  }
  out.final_model = Model(model_cfg, model.params());
  return out;
}

struct PatientTable {
  std::vector<std::string> speakers;  // sorted
  std::vector<std::size_t> counts;    // utterances per speaker
  Matrix pred;
  Matrix target;
};

// Unweighted mean of each speaker's utterance predictions, paired with the
// speaker's label (mean of its utterance labels, identical by construction).
inline PatientTable patient_aggregate(const Matrix& pred, const Matrix& target,
                                      const std::vector<std::string>& speaker_of_row) {
  if (static_cast<std::size_t>(pred.rows()) != speaker_of_row.size() || pred.rows() != target.rows() ||
      pred.cols() != target.cols()) {
    fail(ErrorCode::kShapeError, "patient_aggregate operand shapes differ");
  }
  std::map<std::string, std::vector<Eigen::Index>> rows;
  for (std::size_t i = 0; i < speaker_of_row.size(); ++i) {
    if (speaker_of_row[i].empty()) fail(ErrorCode::kInvalidArgument, "utterance without speaker");
    rows[speaker_of_row[i]].push_back(static_cast<Eigen::Index>(i));
  }
  PatientTable t;
  t.pred.resize(static_cast<Eigen::Index>(rows.size()), pred.cols());
  t.target.resize(static_cast<Eigen::Index>(rows.size()), pred.cols());
  Eigen::Index r = 0;
  for (const auto& [spk, idx] : rows) {
    t.speakers.push_back(spk);
    t.counts.push_back(idx.size());
    VectorXd p = VectorXd::Zero(pred.cols()), y = VectorXd::Zero(pred.cols());
    for (auto i : idx) {
      p += pred.row(i).transpose();
      y += target.row(i).transpose();
    }
    t.pred.row(r) = p.transpose() / static_cast<double>(idx.size());
    t.target.row(r) = y.transpose() / static_cast<double>(idx.size());
    ++r;
  }
  return t;
}

}  // namespace voqa
