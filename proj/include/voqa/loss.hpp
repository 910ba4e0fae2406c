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
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "voqa/error.hpp"
#include "voqa/model.hpp"

namespace voqa {

// Per-attribute maximum of the training targets.
inline VectorXd target_max(const Matrix& targets) {
  if (targets.rows() == 0) fail(ErrorCode::kDegenerateScale, "no training targets");
  return targets.colwise().maxCoeff().transpose();
}

struct LossResult {
  double value = 0.0;
  Matrix grad;  // dL/dpred
};

// Severity-weighted MSE: mean over samples and attributes of
// (1 + beta * Y / y_max) * (pred - Y)^2.
inline LossResult wmse(const Matrix& pred, const Matrix& target, const VectorXd& y_max, double beta) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols() ||
      y_max.size() != target.cols()) {
    fail(ErrorCode::kShapeError, "wmse operand shapes differ");
  }
  if (beta < 0.0) fail(ErrorCode::kInvalidArgument, "beta must be non-negative");
  for (Eigen::Index k = 0; k < y_max.size(); ++k) {
    if (!(y_max(k) > 0.0)) fail(ErrorCode::kDegenerateScale, "y_max must be positive per attribute");
  }
  const double count = static_cast<double>(pred.size());
  LossResult r;
  r.grad.resize(pred.rows(), pred.cols());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    for (Eigen::Index k = 0; k < pred.cols(); ++k) {
      const double w = 1.0 + beta * target(i, k) / y_max(k);
      const double e = pred(i, k) - target(i, k);
      sum += w * e * e;
      r.grad(i, k) = 2.0 * w * e / count;
    }
  }
  r.value = sum / count;
  return r;
}

inline double mse(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    fail(ErrorCode::kShapeError, "mse operand shapes differ");
  }
  // Same summation order as wmse, so beta = 0 reproduces it exactly.
  double sum = 0.0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    for (Eigen::Index k = 0; k < pred.cols(); ++k) {
      const double e = pred(i, k) - target(i, k);
      sum += e * e;
    }
  }
  return sum / static_cast<double>(pred.size());
}

inline double rmse(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size() || pred.empty()) {
    fail(ErrorCode::kShapeError, "rmse needs equal non-empty inputs");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - target[i]) * (pred[i] - target[i]);
  return std::sqrt(s / static_cast<double>(pred.size()));
}

// Pearson correlation, computed on centered data in two passes.
inline double pcc(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size() || pred.size() < 2) {
    fail(ErrorCode::kShapeError, "pcc needs two equal-length inputs of size >= 2");
  }
  const double n = static_cast<double>(pred.size());
  double mp = 0.0, mt = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    mp += pred[i];
    mt += target[i];
  }
  mp /= n;
  mt /= n;
  double spt = 0.0, spp = 0.0, stt = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double a = pred[i] - mp, b = target[i] - mt;
    spt += a * b;
    spp += a * a;
    stt += b * b;
  }
  if (!(spp > 0.0) || !(stt > 0.0)) {
    fail(ErrorCode::kUndefinedCorrelation, "pcc undefined for a zero-variance input");
  }
  return std::clamp(spt / std::sqrt(spp * stt), -1.0, 1.0);
}

struct AttributeMetrics {
  std::vector<double> rmse;  // per attribute
  std::vector<double> pcc;   // per attribute; NaN when undefined
  double macro_rmse = 0.0;
  double macro_pcc = 0.0;    // mean over attributes with a defined pcc
  double pooled_rmse = 0.0;  // all attributes flattened together
  double pooled_pcc = 0.0;
  std::size_t n = 0;
};

// Per-attribute RMSE/PCC plus macro averages and pooled values.
inline AttributeMetrics score_matrix(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols() || pred.rows() == 0) {
    fail(ErrorCode::kShapeError, "metric operand shapes differ");
  }
  AttributeMetrics m;
  m.n = static_cast<std::size_t>(pred.rows());
  std::size_t defined = 0;
  for (Eigen::Index k = 0; k < pred.cols(); ++k) {
    const VectorXd p = pred.col(k), t = target.col(k);
    const std::span<const double> ps(p.data(), static_cast<std::size_t>(p.size()));
    const std::span<const double> ts(t.data(), static_cast<std::size_t>(t.size()));
    m.rmse.push_back(rmse(ps, ts));
    double r = std::numeric_limits<double>::quiet_NaN();
    try {
      r = pcc(ps, ts);
      m.macro_pcc += r;
      ++defined;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kUndefinedCorrelation && e.code() != ErrorCode::kShapeError) throw;
    }
    m.pcc.push_back(r);
    m.macro_rmse += m.rmse.back();
  }
  m.macro_rmse /= static_cast<double>(pred.cols());
  m.macro_pcc = defined > 0 ? m.macro_pcc / static_cast<double>(defined)
                            : std::numeric_limits<double>::quiet_NaN();
  const Matrix pc = pred, tc = target;
  const std::span<const double> pa(pc.data(), static_cast<std::size_t>(pc.size()));
  const std::span<const double> ta(tc.data(), static_cast<std::size_t>(tc.size()));
  m.pooled_rmse = rmse(pa, ta);
  try {
    m.pooled_pcc = pcc(pa, ta);
  } catch (const Error&) {
    m.pooled_pcc = std::numeric_limits<double>::quiet_NaN();
  }
  return m;
}

}  // namespace voqa
