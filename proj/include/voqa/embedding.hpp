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

#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "voqa/audio.hpp"
#include "voqa/error.hpp"

namespace voqa {

// Per-utterance hidden states of a speech foundation model:
// values[layer][frame][dim], layer 0 being the model's input embedding.
struct EmbeddingStack {
  std::size_t num_layers = 0;
  std::size_t num_frames = 0;
  std::size_t dim = 0;
  std::vector<float> values;
  // Not part of the on-disk layout; set by whoever knows the producer.
  std::string model_tag;

  float at(std::size_t layer, std::size_t frame, std::size_t d) const {
    return values[(layer * num_frames + frame) * dim + d];
  }
  // Row-major T x D view of one layer.
  Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
  layer(std::size_t l) const {
    return {values.data() + l * num_frames * dim, static_cast<Eigen::Index>(num_frames),
            static_cast<Eigen::Index>(dim)};
  }
  double mean() const {
    double s = 0.0;
    for (float v : values) s += v;
    return values.empty() ? 0.0 : s / static_cast<double>(values.size());
  }
};

using FrameFeatures = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline void validate_stack(const EmbeddingStack& s) {
  if (s.num_layers < 1 || s.num_frames < 1 || s.dim < 1) {
    fail(ErrorCode::kCorruptStack, "stack dimensions must be positive");
  }
  if (s.values.size() != s.num_layers * s.num_frames * s.dim) {
    fail(ErrorCode::kCorruptStack, "payload size does not match header");
  }
  for (float v : s.values) {
    if (!std::isfinite(v)) fail(ErrorCode::kNonFiniteValues, "stack has non-finite values");
  }
}

// VQES little-endian layout:
//   "VQES" | u32 version=1 | u32 layers | u32 frames | u32 dim |
//   f32[layers*frames*dim] | u32 crc32(payload)
inline constexpr std::uint32_t kVqesVersion = 1;

inline std::uint32_t crc32_of(std::span<const unsigned char> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
    crc = ::crc32(crc, bytes.data() + pos, chunk);
    pos += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

inline std::vector<unsigned char> encode_stack(const EmbeddingStack& s) {
  validate_stack(s);
  std::vector<unsigned char> out;
  out.insert(out.end(), {'V', 'Q', 'E', 'S'});
  detail::put_u32(out, kVqesVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(s.num_layers));
  detail::put_u32(out, static_cast<std::uint32_t>(s.num_frames));
  detail::put_u32(out, static_cast<std::uint32_t>(s.dim));
  const std::size_t payload_start = out.size();
  for (float v : s.values) {
    std::uint32_t raw;
    std::memcpy(&raw, &v, sizeof raw);
    detail::put_u32(out, raw);
  }
  const auto crc = crc32_of(std::span<const unsigned char>(out).subspan(payload_start));
  detail::put_u32(out, crc);
  return out;
}

inline EmbeddingStack decode_stack(std::span<const unsigned char> bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), "VQES", 4) != 0) {
    fail(ErrorCode::kFormatError, "bad VQES magic");
  }
  const auto version = detail::read_u32(bytes.data() + 4);
  if (version != kVqesVersion) {
    fail(ErrorCode::kFormatError, "unsupported VQES version " + std::to_string(version));
  }
  EmbeddingStack s;
  s.num_layers = detail::read_u32(bytes.data() + 8);
  s.num_frames = detail::read_u32(bytes.data() + 12);
  s.dim = detail::read_u32(bytes.data() + 16);
  if (s.num_layers < 1 || s.num_frames < 1 || s.dim < 1) {
    fail(ErrorCode::kCorruptStack, "zero-sized VQES dimension");
  }
  const std::size_t count = s.num_layers * s.num_frames * s.dim;
  if (bytes.size() != 20 + 4 * count + 4) {
    fail(ErrorCode::kCorruptStack, "payload is " + std::to_string(bytes.size()) +
                                       " bytes, header implies " + std::to_string(24 + 4 * count));
  }
  const auto payload = bytes.subspan(20, 4 * count);
  if (crc32_of(payload) != detail::read_u32(bytes.data() + 20 + 4 * count)) {
    fail(ErrorCode::kCorruptStack, "CRC mismatch");
  }
  s.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t raw = detail::read_u32(payload.data() + 4 * i);
    std::memcpy(&s.values[i], &raw, sizeof raw);
  }
  validate_stack(s);
  return s;
}

inline EmbeddingStack read_stack(const std::filesystem::path& path) {
  auto bytes = detail::read_file_bytes(path);
  return decode_stack(bytes);
}

inline void write_stack(const EmbeddingStack& s, const std::filesystem::path& path) {
  const auto bytes = encode_stack(s);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kFileError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// Softmax-normalized learnable layer weights. Logits start at zero.
struct LayerWeights {
  Eigen::VectorXd logits;

  explicit LayerWeights(std::size_t layers = 0)
      : logits(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layers))) {}
  explicit LayerWeights(Eigen::VectorXd l) : logits(std::move(l)) {}

  Eigen::VectorXd weights() const { return softmax(logits); }

  static Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
    if (z.size() == 0) return z;
    const double m = z.maxCoeff();
    Eigen::VectorXd e = (z.array() - m).exp();
    return e / e.sum();
  }
};

// X_S[t][d] = sum_l softmax(logits)_l * values[l][t][d].
inline FrameFeatures aggregate(const EmbeddingStack& stack, const Eigen::VectorXd& logits) {
  if (static_cast<std::size_t>(logits.size()) != stack.num_layers) {
    fail(ErrorCode::kShapeError, "layer logits length " + std::to_string(logits.size()) +
                                     " != stack layers " + std::to_string(stack.num_layers));
  }
  const Eigen::VectorXd w = LayerWeights::softmax(logits);
  FrameFeatures out = FrameFeatures::Zero(static_cast<Eigen::Index>(stack.num_frames),
                                          static_cast<Eigen::Index>(stack.dim));
  for (std::size_t l = 0; l < stack.num_layers; ++l) {
    out.noalias() += w(static_cast<Eigen::Index>(l)) * stack.layer(l).cast<double>();
  }
  return out;
}

inline FrameFeatures aggregate(const EmbeddingStack& stack, const LayerWeights& lw) {
  return aggregate(stack, lw.logits);
}

// dL/dlogits given dL/dX_S for the aggregate above:
// dlogit_l = w_l * <dX, h_l - X_S>.
inline Eigen::VectorXd aggregate_backward(const EmbeddingStack& stack,
                                          const Eigen::VectorXd& logits,
                                          const FrameFeatures& aggregated,
                                          const Eigen::Ref<const FrameFeatures>& grad) {
  const Eigen::VectorXd w = LayerWeights::softmax(logits);
  const double base = (grad.array() * aggregated.array()).sum();
  Eigen::VectorXd out(logits.size());
  for (std::size_t l = 0; l < stack.num_layers; ++l) {
    const double inner = (grad.array() * stack.layer(l).cast<double>().array()).sum();
    out(static_cast<Eigen::Index>(l)) = w(static_cast<Eigen::Index>(l)) * (inner - base);
  }
  return out;
}

// Frame count an encoder with a fixed hop yields for `num_samples`.
inline std::size_t expected_num_frames(std::size_t num_samples, int rate, double hop_seconds = 0.02) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(num_samples) / (rate * hop_seconds) + 1e-9));
}

struct StackSetReport {
  std::size_t files = 0;
  std::size_t num_layers = 0;
  std::size_t dim = 0;
  std::vector<std::string> problems;  // one line per offending file
  bool ok() const { return problems.empty(); }
};

// Conformance check for an exported set: every file decodes (magic, shape,
// CRC, finite values) and all share one (num_layers, dim).
inline StackSetReport check_stack_set(const std::vector<std::filesystem::path>& paths) {
  StackSetReport report;
  for (const auto& p : paths) {
    try {
      const auto s = read_stack(p);
      if (report.files == 0) {
        report.num_layers = s.num_layers;
        report.dim = s.dim;
      } else if (s.num_layers != report.num_layers || s.dim != report.dim) {
        report.problems.push_back(p.string() + ": shape (" + std::to_string(s.num_layers) + ", " +
                                  std::to_string(s.dim) + ") differs from (" +
                                  std::to_string(report.num_layers) + ", " +
                                  std::to_string(report.dim) + ")");
      }
      ++report.files;
    } catch (const Error& e) {
      report.problems.push_back(p.string() + ": " + e.what());
    }
  }
  return report;
}

inline FrameFeatures last_layer(const EmbeddingStack& stack) {
  return stack.layer(stack.num_layers - 1).cast<double>();
}

}  // namespace voqa
