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

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "voqa/audio.hpp"
#include "voqa/dataset.hpp"
#include "voqa/embedding.hpp"
#include "voqa/error.hpp"
#include "voqa/model.hpp"

namespace voqa {

// Binary checkpoint: "VQCK", u32 version, u32 metadata length, metadata JSON,
// u32 tensor count, then per tensor {u32 name length, name, u32 rows,
// u32 cols, rows*cols float64}, closed by a CRC-32 of everything before it.
// All integers and floats little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  LldNormalizer normalizer;
  nlohmann::json meta = nlohmann::json::object();  // free-form provenance
};

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"features", std::string(to_string(c.features))},
          {"embed_dim", c.embed_dim},
          {"num_layers", c.num_layers},
          {"num_targets", c.num_targets},
          {"hidden", c.hidden},
          {"attention_dim", c.attention_dim},
          {"dropout", c.dropout},
          {"bn_momentum", c.bn_momentum},
          {"bn_eps", c.bn_eps}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.features = parse_feature_mode(j.at("features").get<std::string>());
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.num_layers = j.at("num_layers").get<std::size_t>();
  c.num_targets = j.at("num_targets").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::array<std::size_t, 3>>();
  c.attention_dim = j.at("attention_dim").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.bn_momentum = j.at("bn_momentum").get<double>();
  c.bn_eps = j.at("bn_eps").get<double>();
  return c;
}

namespace detail {

struct NamedTensor {
  std::string name;
  std::uint32_t rows = 0, cols = 0;
  std::span<double> data;
};

inline std::vector<NamedTensor> tensors_of(ModelParams& p, LldNormalizer& n) {
  std::vector<NamedTensor> out;
  auto add = [&out](std::string_view name, std::span<double> s, std::size_t rows, std::size_t cols) {
    out.push_back({std::string(name), static_cast<std::uint32_t>(rows), static_cast<std::uint32_t>(cols), s});
  };
  // Shapes come from the tensors themselves; visit order is fixed.
  auto shape_of = [&p](std::string_view name) -> std::pair<std::size_t, std::size_t> {
    auto mat = [](const Matrix& m) {
      return std::pair<std::size_t, std::size_t>(static_cast<std::size_t>(m.rows()),
                                                 static_cast<std::size_t>(m.cols()));
    };
    if (name == "attn.W_h") return mat(p.W_h);
    if (name == "head.W") return mat(p.W_out);
    if (name.size() == 5 && name.substr(0, 2) == "fc" && name.substr(3) == ".W") {
      return mat(p.fc[static_cast<std::size_t>(name[2] - '1')].W);
    }
    return {0, 1};
  };
  auto visit = [&](std::string_view name, std::span<double> s) {
    auto [r, c] = shape_of(name);
    if (r == 0) r = s.size();
    add(name, s, r, c);
  };
  visit_trainable(p, visit);
  visit_buffers(p, visit);
  add("lld.mean", std::span(n.mean.data(), static_cast<std::size_t>(n.mean.size())),
      static_cast<std::size_t>(n.mean.size()), 1);
  add("lld.std", std::span(n.stddev.data(), static_cast<std::size_t>(n.stddev.size())),
      static_cast<std::size_t>(n.stddev.size()), 1);
  return out;
}

}  // namespace detail

inline std::vector<unsigned char> encode_checkpoint(const Checkpoint& ck_in) {
  Checkpoint ck = ck_in;
  std::vector<unsigned char> b = {'V', 'Q', 'C', 'K'};
  detail::put_u32(b, kCheckpointVersion);
  const std::string meta = nlohmann::json{{"model", to_json(ck.config)}, {"meta", ck.meta}}.dump();
  detail::put_u32(b, static_cast<std::uint32_t>(meta.size()));
  b.insert(b.end(), meta.begin(), meta.end());
  const auto tensors = detail::tensors_of(ck.params, ck.normalizer);
  detail::put_u32(b, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    detail::put_u32(b, static_cast<std::uint32_t>(t.name.size()));
    b.insert(b.end(), t.name.begin(), t.name.end());
    detail::put_u32(b, t.rows);
    detail::put_u32(b, t.cols);
    for (double v : t.data) {
      std::uint64_t u;
      std::memcpy(&u, &v, 8);
      for (int i = 0; i < 8; ++i) b.push_back(static_cast<unsigned char>(u >> (8 * i)));
    }
  }
  detail::put_u32(b, crc32_of(b));
  return b;
}

inline Checkpoint decode_checkpoint(std::span<const unsigned char> b) {
  auto corrupt = [](const std::string& why) { fail(ErrorCode::kFormatError, "checkpoint: " + why); };
  if (b.size() < 16 || std::memcmp(b.data(), "VQCK", 4) != 0) corrupt("bad magic");
  if (crc32_of(b.first(b.size() - 4)) != detail::read_u32(b.data() + b.size() - 4)) corrupt("CRC mismatch");
  if (detail::read_u32(b.data() + 4) != kCheckpointVersion) corrupt("unsupported version");
  std::size_t pos = 8;
  auto need = [&](std::size_t n) {
    if (pos + n > b.size() - 4) corrupt("truncated");
  };
  need(4);
  const std::uint32_t meta_len = detail::read_u32(b.data() + pos);
  pos += 4;
  need(meta_len);
  const auto meta = nlohmann::json::parse(b.begin() + static_cast<std::ptrdiff_t>(pos),
                                          b.begin() + static_cast<std::ptrdiff_t>(pos + meta_len));
  pos += meta_len;
  Checkpoint ck;
  ck.config = model_config_from_json(meta.at("model"));
  ck.meta = meta.at("meta");
  ck.params = init_params(ck.config, 0);
  const auto width = static_cast<Eigen::Index>(ck.config.lld_dim());
  ck.normalizer.mean = VectorXd::Zero(width);
  ck.normalizer.stddev = VectorXd::Ones(width);
  auto tensors = detail::tensors_of(ck.params, ck.normalizer);
  need(4);
  if (detail::read_u32(b.data() + pos) != tensors.size()) corrupt("tensor count mismatch");
  pos += 4;
  for (auto& t : tensors) {
    need(4);
    const std::uint32_t len = detail::read_u32(b.data() + pos);
    pos += 4;
    need(len);
    const std::string name(reinterpret_cast<const char*>(b.data() + pos), len);
    pos += len;
    if (name != t.name) corrupt("expected tensor " + t.name + ", found " + name);
    need(8);
    if (detail::read_u32(b.data() + pos) != t.rows || detail::read_u32(b.data() + pos + 4) != t.cols) {
      corrupt("shape mismatch for " + name);
    }
    pos += 8;
    need(8 * t.data.size());
    for (double& v : t.data) {
      std::uint64_t u = 0;
      for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[pos + i]) << (8 * i);
      std::memcpy(&v, &u, 8);
      pos += 8;
    }
  }
  if (pos != b.size() - 4) corrupt("trailing bytes");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ck);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kFileError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kFileError, "cannot read " + path.string());
  std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

}  // namespace voqa
