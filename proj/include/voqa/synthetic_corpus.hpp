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
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "voqa/audio.hpp"
#include "voqa/embedding.hpp"
#include "voqa/manifest.hpp"
#include "voqa/synthetic.hpp"

namespace voqa {

// A labeled corpus whose ratings are a known saturating function of voice
// parameters that the toolkit can measure (jitter, shimmer, HNR) and of a
// latent carried by the embedding stacks.
struct SynthCorpusSpec {
  std::size_t speakers = 240;
  std::size_t utterances_per_speaker = 2;
  std::size_t layers = 5;
  std::size_t dim = 32;
  std::size_t min_frames = 20;
  std::size_t max_frames = 60;
  double seconds = 1.0;
  double label_noise = 3.0;  // rater noise on the 0-100 scale
  std::string subset = "A";
  std::uint64_t seed = 1;
};

struct SynthSpeaker {
  std::string id;
  double f0 = 150.0;
  double jitter = 0.0;
  double shimmer = 0.0;
  double snr_db = 30.0;  // aspiration noise level, drives HNR
  double latent = 0.0;   // carried by the embedding stacks
  std::vector<double> capev;
  std::vector<double> grbas;
};

struct SynthUtterance {
  std::string id;
  std::size_t speaker = 0;
  Waveform wave;
  EmbeddingStack stack;
};

struct SynthCorpus {
  SynthCorpusSpec spec;
  std::vector<SynthSpeaker> speakers;
  std::vector<SynthUtterance> utterances;
};

inline constexpr double kSynthJitter[2] = {0.002, 0.03};
inline constexpr double kSynthShimmer[2] = {0.01, 0.12};
inline constexpr double kSynthSnr[2] = {5.0, 35.0};

// Saturating map of a [0, 1] drive onto [0, 1].
inline double saturate(double lin) { return (1.0 - std::exp(-1.5 * lin)) / (1.0 - std::exp(-1.5)); }

inline SynthCorpus make_synthetic_corpus(const SynthCorpusSpec& spec) {
  if (spec.min_frames == 0 || spec.max_frames < spec.min_frames) {
    fail(ErrorCode::kConfigError, "synthetic frame range is empty");
  }
  SynthCorpus c;
  c.spec = spec;
  std::mt19937_64 rng(mix_seed(spec.seed, "speakers"));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  // Per-attribute weights over (jitter, shimmer, noise, latent).
  static constexpr double kW[6][4] = {{0.25, 0.25, 0.2, 0.3}, {0.4, 0.3, 0.1, 0.2}, {0.1, 0.1, 0.6, 0.2},
                                      {0.15, 0.15, 0.1, 0.6}, {0.5, 0.1, 0.1, 0.3}, {0.1, 0.5, 0.1, 0.3}};
  static constexpr int kGrbasFrom[5] = {0, 1, 2, 5, 3};  // G R B A S from CAPE-V drives
  for (std::size_t s = 0; s < spec.speakers; ++s) {
    SynthSpeaker sp;
    char id[32];
    std::snprintf(id, sizeof id, "spk%04zu", s);
    sp.id = id;
    const double jn = u(rng), sn = u(rng), hn = u(rng);
    sp.latent = g(rng);
    const double un = 0.5 * std::erfc(-sp.latent / std::sqrt(2.0));
    sp.f0 = 100.0 + 120.0 * u(rng);
    sp.jitter = kSynthJitter[0] + jn * (kSynthJitter[1] - kSynthJitter[0]);
    sp.shimmer = kSynthShimmer[0] + sn * (kSynthShimmer[1] - kSynthShimmer[0]);
    sp.snr_db = kSynthSnr[1] - hn * (kSynthSnr[1] - kSynthSnr[0]);
    const double drive[4] = {jn, sn, hn, un};
    std::vector<double> sat(6);
    for (int k = 0; k < 6; ++k) {
      double lin = 0.0;
      for (int f = 0; f < 4; ++f) lin += kW[k][f] * drive[f];
      sat[static_cast<std::size_t>(k)] = saturate(lin);
      sp.capev.push_back(std::clamp(100.0 * sat[static_cast<std::size_t>(k)] + spec.label_noise * g(rng), 0.0, 100.0));
    }
    for (int k : kGrbasFrom) {
      sp.grbas.push_back(
          std::clamp(3.0 * sat[static_cast<std::size_t>(k)] + 0.03 * spec.label_noise * g(rng), 0.0, 3.0));
    }
    c.speakers.push_back(std::move(sp));
  }
  std::vector<double> loadings(spec.layers);
  for (std::size_t l = 0; l < spec.layers; ++l) {
    loadings[l] = 0.2 + 0.8 * std::sin(M_PI * (static_cast<double>(l) + 0.5) / static_cast<double>(spec.layers));
  }
  for (std::size_t s = 0; s < spec.speakers; ++s) {
    const auto& sp = c.speakers[s];
    for (std::size_t k = 0; k < spec.utterances_per_speaker; ++k) {
      SynthUtterance ut;
      ut.id = sp.id + "_u" + std::to_string(k);
      ut.speaker = s;
      std::mt19937_64 urng(mix_seed(spec.seed, ut.id));
      std::normal_distribution<double> ug(0.0, 1.0);
      VowelSpec v;
      v.f0 = sp.f0 * (1.0 + 0.02 * ug(urng));
      v.jitter = sp.jitter;
      v.shimmer = sp.shimmer;
      v.snr_db = sp.snr_db + ug(urng);
      v.seconds = spec.seconds;
      v.seed = urng();
      ut.wave = make_vowel(v).wave;
      ut.wave.source_id = ut.id;
      std::uniform_int_distribution<std::size_t> frames(spec.min_frames, spec.max_frames);
      const std::size_t t = frames(urng);
      // Utterance-level deviation of the latent: what patient averaging removes.
      const double latent = sp.latent + 0.3 * ug(urng);
      ut.stack = make_synthetic_stack(spec.layers, t, spec.dim, latent, loadings, 1.0, urng());
      c.utterances.push_back(std::move(ut));
    }
  }
  return c;
}

// Writes wav/<id>.wav, vqes/<id>.vqes and manifest.csv under `dir`.
inline Manifest write_synthetic_corpus(const SynthCorpus& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "wav");
  std::filesystem::create_directories(dir / "vqes");
  Manifest m;
  m.base_dir = dir;
  m.columns = {"utterance_id", "speaker_id", "wav_path", "vqes_path", "subset"};
  for (auto col : kCapeVColumns) m.columns.emplace_back(col);
  for (auto col : kGrbasColumns) m.columns.emplace_back(col);
  for (const auto& ut : c.utterances) {
    const auto& sp = c.speakers[ut.speaker];
    save_wav16(ut.wave, dir / "wav" / (ut.id + ".wav"));
    write_stack(ut.stack, dir / "vqes" / (ut.id + ".vqes"));
    ManifestRow r;
    r.line = m.rows.size() + 2;
    r.set("utterance_id", ut.id);
    r.set("speaker_id", sp.id);
    r.set("wav_path", "wav/" + ut.id + ".wav");
    r.set("vqes_path", "vqes/" + ut.id + ".vqes");
    r.set("subset", c.spec.subset);
    for (std::size_t k = 0; k < 6; ++k) r.set(kCapeVColumns[k], fmt(sp.capev[k], 3));
    for (std::size_t k = 0; k < 5; ++k) r.set(kGrbasColumns[k], fmt(sp.grbas[k], 3));
    m.rows.push_back(std::move(r));
  }
  save_manifest(m, dir / "manifest.csv");
  return m;
}

}  // namespace voqa
