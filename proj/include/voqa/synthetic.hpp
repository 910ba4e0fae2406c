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
#include <cstdint>
#include <limits>
#include <random>
#include <string_view>
#include <vector>

#include "voqa/audio.hpp"
#include "voqa/embedding.hpp"

namespace voqa {

// Stable 64-bit FNV-1a, used to derive per-item RNG streams.
inline std::uint64_t fnv1a(std::string_view text, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag) {
  std::uint64_t z = fnv1a(tag, seed * 0x9E3779B97F4A7C15ULL + 1469598103934665603ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline Waveform make_sine(double freq, double seconds, double amplitude = 1.0,
                          int rate = kCanonicalRate, double phase = 0.0) {
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(static_cast<std::size_t>(std::lround(seconds * rate)));
  for (std::size_t n = 0; n < w.samples.size(); ++n) {
    w.samples[n] = amplitude * std::sin(2.0 * M_PI * freq * static_cast<double>(n) / rate + phase);
  }
  return w;
}

// Sawtooth-like harmonic complex: partial h has amplitude 1/h, all partials
// below Nyquist, peak-normalized to `amplitude`.
inline Waveform make_harmonic_tone(double f0, double seconds, double amplitude = 0.8,
                                   int rate = kCanonicalRate) {
  Waveform w;
  w.sample_rate = rate;
  w.samples.assign(static_cast<std::size_t>(std::lround(seconds * rate)), 0.0);
  const int partials = static_cast<int>(std::floor(0.5 * rate / f0 - 1e-9));
  for (std::size_t n = 0; n < w.samples.size(); ++n) {
    double acc = 0.0;
    for (int h = 1; h <= partials; ++h) {
      acc += std::sin(2.0 * M_PI * h * f0 * static_cast<double>(n) / rate) / h;
    }
    w.samples[n] = acc;
  }
  double peak = 0.0;
  for (double v : w.samples) peak = std::max(peak, std::abs(v));
  for (double& v : w.samples) v *= amplitude / peak;
  return w;
}

inline Waveform make_white_noise(std::size_t n, double stddev, std::uint64_t seed,
                                 int rate = kCanonicalRate) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, stddev);
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(n);
  for (double& v : w.samples) v = std::clamp(gauss(rng), -1.0, 1.0);
  return w;
}

struct VowelSpec {
  double f0 = 150.0;
  double jitter = 0.0;   // target local jitter (expected value)
  double shimmer = 0.0;  // target local shimmer (expected value)
  double snr_db = std::numeric_limits<double>::infinity();
  double seconds = 2.0;
  double peak = 0.5;
  double lead_silence = 0.0;
  double tail_silence = 0.0;
  int harmonics = 8;
  std::uint64_t seed = 1;
};

struct SyntheticVowel {
  Waveform wave;
  std::vector<double> periods;     // samples per cycle, as generated
  std::vector<double> amplitudes;  // cycle peak envelope, as generated
  std::vector<double> cycle_starts;
};

// Glottal-like vowel: every cycle is a cosine-harmonic pulse whose maximum
// sits exactly at the cycle start, so peak-to-peak spacing equals the
// generated period. Period and amplitude sequences are i.i.d. Gaussian
// perturbations scaled so that E|x_k - x_{k-1}| / E x hits the targets.
inline SyntheticVowel make_vowel(const VowelSpec& spec, int rate = kCanonicalRate) {
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double sigma_p = spec.jitter * std::sqrt(M_PI) / 2.0;
  const double sigma_a = spec.shimmer * std::sqrt(M_PI) / 2.0;
  const double p0 = rate / spec.f0;

  const auto lead = static_cast<std::size_t>(std::lround(spec.lead_silence * rate));
  const auto body = static_cast<std::size_t>(std::lround(spec.seconds * rate));
  const auto tail = static_cast<std::size_t>(std::lround(spec.tail_silence * rate));

  SyntheticVowel out;
  double t = 0.0;
  while (t < static_cast<double>(body)) {
    out.cycle_starts.push_back(t);
    const double p = p0 * std::max(0.5, 1.0 + sigma_p * gauss(rng));
    out.periods.push_back(p);
    out.amplitudes.push_back(std::max(0.05, 1.0 + sigma_a * gauss(rng)));
    t += p;
  }
  // The envelope interpolates towards the next cycle's amplitude.
  out.amplitudes.push_back(std::max(0.05, 1.0 + sigma_a * gauss(rng)));

  double norm = 0.0;
  for (int h = 1; h <= spec.harmonics; ++h) norm += 1.0 / h;

  std::vector<double> voiced(body, 0.0);
  std::size_t k = 0;
  for (std::size_t n = 0; n < body; ++n) {
    const auto x = static_cast<double>(n);
    while (k + 1 < out.cycle_starts.size() && x >= out.cycle_starts[k + 1]) ++k;
    const double phase = (x - out.cycle_starts[k]) / out.periods[k];
    const double env = out.amplitudes[k] + (out.amplitudes[k + 1] - out.amplitudes[k]) * phase;
    double g = 0.0;
    for (int h = 1; h <= spec.harmonics; ++h) g += std::cos(2.0 * M_PI * h * phase) / h;
    voiced[n] = env * g / norm;
  }
  out.amplitudes.pop_back();

  if (std::isfinite(spec.snr_db)) {
    double power = 0.0;
    for (double v : voiced) power += v * v;
    power /= static_cast<double>(body);
    const double noise_sd = std::sqrt(power / std::pow(10.0, spec.snr_db / 10.0));
    for (double& v : voiced) v += noise_sd * gauss(rng);
  }
  double peak = 0.0;
  for (double v : voiced) peak = std::max(peak, std::abs(v));
  const double gain = peak > 0.0 ? spec.peak / peak : 1.0;

  out.wave.sample_rate = rate;
  out.wave.samples.assign(lead + body + tail, 0.0);
  for (std::size_t n = 0; n < body; ++n) out.wave.samples[lead + n] = gain * voiced[n];
  for (double& s : out.cycle_starts) s += static_cast<double>(lead);
  for (double& a : out.amplitudes) a *= gain;
  return out;
}

// Impulse train with pulses at the given sample positions.
inline Waveform make_pulse_train(std::size_t length, const std::vector<std::size_t>& positions,
                                 const std::vector<double>& amplitudes,
                                 int rate = kCanonicalRate) {
  Waveform w;
  w.sample_rate = rate;
  w.samples.assign(length, 0.0);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (positions[i] < length) {
      w.samples[positions[i]] = amplitudes.empty() ? 1.0 : amplitudes[i % amplitudes.size()];
    }
  }
  return w;
}

// Layer stack whose every value carries `latent` scaled by a per-layer
// loading, plus i.i.d. Gaussian noise.
inline EmbeddingStack make_synthetic_stack(std::size_t layers, std::size_t frames, std::size_t dim,
                                           double latent, const std::vector<double>& loadings,
                                           double noise_sd, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  EmbeddingStack s;
  s.num_layers = layers;
  s.num_frames = frames;
  s.dim = dim;
  s.values.resize(layers * frames * dim);
  for (std::size_t l = 0; l < layers; ++l) {
    const double load = loadings.empty() ? 1.0 : loadings[l % loadings.size()];
    for (std::size_t i = 0; i < frames * dim; ++i) {
      s.values[l * frames * dim + i] = static_cast<float>(load * latent + noise_sd * gauss(rng));
    }
  }
  return s;
}

}  // namespace voqa
