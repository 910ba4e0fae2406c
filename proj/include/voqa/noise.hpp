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
#include <cmath>
#include <complex>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "voqa/audio.hpp"
#include "voqa/error.hpp"
#include "voqa/manifest.hpp"
#include "voqa/spectral.hpp"
#include "voqa/synthetic.hpp"

namespace voqa {

enum class NoiseKind { kWhite, kPink, kBrown, kBabble, kCocktail, kBabyCry, kLaughter, kExternal };

inline std::string_view to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::kWhite: return "white";
    case NoiseKind::kPink: return "pink";
    case NoiseKind::kBrown: return "brown";
    case NoiseKind::kBabble: return "babble";
    case NoiseKind::kCocktail: return "cocktail";
    case NoiseKind::kBabyCry: return "baby_cry";
    case NoiseKind::kLaughter: return "laughter";
    case NoiseKind::kExternal: return "external";
  }
  return "unknown";
}

inline NoiseKind parse_noise_kind(std::string_view s) {
  for (auto k : {NoiseKind::kWhite, NoiseKind::kPink, NoiseKind::kBrown, NoiseKind::kBabble,
                 NoiseKind::kCocktail, NoiseKind::kBabyCry, NoiseKind::kLaughter,
                 NoiseKind::kExternal}) {
    if (to_string(k) == s) return k;
  }
  fail(ErrorCode::kConfigError, "unknown noise kind '" + std::string(s) + "'");
}

struct NoiseSpec {
  NoiseKind kind = NoiseKind::kWhite;
  // Audio file for kExternal; for the four environmental kinds a file here
  // replaces the built-in synthetic stand-in.
  std::filesystem::path path;
  std::uint64_t seed = 0;
  std::string name;  // label used in file names; defaults to the kind name

  std::string label() const { return name.empty() ? std::string(to_string(kind)) : name; }
};

namespace detail {

inline void normalize_rms(std::vector<double>& x) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double p = 0.0;
  for (double& v : x) {
    v -= mean;
    p += v * v;
  }
  p /= static_cast<double>(x.size());
  if (p > 0.0) {
    const double g = 1.0 / std::sqrt(p);
    for (double& v : x) v *= g;
  }
}

inline std::vector<double> gaussian(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> x(n);
  for (double& v : x) v = g(rng);
  return x;
}

// White noise shaped by |H(f)| = f^(-exponent/2) in the frequency domain, so
// the power spectrum falls as 1/f^exponent. DC is removed.
inline std::vector<double> colored(std::size_t n, double exponent, std::mt19937_64& rng) {
  const std::size_t m = next_pow2(n);
  auto x = gaussian(m, rng);
  Fft fft;
  auto spec = fft.forward(x);
  spec[0] = 0.0;
  for (std::size_t k = 1; k <= m / 2; ++k) {
    const double g = std::pow(static_cast<double>(k), -exponent / 2.0);
    spec[k] *= g;
    if (k != m - k) spec[m - k] *= g;
  }
  auto y = fft.inverse_real(spec);
  y.resize(n);
  return y;
}

// Sum of `talkers` harmonic voices with drifting f0 and syllable-rate
// amplitude bursts: a seeded multi-talker chatter surrogate.
inline std::vector<double> chatter(std::size_t n, int rate, int talkers, double f0_lo, double f0_hi,
                                   double syllable_hz, double duty, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> out(n, 0.0);
  for (int t = 0; t < talkers; ++t) {
    const double f0 = f0_lo + (f0_hi - f0_lo) * u(rng);
    const double drift_hz = 0.5 + 2.0 * u(rng);
    const double drift_depth = 0.08 * f0;
    const double drift_phase = 2.0 * M_PI * u(rng);
    const double syl = syllable_hz * (0.8 + 0.4 * u(rng));
    const double syl_phase = u(rng);
    const int harmonics = std::max(1, static_cast<int>(3500.0 / f0_hi));
    std::vector<double> hamp(static_cast<std::size_t>(harmonics));
    for (int h = 0; h < harmonics; ++h) hamp[static_cast<std::size_t>(h)] = (0.5 + u(rng)) / (h + 1);
    double phase = 2.0 * M_PI * u(rng);
    for (std::size_t i = 0; i < n; ++i) {
      const double time = static_cast<double>(i) / rate;
      const double f = f0 + drift_depth * std::sin(2.0 * M_PI * drift_hz * time + drift_phase);
      phase += 2.0 * M_PI * f / rate;
      const double cyc = std::fmod(time * syl + syl_phase, 1.0);
      const double env = cyc < duty ? std::pow(std::sin(M_PI * cyc / duty), 2.0) : 0.0;
      if (env == 0.0) continue;
      double s = 0.0;
      for (int h = 0; h < harmonics; ++h) s += hamp[static_cast<std::size_t>(h)] * std::sin((h + 1) * phase);
      out[i] += env * s;
    }
  }
  return out;
}

// Breathy "ha" pulses: band-limited noise plus a weak voiced component,
// grouped in bouts of 4-8 pulses at about 5 Hz.
inline std::vector<double> laughter(std::size_t n, int rate, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> out(n, 0.0);
  std::size_t pos = 0;
  while (pos < n) {
    const int pulses = 4 + static_cast<int>(u(rng) * 5.0);
    const double f0 = 220.0 + 120.0 * u(rng);
    const double rate_hz = 4.5 + u(rng);
    const auto pulse_len = static_cast<std::size_t>(rate / rate_hz);
    double phase = 0.0, lp = 0.0;
    for (int p = 0; p < pulses && pos < n; ++p) {
      for (std::size_t i = 0; i < pulse_len && pos < n; ++i, ++pos) {
        const double c = static_cast<double>(i) / static_cast<double>(pulse_len);
        const double env = c < 0.6 ? std::pow(std::sin(M_PI * c / 0.6), 2.0) : 0.0;
        lp = 0.7 * lp + 0.3 * g(rng);
        phase += 2.0 * M_PI * f0 * (1.0 - 0.1 * c) / rate;
        out[pos] = env * (lp + 0.4 * std::sin(phase) + 0.2 * std::sin(2.0 * phase));
      }
    }
    pos += static_cast<std::size_t>((0.2 + 0.5 * u(rng)) * rate);
  }
  return out;
}

// Crying bursts: high f0 with a rise-fall contour and strong harmonics,
// 0.5-1.2 s bursts separated by short inhalation pauses.
inline std::vector<double> baby_cry(std::size_t n, int rate, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> out(n, 0.0);
  std::size_t pos = static_cast<std::size_t>(0.05 * rate * u(rng));
  while (pos < n) {
    const auto len = static_cast<std::size_t>((0.5 + 0.7 * u(rng)) * rate);
    const double base = 350.0 + 200.0 * u(rng);
    double phase = 0.0;
    for (std::size_t i = 0; i < len && pos < n; ++i, ++pos) {
      const double c = static_cast<double>(i) / static_cast<double>(len);
      const double f0 = base * (1.0 + 0.25 * std::sin(M_PI * c)) * (1.0 + 0.01 * g(rng));
      phase += 2.0 * M_PI * f0 / rate;
      const double env = std::pow(std::sin(M_PI * c), 0.5);
      double s = 0.0;
      for (int h = 1; h <= 8; ++h) s += std::sin(h * phase) / std::sqrt(static_cast<double>(h));
      out[pos] = env * s;
    }
    pos += static_cast<std::size_t>((0.15 + 0.25 * u(rng)) * rate);
  }
  return out;
}

// Loop or trim to exactly n samples.
inline std::vector<double> fit_length(const std::vector<double>& x, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i % x.size()];
  return out;
}

}  // namespace detail

// Noise of unit RMS (zero mean) for generated kinds; external audio is
// resampled, looped/trimmed and likewise normalized.
inline Waveform generate_noise(const NoiseSpec& spec, std::size_t num_samples, int rate = kCanonicalRate) {
  if (num_samples == 0) fail(ErrorCode::kInvalidArgument, "noise length must be at least 1 sample");
  Waveform w;
  w.sample_rate = rate;
  w.source_id = spec.label();
  if (spec.kind == NoiseKind::kExternal || !spec.path.empty()) {
    if (spec.path.empty()) fail(ErrorCode::kFileError, "external noise needs a file path");
    Waveform src;
    try {
      src = resample(load_wav(spec.path), rate);
    } catch (const Error& e) {
      fail(ErrorCode::kFileError, "cannot use noise file " + spec.path.string() + ": " + e.what());
    }
    w.samples = detail::fit_length(src.samples, num_samples);
    detail::normalize_rms(w.samples);
    return w;
  }
  std::mt19937_64 rng(spec.seed);
  switch (spec.kind) {
    case NoiseKind::kWhite: w.samples = detail::gaussian(num_samples, rng); break;
    case NoiseKind::kPink: w.samples = detail::colored(num_samples, 1.0, rng); break;
    case NoiseKind::kBrown: {
      auto x = detail::gaussian(num_samples, rng);
      double acc = 0.0;
      for (double& v : x) {
        acc += v;
        v = acc;
      }
      w.samples = std::move(x);
      break;
    }
    case NoiseKind::kBabble:
      w.samples = detail::chatter(num_samples, rate, 6, 90.0, 250.0, 4.0, 0.7, rng);
      break;
    case NoiseKind::kCocktail: {
      auto voices = detail::chatter(num_samples, rate, 14, 90.0, 280.0, 4.5, 0.6, rng);
      detail::normalize_rms(voices);
      auto room = detail::colored(num_samples, 1.0, rng);
      detail::normalize_rms(room);
      for (std::size_t i = 0; i < num_samples; ++i) voices[i] += 0.3 * room[i];
      w.samples = std::move(voices);
      break;
    }
    case NoiseKind::kBabyCry: w.samples = detail::baby_cry(num_samples, rate, rng); break;
    case NoiseKind::kLaughter: w.samples = detail::laughter(num_samples, rate, rng); break;
    case NoiseKind::kExternal: break;
  }
  detail::normalize_rms(w.samples);
  return w;
}

inline double mean_power(std::span<const double> x) {
  double p = 0.0;
  for (double v : x) p += v * v;
  return x.empty() ? 0.0 : p / static_cast<double>(x.size());
}

struct MixResult {
  Waveform mixed;
  double noise_gain = 1.0;  // applied to the noise before summing
  double mix_scale = 1.0;   // peak normalization applied to the sum
};

// Largest magnitude a 16-bit file reproduces without clipping.
inline constexpr double kPeakLimit = 32767.0 / 32768.0;

// clean + g*noise with 10*log10(P_clean / P(g*noise)) = snr_db over the full
// utterance. The sum is rescaled (both parts together) only if a sample would
// leave the 16-bit range.
inline MixResult mix_at_snr(const Waveform& clean, const Waveform& noise, double snr_db) {
  if (clean.sample_rate != noise.sample_rate) {
    fail(ErrorCode::kInvalidArgument, "sample rates differ: " + std::to_string(clean.sample_rate) +
                                          " vs " + std::to_string(noise.sample_rate));
  }
  if (!std::isfinite(snr_db)) fail(ErrorCode::kInvalidArgument, "SNR must be finite");
  const double pc = mean_power(clean.samples);
  if (!(pc > 0.0)) fail(ErrorCode::kDegenerateSignal, "clean signal has zero power");
  if (noise.samples.empty()) fail(ErrorCode::kDegenerateSignal, "noise is empty");
  const auto n = detail::fit_length(noise.samples, clean.size());
  const double pn = mean_power(n);
  if (!(pn > 0.0)) fail(ErrorCode::kDegenerateSignal, "noise has zero power");
  MixResult r;
  r.noise_gain = std::sqrt(pc / (pn * std::pow(10.0, snr_db / 10.0)));
  r.mixed.sample_rate = clean.sample_rate;
  r.mixed.source_id = clean.source_id;
  r.mixed.samples.resize(clean.size());
  double peak = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    r.mixed.samples[i] = clean.samples[i] + r.noise_gain * n[i];
    peak = std::max(peak, std::abs(r.mixed.samples[i]));
  }
  if (peak > kPeakLimit) {
    r.mix_scale = kPeakLimit / peak;
    for (double& v : r.mixed.samples) v *= r.mix_scale;
  }
  return r;
}

struct MixPlan {
  std::string role;  // train_seen, test_seen or test_unseen
  std::vector<NoiseSpec> noises;
  std::vector<double> snrs_db;
};

// The robustness grid: seen noises at -5/0/5/10 dB, unseen at 0/5 dB.
inline std::vector<NoiseSpec> seen_noises() {
  return {{NoiseKind::kWhite}, {NoiseKind::kPink}, {NoiseKind::kBabble}, {NoiseKind::kCocktail}};
}
inline std::vector<NoiseSpec> unseen_noises() {
  return {{NoiseKind::kBrown}, {NoiseKind::kBabyCry}, {NoiseKind::kLaughter}};
}
inline std::vector<double> seen_snrs() { return {-5.0, 0.0, 5.0, 10.0}; }
inline std::vector<double> unseen_snrs() { return {0.0, 5.0}; }

inline MixPlan standard_plan(const std::string& role) {
  if (role == "train_seen" || role == "test_seen") return {role, seen_noises(), seen_snrs()};
  if (role == "test_unseen") return {role, unseen_noises(), unseen_snrs()};
  fail(ErrorCode::kConfigError, "no standard plan for role '" + role + "'");
}

inline std::string snr_tag(double snr_db) {
  char buf[32];
  if (snr_db == std::round(snr_db)) {
    std::snprintf(buf, sizeof buf, "%d", static_cast<int>(snr_db));
  } else {
    std::snprintf(buf, sizeof buf, "%g", snr_db);
  }
  return buf;
}

inline std::string augmented_id(const std::string& utterance_id, const std::string& noise, double snr_db) {
  return utterance_id + "__" + noise + "__" + snr_tag(snr_db);
}

// Noise for one (utterance, noise, snr) cell; the stream depends only on
// these and the run seed, never on processing order.
inline Waveform noise_for(const NoiseSpec& spec, const std::string& utterance_id, double snr_db,
                          std::uint64_t seed, std::size_t n, int rate) {
  NoiseSpec s = spec;
  s.seed = mix_seed(seed ^ spec.seed, utterance_id + "|" + spec.label() + "|" + snr_tag(snr_db));
  return generate_noise(s, n, rate);
}

struct AugmentOptions {
  std::filesystem::path out_dir;  // where noisy wavs go
  std::uint64_t seed = 0;
  // When set, each row's plans follow its split column: train rows get
  // train_seen plans, test rows get test_seen and test_unseen plans.
  bool split_aware = false;
};

// Writes every noisy variant and returns the augmented manifest: the input
// rows (role "clean") followed, per input row, by its noisy rows. Paths in
// the result are relative to `manifest_dir` when the output lies beneath it.
inline Manifest build_augmented_set(const Manifest& in, const std::vector<MixPlan>& plans,
                                    const AugmentOptions& opt, const std::filesystem::path& manifest_dir) {
  if (plans.empty()) return in;
  Manifest out;
  out.base_dir = manifest_dir;
  out.columns = in.columns;
  for (const char* c : {"noise_kind", "snr_db", "role", "mix_scale"}) {
    if (!out.has_column(c)) out.columns.emplace_back(c);
  }
  std::filesystem::create_directories(opt.out_dir);
  auto rel = [&](const std::filesystem::path& p) {
    auto r = std::filesystem::relative(p, manifest_dir);
    return (r.empty() || r.native().rfind("..", 0) == 0) ? std::filesystem::absolute(p).string()
                                                         : r.generic_string();
  };
  for (const auto& row : in.rows) {
    ManifestRow clean = row;
    if (clean.get("role").empty()) clean.set("role", "clean");
    if (!row.get("wav_path").empty()) clean.set("wav_path", rel(in.resolve(row.get("wav_path"))));
    if (!row.get("vqes_path").empty()) clean.set("vqes_path", rel(in.resolve(row.get("vqes_path"))));
    out.rows.push_back(clean);
    if (row.role() != "clean") continue;  // only clean audio is augmented

    const auto& split = row.get("split");
    std::vector<const MixPlan*> use;
    for (const auto& p : plans) {
      if (opt.split_aware && (split == "train" || split == "test")) {
        const bool train_plan = p.role == "train_seen";
        if (train_plan != (split == "train")) continue;
      }
      use.push_back(&p);
    }
    if (use.empty()) continue;
    if (row.get("wav_path").empty()) {
      fail(ErrorCode::kFileError, "row " + std::to_string(row.line) + " has no wav_path to augment");
    }
    const Waveform audio = resample(load_wav(in.resolve(row.get("wav_path"))), kCanonicalRate);
    // train_seen and test_seen share one grid; a row receiving both gets
    // each variant once, under the first plan's role.
    std::set<std::string> made;
    for (const MixPlan* p : use) {
      for (const auto& spec : p->noises) {
        for (double snr : p->snrs_db) {
          if (!made.insert(augmented_id(row.utterance_id(), spec.label(), snr)).second) continue;
          const auto noise = noise_for(spec, row.utterance_id(), snr, opt.seed, audio.size(), audio.sample_rate);
          auto mix = mix_at_snr(audio, noise, snr);
          const auto id = augmented_id(row.utterance_id(), spec.label(), snr);
          const auto path = opt.out_dir / (id + ".wav");
          save_wav16(mix.mixed, path);
          ManifestRow r = clean;
          r.line = 0;
          r.set("utterance_id", id);
          r.set("wav_path", rel(path));
          r.set("vqes_path", "");
          r.set("noise_kind", spec.label());
          r.set("snr_db", snr_tag(snr));
          r.set("role", p->role);
          r.set("mix_scale", fmt(mix.mix_scale, 9));
          out.rows.push_back(std::move(r));
        }
      }
    }
  }
  for (std::size_t i = 0; i < out.rows.size(); ++i) out.rows[i].line = i + 2;
  return out;
}

}  // namespace voqa
