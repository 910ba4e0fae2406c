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
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "voqa/audio.hpp"
#include "voqa/error.hpp"
#include "voqa/pitch.hpp"
#include "voqa/spectral.hpp"

namespace voqa {

enum class SpeechSubset { kVowel, kSentence };

struct LldConfig {
  PitchConfig pitch;
  double hnr_epsilon = 1e-6;
  // Fraction of cycles/frames dropped at each end of a sustained vowel.
  double vowel_trim = 0.05;
  std::size_t cepstrum_frame = 1024;
  std::size_t cepstrum_hop = 160;
};

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

// Utterance-level descriptors. NaN marks a descriptor that could not be
// measured (no voiced frames, too few cycles, ...).
struct LldVector {
  double jitter_local = kMissing;
  double shimmer_local = kMissing;
  double hnr_db = kMissing;
  double cpp_db = kMissing;
  std::size_t num_cycles = 0;
  bool cpp_requested = false;
  std::string missing_reason;

  bool missing() const {
    return std::isnan(jitter_local) || std::isnan(shimmer_local) || std::isnan(hnr_db) ||
           (cpp_requested && std::isnan(cpp_db));
  }
};

// Praat-style local jitter: mean |T_k - T_{k-1}| over mean T_k, with
// differences taken only inside a voiced run.
inline double jitter_local(const PitchTrack& track) {
  double diff_sum = 0.0, period_sum = 0.0;
  std::size_t diffs = 0, periods = 0;
  for (const auto& run : track.periods_by_run()) {
    for (std::size_t k = 0; k < run.size(); ++k) {
      period_sum += run[k];
      ++periods;
      if (k > 0) {
        diff_sum += std::abs(run[k] - run[k - 1]);
        ++diffs;
      }
    }
  }
  if (diffs == 0) {
    fail(ErrorCode::kInsufficientCycles, "jitter needs two consecutive periods");
  }
  return (diff_sum / static_cast<double>(diffs)) / (period_sum / static_cast<double>(periods));
}

// Peak |sample| of each cycle, grouped by voiced run.
inline std::vector<std::vector<double>> cycle_amplitudes(const Waveform& w,
                                                         const PitchTrack& track) {
  std::vector<std::vector<double>> runs;
  const auto& marks = track.period_marks;
  for (std::size_t i = 0; i + 1 < marks.size(); ++i) {
    if (track.mark_run[i] != track.mark_run[i + 1]) continue;
    if (runs.empty() || i == 0 || track.mark_run[i - 1] != track.mark_run[i]) {
      runs.emplace_back();
    }
    const auto lo = static_cast<std::size_t>(std::max(0L, std::lround(marks[i])));
    const auto hi = std::min(w.size(), static_cast<std::size_t>(std::lround(marks[i + 1])));
    double peak = 0.0;
    for (std::size_t n = lo; n < hi; ++n) peak = std::max(peak, std::abs(w.samples[n]));
    runs.back().push_back(peak);
  }
  return runs;
}

inline double shimmer_local(const Waveform& w, const PitchTrack& track) {
  double diff_sum = 0.0, amp_sum = 0.0;
  std::size_t diffs = 0, cycles = 0;
  for (const auto& run : cycle_amplitudes(w, track)) {
    for (std::size_t k = 0; k < run.size(); ++k) {
      amp_sum += run[k];
      ++cycles;
      if (k > 0) {
        diff_sum += std::abs(run[k] - run[k - 1]);
        ++diffs;
      }
    }
  }
  if (diffs == 0) {
    fail(ErrorCode::kInsufficientCycles, "shimmer needs two consecutive cycles");
  }
  if (amp_sum <= 0.0) fail(ErrorCode::kDegenerateAmplitude, "all cycle peaks are zero");
  return (diff_sum / static_cast<double>(diffs)) / (amp_sum / static_cast<double>(cycles));
}

// Mean over voiced frames of 10*log10(r / (1 - r)), r being the normalized
// autocorrelation at the local period lag. Frames start on period marks (one
// frame per hop, never crossing a run end), so the measure moves with the
// signal under time shifts instead of with the frame grid.
inline double hnr_db(const Waveform& w, const PitchTrack& track, double epsilon = 1e-6) {
  const auto& marks = track.period_marks;
  const std::size_t frame = track.grid.frame_length;
  const std::size_t hop = std::max<std::size_t>(1, track.grid.hop_length);
  auto frame_hnr = [&](std::size_t lo, std::size_t hi, double lag) {
    std::vector<double> x(w.samples.begin() + static_cast<long>(lo),
                          w.samples.begin() + static_cast<long>(hi));
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    for (double& v : x) v -= mean;
    const double r = std::clamp(correlation_at(x, lag).value, epsilon, 1.0 - epsilon);
    return 10.0 * std::log10(r / (1.0 - r));
  };

  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t a = 0; a < marks.size();) {
    std::size_t b = a;
    while (b + 1 < marks.size() && track.mark_run[b + 1] == track.mark_run[a]) ++b;
    auto at = [&](std::size_t i) {
      return std::min(w.size(), static_cast<std::size_t>(std::max(0L, std::lround(marks[i]))));
    };
    const std::size_t run_end = at(b);
    if (b >= a + 2) {
      if (run_end - at(a) < frame) {
        sum += frame_hnr(at(a), run_end, (marks[b] - marks[a]) / static_cast<double>(b - a));
        ++count;
      } else {
        std::size_t next_start = 0;
        for (std::size_t i = a; i < b; ++i) {
          const std::size_t lo = at(i);
          if (lo < next_start) continue;
          if (lo + frame > run_end) break;
          std::size_t j = i;
          while (j + 1 <= b && at(j + 1) <= lo + frame) ++j;
          sum += frame_hnr(lo, lo + frame, (marks[j] - marks[i]) / static_cast<double>(j - i));
          ++count;
          next_start = lo + hop;
        }
      }
    }
    a = b + 1;
  }
  if (count == 0) fail(ErrorCode::kNoVoicedFrames, "HNR needs at least one voiced frame");
  return sum / static_cast<double>(count);
}

struct CepstralAnalysis {
  std::vector<double> frame_cpp_db;
  std::vector<double> frame_peak_quefrency;  // seconds
  double cpp_db = 0.0;
};

// Per frame: Hann window -> log power spectrum (dB) -> real cepstrum ->
// cepstral magnitude in dB. The peak is searched in [1/f0_max, 1/f0_min] and
// measured against a least-squares line fitted over that band.
inline CepstralAnalysis cepstral_peak_prominence(std::span<const double> samples, int rate,
                                                 const LldConfig& cfg = {}) {
  const std::size_t n = cfg.cepstrum_frame;
  if (samples.size() < n) fail(ErrorCode::kTooShort, "CPP needs at least one full frame");
  const auto q_lo = static_cast<std::size_t>(std::floor(rate / cfg.pitch.f0_max));
  const auto q_hi = std::min(n / 2, static_cast<std::size_t>(std::ceil(rate / cfg.pitch.f0_min)));

  // Regression abscissa is fixed per band, so precompute its moments.
  const double count = static_cast<double>(q_hi - q_lo + 1);
  double sq = 0.0, sqq = 0.0;
  for (std::size_t q = q_lo; q <= q_hi; ++q) {
    const double t = static_cast<double>(q) / rate;
    sq += t;
    sqq += t * t;
  }
  const double q_mean = sq / count;
  const double sxx = sqq - count * q_mean * q_mean;

  const auto window = hann_window(n);
  Fft fft;
  CepstralAnalysis out;
  std::vector<double> frame(n);
  std::vector<std::complex<double>> log_spec(n);
  for (std::size_t start = 0; start + n <= samples.size(); start += cfg.cepstrum_hop) {
    for (std::size_t i = 0; i < n; ++i) frame[i] = samples[start + i] * window[i];
    const auto spec = fft.forward(frame);
    for (std::size_t k = 0; k < n; ++k) {
      log_spec[k] = 10.0 * std::log10(std::norm(spec[k]) + 1e-12);
    }
    const auto ceps = fft.inverse_real(log_spec);

    double sy = 0.0, sxy = 0.0;
    std::size_t peak_q = q_lo;
    double peak_db = -1e300;
    std::vector<double> db(q_hi - q_lo + 1);
    for (std::size_t q = q_lo; q <= q_hi; ++q) {
      const double v = 20.0 * std::log10(std::abs(ceps[q]) + 1e-12);
      db[q - q_lo] = v;
      const double t = static_cast<double>(q) / rate;
      sy += v;
      sxy += t * v;
      if (v > peak_db) {
        peak_db = v;
        peak_q = q;
      }
    }
    const double slope = (sxy - q_mean * sy) / sxx;
    const double intercept = sy / count - slope * q_mean;
    const double t_peak = static_cast<double>(peak_q) / rate;
    out.frame_cpp_db.push_back(peak_db - (slope * t_peak + intercept));
    out.frame_peak_quefrency.push_back(t_peak);
  }
  double sum = 0.0;
  for (double v : out.frame_cpp_db) sum += v;
  out.cpp_db = sum / static_cast<double>(out.frame_cpp_db.size());
  return out;
}

inline double cpp_db(const Waveform& w, const LldConfig& cfg = {}) {
  require_rate(w, kCanonicalRate);
  return cepstral_peak_prominence(w.samples, w.sample_rate, cfg).cpp_db;
}

// Drops the first and last `fraction` of cycles (marks) and of voiced frames.
inline PitchTrack trim_onset_offset(PitchTrack track, double fraction) {
  const std::size_t periods = track.num_periods();
  const auto cut_marks = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(periods)));
  if (cut_marks > 0 && track.period_marks.size() > 2 * cut_marks) {
    const auto first = static_cast<long>(cut_marks);
    const auto last = static_cast<long>(track.period_marks.size() - cut_marks);
    track.period_marks = {track.period_marks.begin() + first, track.period_marks.begin() + last};
    track.mark_run = {track.mark_run.begin() + first, track.mark_run.begin() + last};
  }
  const std::size_t voiced = track.num_voiced();
  const auto cut_frames = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(voiced)));
  std::size_t seen = 0;
  for (std::size_t f = 0; f < track.voiced.size(); ++f) {
    if (!track.voiced[f]) continue;
    if (seen < cut_frames || seen >= voiced - cut_frames) {
      track.voiced[f] = false;
      track.f0[f] = 0.0;
    }
    ++seen;
  }
  return track;
}

// Full descriptor extraction for one 16 kHz utterance. Measurement failures
// are reported through NaN fields plus `missing_reason`, never thrown.
inline LldVector extract_llds(const Waveform& w, SpeechSubset subset, bool include_cpp,
                              const LldConfig& cfg = {}) {
  require_rate(w, kCanonicalRate);
  LldVector out;
  out.cpp_requested = include_cpp;
  PitchTrack track;
  try {
    track = track_pitch(w, cfg.pitch);
  } catch (const Error& e) {
    out.missing_reason = e.what();
    return out;
  }
  if (subset == SpeechSubset::kVowel) track = trim_onset_offset(std::move(track), cfg.vowel_trim);

  auto note = [&out](const Error& e) {
    if (!out.missing_reason.empty()) out.missing_reason += "; ";
    out.missing_reason += e.what();
  };
  try {
    out.jitter_local = jitter_local(track);
    out.num_cycles = track.num_periods();
  } catch (const Error& e) {
    note(e);
  }
  try {
    out.shimmer_local = shimmer_local(w, track);
  } catch (const Error& e) {
    note(e);
  }
  try {
    out.hnr_db = hnr_db(w, track, cfg.hnr_epsilon);
  } catch (const Error& e) {
    note(e);
  }
  if (include_cpp) {
    // CPP over the analysed voiced span.
    std::size_t first = w.size(), last = 0;
    for (std::size_t f = 0; f < track.grid.num_frames; ++f) {
      if (!track.voiced[f]) continue;
      first = std::min(first, track.grid.start(f));
      last = std::max(last, std::min(track.grid.end(f), w.size()));
    }
    try {
      if (first >= last) fail(ErrorCode::kNoVoicedFrames, "no voiced span for CPP");
      out.cpp_db = cepstral_peak_prominence(
                       std::span<const double>(w.samples).subspan(first, last - first),
                       w.sample_rate, cfg)
                       .cpp_db;
    } catch (const Error& e) {
      note(e);
    }
  }
  return out;
}

}  // namespace voqa
