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
#include <span>
#include <vector>

#include "voqa/audio.hpp"
#include "voqa/error.hpp"

namespace voqa {

struct PitchConfig {
  double f0_min = 75.0;
  double f0_max = 500.0;
  double frame_seconds = 0.040;
  double hop_seconds = 0.010;
  double voicing_threshold = 0.45;
  double silence_threshold = 0.01;
  // Per-octave penalty on longer lags, which keeps the tracker off sub-octaves
  // when two peaks are nearly equal.
  double octave_cost = 0.05;
  // Cost of an octave jump between neighbouring voiced frames. Short frames of
  // irregular cycles sometimes correlate better at two periods than at one;
  // the best path through a voiced run rides over them.
  double octave_jump_cost = 0.35;
  // Peaks below this fraction of a frame's best are not candidates.
  double candidate_ratio = 0.5;
  // Period-mark walking stops once a cycle peak falls below this fraction of
  // the run's anchor peak.
  double mark_stop_ratio = 0.1;
  // Lag search and mark placement run on a low-passed copy: impulse-like
  // excitation with a non-integer period still correlates at the
  // fundamental, and broadband noise moves the cycle peaks less. 0 disables.
  double lowpass_hz = 2000.0;
};

struct PitchTrack {
  int sample_rate = kCanonicalRate;
  FrameGrid grid;
  std::vector<double> frame_times;
  std::vector<double> f0;           // Hz, 0 when unvoiced
  std::vector<bool> voiced;
  std::vector<double> correlation;  // interpolated peak correlation per frame
  // Fractional sample positions of cycle peaks, strictly increasing.
  std::vector<double> period_marks;
  // Voiced-run index of each mark; periods never span two runs.
  std::vector<std::size_t> mark_run;

  std::size_t num_voiced() const {
    return static_cast<std::size_t>(std::count(voiced.begin(), voiced.end(), true));
  }

  // Period durations in samples, grouped by voiced run.
  std::vector<std::vector<double>> periods_by_run() const {
    std::vector<std::vector<double>> runs;
    for (std::size_t i = 0; i + 1 < period_marks.size(); ++i) {
      if (mark_run[i] != mark_run[i + 1]) continue;
      if (runs.empty() || i == 0 || mark_run[i - 1] != mark_run[i]) runs.emplace_back();
      runs.back().push_back(period_marks[i + 1] - period_marks[i]);
    }
    return runs;
  }

  std::size_t num_periods() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i + 1 < period_marks.size(); ++i) {
      if (mark_run[i] == mark_run[i + 1]) ++n;
    }
    return n;
  }
};

struct LagCorrelation {
  double lag = 0.0;    // fractional lag in samples
  double value = 0.0;  // interpolated peak correlation
};

// Normalized cross-correlation between x[0, n-lag) and x[lag, n).
inline double normalized_correlation(std::span<const double> x, std::size_t lag) {
  if (lag >= x.size()) return 0.0;
  const std::size_t n = x.size() - lag;
  double xy = 0.0, xx = 0.0, yy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = x[i];
    const double b = x[i + lag];
    xy += a * b;
    xx += a * a;
    yy += b * b;
  }
  const double denom = std::sqrt(xx * yy);
  return denom > 0.0 ? xy / denom : 0.0;
}

// Peak value around a fractional lag via a parabola through the three
// integer lags nearest to it.
inline LagCorrelation correlation_at(std::span<const double> x, double lag) {
  const auto center = static_cast<std::size_t>(std::lround(lag));
  if (center < 1 || center + 1 >= x.size()) {
    return {lag, normalized_correlation(x, center)};
  }
  const double rm = normalized_correlation(x, center - 1);
  const double r0 = normalized_correlation(x, center);
  const double rp = normalized_correlation(x, center + 1);
  const double denom = rm - 2.0 * r0 + rp;
  double delta = 0.0;
  if (denom < 0.0) delta = std::clamp(0.5 * (rm - rp) / denom, -0.5, 0.5);
  return {static_cast<double>(center) + delta, r0 - 0.25 * (rm - rp) * delta};
}

inline std::vector<double> demeaned_frame(const Waveform& w, const FrameGrid& grid,
                                          std::size_t frame) {
  std::vector<double> x(w.samples.begin() + static_cast<long>(grid.start(frame)),
                        w.samples.begin() + static_cast<long>(grid.end(frame)));
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  for (double& v : x) v -= mean;
  return x;
}

namespace detail {

// Zero-phase windowed-sinc low-pass (Hann, 63 taps, unit DC gain).
inline std::vector<double> lowpass(const std::vector<double>& x, double cutoff_hz, int rate) {
  constexpr int kHalf = 31;
  const double fc = cutoff_hz / rate;
  std::vector<double> h(2 * kHalf + 1);
  double sum = 0.0;
  for (int i = -kHalf; i <= kHalf; ++i) {
    const double sinc = i == 0 ? 2.0 * fc : std::sin(2.0 * M_PI * fc * i) / (M_PI * i);
    const double win = 0.5 + 0.5 * std::cos(M_PI * i / (kHalf + 1));
    h[i + kHalf] = sinc * win;
    sum += h[i + kHalf];
  }
  for (double& v : h) v /= sum;
  const auto n = static_cast<long>(x.size());
  std::vector<double> y(x.size(), 0.0);
  for (long t = 0; t < n; ++t) {
    double acc = 0.0;
    const long lo = std::max(-static_cast<long>(kHalf), t - n + 1);
    const long hi = std::min(static_cast<long>(kHalf), t);
    for (long i = lo; i <= hi; ++i) acc += h[i + kHalf] * x[t - i];
    y[t] = acc;
  }
  return y;
}

inline double parabolic_offset(double ym, double y0, double yp) {
  const double denom = ym - 2.0 * y0 + yp;
  if (denom >= 0.0) return 0.0;
  return std::clamp(0.5 * (ym - yp) / denom, -0.5, 0.5);
}

// One mark per cycle inside [begin, end): anchor at the strongest extremum,
// then walk one local period at a time in both directions.
template <class PeriodAt>
std::vector<double> place_marks(std::span<const double> x, std::size_t begin,
                                std::size_t end, PeriodAt period_at,
                                double stop_ratio) {
  std::vector<double> marks;
  if (end <= begin + 2) return marks;
  double hi_val = -1e300, lo_val = 1e300;
  for (std::size_t i = begin; i < end; ++i) {
    hi_val = std::max(hi_val, x[i]);
    lo_val = std::min(lo_val, x[i]);
  }
  const double sign = (hi_val >= -lo_val) ? 1.0 : -1.0;
  auto y = [&](std::size_t i) { return sign * x[i]; };

  std::size_t anchor = begin + 1;
  for (std::size_t i = begin + 1; i + 1 < end; ++i) {
    if (y(i) > y(anchor)) anchor = i;
  }
  const double anchor_val = y(anchor);
  if (anchor_val <= 0.0) return marks;
  const double floor_val = stop_ratio * anchor_val;

  auto refine = [&](std::size_t k) {
    return static_cast<double>(k) + parabolic_offset(y(k - 1), y(k), y(k + 1));
  };
  auto pick = [&](double lo_d, double hi_d) -> long {
    if (lo_d < static_cast<double>(begin + 1)) lo_d = static_cast<double>(begin + 1);
    if (hi_d > static_cast<double>(end - 2)) hi_d = static_cast<double>(end - 2);
    const auto lo = static_cast<long>(std::ceil(lo_d));
    const auto hi = static_cast<long>(std::floor(hi_d));
    if (lo > hi) return -1;
    long best = lo;
    for (long i = lo + 1; i <= hi; ++i) {
      if (y(static_cast<std::size_t>(i)) > y(static_cast<std::size_t>(best))) best = i;
    }
    const auto b = static_cast<std::size_t>(best);
    if (y(b) < floor_val || y(b) < y(b - 1) || y(b) < y(b + 1)) return -1;
    return best;
  };

  std::vector<double> backward;
  double m = static_cast<double>(anchor);
  for (;;) {
    const double p = period_at(m);
    const long k = pick(m - 1.25 * p, m - 0.75 * p);
    if (k < 0) break;
    m = refine(static_cast<std::size_t>(k));
    backward.push_back(m);
  }
  marks.assign(backward.rbegin(), backward.rend());
  marks.push_back(refine(anchor));
  m = marks.back();
  for (;;) {
    const double p = period_at(m);
    const long k = pick(m + 0.75 * p, m + 1.25 * p);
    if (k < 0) break;
    m = refine(static_cast<std::size_t>(k));
    marks.push_back(m);
  }
  return marks;
}

}  // namespace detail

inline PitchTrack track_pitch(const Waveform& w, const PitchConfig& cfg = {}) {
  require_rate(w, kCanonicalRate);
  if (!(cfg.f0_min >= 20.0 && cfg.f0_min < cfg.f0_max && cfg.f0_max <= 1000.0)) {
    fail(ErrorCode::kInvalidArgument, "pitch band must satisfy 20 <= f0_min < f0_max <= 1000");
  }
  const int rate = w.sample_rate;
  PitchTrack track;
  track.sample_rate = rate;
  track.grid = make_frame_grid(w.size(), rate, cfg.frame_seconds, cfg.hop_seconds);
  if (static_cast<double>(track.grid.frame_length) + 0.5 < 3.0 / cfg.f0_min * rate) {
    fail(ErrorCode::kInvalidArgument, "frame must hold three periods of f0_min");
  }
  if (track.grid.num_frames == 0) {
    fail(ErrorCode::kTooShort, "utterance shorter than one analysis frame");
  }

  const auto lag_min = static_cast<std::size_t>(std::floor(rate / cfg.f0_max));
  const auto lag_max = static_cast<std::size_t>(std::ceil(rate / cfg.f0_min));
  const std::size_t nf = track.grid.num_frames;
  track.frame_times.resize(nf);
  track.f0.assign(nf, 0.0);
  track.voiced.assign(nf, false);
  track.correlation.assign(nf, 0.0);

  Waveform smooth;
  smooth.sample_rate = rate;
  smooth.samples = cfg.lowpass_hz > 0.0 ? detail::lowpass(w.samples, cfg.lowpass_hz, rate)
                                        : w.samples;
  struct Candidate {
    double f0;
    double peak;
    double strength;
  };
  std::vector<std::vector<Candidate>> cands(nf);
  std::vector<double> r(lag_max + 2);
  for (std::size_t f = 0; f < nf; ++f) {
    track.frame_times[f] = track.grid.center_seconds(f, rate);
    std::span<const double> raw(w.samples.data() + track.grid.start(f),
                                track.grid.frame_length);
    double energy = 0.0;
    for (double v : raw) energy += v * v;
    const double rms = std::sqrt(energy / static_cast<double>(raw.size()));
    if (rms <= cfg.silence_threshold) continue;

    const auto x = demeaned_frame(smooth, track.grid, f);
    for (std::size_t lag = lag_min - 1; lag <= lag_max + 1; ++lag) {
      r[lag] = normalized_correlation(x, lag);
    }
    std::vector<Candidate> found;
    double best = 0.0;
    for (std::size_t lag = lag_min; lag <= lag_max; ++lag) {
      if (!(r[lag] >= r[lag - 1] && r[lag] > r[lag + 1]) || r[lag] <= 0.0) continue;
      const double delta = detail::parabolic_offset(r[lag - 1], r[lag], r[lag + 1]);
      const double peak = r[lag] - 0.25 * (r[lag - 1] - r[lag + 1]) * delta;
      const double f0 = rate / (static_cast<double>(lag) + delta);
      if (f0 < cfg.f0_min || f0 > cfg.f0_max) continue;
      found.push_back({f0, peak, peak - cfg.octave_cost * std::log2(cfg.f0_max / f0)});
      best = std::max(best, peak);
    }
    track.correlation[f] = best;
    if (best <= cfg.voicing_threshold) continue;
    track.voiced[f] = true;
    for (const auto& c : found) {
      if (c.peak >= cfg.candidate_ratio * best) cands[f].push_back(c);
    }
  }

  // Best candidate path through each voiced run.
  for (std::size_t f = 0; f < nf;) {
    if (!track.voiced[f]) {
      ++f;
      continue;
    }
    std::size_t g = f;
    while (g + 1 < nf && track.voiced[g + 1]) ++g;
    std::vector<std::vector<double>> score(g - f + 1);
    std::vector<std::vector<std::size_t>> from(g - f + 1);
    for (std::size_t k = f; k <= g; ++k) {
      const auto& cur = cands[k];
      auto& sc = score[k - f];
      auto& fr = from[k - f];
      sc.assign(cur.size(), 0.0);
      fr.assign(cur.size(), 0);
      for (std::size_t i = 0; i < cur.size(); ++i) {
        double acc = 0.0;
        if (k > f) {
          const auto& prev = cands[k - 1];
          acc = -1e300;
          for (std::size_t j = 0; j < prev.size(); ++j) {
            const double v =
                score[k - f - 1][j] - cfg.octave_jump_cost * std::abs(std::log2(cur[i].f0 / prev[j].f0));
            if (v > acc) {
              acc = v;
              fr[i] = j;
            }
          }
        }
        sc[i] = acc + cur[i].strength;
      }
    }
    const auto& last = score.back();
    std::size_t i = static_cast<std::size_t>(std::max_element(last.begin(), last.end()) - last.begin());
    for (std::size_t k = g + 1; k-- > f;) {
      track.f0[k] = cands[k][i].f0;
      track.correlation[k] = cands[k][i].peak;
      i = from[k - f][i];
    }
    f = g + 1;
  }

  std::size_t run_index = 0;
  std::size_t prev_end = 0;  // analysis frames overlap; runs must not
  for (std::size_t f = 0; f < nf;) {
    if (!track.voiced[f]) {
      ++f;
      continue;
    }
    std::size_t g = f;
    while (g + 1 < nf && track.voiced[g + 1]) ++g;
    const std::size_t begin = std::max(track.grid.start(f), prev_end);
    const std::size_t end = std::min(track.grid.end(g), w.size());
    prev_end = end;
    auto period_at = [&](double pos) {
      // f0 of the run frame whose center is nearest to `pos`.
      const double t = pos / rate;
      std::size_t best_frame = f;
      double best_dist = 1e300;
      for (std::size_t k = f; k <= g; ++k) {
        const double d = std::abs(track.frame_times[k] - t);
        if (d < best_dist) {
          best_dist = d;
          best_frame = k;
        }
      }
      return rate / track.f0[best_frame];
    };
    auto marks = detail::place_marks(smooth.samples, begin, end, period_at, cfg.mark_stop_ratio);
    for (double m : marks) {
      track.period_marks.push_back(m);
      track.mark_run.push_back(run_index);
    }
    ++run_index;
    f = g + 1;
  }
  return track;
}

}  // namespace voqa
