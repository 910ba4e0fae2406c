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
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "voqa/error.hpp"

namespace voqa {

inline constexpr int kCanonicalRate = 16000;

// Mono PCM audio with samples in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = kCanonicalRate;
  std::string source_id;

  std::size_t size() const { return samples.size(); }
  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

struct FrameGrid {
  std::size_t frame_length = 640;
  std::size_t hop_length = 160;
  std::size_t num_frames = 0;

  std::size_t start(std::size_t frame) const { return frame * hop_length; }
  std::size_t end(std::size_t frame) const {
    return frame * hop_length + frame_length;
  }
  double center_seconds(std::size_t frame, int rate) const {
    return (static_cast<double>(start(frame)) + 0.5 * frame_length) / rate;
  }
};

inline FrameGrid make_frame_grid(std::size_t num_samples,
                                 std::size_t frame_length,
                                 std::size_t hop_length) {
  if (hop_length < 1 || frame_length < hop_length) {
    fail(ErrorCode::kInvalidArgument,
         "frame grid requires frame_length >= hop_length >= 1");
  }
  FrameGrid grid{frame_length, hop_length, 0};
  if (num_samples >= frame_length) {
    grid.num_frames = (num_samples - frame_length) / hop_length + 1;
  }
  return grid;
}

inline FrameGrid make_frame_grid(std::size_t num_samples, int rate,
                                 double frame_seconds, double hop_seconds) {
  return make_frame_grid(
      num_samples,
      static_cast<std::size_t>(std::lround(frame_seconds * rate)),
      static_cast<std::size_t>(std::lround(hop_seconds * rate)));
}

inline void require_rate(const Waveform& w, int rate) {
  if (w.sample_rate != rate) {
    fail(ErrorCode::kInvalidArgument,
         "expected " + std::to_string(rate) + " Hz audio, got " +
             std::to_string(w.sample_rate) + " Hz (" + w.source_id + ")");
  }
}

namespace detail {

inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}
inline void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}
inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
  }
}

inline std::vector<unsigned char> read_file_bytes(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kFileError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

// Decodes a RIFF/WAVE byte buffer. 16-bit integer and 32-bit float PCM are
// accepted (plain or WAVE_FORMAT_EXTENSIBLE); channels are averaged.
inline Waveform decode_wav(std::span<const unsigned char> bytes,
                           std::string source_id = {}) {
  using detail::read_u16;
  using detail::read_u32;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    fail(ErrorCode::kFormatError, "not a RIFF/WAVE file: " + source_id);
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::span<const unsigned char> data;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    std::uint32_t chunk_size = read_u32(hdr + 4);
    std::size_t body = pos + 8;
    if (body + chunk_size > bytes.size()) {
      // Truncated data chunks are common from crashed writers; keep what is
      // there. Anything else truncated is malformed.
      if (std::memcmp(hdr, "data", 4) != 0) {
        fail(ErrorCode::kFormatError, "truncated chunk in " + source_id);
      }
      chunk_size = static_cast<std::uint32_t>(bytes.size() - body);
    }
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (chunk_size < 16) fail(ErrorCode::kFormatError, "short fmt chunk");
      const unsigned char* f = bytes.data() + body;
      format = read_u16(f);
      channels = read_u16(f + 2);
      rate = read_u32(f + 4);
      bits = read_u16(f + 14);
      if (format == 0xFFFE) {
        if (chunk_size < 40) fail(ErrorCode::kFormatError, "short extensible fmt");
        format = read_u16(f + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = bytes.subspan(body, chunk_size);
      have_data = true;
    }
    pos = body + chunk_size + (chunk_size & 1u);
  }
  if (!have_fmt || !have_data) {
    fail(ErrorCode::kFormatError, "missing fmt or data chunk: " + source_id);
  }
  if (channels == 0 || rate == 0) {
    fail(ErrorCode::kFormatError, "zero channels or sample rate: " + source_id);
  }
  const bool pcm16 = (format == 1 && bits == 16);
  const bool float32 = (format == 3 && bits == 32);
  if (!pcm16 && !float32) {
    fail(ErrorCode::kUnsupportedEncoding,
         "format " + std::to_string(format) + " with " + std::to_string(bits) +
             " bits in " + source_id);
  }

  const std::size_t bytes_per_frame = static_cast<std::size_t>(channels) * bits / 8;
  const std::size_t frames = data.size() / bytes_per_frame;
  if (frames == 0) fail(ErrorCode::kEmptyAudio, source_id);

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.source_id = std::move(source_id);
  w.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    const unsigned char* p = data.data() + i * bytes_per_frame;
    for (std::uint16_t c = 0; c < channels; ++c) {
      if (pcm16) {
        auto v = static_cast<std::int16_t>(read_u16(p + 2 * c));
        acc += v / 32768.0;
      } else {
        std::uint32_t raw = read_u32(p + 4 * c);
        float v;
        std::memcpy(&v, &raw, sizeof v);
        if (!std::isfinite(v)) {
          fail(ErrorCode::kFormatError, "non-finite float sample in " + w.source_id);
        }
        acc += std::clamp(static_cast<double>(v), -1.0, 1.0);
      }
    }
    w.samples[i] = acc / channels;
  }
  return w;
}

inline Waveform load_wav(const std::filesystem::path& path) {
  auto bytes = detail::read_file_bytes(path);
  return decode_wav(bytes, path.stem().string());
}

inline std::vector<unsigned char> encode_wav16(const Waveform& w) {
  using detail::put_u16;
  using detail::put_u32;
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  std::vector<unsigned char> out;
  out.reserve(44 + 2 * static_cast<std::size_t>(n));
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + 2 * n);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, 2 * n);
  for (double x : w.samples) {
    long v = std::lround(x * 32768.0);
    v = std::clamp(v, -32768L, 32767L);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
  return out;
}

inline void save_wav16(const Waveform& w, const std::filesystem::path& path) {
  auto bytes = encode_wav16(w);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kFileError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

// Band-limited rational resampler: Kaiser-windowed sinc, 64 taps per phase.
class Resampler {
 public:
  static constexpr int kTaps = 64;
  static constexpr double kKaiserBeta = 8.6;
  static constexpr double kRolloff = 0.945;

  Resampler(int in_rate, int out_rate) : in_rate_(in_rate), out_rate_(out_rate) {
    if (in_rate <= 0 || out_rate <= 0) {
      fail(ErrorCode::kInvalidArgument, "sample rates must be positive");
    }
    const int g = std::gcd(in_rate, out_rate);
    up_ = out_rate / g;
    down_ = in_rate / g;
    cutoff_ = kRolloff * std::min(1.0, static_cast<double>(out_rate) / in_rate);
    // Kernel span in input samples grows when the cutoff drops.
    half_width_ = kTaps / 2;
    if (up_ <= 4096) {
      table_.resize(static_cast<std::size_t>(up_) * kTaps);
      for (long phase = 0; phase < up_; ++phase) {
        fill_phase(static_cast<double>(phase) / up_,
                   std::span<double>(table_).subspan(
                       static_cast<std::size_t>(phase) * kTaps, kTaps));
      }
    }
  }

  Waveform operator()(const Waveform& w) const {
    if (w.sample_rate != in_rate_) {
      fail(ErrorCode::kInvalidArgument, "resampler input rate mismatch");
    }
    Waveform out;
    out.sample_rate = out_rate_;
    out.source_id = w.source_id;
    const auto n_in = static_cast<long long>(w.samples.size());
    const long long n_out = (n_in * up_ + down_ - 1) / down_;
    out.samples.resize(static_cast<std::size_t>(n_out));
    std::vector<double> scratch(kTaps);
    for (long long n = 0; n < n_out; ++n) {
      const long long num = n * down_;
      const long long base = num / up_;
      const long phase = static_cast<long>(num % up_);
      std::span<const double> taps;
      if (!table_.empty()) {
        taps = std::span<const double>(table_).subspan(
            static_cast<std::size_t>(phase) * kTaps, kTaps);
      } else {
        fill_phase(static_cast<double>(phase) / up_, scratch);
        taps = scratch;
      }
      double acc = 0.0;
      for (int k = 0; k < kTaps; ++k) {
        const long long idx = base - half_width_ + 1 + k;
        if (idx >= 0 && idx < n_in) acc += taps[static_cast<std::size_t>(k)] *
                                           w.samples[static_cast<std::size_t>(idx)];
      }
      out.samples[static_cast<std::size_t>(n)] = std::clamp(acc, -1.0, 1.0);
    }
    return out;
  }

 private:
  // Tap k sits at input offset (k - half_width + 1) relative to floor(t);
  // `frac` is the fractional part of t.
  void fill_phase(double frac, std::span<double> taps) const {
    const double i0_beta = std::cyl_bessel_i(0.0, kKaiserBeta);
    for (int k = 0; k < kTaps; ++k) {
      const double x = static_cast<double>(k - half_width_ + 1) - frac;
      const double r = x / half_width_;
      double win = 0.0;
      if (std::abs(r) < 1.0) {
        win = std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - r * r)) / i0_beta;
      }
      const double arg = cutoff_ * x;
      const double sinc = (arg == 0.0) ? 1.0 : std::sin(M_PI * arg) / (M_PI * arg);
      taps[static_cast<std::size_t>(k)] = cutoff_ * sinc * win;
    }
  }

  int in_rate_;
  int out_rate_;
  long up_ = 1;
  long down_ = 1;
  double cutoff_ = 1.0;
  int half_width_ = kTaps / 2;
  std::vector<double> table_;
};

inline Waveform resample(const Waveform& w, int target_rate) {
  if (target_rate <= 0) {
    fail(ErrorCode::kInvalidArgument, "target rate must be positive");
  }
  if (w.sample_rate == target_rate) return w;
  return Resampler(w.sample_rate, target_rate)(w);
}

}  // namespace voqa
