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

// Reference computations used by the tests. These deliberately avoid the
// library's own code paths (no voqa:: DSP helpers).

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <vector>

#include <unsupported/Eigen/FFT>

namespace oracle {

inline double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// mean |x_k - x_{k-1}| / mean x_k over one contiguous sequence.
inline double local_perturbation(const std::vector<double>& seq) {
  double diff = 0.0;
  for (std::size_t k = 1; k < seq.size(); ++k) diff += std::abs(seq[k] - seq[k - 1]);
  return (diff / static_cast<double>(seq.size() - 1)) / mean(seq);
}

inline double power(const std::vector<double>& x) {
  double p = 0.0;
  for (double v : x) p += v * v;
  return p / static_cast<double>(x.size());
}

// Direct O(N^2) DFT.
inline std::vector<std::complex<double>> dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double ang = -2.0 * M_PI * static_cast<double>((k * i) % n) / static_cast<double>(n);
      acc += x[i] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

// Real part of the direct inverse DFT.
inline std::vector<double> idft_real(const std::vector<double>& spectrum) {
  const std::size_t n = spectrum.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      acc += spectrum[k] * std::cos(2.0 * M_PI * static_cast<double>((k * i) % n) / static_cast<double>(n));
    }
    out[i] = acc / static_cast<double>(n);
  }
  return out;
}

// Ordinary least squares y = a*x + b.
inline std::pair<double, double> line_fit(const std::vector<double>& x, const std::vector<double>& y) {
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  const double a = sxy / sxx;
  return {a, my - a * mx};
}

// Welch PSD with Hann windows and 50% overlap.
inline std::vector<double> welch_psd(const std::vector<double>& x, std::size_t seg) {
  std::vector<double> win(seg);
  for (std::size_t i = 0; i < seg; ++i) win[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / seg);
  Eigen::FFT<double> fft;
  std::vector<double> psd(seg / 2 + 1, 0.0);
  std::size_t count = 0;
  for (std::size_t s = 0; s + seg <= x.size(); s += seg / 2) {
    std::vector<double> frame(seg);
    for (std::size_t i = 0; i < seg; ++i) frame[i] = x[s + i] * win[i];
    std::vector<std::complex<double>> spec;
    fft.fwd(spec, frame);
    for (std::size_t k = 0; k < psd.size(); ++k) psd[k] += std::norm(spec[k]);
    ++count;
  }
  for (double& p : psd) p /= static_cast<double>(count);
  return psd;
}

inline std::size_t dominant_bin(const std::vector<double>& x) {
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  std::vector<double> in(x);
  fft.fwd(spec, in);
  std::size_t best = 1;
  for (std::size_t k = 1; k <= x.size() / 2; ++k) {
    if (std::abs(spec[k]) > std::abs(spec[best])) best = k;
  }
  return best;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = mean(a), mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// Hand-built RIFF/WAVE with interleaved samples of the given encoding.
inline std::vector<unsigned char> wav_bytes(std::uint16_t format, std::uint16_t channels,
                                            std::uint32_t rate, std::uint16_t bits,
                                            const std::vector<unsigned char>& payload) {
  std::vector<unsigned char> out;
  auto u16 = [&](std::uint16_t v) {
    out.push_back(v & 0xff);
    out.push_back(v >> 8);
  };
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xff);
  };
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  u32(static_cast<std::uint32_t>(36 + payload.size()));
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  u32(16);
  u16(format);
  u16(channels);
  u32(rate);
  u32(rate * channels * bits / 8);
  u16(static_cast<std::uint16_t>(channels * bits / 8));
  u16(bits);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  u32(static_cast<std::uint32_t>(payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

inline std::vector<unsigned char> float_payload(const std::vector<float>& v) {
  std::vector<unsigned char> out(v.size() * 4);
  std::memcpy(out.data(), v.data(), out.size());
  return out;
}

inline std::vector<unsigned char> int16_payload(const std::vector<std::int16_t>& v) {
  std::vector<unsigned char> out(v.size() * 2);
  std::memcpy(out.data(), v.data(), out.size());
  return out;
}

}  // namespace oracle
