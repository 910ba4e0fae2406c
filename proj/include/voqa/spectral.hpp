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
#include <complex>
#include <span>
#include <vector>

#include <unsupported/Eigen/FFT>

namespace voqa {

inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  if (n == 1) {
    w[0] = 1.0;
    return w;
  }
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) /
                                static_cast<double>(n - 1));
  }
  return w;
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Thin wrapper so callers own their FFT plan cache (one per thread).
class Fft {
 public:
  std::vector<std::complex<double>> forward(std::span<const double> x) {
    std::vector<double> in(x.begin(), x.end());
    std::vector<std::complex<double>> out;
    fft_.fwd(out, in);
    return out;
  }

  // Real part of the inverse transform of a full (two-sided) spectrum.
  std::vector<double> inverse_real(const std::vector<std::complex<double>>& spec) {
    std::vector<std::complex<double>> out;
    fft_.inv(out, spec);
    std::vector<double> re(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) re[i] = out[i].real();
    return re;
  }

  // |X_k|^2 for k = 0..n/2 of a zero-padded length-n transform.
  std::vector<double> power_spectrum(std::span<const double> x, std::size_t n) {
    std::vector<double> in(n, 0.0);
    std::copy_n(x.begin(), std::min(n, x.size()), in.begin());
    std::vector<std::complex<double>> out;
    fft_.fwd(out, in);
    std::vector<double> p(n / 2 + 1);
    for (std::size_t k = 0; k < p.size(); ++k) p[k] = std::norm(out[k]);
    return p;
  }

 private:
  Eigen::FFT<double> fft_;
};

}  // namespace voqa
