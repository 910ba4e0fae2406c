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

#include <catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "tempdir.hpp"
#include "voqa/lld.hpp"
#include "voqa/noise.hpp"
#include "voqa/synthetic.hpp"

using Catch::Approx;
using namespace voqa;

namespace {

double flatness(const std::vector<double>& psd) {
  double log_sum = 0.0, sum = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 1; k + 1 < psd.size(); ++k) {
    log_sum += std::log(psd[k]);
    sum += psd[k];
    ++n;
  }
  return std::exp(log_sum / n) / (sum / n);
}

// Least-squares slope of log10 PSD against log10 frequency over [lo, hi] Hz.
double psd_slope(const std::vector<double>& x, double lo, double hi, int rate = 16000) {
  const std::size_t seg = 2048;
  const auto psd = oracle::welch_psd(x, seg);
  std::vector<double> lf, lp;
  for (std::size_t k = 1; k < psd.size(); ++k) {
    const double f = static_cast<double>(k) * rate / seg;
    if (f < lo || f > hi) continue;
    lf.push_back(std::log10(f));
    lp.push_back(std::log10(psd[k]));
  }
  return oracle::line_fit(lf, lp).first;
}

// SNR of a mix re-measured from its parts: the clean reference scaled by the
// recorded peak factor, and whatever remains.
double remeasured_snr(const std::vector<double>& clean, const std::vector<double>& mixed, double scale) {
  std::vector<double> s(clean.size()), r(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    s[i] = scale * clean[i];
    r[i] = mixed[i] - s[i];
  }
  return 10.0 * std::log10(oracle::power(s) / oracle::power(r));
}

Waveform test_vowel(std::uint64_t seed, double seconds = 1.0) {
  VowelSpec v;
  v.f0 = 140.0 + 10.0 * static_cast<double>(seed % 5);
  v.jitter = 0.01;
  v.shimmer = 0.04;
  v.seconds = seconds;
  v.seed = seed;
  return make_vowel(v).wave;
}

Manifest one_row_manifest(const TempDir& dir, const Waveform& w) {
  save_wav16(w, dir / "u1.wav");
  const std::string csv =
      "utterance_id,speaker_id,wav_path,subset,capev_severity,age\n"
      "u1,s1,u1.wav,A,42.5,61\n";
  return parse_manifest(csv, dir.path());
}

}  // namespace

TEST_CASE("white noise is spectrally flat", "[noise]") {
  const auto w = generate_noise({NoiseKind::kWhite, {}, 1}, 16000);
  REQUIRE(w.size() == 16000);
  CHECK(flatness(oracle::welch_psd(w.samples, 256)) >= 0.9);
}

TEST_CASE("pink noise falls 10 dB per decade", "[noise]") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto w = generate_noise({NoiseKind::kPink, {}, seed}, 80000);
    CHECK(psd_slope(w.samples, 100.0, 4000.0) == Approx(-1.0).margin(0.2));
  }
}

TEST_CASE("brown noise falls 20 dB per decade", "[noise]") {
  const auto w = generate_noise({NoiseKind::kBrown, {}, 4}, 80000);
  CHECK(psd_slope(w.samples, 100.0, 4000.0) == Approx(-2.0).margin(0.3));
}

TEST_CASE("generated noise is seeded, zero-mean and unit power", "[noise]") {
  for (auto k : {NoiseKind::kWhite, NoiseKind::kPink, NoiseKind::kBrown, NoiseKind::kBabble,
                 NoiseKind::kCocktail, NoiseKind::kBabyCry, NoiseKind::kLaughter}) {
    CAPTURE(to_string(k));
    const auto a = generate_noise({k, {}, 9}, 12000);
    const auto b = generate_noise({k, {}, 9}, 12000);
    const auto c = generate_noise({k, {}, 10}, 12000);
    CHECK(a.samples == b.samples);
    CHECK(a.samples != c.samples);
    CHECK(oracle::mean(a.samples) == Approx(0.0).margin(1e-9));
    CHECK(oracle::power(a.samples) == Approx(1.0).epsilon(1e-9));
    CHECK(parse_noise_kind(to_string(k)) == k);
  }
  CHECK_THROWS_AS(generate_noise({NoiseKind::kWhite, {}, 1}, 0), Error);
}

TEST_CASE("external noise is loaded, looped and normalized", "[noise]") {
  TempDir dir("noise_ext");
  Waveform src = make_sine(300.0, 0.25, 0.3);
  save_wav16(src, dir / "hum.wav");
  NoiseSpec spec{NoiseKind::kExternal, dir / "hum.wav", 0, "hum"};
  const auto w = generate_noise(spec, 10000);
  REQUIRE(w.size() == 10000);
  CHECK(w.samples[4000] == Approx(w.samples[0]).margin(1e-12));  // 0.25 s loop
  CHECK(oracle::power(w.samples) == Approx(1.0).epsilon(1e-9));
  try {
    generate_noise({NoiseKind::kExternal, dir / "absent.wav"}, 100);
    FAIL("expected FileError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kFileError);
  }
}

TEST_CASE("mixing hits the requested SNR", "[noise][mix]") {
  // Unit-power clean signal: a square wave of amplitude 1.
  Waveform clean;
  clean.samples.resize(8000);
  for (std::size_t i = 0; i < clean.size(); ++i) clean.samples[i] = (i / 40) % 2 ? 1.0 : -1.0;
  const auto noise = generate_noise({NoiseKind::kWhite, {}, 3}, 8000);
  SECTION("0 dB") {
    const auto m = mix_at_snr(clean, noise, 0.0);
    CHECK(m.noise_gain * m.noise_gain * oracle::power(noise.samples) == Approx(1.0).margin(1e-4));
  }
  SECTION("10 dB") {
    const auto m = mix_at_snr(clean, noise, 10.0);
    CHECK(m.noise_gain * m.noise_gain * oracle::power(noise.samples) == Approx(0.1).margin(1e-4));
  }
  SECTION("peak normalization scales both parts and keeps the SNR") {
    const auto m = mix_at_snr(clean, noise, 5.0);
    REQUIRE(m.mix_scale < 1.0);
    double peak = 0.0;
    for (double v : m.mixed.samples) peak = std::max(peak, std::abs(v));
    CHECK(peak <= 1.0);
    CHECK(remeasured_snr(clean.samples, m.mixed.samples, m.mix_scale) == Approx(5.0).margin(1e-9));
  }
}

TEST_CASE("mixing re-measures within 0.01 dB for every noise kind and SNR", "[noise][mix][property]") {
  const auto clean = test_vowel(2);
  for (const auto& spec : {NoiseSpec{NoiseKind::kWhite}, NoiseSpec{NoiseKind::kPink}, NoiseSpec{NoiseKind::kBrown},
                           NoiseSpec{NoiseKind::kBabble}, NoiseSpec{NoiseKind::kCocktail},
                           NoiseSpec{NoiseKind::kBabyCry}, NoiseSpec{NoiseKind::kLaughter}}) {
    for (double snr : {-5.0, 0.0, 5.0, 10.0}) {
      const auto n = noise_for(spec, "u", snr, 1, clean.size(), clean.sample_rate);
      const auto m = mix_at_snr(clean, n, snr);
      CHECK(std::abs(remeasured_snr(clean.samples, m.mixed.samples, m.mix_scale) - snr) < 0.01);
    }
  }
}

TEST_CASE("mixing rejects degenerate input", "[noise][mix]") {
  Waveform silent;
  silent.samples.assign(100, 0.0);
  const auto noise = generate_noise({NoiseKind::kWhite, {}, 1}, 100);
  try {
    mix_at_snr(silent, noise, 0.0);
    FAIL("expected DegenerateSignal");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDegenerateSignal);
  }
  Waveform other = noise;
  other.sample_rate = 8000;
  CHECK_THROWS_AS(mix_at_snr(test_vowel(1), other, 0.0), Error);
}

TEST_CASE("augmentation row counts follow the noise grid", "[noise][augment]") {
  TempDir dir("augment_counts");
  const auto m = one_row_manifest(dir, test_vowel(3, 0.5));
  AugmentOptions opt{dir / "noisy", 5};
  SECTION("train role: 4 noises x 4 SNRs plus the clean row") {
    const auto out = build_augmented_set(m, {standard_plan("train_seen")}, opt, dir.path());
    CHECK(out.rows.size() == 17);
  }
  SECTION("unseen role: 3 noises x 2 SNRs plus the clean row") {
    const auto out = build_augmented_set(m, {standard_plan("test_unseen")}, opt, dir.path());
    CHECK(out.rows.size() == 7);
  }
  SECTION("no plans: unchanged") {
    const auto out = build_augmented_set(m, {}, opt, dir.path());
    CHECK(out.to_csv() == m.to_csv());
    CHECK(!std::filesystem::exists(dir / "noisy"));
  }
}

TEST_CASE("augmented rows keep labels and record the mix", "[noise][augment]") {
  TempDir dir("augment_rows");
  const auto clean = test_vowel(4, 0.5);
  const auto m = one_row_manifest(dir, clean);
  const auto out =
      build_augmented_set(m, {standard_plan("train_seen")}, {dir / "noisy", 5}, dir.path());
  const Waveform ref = load_wav(dir / "u1.wav");
  CHECK(out.rows[0].role() == "clean");
  for (std::size_t i = 1; i < out.rows.size(); ++i) {
    const auto& r = out.rows[i];
    CHECK(r.speaker_id() == "s1");
    CHECK(r.get("capev_severity") == "42.5");
    CHECK(r.get("age") == "61");
    CHECK(r.get("role") == "train_seen");
    CHECK(r.utterance_id() == "u1__" + r.get("noise_kind") + "__" + r.get("snr_db"));
    CHECK(r.get("wav_path") == "noisy/" + r.utterance_id() + ".wav");
    const auto noisy = load_wav(out.resolve(r.get("wav_path")));
    const double snr = *parse_number(r.get("snr_db"));
    const double scale = *parse_number(r.get("mix_scale"));
    CHECK(std::abs(remeasured_snr(ref.samples, noisy.samples, scale) - snr) < 0.01);
  }
}

TEST_CASE("augmentation is deterministic and split-aware", "[noise][augment]") {
  TempDir dir("augment_det");
  save_wav16(test_vowel(5, 0.3), dir / "a.wav");
  save_wav16(test_vowel(6, 0.3), dir / "b.wav");
  const auto m = parse_manifest(
      "utterance_id,speaker_id,wav_path,split\na,s1,a.wav,train\nb,s2,b.wav,test\n", dir.path());
  const std::vector<MixPlan> plans = {standard_plan("train_seen"), standard_plan("test_seen"),
                                      standard_plan("test_unseen")};
  const auto x = build_augmented_set(m, plans, {dir / "x", 8, true}, dir.path());
  const auto y = build_augmented_set(m, plans, {dir / "y", 8, true}, dir.path());
  // a: clean + 16 train_seen; b: clean + 16 test_seen + 6 test_unseen.
  CHECK(x.rows.size() == 17 + 23);
  for (const auto& r : x.rows) {
    if (r.speaker_id() == "s1") CHECK((r.role() == "clean" || r.role() == "train_seen"));
    if (r.speaker_id() == "s2") CHECK(r.role() != "train_seen");
  }
  for (const auto& e : std::filesystem::directory_iterator(dir / "x")) {
    const auto other = dir / "y" / e.path().filename();
    CHECK(read_text_file(e.path()) == read_text_file(other));
  }
}

TEST_CASE("HNR does not rise as the SNR drops", "[noise][lld]") {
  const auto vowel = test_vowel(7, 1.0);
  const auto track = track_pitch(vowel);
  double prev = hnr_db(vowel, track);
  for (double snr : {10.0, 5.0, 0.0, -5.0}) {
    const auto n = noise_for({NoiseKind::kWhite}, "v", snr, 2, vowel.size(), vowel.sample_rate);
    const double h = hnr_db(mix_at_snr(vowel, n, snr).mixed, track);
    CHECK(h <= prev);
    prev = h;
  }
}
