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

#include <random>

#include "oracles.hpp"
#include "voqa/pitch.hpp"
#include "voqa/synthetic.hpp"

using Catch::Approx;
using namespace voqa;

TEST_CASE("unit sine at 200 Hz is voiced everywhere", "[pitch]") {
  auto w = make_sine(200.0, 2.0, 1.0);
  auto track = track_pitch(w);
  REQUIRE(track.grid.num_frames > 0);
  for (std::size_t f = 0; f < track.grid.num_frames; ++f) {
    INFO("frame " << f);
    REQUIRE(track.voiced[f]);
    CHECK(std::abs(track.f0[f] - 200.0) <= 2.0);
  }
}

TEST_CASE("digital silence is unvoiced", "[pitch]") {
  Waveform w;
  w.samples.assign(32000, 0.0);
  auto track = track_pitch(w);
  CHECK(track.num_voiced() == 0);
  for (double f0 : track.f0) CHECK(f0 == 0.0);
  CHECK(track.period_marks.empty());
}

TEST_CASE("too-short input is rejected", "[pitch]") {
  Waveform w;
  w.samples.assign(100, 0.1);
  try {
    track_pitch(w);
    FAIL("expected TooShort");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kTooShort);
  }
}

TEST_CASE("period marks on a 150 Hz pulse train", "[pitch]") {
  // 300 pulses over 2 s.
  std::vector<std::size_t> pos;
  for (int k = 0; k < 300; ++k) pos.push_back(static_cast<std::size_t>(std::lround(k * 16000.0 / 150.0)));
  auto w = make_pulse_train(32000, pos, {0.8});

  // Oracle: count samples above half the pulse height.
  std::size_t oracle_count = 0;
  for (double v : w.samples) oracle_count += (v > 0.4) ? 1 : 0;
  REQUIRE(oracle_count == 300);

  auto track = track_pitch(w);
  const auto marks = static_cast<long>(track.period_marks.size());
  CHECK(std::abs(marks - static_cast<long>(oracle_count)) <= 1);
}

TEST_CASE("f0 accuracy on synthetic tones", "[pitch]") {
  for (double f0 : {100.0, 150.0, 200.0, 300.0}) {
    for (int kind = 0; kind < 2; ++kind) {
      auto w = kind == 0 ? make_sine(f0, 1.0, 0.7) : make_harmonic_tone(f0, 1.0);
      auto track = track_pitch(w);
      INFO("f0 " << f0 << " kind " << kind);
      REQUIRE(track.num_voiced() == track.grid.num_frames);
      for (std::size_t f = 0; f < track.grid.num_frames; ++f) {
        CHECK(std::abs(track.f0[f] - f0) <= 0.01 * f0);
      }
    }
  }
}

TEST_CASE("pitch track invariants hold on random vowels", "[pitch][property]") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> f0s(90.0, 320.0), jit(0.0, 0.03), shim(0.0, 0.1),
      snr(5.0, 40.0);
  PitchConfig cfg;
  for (int trial = 0; trial < 12; ++trial) {
    VowelSpec spec;
    spec.f0 = f0s(rng);
    spec.jitter = jit(rng);
    spec.shimmer = shim(rng);
    spec.snr_db = snr(rng);
    spec.seconds = 0.6;
    spec.lead_silence = 0.1;
    spec.tail_silence = 0.1;
    spec.seed = 40 + trial;
    auto v = make_vowel(spec);
    auto track = track_pitch(v.wave, cfg);
    for (std::size_t f = 0; f < track.grid.num_frames; ++f) {
      CHECK((track.f0[f] > 0.0) == static_cast<bool>(track.voiced[f]));
      if (track.voiced[f]) {
        CHECK(track.f0[f] >= cfg.f0_min);
        CHECK(track.f0[f] <= cfg.f0_max);
      }
    }
    for (std::size_t i = 1; i < track.period_marks.size(); ++i) {
      CHECK(track.period_marks[i] > track.period_marks[i - 1]);
    }
    CHECK(track.mark_run.size() == track.period_marks.size());
  }
}

TEST_CASE("band and frame preconditions", "[pitch]") {
  auto w = make_sine(200.0, 0.5);
  PitchConfig bad;
  bad.f0_min = 10.0;
  CHECK_THROWS_AS(track_pitch(w, bad), Error);
  PitchConfig short_frame;
  short_frame.frame_seconds = 0.02;
  CHECK_THROWS_AS(track_pitch(w, short_frame), Error);
}

TEST_CASE("period marks increase strictly across voiced runs", "[pitch][property]") {
  // Irregular periods leave some frames unvoiced; the runs either side share
  // overlapping analysis frames but must not share marks.
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> period(74, 86);
    std::vector<std::size_t> pos;
    for (std::size_t p = 60; p < 31800; p += static_cast<std::size_t>(period(rng))) pos.push_back(p);
    const auto track = track_pitch(make_pulse_train(32000, pos, {0.7}));
    REQUIRE(track.period_marks.size() > 100);
    for (std::size_t i = 1; i < track.period_marks.size(); ++i) {
      CHECK(track.period_marks[i] > track.period_marks[i - 1]);
      CHECK(track.mark_run[i] >= track.mark_run[i - 1]);
    }
  }
}
