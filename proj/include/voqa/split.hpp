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
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "voqa/error.hpp"

namespace voqa {

enum class SplitMode { kHoldout, kCv5, kManifest };

inline SplitMode parse_split_mode(std::string_view s) {
  if (s == "holdout") return SplitMode::kHoldout;
  if (s == "cv5") return SplitMode::kCv5;
  if (s == "manifest") return SplitMode::kManifest;
  fail(ErrorCode::kConfigError, "split mode must be holdout, cv5 or manifest, got '" + std::string(s) + "'");
}

struct SpeakerInfo {
  std::string speaker_id;
  double severity = std::nan("");  // first attribute, speaker mean; NaN if unlabeled
};

// Holdout: 0 = train, 1 = test. Cross-validation: fold index 0..num_folds-1,
// where fold k is the test side of round k.
struct SplitPlan {
  SplitMode mode = SplitMode::kHoldout;
  int num_folds = 1;
  std::map<std::string, int> assignment;

  int num_rounds() const { return mode == SplitMode::kCv5 ? num_folds : 1; }

  bool is_test(const std::string& speaker, int round) const {
    auto it = assignment.find(speaker);
    if (it == assignment.end()) return false;
    return mode == SplitMode::kCv5 ? it->second == round : it->second == 1;
  }
  bool is_train(const std::string& speaker, int round) const {
    return assignment.count(speaker) && !is_test(speaker, round);
  }

  std::vector<std::string> speakers(int part) const {
    std::vector<std::string> out;
    for (const auto& [s, p] : assignment)
      if (p == part) out.push_back(s);
    return out;
  }
};

struct SplitOptions {
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
  int num_folds = 5;
};

namespace detail {

// Speakers grouped into severity quartiles (rank-based); unlabeled speakers
// form a trailing stratum. Each stratum is shuffled by `rng`.
inline std::vector<std::vector<std::string>> stratify(std::vector<SpeakerInfo> speakers,
                                                      std::mt19937_64& rng) {
  std::sort(speakers.begin(), speakers.end(), [](const SpeakerInfo& a, const SpeakerInfo& b) {
    return a.speaker_id < b.speaker_id;
  });
  std::vector<SpeakerInfo> labeled, unlabeled;
  for (auto& s : speakers) (std::isnan(s.severity) ? unlabeled : labeled).push_back(s);
  std::stable_sort(labeled.begin(), labeled.end(), [](const SpeakerInfo& a, const SpeakerInfo& b) {
    return a.severity < b.severity;
  });
  std::vector<std::vector<std::string>> strata(5);
  const std::size_t n = labeled.size();
  for (std::size_t r = 0; r < n; ++r) strata[(4 * r) / n].push_back(labeled[r].speaker_id);
  for (auto& s : unlabeled) strata[4].push_back(s.speaker_id);
  for (auto& s : strata) {
    // Fisher-Yates with an explicit draw so the order is stable across
    // standard-library implementations.
    for (std::size_t i = s.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng() % i);
      std::swap(s[i - 1], s[j]);
    }
  }
  strata.erase(std::remove_if(strata.begin(), strata.end(), [](const auto& s) { return s.empty(); }),
               strata.end());
  return strata;
}

}  // namespace detail

// Patient-disjoint split stratified by severity quartile.
inline SplitPlan make_splits(const std::vector<SpeakerInfo>& speakers, SplitMode mode,
                             const SplitOptions& opt = {}) {
  {
    std::vector<std::string> ids;
    for (const auto& s : speakers) ids.push_back(s.speaker_id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
      fail(ErrorCode::kInvalidArgument, "speaker list contains duplicates");
    }
  }
  std::mt19937_64 rng(opt.seed);
  SplitPlan plan;
  plan.mode = mode;
  const std::size_t n = speakers.size();
  if (mode == SplitMode::kCv5) {
    if (opt.num_folds < 2) fail(ErrorCode::kConfigError, "cross-validation needs at least 2 folds");
    const std::size_t need = 2 * static_cast<std::size_t>(opt.num_folds);
    if (n < need) {
      fail(ErrorCode::kInsufficientSpeakers,
           std::to_string(n) + " speakers, cross-validation needs at least " + std::to_string(need));
    }
    plan.num_folds = opt.num_folds;
    std::size_t k = 0;
    for (const auto& stratum : detail::stratify(speakers, rng)) {
      for (const auto& s : stratum) plan.assignment[s] = static_cast<int>(k++ % opt.num_folds);
    }
    return plan;
  }
  if (mode != SplitMode::kHoldout) fail(ErrorCode::kInvalidArgument, "make_splits handles holdout and cv5");
  if (!(opt.test_fraction > 0.0 && opt.test_fraction < 1.0)) {
    fail(ErrorCode::kConfigError, "test_fraction must lie in (0, 1)");
  }
  if (n < 2) fail(ErrorCode::kInsufficientSpeakers, "holdout needs at least 2 speakers");
  plan.num_folds = 2;
  std::size_t n_test = static_cast<std::size_t>(std::llround(opt.test_fraction * static_cast<double>(n)));
  n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
  auto strata = detail::stratify(speakers, rng);
  // Largest-remainder apportionment of the test count over strata.
  std::vector<std::size_t> take(strata.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t given = 0;
  for (std::size_t i = 0; i < strata.size(); ++i) {
    const double exact = static_cast<double>(n_test) * static_cast<double>(strata[i].size()) /
                         static_cast<double>(n);
    take[i] = static_cast<std::size_t>(std::floor(exact));
    given += take[i];
    rem.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; given < n_test; ++r) {
    ++take[rem[r % rem.size()].second];
    ++given;
  }
  for (std::size_t i = 0; i < strata.size(); ++i) {
    for (std::size_t j = 0; j < strata[i].size(); ++j) plan.assignment[strata[i][j]] = j < take[i] ? 1 : 0;
  }
  return plan;
}

// Split read from per-row split values ("train"/"test" or a fold index).
inline SplitPlan split_from_labels(const std::map<std::string, std::string>& speaker_split) {
  SplitPlan plan;
  bool folds = false, holdout = false;
  int max_fold = -1;
  for (const auto& [spk, v] : speaker_split) {
    if (v == "train" || v == "test") {
      holdout = true;
      plan.assignment[spk] = v == "test" ? 1 : 0;
    } else if (!v.empty() && std::all_of(v.begin(), v.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      folds = true;
      const int k = std::stoi(v);
      plan.assignment[spk] = k;
      max_fold = std::max(max_fold, k);
    } else {
      fail(ErrorCode::kConfigError, "speaker '" + spk + "' has split value '" + v +
                                        "'; expected train, test or a fold index");
    }
  }
  if (folds && holdout) fail(ErrorCode::kConfigError, "split column mixes train/test with fold indices");
  std::set<int> used;
  for (const auto& [spk, side] : plan.assignment) used.insert(side);
  if (folds) {
    plan.mode = SplitMode::kCv5;
    plan.num_folds = max_fold + 1;
    if (static_cast<int>(used.size()) != plan.num_folds || plan.num_folds < 2) {
      fail(ErrorCode::kInsufficientSpeakers, "split column needs at least two folds, each with a speaker");
    }
  } else {
    plan.mode = SplitMode::kHoldout;
    plan.num_folds = 2;
    if (used.size() != 2) fail(ErrorCode::kInsufficientSpeakers, "split column needs both train and test speakers");
  }
  return plan;
}

}  // namespace voqa
