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

#include <cstdlib>
#include <fstream>
#include <set>

#include "tempdir.hpp"
#include "voqa/voqa.hpp"

using namespace voqa;

namespace {

// A small corpus with both subsets: the same speakers record a vowel (A)
// and a sentence (S).
Manifest two_subset_corpus(const std::filesystem::path& dir, std::size_t speakers = 16) {
  SynthCorpusSpec spec;
  spec.speakers = speakers;
  spec.seconds = 0.5;
  spec.layers = 3;
  spec.dim = 8;
  spec.min_frames = 5;
  spec.max_frames = 12;
  spec.seed = 11;
  Manifest a = write_synthetic_corpus(make_synthetic_corpus(spec), dir / "A");
  spec.subset = "S";
  spec.seed = 12;
  Manifest s = write_synthetic_corpus(make_synthetic_corpus(spec), dir / "S");
  Manifest m;
  m.base_dir = dir;
  m.columns = a.columns;
  for (auto* part : {&a, &s}) {
    const std::string sub = part == &a ? "A" : "S";
    for (auto r : part->rows) {
      r.set("utterance_id", sub + "_" + r.utterance_id());
      r.set("wav_path", sub + "/" + r.get("wav_path"));
      r.set("vqes_path", sub + "/" + r.get("vqes_path"));
      r.line = m.rows.size() + 2;
      m.rows.push_back(r);
    }
  }
  save_manifest(m, dir / "manifest.csv");
  return m;
}

RunConfig quick_config(const std::filesystem::path& dir, FeatureMode mode) {
  RunConfig c;
  c.manifest = dir / "manifest.csv";
  c.features = mode;
  c.train.epochs = 3;
  c.train.hidden = {16, 12, 8};
  c.train.attention_dim = 8;
  c.output_dir = dir / "out";
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<CsvRow> table(const std::filesystem::path& p) { return parse_csv(read_text_file(p)); }

}  // namespace

TEST_CASE("lld_only runs with no embedding files on disk", "[pipeline]") {
  TempDir dir("pipe_lld");
  two_subset_corpus(dir.path(), 12);
  std::filesystem::remove_all(dir / "A/vqes");
  std::filesystem::remove_all(dir / "S/vqes");
  auto cfg = quick_config(dir.path(), FeatureMode::kLldOnly);
  cfg.subsets = {"A"};
  const auto r = cmd_run(cfg);
  CHECK(r.trainings == 1);
  CHECK(std::filesystem::exists(dir / "out/results_table.csv"));
}

TEST_CASE("embedding modes list every row missing its stack", "[pipeline]") {
  TempDir dir("pipe_missing");
  two_subset_corpus(dir.path(), 10);
  std::filesystem::remove(dir / "A/vqes/spk0003_u1.vqes");
  std::filesystem::remove(dir / "S/vqes/spk0007_u0.vqes");
  const auto cfg = quick_config(dir.path(), FeatureMode::kSfmWs);
  try {
    cmd_run(cfg);
    FAIL("expected MissingEmbeddings");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMissingEmbeddings);
    const std::string msg = e.what();
    CHECK(msg.find("A_spk0003_u1") != std::string::npos);
    CHECK(msg.find("S_spk0007_u0") != std::string::npos);
    CHECK(exit_code_for(e) == 1);
  }
}

TEST_CASE("a holdout run emits the subset by level grid", "[pipeline]") {
  TempDir dir("pipe_grid");
  two_subset_corpus(dir.path());
  const auto cfg = quick_config(dir.path(), FeatureMode::kSfmWsJsh);
  cmd_run(cfg);
  const auto t = table(dir / "out/results_table.csv");
  REQUIRE(t.size() == 5);
  std::set<std::pair<std::string, std::string>> cells;
  for (std::size_t i = 1; i < t.size(); ++i) {
    CHECK(t[i][0] == "sfm_ws+jsh");
    CHECK(t[i][2] == "clean");
    CHECK(t[i][4] == "1");
    cells.insert({t[i][1], t[i][3]});
  }
  CHECK(cells == std::set<std::pair<std::string, std::string>>{
                     {"A", "utterance"}, {"A", "patient"}, {"S", "utterance"}, {"S", "patient"}});
  for (const char* f : {"metrics.csv", "results_table.txt", "config_echo.json", "split.csv", "warnings.txt",
                        "logs/A_clean_holdout.jsonl", "checkpoints/S_clean_holdout_final.vqck",
                        "checkpoints/S_clean_holdout_best.vqck", "scatter/A__clean__patient__holdout.csv",
                        "fits/S__clean__utterance__holdout.csv"}) {
    CAPTURE(f);
    CHECK(std::filesystem::exists(dir / "out" / f));
  }
  // The echoed config restores the run configuration.
  const auto echo = nlohmann::json::parse(read_text_file(dir / "out/config_echo.json"));
  CHECK(RunConfig::from_json(echo).to_json() == cfg.to_json());
}

TEST_CASE("patient tables count exactly the test speakers", "[pipeline]") {
  TempDir dir("pipe_patient");
  two_subset_corpus(dir.path());
  auto cfg = quick_config(dir.path(), FeatureMode::kLldOnly);
  cfg.subsets = {"S"};
  const auto r = cmd_run(cfg);
  std::set<std::string> test_speakers;
  for (const auto& row : table(dir / "out/split.csv")) {
    if (row[1] == "test") test_speakers.insert(row[0]);
  }
  REQUIRE(r.predictions.size() == 1);
  const auto& p = r.predictions[0];
  CHECK(std::set<std::string>(p.speaker_ids.begin(), p.speaker_ids.end()) == test_speakers);
  for (const auto& row : table(dir / "out/metrics.csv")) {
    if (row[3] == "patient") CHECK(row[8] == std::to_string(test_speakers.size()));
    if (row[3] == "utterance") CHECK(row[8] == std::to_string(2 * test_speakers.size()));
  }
}

TEST_CASE("cv5 reports five folds and their mean and spread", "[pipeline]") {
  TempDir dir("pipe_cv5");
  two_subset_corpus(dir.path(), 15);
  auto cfg = quick_config(dir.path(), FeatureMode::kLldOnly);
  cfg.subsets = {"A"};
  cfg.split_mode = SplitMode::kCv5;
  const auto r = cmd_run(cfg);
  CHECK(r.trainings == 5);
  CHECK(r.predictions.size() == 5);
  std::set<std::string> seen_utts;
  for (const auto& p : r.predictions) {
    for (const auto& u : p.utterance_ids) CHECK(seen_utts.insert(u).second);
  }
  CHECK(seen_utts.size() == 30);  // every utterance is tested exactly once
  const auto t = table(dir / "out/results_table.csv");
  REQUIRE(t.size() == 3);
  std::vector<double> fold_rmse;
  for (const auto& row : table(dir / "out/metrics.csv")) {
    if (row[3] == "utterance" && row[5] == "macro") fold_rmse.push_back(*parse_number(row[6]));
  }
  REQUIRE(fold_rmse.size() == 5);
  double mean = 0.0;
  for (double v : fold_rmse) mean += v / 5.0;
  double ss = 0.0;
  for (double v : fold_rmse) ss += (v - mean) * (v - mean);
  CHECK(t[1][4] == "5");
  CHECK(*parse_number(t[1][5]) == Catch::Approx(mean).margin(2e-6));
  CHECK(*parse_number(t[1][6]) == Catch::Approx(std::sqrt(ss / 4.0)).margin(2e-6));
  CHECK(read_text_file(dir / "out/results_table.txt").find(" ± ") != std::string::npos);
}

TEST_CASE("rerunning the same config reproduces every output byte", "[pipeline]") {
  TempDir dir("pipe_determinism");
  two_subset_corpus(dir.path(), 10);
  auto cfg = quick_config(dir.path(), FeatureMode::kSfmWsJsh);
  cfg.validation_fraction = 0.25;
  cmd_run(cfg);
  std::map<std::string, std::string> first;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir / "out")) {
    if (e.is_regular_file()) first[std::filesystem::relative(e.path(), dir / "out").string()] = slurp(e.path());
  }
  std::filesystem::remove_all(dir / "out");
  cmd_run(cfg);
  std::size_t compared = 0;
  for (const auto& [rel, bytes] : first) {
    CAPTURE(rel);
    CHECK(slurp(dir / "out" / rel) == bytes);
    ++compared;
  }
  CHECK(compared > 20);
  // Validation speakers produce per-epoch validation records.
  const auto log = read_text_file(dir / "out/logs/A_clean_holdout.jsonl");
  CHECK(log.find("\"split\":\"validation\"") != std::string::npos);
}

TEST_CASE("report regenerates the tables from saved predictions", "[pipeline]") {
  TempDir dir("pipe_report");
  two_subset_corpus(dir.path(), 10);
  auto cfg = quick_config(dir.path(), FeatureMode::kLldOnly);
  cmd_run(cfg);
  const auto metrics = read_text_file(dir / "out/metrics.csv");
  const auto txt = read_text_file(dir / "out/results_table.txt");
  std::filesystem::remove(dir / "out/metrics.csv");
  std::filesystem::remove_all(dir / "out/scatter");
  report_from_directory(dir / "out");
  CHECK(read_text_file(dir / "out/metrics.csv") == metrics);
  CHECK(read_text_file(dir / "out/results_table.txt") == txt);
  CHECK(std::filesystem::exists(dir / "out/scatter/A__clean__patient__holdout.csv"));
}

TEST_CASE("noisy conditions draw the right rows", "[pipeline]") {
  TempDir dir("pipe_noisy");
  SynthCorpusSpec spec;
  spec.speakers = 10;
  spec.utterances_per_speaker = 1;
  spec.seconds = 0.4;
  const auto clean = write_synthetic_corpus(make_synthetic_corpus(spec), dir / "c");
  // Seen grid on every row, unseen grid too: roles drive the conditions.
  const auto aug = build_augmented_set(clean, {standard_plan("train_seen"), standard_plan("test_unseen")},
                                       {dir / "noisy", 5, false}, dir.path());
  save_manifest(aug, dir / "manifest.csv");
  auto cfg = quick_config(dir.path(), FeatureMode::kLldOnly);
  cfg.conditions = {"clean", "seen", "unseen"};
  cfg.save_checkpoints = false;
  const auto r = cmd_run(cfg);
  CHECK(r.trainings == 2);  // clean regime and noisy regime
  REQUIRE(r.predictions.size() == 3);
  for (const auto& p : r.predictions) {
    std::set<std::string> speakers(p.speaker_ids.begin(), p.speaker_ids.end());
    const std::size_t k = speakers.size();
    std::map<std::string, std::size_t> roles;
    for (const auto& role : p.roles) ++roles[role];
    CAPTURE(p.condition);
    CHECK(roles["clean"] == k);
    if (p.condition == "clean") CHECK(roles.size() == 1);
    if (p.condition == "seen") CHECK(roles["train_seen"] == 16 * k);
    if (p.condition == "unseen") CHECK(roles["test_unseen"] == 6 * k);
  }
  CHECK(!std::filesystem::exists(dir / "out/checkpoints"));
}

TEST_CASE("each condition selects clean rows plus its own noise roles", "[pipeline]") {
  CHECK(condition_includes("unseen", "clean"));
  CHECK(!condition_includes("unseen", "train_seen"));
  CHECK(condition_includes("seen", "test_seen"));
  CHECK(!condition_includes("clean", "test_unseen"));
}

TEST_CASE("descriptor cache returns identical values", "[pipeline]") {
  TempDir dir("pipe_cache");
  VowelSpec v;
  v.jitter = 0.01;
  save_wav16(make_vowel(v).wave, dir / "v.wav");
  const auto fresh = lld_for_file(dir / "v.wav", SpeechSubset::kVowel, true, dir / "cache");
  std::size_t entries = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir / "cache")) ++entries;
  CHECK(entries == 1);
  const auto cached = lld_for_file(dir / "v.wav", SpeechSubset::kVowel, true, dir / "cache");
  CHECK(cached.jitter_local == fresh.jitter_local);
  CHECK(cached.shimmer_local == fresh.shimmer_local);
  CHECK(cached.hnr_db == fresh.hnr_db);
  CHECK(cached.cpp_db == fresh.cpp_db);
  CHECK(cached.num_cycles == fresh.num_cycles);
  // A different analysis request is a different entry.
  lld_for_file(dir / "v.wav", SpeechSubset::kVowel, false, dir / "cache");
  entries = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir / "cache")) ++entries;
  CHECK(entries == 2);
}

TEST_CASE("fit band matches a hand-computed regression", "[report]") {
  // y = 1 + 2x with residuals +-1: slope 2, intercept 1, s = sqrt(4/2).
  const std::vector<double> x = {0, 1, 2, 3}, y = {2, 2, 6, 6};
  const auto f = fit_line(x, y, 3);
  CHECK(f.slope == Catch::Approx(1.6));
  CHECK(f.intercept == Catch::Approx(1.6));
  // Residuals 0.4, -1.2, 1.2, -0.4: SSE 3.2, s^2 = 1.6, Sxx = 5, t(0.975, 2) = 4.302653.
  const double s = std::sqrt(1.6), t = 4.302652729749464;
  CHECK(f.x == std::vector<double>{0.0, 1.5, 3.0});
  CHECK(f.hi[1] - f.y[1] == Catch::Approx(t * s * std::sqrt(0.25)));
  CHECK(f.hi[0] - f.y[0] == Catch::Approx(t * s * std::sqrt(0.25 + 2.25 / 5.0)));
  CHECK(f.y[1] - f.lo[1] == Catch::Approx(f.hi[1] - f.y[1]));
  CHECK(std::isnan(fit_line({1, 1, 1}, {1, 2, 3}).slope));
  CHECK(std::isnan(fit_line({1, 2}, {1, 2}).slope));
}

TEST_CASE("run configs reject unknown keys and bad values", "[config]") {
  using nlohmann::json;
  CHECK_THROWS_MATCHES(RunConfig::from_json(json{{"manifest", "m.csv"}, {"epochs", 3}}), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) { return e.code() == ErrorCode::kConfigError; }));
  CHECK_THROWS_AS(RunConfig::from_json(json{{"manifest", "m.csv"}, {"conditions", {"noisy"}}}), Error);
  CHECK_THROWS_AS(RunConfig::from_json(json{{"manifest", "m.csv"}, {"train", {{"epochs", 0}}}}), Error);
  CHECK_THROWS_AS(RunConfig::from_json(json{{"manifest", "m.csv"}, {"features", "mfcc"}}), Error);
  CHECK_THROWS_AS(RunConfig::from_json(json{{"manifest", 3}}), Error);
  const auto c = RunConfig::from_json(json{{"manifest", "m.csv"}}, "/data");
  CHECK(c.manifest == std::filesystem::path("/data/m.csv"));
  CHECK(c.train.epochs == 100);
  CHECK(c.train.learning_rate == 0.002);
  CHECK(c.train.weight_decay == 1e-5);
  CHECK(c.features == FeatureMode::kSfmWsJsh);
}

TEST_CASE("errors map onto the documented exit codes", "[cli]") {
  CHECK(exit_code_for(Error(ErrorCode::kConfigError, "")) == 2);
  CHECK(exit_code_for(Error(ErrorCode::kMissingEmbeddings, "")) == 1);
  CHECK(exit_code_for(Error(ErrorCode::kInsufficientSpeakers, "")) == 1);
  CHECK(exit_code_for(Error(ErrorCode::kNonFiniteGradient, "")) == 3);
}

#ifdef VOQA_CLI_PATH
namespace {
int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + VOQA_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}
}  // namespace

TEST_CASE("the command-line tool returns its exit codes", "[cli]") {
  TempDir dir("pipe_cli");
  const auto d = dir.path().string();
  CHECK(run_cli("synth \"" + d + "/c\" --speakers 8 --utterances 1 --seed 2") == 0);
  CHECK(run_cli("validate \"" + d + "/c/manifest.csv\"") == 0);
  write_text_file(dir / "dup.csv", "utterance_id,speaker_id\nu1,s1\nu1,s2\n");
  CHECK(run_cli("validate \"" + d + "/dup.csv\" --format json -o \"" + d + "/issues.json\"") == 1);
  CHECK(nlohmann::json::parse(read_text_file(dir / "issues.json")).at("issues")[0].at("code") == "DUPLICATE_ID");
  CHECK(run_cli("lld \"" + d + "/c/manifest.csv\" -o \"" + d + "/lld.csv\"") == 0);
  const auto lld = table(dir / "lld.csv");
  CHECK(lld.size() == 9);
  CHECK(lld[0][6] == "missing_flag");
  write_text_file(dir / "bad.json", "{\"manifest\": \"c/manifest.csv\", \"split\": {\"mode\": \"lopo\"}}");
  CHECK(run_cli("run \"" + d + "/bad.json\"") == 2);
  write_text_file(dir / "ok.json",
                  "{\"manifest\": \"c/manifest.csv\", \"features\": \"lld_only\", \"train\": {\"epochs\": 2, "
                  "\"hidden\": [8, 8, 8], \"attention_dim\": 4}, \"output_dir\": \"out\"}");
  CHECK(run_cli("run \"" + d + "/ok.json\"") == 0);
  CHECK(run_cli("report \"" + d + "/out\"") == 0);
  CHECK(run_cli("eval --checkpoint \"" + d + "/out/checkpoints/A_clean_holdout_final.vqck\" --manifest \"" + d +
                "/c/manifest.csv\" -o \"" + d + "/p.csv\"") == 0);
  CHECK(table(dir / "p.csv").size() == 9);
  write_text_file(dir / "emb.json", "{\"manifest\": \"c/manifest.csv\", \"features\": \"sfm_ws\", \"output_dir\": \"o2\"}");
  std::filesystem::remove(dir / "c/vqes/spk0001_u0.vqes");
  CHECK(run_cli("run \"" + d + "/emb.json\"") == 1);
  CHECK(run_cli("") == 2);
}
#endif
