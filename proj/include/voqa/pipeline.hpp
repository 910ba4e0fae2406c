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
#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "voqa/audio.hpp"
#include "voqa/checkpoint.hpp"
#include "voqa/dataset.hpp"
#include "voqa/embedding.hpp"
#include "voqa/error.hpp"
#include "voqa/lld.hpp"
#include "voqa/loss.hpp"
#include "voqa/manifest.hpp"
#include "voqa/model.hpp"
#include "voqa/split.hpp"
#include "voqa/synthetic.hpp"
#include "voqa/train.hpp"

namespace voqa {

// ---- Run configuration ----

struct RunConfig {
  std::filesystem::path manifest;
  Scale scale = Scale::kCapeV;
  FeatureMode features = FeatureMode::kSfmWsJsh;
  SplitMode split_mode = SplitMode::kHoldout;
  SplitOptions split;
  std::vector<std::string> subsets;  // empty: every subset present
  std::vector<std::string> conditions = {"clean"};
  TrainConfig train;
  double validation_fraction = 0.0;  // of training speakers, for per-epoch logging
  std::filesystem::path output_dir = "results";
  bool save_checkpoints = true;

  nlohmann::json to_json() const {
    return {{"manifest", manifest.generic_string()},
            {"scale", std::string(to_string(scale))},
            {"features", std::string(to_string(features))},
            {"split",
             {{"mode", split_mode == SplitMode::kHoldout ? "holdout" : split_mode == SplitMode::kCv5 ? "cv5" : "manifest"},
              {"test_fraction", split.test_fraction},
              {"seed", split.seed},
              {"num_folds", split.num_folds}}},
            {"subsets", subsets},
            {"conditions", conditions},
            {"train",
             {{"epochs", train.epochs},
              {"learning_rate", train.learning_rate},
              {"weight_decay", train.weight_decay},
              {"beta", train.beta},
              {"batch_size", train.batch_size},
              {"dropout", train.dropout},
              {"seed", train.seed},
              {"hidden", train.hidden},
              {"attention_dim", train.attention_dim}}},
            {"validation_fraction", validation_fraction},
            {"output_dir", output_dir.generic_string()},
            {"save_checkpoints", save_checkpoints}};
  }

  // Relative paths resolve against `base_dir` (the config file's directory).
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
    auto bad = [](const std::string& why) { fail(ErrorCode::kConfigError, why); };
    if (!j.is_object()) bad("run config must be a JSON object");
    static const std::set<std::string> known = {"manifest", "scale", "features", "split", "subsets",
                                                "conditions", "train", "validation_fraction", "output_dir",
                                                "save_checkpoints"};
    for (const auto& [k, v] : j.items()) {
      if (!known.count(k)) bad("unknown config key '" + k + "'");
    }
    RunConfig c;
    try {
      if (!j.contains("manifest")) bad("config needs 'manifest'");
      auto path = [&](const std::string& s) {
        std::filesystem::path p(s);
        return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
      };
      c.manifest = path(j.at("manifest").get<std::string>());
      if (j.contains("scale")) c.scale = parse_scale(j.at("scale").get<std::string>());
      if (j.contains("features")) c.features = parse_feature_mode(j.at("features").get<std::string>());
      if (j.contains("split")) {
        const auto& s = j.at("split");
        for (const auto& [k, v] : s.items()) {
          if (k != "mode" && k != "test_fraction" && k != "seed" && k != "num_folds") bad("unknown split key '" + k + "'");
        }
        if (s.contains("mode")) c.split_mode = parse_split_mode(s.at("mode").get<std::string>());
        if (s.contains("test_fraction")) c.split.test_fraction = s.at("test_fraction").get<double>();
        if (s.contains("seed")) c.split.seed = s.at("seed").get<std::uint64_t>();
        if (s.contains("num_folds")) c.split.num_folds = s.at("num_folds").get<int>();
      }
      if (j.contains("subsets")) c.subsets = j.at("subsets").get<std::vector<std::string>>();
      if (j.contains("conditions")) c.conditions = j.at("conditions").get<std::vector<std::string>>();
      if (j.contains("train")) {
        const auto& t = j.at("train");
        static const std::set<std::string> tk = {"epochs", "learning_rate", "weight_decay", "beta", "batch_size",
                                                 "dropout", "seed", "hidden", "attention_dim"};
        for (const auto& [k, v] : t.items()) {
          if (!tk.count(k)) bad("unknown train key '" + k + "'");
        }
        if (t.contains("epochs")) c.train.epochs = t.at("epochs").get<int>();
        if (t.contains("learning_rate")) c.train.learning_rate = t.at("learning_rate").get<double>();
        if (t.contains("weight_decay")) c.train.weight_decay = t.at("weight_decay").get<double>();
        if (t.contains("beta")) c.train.beta = t.at("beta").get<double>();
        if (t.contains("batch_size")) c.train.batch_size = t.at("batch_size").get<std::size_t>();
        if (t.contains("dropout")) c.train.dropout = t.at("dropout").get<double>();
        if (t.contains("seed")) c.train.seed = t.at("seed").get<std::uint64_t>();
        if (t.contains("hidden")) c.train.hidden = t.at("hidden").get<std::array<std::size_t, 3>>();
        if (t.contains("attention_dim")) c.train.attention_dim = t.at("attention_dim").get<std::size_t>();
      }
      if (j.contains("validation_fraction")) c.validation_fraction = j.at("validation_fraction").get<double>();
      if (j.contains("output_dir")) c.output_dir = path(j.at("output_dir").get<std::string>());
      if (j.contains("save_checkpoints")) c.save_checkpoints = j.at("save_checkpoints").get<bool>();
    } catch (const nlohmann::json::exception& e) {
      bad(std::string("malformed config: ") + e.what());
    }
    c.validate();
    return c;
  }

  void validate() const {
    train.validate();
    for (const auto& cond : conditions) {
      if (cond != "clean" && cond != "seen" && cond != "unseen") {
        fail(ErrorCode::kConfigError, "condition must be clean, seen or unseen, got '" + cond + "'");
      }
    }
    if (conditions.empty()) fail(ErrorCode::kConfigError, "at least one condition is required");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
      fail(ErrorCode::kConfigError, "validation_fraction must lie in [0, 1)");
    }
  }
};

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const Error&) {
    fail(ErrorCode::kConfigError, "cannot read config " + path.string());
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfigError, "config " + path.string() + " is not valid JSON: " + e.what());
  }
  return RunConfig::from_json(j, path.parent_path());
}

// ---- Descriptor extraction with an optional on-disk cache ----

inline std::filesystem::path cache_dir_from_env() {
  const char* v = std::getenv("VOQA_CACHE_DIR");
  return v && *v ? std::filesystem::path(v) : std::filesystem::path();
}

inline SpeechSubset speech_subset(const std::string& subset) {
  return subset == "S" ? SpeechSubset::kSentence : SpeechSubset::kVowel;
}

namespace detail {

inline nlohmann::json num_or_null(double v) { return std::isnan(v) ? nlohmann::json() : nlohmann::json(v); }
inline double null_or_num(const nlohmann::json& j) { return j.is_null() ? kMissing : j.get<double>(); }

}  // namespace detail

// Descriptors of one audio file. The cache key covers the audio bytes, the
// analysis subset and whether CPP is requested, so edits never go stale.
inline LldVector lld_for_file(const std::filesystem::path& wav, SpeechSubset subset, bool include_cpp,
                              const std::filesystem::path& cache_dir = {}) {
  const auto bytes = detail::read_file_bytes(wav);
  std::filesystem::path cache_file;
  if (!cache_dir.empty()) {
    const std::string tag = std::string("lld-v1|") + (subset == SpeechSubset::kVowel ? "A" : "S") + "|" +
                            (include_cpp ? "cpp" : "nocpp");
    const std::uint64_t key = fnv1a(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                                    fnv1a(tag));
    char name[40];
    std::snprintf(name, sizeof name, "lld_%016llx.json", static_cast<unsigned long long>(key));
    cache_file = cache_dir / name;
    if (std::filesystem::exists(cache_file)) {
      try {
        const auto j = nlohmann::json::parse(read_text_file(cache_file));
        LldVector v;
        v.jitter_local = detail::null_or_num(j.at("jitter_local"));
        v.shimmer_local = detail::null_or_num(j.at("shimmer_local"));
        v.hnr_db = detail::null_or_num(j.at("hnr_db"));
        v.cpp_db = detail::null_or_num(j.at("cpp_db"));
        v.num_cycles = j.at("num_cycles").get<std::size_t>();
        v.cpp_requested = include_cpp;
        v.missing_reason = j.at("missing_reason").get<std::string>();
        return v;
      } catch (const std::exception&) {
        // Unreadable cache entries are recomputed and overwritten.
      }
    }
  }
  const Waveform w = resample(decode_wav(bytes, wav.stem().string()), kCanonicalRate);
  const LldVector v = extract_llds(w, subset, include_cpp);
  if (!cache_file.empty()) {
    const nlohmann::json j = {{"jitter_local", detail::num_or_null(v.jitter_local)},
                              {"shimmer_local", detail::num_or_null(v.shimmer_local)},
                              {"hnr_db", detail::num_or_null(v.hnr_db)},
                              {"cpp_db", detail::num_or_null(v.cpp_db)},
                              {"num_cycles", v.num_cycles},
                              {"missing_reason", v.missing_reason}};
    std::filesystem::create_directories(cache_dir);
    write_text_file(cache_file, j.dump() + "\n");
  }
  return v;
}

// ---- Examples from a manifest ----

inline bool condition_includes(const std::string& condition, const std::string& role) {
  if (role == "clean") return true;
  if (condition == "seen") return role == "train_seen" || role == "test_seen";
  if (condition == "unseen") return role == "test_unseen";
  return false;
}

inline std::string subset_key(const std::string& s) { return s.empty() ? "all" : s; }

// Labeled rows in the requested subsets, with stacks and descriptors loaded
// as the feature mode requires. Rows without a complete label vector are
// skipped with a warning.
inline std::vector<Example> load_examples(const Manifest& m, const RunConfig& cfg, std::vector<std::string>& warnings,
                                          const std::filesystem::path& cache_dir = cache_dir_from_env()) {
  std::vector<Example> out;
  std::vector<std::string> missing_stacks;
  std::map<std::string, std::shared_ptr<const EmbeddingStack>> stacks;
  std::size_t unlabeled = 0;
  const bool want_llds = lld_width(cfg.features) > 0;
  const bool want_cpp = lld_width(cfg.features) == 4;
  for (const auto& row : m.rows) {
    const std::string subset = subset_key(row.subset());
    if (!cfg.subsets.empty() && std::find(cfg.subsets.begin(), cfg.subsets.end(), subset) == cfg.subsets.end()) {
      continue;
    }
    // Seen-noise rows also feed the noisy training regime of an unseen-only run.
    const bool noisy_run = std::any_of(cfg.conditions.begin(), cfg.conditions.end(),
                                       [](const std::string& c) { return c != "clean"; });
    const bool relevant = std::any_of(cfg.conditions.begin(), cfg.conditions.end(),
                                      [&](const std::string& c) { return condition_includes(c, row.role()); }) ||
                          (noisy_run && condition_includes("seen", row.role()));
    if (!relevant) continue;
    const auto labels = row.labels(cfg.scale);
    if (!labels) {
      ++unlabeled;
      continue;
    }
    Example e;
    e.utterance_id = row.utterance_id();
    e.speaker_id = row.speaker_id();
    e.subset = subset;
    e.role = row.role();
    e.noise_kind = row.get("noise_kind");
    e.snr_db = row.get("snr_db");
    e.label = Eigen::Map<const VectorXd>(labels->data(), static_cast<Eigen::Index>(labels->size()));
    if (uses_embeddings(cfg.features)) {
      const auto& p = row.get("vqes_path");
      if (p.empty()) {
        missing_stacks.push_back("row " + std::to_string(row.line) + " (" + e.utterance_id + ")");
      } else {
        const auto path = m.resolve(p).lexically_normal().string();
        auto it = stacks.find(path);
        if (it == stacks.end()) {
          if (!std::filesystem::exists(path)) {
            missing_stacks.push_back("row " + std::to_string(row.line) + " (" + e.utterance_id + ")");
          } else {
            it = stacks.emplace(path, std::make_shared<const EmbeddingStack>(read_stack(path))).first;
          }
        }
        if (it != stacks.end()) e.stack = it->second;
      }
    }
    if (want_llds) {
      const auto& p = row.get("wav_path");
      if (p.empty()) {
        e.lld.missing_reason = "no wav_path";
      } else {
        e.lld = lld_for_file(m.resolve(p), speech_subset(subset), want_cpp, cache_dir);
      }
    }
    out.push_back(std::move(e));
  }
  if (!missing_stacks.empty()) {
    std::string list;
    for (std::size_t i = 0; i < missing_stacks.size(); ++i) {
      if (i == 25) {
        list += ", ... (" + std::to_string(missing_stacks.size() - 25) + " more)";
        break;
      }
      list += (i ? ", " : "") + missing_stacks[i];
    }
    fail(ErrorCode::kMissingEmbeddings, std::string(to_string(cfg.features)) + " needs embeddings; missing for " + list);
  }
  if (unlabeled > 0) {
    warnings.push_back(std::to_string(unlabeled) + " rows lack complete " + std::string(to_string(cfg.scale)) +
                       " labels and were skipped");
  }
  std::size_t n_missing = 0;
  for (const auto& e : out) n_missing += want_llds && e.lld.missing();
  if (n_missing > 0) {
    warnings.push_back(std::to_string(n_missing) + " utterances have unmeasured descriptors (imputed with the training mean)");
  }
  const EmbeddingStack* first = nullptr;
  for (const auto& e : out) {
    if (!e.stack) continue;
    if (!first) first = e.stack.get();
    if (e.stack->num_layers != first->num_layers || e.stack->dim != first->dim) {
      fail(ErrorCode::kShapeError, "embedding stacks disagree in shape: " + e.utterance_id);
    }
  }
  return out;
}

// ---- Experiment ----

struct PredictionSet {
  std::string subset, condition, fold;
  std::vector<std::string> utterance_ids, speaker_ids, roles, noise_kinds, snrs;
  Matrix pred, target;
};

struct RunResult {
  std::vector<PredictionSet> predictions;
  std::vector<std::string> warnings;
  std::size_t trainings = 0;
};

inline std::vector<SpeakerInfo> speaker_infos(const std::vector<Example>& examples) {
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& e : examples) {
    auto& a = acc[e.speaker_id];
    if (e.role == "clean" && e.label.size() > 0) {
      a.first += e.label(0);
      ++a.second;
    }
  }
  std::vector<SpeakerInfo> out;
  for (const auto& [s, a] : acc) out.push_back({s, a.second ? a.first / static_cast<double>(a.second) : std::nan("")});
  return out;
}

inline std::string fold_name(const SplitPlan& plan, int round) {
  return plan.mode == SplitMode::kCv5 ? std::to_string(round) : "holdout";
}

inline SplitPlan plan_for(const RunConfig& cfg, const Manifest* m, const std::vector<Example>& examples) {
  if (cfg.split_mode == SplitMode::kManifest) {
    if (!m) fail(ErrorCode::kConfigError, "split mode 'manifest' needs a manifest");
    std::map<std::string, std::string> labels;
    for (const auto& r : m->rows) {
      const auto& v = r.get("split");
      auto [it, fresh] = labels.emplace(r.speaker_id(), v);
      if (!fresh && it->second != v) {
        fail(ErrorCode::kConfigError, "speaker '" + r.speaker_id() + "' has conflicting split values");
      }
    }
    return split_from_labels(labels);
  }
  return make_splits(speaker_infos(examples), cfg.split_mode, cfg.split);
}

// Trains one model per (subset, training regime, round) and predicts every
// requested condition. Regimes: clean rows only, or clean plus seen-noise
// rows when a noisy condition is requested.
inline RunResult run_experiment(const std::vector<Example>& examples, const RunConfig& cfg, const SplitPlan& plan,
                                const std::filesystem::path& out_dir = {}, bool evaluate = true,
                                std::ostream* progress = nullptr) {
  RunResult result;
  if (examples.empty()) fail(ErrorCode::kInvalidArgument, "no labeled examples to train on");
  std::vector<std::string> subsets = cfg.subsets;
  if (subsets.empty()) {
    std::set<std::string> s;
    for (const auto& e : examples) s.insert(e.subset);
    subsets.assign(s.begin(), s.end());
  }
  const bool want_clean = std::count(cfg.conditions.begin(), cfg.conditions.end(), "clean") > 0;
  const bool want_noisy = std::count(cfg.conditions.begin(), cfg.conditions.end(), "seen") > 0 ||
                          std::count(cfg.conditions.begin(), cfg.conditions.end(), "unseen") > 0;
  const std::size_t num_targets = static_cast<std::size_t>(examples.front().label.size());
  ModelConfig mc;
  mc.features = cfg.features;
  mc.num_targets = num_targets;
  for (const auto& e : examples) {
    if (e.stack) {
      mc.embed_dim = e.stack->dim;
      mc.num_layers = e.stack->num_layers;
      break;
    }
  }
  for (const auto& cond : cfg.conditions) {
    if (cond == "clean") continue;
    const bool any = std::any_of(examples.begin(), examples.end(),
                                 [&](const Example& e) { return e.role != "clean" && condition_includes(cond, e.role); });
    if (!any) result.warnings.push_back("condition '" + cond + "' has no noisy rows; it reduces to clean data");
  }

  for (const auto& subset : subsets) {
    for (int round = 0; round < plan.num_rounds(); ++round) {
      const std::string fold = fold_name(plan, round);
      for (const std::string regime : {"clean", "noisy"}) {
        if (regime == std::string("clean") ? !want_clean : !want_noisy) continue;
        std::vector<Example> train, val;
        std::vector<std::string> train_speakers;
        for (const auto& e : examples) {
          if (e.subset != subset || !plan.is_train(e.speaker_id, round)) continue;
          const bool take = e.role == "clean" || (regime == std::string("noisy") && condition_includes("seen", e.role));
          if (take) train.push_back(e);
        }
        if (cfg.validation_fraction > 0.0) {
          std::vector<SpeakerInfo> spk;
          for (const auto& s : speaker_infos(train)) spk.push_back(s);
          SplitOptions vo{cfg.validation_fraction, mix_seed(cfg.split.seed, "validation/" + fold), 5};
          const auto vplan = make_splits(spk, SplitMode::kHoldout, vo);
          std::vector<Example> keep;
          for (auto& e : train) (vplan.is_test(e.speaker_id, 0) ? val : keep).push_back(std::move(e));
          train = std::move(keep);
        }
        if (train.size() < TrainConfig::kMinBatch) {
          fail(ErrorCode::kInsufficientSpeakers,
               "subset " + subset + " fold " + fold + " has only " + std::to_string(train.size()) + " training utterances");
        }
        const auto norm = LldNormalizer::fit(train, cfg.features);
        std::size_t imputed = 0;
        const auto x = make_inputs(train, norm, cfg.features, &imputed);
        const Matrix y = label_matrix(train);
        std::vector<ModelInput> vx;
        Matrix vy;
        if (!val.empty()) {
          vx = make_inputs(val, norm, cfg.features);
          vy = label_matrix(val);
        }
        TrainConfig tc = cfg.train;
        tc.seed = mix_seed(cfg.train.seed, subset + "/" + regime + "/" + fold);
        const std::string tag = subset + "_" + regime + "_" + fold;
        if (progress) *progress << "training " << tag << " on " << train.size() << " utterances\n";
        std::string log;
        auto on_epoch = [&](const EpochRecord& r) {
          log += nlohmann::json{{"epoch", r.epoch}, {"split", "train"}, {"loss", r.train_loss}}.dump() + "\n";
          if (r.has_validation) {
            nlohmann::json rm = nlohmann::json::array(), pc = nlohmann::json::array();
            for (double v : r.validation.rmse) rm.push_back(detail::num_or_null(v));
            for (double v : r.validation.pcc) pc.push_back(detail::num_or_null(v));
            log += nlohmann::json{{"epoch", r.epoch},
                                  {"split", "validation"},
                                  {"loss", nullptr},
                                  {"rmse", rm},
                                  {"pcc", pc},
                                  {"macro_rmse", detail::num_or_null(r.validation.macro_rmse)},
                                  {"macro_pcc", detail::num_or_null(r.validation.macro_pcc)}}
                       .dump() +
                   "\n";
          }
        };
        auto outcome = train_model(mc, tc, x, y, vx.empty() ? nullptr : &vx, vx.empty() ? nullptr : &vy, on_epoch);
        ++result.trainings;
        if (!out_dir.empty()) {
          write_text_file(out_dir / "logs" / (tag + ".jsonl"), log);
          if (cfg.save_checkpoints) {
            const nlohmann::json meta = {{"scale", std::string(to_string(cfg.scale))}, {"subset", subset},
                                         {"regime", regime}, {"fold", fold}};
            nlohmann::json best_meta = meta;
            best_meta["best_epoch"] = outcome.best_epoch;
            save_checkpoint({outcome.final_model.config(), outcome.final_model.params(), norm, meta},
                            out_dir / "checkpoints" / (tag + "_final.vqck"));
            save_checkpoint({outcome.best_model.config(), outcome.best_model.params(), norm, best_meta},
                            out_dir / "checkpoints" / (tag + "_best.vqck"));
          }
        }
        if (!evaluate) continue;
        for (const auto& cond : cfg.conditions) {
          if ((cond == "clean") != (regime == std::string("clean"))) continue;
          std::vector<Example> test;
          for (const auto& e : examples) {
            if (e.subset == subset && plan.is_test(e.speaker_id, round) && condition_includes(cond, e.role)) {
              test.push_back(e);
            }
          }
          if (test.empty()) {
            result.warnings.push_back("subset " + subset + " fold " + fold + " condition " + cond + " has no test rows");
            continue;
          }
          PredictionSet ps;
          ps.subset = subset;
          ps.condition = cond;
          ps.fold = fold;
          const auto tx = make_inputs(test, norm, cfg.features);
          ps.pred = predict_all(outcome.final_model, tx);
          ps.target = label_matrix(test);
          for (const auto& e : test) {
            ps.utterance_ids.push_back(e.utterance_id);
            ps.speaker_ids.push_back(e.speaker_id);
            ps.roles.push_back(e.role);
            ps.noise_kinds.push_back(e.noise_kind);
            ps.snrs.push_back(e.snr_db);
          }
          result.predictions.push_back(std::move(ps));
        }
      }
    }
  }
  return result;
}

// ---- Predictions on disk ----

inline std::string prediction_file_name(const PredictionSet& p) {
  return p.subset + "__" + p.condition + "__" + p.fold + ".csv";
}

inline std::string predictions_to_csv(const PredictionSet& p, const std::vector<std::string>& attributes) {
  CsvRow head = {"subset", "condition", "fold", "utterance_id", "speaker_id", "role", "noise_kind", "snr_db"};
  for (const auto& a : attributes) {
    head.push_back("true_" + a);
    head.push_back("pred_" + a);
  }
  std::string out = csv_line(head);
  for (Eigen::Index i = 0; i < p.pred.rows(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    CsvRow r = {p.subset, p.condition, p.fold, p.utterance_ids[k], p.speaker_ids[k], p.roles[k], p.noise_kinds[k], p.snrs[k]};
    for (Eigen::Index a = 0; a < p.pred.cols(); ++a) {
      r.push_back(fmt(p.target(i, a), 9));
      r.push_back(fmt(p.pred(i, a), 9));
    }
    out += csv_line(r);
  }
  return out;
}

inline PredictionSet predictions_from_csv(const std::string& text) {
  const auto rows = parse_csv(text);
  if (rows.size() < 2) fail(ErrorCode::kFormatError, "prediction file has no rows");
  const auto& head = rows[0];
  if (head.size() < 10 || (head.size() - 8) % 2 != 0 || head[0] != "subset") {
    fail(ErrorCode::kFormatError, "prediction file header is malformed");
  }
  const auto k = static_cast<Eigen::Index>((head.size() - 8) / 2);
  PredictionSet p;
  p.pred.resize(static_cast<Eigen::Index>(rows.size() - 1), k);
  p.target.resize(p.pred.rows(), k);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != head.size()) fail(ErrorCode::kFormatError, "prediction row width differs from header");
    p.subset = r[0];
    p.condition = r[1];
    p.fold = r[2];
    p.utterance_ids.push_back(r[3]);
    p.speaker_ids.push_back(r[4]);
    p.roles.push_back(r[5]);
    p.noise_kinds.push_back(r[6]);
    p.snrs.push_back(r[7]);
    for (Eigen::Index a = 0; a < k; ++a) {
      const auto t = parse_number(r[8 + 2 * static_cast<std::size_t>(a)]);
      const auto q = parse_number(r[9 + 2 * static_cast<std::size_t>(a)]);
      if (!t || !q) fail(ErrorCode::kFormatError, "non-numeric prediction value");
      p.target(static_cast<Eigen::Index>(i - 1), a) = *t;
      p.pred(static_cast<Eigen::Index>(i - 1), a) = *q;
    }
  }
  return p;
}

// ---- Report ----

struct MetricRow {
  std::string method, subset, condition, level, fold, attribute;
  double rmse = 0.0, pcc = 0.0;
  std::size_t n = 0;
};

struct LinearFit {
  double slope = std::nan(""), intercept = std::nan("");
  std::size_t n = 0;
  // 95% confidence band of the mean response at x.
  std::vector<double> x, y, lo, hi;
};

// Least squares predicted-on-actual with a Student-t band; fewer than 3
// points or constant actual values give an empty fit.
inline LinearFit fit_line(const std::vector<double>& actual, const std::vector<double>& predicted, std::size_t points = 21) {
  LinearFit f;
  f.n = actual.size();
  if (f.n < 3) return f;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < f.n; ++i) {
    mx += actual[i];
    my += predicted[i];
  }
  mx /= static_cast<double>(f.n);
  my /= static_cast<double>(f.n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < f.n; ++i) {
    sxx += (actual[i] - mx) * (actual[i] - mx);
    sxy += (actual[i] - mx) * (predicted[i] - my);
  }
  if (!(sxx > 0.0)) return f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < f.n; ++i) {
    const double r = predicted[i] - (f.intercept + f.slope * actual[i]);
    sse += r * r;
  }
  const double dof = static_cast<double>(f.n - 2);
  const double s = std::sqrt(sse / dof);
  const double t = boost::math::quantile(boost::math::students_t(dof), 0.975);
  const auto [lo_it, hi_it] = std::minmax_element(actual.begin(), actual.end());
  for (std::size_t k = 0; k < points; ++k) {
    const double x = *lo_it + (*hi_it - *lo_it) * static_cast<double>(k) / static_cast<double>(points - 1);
    const double y = f.intercept + f.slope * x;
    const double half = t * s * std::sqrt(1.0 / static_cast<double>(f.n) + (x - mx) * (x - mx) / sxx);
    f.x.push_back(x);
    f.y.push_back(y);
    f.lo.push_back(y - half);
    f.hi.push_back(y + half);
  }
  return f;
}

struct Report {
  std::vector<MetricRow> metrics;
  std::string metrics_csv, table_csv, table_txt;
  std::map<std::string, std::string> files;  // relative path -> content (scatter, fits)
};

inline Report build_report(const std::vector<PredictionSet>& sets, const std::string& method,
                           const std::vector<std::string>& attributes) {
  Report rep;
  std::vector<PredictionSet> sorted = sets;
  std::sort(sorted.begin(), sorted.end(), [](const PredictionSet& a, const PredictionSet& b) {
    return std::tie(a.subset, a.condition, a.fold) < std::tie(b.subset, b.condition, b.fold);
  });
  struct Summary {
    std::vector<double> rmse, pcc, pooled_rmse, pooled_pcc;
    std::size_t n = 0;
  };
  std::map<std::tuple<std::string, std::string, std::string>, Summary> summary;
  static const std::map<std::string, int> cond_order = {{"clean", 0}, {"seen", 1}, {"unseen", 2}};
  for (const auto& ps : sorted) {
    if (static_cast<std::size_t>(ps.pred.cols()) != attributes.size()) {
      fail(ErrorCode::kShapeError, "prediction width does not match the attribute list");
    }
    const auto patients = patient_aggregate(ps.pred, ps.target, ps.speaker_ids);
    for (const std::string level : {"utterance", "patient"}) {
      const bool utt = level == std::string("utterance");
      const Matrix& pred = utt ? ps.pred : patients.pred;
      const Matrix& target = utt ? ps.target : patients.target;
      const auto m = score_matrix(pred, target);
      for (std::size_t a = 0; a < attributes.size(); ++a) {
        rep.metrics.push_back({method, ps.subset, ps.condition, level, ps.fold, attributes[a], m.rmse[a], m.pcc[a], m.n});
      }
      rep.metrics.push_back({method, ps.subset, ps.condition, level, ps.fold, "macro", m.macro_rmse, m.macro_pcc, m.n});
      rep.metrics.push_back({method, ps.subset, ps.condition, level, ps.fold, "pooled", m.pooled_rmse, m.pooled_pcc, m.n});
      auto& s = summary[{ps.subset, ps.condition, level}];
      s.rmse.push_back(m.macro_rmse);
      s.pcc.push_back(m.macro_pcc);
      s.pooled_rmse.push_back(m.pooled_rmse);
      s.pooled_pcc.push_back(m.pooled_pcc);
      s.n += m.n;

      // Scatter points and fit band per attribute.
      const std::string stem = ps.subset + "__" + ps.condition + "__" + level + "__" + ps.fold;
      std::string sc = csv_line({"speaker_id", "utterance_id", "attribute", "actual", "predicted"});
      std::string fit = csv_line({"attribute", "slope", "intercept", "n", "x", "y_fit", "ci95_low", "ci95_high"});
      for (std::size_t a = 0; a < attributes.size(); ++a) {
        std::vector<double> xs, ys;
        for (Eigen::Index i = 0; i < pred.rows(); ++i) {
          const auto k = static_cast<std::size_t>(i);
          sc += csv_line({utt ? ps.speaker_ids[k] : patients.speakers[k], utt ? ps.utterance_ids[k] : "", attributes[a],
                          fmt(target(i, static_cast<Eigen::Index>(a))), fmt(pred(i, static_cast<Eigen::Index>(a)))});
          xs.push_back(target(i, static_cast<Eigen::Index>(a)));
          ys.push_back(pred(i, static_cast<Eigen::Index>(a)));
        }
        const auto f = fit_line(xs, ys);
        for (std::size_t k = 0; k < f.x.size(); ++k) {
          fit += csv_line({attributes[a], fmt(f.slope), fmt(f.intercept), std::to_string(f.n), fmt(f.x[k]), fmt(f.y[k]),
                           fmt(f.lo[k]), fmt(f.hi[k])});
        }
      }
      rep.files["scatter/" + stem + ".csv"] = sc;
      rep.files["fits/" + stem + ".csv"] = fit;
    }
  }

  rep.metrics_csv = csv_line({"method", "subset", "condition", "level", "fold", "attribute", "rmse", "pcc", "n"});
  for (const auto& r : rep.metrics) {
    rep.metrics_csv += csv_line({r.method, r.subset, r.condition, r.level, r.fold, r.attribute, fmt(r.rmse), fmt(r.pcc),
                                 std::to_string(r.n)});
  }

  auto mean_sd = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    return std::pair<double, double>(m, sd);
  };
  std::vector<std::tuple<std::string, std::string, std::string>> keys;
  for (const auto& [k, s] : summary) keys.push_back(k);
  std::sort(keys.begin(), keys.end(), [](const auto& a, const auto& b) {
    const int ca = cond_order.count(std::get<1>(a)) ? cond_order.at(std::get<1>(a)) : 9;
    const int cb = cond_order.count(std::get<1>(b)) ? cond_order.at(std::get<1>(b)) : 9;
    const int la = std::get<2>(a) == "utterance" ? 0 : 1, lb = std::get<2>(b) == "utterance" ? 0 : 1;
    return std::tie(std::get<0>(a), ca, la) < std::tie(std::get<0>(b), cb, lb);
  });
  rep.table_csv = csv_line({"method", "subset", "condition", "level", "folds", "rmse", "rmse_std", "pcc", "pcc_std",
                            "pooled_rmse", "pooled_pcc", "n"});
  std::vector<CsvRow> txt_rows = {{"method", "subset", "condition", "level", "RMSE", "PCC", "n"}};
  for (const auto& key : keys) {
    const auto& s = summary.at(key);
    const auto [rm, rs] = mean_sd(s.rmse);
    const auto [pm, psd] = mean_sd(s.pcc);
    const auto [prm, prs] = mean_sd(s.pooled_rmse);
    const auto [ppm, pps] = mean_sd(s.pooled_pcc);
    const auto& [subset, cond, level] = key;
    const std::string folds = std::to_string(s.rmse.size());
    rep.table_csv += csv_line({method, subset, cond, level, folds, fmt(rm), fmt(rs), fmt(pm), fmt(psd), fmt(prm), fmt(ppm),
                               std::to_string(s.n)});
    const bool cv = s.rmse.size() > 1;
    txt_rows.push_back({method, subset, cond, level, cv ? fmt(rm, 3) + " ± " + fmt(rs, 3) : fmt(rm, 3),
                        cv ? fmt(pm, 3) + " ± " + fmt(psd, 3) : fmt(pm, 3), std::to_string(s.n)});
  }
  // Display width counts UTF-8 code points.
  auto width = [](const std::string& s) {
    std::size_t w = 0;
    for (unsigned char c : s) w += (c & 0xC0) != 0x80;
    return w;
  };
  std::vector<std::size_t> w(txt_rows[0].size(), 0);
  for (const auto& r : txt_rows)
    for (std::size_t c = 0; c < r.size(); ++c) w[c] = std::max(w[c], width(r[c]));
  for (std::size_t i = 0; i < txt_rows.size(); ++i) {
    std::string line;
    for (std::size_t c = 0; c < txt_rows[i].size(); ++c) {
      const auto& cell = txt_rows[i][c];
      const std::string pad(w[c] - width(cell), ' ');
      line += c >= 4 ? pad + cell : cell + pad;
      if (c + 1 < txt_rows[i].size()) line += "  ";
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    rep.table_txt += line + "\n";
    if (i == 0) {
      std::size_t total = 0;
      for (auto x : w) total += x;
      rep.table_txt += std::string(total + 2 * (w.size() - 1), '-') + "\n";
    }
  }
  rep.table_txt += "RMSE and PCC are macro averages over attributes";
  rep.table_txt += keys.empty() || summary.begin()->second.rmse.size() < 2 ? ".\n" : "; mean ± std over folds.\n";
  return rep;
}

inline void write_report(const Report& rep, const std::filesystem::path& dir) {
  write_text_file(dir / "metrics.csv", rep.metrics_csv);
  write_text_file(dir / "results_table.csv", rep.table_csv);
  write_text_file(dir / "results_table.txt", rep.table_txt);
  for (const auto& [rel, text] : rep.files) write_text_file(dir / rel, text);
}

// Rebuilds every report file of a results directory from its predictions.
inline Report report_from_directory(const std::filesystem::path& dir) {
  const auto echo_path = dir / "config_echo.json";
  if (!std::filesystem::exists(echo_path)) fail(ErrorCode::kFileError, "no config_echo.json in " + dir.string());
  const auto echo = nlohmann::json::parse(read_text_file(echo_path));
  const auto method = echo.at("features").get<std::string>();
  const auto attributes = attribute_names(parse_scale(echo.at("scale").get<std::string>()));
  std::vector<std::filesystem::path> files;
  if (std::filesystem::exists(dir / "predictions")) {
    for (const auto& e : std::filesystem::directory_iterator(dir / "predictions")) {
      if (e.path().extension() == ".csv") files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<PredictionSet> sets;
  for (const auto& f : files) sets.push_back(predictions_from_csv(read_text_file(f)));
  auto rep = build_report(sets, method, attributes);
  write_report(rep, dir);
  return rep;
}

// ---- Commands ----

inline int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::kConfigError: return 2;
    case ErrorCode::kMissingEmbeddings:
    case ErrorCode::kInsufficientSpeakers:
    case ErrorCode::kDegenerateScale:
    case ErrorCode::kFormatError:
    case ErrorCode::kUnsupportedEncoding:
    case ErrorCode::kEmptyAudio:
    case ErrorCode::kCorruptStack:
    case ErrorCode::kNonFiniteValues:
    case ErrorCode::kShapeError:
    case ErrorCode::kFileError: return 1;
    default: return 3;
  }
}

// Full pipeline: train, predict, and emit the results bundle. Returns the
// run result; throws Error on failure.
inline RunResult cmd_run(const RunConfig& cfg, std::ostream* progress = nullptr, bool evaluate = true) {
  std::vector<Issue> parse_issues;
  const Manifest m = load_manifest(cfg.manifest, &parse_issues);
  std::vector<Issue> issues = parse_issues;
  for (auto& i : validate_manifest(m, false)) issues.push_back(i);
  if (!issues.empty()) {
    fail(ErrorCode::kFormatError, "manifest has " + std::to_string(issues.size()) + " issues (first: " + issues[0].code +
                                      " at row " + std::to_string(issues[0].row) + "); run 'voqa validate'");
  }
  std::vector<std::string> warnings;
  const auto examples = load_examples(m, cfg, warnings);
  const auto plan = plan_for(cfg, &m, examples);
  const auto& out = cfg.output_dir;
  std::filesystem::create_directories(out);
  write_text_file(out / "config_echo.json", cfg.to_json().dump(2) + "\n");
  {
    std::string split_csv = csv_line({"speaker_id", "assignment"});
    for (const auto& [s, a] : plan.assignment) {
      split_csv += csv_line({s, plan.mode == SplitMode::kCv5 ? "fold" + std::to_string(a) : (a ? "test" : "train")});
    }
    write_text_file(out / "split.csv", split_csv);
  }
  auto result = run_experiment(examples, cfg, plan, out, evaluate, progress);
  result.warnings.insert(result.warnings.begin(), warnings.begin(), warnings.end());
  std::string w;
  for (const auto& s : result.warnings) w += s + "\n";
  write_text_file(out / "warnings.txt", w);
  if (evaluate) {
    std::filesystem::remove_all(out / "predictions");
    const auto attributes = attribute_names(cfg.scale);
    for (const auto& p : result.predictions) {
      write_text_file(out / "predictions" / prediction_file_name(p), predictions_to_csv(p, attributes));
    }
    std::filesystem::remove_all(out / "scatter");
    std::filesystem::remove_all(out / "fits");
    report_from_directory(out);
  }
  return result;
}

// Predicts every labeled row of `m` (optionally one subset) with a saved model.
inline PredictionSet evaluate_checkpoint(const Checkpoint& ck, const Manifest& m, const std::string& subset,
                                         std::vector<std::string>& warnings) {
  RunConfig cfg;
  cfg.features = ck.config.features;
  cfg.scale = parse_scale(ck.meta.value("scale", std::string("capev")));
  cfg.conditions = {"clean", "seen", "unseen"};
  if (!subset.empty()) cfg.subsets = {subset};
  const auto examples = load_examples(m, cfg, warnings);
  if (examples.empty()) fail(ErrorCode::kInvalidArgument, "no labeled rows to evaluate");
  if (static_cast<std::size_t>(examples.front().label.size()) != ck.config.num_targets) {
    fail(ErrorCode::kShapeError, "checkpoint predicts " + std::to_string(ck.config.num_targets) + " attributes");
  }
  Model model(ck.config, ck.params);
  PredictionSet ps;
  ps.subset = subset.empty() ? "all" : subset;
  ps.condition = "eval";
  ps.fold = "eval";
  ps.pred = predict_all(model, make_inputs(examples, ck.normalizer, cfg.features));
  ps.target = label_matrix(examples);
  for (const auto& e : examples) {
    ps.utterance_ids.push_back(e.utterance_id);
    ps.speaker_ids.push_back(e.speaker_id);
    ps.roles.push_back(e.role);
    ps.noise_kinds.push_back(e.noise_kind);
    ps.snrs.push_back(e.snr_db);
  }
  return ps;
}

}  // namespace voqa
