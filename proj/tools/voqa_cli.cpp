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

#include <CLI11.hpp>
#include <malloc.h>

#include <cmath>
#include <iostream>
#include <string>
#include <vector>

#include "voqa/voqa.hpp"

namespace {

using namespace voqa;

int do_validate(const std::string& manifest, const std::string& format, bool check_files, const std::string& out) {
  std::vector<Issue> issues;
  const Manifest m = load_manifest(manifest, &issues);
  for (auto& i : validate_manifest(m, check_files)) issues.push_back(i);
  const std::string text = format == "json" ? issues_to_json(issues) : issues_to_csv(issues);
  if (out.empty()) {
    std::cout << text;
  } else {
    write_text_file(out, text);
  }
  std::cerr << m.rows.size() << " rows, " << issues.size() << " issues\n";
  return issues.empty() ? 0 : 1;
}

int do_lld(const std::string& manifest, bool cpp, const std::string& out) {
  const Manifest m = load_manifest(manifest);
  const auto cache = cache_dir_from_env();
  std::string csv = csv_line({"utterance_id", "jitter_local", "shimmer_local", "hnr_db", "cpp_db", "num_cycles",
                              "missing_flag", "missing_reason"});
  for (const auto& row : m.rows) {
    const auto& wav = row.get("wav_path");
    if (wav.empty()) fail(ErrorCode::kFormatError, "row " + std::to_string(row.line) + " has no wav_path");
    const auto v = lld_for_file(m.resolve(wav), speech_subset(row.subset()), cpp, cache);
    // Absent or unmeasurable values are empty fields.
    auto cell = [](double x, int digits) { return std::isnan(x) ? std::string() : fmt(x, digits); };
    csv += csv_line({row.utterance_id(), cell(v.jitter_local, 9), cell(v.shimmer_local, 9), cell(v.hnr_db, 6),
                     cell(v.cpp_db, 6), std::to_string(v.num_cycles), v.missing() ? "1" : "0", v.missing_reason});
  }
  if (out.empty()) {
    std::cout << csv;
  } else {
    write_text_file(out, csv);
  }
  return 0;
}

int do_augment(const std::string& manifest, const std::string& out_dir, const std::vector<std::string>& roles,
               std::uint64_t seed, const std::vector<std::string>& noise_files) {
  const Manifest m = load_manifest(manifest);
  std::vector<MixPlan> plans;
  for (const auto& r : roles) plans.push_back(standard_plan(r));
  for (const auto& nf : noise_files) {
    const auto eq = nf.find('=');
    if (eq == std::string::npos) fail(ErrorCode::kConfigError, "--noise-file expects kind=path, got '" + nf + "'");
    const NoiseKind kind = parse_noise_kind(nf.substr(0, eq));
    const std::filesystem::path path = std::filesystem::absolute(nf.substr(eq + 1));
    bool used = false;
    for (auto& p : plans) {
      for (auto& n : p.noises) {
        if (n.kind == kind) {
          n.path = path;
          used = true;
        }
      }
    }
    if (!used) fail(ErrorCode::kConfigError, "noise kind '" + nf.substr(0, eq) + "' is not in the selected plans");
  }
  AugmentOptions opt;
  opt.out_dir = std::filesystem::path(out_dir) / "wav";
  opt.seed = seed;
  opt.split_aware = m.has_column("split");
  const Manifest aug = build_augmented_set(m, plans, opt, out_dir);
  save_manifest(aug, std::filesystem::path(out_dir) / "manifest.csv");
  std::cerr << "wrote " << aug.rows.size() << " rows to " << (std::filesystem::path(out_dir) / "manifest.csv").string()
            << "\n";
  return 0;
}

int do_run(const std::string& config, bool evaluate) {
  const RunConfig cfg = load_run_config(config);
  const auto result = cmd_run(cfg, &std::cerr, evaluate);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  if (evaluate) std::cout << read_text_file(cfg.output_dir / "results_table.txt");
  std::cerr << result.trainings << " models trained; results in " << cfg.output_dir.lexically_normal().string() << "\n";
  return 0;
}

int do_eval(const std::string& checkpoint, const std::string& manifest, const std::string& subset,
            const std::string& out) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const Manifest m = load_manifest(manifest);
  std::vector<std::string> warnings;
  const auto ps = evaluate_checkpoint(ck, m, subset, warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  const auto attributes = attribute_names(parse_scale(ck.meta.value("scale", std::string("capev"))));
  if (!out.empty()) write_text_file(out, predictions_to_csv(ps, attributes));
  const auto rep = build_report({ps}, std::string(to_string(ck.config.features)), attributes);
  std::cout << rep.metrics_csv;
  return 0;
}

int do_report(const std::string& dir) {
  const auto rep = report_from_directory(dir);
  std::cout << rep.table_txt;
  return 0;
}

int do_synth(const std::string& out_dir, std::size_t speakers, std::size_t utterances, std::uint64_t seed,
             const std::string& subset) {
  SynthCorpusSpec spec;
  spec.speakers = speakers;
  spec.utterances_per_speaker = utterances;
  spec.seed = seed;
  spec.subset = subset;
  const auto m = write_synthetic_corpus(make_synthetic_corpus(spec), out_dir);
  std::cerr << "wrote " << m.rows.size() << " utterances to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Training allocates multi-megabyte temporaries per batch; keep them on the
  // heap instead of mapping and faulting fresh pages each time.
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
  CLI::App app{"voqa: voice-quality assessment from speech embeddings and clinical descriptors"};
  app.require_subcommand(1);

  std::string manifest, out, format = "csv", config, dir, checkpoint, subset;
  bool no_files = false, cpp = false;
  std::vector<std::string> roles = {"train_seen", "test_seen", "test_unseen"}, noise_files;
  std::uint64_t seed = 0;
  std::size_t speakers = 240, utterances = 2;

  auto* validate = app.add_subcommand("validate", "Check a manifest; exit 0 iff clean");
  validate->add_option("manifest", manifest, "Manifest CSV")->required();
  validate->add_option("--format", format, "Issue list format")->check(CLI::IsMember({"csv", "json"}));
  validate->add_flag("--no-files", no_files, "Skip file existence checks");
  validate->add_option("-o,--out", out, "Write the issue list here instead of stdout");

  auto* lld = app.add_subcommand("lld", "Measure jitter, shimmer, HNR (and CPP) per utterance");
  lld->add_option("manifest", manifest, "Manifest CSV")->required();
  lld->add_flag("--cpp", cpp, "Also measure cepstral peak prominence");
  lld->add_option("-o,--out", out, "Output CSV (default stdout)");

  auto* augment = app.add_subcommand("augment", "Write noisy copies of the clean rows at fixed SNRs");
  augment->add_option("manifest", manifest, "Manifest CSV")->required();
  augment->add_option("-o,--out-dir", dir, "Output directory for wav/ and manifest.csv")->required();
  augment->add_option("--roles", roles, "Plans to apply")
      ->delimiter(',')
      ->check(CLI::IsMember({"train_seen", "test_seen", "test_unseen"}));
  augment->add_option("--seed", seed, "Noise seed");
  augment->add_option("--noise-file", noise_files, "Replace a generated noise with a recording: kind=path");

  auto* train = app.add_subcommand("train", "Train models and save checkpoints without evaluating");
  train->add_option("config", config, "Run config JSON")->required();

  auto* eval = app.add_subcommand("eval", "Predict a manifest with a saved checkpoint and print metrics");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint (.vqck)")->required();
  eval->add_option("--manifest", manifest, "Manifest CSV")->required();
  eval->add_option("--subset", subset, "Restrict to subset A or S");
  eval->add_option("-o,--out", out, "Write predictions CSV");

  auto* run = app.add_subcommand("run", "Train, evaluate and write the full results bundle");
  run->add_option("config", config, "Run config JSON")->required();

  auto* report = app.add_subcommand("report", "Rebuild metric tables and plot data from saved predictions");
  report->add_option("results_dir", dir, "Results directory")->required();

  auto* synth = app.add_subcommand("synth", "Write a labeled synthetic corpus with embeddings");
  synth->add_option("out_dir", dir, "Output directory")->required();
  synth->add_option("--speakers", speakers, "Number of speakers");
  synth->add_option("--utterances", utterances, "Utterances per speaker");
  synth->add_option("--seed", seed, "Corpus seed");
  synth->add_option("--subset", subset, "Subset label written to the manifest")->default_str("A");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*validate) return do_validate(manifest, format, !no_files, out);
    if (*lld) return do_lld(manifest, cpp, out);
    if (*augment) return do_augment(manifest, dir, roles, seed, noise_files);
    if (*train) return do_run(config, false);
    if (*eval) return do_eval(checkpoint, manifest, subset, out);
    if (*run) return do_run(config, true);
    if (*report) return do_report(dir);
    if (*synth) return do_synth(dir, speakers, utterances, seed, subset.empty() ? "A" : subset);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 3;
}
