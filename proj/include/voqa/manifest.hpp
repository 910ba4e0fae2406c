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
#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "voqa/error.hpp"

namespace voqa {

// ---- CSV (RFC 4180: quoted fields, doubled quotes, CRLF tolerated) ----

using CsvRow = std::vector<std::string>;

inline std::vector<CsvRow> parse_csv(const std::string& text) {
  std::vector<CsvRow> rows;
  CsvRow row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) fail(ErrorCode::kFormatError, "unterminated quoted CSV field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string csv_line(const CsvRow& row) {
  std::string out;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i > 0) out += ',';
    out += csv_escape(row[i]);
  }
  return out + "\n";
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kFileError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kFileError, "cannot write " + path.string());
  out << text;
}

// Fixed-precision formatting used by every emitted table.
inline std::string fmt(double v, int digits = 6) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::optional<double> parse_number(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return std::nullopt;
  std::size_t e = s.find_last_not_of(" \t");
  const std::string t = s.substr(b, e - b + 1);
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

// ---- Manifest ----

enum class Scale { kCapeV, kGrbas };

inline constexpr std::array<const char*, 6> kCapeVColumns = {
    "capev_severity", "capev_roughness", "capev_breathiness",
    "capev_strain",   "capev_pitch",     "capev_loudness"};
inline constexpr std::array<const char*, 5> kGrbasColumns = {"grbas_g", "grbas_r", "grbas_b",
                                                             "grbas_a", "grbas_s"};

inline std::vector<std::string> attribute_names(Scale s) {
  if (s == Scale::kCapeV) return {"severity", "roughness", "breathiness", "strain", "pitch", "loudness"};
  return {"G", "R", "B", "A", "S"};
}

inline std::string_view to_string(Scale s) { return s == Scale::kCapeV ? "capev" : "grbas"; }

inline Scale parse_scale(std::string_view s) {
  if (s == "capev") return Scale::kCapeV;
  if (s == "grbas") return Scale::kGrbas;
  fail(ErrorCode::kConfigError, "scale must be capev or grbas, got '" + std::string(s) + "'");
}

inline double scale_max(Scale s) { return s == Scale::kCapeV ? 100.0 : 3.0; }

inline const std::vector<std::string>& standard_columns() {
  static const std::vector<std::string> cols = [] {
    std::vector<std::string> c = {"utterance_id", "speaker_id", "wav_path", "vqes_path", "subset",
                                  "split"};
    for (auto n : kCapeVColumns) c.emplace_back(n);
    for (auto n : kGrbasColumns) c.emplace_back(n);
    for (auto n : {"noise_kind", "snr_db", "role", "mix_scale"}) c.emplace_back(n);
    return c;
  }();
  return cols;
}

inline const std::set<std::string>& valid_roles() {
  static const std::set<std::string> r = {"", "clean", "train_seen", "test_seen", "test_unseen"};
  return r;
}

struct ManifestRow {
  std::size_t line = 0;  // 1-based line in the source file (header is line 1)
  std::map<std::string, std::string> fields;

  const std::string& get(const std::string& col) const {
    static const std::string empty;
    auto it = fields.find(col);
    return it == fields.end() ? empty : it->second;
  }
  void set(const std::string& col, std::string v) { fields[col] = std::move(v); }

  const std::string& utterance_id() const { return get("utterance_id"); }
  const std::string& speaker_id() const { return get("speaker_id"); }
  const std::string& subset() const { return get("subset"); }
  std::string role() const { return get("role").empty() ? "clean" : get("role"); }

  // Score vector for `scale`, or nullopt if any attribute is blank or bad.
  std::optional<std::vector<double>> labels(Scale scale) const {
    std::vector<double> out;
    auto take = [&](const char* col) {
      auto v = parse_number(get(col));
      if (!v) return false;
      out.push_back(*v);
      return true;
    };
    if (scale == Scale::kCapeV) {
      for (auto c : kCapeVColumns)
        if (!take(c)) return std::nullopt;
    } else {
      for (auto c : kGrbasColumns)
        if (!take(c)) return std::nullopt;
    }
    return out;
  }
};

struct Manifest {
  std::filesystem::path base_dir;     // relative paths resolve against this
  std::vector<std::string> columns;   // header order as read
  std::vector<ManifestRow> rows;

  std::filesystem::path resolve(const std::string& p) const {
    if (p.empty()) return {};
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  }

  bool has_column(const std::string& c) const {
    return std::find(columns.begin(), columns.end(), c) != columns.end();
  }

  // Standard columns first, then passthrough columns in their original order.
  std::vector<std::string> output_columns() const {
    std::vector<std::string> out = standard_columns();
    for (const auto& c : columns) {
      if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
    }
    return out;
  }

  std::string to_csv() const {
    const auto cols = output_columns();
    std::string out = csv_line(cols);
    for (const auto& r : rows) {
      CsvRow line;
      for (const auto& c : cols) line.push_back(r.get(c));
      out += csv_line(line);
    }
    return out;
  }
};

struct Issue {
  std::string code;
  std::size_t row = 0;  // source line, 0 when not tied to a row
  std::string column;
  std::string message;
};

inline Manifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir,
                               std::vector<Issue>* issues = nullptr) {
  auto table = parse_csv(text);
  Manifest m;
  m.base_dir = base_dir;
  if (table.empty()) {
    if (issues) issues->push_back({"MISSING_COLUMN", 0, "utterance_id", "manifest has no header"});
    return m;
  }
  m.columns = table[0];
  for (auto& c : m.columns) {
    while (!c.empty() && (c.back() == ' ' || c.back() == '\t')) c.pop_back();
    while (!c.empty() && (c.front() == ' ' || c.front() == '\t')) c.erase(c.begin());
  }
  if (!m.columns.empty() && m.columns[0].rfind("\xEF\xBB\xBF", 0) == 0) m.columns[0].erase(0, 3);
  for (std::size_t i = 1; i < table.size(); ++i) {
    ManifestRow r;
    r.line = i + 1;
    if (table[i].size() != m.columns.size() && issues) {
      issues->push_back({"BAD_ROW", r.line, "",
                         "row has " + std::to_string(table[i].size()) + " fields, header has " +
                             std::to_string(m.columns.size())});
    }
    for (std::size_t c = 0; c < m.columns.size() && c < table[i].size(); ++c) {
      r.fields[m.columns[c]] = table[i][c];
    }
    m.rows.push_back(std::move(r));
  }
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path, std::vector<Issue>* issues = nullptr) {
  return parse_manifest(read_text_file(path), path.parent_path(), issues);
}

inline void save_manifest(const Manifest& m, const std::filesystem::path& path) {
  write_text_file(path, m.to_csv());
}

// Every invariant of a manifest; an empty result means the manifest is clean.
inline std::vector<Issue> validate_manifest(const Manifest& m, bool check_files = true) {
  std::vector<Issue> issues;
  for (const char* req : {"utterance_id", "speaker_id"}) {
    if (!m.has_column(req)) {
      issues.push_back({"MISSING_COLUMN", 0, req, std::string("required column '") + req + "' is absent"});
    }
  }
  std::map<std::string, std::vector<std::size_t>> by_id;
  for (const auto& r : m.rows) by_id[r.utterance_id()].push_back(r.line);
  for (const auto& [id, lines] : by_id) {
    if (lines.size() < 2) continue;
    std::string where;
    for (std::size_t i = 0; i < lines.size(); ++i) where += (i ? ", " : "") + std::to_string(lines[i]);
    issues.push_back({"DUPLICATE_ID", lines[1], "utterance_id",
                      "utterance_id '" + id + "' appears on rows " + where});
  }
  auto check_range = [&](const ManifestRow& r, const char* col, double hi) {
    const auto& raw = r.get(col);
    if (raw.empty()) return;
    auto v = parse_number(raw);
    if (!v) {
      issues.push_back({"BAD_NUMBER", r.line, col, std::string(col) + "='" + raw + "' is not a number"});
    } else if (*v < 0.0 || *v > hi) {
      issues.push_back({"OUT_OF_RANGE", r.line, col,
                        std::string(col) + "=" + raw + " outside [0, " + fmt(hi, 0) + "]"});
    }
  };
  for (const auto& r : m.rows) {
    if (r.utterance_id().empty() && m.has_column("utterance_id")) {
      issues.push_back({"EMPTY_ID", r.line, "utterance_id", "utterance_id is empty"});
    }
    if (r.speaker_id().empty() && m.has_column("speaker_id")) {
      issues.push_back({"EMPTY_SPEAKER", r.line, "speaker_id", "speaker_id is empty"});
    }
    for (auto c : kCapeVColumns) check_range(r, c, 100.0);
    for (auto c : kGrbasColumns) check_range(r, c, 3.0);
    for (const char* c : {"snr_db", "mix_scale"}) {
      const auto& raw = r.get(c);
      if (!raw.empty() && !parse_number(raw)) {
        issues.push_back({"BAD_NUMBER", r.line, c, std::string(c) + "='" + raw + "' is not a number"});
      }
    }
    const auto& subset = r.subset();
    if (!subset.empty() && subset != "A" && subset != "S") {
      issues.push_back({"BAD_SUBSET", r.line, "subset", "subset '" + subset + "' is not A or S"});
    }
    if (!valid_roles().count(r.get("role"))) {
      issues.push_back({"BAD_ROLE", r.line, "role", "role '" + r.get("role") + "' is not recognised"});
    }
    if (check_files) {
      for (const char* c : {"wav_path", "vqes_path"}) {
        const auto& p = r.get(c);
        if (!p.empty() && !std::filesystem::exists(m.resolve(p))) {
          issues.push_back({"MISSING_FILE", r.line, c, m.resolve(p).string() + " does not exist"});
        }
      }
    }
  }
  std::stable_sort(issues.begin(), issues.end(),
                   [](const Issue& a, const Issue& b) { return a.row < b.row; });
  return issues;
}

inline std::string issues_to_csv(const std::vector<Issue>& issues) {
  std::string out = csv_line({"code", "row", "column", "message"});
  for (const auto& i : issues) out += csv_line({i.code, std::to_string(i.row), i.column, i.message});
  return out;
}

inline std::string issues_to_json(const std::vector<Issue>& issues) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& i : issues) {
    arr.push_back({{"code", i.code}, {"row", i.row}, {"column", i.column}, {"message", i.message}});
  }
  return nlohmann::json{{"issues", arr}, {"clean", issues.empty()}}.dump(2) + "\n";
}

}  // namespace voqa
