#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "noisediag/error.hpp"
#include "noisediag/npy.hpp"

namespace noisediag {

struct ScoreRow {
  std::string arm;  // empty when the source had no arm column
  std::string prompt_id;
  std::string seed_id;
  std::string metric_name;
  double value = 0.0;
};

/// Per-(prompt, seed, metric) scalar scores, optionally tagged with an arm.
/// Keys are unique within an arm.
class ScoreTable {
public:
  void add(ScoreRow row) {
    if (!std::isfinite(row.value))
      throw table_error("non-finite score for (" + row.prompt_id + ", " + row.seed_id + ", " + row.metric_name + ")");
    if (!keys_.emplace(row.arm, row.prompt_id, row.seed_id, row.metric_name).second)
      throw table_error("duplicate score key (" + (row.arm.empty() ? "" : row.arm + ", ") + row.prompt_id + ", " +
                        row.seed_id + ", " + row.metric_name + ")");
    rows_.push_back(std::move(row));
  }

  /// Appends every row of `other`, relabelled with `arm`.
  void merge_as_arm(const ScoreTable& other, const std::string& arm) {
    for (ScoreRow row : other.rows()) {
      row.arm = arm;
      add(std::move(row));
    }
  }

  const std::vector<ScoreRow>& rows() const noexcept { return rows_; }
  std::size_t size() const noexcept { return rows_.size(); }
  bool empty() const noexcept { return rows_.empty(); }

  std::set<std::string> arms() const {
    std::set<std::string> out;
    for (const auto& r : rows_) out.insert(r.arm);
    return out;
  }

private:
  std::vector<ScoreRow> rows_;
  std::set<std::tuple<std::string, std::string, std::string, std::string>> keys_;
};

namespace scores_detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

} // namespace scores_detail

/// Parses a score CSV. Required columns: prompt_id, seed_id, metric_name,
/// value; an optional `arm` column tags each row. LF and CRLF both accepted.
inline ScoreTable parse_scores(std::string_view text, const std::string& source = "<memory>") {
  ScoreTable table;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  int col_prompt = -1, col_seed = -1, col_metric = -1, col_value = -1, col_arm = -1;
  std::size_t n_cols = 0;
  bool header_seen = false;
  if (text.substr(0, 3) == "\xEF\xBB\xBF") pos = 3;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (scores_detail::trim(line).empty()) continue;
    const auto fields = scores_detail::split_csv_line(line);
    if (!header_seen) {
      for (std::size_t i = 0; i < fields.size(); ++i) {
        const auto name = scores_detail::trim(fields[i]);
        const int idx = static_cast<int>(i);
        if (name == "prompt_id") col_prompt = idx;
        else if (name == "seed_id") col_seed = idx;
        else if (name == "metric_name") col_metric = idx;
        else if (name == "value") col_value = idx;
        else if (name == "arm") col_arm = idx;
        else throw parse_error(source + ":" + std::to_string(line_no) + ": unknown column '" + std::string(name) + "'");
      }
      if (col_prompt < 0 || col_seed < 0 || col_metric < 0 || col_value < 0)
        throw parse_error(source + ": header must contain prompt_id,seed_id,metric_name,value");
      n_cols = fields.size();
      header_seen = true;
      continue;
    }
    if (fields.size() != n_cols)
      throw parse_error(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(n_cols) +
                        " fields, got " + std::to_string(fields.size()));
    const auto value_text = scores_detail::trim(fields[static_cast<std::size_t>(col_value)]);
    double value = 0.0;
    const auto [end, ec] = std::from_chars(value_text.data(), value_text.data() + value_text.size(), value);
    if (ec != std::errc() || end != value_text.data() + value_text.size() || value_text.empty() ||
        !std::isfinite(value))
      throw parse_error(source + ":" + std::to_string(line_no) + ": value '" + std::string(value_text) +
                        "' is not a finite number");
    ScoreRow row{col_arm >= 0 ? std::string(scores_detail::trim(fields[static_cast<std::size_t>(col_arm)])) : "",
                 std::string(scores_detail::trim(fields[static_cast<std::size_t>(col_prompt)])),
                 std::string(scores_detail::trim(fields[static_cast<std::size_t>(col_seed)])),
                 std::string(scores_detail::trim(fields[static_cast<std::size_t>(col_metric)])), value};
    try {
      table.add(std::move(row));
    } catch (const table_error& e) {
      throw table_error(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!header_seen) throw parse_error(source + ": missing CSV header");
  return table;
}

inline ScoreTable load_scores(const std::filesystem::path& path) {
  return parse_scores(read_file_bytes(path), path.string());
}

/// Shortest round-trip decimal text for a double.
inline std::string format_roundtrip(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

/// Writes rows as CSV, with an arm column only if some row carries an arm.
inline std::string format_scores(const ScoreTable& table) {
  bool with_arm = false;
  for (const auto& r : table.rows()) with_arm = with_arm || !r.arm.empty();
  std::string out = with_arm ? "arm,prompt_id,seed_id,metric_name,value\n" : "prompt_id,seed_id,metric_name,value\n";
  for (const auto& r : table.rows()) {
    if (with_arm) out += r.arm + ",";
    out += r.prompt_id + "," + r.seed_id + "," + r.metric_name + "," + format_roundtrip(r.value) + "\n";
  }
  return out;
}

} // namespace noisediag
