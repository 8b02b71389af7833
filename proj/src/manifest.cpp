#include "p808/manifest.hpp"

#include <map>
#include <sstream>

#include "p808/error.hpp"
#include "p808/wav.hpp"

namespace p808 {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

const std::vector<std::string>& column_order() {
  static const std::vector<std::string> cols{
      "id",        "role",          "path",  "language",  "expected",
      "gold_tolerance", "reference_score", "asset", "expected_text", "model",
      "utterance", "generate",      "source"};
  return cols;
}

std::optional<int> parse_int_cell(const std::string& cell, int line,
                                  const std::string& column) {
  if (cell.empty() || cell == "-") return std::nullopt;
  try {
    std::size_t used = 0;
    const int v = std::stoi(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw ParseError("manifest line " + std::to_string(line) + ": column " +
                     column + " is not an integer: \"" + cell + "\"");
  }
}

std::string cell_text(const std::string& cell) {
  return cell == "-" ? std::string() : cell;
}

}  // namespace

std::vector<ManifestRow> parse_manifest(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::map<std::string, std::size_t> col;
  int line_no = 0;
  std::vector<ManifestRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split_tabs(line);
    if (col.empty()) {
      for (std::size_t i = 0; i < cells.size(); ++i) col[cells[i]] = i;
      for (const char* required : {"id", "role", "path", "language", "expected"}) {
        if (!col.count(required)) {
          throw ParseError(std::string("manifest header lacks column ") + required);
        }
      }
      continue;
    }
    auto get = [&](const char* name) -> std::string {
      auto it = col.find(name);
      if (it == col.end() || it->second >= cells.size()) return {};
      return cells[it->second];
    };
    ManifestRow row;
    Clip& c = row.clip;
    c.id = get("id");
    if (c.id.empty()) {
      throw ParseError("manifest line " + std::to_string(line_no) + ": empty id");
    }
    c.role = parse_role(get("role"));
    c.path = cell_text(get("path"));
    c.language = get("language");
    c.expected_answer = parse_int_cell(get("expected"), line_no, "expected");
    c.gold_tolerance = parse_int_cell(get("gold_tolerance"), line_no, "gold_tolerance");
    c.reference_score = parse_int_cell(get("reference_score"), line_no, "reference_score");
    c.asset = cell_text(get("asset"));
    c.expected_text = cell_text(get("expected_text"));
    c.model = cell_text(get("model"));
    c.utterance = cell_text(get("utterance"));
    row.generate = cell_text(get("generate"));
    row.source = cell_text(get("source"));
    rows.push_back(std::move(row));
  }
  if (col.empty()) throw ParseError("manifest is empty");
  return rows;
}

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file(path));
}

std::string format_manifest(const std::vector<ManifestRow>& rows) {
  std::string out;
  const auto& cols = column_order();
  for (std::size_t i = 0; i < cols.size(); ++i) {
    out += (i ? "\t" : "") + cols[i];
  }
  out += '\n';
  auto num = [](const std::optional<int>& v) {
    return v ? std::to_string(*v) : std::string("-");
  };
  auto txt = [](const std::string& s) { return s.empty() ? std::string("-") : s; };
  for (const auto& r : rows) {
    const Clip& c = r.clip;
    const std::vector<std::string> cells{
        c.id,        to_string(c.role),       txt(c.path),
        c.language,  num(c.expected_answer),  num(c.gold_tolerance),
        num(c.reference_score), txt(c.asset), txt(c.expected_text),
        txt(c.model), txt(c.utterance),       txt(r.generate),
        txt(r.source)};
    for (std::size_t i = 0; i < cells.size(); ++i) {
      out += (i ? "\t" : "") + cells[i];
    }
    out += '\n';
  }
  return out;
}

ClipSets split_by_role(const std::vector<ManifestRow>& rows) {
  ClipSets sets;
  for (const auto& r : rows) {
    switch (r.clip.role) {
      case ClipRole::rating: sets.rating.push_back(r.clip); break;
      case ClipRole::gold: sets.gold.push_back(r.clip); break;
      case ClipRole::trapping: sets.trapping.push_back(r.clip); break;
      case ClipRole::training: sets.training.push_back(r.clip); break;
      case ClipRole::setup: sets.setup.push_back(r.clip); break;
    }
  }
  return sets;
}

}  // namespace p808
