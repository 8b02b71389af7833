#include "p808/localization.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <regex>
#include <set>
#include <sstream>

#include "p808/error.hpp"
#include "p808/random.hpp"
#include "p808/wav.hpp"

namespace p808 {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string unescape(std::string_view s, int line) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out += s[i];
      continue;
    }
    if (++i == s.size()) {
      throw ParseError("line " + std::to_string(line) + ": dangling escape");
    }
    switch (s[i]) {
      case 'n': out += '\n'; break;
      case 't': out += '\t'; break;
      case '\\': out += '\\'; break;
      default:
        throw ParseError("line " + std::to_string(line) +
                         ": unknown escape \\" + s[i]);
    }
  }
  return out;
}

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\\': out += "\\\\"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr std::string_view kTermPrefix = "term.";
constexpr std::string_view kTermPlaceholder = "term:";

struct Placeholder {
  std::size_t begin;  // index of '{'
  std::size_t end;    // one past '}'
  std::string name;
};

// Splits a template into literal runs and {placeholders}; {{ and }} are
// literal braces.
template <typename OnLiteral, typename OnPlaceholder>
void scan_template(std::string_view text, OnLiteral on_literal,
                   OnPlaceholder on_placeholder) {
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if ((c == '{' || c == '}') && i + 1 < text.size() && text[i + 1] == c) {
      on_literal(std::string_view(&text[i], 1));
      i += 2;
      continue;
    }
    if (c == '{') {
      const auto close = text.find('}', i);
      if (close == std::string_view::npos) {
        throw RenderError("unterminated placeholder in \"" + std::string(text) +
                          "\"");
      }
      on_placeholder(Placeholder{i, close + 1,
                                 std::string(text.substr(i + 1, close - i - 1))});
      i = close + 1;
      continue;
    }
    on_literal(std::string_view(&text[i], 1));
    ++i;
  }
}

bool is_word_byte(unsigned char c) { return std::isalnum(c) != 0; }

bool contains_word(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return false;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + 1)) {
    const bool left_ok =
        pos == 0 || !is_word_byte(static_cast<unsigned char>(haystack[pos - 1]));
    const auto after = pos + needle.size();
    const bool right_ok =
        after == haystack.size() ||
        !is_word_byte(static_cast<unsigned char>(haystack[after]));
    if (left_ok && right_ok) return true;
  }
  return false;
}

std::string strip_placeholders(std::string_view text) {
  std::string out;
  try {
    scan_template(
        text, [&](std::string_view lit) { out += lit; },
        [&](const Placeholder&) { out += ' '; });
  } catch (const RenderError&) {
    return std::string(text);
  }
  return out;
}

bool term_resolvable(const std::map<std::string, std::string>& terminology,
                     const std::string& concept_key) {
  if (terminology.count(concept_key)) return true;
  const std::string prefix = concept_key + ".";
  auto it = terminology.lower_bound(prefix);
  return it != terminology.end() && it->first.rfind(prefix, 0) == 0;
}

}  // namespace

std::string ReferenceSchema::hash() const {
  std::vector<std::string> keys = entry_keys;
  for (const auto& t : term_keys) keys.push_back(std::string(kTermPrefix) + t);
  std::sort(keys.begin(), keys.end());
  std::string joined;
  for (const auto& k : keys) {
    joined += k;
    joined += '\n';
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(joined)));
  return buf;
}

const ReferenceSchema& reference_schema() {
  static const ReferenceSchema schema{
      {
          "qualification.intro",
          "qualification.hearing_question",
          "qualification.fluency_attestation",
          "qualification.comprehension_instruction",
          "qualification.bandwidth_instruction",
          "setup.intro",
          "setup.level_instruction",
          "setup.binaural_instruction",
          "setup.comparison_instruction",
          "setup.comparison_same",
          "setup.comparison_different",
          "training.intro",
          "rating.intro",
          "rating.question",
          "rating.submit",
          "trapping.prompt",
          "rules.participation",
      },
      {"label.1", "label.2", "label.3", "label.4", "label.5"},
  };
  return schema;
}

std::string to_string(CatalogIssue::Kind kind) {
  switch (kind) {
    case CatalogIssue::Kind::missing_key: return "missing-key";
    case CatalogIssue::Kind::empty_value: return "empty-value";
    case CatalogIssue::Kind::literal_label: return "literal-label";
    case CatalogIssue::Kind::unresolved_term: return "unresolved-term";
    case CatalogIssue::Kind::duplicate_term: return "duplicate-term";
    case CatalogIssue::Kind::schema_mismatch: return "schema-mismatch";
  }
  return "unknown";
}

StringCatalog::StringCatalog(std::string language, std::string version,
                             std::string schema_hash,
                             std::map<std::string, std::string> entries,
                             std::map<std::string, std::string> terminology)
    : language_(std::move(language)),
      version_(std::move(version)),
      schema_hash_(std::move(schema_hash)),
      entries_(std::move(entries)),
      terminology_(std::move(terminology)) {}

const std::string& StringCatalog::entry(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    throw RenderError("catalog " + language_ + " has no key " + key);
  }
  return it->second;
}

const std::string& StringCatalog::term(const std::string& concept_key) const {
  auto it = terminology_.find(concept_key);
  if (it == terminology_.end()) {
    throw ConsistencyError("catalog " + language_ + " has no term for " +
                           concept_key);
  }
  return it->second;
}

bool is_valid_language_tag(std::string_view tag) {
  static const std::regex re("^[A-Za-z]{2,3}(-[A-Za-z0-9]{2,8})*$");
  return std::regex_match(tag.begin(), tag.end(), re);
}

StringCatalog parse_catalog(std::string_view text,
                            const ReferenceSchema& schema) {
  StringCatalog catalog = parse_catalog_syntax(text);
  check_catalog(catalog, schema);
  return catalog;
}

StringCatalog parse_catalog_syntax(std::string_view text) {
  std::map<std::string, std::string> header;
  std::map<std::string, std::string> entries;
  std::map<std::string, std::string> terminology;

  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (line_no == 1 && raw.rfind("\xEF\xBB\xBF", 0) == 0) raw.erase(0, 3);
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto where = "line " + std::to_string(line_no) + ": ";
    if (line[0] == '@') {
      const auto sp = line.find_first_of(" \t");
      if (sp == std::string::npos) throw ParseError(where + "header without value");
      const auto name = line.substr(1, sp - 1);
      if (!header.emplace(name, trim(line.substr(sp))).second) {
        throw ParseError(where + "duplicate header @" + name);
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(where + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(where + "empty key");
    std::string value = unescape(trim(line.substr(eq + 1)), line_no);
    auto& target = key.rfind(kTermPrefix, 0) == 0 ? terminology : entries;
    const std::string stored =
        &target == &terminology ? key.substr(kTermPrefix.size()) : key;
    if (!target.emplace(stored, std::move(value)).second) {
      throw ParseError(where + "duplicate key " + key);
    }
  }

  for (const char* required : {"language", "version", "schema"}) {
    if (!header.count(required)) {
      throw ParseError(std::string("missing header @") + required);
    }
  }
  if (!is_valid_language_tag(header["language"])) {
    throw ParseError("invalid language tag \"" + header["language"] + "\"");
  }
  return StringCatalog(header["language"], header["version"], header["schema"],
                       std::move(entries), std::move(terminology));
}

StringCatalog load_catalog(const std::filesystem::path& path,
                           const ReferenceSchema& schema) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& e) {
    throw ParseError(e.what());
  }
  return parse_catalog(text, schema);
}

std::vector<CatalogIssue> validate_catalog(const StringCatalog& catalog,
                                           const ReferenceSchema& schema) {
  using Kind = CatalogIssue::Kind;
  std::vector<CatalogIssue> issues;
  const auto& entries = catalog.entries();
  const auto& terms = catalog.terminology();

  if (catalog.schema_hash() != schema.hash()) {
    issues.push_back({Kind::schema_mismatch, "@schema",
                      "catalog declares " + catalog.schema_hash() +
                          ", reference schema is " + schema.hash()});
  }
  for (const auto& key : schema.entry_keys) {
    auto it = entries.find(key);
    if (it == entries.end()) {
      issues.push_back({Kind::missing_key, key, "missing"});
    }
  }
  for (const auto& key : schema.term_keys) {
    if (!terms.count(key)) {
      issues.push_back(
          {Kind::missing_key, std::string(kTermPrefix) + key, "missing"});
    }
  }
  for (const auto& [key, value] : entries) {
    if (trim(value).empty()) issues.push_back({Kind::empty_value, key, "empty"});
  }
  std::map<std::string, std::string> seen_terms;
  for (const auto& [key, value] : terms) {
    const std::string full = std::string(kTermPrefix) + key;
    if (trim(value).empty()) {
      issues.push_back({Kind::empty_value, full, "empty"});
      continue;
    }
    auto [it, fresh] = seen_terms.emplace(value, key);
    if (!fresh) {
      issues.push_back({Kind::duplicate_term, full,
                        "term \"" + value + "\" already used by " +
                            std::string(kTermPrefix) + it->second});
    }
  }

  for (const auto& [key, value] : entries) {
    const std::string literal = strip_placeholders(value);
    for (const auto& [concept_key, term] : terms) {
      if (concept_key.rfind("label.", 0) != 0) continue;
      if (contains_word(literal, term)) {
        issues.push_back({Kind::literal_label, key,
                          "literal label text \"" + term +
                              "\"; use {term:label} instead"});
      }
    }
    try {
      scan_template(
          value, [](std::string_view) {},
          [&](const Placeholder& p) {
            if (p.name.rfind(kTermPlaceholder, 0) != 0) return;
            const auto concept_key = p.name.substr(kTermPlaceholder.size());
            if (!term_resolvable(terms, concept_key)) {
              issues.push_back({Kind::unresolved_term, key,
                                "no terminology for " + concept_key});
            }
          });
    } catch (const RenderError& e) {
      issues.push_back({Kind::unresolved_term, key, e.what()});
    }
  }
  return issues;
}

void check_catalog(const StringCatalog& catalog,
                   const ReferenceSchema& schema) {
  const auto issues = validate_catalog(catalog, schema);
  if (issues.empty()) return;

  std::vector<std::string> keys;
  bool schema_problem = false;
  std::string message = "catalog " + catalog.language() + " is invalid:";
  for (const auto& issue : issues) {
    keys.push_back(issue.key);
    message += "\n  " + to_string(issue.kind) + " " + issue.key + ": " +
               issue.detail;
    schema_problem |= issue.kind == CatalogIssue::Kind::missing_key ||
                      issue.kind == CatalogIssue::Kind::empty_value ||
                      issue.kind == CatalogIssue::Kind::schema_mismatch;
  }
  if (schema_problem) throw SchemaError(message, std::move(keys));
  throw ConsistencyError(message);
}

std::string serialize_catalog(const StringCatalog& catalog) {
  std::string out = "@language " + catalog.language() + "\n@version " +
                    catalog.version() + "\n@schema " + catalog.schema_hash() +
                    "\n\n";
  for (const auto& [k, v] : catalog.terminology()) {
    out += std::string(kTermPrefix) + k + " = " + escape(v) + "\n";
  }
  out += "\n";
  for (const auto& [k, v] : catalog.entries()) {
    out += k + " = " + escape(v) + "\n";
  }
  return out;
}

std::string render_instruction(const StringCatalog& catalog,
                               const std::string& key,
                               const RenderParams& params) {
  const std::string& tmpl = catalog.entry(key);
  std::string out;
  scan_template(
      tmpl, [&](std::string_view lit) { out += lit; },
      [&](const Placeholder& p) {
        if (p.name.rfind(kTermPlaceholder, 0) == 0) {
          std::string concept_key = p.name.substr(kTermPlaceholder.size());
          if (auto it = params.find(concept_key); it != params.end()) {
            concept_key += "." + it->second;
          }
          const auto& terms = catalog.terminology();
          auto t = terms.find(concept_key);
          if (t == terms.end()) {
            throw RenderError(key + ": no terminology for " + concept_key);
          }
          out += t->second;
          return;
        }
        auto it = params.find(p.name);
        if (it == params.end()) {
          throw RenderError(key + ": unbound placeholder {" + p.name + "}");
        }
        out += it->second;
      });
  return out;
}

CategoryLabel category_label(const StringCatalog& catalog, int value) {
  if (value < 1 || value > 5) {
    throw InvalidArgument("ACR label must be in 1..5, got " +
                          std::to_string(value));
  }
  return CategoryLabel{value, catalog.term("label." + std::to_string(value))};
}

std::vector<std::pair<CategoryLabel, std::string>> build_trapping_prompts(
    const StringCatalog& catalog) {
  std::vector<std::pair<CategoryLabel, std::string>> prompts;
  for (int v = 1; v <= 5; ++v) {
    auto label = category_label(catalog, v);
    auto text = render_instruction(catalog, "trapping.prompt",
                                   {{"label", std::to_string(v)}});
    prompts.emplace_back(std::move(label), std::move(text));
  }
  return prompts;
}

}  // namespace p808
