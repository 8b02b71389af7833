#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace p808 {

// Keys every catalog must define, reconstructed from the qualification,
// setup, training, rating and trapping screens of the reference template.
struct ReferenceSchema {
  std::vector<std::string> entry_keys;
  std::vector<std::string> term_keys;

  // FNV-1a 64 of the sorted key inventory, written as 16 hex digits.
  std::string hash() const;
};

const ReferenceSchema& reference_schema();

struct CatalogIssue {
  enum class Kind { missing_key, empty_value, literal_label, unresolved_term,
                    duplicate_term, schema_mismatch };
  Kind kind;
  std::string key;
  std::string detail;
};

std::string to_string(CatalogIssue::Kind kind);

// Immutable after load.
class StringCatalog {
 public:
  StringCatalog() = default;
  StringCatalog(std::string language, std::string version,
                std::string schema_hash,
                std::map<std::string, std::string> entries,
                std::map<std::string, std::string> terminology);

  const std::string& language() const { return language_; }
  const std::string& version() const { return version_; }
  const std::string& schema_hash() const { return schema_hash_; }
  const std::map<std::string, std::string>& entries() const { return entries_; }
  const std::map<std::string, std::string>& terminology() const {
    return terminology_;
  }

  const std::string& entry(const std::string& key) const;
  const std::string& term(const std::string& concept_key) const;

 private:
  std::string language_;
  std::string version_;
  std::string schema_hash_;
  std::map<std::string, std::string> entries_;
  std::map<std::string, std::string> terminology_;
};

struct CategoryLabel {
  int value = 0;
  std::string term;
};

// Catalog text format:
//   # comment
//   @language de-DE
//   @version 1
//   @schema <hash>
//   term.label.5 = Ausgezeichnet
//   rating.question = ...
// Values may use \n and \\ escapes. Placeholders are {name} (bound from
// render params) and {term:concept} (resolved through the terminology; when
// `concept` is also a param name, the key becomes concept.<param value>).
StringCatalog parse_catalog(std::string_view text,
                            const ReferenceSchema& schema = reference_schema());
// Syntax and header checks only; validate_catalog reports the rest.
StringCatalog parse_catalog_syntax(std::string_view text);
StringCatalog load_catalog(const std::filesystem::path& path,
                           const ReferenceSchema& schema = reference_schema());

// Every issue in one pass; empty means valid.
std::vector<CatalogIssue> validate_catalog(
    const StringCatalog& catalog,
    const ReferenceSchema& schema = reference_schema());

// Throws SchemaError (missing/empty keys) or ConsistencyError (terminology)
// naming every offending key.
void check_catalog(const StringCatalog& catalog,
                   const ReferenceSchema& schema = reference_schema());

std::string serialize_catalog(const StringCatalog& catalog);

using RenderParams = std::map<std::string, std::string>;

std::string render_instruction(const StringCatalog& catalog,
                               const std::string& key,
                               const RenderParams& params);

CategoryLabel category_label(const StringCatalog& catalog, int value);

// One prompt per label 1..5.
std::vector<std::pair<CategoryLabel, std::string>> build_trapping_prompts(
    const StringCatalog& catalog);

bool is_valid_language_tag(std::string_view tag);

}  // namespace p808
