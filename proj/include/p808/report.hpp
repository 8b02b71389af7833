#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "p808/campaign.hpp"
#include "p808/metrics.hpp"

namespace p808 {

// One utterance of one model in one language.
struct UtteranceKey {
  std::string model;
  std::string language;
  std::string utterance;

  auto operator<=>(const UtteranceKey&) const = default;
  std::string str() const { return model + "/" + language + "/" + utterance; }
};

struct UtteranceScores {
  UtteranceKey key;
  ModelType type = ModelType::none;
  std::map<Metric, double> values;
};

// Per-utterance CSV: header model,type,language,utterance,<metric columns>.
std::vector<UtteranceScores> read_utterance_csv(std::string_view text);
std::vector<UtteranceScores> load_utterance_csv(const std::filesystem::path& path);
std::string write_utterance_csv(const std::vector<UtteranceScores>& rows);

// Per-utterance MOS of a campaign's rating clips, keyed by the clips' model
// and utterance metadata. Clips short of votes are omitted.
std::vector<UtteranceScores> campaign_mos(const Campaign& campaign);

// Reference phones for one language plus one hypothesis file per model.
struct PhoneSet {
  std::string language;
  PhoneFile reference;
  std::map<std::string, PhoneFile> hypotheses;
};

struct IngestInputs {
  std::vector<UtteranceScores> mos;        // from campaigns
  std::vector<UtteranceScores> objective;  // ingested columns
  std::vector<PhoneSet> phones;
};

// Joins the sources on (model, language, utterance) and averages each metric
// over utterances per (model, language). Keys present in one non-empty source
// but not another raise JoinError naming them. LPS is computed wherever phone
// files cover a (model, language) and ingested elsewhere.
MetricTable ingest_results(const IngestInputs& inputs);

enum class Grouping { language, model_type, model };
std::string to_string(Grouping g);
Grouping parse_grouping(const std::string& s);

struct ColumnSpec {
  Metric metric = Metric::mos;
  // Restricts the column to one language; otherwise all languages.
  std::optional<std::string> language;

  std::string label() const;
  static ColumnSpec parse(const std::string& text);  // "MOS" or "MOS@de"
};

struct ReportSpec {
  std::string name = "table";
  Grouping grouping = Grouping::model;
  std::vector<ColumnSpec> columns;
  bool ci = false;
  std::optional<QuartileRule> flag_rule;
};

struct ReportCell {
  std::optional<double> mean;
  std::optional<double> ci95;
  int n = 0;
};

struct ReportRow {
  std::string group;
  std::vector<ReportCell> cells;
  bool unprocessed = false;
  bool flagged = false;
};

struct ReportTable {
  ReportSpec spec;
  std::vector<std::string> headers;
  std::vector<ReportRow> rows;
};

// Group values are utterance-weighted means. Grouping by model keeps every
// model (the unprocessed baseline included); grouping by language or model
// type covers processed models only and ends with an "All" row. Model types
// render as D, H/G (hybrid and generative merged) and U.
ReportTable compute_table(const MetricTable& table, const ReportSpec& spec);

// Two decimals; the best processed value of each column in bold.
std::string render_text(const ReportTable& t);
// Full precision.
std::string render_csv(const ReportTable& t);

// Report spec file, see README.
struct ReportJob {
  std::vector<std::filesystem::path> campaigns;
  std::optional<std::filesystem::path> objective;
  std::optional<std::filesystem::path> metric_table;
  std::vector<nlohmann::json> phones;
  std::vector<ReportSpec> tables;
  std::filesystem::path base;
};

ReportJob parse_report_job(const nlohmann::json& j,
                           const std::filesystem::path& base);
MetricTable load_job_table(const ReportJob& job);
// Writes <name>.txt and <name>.csv per table plus metrics.csv; returns the
// written paths.
std::vector<std::filesystem::path> run_report(const ReportJob& job,
                                              const std::filesystem::path& out);

}  // namespace p808
