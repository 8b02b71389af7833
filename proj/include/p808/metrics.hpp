#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace p808 {

struct PhoneSequence {
  std::vector<std::string> tokens;
  std::string language;

  // Splits on whitespace.
  static PhoneSequence parse(std::string_view phones, std::string language = {});
};

// Minimal number of single-token insertions, deletions and substitutions.
std::size_t levenshtein(const PhoneSequence& a, const PhoneSequence& b);

// levenshtein(ref, hyp) / |ref|, clamped to 1.
double lpd(const PhoneSequence& ref, const PhoneSequence& hyp);
double lps(const PhoneSequence& ref, const PhoneSequence& hyp);

// utterance id -> phones, from "id<TAB>p1 p2 ..." lines.
using PhoneFile = std::map<std::string, PhoneSequence>;
PhoneFile parse_phone_file(std::string_view text, std::string language = {});
PhoneFile read_phone_file(const std::filesystem::path& path,
                          std::string language = {});

struct UtteranceLps {
  std::string utterance;
  double lps;
};

// Per-utterance LPS over the utterances present in `ref`; a hypothesis
// missing for some reference utterance is a JoinError.
std::vector<UtteranceLps> lps_per_utterance(const PhoneFile& ref,
                                            const PhoneFile& hyp);

enum class Metric { mos, pesq, dnsmos, nisqa, estoi, lps };
inline constexpr std::array<Metric, 6> kAllMetrics{
    Metric::mos, Metric::pesq, Metric::dnsmos,
    Metric::nisqa, Metric::estoi, Metric::lps};

std::string metric_name(Metric m);
std::optional<Metric> parse_metric(std::string_view name);

enum class ModelType { discriminative, generative, hybrid, uncategorized, none };
char type_code(ModelType t);  // D G H U -
ModelType parse_model_type(std::string_view code);

enum class Provenance { ingested, computed };

// Per-utterance mean (and, when known, sample sd) of one metric in a row.
struct MetricValue {
  double mean = 0.0;
  std::optional<double> sd;

  friend bool operator==(const MetricValue&, const MetricValue&) = default;
};

struct MetricRow {
  std::string model;
  ModelType type = ModelType::none;
  std::string language;
  int utterances = 1;
  std::map<Metric, MetricValue> values;

  const MetricValue* find(Metric m) const;
  friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

// One row per (model, language).
struct MetricTable {
  std::vector<MetricRow> rows;
  std::map<Metric, Provenance> provenance;

  std::set<std::string> models() const;
  void validate() const;
  friend bool operator==(const MetricTable&, const MetricTable&) = default;
};

inline constexpr const char* kUnprocessedModel = "Noisy";
bool is_unprocessed(const MetricRow& row);

// CSV with header model,type,language,n,<metrics>[,<metric>_sd]; an optional
// leading "# provenance: MOS=computed ..." line records column provenance.
// Values are written at full precision so write->read is lossless.
std::string write_metric_csv(const MetricTable& table);
MetricTable read_metric_csv(std::string_view text);
MetricTable load_metric_csv(const std::filesystem::path& path);

// Utterance-weighted mean of a metric over a model's rows.
struct ModelAggregate {
  std::string model;
  ModelType type = ModelType::none;
  std::map<Metric, double> values;
};
std::vector<ModelAggregate> aggregate_by_model(const MetricTable& table);

struct QuartileRule {
  std::vector<Metric> reference_free{Metric::mos, Metric::dnsmos, Metric::nisqa};
  Metric fidelity = Metric::lps;
  double fraction = 0.25;
};

// A model is flagged when it sits in the top quartile of at least one
// reference-free metric and in the bottom quartile of the fidelity metric.
// Quartiles are rank-based over processed models: k = max(1, floor(n*fraction))
// and a model is in the top (bottom) quartile when fewer than k models are
// strictly better (worse). Ties therefore resolve toward flagging.
std::set<std::string> hallucination_flags(const MetricTable& table,
                                          const QuartileRule& rule = {});

}  // namespace p808
