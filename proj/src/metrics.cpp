#include "p808/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "p808/error.hpp"
#include "p808/wav.hpp"

namespace p808 {

PhoneSequence PhoneSequence::parse(std::string_view phones,
                                   std::string language) {
  PhoneSequence seq;
  seq.language = std::move(language);
  std::istringstream in{std::string(phones)};
  for (std::string tok; in >> tok;) seq.tokens.push_back(std::move(tok));
  return seq;
}

std::size_t levenshtein(const PhoneSequence& a, const PhoneSequence& b) {
  const auto& s = a.tokens.size() >= b.tokens.size() ? a.tokens : b.tokens;
  const auto& t = a.tokens.size() >= b.tokens.size() ? b.tokens : a.tokens;
  // One row over the shorter sequence.
  std::vector<std::size_t> row(t.size() + 1);
  for (std::size_t j = 0; j <= t.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= s.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= t.size(); ++j) {
      const std::size_t up = row[j];
      const std::size_t sub = diag + (s[i - 1] == t[j - 1] ? 0 : 1);
      row[j] = std::min({up + 1, row[j - 1] + 1, sub});
      diag = up;
    }
  }
  return row[t.size()];
}

double lpd(const PhoneSequence& ref, const PhoneSequence& hyp) {
  if (ref.tokens.empty()) throw InvalidArgument("empty reference phone sequence");
  const double d = static_cast<double>(levenshtein(ref, hyp)) /
                   static_cast<double>(ref.tokens.size());
  return std::min(d, 1.0);
}

double lps(const PhoneSequence& ref, const PhoneSequence& hyp) {
  return 1.0 - lpd(ref, hyp);
}

PhoneFile parse_phone_file(std::string_view text, std::string language) {
  PhoneFile out;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw ParseError("phone file line " + std::to_string(line_no) +
                       ": expected utterance-id<TAB>phones");
    }
    auto id = line.substr(0, tab);
    if (!out.emplace(id, PhoneSequence::parse(line.substr(tab + 1), language))
             .second) {
      throw ParseError("phone file line " + std::to_string(line_no) +
                       ": duplicate utterance " + id);
    }
  }
  return out;
}

PhoneFile read_phone_file(const std::filesystem::path& path,
                          std::string language) {
  return parse_phone_file(read_file(path), std::move(language));
}

std::vector<UtteranceLps> lps_per_utterance(const PhoneFile& ref,
                                            const PhoneFile& hyp) {
  std::vector<UtteranceLps> out;
  std::vector<std::string> orphans;
  for (const auto& [id, r] : ref) {
    auto it = hyp.find(id);
    if (it == hyp.end()) {
      orphans.push_back(id);
      continue;
    }
    out.push_back({id, lps(r, it->second)});
  }
  for (const auto& [id, h] : hyp) {
    if (!ref.count(id)) orphans.push_back(id);
  }
  if (!orphans.empty()) {
    std::string msg = "phone files do not cover the same utterances:";
    for (const auto& o : orphans) msg += " " + o;
    throw JoinError(msg, orphans);
  }
  return out;
}

std::string metric_name(Metric m) {
  switch (m) {
    case Metric::mos: return "MOS";
    case Metric::pesq: return "PESQ";
    case Metric::dnsmos: return "DNSMOS";
    case Metric::nisqa: return "NISQA";
    case Metric::estoi: return "ESTOI";
    case Metric::lps: return "LPS";
  }
  return "?";
}

std::optional<Metric> parse_metric(std::string_view name) {
  for (Metric m : kAllMetrics) {
    if (metric_name(m) == name) return m;
  }
  return std::nullopt;
}

char type_code(ModelType t) {
  switch (t) {
    case ModelType::discriminative: return 'D';
    case ModelType::generative: return 'G';
    case ModelType::hybrid: return 'H';
    case ModelType::uncategorized: return 'U';
    case ModelType::none: return '-';
  }
  return '?';
}

ModelType parse_model_type(std::string_view code) {
  if (code == "D") return ModelType::discriminative;
  if (code == "G") return ModelType::generative;
  if (code == "H") return ModelType::hybrid;
  if (code == "U") return ModelType::uncategorized;
  if (code == "-" || code.empty()) return ModelType::none;
  throw ParseError("model type must be one of D, G, H, U or -, got \"" +
                   std::string(code) + "\"");
}

const MetricValue* MetricRow::find(Metric m) const {
  auto it = values.find(m);
  return it == values.end() ? nullptr : &it->second;
}

bool is_unprocessed(const MetricRow& row) {
  return row.model == kUnprocessedModel;
}

std::set<std::string> MetricTable::models() const {
  std::set<std::string> out;
  for (const auto& r : rows) out.insert(r.model);
  return out;
}

void MetricTable::validate() const {
  for (const auto& r : rows) {
    if (r.utterances < 1) {
      throw InvalidArgument("row " + r.model + "/" + r.language +
                            " has no utterances");
    }
    for (const auto& [m, v] : r.values) {
      if (!std::isfinite(v.mean)) {
        throw InvalidArgument("non-finite " + metric_name(m) + " in row " +
                              r.model + "/" + r.language);
      }
      const bool unit = m == Metric::lps || m == Metric::estoi;
      if (unit && (v.mean < 0.0 || v.mean > 1.0)) {
        throw InvalidArgument(metric_name(m) + " out of [0,1] in row " +
                              r.model + "/" + r.language);
      }
      if (m == Metric::mos && (v.mean < 1.0 || v.mean > 5.0)) {
        throw InvalidArgument("MOS out of [1,5] in row " + r.model + "/" +
                              r.language);
      }
    }
  }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string full_precision(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& cell, int line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw ParseError("metric CSV line " + std::to_string(line) +
                     ": not a number: \"" + cell + "\"");
  }
}

}  // namespace

std::string write_metric_csv(const MetricTable& table) {
  std::set<Metric> present;
  std::set<Metric> with_sd;
  for (const auto& r : table.rows) {
    for (const auto& [m, v] : r.values) {
      present.insert(m);
      if (v.sd) with_sd.insert(m);
    }
  }
  std::string out;
  std::string prov;
  for (const auto& [m, p] : table.provenance) {
    if (p == Provenance::computed) prov += " " + metric_name(m) + "=computed";
  }
  if (!prov.empty()) out += "# provenance:" + prov + "\n";
  out += "model,type,language,n";
  for (Metric m : kAllMetrics) {
    if (present.count(m)) out += "," + metric_name(m);
  }
  for (Metric m : kAllMetrics) {
    if (with_sd.count(m)) out += "," + metric_name(m) + "_sd";
  }
  out += "\n";
  for (const auto& r : table.rows) {
    out += r.model + "," + type_code(r.type) + "," + r.language + "," +
           std::to_string(r.utterances);
    for (Metric m : kAllMetrics) {
      if (!present.count(m)) continue;
      const auto* v = r.find(m);
      out += "," + (v ? full_precision(v->mean) : std::string());
    }
    for (Metric m : kAllMetrics) {
      if (!with_sd.count(m)) continue;
      const auto* v = r.find(m);
      out += "," + (v && v->sd ? full_precision(*v->sd) : std::string());
    }
    out += "\n";
  }
  return out;
}

MetricTable read_metric_csv(std::string_view text) {
  MetricTable table;
  std::istringstream in{std::string(text)};
  std::string line;
  std::vector<std::string> header;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string tag = "# provenance:";
      if (line.rfind(tag, 0) == 0) {
        std::istringstream p(line.substr(tag.size()));
        for (std::string item; p >> item;) {
          const auto eq = item.find('=');
          auto m = parse_metric(item.substr(0, eq));
          if (!m || eq == std::string::npos) {
            throw ParseError("bad provenance entry \"" + item + "\"");
          }
          const auto what = item.substr(eq + 1);
          if (what != "computed" && what != "ingested") {
            throw ParseError("bad provenance entry \"" + item + "\"");
          }
          table.provenance[*m] =
              what == "computed" ? Provenance::computed : Provenance::ingested;
        }
      }
      continue;
    }
    const auto cells = split_csv(line);
    if (header.empty()) {
      header = cells;
      for (const char* required : {"model", "type", "language"}) {
        if (std::find(header.begin(), header.end(), required) == header.end()) {
          throw ParseError(std::string("metric CSV header lacks column ") +
                           required);
        }
      }
      for (const auto& h : header) {
        if (h == "model" || h == "type" || h == "language" || h == "n") continue;
        const std::string base =
            h.size() > 3 && h.ends_with("_sd") ? h.substr(0, h.size() - 3) : h;
        if (!parse_metric(base)) {
          throw ParseError("metric CSV has unknown column \"" + h + "\"");
        }
      }
      continue;
    }
    if (cells.size() > header.size()) {
      throw ParseError("metric CSV line " + std::to_string(line_no) +
                       " has too many cells");
    }
    MetricRow row;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto& h = header[i];
      const auto& c = cells[i];
      if (h == "model") {
        row.model = c;
      } else if (h == "type") {
        row.type = parse_model_type(c);
      } else if (h == "language") {
        row.language = c;
      } else if (h == "n") {
        if (!c.empty()) row.utterances = static_cast<int>(parse_double(c, line_no));
      } else if (!c.empty()) {
        if (h.ends_with("_sd")) {
          row.values[*parse_metric(h.substr(0, h.size() - 3))].sd =
              parse_double(c, line_no);
        } else {
          row.values[*parse_metric(h)].mean = parse_double(c, line_no);
        }
      }
    }
    if (row.model.empty()) {
      throw ParseError("metric CSV line " + std::to_string(line_no) +
                       ": empty model");
    }
    table.rows.push_back(std::move(row));
  }
  if (header.empty()) throw ParseError("metric CSV is empty");
  for (const auto& r : table.rows) {
    for (const auto& [m, v] : r.values) table.provenance.try_emplace(m, Provenance::ingested);
  }
  table.validate();
  return table;
}

MetricTable load_metric_csv(const std::filesystem::path& path) {
  return read_metric_csv(read_file(path));
}

std::vector<ModelAggregate> aggregate_by_model(const MetricTable& table) {
  std::map<std::string, ModelAggregate> aggs;
  std::map<std::string, std::map<Metric, std::pair<double, double>>> sums;
  std::vector<std::string> order;
  for (const auto& r : table.rows) {
    auto [it, fresh] = aggs.try_emplace(r.model);
    if (fresh) {
      it->second.model = r.model;
      it->second.type = r.type;
      order.push_back(r.model);
    }
    for (const auto& [m, v] : r.values) {
      auto& [num, den] = sums[r.model][m];
      num += v.mean * r.utterances;
      den += r.utterances;
    }
  }
  std::vector<ModelAggregate> out;
  for (const auto& model : order) {
    ModelAggregate a = aggs[model];
    for (const auto& [m, nd] : sums[model]) a.values[m] = nd.first / nd.second;
    out.push_back(std::move(a));
  }
  return out;
}

std::set<std::string> hallucination_flags(const MetricTable& table,
                                          const QuartileRule& rule) {
  std::vector<ModelAggregate> models;
  for (auto& a : aggregate_by_model(table)) {
    if (a.model != kUnprocessedModel) models.push_back(std::move(a));
  }
  if (models.size() < 4) {
    throw SchemaError("hallucination flags need at least 4 processed models, "
                      "table has " + std::to_string(models.size()),
                      {});
  }
  std::vector<Metric> needed = rule.reference_free;
  needed.push_back(rule.fidelity);
  std::vector<std::string> missing;
  for (const auto& a : models) {
    for (Metric m : needed) {
      if (!a.values.count(m)) missing.push_back(a.model + ":" + metric_name(m));
    }
  }
  if (!missing.empty()) {
    std::string msg = "metric table lacks required values:";
    for (const auto& k : missing) msg += " " + k;
    throw SchemaError(msg, missing);
  }

  const std::size_t n = models.size();
  const std::size_t k =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(n * rule.fraction)));
  auto count_if_value = [&](Metric m, auto pred) {
    std::vector<std::size_t> counts(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (pred(models[j].values.at(m), models[i].values.at(m))) ++counts[i];
      }
    }
    return counts;
  };

  std::vector<bool> top(n, false);
  for (Metric m : rule.reference_free) {
    const auto better = count_if_value(m, [](double other, double mine) {
      return other > mine;
    });
    for (std::size_t i = 0; i < n; ++i) top[i] = top[i] || better[i] < k;
  }
  const auto worse = count_if_value(rule.fidelity, [](double other, double mine) {
    return other < mine;
  });

  std::set<std::string> flagged;
  for (std::size_t i = 0; i < n; ++i) {
    if (top[i] && worse[i] < k) flagged.insert(models[i].model);
  }
  return flagged;
}

}  // namespace p808
