#include "p808/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "p808/analysis.hpp"
#include "p808/error.hpp"
#include "p808/store.hpp"
#include "p808/wav.hpp"

namespace p808 {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string two(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

double to_double(const std::string& cell, int line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used == cell.size()) return v;
  } catch (const std::exception&) {
  }
  throw ParseError("line " + std::to_string(line) + ": not a number: \"" +
                   cell + "\"");
}

std::string join_names(const std::vector<std::string>& names) {
  std::string s;
  for (const auto& n : names) s += " " + n;
  return s;
}

}  // namespace

std::vector<UtteranceScores> read_utterance_csv(std::string_view text) {
  std::vector<UtteranceScores> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  std::vector<std::string> header;
  std::vector<std::optional<Metric>> metric_of;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split_csv(line);
    if (header.empty()) {
      header = cells;
      for (const char* col : {"model", "language", "utterance"}) {
        if (std::find(header.begin(), header.end(), col) == header.end()) {
          throw ParseError(std::string("utterance CSV lacks column ") + col);
        }
      }
      for (const auto& h : header) {
        auto m = parse_metric(h);
        if (!m && h != "model" && h != "type" && h != "language" &&
            h != "utterance") {
          throw ParseError("utterance CSV has unknown column \"" + h + "\"");
        }
        metric_of.push_back(m);
      }
      continue;
    }
    if (cells.size() > header.size()) {
      throw ParseError("utterance CSV line " + std::to_string(line_no) +
                       " has too many cells");
    }
    UtteranceScores row;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto& h = header[i];
      if (h == "model") row.key.model = cells[i];
      else if (h == "language") row.key.language = cells[i];
      else if (h == "utterance") row.key.utterance = cells[i];
      else if (h == "type") row.type = parse_model_type(cells[i]);
      else if (!cells[i].empty()) row.values[*metric_of[i]] = to_double(cells[i], line_no);
    }
    if (row.key.model.empty() || row.key.utterance.empty()) {
      throw ParseError("utterance CSV line " + std::to_string(line_no) +
                       ": empty model or utterance");
    }
    rows.push_back(std::move(row));
  }
  if (header.empty()) throw ParseError("utterance CSV is empty");
  return rows;
}

std::vector<UtteranceScores> load_utterance_csv(const fs::path& path) {
  return read_utterance_csv(read_file(path));
}

std::string write_utterance_csv(const std::vector<UtteranceScores>& rows) {
  std::set<Metric> present;
  for (const auto& r : rows) {
    for (const auto& [m, v] : r.values) present.insert(m);
  }
  std::string out = "model,type,language,utterance";
  for (Metric m : kAllMetrics) {
    if (present.count(m)) out += "," + metric_name(m);
  }
  out += "\n";
  for (const auto& r : rows) {
    out += r.key.model + "," + type_code(r.type) + "," + r.key.language + "," +
           r.key.utterance;
    for (Metric m : kAllMetrics) {
      if (!present.count(m)) continue;
      auto it = r.values.find(m);
      out += "," + (it == r.values.end() ? std::string() : full(it->second));
    }
    out += "\n";
  }
  return out;
}

std::vector<UtteranceScores> campaign_mos(const Campaign& campaign) {
  std::vector<UtteranceScores> out;
  for (const auto& r : clip_mos_table(campaign)) {
    const Clip& c = campaign.clip(r.group);
    if (c.model.empty() || c.utterance.empty()) {
      throw InvalidArgument("rating clip " + c.id +
                            " lacks model/utterance metadata");
    }
    UtteranceScores u;
    u.key = {c.model, c.language, c.utterance};
    u.values[Metric::mos] = r.mean;
    out.push_back(std::move(u));
  }
  return out;
}

MetricTable ingest_results(const IngestInputs& inputs) {
  using Key = UtteranceKey;
  auto index = [](const std::vector<UtteranceScores>& rows, const char* what) {
    std::map<Key, const UtteranceScores*> m;
    for (const auto& r : rows) {
      if (!m.emplace(r.key, &r).second) {
        throw ParseError(std::string("duplicate ") + what + " row " + r.key.str());
      }
    }
    return m;
  };
  const auto mos = index(inputs.mos, "MOS");
  const auto obj = index(inputs.objective, "objective");

  // Keys of the joined sources, in first-appearance order.
  std::vector<Key> order;
  std::map<Key, UtteranceScores> joined;
  std::vector<std::string> orphans;
  auto add = [&](const UtteranceScores& u) {
    auto [it, fresh] = joined.try_emplace(u.key, u);
    if (fresh) {
      order.push_back(u.key);
    } else {
      if (it->second.type == ModelType::none) it->second.type = u.type;
      for (const auto& [m, v] : u.values) it->second.values[m] = v;
    }
  };
  for (const auto& r : inputs.objective) add(r);
  for (const auto& r : inputs.mos) add(r);  // campaign MOS wins over ingested
  if (!mos.empty() && !obj.empty()) {
    for (const auto& [k, r] : mos) {
      if (!obj.count(k)) orphans.push_back(k.str());
    }
    for (const auto& [k, r] : obj) {
      if (!mos.count(k)) orphans.push_back(k.str());
    }
  }

  bool lps_computed = false;
  bool lps_ingested = false;
  std::set<std::pair<std::string, std::string>> phone_covered;
  for (const auto& set : inputs.phones) {
    for (const auto& [model, hyp] : set.hypotheses) {
      phone_covered.insert({model, set.language});
      for (const auto& u : lps_per_utterance(set.reference, hyp)) {
        Key k{model, set.language, u.utterance};
        if (joined.empty() || !joined.count(k)) {
          if (!mos.empty() || !obj.empty()) {
            orphans.push_back(k.str());
            continue;
          }
        }
        UtteranceScores s;
        s.key = k;
        s.values[Metric::lps] = u.lps;
        add(s);
        lps_computed = true;
      }
    }
  }
  if (!phone_covered.empty() && (!mos.empty() || !obj.empty())) {
    for (const auto& set : inputs.phones) {
      for (const auto& [model, hyp] : set.hypotheses) {
        for (const auto& k : order) {
          if (k.model == model && k.language == set.language &&
              !hyp.count(k.utterance)) {
            orphans.push_back(k.str());
          }
        }
      }
    }
  }
  if (!orphans.empty()) {
    std::sort(orphans.begin(), orphans.end());
    orphans.erase(std::unique(orphans.begin(), orphans.end()), orphans.end());
    throw JoinError("sources disagree on utterances:" + join_names(orphans),
                    orphans);
  }
  for (const auto& k : order) {
    if (!phone_covered.count({k.model, k.language}) &&
        joined.at(k).values.count(Metric::lps)) {
      lps_ingested = true;
    }
  }

  // (model, language) groups in first-appearance order.
  std::vector<std::pair<std::string, std::string>> groups;
  std::map<std::pair<std::string, std::string>, std::vector<const UtteranceScores*>>
      members;
  for (const auto& k : order) {
    auto g = std::make_pair(k.model, k.language);
    auto [it, fresh] = members.try_emplace(g);
    if (fresh) groups.push_back(g);
    it->second.push_back(&joined.at(k));
  }

  MetricTable table;
  std::vector<std::string> gaps;
  for (const auto& g : groups) {
    const auto& list = members.at(g);
    MetricRow row;
    row.model = g.first;
    row.language = g.second;
    row.utterances = static_cast<int>(list.size());
    std::set<Metric> seen;
    for (const auto* u : list) {
      if (row.type == ModelType::none) row.type = u->type;
      for (const auto& [m, v] : u->values) seen.insert(m);
    }
    for (Metric m : seen) {
      std::vector<double> xs;
      for (const auto* u : list) {
        auto it = u->values.find(m);
        if (it == u->values.end()) {
          gaps.push_back(u->key.str() + ":" + metric_name(m));
        } else {
          xs.push_back(it->second);
        }
      }
      if (xs.size() != list.size()) continue;
      const auto st = group_stats(xs);
      double sd = 0.0;
      if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - st.mean) * (x - st.mean);
        sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
      }
      row.values[m] = {st.mean, sd};
    }
    table.rows.push_back(std::move(row));
  }
  if (!gaps.empty()) {
    throw SchemaError("metric values missing for some utterances:" +
                          join_names(gaps),
                      gaps);
  }
  for (const auto& r : table.rows) {
    for (const auto& [m, v] : r.values) table.provenance[m] = Provenance::ingested;
  }
  if (!mos.empty()) table.provenance[Metric::mos] = Provenance::computed;
  if (lps_computed && !lps_ingested) table.provenance[Metric::lps] = Provenance::computed;
  table.validate();
  return table;
}

std::string to_string(Grouping g) {
  switch (g) {
    case Grouping::language: return "language";
    case Grouping::model_type: return "model-type";
    case Grouping::model: return "model";
  }
  return "?";
}

Grouping parse_grouping(const std::string& s) {
  if (s == "language") return Grouping::language;
  if (s == "model-type") return Grouping::model_type;
  if (s == "model") return Grouping::model;
  throw InvalidArgument("unknown grouping \"" + s +
                        "\" (expected language, model-type or model)");
}

std::string ColumnSpec::label() const {
  return metric_name(metric) + (language ? "@" + *language : "");
}

ColumnSpec ColumnSpec::parse(const std::string& text) {
  const auto at = text.find('@');
  const auto name = text.substr(0, at);
  auto m = parse_metric(name);
  if (!m) throw InvalidArgument("unknown metric \"" + name + "\"");
  ColumnSpec c;
  c.metric = *m;
  if (at != std::string::npos) {
    c.language = text.substr(at + 1);
    if (c.language->empty()) throw InvalidArgument("empty language in \"" + text + "\"");
  }
  return c;
}

namespace {

std::string type_group(ModelType t) {
  switch (t) {
    case ModelType::discriminative: return "D";
    case ModelType::hybrid:
    case ModelType::generative: return "H/G";
    case ModelType::uncategorized: return "U";
    case ModelType::none: return "-";
  }
  return "?";
}

// Pools per-row means and spreads into one utterance-level estimate.
ReportCell pool(const std::vector<const MetricRow*>& rows, const ColumnSpec& col) {
  ReportCell cell;
  double sum = 0.0;
  bool spread_known = true;
  std::vector<std::pair<const MetricRow*, const MetricValue*>> parts;
  for (const auto* r : rows) {
    if (col.language && r->language != *col.language) continue;
    const MetricValue* v = r->find(col.metric);
    if (v == nullptr) continue;
    parts.push_back({r, v});
    sum += v->mean * r->utterances;
    cell.n += r->utterances;
    spread_known &= v->sd.has_value() || r->utterances == 1;
  }
  if (cell.n == 0) return cell;
  const double mean = sum / cell.n;
  cell.mean = mean;
  if (spread_known && cell.n > 1) {
    double ss = 0.0;
    for (const auto& [r, v] : parts) {
      const double sd = v->sd.value_or(0.0);
      ss += (r->utterances - 1) * sd * sd +
            r->utterances * (v->mean - mean) * (v->mean - mean);
    }
    cell.ci95 = kZ95 * std::sqrt(ss / (cell.n - 1)) / std::sqrt(double(cell.n));
  }
  return cell;
}

}  // namespace

ReportTable compute_table(const MetricTable& table, const ReportSpec& spec) {
  if (spec.columns.empty()) throw InvalidArgument("report has no columns");
  std::set<std::string> languages;
  for (const auto& r : table.rows) languages.insert(r.language);
  std::vector<std::string> missing;
  for (const auto& c : spec.columns) {
    bool found = false;
    for (const auto& r : table.rows) {
      found |= r.find(c.metric) && (!c.language || r.language == *c.language);
    }
    if (!found) missing.push_back(c.label());
  }
  if (!missing.empty()) {
    throw SchemaError("metric table lacks requested columns:" + join_names(missing),
                      missing);
  }

  ReportTable out;
  out.spec = spec;
  out.headers.push_back(to_string(spec.grouping));
  for (const auto& c : spec.columns) out.headers.push_back(c.label());

  std::vector<std::string> order;
  std::map<std::string, std::vector<const MetricRow*>> members;
  std::vector<const MetricRow*> processed;
  auto push = [&](const std::string& g, const MetricRow* r) {
    auto [it, fresh] = members.try_emplace(g);
    if (fresh) order.push_back(g);
    it->second.push_back(r);
  };
  for (const auto& r : table.rows) {
    if (!is_unprocessed(r)) processed.push_back(&r);
  }
  switch (spec.grouping) {
    case Grouping::model:
      for (const auto& r : table.rows) push(r.model, &r);
      break;
    case Grouping::language:
      for (const auto* r : processed) push(r->language, r);
      break;
    case Grouping::model_type:
      for (const char* g : {"D", "H/G", "U"}) {
        for (const auto* r : processed) {
          if (type_group(r->type) == g) push(g, r);
        }
      }
      break;
  }

  std::set<std::string> flagged;
  if (spec.flag_rule && spec.grouping == Grouping::model) {
    flagged = hallucination_flags(table, *spec.flag_rule);
  }
  for (const auto& g : order) {
    ReportRow row;
    row.group = g;
    row.unprocessed = spec.grouping == Grouping::model && g == kUnprocessedModel;
    row.flagged = flagged.count(g) > 0;
    for (const auto& c : spec.columns) row.cells.push_back(pool(members.at(g), c));
    out.rows.push_back(std::move(row));
  }
  if (spec.grouping != Grouping::model) {
    ReportRow all;
    all.group = "All";
    all.unprocessed = true;  // not a contender for best
    for (const auto& c : spec.columns) all.cells.push_back(pool(processed, c));
    out.rows.push_back(std::move(all));
  }
  return out;
}

std::string render_text(const ReportTable& t) {
  const std::size_t ncols = t.spec.columns.size();
  std::vector<std::optional<std::string>> best(ncols);
  for (std::size_t c = 0; c < ncols; ++c) {
    std::optional<double> top;
    for (const auto& r : t.rows) {
      if (r.unprocessed || !r.cells[c].mean) continue;
      if (!top || *r.cells[c].mean > *top) top = r.cells[c].mean;
    }
    if (top) best[c] = two(*top);
  }
  const bool flags = t.spec.flag_rule && t.spec.grouping == Grouping::model;

  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> head = t.headers;
  if (flags) head.push_back("flag");
  grid.push_back(head);
  for (const auto& r : t.rows) {
    std::vector<std::string> line{r.group};
    for (std::size_t c = 0; c < ncols; ++c) {
      const auto& cell = r.cells[c];
      if (!cell.mean) {
        line.push_back("-");
        continue;
      }
      std::string v = two(*cell.mean);
      if (!r.unprocessed && best[c] && v == *best[c]) v = "**" + v + "**";
      if (t.spec.ci) v += cell.ci95 ? " ± " + two(*cell.ci95) : " ± -";
      line.push_back(v);
    }
    if (flags) line.push_back(r.flagged ? "*" : "");
    grid.push_back(std::move(line));
  }

  // Width in code points so "±" aligns.
  auto width = [](const std::string& s) {
    return static_cast<std::size_t>(std::count_if(
        s.begin(), s.end(), [](unsigned char ch) { return (ch & 0xC0) != 0x80; }));
  };
  std::vector<std::size_t> w(grid[0].size(), 0);
  for (const auto& line : grid) {
    for (std::size_t i = 0; i < line.size(); ++i) w[i] = std::max(w[i], width(line[i]));
  }
  std::string out;
  auto emit = [&](const std::vector<std::string>& line) {
    out += "|";
    for (std::size_t i = 0; i < line.size(); ++i) {
      out += " " + line[i] + std::string(w[i] - width(line[i]), ' ') + " |";
    }
    out += "\n";
  };
  emit(grid[0]);
  out += "|";
  for (std::size_t i = 0; i < w.size(); ++i) out += std::string(w[i] + 2, '-') + "|";
  out += "\n";
  for (std::size_t i = 1; i < grid.size(); ++i) emit(grid[i]);
  return out;
}

std::string render_csv(const ReportTable& t) {
  std::string out = t.headers[0];
  for (std::size_t c = 1; c < t.headers.size(); ++c) {
    out += "," + t.headers[c];
    if (t.spec.ci) out += "," + t.headers[c] + "_ci95";
  }
  out += ",n";
  const bool flags = t.spec.flag_rule && t.spec.grouping == Grouping::model;
  if (flags) out += ",flagged";
  out += "\n";
  for (const auto& r : t.rows) {
    out += r.group;
    int n = 0;
    for (const auto& cell : r.cells) {
      out += "," + (cell.mean ? full(*cell.mean) : std::string());
      if (t.spec.ci) out += "," + (cell.ci95 ? full(*cell.ci95) : std::string());
      n = std::max(n, cell.n);
    }
    out += "," + std::to_string(n);
    if (flags) out += r.flagged ? ",1" : ",0";
    out += "\n";
  }
  return out;
}

namespace {

QuartileRule rule_from_json(const json& j) {
  QuartileRule rule;
  if (j.is_boolean()) return rule;
  if (j.contains("reference_free")) {
    rule.reference_free.clear();
    for (const auto& m : j.at("reference_free")) {
      rule.reference_free.push_back(ColumnSpec::parse(m.get<std::string>()).metric);
    }
  }
  if (j.contains("fidelity")) {
    rule.fidelity = ColumnSpec::parse(j.at("fidelity").get<std::string>()).metric;
  }
  rule.fraction = j.value("fraction", rule.fraction);
  if (!(rule.fraction > 0.0 && rule.fraction <= 0.5)) {
    throw InvalidArgument("quartile fraction must be in (0, 0.5]");
  }
  return rule;
}

fs::path under(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

ReportJob parse_report_job(const json& j, const fs::path& base) {
  try {
    ReportJob job;
    job.base = base;
    for (const auto& c : j.value("campaigns", json::array())) {
      job.campaigns.push_back(under(base, c.get<std::string>()));
    }
    if (j.contains("objective")) job.objective = under(base, j.at("objective"));
    if (j.contains("metric_table")) job.metric_table = under(base, j.at("metric_table"));
    for (const auto& p : j.value("phones", json::array())) job.phones.push_back(p);
    if (job.metric_table &&
        (job.objective || !job.campaigns.empty() || !job.phones.empty())) {
      throw InvalidArgument("metric_table excludes campaigns/objective/phones");
    }
    for (const auto& t : j.at("tables")) {
      ReportSpec spec;
      spec.name = t.value("name", "table");
      spec.grouping = parse_grouping(t.value("grouping", "model"));
      for (const auto& c : t.at("columns")) {
        spec.columns.push_back(ColumnSpec::parse(c.get<std::string>()));
      }
      spec.ci = t.value("ci", false);
      if (auto f = t.find("flags"); f != t.end() && !(f->is_boolean() && !f->get<bool>())) {
        spec.flag_rule = rule_from_json(*f);
      }
      job.tables.push_back(std::move(spec));
    }
    return job;
  } catch (const json::exception& e) {
    throw ParseError(std::string("report spec: ") + e.what());
  }
}

MetricTable load_job_table(const ReportJob& job) {
  if (job.metric_table) return load_metric_csv(*job.metric_table);
  IngestInputs in;
  for (const auto& dir : job.campaigns) {
    auto rows = campaign_mos(replay_directory(dir));
    in.mos.insert(in.mos.end(), rows.begin(), rows.end());
  }
  if (job.objective) in.objective = load_utterance_csv(*job.objective);
  for (const auto& p : job.phones) {
    PhoneSet set;
    set.language = p.at("language").get<std::string>();
    set.reference = read_phone_file(under(job.base, p.at("reference")), set.language);
    for (const auto& [model, file] : p.at("hypotheses").items()) {
      set.hypotheses[model] =
          read_phone_file(under(job.base, file.get<std::string>()), set.language);
    }
    in.phones.push_back(std::move(set));
  }
  return ingest_results(in);
}

std::vector<fs::path> run_report(const ReportJob& job, const fs::path& out) {
  const MetricTable table = load_job_table(job);
  fs::create_directories(out);
  std::vector<fs::path> written;
  auto put = [&](const fs::path& p, const std::string& text) {
    write_file_atomic(p, text);
    written.push_back(p);
  };
  put(out / "metrics.csv", write_metric_csv(table));
  for (const auto& spec : job.tables) {
    const ReportTable t = compute_table(table, spec);
    put(out / (spec.name + ".txt"), render_text(t));
    put(out / (spec.name + ".csv"), render_csv(t));
  }
  return written;
}

}  // namespace p808
