#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "campaign_fixture.hpp"
#include "oracles.hpp"
#include "p808/error.hpp"
#include "p808/report.hpp"
#include "p808/wav.hpp"

using namespace p808;
using namespace p808::testing;

namespace {

const std::string kData = P808_DATA_DIR;

MetricTable fixture() {
  return load_metric_csv(kData + "/fixtures/published_by_language.csv");
}

struct Published {
  std::string model;
  double mos;
};

std::vector<Published> published_overall() {
  std::istringstream in(read_file(kData + "/fixtures/published_overall.csv"));
  std::string line;
  std::getline(in, line);
  std::vector<Published> out;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    out.push_back({cells.at(0), std::stod(cells.at(2))});
  }
  return out;
}

// Expands every fixture row into per-utterance scores whose mean is the row
// value: pairs (v - d, v + d) with d varying by utterance.
std::vector<UtteranceScores> utterances_from(const MetricTable& t, int per_row,
                                             std::vector<Metric> metrics) {
  std::vector<UtteranceScores> out;
  for (const auto& r : t.rows) {
    for (int u = 0; u < per_row; ++u) {
      UtteranceScores s;
      s.key = {r.model, r.language, "u" + std::to_string(u)};
      s.type = r.type;
      const double d = 0.01 * ((u / 2) % 5) * (u % 2 == 0 ? -1 : 1);
      for (Metric m : metrics) {
        if (const auto* v = r.find(m)) s.values[m] = v->mean + d;
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

const ReportCell& cell(const ReportTable& t, const std::string& group,
                       std::size_t col) {
  for (const auto& r : t.rows) {
    if (r.group == group) return r.cells.at(col);
  }
  throw std::runtime_error("no row " + group);
}

ReportSpec spec_of(Grouping g, std::vector<std::string> cols, bool ci = false) {
  ReportSpec s;
  s.grouping = g;
  for (const auto& c : cols) s.columns.push_back(ColumnSpec::parse(c));
  s.ci = ci;
  return s;
}

}  // namespace

TEST(Ingest, FixtureCardinality) {
  const auto table = ingest_results(
      {{}, utterances_from(fixture(), 10, {Metric::mos, Metric::pesq}), {}});
  EXPECT_EQ(table.rows.size(), 56u);
  std::size_t noisy = 0;
  for (const auto& r : table.rows) {
    noisy += is_unprocessed(r);
    EXPECT_EQ(r.utterances, 10);
  }
  EXPECT_EQ(noisy, 4u);
  EXPECT_EQ(table.provenance.at(Metric::mos), Provenance::ingested);
}

TEST(Ingest, MeansAndSampleSd) {
  std::vector<UtteranceScores> rows;
  for (double v : {2.0, 3.0, 4.0}) {
    UtteranceScores s;
    s.key = {"m", "en", "u" + std::to_string(static_cast<int>(v))};
    s.type = ModelType::discriminative;
    s.values[Metric::mos] = v;
    rows.push_back(s);
  }
  const auto t = ingest_results({{}, rows, {}});
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_DOUBLE_EQ(t.rows[0].values.at(Metric::mos).mean, 3.0);
  EXPECT_DOUBLE_EQ(*t.rows[0].values.at(Metric::mos).sd, 1.0);
}

TEST(Ingest, OrphanUtteranceIsJoinError) {
  auto objective = utterances_from(fixture(), 4, {Metric::pesq});
  auto mos = utterances_from(fixture(), 4, {Metric::mos});
  const auto victim = objective[7].key;
  objective.erase(objective.begin() + 7);
  try {
    ingest_results({mos, objective, {}});
    FAIL();
  } catch (const JoinError& e) {
    EXPECT_EQ(e.orphans(), std::vector<std::string>{victim.str()});
    EXPECT_NE(std::string(e.what()).find(victim.str()), std::string::npos);
  }
}

TEST(Ingest, LpsFromPhonesMatchesIngestedColumn) {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> len(1, 8), sym(0, 9), coin(0, 3);
  PhoneSet set;
  set.language = "en";
  std::vector<UtteranceScores> with_lps, without_lps;
  const std::vector<std::string> models = {"A", "B", "C"};
  for (int u = 0; u < 30; ++u) {
    const std::string id = "utt" + std::to_string(u);
    PhoneSequence ref;
    for (int i = len(rng); i > 0; --i) ref.tokens.push_back(std::to_string(sym(rng)));
    set.reference[id] = ref;
    for (const auto& m : models) {
      PhoneSequence hyp;
      for (const auto& t : ref.tokens) {
        if (coin(rng) == 0) continue;
        hyp.tokens.push_back(coin(rng) == 1 ? std::to_string(sym(rng)) : t);
      }
      set.hypotheses[m][id] = hyp;
      const double oracle_lps =
          1.0 - std::min(1.0, static_cast<double>(edit_distance_recursive(
                                  ref.tokens, hyp.tokens)) /
                                  ref.tokens.size());
      UtteranceScores s;
      s.key = {m, "en", id};
      s.type = ModelType::generative;
      s.values[Metric::pesq] = 2.0;
      without_lps.push_back(s);
      s.values[Metric::lps] = oracle_lps;
      with_lps.push_back(s);
    }
  }
  const auto ingested = ingest_results({{}, with_lps, {}});
  const auto computed = ingest_results({{}, without_lps, {set}});
  EXPECT_EQ(ingested.provenance.at(Metric::lps), Provenance::ingested);
  EXPECT_EQ(computed.provenance.at(Metric::lps), Provenance::computed);
  ASSERT_EQ(ingested.rows.size(), computed.rows.size());
  for (std::size_t i = 0; i < ingested.rows.size(); ++i) {
    EXPECT_NEAR(ingested.rows[i].values.at(Metric::lps).mean,
                computed.rows[i].values.at(Metric::lps).mean, 1e-9);
  }
  auto short_set = set;
  short_set.hypotheses["A"].erase("utt3");
  EXPECT_THROW(ingest_results({{}, without_lps, {short_set}}), JoinError);
}

TEST(Ingest, CampaignMosFeedsTable) {
  auto sets = synthetic_clip_sets("en", 20);
  auto truth = random_truth(sets, 2);
  SimOptions opts;
  opts.seed = 2;
  const auto outcome =
      run_campaign(small_config(), sets, truth, make_population(20, 0, 2), opts);
  const auto mos = campaign_mos(outcome.campaign);
  ASSERT_EQ(mos.size(), 20u);
  const auto table = ingest_results({mos, {}, {}});
  ASSERT_EQ(table.rows.size(), 1u);
  EXPECT_EQ(table.rows[0].model, "sim");
  EXPECT_EQ(table.rows[0].utterances, 20);
  EXPECT_EQ(table.provenance.at(Metric::mos), Provenance::computed);
  double sum = 0;
  for (const auto& r : outcome.clip_mos) sum += r.mean;
  EXPECT_NEAR(table.rows[0].values.at(Metric::mos).mean, sum / 20, 1e-12);
}

TEST(UtteranceCsv, RoundTrip) {
  const auto rows = utterances_from(fixture(), 2, {Metric::mos, Metric::lps});
  const auto back = read_utterance_csv(write_utterance_csv(rows));
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].key, rows[i].key);
    EXPECT_EQ(back[i].values, rows[i].values);
  }
}

TEST(Render, OverallMosMatchesPublished) {
  const auto t = compute_table(fixture(), spec_of(Grouping::model, {"MOS"}));
  const auto published = published_overall();
  ASSERT_EQ(published.size(), 14u);
  ASSERT_EQ(t.rows.size(), 14u);
  for (const auto& p : published) {
    EXPECT_NEAR(*cell(t, p.model, 0).mean, p.mos, 0.01 + 1e-9) << p.model;
  }
  EXPECT_NEAR(*cell(t, "1", 0).mean, 3.115, 1e-9);
  EXPECT_NEAR(*cell(t, "13", 0).mean, 3.34, 1e-9);
}

TEST(Render, HybridOrGenerativeRanksFirstPerLanguage) {
  const auto t = compute_table(
      fixture(), spec_of(Grouping::model_type, {"MOS@en", "MOS@de", "MOS@zh", "MOS@ja"}));
  ASSERT_EQ(t.rows.size(), 4u);
  EXPECT_EQ(t.rows.back().group, "All");
  for (std::size_t c = 0; c < 4; ++c) {
    const double hg = *cell(t, "H/G", c).mean;
    EXPECT_GT(hg, *cell(t, "D", c).mean);
    EXPECT_GT(hg, *cell(t, "U", c).mean);
  }
  const auto text = render_text(t);
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.rfind("| H/G", 0) == 0) {
      EXPECT_EQ(std::count(line.begin(), line.end(), '*'), 16) << line;
    }
  }
}

TEST(Render, EqualWeightIdentity) {
  const auto fx = fixture();
  const auto by_model = compute_table(
      fx, spec_of(Grouping::model, {"MOS", "MOS@en", "MOS@de", "MOS@zh", "MOS@ja"}));
  for (const auto& r : by_model.rows) {
    double sum = 0;
    for (std::size_t c = 1; c <= 4; ++c) sum += *r.cells[c].mean;
    EXPECT_NEAR(*r.cells[0].mean, sum / 4, 1e-12) << r.group;
  }
  const auto by_lang = compute_table(fx, spec_of(Grouping::language, {"MOS"}));
  ASSERT_EQ(by_lang.rows.size(), 5u);
  double sum = 0;
  for (std::size_t i = 0; i < 4; ++i) sum += *by_lang.rows[i].cells[0].mean;
  EXPECT_NEAR(*by_lang.rows[4].cells[0].mean, sum / 4, 1e-12);
}

TEST(Render, PermutationInvariance) {
  auto rows = utterances_from(fixture(), 6, {Metric::mos, Metric::lps, Metric::dnsmos,
                                             Metric::nisqa});
  const auto spec = spec_of(Grouping::model, {"MOS", "LPS", "MOS@de"}, true);
  const auto base = compute_table(ingest_results({{}, rows, {}}), spec);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto t = compute_table(ingest_results({{}, rows, {}}), spec);
    for (const auto& r : base.rows) {
      for (std::size_t c = 0; c < r.cells.size(); ++c) {
        EXPECT_NEAR(*cell(t, r.group, c).mean, *r.cells[c].mean, 1e-12);
        EXPECT_NEAR(*cell(t, r.group, c).ci95, *r.cells[c].ci95, 1e-12);
      }
    }
  }
}

TEST(Render, CiFromPooledUtterances) {
  std::vector<UtteranceScores> rows;
  for (int v = 1; v <= 5; ++v) {
    UtteranceScores s;
    s.key = {"m", "en", "u" + std::to_string(v)};
    s.type = ModelType::hybrid;
    s.values[Metric::mos] = v;
    rows.push_back(s);
  }
  const auto t = compute_table(ingest_results({{}, rows, {}}),
                               spec_of(Grouping::model, {"MOS"}, true));
  EXPECT_NEAR(*t.rows[0].cells[0].ci95, 1.386, 0.001);
  EXPECT_EQ(t.rows[0].cells[0].n, 5);
  EXPECT_NE(render_text(t).find("±"), std::string::npos);
}

TEST(Render, TextAndCsvShape) {
  auto spec = spec_of(Grouping::model, {"MOS", "DNSMOS", "NISQA", "LPS"});
  spec.flag_rule = QuartileRule{};
  const auto t = compute_table(fixture(), spec);
  const auto text = render_text(t);
  EXPECT_NE(text.find("**3.13**"), std::string::npos);
  EXPECT_NE(text.find("3.34"), std::string::npos);
  EXPECT_EQ(text.find("**1.91**"), std::string::npos);
  for (const auto& r : t.rows) EXPECT_EQ(r.flagged, r.group == "13");
  const auto csv = render_csv(t);
  EXPECT_EQ(csv.substr(0, csv.find('\n')).find("model,MOS"), 0u);
  EXPECT_NE(csv.find("flagged"), std::string::npos);
}

TEST(Render, Errors) {
  EXPECT_THROW(parse_grouping("speaker"), InvalidArgument);
  EXPECT_EQ(parse_grouping("model-type"), Grouping::model_type);
  EXPECT_THROW(compute_table(fixture(), spec_of(Grouping::model, {"MOS@fr"})),
               SchemaError);
  EXPECT_THROW(compute_table(fixture(), ReportSpec{}), InvalidArgument);
  EXPECT_THROW(ColumnSpec::parse("SDR"), Error);
}

TEST(Job, RunReportWritesTablesAndLosslessCsv) {
  TempDir dir;
  write_file_atomic(dir / "objective.csv",
                    write_utterance_csv(utterances_from(
                        fixture(), 4, {Metric::mos, Metric::dnsmos, Metric::nisqa,
                                       Metric::lps})));
  const auto job = parse_report_job(nlohmann::json::parse(R"({
    "objective": "objective.csv",
    "tables": [
      {"name": "by_model", "grouping": "model", "columns": ["MOS", "LPS"],
       "ci": true, "flags": true},
      {"name": "by_type", "grouping": "model-type", "columns": ["MOS@en", "MOS@de"]}
    ]})"), dir.path());
  const auto written = run_report(job, dir / "out");
  for (const auto* name : {"metrics.csv", "by_model.txt", "by_model.csv",
                           "by_type.txt", "by_type.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / ("out/" + std::string(name)))) << name;
  }
  const auto table = load_job_table(job);
  EXPECT_EQ(load_metric_csv(dir / "out/metrics.csv"), table);
  EXPECT_NE(read_file(dir / "out/by_model.txt").find("*"), std::string::npos);

  EXPECT_THROW(parse_report_job(nlohmann::json::parse(
                   R"({"tables": [{"name": "x", "grouping": "speaker", "columns": ["MOS"]}]})"),
                   dir.path()),
               InvalidArgument);
}
