#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "p808/error.hpp"
#include "p808/metrics.hpp"
#include "p808/wav.hpp"

using namespace p808;

namespace {

PhoneSequence seq(std::string_view s) { return PhoneSequence::parse(s); }

PhoneSequence random_seq(std::mt19937_64& rng, std::size_t min_len,
                         std::size_t max_len, int alphabet = 10) {
  std::uniform_int_distribution<std::size_t> len(min_len, max_len);
  std::uniform_int_distribution<int> sym(0, alphabet - 1);
  PhoneSequence s;
  const auto n = len(rng);
  for (std::size_t i = 0; i < n; ++i) s.tokens.push_back("p" + std::to_string(sym(rng)));
  return s;
}

MetricTable fixture() {
  return load_metric_csv(std::string(P808_DATA_DIR) +
                         "/fixtures/published_by_language.csv");
}

MetricTable toy_table(const std::vector<std::pair<double, double>>& mos_lps) {
  MetricTable t;
  for (std::size_t i = 0; i < mos_lps.size(); ++i) {
    MetricRow r;
    r.model = "m" + std::to_string(i);
    r.type = ModelType::discriminative;
    r.language = "en";
    r.values[Metric::mos] = {mos_lps[i].first, std::nullopt};
    r.values[Metric::dnsmos] = {mos_lps[i].first, std::nullopt};
    r.values[Metric::nisqa] = {mos_lps[i].first, std::nullopt};
    r.values[Metric::lps] = {mos_lps[i].second, std::nullopt};
    t.rows.push_back(r);
  }
  return t;
}

}  // namespace

TEST(Levenshtein, Examples) {
  EXPECT_EQ(levenshtein(seq("k ae t"), seq("k ae t")), 0u);
  EXPECT_EQ(levenshtein(seq("k ae t"), seq("")), 3u);
  EXPECT_EQ(levenshtein(seq("k ae t"), seq("k ao t")), 1u);
  EXPECT_EQ(levenshtein(seq("a b c d"), seq("b c d e")), 2u);
}

TEST(Levenshtein, MatchesExhaustiveOracle) {
  std::mt19937_64 rng(808);
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_seq(rng, 0, 8);
    const auto b = random_seq(rng, 0, 8);
    ASSERT_EQ(levenshtein(a, b),
              p808::testing::edit_distance_recursive(a.tokens, b.tokens));
  }
}

TEST(Levenshtein, MetricAxioms) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 2000; ++i) {
    const auto a = random_seq(rng, 0, 8);
    const auto b = random_seq(rng, 0, 8);
    const auto c = random_seq(rng, 0, 8);
    EXPECT_EQ(levenshtein(a, b), levenshtein(b, a));
    EXPECT_LE(levenshtein(a, c), levenshtein(a, b) + levenshtein(b, c));
    EXPECT_EQ(levenshtein(a, a), 0u);
  }
}

TEST(Lps, Examples) {
  EXPECT_DOUBLE_EQ(lpd(seq("a b c d"), seq("a b c d")), 0.0);
  EXPECT_DOUBLE_EQ(lpd(seq("a b c d"), seq("a b")), 0.5);
  EXPECT_DOUBLE_EQ(lpd(seq("a b"), seq("x y z x y z")), 1.0);
  EXPECT_DOUBLE_EQ(lps(seq("a b c d"), seq("a b c d")), 1.0);
  EXPECT_DOUBLE_EQ(lps(seq("a b c d"), seq("a b")), 0.5);
  EXPECT_DOUBLE_EQ(lps(seq("a b"), seq("x y z x y z")), 0.0);
  EXPECT_THROW(lpd(seq(""), seq("a")), InvalidArgument);
  EXPECT_THROW(lps(seq("  "), seq("a")), InvalidArgument);
}

TEST(Lps, RangeAndIdentity) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_seq(rng, 1, 8);
    const auto b = random_seq(rng, 0, 8);
    const double v = lps(a, b);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_DOUBLE_EQ(lps(a, a), 1.0);
  }
}

TEST(PhoneFile, ParseAndJoin) {
  const auto ref = parse_phone_file("u1\tk ae t\nu2\td ao g\n\n");
  const auto hyp = parse_phone_file("u2\td ao\nu1\tk ae t\n");
  ASSERT_EQ(ref.size(), 2u);
  const auto per = lps_per_utterance(ref, hyp);
  ASSERT_EQ(per.size(), 2u);
  EXPECT_EQ(per[0].utterance, "u1");
  EXPECT_DOUBLE_EQ(per[0].lps, 1.0);
  EXPECT_NEAR(per[1].lps, 2.0 / 3.0, 1e-12);

  const auto partial = parse_phone_file("u1\tk ae t\n");
  try {
    lps_per_utterance(ref, partial);
    FAIL();
  } catch (const JoinError& e) {
    EXPECT_EQ(e.orphans(), std::vector<std::string>{"u2"});
  }
  EXPECT_THROW(parse_phone_file("u1\ta\nu1\tb\n"), ParseError);
  EXPECT_THROW(parse_phone_file("no-tab-here\n"), ParseError);
}

TEST(MetricCsv, RoundTripIsLossless) {
  auto t = fixture();
  t.rows[0].values[Metric::mos].sd = 0.123456789012345;
  t.rows[1].values[Metric::mos].mean = 1.0 + 1.0 / 3.0;
  t.provenance[Metric::mos] = Provenance::computed;
  const auto again = read_metric_csv(write_metric_csv(t));
  EXPECT_EQ(again, t);
}

TEST(MetricCsv, FixtureShape) {
  const auto t = fixture();
  EXPECT_EQ(t.rows.size(), 56u);
  EXPECT_EQ(t.models().size(), 14u);
  EXPECT_NO_THROW(t.validate());
}

TEST(MetricCsv, Errors) {
  EXPECT_THROW(read_metric_csv("model,language,MOS\nx,en,3\n"), ParseError);
  EXPECT_THROW(read_metric_csv("model,type,language,n,MOS\nx,Q,en,1,3\n"), Error);
  auto t = toy_table({{3, 0.5}});
  t.rows[0].values[Metric::lps].mean = 1.5;
  EXPECT_THROW(t.validate(), Error);
  t.rows[0].values[Metric::lps].mean = 0.5;
  t.rows[0].values[Metric::mos].mean = 0.5;
  EXPECT_THROW(t.validate(), Error);
}

TEST(Flags, FixtureFlagsOnlyModel13) {
  EXPECT_EQ(hallucination_flags(fixture()), std::set<std::string>{"13"});
}

TEST(Flags, AgreeingRankingsFlagNothing) {
  const auto t = toy_table({{1.5, 0.2}, {2.0, 0.3}, {2.5, 0.4}, {3.0, 0.5},
                            {3.5, 0.6}, {4.0, 0.7}, {4.5, 0.8}, {4.8, 0.9}});
  EXPECT_TRUE(hallucination_flags(t).empty());
}

TEST(Flags, CrossoverIsFlagged) {
  const auto t = toy_table({{1.5, 0.5}, {2.0, 0.6}, {2.5, 0.7}, {4.5, 0.1}});
  EXPECT_EQ(hallucination_flags(t), std::set<std::string>{"m3"});
}

TEST(Flags, TooFewModelsIsSchemaError) {
  EXPECT_THROW(hallucination_flags(toy_table({{1, 0.1}, {2, 0.2}, {3, 0.3}})),
               SchemaError);
}

TEST(Flags, MissingColumnIsSchemaError) {
  auto t = fixture();
  for (auto& r : t.rows) r.values.erase(Metric::nisqa);
  EXPECT_THROW(hallucination_flags(t), SchemaError);
}

TEST(Flags, NoisyBaselineIgnored) {
  auto t = fixture();
  for (auto& r : t.rows) {
    if (is_unprocessed(r)) {
      r.values[Metric::dnsmos].mean = 5.0;
      r.values[Metric::lps].mean = 0.0;
    }
  }
  EXPECT_EQ(hallucination_flags(t), std::set<std::string>{"13"});
}

// Nonlinear maps act on one row per model, where they preserve model ranks;
// per-language rows are averaged first, so only affine maps are exact there.
TEST(Flags, InvariantUnderMonotoneRescaling) {
  MetricTable collapsed;
  for (const auto& a : aggregate_by_model(fixture())) {
    MetricRow r;
    r.model = a.model;
    r.type = a.type;
    r.language = "all";
    for (const auto& [m, v] : a.values) r.values[m] = {v, std::nullopt};
    collapsed.rows.push_back(r);
  }
  const auto base = hallucination_flags(collapsed);
  EXPECT_EQ(base, std::set<std::string>{"13"});
  const std::vector<double (*)(double)> maps = {
      [](double x) { return 2.0 * x + 1.0; },
      [](double x) { return std::exp(x); },
      [](double x) { return x * x * x; },
      [](double x) { return -1.0 / (x + 1.0); },
  };
  for (Metric m : {Metric::mos, Metric::dnsmos, Metric::nisqa, Metric::lps}) {
    for (auto f : maps) {
      auto t = collapsed;
      for (auto& r : t.rows) r.values[m].mean = f(r.values[m].mean);
      EXPECT_EQ(hallucination_flags(t), base) << metric_name(m);
    }
    auto t = fixture();
    for (auto& r : t.rows) r.values[m].mean = 0.5 * r.values[m].mean + 3.0;
    EXPECT_EQ(hallucination_flags(t), base) << metric_name(m);
  }
}

TEST(Metric, NamesRoundTrip) {
  for (Metric m : kAllMetrics) EXPECT_EQ(parse_metric(metric_name(m)), m);
  EXPECT_FALSE(parse_metric("SDR").has_value());
  for (char c : std::string("DGHU-")) {
    EXPECT_EQ(type_code(parse_model_type(std::string(1, c))), c);
  }
}
