#include <gtest/gtest.h>

#include <array>
#include <cmath>

#include "campaign_fixture.hpp"
#include "p808/error.hpp"

using namespace p808;
using namespace p808::testing;

namespace {

Clip rating_clip(const std::string& id) {
  Clip c;
  c.id = id;
  c.language = "en";
  return c;
}

struct Run {
  CampaignOutcome outcome;
  ClipSets clips;
  GroundTruth truth;
  std::vector<SimWorker> population;
};

Run run(int honest, int spammers, std::uint64_t seed, double noise_sd = 0.8,
        int clips = 50) {
  auto cfg = small_config();
  cfg.seed = seed;
  auto sets = synthetic_clip_sets("en", clips);
  auto truth = random_truth(sets, seed);
  auto pop = make_population(honest, spammers, seed, noise_sd, 0.9);
  SimOptions opts;
  opts.seed = seed;
  auto outcome = run_campaign(cfg, sets, truth, pop, opts);
  return {std::move(outcome), std::move(sets), std::move(truth), std::move(pop)};
}

bool is_spammer(const std::string& worker) {
  return worker.rfind("spammer", 0) == 0;
}

}  // namespace

TEST(SimulateVote, Examples) {
  const GroundTruth truth = {{"a", 4.0}, {"b", 4.6}};
  EXPECT_EQ(simulate_vote(RaterProfile::honest(1, 0.0), rating_clip("a"), truth), 4);
  EXPECT_EQ(simulate_vote(RaterProfile::biased(1, 1.0, 0.0), rating_clip("b"), truth), 5);
  EXPECT_EQ(simulate_vote(RaterProfile::biased(1, -4.0, 0.0), rating_clip("a"), truth), 1);
  EXPECT_THROW(simulate_vote(RaterProfile::honest(1), rating_clip("zz"), truth),
               InvalidArgument);
}

TEST(SimulateVote, SpammerIsUniform) {
  const GroundTruth truth = {{"a", 4.0}};
  std::array<int, 6> counts{};
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    ++counts.at(simulate_vote(RaterProfile::spammer(9), rating_clip("a"), truth,
                              std::to_string(i)));
  }
  EXPECT_EQ(counts[0], 0);
  for (int s = 1; s <= 5; ++s) {
    EXPECT_NEAR(counts[s] / static_cast<double>(draws), 0.2, 0.015) << s;
  }
}

TEST(SimulateVote, ReliabilityItems) {
  const auto sets = synthetic_clip_sets("en", 10);
  const GroundTruth truth;
  const Clip& trap = sets.trapping.at(1);
  const Clip& gold = sets.gold.at(0);
  for (int i = 0; i < 200; ++i) {
    const auto salt = std::to_string(i);
    EXPECT_EQ(simulate_vote(RaterProfile::honest(3), trap, truth, salt),
              *trap.expected_answer);
    EXPECT_EQ(simulate_vote(RaterProfile::honest(3), gold, truth, salt),
              *gold.expected_answer);
    auto always_fail = RaterProfile::spammer(3, 1.0);
    EXPECT_NE(simulate_vote(always_fail, trap, truth, salt), *trap.expected_answer);
    EXPECT_GT(std::abs(simulate_vote(always_fail, gold, truth, salt) -
                       *gold.expected_answer),
              1);
  }
}

TEST(SimulateVote, Deterministic) {
  const GroundTruth truth = {{"a", 3.3}};
  const auto p = RaterProfile::honest(77);
  EXPECT_EQ(simulate_vote(p, rating_clip("a"), truth, "s1"),
            simulate_vote(p, rating_clip("a"), truth, "s1"));
}

TEST(Profile, Validation) {
  auto p = RaterProfile::honest(1);
  p.noise_sd = -1;
  EXPECT_THROW(p.validate(), InvalidArgument);
  p = RaterProfile::spammer(1);
  p.trap_fail_prob = 1.5;
  EXPECT_THROW(p.validate(), InvalidArgument);
  EXPECT_EQ(RaterProfile::spammer(1).trap_fail_prob, 0.9);
  EXPECT_EQ(RaterProfile::honest(1).trap_fail_prob, 0.0);
  EXPECT_EQ(RaterProfile::honest(1).noise_sd, 0.8);
}

TEST(Campaign, HonestPopulationCompletes) {
  const auto r = run(30, 0, 4);
  EXPECT_GE(r.outcome.rounds, 1);
  EXPECT_LE(r.outcome.rounds, 20);
  for (const auto& id : r.outcome.campaign.clip_ids(ClipRole::rating)) {
    EXPECT_GE(r.outcome.campaign.load(id).accepted, 8);
  }
  EXPECT_EQ(r.outcome.clip_mos.size(), 50u);
  EXPECT_EQ(r.outcome.status.clips_complete, 50);
}

TEST(Campaign, TooFewWorkersIsIncomplete) {
  try {
    run(4, 0, 1);
    FAIL();
  } catch (const IncompleteCampaignError& e) {
    EXPECT_EQ(e.residual_pool().size(), 50u);
  }
}

TEST(Campaign, DeterministicUnderSeeds) {
  std::vector<EventRecord> a, b;
  for (auto* log : {&a, &b}) {
    auto sets = synthetic_clip_sets("en", 30);
    auto cfg = small_config();
    std::int64_t tick = 0;
    auto c = Campaign::create(cfg, sets,
                              [log](const EventRecord& e) { log->push_back(e); },
                              [tick]() mutable { return ++tick; });
    SimOptions opts;
    opts.seed = 5;
    drive_campaign(c, random_truth(sets, 5), make_population(20, 5, 5), opts);
  }
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(to_json(a[i]).dump(), to_json(b[i]).dump()) << i;
  }
  const auto other = run(20, 5, 6, 0.8, 30);
  EXPECT_NE(other.outcome.campaign.last_seq(), 0u);
}

TEST(Recovery, ZeroNoiseWithinQuantization) {
  const auto r = run(30, 0, 2, 0.0);
  const auto err = recovery_error(r.outcome.campaign, r.truth);
  EXPECT_LE(err.rmse, 0.5);
  EXPECT_LE(err.max_abs, 0.5 + 1e-12);
}

TEST(Recovery, NoisyRatersRecoverTruth) {
  const auto r = run(30, 0, 3);
  EXPECT_LE(recovery_error(r.outcome.campaign, r.truth).rmse, 0.35);
}

TEST(Recovery, Errors) {
  const auto r = run(30, 0, 2, 0.0);
  auto truth = r.truth;
  truth.erase(truth.begin());
  EXPECT_THROW(recovery_error(r.outcome.campaign, truth), InvalidArgument);
  auto fresh = small_campaign(20);
  EXPECT_THROW(recovery_error(fresh, random_truth(synthetic_clip_sets("en", 20), 1)),
               InvalidArgument);
  auto sets = synthetic_clip_sets("en", 20);
  auto partial = random_truth(sets, 1);
  partial.erase("r0003");
  EXPECT_THROW(run_campaign(small_config(), sets, partial, make_population(10, 0, 1)),
               InvalidArgument);
}

// Spammer rejection pooled over seeds; a single seed sees only ~20 spammer
// sessions, so one accepted session moves the rate by 5 points.
TEST(Spammers, PooledRejectionAndNoLeakage) {
  int spam_sessions = 0, spam_rejected = 0;
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const auto r = run(30, 10, seed);
    const Campaign& c = r.outcome.campaign;
    int decided = 0, accepted = 0;
    for (const auto& d : r.outcome.decisions) {
      ++decided;
      accepted += d.accepted;
      if (is_spammer(d.worker)) {
        ++spam_sessions;
        spam_rejected += !d.accepted;
      }
    }
    ASSERT_TRUE(r.outcome.acceptance_rate.has_value());
    EXPECT_DOUBLE_EQ(*r.outcome.acceptance_rate,
                     static_cast<double>(accepted) / decided);
    for (const auto& v : c.votes()) {
      const auto status = c.session(v.session).status;
      if (status == SessionStatus::rejected) {
        EXPECT_NE(v.status, VoteStatus::accepted);
      }
      const Session& s = c.session(v.session);
      bool trap_failed = false;
      for (std::size_t i = 0; i < s.clips.size(); ++i) {
        const Clip& clip = c.clip(s.clips[i]);
        if (clip.role == ClipRole::trapping) {
          trap_failed |= s.scores[i] != *clip.expected_answer;
        }
      }
      if (trap_failed) EXPECT_NE(v.status, VoteStatus::accepted);
    }
    EXPECT_LE(recovery_error(c, r.truth).rmse, 0.4) << "seed " << seed;
  }
  ASSERT_GT(spam_sessions, 0);
  EXPECT_GE(static_cast<double>(spam_rejected) / spam_sessions, 0.95)
      << spam_rejected << "/" << spam_sessions;
}

TEST(Scenario, ParseAndReport) {
  const auto j = nlohmann::json::parse(R"({
    "config": {"language": "de-DE", "id": "sc"},
    "rating_clips": 20,
    "seed": 3,
    "truth": {"low": 2.0, "high": 4.0, "seed": 9},
    "population": [{"kind": "honest", "count": 20, "noise_sd": 0.5},
                   {"kind": "spammer", "count": 3},
                   {"kind": "biased", "count": 2, "bias": 0.5}]
  })");
  const auto sc = parse_scenario(j);
  EXPECT_EQ(sc.config.language, "de-DE");
  EXPECT_EQ(sc.clips.rating.size(), 20u);
  EXPECT_EQ(sc.population.size(), 25u);
  for (const auto& [id, t] : sc.truth) {
    EXPECT_GE(t, 2.0);
    EXPECT_LE(t, 4.0);
  }
  const auto outcome =
      run_campaign(sc.config, sc.clips, sc.truth, sc.population, sc.options);
  const auto report = outcome_report(outcome, sc.truth, sc.population);
  EXPECT_EQ(report.at("status"), to_json(outcome.status));
  EXPECT_EQ(report.at("rounds"), outcome.rounds);
  EXPECT_TRUE(report.at("recovery").contains("rmse"));
  EXPECT_TRUE(report.at("by_rater_kind").contains("spammer"));

  EXPECT_THROW(parse_scenario(nlohmann::json::parse(R"({"population": [{"kind": "robot", "count": 1}]})")),
               Error);
}
