#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "campaign_fixture.hpp"
#include "p808/error.hpp"

using namespace p808;
using namespace p808::testing;

namespace {

int fixed3(const Clip&) { return 3; }

// Pressure of every rating clip recounted from votes and open sessions.
std::map<std::string, int> recount_pressure(const Campaign& c) {
  std::map<std::string, int> p;
  for (const auto& id : c.clip_ids(ClipRole::rating)) p[id] = 0;
  for (const auto& v : c.votes()) {
    if (v.status != VoteStatus::rejected && p.count(v.clip)) ++p[v.clip];
  }
  for (const auto& [id, s] : c.sessions()) {
    if (s.phase != Phase::rating || s.status != SessionStatus::open) continue;
    for (const auto& clip : s.clips) {
      if (p.count(clip)) ++p[clip];
    }
  }
  return p;
}

std::set<std::string> rated_by(const Campaign& c, const std::string& worker) {
  std::set<std::string> out;
  for (const auto& [id, s] : c.sessions()) {
    if (s.worker == worker && s.phase == Phase::rating) {
      for (const auto& clip : rating_clips_of(c, s)) out.insert(clip);
    }
  }
  return out;
}

}  // namespace

TEST(Config, RequiredVotesFollowDefaults) {
  auto c = small_campaign(150);
  EXPECT_EQ(c.required_votes_total(), 1200);
  EXPECT_EQ(c.resubmission_pool().size(), 150u);
  EXPECT_EQ(c.config().ratings_per_clip, 8);
  EXPECT_EQ(c.config().block_size, 10);
}

TEST(Config, GoldMustCoverBothExtremes) {
  auto sets = synthetic_clip_sets("en", 20);
  for (auto& g : sets.gold) g.expected_answer = 5;
  EXPECT_THROW(Campaign::create(small_config(), sets), ConfigurationError);
}

TEST(Config, MixedLanguagesRejected) {
  auto sets = synthetic_clip_sets("en", 20);
  sets.rating[3].language = "de";
  EXPECT_THROW(Campaign::create(small_config(), sets), ConfigurationError);
}

TEST(Config, InvalidValues) {
  auto bad = small_config();
  bad.ratings_per_clip = 7;
  EXPECT_THROW(bad.validate(), ConfigurationError);
  bad = small_config();
  bad.id = "has space";
  EXPECT_THROW(bad.validate(), ConfigurationError);
  bad = small_config();
  bad.language = "";
  EXPECT_THROW(bad.validate(), ConfigurationError);
  EXPECT_THROW(Campaign::create(small_config(30), synthetic_clip_sets("en", 20)),
               ConfigurationError);
}

TEST(Config, JsonRoundTrip) {
  auto c = small_config(7, 9);
  c.worker_rejection_exclusion_threshold = 0.3;
  const auto back = config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Phases, NewWorkerStartsWithQualification) {
  auto c = small_campaign(20);
  EXPECT_EQ(c.next_phase("w"), Phase::qualification);
  const Session& s = c.next_session("w");
  EXPECT_EQ(s.phase, Phase::qualification);
  EXPECT_FALSE(s.clips.empty());
  EXPECT_EQ(c.next_session("w").id, s.id);
}

TEST(Phases, OrderAndIntervals) {
  auto c = small_campaign(60);
  complete_phase_session(c, c.next_session("w"));
  EXPECT_EQ(c.next_phase("w"), Phase::setup);
  complete_phase_session(c, c.next_session("w"));
  EXPECT_EQ(c.next_phase("w"), Phase::training);
  complete_phase_session(c, c.next_session("w"));
  EXPECT_EQ(c.next_phase("w"), Phase::rating);
  for (int i = 0; i < 5; ++i) rate_block(c, "w", fixed3);
  const WorkerState* w = c.find_worker("w");
  ASSERT_NE(w, nullptr);
  EXPECT_EQ(w->sessions_completed, 5);
  EXPECT_EQ(w->last_setup_session_index, 0);
  EXPECT_EQ(c.next_phase("w"), Phase::setup);
}

TEST(Phases, FailedQualificationIsRetried) {
  auto c = small_campaign(20);
  const std::string sid = c.next_session("w").id;
  EXPECT_FALSE(c.submit_qualification(sid, QualificationResponse{}));
  EXPECT_EQ(c.next_phase("w"), Phase::qualification);
  EXPECT_NE(c.next_session("w").id, sid);
}

TEST(Phases, RatingBeforeQualificationRefused) {
  auto c = small_campaign(20);
  EXPECT_THROW(c.assemble_session("w"), InvalidArgument);
}

TEST(Assemble, TwelvePresentationsWithOneGoldOneTrap) {
  auto c = small_campaign(150);
  advance_to_rating(c, "w");
  const Session& s = c.next_session("w");
  ASSERT_EQ(s.clips.size(), 12u);
  std::map<ClipRole, int> roles;
  for (const auto& id : s.clips) ++roles[c.clip(id).role];
  EXPECT_EQ(roles[ClipRole::rating], 10);
  EXPECT_EQ(roles[ClipRole::gold], 1);
  EXPECT_EQ(roles[ClipRole::trapping], 1);
  std::set<std::string> distinct(s.clips.begin(), s.clips.end());
  EXPECT_EQ(distinct.size(), 12u);
}

TEST(Assemble, LeastVotedFirstAgainstRecount) {
  auto c = small_campaign(40);
  const std::vector<std::string> workers = {"a", "b", "c", "d", "e", "f"};
  for (int round = 0; round < 3; ++round) {
    std::vector<std::string> open;
    for (const auto& w : workers) {
      advance_to_rating(c, w);
      const auto before = recount_pressure(c);
      const auto already = rated_by(c, w);
      const Session& s = c.next_session(w);
      const auto picked = rating_clips_of(c, s);
      int max_picked = 0;
      for (const auto& id : picked) {
        EXPECT_FALSE(already.count(id));
        max_picked = std::max(max_picked, before.at(id));
      }
      for (const auto& [id, p] : before) {
        if (already.count(id) ||
            std::find(picked.begin(), picked.end(), id) != picked.end()) {
          continue;
        }
        EXPECT_GE(p, max_picked) << id << " was skipped at lower pressure";
      }
      for (const auto& id : picked) {
        EXPECT_EQ(recount_pressure(c).at(id), before.at(id) + 1);
        EXPECT_EQ(c.load(id).pressure(), recount_pressure(c).at(id));
      }
      open.push_back(s.id);
    }
    for (const auto& id : open) {
      const Session& s = c.session(id);
      c.submit_answers(id, answers_for(c, s, fixed3));
    }
    analyze(c, {});
  }
}

TEST(Assemble, ConcurrentSessionsAreDisjoint) {
  auto c = small_campaign(40);
  advance_to_rating(c, "a");
  advance_to_rating(c, "b");
  const auto first = rating_clips_of(c, c.next_session("a"));
  const auto second = rating_clips_of(c, c.next_session("b"));
  std::set<std::string> a(first.begin(), first.end());
  for (const auto& id : second) EXPECT_FALSE(a.count(id));
}

TEST(Assemble, NoWorkOnceWorkerRatedEverything) {
  auto c = small_campaign(20);
  rate_block(c, "w", fixed3);
  rate_block(c, "w", fixed3);
  advance_to_rating(c, "w");
  EXPECT_THROW(c.next_session("w"), NoWorkError);
}

TEST(Submit, CreatesPendingVotes) {
  auto c = small_campaign(20);
  const auto sid = rate_block(c, "w", fixed3);
  int pending = 0;
  for (const auto& v : c.votes()) {
    if (v.session == sid) {
      EXPECT_EQ(v.status, VoteStatus::pending);
      EXPECT_EQ(c.clip(v.clip).role, ClipRole::rating);
      ++pending;
    }
  }
  EXPECT_EQ(pending, 10);
  EXPECT_EQ(c.session(sid).status, SessionStatus::submitted);
}

TEST(Submit, DuplicateIsConflict) {
  auto c = small_campaign(20);
  const auto sid = rate_block(c, "w", fixed3);
  const Session& s = c.session(sid);
  EXPECT_THROW(c.submit_answers(sid, answers_for(c, s, fixed3)), ConflictError);
}

TEST(Submit, MissingAnswerIsIncomplete) {
  auto c = small_campaign(20);
  advance_to_rating(c, "w");
  const Session& s = c.next_session("w");
  auto answers = answers_for(c, s, fixed3);
  answers.pop_back();
  EXPECT_EQ(answers.size(), 11u);
  EXPECT_THROW(c.submit_answers(s.id, answers), IncompleteError);
  auto full = answers_for(c, s, fixed3);
  full[0].score = 6;
  EXPECT_THROW(c.submit_answers(s.id, full), InvalidArgument);
  EXPECT_THROW(c.submit_answers(s.id, answers_for(c, s, fixed3),
                                std::vector<double>(3, 1.0)),
               IncompleteError);
  EXPECT_THROW(c.submit_answers("nope", full), NotFoundError);
}

TEST(Pool, FreshCampaignNeedsEveryClip) {
  auto c = small_campaign(15);
  EXPECT_EQ(c.resubmission_pool(), c.clip_ids(ClipRole::rating));
}

namespace {

// Block size 1 makes each session carry exactly one rating clip.
Campaign three_clip_campaign(int workers, const std::string& rejected_worker,
                             const std::string& rejected_clip) {
  auto c = small_campaign(3, 1);
  for (int w = 0; w < workers; ++w) {
    const std::string id = "w" + std::to_string(w);
    for (int k = 0; k < 3; ++k) {
      advance_to_rating(c, id);
      const Session& s = c.next_session(id);
      const auto rating = rating_clips_of(c, s);
      const bool fail = id == rejected_worker && rating.at(0) == rejected_clip;
      c.submit_answers(s.id, answers_for(c, s, fixed3, !fail));
    }
  }
  analyze(c, {});
  return c;
}

}  // namespace

TEST(Pool, EmptyWhenAllClipsReachQuota) {
  const auto c = three_clip_campaign(8, "", "");
  EXPECT_TRUE(c.resubmission_pool().empty());
  for (const auto& id : c.clip_ids(ClipRole::rating)) {
    EXPECT_EQ(c.load(id).accepted, 8);
  }
}

TEST(Pool, SingleRejectionReturnsThatClip) {
  const auto c = three_clip_campaign(8, "w3", "r0002");
  EXPECT_EQ(c.resubmission_pool(), std::vector<std::string>{"r0002"});
  EXPECT_EQ(c.load("r0002").accepted, 7);
  EXPECT_EQ(c.load("r0002").rejected, 1);
}

TEST(Exclusion, HighRejectionRateExcludes) {
  auto c = small_campaign(60);
  for (int i = 0; i < 3; ++i) rate_block(c, "bad", fixed3, true, false);
  analyze(c, {});
  const WorkerState* w = c.find_worker("bad");
  ASSERT_NE(w, nullptr);
  EXPECT_TRUE(w->excluded);
  EXPECT_EQ(w->sessions_rejected, 3);
  EXPECT_THROW(c.next_session("bad"), ExcludedError);
  EXPECT_THROW(c.next_phase("bad"), ExcludedError);
}

TEST(Exclusion, OccasionalMissTolerated) {
  auto c = small_campaign(60);
  rate_block(c, "ok", fixed3, true, false);
  rate_block(c, "ok", fixed3);
  rate_block(c, "ok", fixed3);
  analyze(c, {});
  EXPECT_FALSE(c.find_worker("ok")->excluded);
  EXPECT_NEAR(c.find_worker("ok")->rejection_rate(), 1.0 / 3.0, 1e-12);
}

TEST(Ledger, ReplayAndSnapshotReproduceState) {
  std::vector<EventRecord> log;
  auto c = small_campaign(30, 10, 8,
                          [&](const EventRecord& e) { log.push_back(e); });
  for (int i = 0; i < 5; ++i) {
    rate_block(c, "w" + std::to_string(i), fixed3, i != 2);
  }
  analyze(c, {});
  advance_to_rating(c, "w9");
  c.next_session("w9");

  ASSERT_EQ(log.size(), c.last_seq());
  for (std::size_t i = 0; i < log.size(); ++i) EXPECT_EQ(log[i].seq, i + 1);
  EXPECT_EQ(log.front().kind, event_kind::campaign_created);

  const auto replayed = Campaign::replay(log);
  EXPECT_EQ(replayed.snapshot(), c.snapshot());
  EXPECT_EQ(campaign_status(replayed), campaign_status(c));

  const auto restored = Campaign::from_snapshot(c.snapshot());
  EXPECT_EQ(restored.snapshot(), c.snapshot());

  std::vector<EventRecord> head(log.begin(), log.begin() + log.size() / 2);
  auto partial = Campaign::replay(head);
  partial.catch_up(log);
  EXPECT_EQ(partial.snapshot(), c.snapshot());

  for (const auto& e : log) {
    EXPECT_EQ(to_json(event_from_json(to_json(e))), to_json(e));
  }
}

TEST(Ledger, GapOrForeignStartRejected) {
  std::vector<EventRecord> log;
  auto c = small_campaign(20, 10, 8,
                          [&](const EventRecord& e) { log.push_back(e); });
  rate_block(c, "w", fixed3);
  auto gap = log;
  gap.erase(gap.begin() + 2);
  EXPECT_THROW(Campaign::replay(gap), ParseError);
  std::vector<EventRecord> headless(log.begin() + 1, log.end());
  EXPECT_THROW(Campaign::replay(headless), ParseError);
}

TEST(Ledger, DecisionsAreIdempotent) {
  auto c = small_campaign(20);
  const auto sid = rate_block(c, "w", fixed3);
  EXPECT_EQ(analyze(c, {}).size(), 1u);
  const auto seq = c.last_seq();
  EXPECT_TRUE(analyze(c, {}).empty());
  c.record_decision(sid, false, {"gold"}, 9);
  EXPECT_EQ(c.last_seq(), seq);
  EXPECT_EQ(c.session(sid).status, SessionStatus::accepted);
}

TEST(Comprehension, KeywordScore) {
  EXPECT_DOUBLE_EQ(comprehension_score("River garden SEVEN", "river garden seven"), 1.0);
  EXPECT_NEAR(comprehension_score("the garden", "river garden seven"), 1.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(comprehension_score("", "river"), 0.0);
}
