#include "p808/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "p808/error.hpp"

namespace p808 {

void ReliabilityRules::validate() const {
  if (gold_tolerance != 0 && gold_tolerance != 1) {
    throw InvalidArgument("gold tolerance must be 0 or 1");
  }
  if (!(min_listen_fraction > 0.0 && min_listen_fraction <= 1.0)) {
    throw InvalidArgument("min_listen_fraction must be in (0, 1]");
  }
}

Decision evaluate_session(const Campaign& campaign, const Session& session,
                          const ReliabilityRules& rules) {
  rules.validate();
  Decision d;
  d.session_id = session.id;
  d.worker = session.worker;
  bool trapping_failed = false, gold_failed = false, playback_failed = false;
  for (std::size_t i = 0; i < session.clips.size(); ++i) {
    const Clip& c = campaign.clip(session.clips[i]);
    const int answer = session.scores.at(i);
    if (c.role == ClipRole::trapping && rules.trapping_must_match) {
      trapping_failed |= answer != *c.expected_answer;
    } else if (c.role == ClipRole::gold) {
      const int tol = c.gold_tolerance.value_or(rules.gold_tolerance);
      gold_failed |= std::abs(answer - *c.expected_answer) > tol;
    }
    // Sessions without telemetry are judged on gold/trapping only.
    if (session.playback &&
        (*session.playback)[i] < rules.min_listen_fraction - 1e-9) {
      playback_failed = true;
    }
  }
  if (trapping_failed) d.reasons.push_back("trapping");
  if (gold_failed) d.reasons.push_back("gold");
  if (playback_failed) d.reasons.push_back("playback");
  d.accepted = d.reasons.empty();
  return d;
}

Decision check_session(Campaign& campaign, const std::string& session_id,
                       const ReliabilityRules& rules) {
  const Session& s = campaign.session(session_id);
  if (s.status == SessionStatus::accepted ||
      s.status == SessionStatus::rejected) {
    return Decision{s.id, s.worker, s.status == SessionStatus::accepted,
                    s.reasons, s.analysis_pass};
  }
  if (s.phase != Phase::rating || s.status != SessionStatus::submitted) {
    throw InvalidArgument("session " + session_id +
                          " is not a submitted rating session");
  }
  Decision d = evaluate_session(campaign, s, rules);
  d.pass = campaign.analysis_passes() + 1;
  campaign.record_decision(session_id, d.accepted, d.reasons, d.pass);
  return d;
}

std::vector<Decision> analyze(Campaign& campaign, const ReliabilityRules& rules) {
  rules.validate();
  std::vector<std::string> pending;
  for (const auto& [id, s] : campaign.sessions()) {
    if (s.phase == Phase::rating && s.status == SessionStatus::submitted) {
      pending.push_back(id);
    }
  }
  std::vector<Decision> out;
  const int pass = campaign.analysis_passes() + 1;
  for (const auto& id : pending) {
    Decision d = evaluate_session(campaign, campaign.session(id), rules);
    d.pass = pass;
    campaign.record_decision(id, d.accepted, d.reasons, pass);
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<Decision> decision_log(const Campaign& campaign) {
  std::vector<Decision> out;
  for (const auto& [id, s] : campaign.sessions()) {
    if (s.phase != Phase::rating) continue;
    if (s.status != SessionStatus::accepted &&
        s.status != SessionStatus::rejected) {
      continue;
    }
    out.push_back(Decision{id, s.worker, s.status == SessionStatus::accepted,
                           s.reasons, s.analysis_pass});
  }
  return out;
}

double acceptance_rate(const Campaign& campaign, const RateFilter& filter) {
  int decided = 0, accepted = 0;
  for (const auto& d : decision_log(campaign)) {
    if (filter.round && d.pass != *filter.round) continue;
    if (filter.worker && d.worker != *filter.worker) continue;
    ++decided;
    accepted += d.accepted ? 1 : 0;
  }
  if (decided == 0) {
    throw UndefinedRateError("no decided sessions match the filter");
  }
  return static_cast<double>(accepted) / decided;
}

MosResult group_stats(std::span<const double> scores, std::string group) {
  if (scores.empty()) throw InvalidArgument("group_stats of an empty set");
  MosResult r;
  r.group = std::move(group);
  r.n = static_cast<int>(scores.size());
  r.mean = std::accumulate(scores.begin(), scores.end(), 0.0) / r.n;
  if (r.n == 1) {
    r.degenerate = true;
    return r;
  }
  double ss = 0.0;
  for (double s : scores) ss += (s - r.mean) * (s - r.mean);
  const double sd = std::sqrt(ss / (r.n - 1));
  r.ci95_halfwidth = kZ95 * sd / std::sqrt(static_cast<double>(r.n));
  return r;
}

MosResult clip_mos(const Campaign& campaign, const std::string& clip_id) {
  const Clip& c = campaign.clip(clip_id);
  if (c.role != ClipRole::rating) {
    throw InvalidArgument("clip " + clip_id + " is not a rating clip");
  }
  std::vector<double> scores;
  for (const auto& v : campaign.votes()) {
    if (v.clip == clip_id && v.status == VoteStatus::accepted) {
      scores.push_back(v.score);
    }
  }
  const int need = campaign.config().ratings_per_clip;
  if (static_cast<int>(scores.size()) < need) {
    const int shortfall = need - static_cast<int>(scores.size());
    throw InsufficientVotesError(
        "clip " + clip_id + " has " + std::to_string(scores.size()) +
            " accepted votes, " + std::to_string(shortfall) + " short of " +
            std::to_string(need),
        shortfall);
  }
  return group_stats(scores, clip_id);
}

std::vector<MosResult> clip_mos_table(const Campaign& campaign) {
  std::vector<MosResult> out;
  for (const auto& id : campaign.clip_ids(ClipRole::rating)) {
    if (campaign.load(id).accepted >= campaign.config().ratings_per_clip) {
      out.push_back(clip_mos(campaign, id));
    }
  }
  return out;
}

CampaignStatus campaign_status(const Campaign& campaign) {
  CampaignStatus s;
  s.campaign = campaign.id();
  for (const auto& id : campaign.clip_ids(ClipRole::rating)) {
    ++s.clips_total;
    if (campaign.load(id).accepted >= campaign.config().ratings_per_clip) {
      ++s.clips_complete;
    }
  }
  try {
    s.acceptance_rate = acceptance_rate(campaign);
  } catch (const UndefinedRateError&) {
  }
  s.round = campaign.analysis_passes();
  for (const auto& [id, session] : campaign.sessions()) {
    if (session.phase != Phase::rating) continue;
    switch (session.status) {
      case SessionStatus::open: ++s.sessions_open; break;
      case SessionStatus::submitted: ++s.sessions_submitted; break;
      case SessionStatus::accepted: ++s.sessions_accepted; break;
      case SessionStatus::rejected: ++s.sessions_rejected; break;
    }
  }
  for (const auto& v : campaign.votes()) {
    switch (v.status) {
      case VoteStatus::pending: ++s.votes_pending; break;
      case VoteStatus::accepted: ++s.votes_accepted; break;
      case VoteStatus::rejected: ++s.votes_rejected; break;
    }
  }
  for (const auto& [id, w] : campaign.workers()) {
    ++s.workers;
    s.workers_excluded += w.excluded ? 1 : 0;
  }
  s.last_seq = campaign.last_seq();
  return s;
}

nlohmann::json to_json(const CampaignStatus& s) {
  return {{"campaign", s.campaign},
          {"clips_total", s.clips_total},
          {"clips_complete", s.clips_complete},
          {"acceptance_rate", s.acceptance_rate
                                  ? nlohmann::json(*s.acceptance_rate)
                                  : nlohmann::json(nullptr)},
          {"round", s.round},
          {"sessions",
           {{"open", s.sessions_open},
            {"submitted", s.sessions_submitted},
            {"accepted", s.sessions_accepted},
            {"rejected", s.sessions_rejected}}},
          {"votes",
           {{"pending", s.votes_pending},
            {"accepted", s.votes_accepted},
            {"rejected", s.votes_rejected}}},
          {"workers", {{"total", s.workers}, {"excluded", s.workers_excluded}}},
          {"last_seq", s.last_seq}};
}

std::string format_decision_log(const std::vector<Decision>& decisions) {
  std::string out = "session\tworker\tpass\tdecision\treasons\n";
  for (const auto& d : decisions) {
    std::string reasons;
    for (const auto& r : d.reasons) reasons += (reasons.empty() ? "" : ",") + r;
    out += d.session_id + "\t" + d.worker + "\t" + std::to_string(d.pass) +
           "\t" + (d.accepted ? "accepted" : "rejected") + "\t" +
           (reasons.empty() ? "-" : reasons) + "\n";
  }
  return out;
}

std::string format_clip_mos(const Campaign& campaign,
                            const std::vector<MosResult>& rows) {
  std::string out = "clip\tmodel\tlanguage\tutterance\tn\tmos\tci95\n";
  char buf[64];
  for (const auto& r : rows) {
    const Clip& c = campaign.clip(r.group);
    out += c.id + "\t" + (c.model.empty() ? "-" : c.model) + "\t" +
           c.language + "\t" + (c.utterance.empty() ? c.id : c.utterance) +
           "\t" + std::to_string(r.n);
    std::snprintf(buf, sizeof buf, "\t%.17g\t%.17g\n", r.mean, r.ci95_halfwidth);
    out += buf;
  }
  return out;
}

}  // namespace p808
