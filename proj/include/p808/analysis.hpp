#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "p808/campaign.hpp"

namespace p808 {

struct ReliabilityRules {
  bool trapping_must_match = true;
  int gold_tolerance = 1;
  // Fraction of each clip that must have been played, when telemetry exists.
  double min_listen_fraction = 1.0;

  void validate() const;
};

struct Decision {
  std::string session_id;
  std::string worker;
  bool accepted = false;
  std::vector<std::string> reasons;  // "trapping", "gold", "playback"
  int pass = 0;
};

// Pure evaluation of a submitted rating session.
Decision evaluate_session(const Campaign& campaign, const Session& session,
                          const ReliabilityRules& rules);

// Evaluates and commits; the session's votes take the decision's status.
Decision check_session(Campaign& campaign, const std::string& session_id,
                       const ReliabilityRules& rules);

// One analysis pass over every submitted, undecided rating session, in
// session order. Returns the decisions made (empty if nothing was pending).
std::vector<Decision> analyze(Campaign& campaign, const ReliabilityRules& rules);

// All decisions recorded so far, in session order.
std::vector<Decision> decision_log(const Campaign& campaign);

struct RateFilter {
  std::optional<int> round;
  std::optional<std::string> worker;
};

double acceptance_rate(const Campaign& campaign, const RateFilter& filter = {});

struct MosResult {
  std::string group;
  double mean = 0.0;
  double ci95_halfwidth = 0.0;
  int n = 0;
  // n == 1: no spread estimate, halfwidth reported as 0.
  bool degenerate = false;
};

inline constexpr double kZ95 = 1.96;

// Mean and normal-approximation 95% CI half-width 1.96*s/sqrt(n), s being the
// sample standard deviation.
MosResult group_stats(std::span<const double> scores, std::string group = {});

MosResult clip_mos(const Campaign& campaign, const std::string& clip_id);

// Per-clip MOS for every clip that has enough accepted votes.
std::vector<MosResult> clip_mos_table(const Campaign& campaign);

struct CampaignStatus {
  std::string campaign;
  int clips_total = 0;
  int clips_complete = 0;
  std::optional<double> acceptance_rate;
  int round = 0;
  int sessions_open = 0;
  int sessions_submitted = 0;
  int sessions_accepted = 0;
  int sessions_rejected = 0;
  int votes_pending = 0;
  int votes_accepted = 0;
  int votes_rejected = 0;
  int workers = 0;
  int workers_excluded = 0;
  std::uint64_t last_seq = 0;

  friend bool operator==(const CampaignStatus&, const CampaignStatus&) = default;
};

CampaignStatus campaign_status(const Campaign& campaign);
nlohmann::json to_json(const CampaignStatus& s);

// Columnar text outputs of `analyze`.
std::string format_decision_log(const std::vector<Decision>& decisions);
std::string format_clip_mos(const Campaign& campaign,
                            const std::vector<MosResult>& rows);

}  // namespace p808
