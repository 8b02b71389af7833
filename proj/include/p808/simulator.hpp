#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "p808/analysis.hpp"
#include "p808/campaign.hpp"

namespace p808 {

enum class RaterKind { honest, spammer, biased };
std::string to_string(RaterKind k);
RaterKind parse_rater_kind(const std::string& s);

struct RaterProfile {
  RaterKind kind = RaterKind::honest;
  double noise_sd = 0.8;
  double bias = 0.0;
  double trap_fail_prob = 0.0;
  std::uint64_t seed = 0;

  static RaterProfile honest(std::uint64_t seed, double noise_sd = 0.8);
  static RaterProfile spammer(std::uint64_t seed, double trap_fail_prob = 0.9);
  static RaterProfile biased(std::uint64_t seed, double bias,
                             double noise_sd = 0.8);

  void validate() const;
};

// clip id -> true quality in [1, 5]
using GroundTruth = std::map<std::string, double>;

// Deterministic in (profile.seed, clip.id, salt). Rating clips: honest and
// biased raters answer round(clamp(truth + bias + N(0, sd), 1, 5)), spammers
// uniformly. Gold and trapping clips are answered as expected with
// probability 1 - trap_fail_prob; a failed gold answer falls outside the
// clip's tolerance band and a failed trapping answer names another label.
int simulate_vote(const RaterProfile& profile, const Clip& clip,
                  const GroundTruth& truth, const std::string& salt = {});

// Submits passing answers for a qualification, setup or training session.
void complete_phase_session(Campaign& campaign, const Session& session);
// Clears every pending pre-rating phase of `worker`.
void advance_to_rating(Campaign& campaign, const std::string& worker);

struct SimWorker {
  std::string id;
  RaterProfile profile;
};

struct SimOptions {
  int max_rounds = 20;
  ReliabilityRules rules;
  // Seeds the per-round worker order.
  std::uint64_t seed = 0;
};

struct CampaignOutcome {
  Campaign campaign;
  int rounds = 0;
  std::vector<Decision> decisions;
  std::optional<double> acceptance_rate;
  std::vector<MosResult> clip_mos;
  CampaignStatus status;
};

// Drives `campaign` through rounds of assemble -> submit -> analyze until the
// resubmission pool is empty. Each round visits the non-excluded workers in a
// seeded order; a worker first completes any pending qualification, setup or
// training step, then rates one block. Throws IncompleteCampaignError (with
// the residual pool) when a round makes no progress or rounds run out.
// The simulation loop; returns the number of rounds used.
int drive_campaign(Campaign& campaign, const GroundTruth& truth,
                   const std::vector<SimWorker>& population,
                   const SimOptions& options = {});

// Collects the outcome of a campaign that `rounds` rounds brought to
// completion.
CampaignOutcome make_outcome(const Campaign& campaign, int rounds);

CampaignOutcome run_campaign(Campaign campaign, const GroundTruth& truth,
                             const std::vector<SimWorker>& population,
                             const SimOptions& options = {});

CampaignOutcome run_campaign(const CampaignConfig& config, const ClipSets& clips,
                             const GroundTruth& truth,
                             const std::vector<SimWorker>& population,
                             const SimOptions& options = {});

struct RecoveryError {
  double rmse = 0.0;
  double max_abs = 0.0;
};

// Per-clip MOS against raw truth. Requires a complete campaign.
RecoveryError recovery_error(const Campaign& campaign, const GroundTruth& truth);

// Synthetic clip sets sufficient to run a campaign without audio: rating
// clips r0001.., gold at 5 and 1, five trapping clips, five training
// anchors, and one clip per qualification/setup screen.
ClipSets synthetic_clip_sets(const std::string& language, int rating_clips);

// Uniform truth in [low, high] for every rating clip.
GroundTruth random_truth(const ClipSets& clips, std::uint64_t seed,
                         double low = 1.5, double high = 4.5);

std::vector<SimWorker> make_population(int honest, int spammers,
                                       std::uint64_t seed,
                                       double noise_sd = 0.8,
                                       double trap_fail_prob = 0.9);

// Scenario file (JSON):
//   { "config": {language, ratings_per_clip, block_size, ..., seed},
//     "rating_clips": 50,
//     "truth": {"clip": 3.2, ...} | {"low": 1.5, "high": 4.5, "seed": 1},
//     "population": [{"kind": "honest", "count": 30, "noise_sd": 0.8},
//                    {"kind": "spammer", "count": 10, "trap_fail_prob": 0.9}],
//     "max_rounds": 20, "seed": 7 }
struct Scenario {
  CampaignConfig config;
  ClipSets clips;
  GroundTruth truth;
  std::vector<SimWorker> population;
  SimOptions options;
};

Scenario parse_scenario(const nlohmann::json& j);

// Outcome report: status, rounds, recovery error and per-kind session counts.
nlohmann::json outcome_report(const CampaignOutcome& outcome,
                              const GroundTruth& truth,
                              const std::vector<SimWorker>& population);

}  // namespace p808
