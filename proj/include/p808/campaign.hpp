#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "p808/audio.hpp"
#include "p808/random.hpp"

namespace p808 {

enum class Phase { qualification, setup, training, rating };
enum class SessionStatus { open, submitted, accepted, rejected };
enum class VoteStatus { pending, accepted, rejected };

std::string to_string(Phase p);
std::string to_string(ClipRole r);
std::string to_string(SessionStatus s);
std::string to_string(VoteStatus s);
Phase parse_phase(const std::string& s);
ClipRole parse_role(const std::string& s);

struct CampaignConfig {
  std::string id = "campaign";
  std::string language;
  int ratings_per_clip = 8;
  int block_size = 10;
  int training_interval = 5;
  int setup_interval = 5;
  int gold_per_session = 1;
  int trapping_per_session = 1;
  double worker_rejection_exclusion_threshold = 0.5;
  int exclusion_min_sessions = 3;
  std::uint64_t seed = 0;

  // Throws ConfigurationError.
  void validate() const;
};

nlohmann::json to_json(const CampaignConfig& c);
// Missing keys keep their defaults.
CampaignConfig config_from_json(const nlohmann::json& j);

// Setup-role clips are tagged with the screen they belong to.
namespace asset {
inline constexpr const char* comprehension = "qualification.comprehension";
inline constexpr const char* bandwidth = "qualification.bandwidth";
inline constexpr const char* level = "setup.level";
inline constexpr const char* binaural = "setup.binaural";
inline constexpr const char* comparison = "setup.comparison";
}  // namespace asset

struct Clip {
  std::string id;
  ClipRole role = ClipRole::rating;
  std::string path;
  std::string language;
  // Present iff role is gold or trapping.
  std::optional<int> expected_answer;
  std::optional<int> gold_tolerance;
  // Training anchors: the quality level the clip illustrates.
  std::optional<int> reference_score;
  std::string asset;
  // Keywords (comprehension), digits (binaural), or answer (bandwidth).
  std::string expected_text;
  // Reporting metadata, free-form.
  std::string model;
  std::string utterance;

  friend bool operator==(const Clip&, const Clip&) = default;
};

struct QualificationResponse {
  bool hearing_ok = false;
  bool fluent = false;
  std::string comprehension;
  // Bandwidth clip id -> answer.
  std::map<std::string, std::string> bandwidth;
};

struct SetupResponse {
  bool level_confirmed = false;
  std::string binaural_digits;
  // "same" or "different".
  std::string comparison;
};

struct Answer {
  int position = 0;
  int score = 0;
};

struct Session {
  std::string id;
  std::string worker;
  Phase phase = Phase::rating;
  std::vector<std::string> clips;
  std::int64_t created_at = 0;
  std::uint64_t created_seq = 0;
  SessionStatus status = SessionStatus::open;

  // Filled on submission.
  std::vector<int> scores;
  std::optional<std::vector<double>> playback;
  std::optional<QualificationResponse> qualification;
  std::optional<SetupResponse> setup;
  std::optional<bool> phase_passed;

  // Filled on decision (rating sessions only).
  std::vector<std::string> reasons;
  int analysis_pass = 0;
};

struct WorkerState {
  std::string id;
  bool qualification_passed = false;
  std::int64_t qualification_at = 0;
  int sessions_completed = 0;
  int sessions_decided = 0;
  int sessions_rejected = 0;
  std::optional<int> last_setup_session_index;
  std::optional<int> last_training_session_index;
  bool excluded = false;
  std::vector<std::string> history;  // session ids, in order

  double rejection_rate() const {
    return sessions_decided == 0
               ? 0.0
               : static_cast<double>(sessions_rejected) / sessions_decided;
  }
};

struct Vote {
  std::string worker;
  std::string clip;
  int score = 0;
  std::string session;
  VoteStatus status = VoteStatus::pending;
};

struct ClipLoad {
  int accepted = 0;
  int pending = 0;
  int rejected = 0;
  int in_flight = 0;  // assigned in open sessions

  int pressure() const { return accepted + pending + in_flight; }
};

struct EventRecord {
  std::uint64_t seq = 0;
  std::int64_t timestamp = 0;
  std::string kind;
  nlohmann::json payload;
};

nlohmann::json to_json(const EventRecord& e);
EventRecord event_from_json(const nlohmann::json& j);

namespace event_kind {
inline constexpr const char* campaign_created = "campaign-created";
inline constexpr const char* session_assembled = "session-assembled";
inline constexpr const char* answers_submitted = "answers-submitted";
inline constexpr const char* session_decided = "session-decided";
inline constexpr const char* worker_updated = "worker-updated";
}  // namespace event_kind

struct ClipSets {
  std::vector<Clip> rating;
  std::vector<Clip> gold;
  std::vector<Clip> trapping;
  std::vector<Clip> training;
  std::vector<Clip> setup;
};

// Event-sourced campaign state. Every mutation is an EventRecord: commands
// validate, hand the record to the sink (persistence), then fold it into
// memory with apply(). Replaying the records rebuilds identical state.
class Campaign {
 public:
  using EventSink = std::function<void(const EventRecord&)>;
  using Clock = std::function<std::int64_t()>;

  static Campaign create(const CampaignConfig& config, const ClipSets& clips,
                         EventSink sink = {}, Clock clock = {});
  static Campaign replay(const std::vector<EventRecord>& events,
                         EventSink sink = {}, Clock clock = {});
  static Campaign from_snapshot(const nlohmann::json& snapshot,
                                EventSink sink = {}, Clock clock = {});

  nlohmann::json snapshot() const;
  // Folds in the events newer than last_seq(), e.g. the log tail after a
  // snapshot.
  void catch_up(const std::vector<EventRecord>& events);
  void set_sink(EventSink sink) { sink_ = std::move(sink); }
  void set_clock(Clock clock);

  const CampaignConfig& config() const { return config_; }
  const std::string& id() const { return config_.id; }
  std::uint64_t last_seq() const { return seq_; }

  const std::vector<Clip>& clips() const { return clips_; }
  const Clip& clip(const std::string& id) const;
  const Clip* find_clip(const std::string& id) const;
  std::vector<std::string> clip_ids(ClipRole role) const;

  const std::map<std::string, Session>& sessions() const { return sessions_; }
  const Session& session(const std::string& id) const;
  const std::vector<Vote>& votes() const { return votes_; }
  const std::map<std::string, WorkerState>& workers() const {
    return workers_;
  }
  const WorkerState* find_worker(const std::string& id) const;
  const ClipLoad& load(const std::string& clip_id) const;
  const std::optional<std::string>& open_session_of(
      const std::string& worker) const;

  int required_votes_total() const;
  int analysis_passes() const { return analysis_passes_; }

  // Clips whose accepted votes are still below ratings_per_clip.
  std::vector<std::string> resubmission_pool() const;

  Phase next_phase(const std::string& worker) const;

  // The worker's open session if any, otherwise a new one for next_phase().
  const Session& next_session(const std::string& worker);
  const Session& assemble_session(const std::string& worker);
  const Session& open_phase_session(const std::string& worker);

  // Rating and training sessions.
  void submit_answers(const std::string& session_id,
                      const std::vector<Answer>& answers,
                      std::optional<std::vector<double>> playback = {});
  // Returns whether the worker passed.
  bool submit_qualification(const std::string& session_id,
                            const QualificationResponse& response);
  bool submit_setup(const std::string& session_id,
                    const SetupResponse& response);

  // Commits an analysis decision. Re-deciding returns without change.
  void record_decision(const std::string& session_id, bool accepted,
                       const std::vector<std::string>& reasons, int pass);

 private:
  Campaign() = default;

  void emit(const char* kind, nlohmann::json payload);
  void apply(const EventRecord& e);
  void apply_created(const nlohmann::json& p);
  void apply_assembled(const nlohmann::json& p, const EventRecord& e);
  void apply_submitted(const nlohmann::json& p);
  void apply_decided(const nlohmann::json& p);
  void apply_worker(const nlohmann::json& p);

  Session& mutable_session(const std::string& id);
  WorkerState& worker_state(const std::string& id);
  std::string next_session_id() const;
  std::vector<std::string> pick_reliability_clips(const std::string& worker,
                                                  ClipRole role, int count,
                                                  Rng& rng) const;
  void maybe_exclude(const std::string& worker);

  CampaignConfig config_;
  std::vector<Clip> clips_;
  std::map<std::string, std::size_t> clip_index_;
  std::map<std::string, ClipLoad> loads_;
  std::map<std::string, Session> sessions_;
  std::vector<Vote> votes_;
  std::map<std::string, WorkerState> workers_;
  std::map<std::string, std::optional<std::string>> open_sessions_;
  // (worker, clip) pairs that already carry a vote or assignment.
  std::set<std::pair<std::string, std::string>> rated_;
  // worker -> clip -> times presented (gold/trapping rotation)
  std::map<std::string, std::map<std::string, int>> reliability_seen_;
  std::map<std::string, std::vector<std::size_t>> session_votes_;
  std::uint64_t seq_ = 0;
  std::uint64_t session_counter_ = 0;
  int analysis_passes_ = 0;

  EventSink sink_;
  Clock clock_;
};

// Keyword hit fraction of a transcript (case-insensitive whole words).
double comprehension_score(const std::string& transcript,
                           const std::string& keywords);

inline constexpr double kComprehensionPassFraction = 0.8;

}  // namespace p808
