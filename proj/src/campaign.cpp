#include "p808/campaign.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "p808/error.hpp"

namespace p808 {

using nlohmann::json;

// ---------------------------------------------------------------------------
// enum <-> text

std::string to_string(Phase p) {
  switch (p) {
    case Phase::qualification: return "qualification";
    case Phase::setup: return "setup";
    case Phase::training: return "training";
    case Phase::rating: return "rating";
  }
  return "?";
}

std::string to_string(ClipRole r) {
  switch (r) {
    case ClipRole::rating: return "rating";
    case ClipRole::gold: return "gold";
    case ClipRole::trapping: return "trapping";
    case ClipRole::training: return "training";
    case ClipRole::setup: return "setup";
  }
  return "?";
}

std::string to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::open: return "open";
    case SessionStatus::submitted: return "submitted";
    case SessionStatus::accepted: return "accepted";
    case SessionStatus::rejected: return "rejected";
  }
  return "?";
}

std::string to_string(VoteStatus s) {
  switch (s) {
    case VoteStatus::pending: return "pending";
    case VoteStatus::accepted: return "accepted";
    case VoteStatus::rejected: return "rejected";
  }
  return "?";
}

Phase parse_phase(const std::string& s) {
  for (auto p : {Phase::qualification, Phase::setup, Phase::training,
                 Phase::rating}) {
    if (to_string(p) == s) return p;
  }
  throw ParseError("unknown phase \"" + s + "\"");
}

ClipRole parse_role(const std::string& s) {
  for (auto r : {ClipRole::rating, ClipRole::gold, ClipRole::trapping,
                 ClipRole::training, ClipRole::setup}) {
    if (to_string(r) == s) return r;
  }
  throw ParseError("unknown clip role \"" + s + "\"");
}

namespace {

SessionStatus parse_session_status(const std::string& s) {
  for (auto v : {SessionStatus::open, SessionStatus::submitted,
                 SessionStatus::accepted, SessionStatus::rejected}) {
    if (to_string(v) == s) return v;
  }
  throw ParseError("unknown session status \"" + s + "\"");
}

VoteStatus parse_vote_status(const std::string& s) {
  for (auto v : {VoteStatus::pending, VoteStatus::accepted,
                 VoteStatus::rejected}) {
    if (to_string(v) == s) return v;
  }
  throw ParseError("unknown vote status \"" + s + "\"");
}

template <typename T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> get_opt(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

json config_json(const CampaignConfig& c) {
  return {{"id", c.id},
          {"language", c.language},
          {"ratings_per_clip", c.ratings_per_clip},
          {"block_size", c.block_size},
          {"training_interval", c.training_interval},
          {"setup_interval", c.setup_interval},
          {"gold_per_session", c.gold_per_session},
          {"trapping_per_session", c.trapping_per_session},
          {"worker_rejection_exclusion_threshold",
           c.worker_rejection_exclusion_threshold},
          {"exclusion_min_sessions", c.exclusion_min_sessions},
          {"seed", c.seed}};
}

CampaignConfig config_from(const json& j) {
  CampaignConfig c;
  c.id = j.value("id", c.id);
  c.language = j.value("language", c.language);
  c.ratings_per_clip = j.value("ratings_per_clip", c.ratings_per_clip);
  c.block_size = j.value("block_size", c.block_size);
  c.training_interval = j.value("training_interval", c.training_interval);
  c.setup_interval = j.value("setup_interval", c.setup_interval);
  c.gold_per_session = j.value("gold_per_session", c.gold_per_session);
  c.trapping_per_session =
      j.value("trapping_per_session", c.trapping_per_session);
  c.worker_rejection_exclusion_threshold =
      j.value("worker_rejection_exclusion_threshold",
              c.worker_rejection_exclusion_threshold);
  c.exclusion_min_sessions =
      j.value("exclusion_min_sessions", c.exclusion_min_sessions);
  c.seed = j.value("seed", c.seed);
  return c;
}

json clip_json(const Clip& c) {
  return {{"id", c.id},
          {"role", to_string(c.role)},
          {"path", c.path},
          {"language", c.language},
          {"expected_answer", opt(c.expected_answer)},
          {"gold_tolerance", opt(c.gold_tolerance)},
          {"reference_score", opt(c.reference_score)},
          {"asset", c.asset},
          {"expected_text", c.expected_text},
          {"model", c.model},
          {"utterance", c.utterance}};
}

Clip clip_from(const json& j) {
  Clip c;
  c.id = j.at("id").get<std::string>();
  c.role = parse_role(j.at("role").get<std::string>());
  c.path = j.value("path", "");
  c.language = j.value("language", "");
  c.expected_answer = get_opt<int>(j, "expected_answer");
  c.gold_tolerance = get_opt<int>(j, "gold_tolerance");
  c.reference_score = get_opt<int>(j, "reference_score");
  c.asset = j.value("asset", "");
  c.expected_text = j.value("expected_text", "");
  c.model = j.value("model", "");
  c.utterance = j.value("utterance", "");
  return c;
}

json qualification_json(const QualificationResponse& q) {
  return {{"hearing_ok", q.hearing_ok},
          {"fluent", q.fluent},
          {"comprehension", q.comprehension},
          {"bandwidth", q.bandwidth}};
}

QualificationResponse qualification_from(const json& j) {
  QualificationResponse q;
  q.hearing_ok = j.value("hearing_ok", false);
  q.fluent = j.value("fluent", false);
  q.comprehension = j.value("comprehension", "");
  if (j.contains("bandwidth")) {
    q.bandwidth = j.at("bandwidth").get<std::map<std::string, std::string>>();
  }
  return q;
}

json setup_json(const SetupResponse& s) {
  return {{"level_confirmed", s.level_confirmed},
          {"binaural_digits", s.binaural_digits},
          {"comparison", s.comparison}};
}

SetupResponse setup_from(const json& j) {
  SetupResponse s;
  s.level_confirmed = j.value("level_confirmed", false);
  s.binaural_digits = j.value("binaural_digits", "");
  s.comparison = j.value("comparison", "");
  return s;
}

json session_json(const Session& s) {
  return {{"id", s.id},
          {"worker", s.worker},
          {"phase", to_string(s.phase)},
          {"clips", s.clips},
          {"created_at", s.created_at},
          {"created_seq", s.created_seq},
          {"status", to_string(s.status)},
          {"scores", s.scores},
          {"playback", opt(s.playback)},
          {"qualification", s.qualification
                                ? qualification_json(*s.qualification)
                                : json(nullptr)},
          {"setup", s.setup ? setup_json(*s.setup) : json(nullptr)},
          {"phase_passed", opt(s.phase_passed)},
          {"reasons", s.reasons},
          {"analysis_pass", s.analysis_pass}};
}

Session session_from(const json& j) {
  Session s;
  s.id = j.at("id").get<std::string>();
  s.worker = j.at("worker").get<std::string>();
  s.phase = parse_phase(j.at("phase").get<std::string>());
  s.clips = j.at("clips").get<std::vector<std::string>>();
  s.created_at = j.value("created_at", std::int64_t{0});
  s.created_seq = j.value("created_seq", std::uint64_t{0});
  s.status = parse_session_status(j.value("status", "open"));
  s.scores = j.value("scores", std::vector<int>{});
  s.playback = get_opt<std::vector<double>>(j, "playback");
  if (auto q = j.find("qualification"); q != j.end() && !q->is_null()) {
    s.qualification = qualification_from(*q);
  }
  if (auto st = j.find("setup"); st != j.end() && !st->is_null()) {
    s.setup = setup_from(*st);
  }
  s.phase_passed = get_opt<bool>(j, "phase_passed");
  s.reasons = j.value("reasons", std::vector<std::string>{});
  s.analysis_pass = j.value("analysis_pass", 0);
  return s;
}

json worker_json(const WorkerState& w) {
  return {{"id", w.id},
          {"qualification_passed", w.qualification_passed},
          {"qualification_at", w.qualification_at},
          {"sessions_completed", w.sessions_completed},
          {"sessions_decided", w.sessions_decided},
          {"sessions_rejected", w.sessions_rejected},
          {"last_setup_session_index", opt(w.last_setup_session_index)},
          {"last_training_session_index", opt(w.last_training_session_index)},
          {"excluded", w.excluded},
          {"history", w.history}};
}

WorkerState worker_from(const json& j) {
  WorkerState w;
  w.id = j.at("id").get<std::string>();
  w.qualification_passed = j.value("qualification_passed", false);
  w.qualification_at = j.value("qualification_at", std::int64_t{0});
  w.sessions_completed = j.value("sessions_completed", 0);
  w.sessions_decided = j.value("sessions_decided", 0);
  w.sessions_rejected = j.value("sessions_rejected", 0);
  w.last_setup_session_index = get_opt<int>(j, "last_setup_session_index");
  w.last_training_session_index =
      get_opt<int>(j, "last_training_session_index");
  w.excluded = j.value("excluded", false);
  w.history = j.value("history", std::vector<std::string>{});
  return w;
}

std::string lower_words(const std::string& text) {
  std::string out;
  for (unsigned char c : text) {
    if (c < 0x80 && !std::isalnum(c)) {
      out += ' ';
    } else {
      out += static_cast<char>(c < 0x80 ? std::tolower(c) : c);
    }
  }
  return out;
}

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream in(lower_words(text));
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(w);
  return words;
}

std::string normalize_answer(const std::string& s) {
  std::string out;
  for (const auto& w : split_words(s)) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

}  // namespace

json to_json(const CampaignConfig& c) { return config_json(c); }
CampaignConfig config_from_json(const json& j) { return config_from(j); }

json to_json(const EventRecord& e) {
  return {{"seq", e.seq},
          {"timestamp", e.timestamp},
          {"kind", e.kind},
          {"payload", e.payload}};
}

EventRecord event_from_json(const json& j) {
  EventRecord e;
  e.seq = j.at("seq").get<std::uint64_t>();
  e.timestamp = j.at("timestamp").get<std::int64_t>();
  e.kind = j.at("kind").get<std::string>();
  e.payload = j.at("payload");
  return e;
}

double comprehension_score(const std::string& transcript,
                           const std::string& keywords) {
  const auto wanted = split_words(keywords);
  if (wanted.empty()) return 1.0;
  const auto heard = split_words(transcript);
  const std::set<std::string> heard_set(heard.begin(), heard.end());
  int hits = 0;
  for (const auto& w : wanted) hits += heard_set.count(w) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(wanted.size());
}

void CampaignConfig::validate() const {
  const bool id_ok =
      !id.empty() && std::all_of(id.begin(), id.end(), [](unsigned char ch) {
        return std::isalnum(ch) || ch == '-' || ch == '_';
      });
  if (!id_ok) {
    throw ConfigurationError("campaign id must be non-empty [A-Za-z0-9_-], got \"" +
                             id + "\"");
  }
  if (language.empty()) throw ConfigurationError("campaign language is empty");
  if (ratings_per_clip < 8) {
    throw ConfigurationError("ratings_per_clip must be at least 8, got " +
                             std::to_string(ratings_per_clip));
  }
  if (block_size < 1) throw ConfigurationError("block_size must be >= 1");
  if (training_interval < 1 || setup_interval < 1) {
    throw ConfigurationError("setup/training intervals must be >= 1");
  }
  if (gold_per_session < 0 || trapping_per_session < 0) {
    throw ConfigurationError("gold/trapping counts must be >= 0");
  }
  if (!(worker_rejection_exclusion_threshold >= 0.0 &&
        worker_rejection_exclusion_threshold <= 1.0)) {
    throw ConfigurationError("exclusion threshold must be in [0, 1]");
  }
  if (exclusion_min_sessions < 1) {
    throw ConfigurationError("exclusion_min_sessions must be >= 1");
  }
}

// ---------------------------------------------------------------------------
// construction

Campaign Campaign::create(const CampaignConfig& config, const ClipSets& sets,
                          EventSink sink, Clock clock) {
  config.validate();

  std::vector<Clip> all;
  std::set<std::string> ids;
  auto take = [&](const std::vector<Clip>& list, ClipRole role) {
    for (const auto& c : list) {
      if (c.role != role) {
        throw ConfigurationError("clip " + c.id + " has role " +
                                 to_string(c.role) + ", expected " +
                                 to_string(role));
      }
      if (c.language != config.language) {
        throw ConfigurationError("clip " + c.id + " is in language \"" +
                                 c.language + "\" but the campaign is \"" +
                                 config.language + "\"");
      }
      const bool needs_answer =
          role == ClipRole::gold || role == ClipRole::trapping;
      if (needs_answer != c.expected_answer.has_value()) {
        throw ConfigurationError(
            "clip " + c.id + ": expected answer is required for gold/trapping "
                             "clips and forbidden otherwise");
      }
      if (c.expected_answer && (*c.expected_answer < 1 || *c.expected_answer > 5)) {
        throw ConfigurationError("clip " + c.id + ": expected answer out of 1..5");
      }
      if (c.gold_tolerance && (*c.gold_tolerance < 0 || *c.gold_tolerance > 1)) {
        throw ConfigurationError("clip " + c.id + ": gold tolerance must be 0 or 1");
      }
      if (!ids.insert(c.id).second) {
        throw ConfigurationError("duplicate clip id " + c.id);
      }
      all.push_back(c);
    }
  };
  take(sets.rating, ClipRole::rating);
  take(sets.gold, ClipRole::gold);
  take(sets.trapping, ClipRole::trapping);
  take(sets.training, ClipRole::training);
  take(sets.setup, ClipRole::setup);

  if (sets.rating.empty()) throw ConfigurationError("no rating clips");
  if (static_cast<int>(sets.rating.size()) < config.block_size) {
    throw ConfigurationError("fewer rating clips than block_size");
  }
  bool has_top = false, has_bottom = false;
  for (const auto& g : sets.gold) {
    has_top |= g.expected_answer == 5;
    has_bottom |= g.expected_answer == 1;
  }
  if (config.gold_per_session > 0 && !(has_top && has_bottom)) {
    throw ConfigurationError(
        "gold set must contain both extremes (expected 5 and expected 1)");
  }
  if (config.trapping_per_session > 0 && sets.trapping.empty()) {
    throw ConfigurationError("trapping set is empty");
  }
  std::set<int> anchors;
  for (const auto& t : sets.training) {
    if (t.reference_score) anchors.insert(*t.reference_score);
  }
  if (anchors != std::set<int>{1, 2, 3, 4, 5}) {
    throw ConfigurationError("training set must span all five labels");
  }

  Campaign c;
  c.sink_ = std::move(sink);
  c.set_clock(std::move(clock));
  json clips = json::array();
  for (const auto& clip : all) clips.push_back(clip_json(clip));
  c.emit(event_kind::campaign_created,
         {{"config", config_json(config)}, {"clips", std::move(clips)}});
  return c;
}

Campaign Campaign::replay(const std::vector<EventRecord>& events,
                          EventSink sink, Clock clock) {
  if (events.empty() || events.front().kind != event_kind::campaign_created) {
    throw ParseError("event log must start with campaign-created");
  }
  Campaign c;
  for (const auto& e : events) c.apply(e);
  c.sink_ = std::move(sink);
  c.set_clock(std::move(clock));
  return c;
}

void Campaign::catch_up(const std::vector<EventRecord>& events) {
  for (const auto& e : events) {
    if (e.seq > seq_) apply(e);
  }
}

void Campaign::set_clock(Clock clock) {
  if (clock) {
    clock_ = std::move(clock);
  } else {
    clock_ = [] {
      return std::chrono::duration_cast<std::chrono::milliseconds>(
                 std::chrono::system_clock::now().time_since_epoch())
          .count();
    };
  }
}

// ---------------------------------------------------------------------------
// snapshots

json Campaign::snapshot() const {
  json clips = json::array();
  for (const auto& c : clips_) clips.push_back(clip_json(c));
  json sessions = json::array();
  for (const auto& [id, s] : sessions_) sessions.push_back(session_json(s));
  json votes = json::array();
  for (const auto& v : votes_) {
    votes.push_back({{"worker", v.worker},
                     {"clip", v.clip},
                     {"score", v.score},
                     {"session", v.session},
                     {"status", to_string(v.status)}});
  }
  json workers = json::array();
  for (const auto& [id, w] : workers_) workers.push_back(worker_json(w));
  json loads = json::object();
  for (const auto& [id, l] : loads_) {
    loads[id] = {l.accepted, l.pending, l.rejected, l.in_flight};
  }
  json seen = json::object();
  for (const auto& [w, m] : reliability_seen_) seen[w] = m;
  return {{"seq", seq_},
          {"session_counter", session_counter_},
          {"analysis_passes", analysis_passes_},
          {"config", config_json(config_)},
          {"clips", clips},
          {"sessions", sessions},
          {"votes", votes},
          {"workers", workers},
          {"loads", loads},
          {"reliability_seen", seen}};
}

Campaign Campaign::from_snapshot(const json& snap, EventSink sink,
                                 Clock clock) {
  Campaign c;
  c.seq_ = snap.at("seq").get<std::uint64_t>();
  c.session_counter_ = snap.at("session_counter").get<std::uint64_t>();
  c.analysis_passes_ = snap.at("analysis_passes").get<int>();
  c.config_ = config_from(snap.at("config"));
  for (const auto& cj : snap.at("clips")) {
    c.clip_index_[cj.at("id").get<std::string>()] = c.clips_.size();
    c.clips_.push_back(clip_from(cj));
  }
  for (const auto& sj : snap.at("sessions")) {
    Session s = session_from(sj);
    if (s.status == SessionStatus::open) c.open_sessions_[s.worker] = s.id;
    if (s.phase == Phase::rating) {
      for (const auto& id : s.clips) {
        if (c.clip(id).role == ClipRole::rating) c.rated_.insert({s.worker, id});
      }
    }
    c.sessions_.emplace(s.id, std::move(s));
  }
  for (const auto& vj : snap.at("votes")) {
    Vote v{vj.at("worker").get<std::string>(), vj.at("clip").get<std::string>(),
           vj.at("score").get<int>(), vj.at("session").get<std::string>(),
           parse_vote_status(vj.at("status").get<std::string>())};
    c.session_votes_[v.session].push_back(c.votes_.size());
    c.votes_.push_back(std::move(v));
  }
  for (const auto& wj : snap.at("workers")) {
    WorkerState w = worker_from(wj);
    c.workers_.emplace(w.id, std::move(w));
  }
  for (const auto& [id, l] : snap.at("loads").items()) {
    c.loads_[id] = ClipLoad{l[0].get<int>(), l[1].get<int>(), l[2].get<int>(),
                            l[3].get<int>()};
  }
  for (const auto& [w, m] : snap.at("reliability_seen").items()) {
    c.reliability_seen_[w] = m.get<std::map<std::string, int>>();
  }
  c.sink_ = std::move(sink);
  c.set_clock(std::move(clock));
  return c;
}

// ---------------------------------------------------------------------------
// queries

const Clip* Campaign::find_clip(const std::string& id) const {
  auto it = clip_index_.find(id);
  return it == clip_index_.end() ? nullptr : &clips_[it->second];
}

const Clip& Campaign::clip(const std::string& id) const {
  if (const Clip* c = find_clip(id)) return *c;
  throw NotFoundError("unknown clip " + id);
}

std::vector<std::string> Campaign::clip_ids(ClipRole role) const {
  std::vector<std::string> out;
  for (const auto& c : clips_) {
    if (c.role == role) out.push_back(c.id);
  }
  return out;
}

const Session& Campaign::session(const std::string& id) const {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFoundError("unknown session " + id);
  return it->second;
}

Session& Campaign::mutable_session(const std::string& id) {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFoundError("unknown session " + id);
  return it->second;
}

const WorkerState* Campaign::find_worker(const std::string& id) const {
  auto it = workers_.find(id);
  return it == workers_.end() ? nullptr : &it->second;
}

WorkerState& Campaign::worker_state(const std::string& id) {
  auto [it, fresh] = workers_.try_emplace(id);
  if (fresh) it->second.id = id;
  return it->second;
}

const ClipLoad& Campaign::load(const std::string& clip_id) const {
  static const ClipLoad empty;
  auto it = loads_.find(clip_id);
  return it == loads_.end() ? empty : it->second;
}

const std::optional<std::string>& Campaign::open_session_of(
    const std::string& worker) const {
  static const std::optional<std::string> none;
  auto it = open_sessions_.find(worker);
  return it == open_sessions_.end() ? none : it->second;
}

int Campaign::required_votes_total() const {
  return static_cast<int>(clip_ids(ClipRole::rating).size()) *
         config_.ratings_per_clip;
}

std::vector<std::string> Campaign::resubmission_pool() const {
  std::vector<std::string> pool;
  for (const auto& c : clips_) {
    if (c.role == ClipRole::rating &&
        load(c.id).accepted < config_.ratings_per_clip) {
      pool.push_back(c.id);
    }
  }
  return pool;
}

Phase Campaign::next_phase(const std::string& worker) const {
  const WorkerState* w = find_worker(worker);
  if (w == nullptr) return Phase::qualification;
  if (w->excluded) {
    throw ExcludedError("worker " + worker +
                        " is excluded for a high rejection rate");
  }
  if (!w->qualification_passed) return Phase::qualification;
  const int n = w->sessions_completed;
  if (!w->last_setup_session_index ||
      n - *w->last_setup_session_index >= config_.setup_interval) {
    return Phase::setup;
  }
  if (!w->last_training_session_index ||
      n - *w->last_training_session_index >= config_.training_interval) {
    return Phase::training;
  }
  return Phase::rating;
}

std::string Campaign::next_session_id() const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%06llu",
                static_cast<unsigned long long>(session_counter_ + 1));
  return buf;
}

// ---------------------------------------------------------------------------
// commands

const Session& Campaign::next_session(const std::string& worker) {
  const Phase phase = next_phase(worker);
  if (const auto& open = open_session_of(worker)) return session(*open);
  return phase == Phase::rating ? assemble_session(worker)
                                : open_phase_session(worker);
}

const Session& Campaign::open_phase_session(const std::string& worker) {
  const Phase phase = next_phase(worker);
  if (phase == Phase::rating) {
    throw InvalidArgument("worker " + worker + " is in the rating phase");
  }
  if (open_session_of(worker)) {
    throw ConflictError("worker " + worker + " already has an open session");
  }
  Rng rng(combine_seed(config_.seed,
                       "session:" + std::to_string(session_counter_)));
  std::vector<std::string> picked;
  auto with_prefix = [&](const std::string& prefix) {
    for (const auto& c : clips_) {
      if (c.role == ClipRole::setup && c.asset.rfind(prefix, 0) == 0) {
        picked.push_back(c.id);
      }
    }
  };
  if (phase == Phase::qualification) {
    with_prefix("qualification.");
  } else if (phase == Phase::setup) {
    with_prefix(asset::level);
    with_prefix(asset::binaural);
    std::vector<std::string> comparison;
    for (const auto& c : clips_) {
      if (c.role == ClipRole::setup && c.asset == asset::comparison) {
        comparison.push_back(c.id);
      }
    }
    rng.shuffle(comparison.begin(), comparison.end());
    picked.insert(picked.end(), comparison.begin(), comparison.end());
  } else {
    picked = clip_ids(ClipRole::training);
    rng.shuffle(picked.begin(), picked.end());
  }

  const std::string id = next_session_id();
  emit(event_kind::session_assembled,
       {{"session",
         {{"id", id}, {"worker", worker}, {"phase", to_string(phase)},
          {"clips", picked}}}});
  return session(id);
}

std::vector<std::string> Campaign::pick_reliability_clips(
    const std::string& worker, ClipRole role, int count, Rng& rng) const {
  std::vector<std::string> pool = clip_ids(role);
  if (pool.empty() || count <= 0) return {};
  const auto seen_it = reliability_seen_.find(worker);
  auto seen = [&](const std::string& id) {
    if (seen_it == reliability_seen_.end()) return 0;
    auto it = seen_it->second.find(id);
    return it == seen_it->second.end() ? 0 : it->second;
  };
  rng.shuffle(pool.begin(), pool.end());
  std::stable_sort(pool.begin(), pool.end(),
                   [&](const auto& a, const auto& b) { return seen(a) < seen(b); });
  std::vector<std::string> out;
  for (int i = 0; i < count; ++i) out.push_back(pool[i % pool.size()]);
  return out;
}

const Session& Campaign::assemble_session(const std::string& worker) {
  const Phase phase = next_phase(worker);
  if (phase != Phase::rating) {
    throw InvalidArgument("worker " + worker + " must complete the " +
                          to_string(phase) + " phase first");
  }
  if (open_session_of(worker)) {
    throw ConflictError("worker " + worker + " already has an open session");
  }

  std::vector<std::string> eligible;
  bool any_needed = false;
  for (const auto& c : clips_) {
    if (c.role != ClipRole::rating || rated_.count({worker, c.id})) continue;
    eligible.push_back(c.id);
    any_needed |= load(c.id).pressure() < config_.ratings_per_clip;
  }
  if (!any_needed || static_cast<int>(eligible.size()) < config_.block_size) {
    throw NoWorkError("no rateable clips left for worker " + worker);
  }

  Rng rng(combine_seed(config_.seed,
                       "session:" + std::to_string(session_counter_)));
  rng.shuffle(eligible.begin(), eligible.end());
  std::stable_sort(eligible.begin(), eligible.end(),
                   [&](const auto& a, const auto& b) {
                     return load(a).pressure() < load(b).pressure();
                   });
  std::vector<std::string> items(eligible.begin(),
                                 eligible.begin() + config_.block_size);
  rng.shuffle(items.begin(), items.end());

  // Reliability items never take position 0.
  auto insert_random = [&](const std::string& id) {
    const auto pos = rng.uniform_int(1, static_cast<std::int64_t>(items.size()));
    items.insert(items.begin() + pos, id);
  };
  for (const auto& id : pick_reliability_clips(
           worker, ClipRole::gold, config_.gold_per_session, rng)) {
    insert_random(id);
  }
  for (const auto& id : pick_reliability_clips(
           worker, ClipRole::trapping, config_.trapping_per_session, rng)) {
    insert_random(id);
  }

  const std::string id = next_session_id();
  emit(event_kind::session_assembled,
       {{"session",
         {{"id", id}, {"worker", worker}, {"phase", to_string(Phase::rating)},
          {"clips", items}}}});
  return session(id);
}

void Campaign::submit_answers(const std::string& session_id,
                              const std::vector<Answer>& answers,
                              std::optional<std::vector<double>> playback) {
  const Session& s = session(session_id);
  if (s.status != SessionStatus::open) {
    throw ConflictError("session " + session_id + " was already submitted");
  }
  if (s.phase != Phase::rating && s.phase != Phase::training) {
    throw InvalidArgument("session " + session_id + " is a " +
                          to_string(s.phase) + " session");
  }
  const std::size_t n = s.clips.size();
  std::vector<int> scores(n, 0);
  for (const auto& a : answers) {
    if (a.position < 0 || static_cast<std::size_t>(a.position) >= n) {
      throw InvalidArgument("answer position " + std::to_string(a.position) +
                            " out of range");
    }
    if (a.score < 1 || a.score > 5) {
      throw InvalidArgument("score " + std::to_string(a.score) +
                            " out of 1..5");
    }
    if (scores[a.position] != 0) {
      throw InvalidArgument("duplicate answer for position " +
                            std::to_string(a.position));
    }
    scores[a.position] = a.score;
  }
  const auto answered = std::count_if(scores.begin(), scores.end(),
                                      [](int v) { return v != 0; });
  if (static_cast<std::size_t>(answered) != n) {
    throw IncompleteError("session " + session_id + " has " +
                          std::to_string(n) + " presentations but " +
                          std::to_string(answered) + " answers");
  }
  if (playback) {
    if (playback->size() != n) {
      throw IncompleteError("playback telemetry must cover every presentation");
    }
    for (double f : *playback) {
      if (!std::isfinite(f) || f < 0.0) {
        throw InvalidArgument("playback fractions must be finite and >= 0");
      }
    }
  }

  const std::string worker = s.worker;
  const Phase phase = s.phase;
  json payload = {{"session", session_id},
                  {"scores", scores},
                  {"playback", opt(playback)}};
  if (phase == Phase::training) payload["passed"] = true;
  emit(event_kind::answers_submitted, std::move(payload));
  if (phase == Phase::training) {
    emit(event_kind::worker_updated,
         {{"worker", worker},
          {"last_training_session_index",
           workers_.at(worker).sessions_completed}});
  }
}

bool Campaign::submit_qualification(const std::string& session_id,
                                    const QualificationResponse& response) {
  const Session& s = session(session_id);
  if (s.status != SessionStatus::open) {
    throw ConflictError("session " + session_id + " was already submitted");
  }
  if (s.phase != Phase::qualification) {
    throw InvalidArgument("session " + session_id + " is not a qualification");
  }
  bool passed = response.hearing_ok && response.fluent;
  std::string keywords;
  for (const auto& id : s.clips) {
    const Clip& c = clip(id);
    if (c.asset == asset::comprehension) {
      keywords += c.expected_text + " ";
    } else if (c.asset == asset::bandwidth) {
      auto it = response.bandwidth.find(id);
      passed &= it != response.bandwidth.end() &&
                normalize_answer(it->second) == normalize_answer(c.expected_text);
    }
  }
  passed &= comprehension_score(response.comprehension, keywords) >=
            kComprehensionPassFraction;

  const std::string worker = s.worker;
  emit(event_kind::answers_submitted,
       {{"session", session_id},
        {"qualification", qualification_json(response)},
        {"passed", passed}});
  if (passed) {
    emit(event_kind::worker_updated,
         {{"worker", worker},
          {"qualification_passed", true},
          {"qualification_at", clock_()}});
  }
  return passed;
}

bool Campaign::submit_setup(const std::string& session_id,
                            const SetupResponse& response) {
  const Session& s = session(session_id);
  if (s.status != SessionStatus::open) {
    throw ConflictError("session " + session_id + " was already submitted");
  }
  if (s.phase != Phase::setup) {
    throw InvalidArgument("session " + session_id + " is not a setup check");
  }
  bool passed = response.level_confirmed;
  std::string digits;
  bool has_comparison = false;
  for (const auto& id : s.clips) {
    const Clip& c = clip(id);
    if (c.asset == asset::binaural) digits += c.expected_text + " ";
    has_comparison |= c.asset == asset::comparison;
  }
  passed &= normalize_answer(response.binaural_digits) == normalize_answer(digits);
  if (has_comparison) passed &= normalize_answer(response.comparison) == "different";

  const std::string worker = s.worker;
  emit(event_kind::answers_submitted,
       {{"session", session_id},
        {"setup", setup_json(response)},
        {"passed", passed}});
  if (passed) {
    emit(event_kind::worker_updated,
         {{"worker", worker},
          {"last_setup_session_index", workers_.at(worker).sessions_completed}});
  }
  return passed;
}

void Campaign::record_decision(const std::string& session_id, bool accepted,
                               const std::vector<std::string>& reasons,
                               int pass) {
  const Session& s = session(session_id);
  if (s.phase != Phase::rating) {
    throw InvalidArgument("only rating sessions are analyzed");
  }
  if (s.status == SessionStatus::accepted ||
      s.status == SessionStatus::rejected) {
    return;
  }
  if (s.status != SessionStatus::submitted) {
    throw InvalidArgument("session " + session_id + " has not been submitted");
  }
  const std::string worker = s.worker;
  emit(event_kind::session_decided,
       {{"session", session_id},
        {"decision", accepted ? "accepted" : "rejected"},
        {"reasons", reasons},
        {"pass", pass}});
  maybe_exclude(worker);
}

void Campaign::maybe_exclude(const std::string& worker) {
  const WorkerState& w = workers_.at(worker);
  if (!w.excluded && w.sessions_decided >= config_.exclusion_min_sessions &&
      w.rejection_rate() > config_.worker_rejection_exclusion_threshold) {
    emit(event_kind::worker_updated, {{"worker", worker}, {"excluded", true}});
  }
}

// ---------------------------------------------------------------------------
// event folding

void Campaign::emit(const char* kind, json payload) {
  EventRecord e{seq_ + 1, clock_ ? clock_() : 0, kind, std::move(payload)};
  if (sink_) sink_(e);
  apply(e);
}

void Campaign::apply(const EventRecord& e) {
  if (e.seq != seq_ + 1) {
    throw ParseError("event sequence gap: expected " + std::to_string(seq_ + 1) +
                     ", got " + std::to_string(e.seq));
  }
  const auto& p = e.payload;
  if (e.kind == event_kind::campaign_created) {
    if (seq_ != 0) throw ParseError("campaign-created after start of log");
    apply_created(p);
  } else if (e.kind == event_kind::session_assembled) {
    apply_assembled(p, e);
  } else if (e.kind == event_kind::answers_submitted) {
    apply_submitted(p);
  } else if (e.kind == event_kind::session_decided) {
    apply_decided(p);
  } else if (e.kind == event_kind::worker_updated) {
    apply_worker(p);
  } else {
    throw ParseError("unknown event kind " + e.kind);
  }
  seq_ = e.seq;
}

void Campaign::apply_created(const json& p) {
  config_ = config_from(p.at("config"));
  for (const auto& cj : p.at("clips")) {
    Clip c = clip_from(cj);
    clip_index_[c.id] = clips_.size();
    if (c.role == ClipRole::rating) loads_[c.id];
    clips_.push_back(std::move(c));
  }
}

void Campaign::apply_assembled(const json& p, const EventRecord& e) {
  const auto& sj = p.at("session");
  Session s;
  s.id = sj.at("id").get<std::string>();
  s.worker = sj.at("worker").get<std::string>();
  s.phase = parse_phase(sj.at("phase").get<std::string>());
  s.clips = sj.at("clips").get<std::vector<std::string>>();
  s.created_at = e.timestamp;
  s.created_seq = e.seq;

  WorkerState& w = worker_state(s.worker);
  w.history.push_back(s.id);
  open_sessions_[s.worker] = s.id;
  if (s.phase == Phase::rating) {
    for (const auto& id : s.clips) {
      const Clip& c = clip(id);
      if (c.role == ClipRole::rating) {
        ++loads_[id].in_flight;
        rated_.insert({s.worker, id});
      } else {
        ++reliability_seen_[s.worker][id];
      }
    }
  }
  ++session_counter_;
  sessions_.emplace(s.id, std::move(s));
}

void Campaign::apply_submitted(const json& p) {
  Session& s = mutable_session(p.at("session").get<std::string>());
  open_sessions_[s.worker].reset();
  if (auto q = p.find("qualification"); q != p.end()) {
    s.qualification = qualification_from(*q);
  }
  if (auto st = p.find("setup"); st != p.end()) s.setup = setup_from(*st);
  s.scores = p.value("scores", std::vector<int>{});
  s.playback = get_opt<std::vector<double>>(p, "playback");

  if (s.phase != Phase::rating) {
    s.phase_passed = p.value("passed", false);
    s.status = *s.phase_passed ? SessionStatus::accepted : SessionStatus::rejected;
    return;
  }
  s.status = SessionStatus::submitted;
  for (std::size_t i = 0; i < s.clips.size(); ++i) {
    const std::string& id = s.clips[i];
    if (clip(id).role != ClipRole::rating) continue;
    ClipLoad& l = loads_[id];
    --l.in_flight;
    ++l.pending;
    session_votes_[s.id].push_back(votes_.size());
    votes_.push_back(Vote{s.worker, id, s.scores.at(i), s.id, VoteStatus::pending});
  }
  ++worker_state(s.worker).sessions_completed;
}

void Campaign::apply_decided(const json& p) {
  Session& s = mutable_session(p.at("session").get<std::string>());
  const bool accepted = p.at("decision").get<std::string>() == "accepted";
  s.status = accepted ? SessionStatus::accepted : SessionStatus::rejected;
  s.reasons = p.value("reasons", std::vector<std::string>{});
  s.analysis_pass = p.value("pass", 1);
  analysis_passes_ = std::max(analysis_passes_, s.analysis_pass);
  for (std::size_t idx : session_votes_[s.id]) {
    Vote& v = votes_[idx];
    ClipLoad& l = loads_[v.clip];
    --l.pending;
    if (accepted) {
      v.status = VoteStatus::accepted;
      ++l.accepted;
    } else {
      v.status = VoteStatus::rejected;
      ++l.rejected;
    }
  }
  WorkerState& w = worker_state(s.worker);
  ++w.sessions_decided;
  if (!accepted) ++w.sessions_rejected;
}

void Campaign::apply_worker(const json& p) {
  WorkerState& w = worker_state(p.at("worker").get<std::string>());
  if (p.contains("qualification_passed")) {
    w.qualification_passed = p.at("qualification_passed").get<bool>();
    w.qualification_at = p.value("qualification_at", std::int64_t{0});
  }
  if (p.contains("last_setup_session_index")) {
    w.last_setup_session_index = p.at("last_setup_session_index").get<int>();
  }
  if (p.contains("last_training_session_index")) {
    w.last_training_session_index =
        p.at("last_training_session_index").get<int>();
  }
  if (p.contains("excluded")) w.excluded = p.at("excluded").get<bool>();
}

}  // namespace p808
