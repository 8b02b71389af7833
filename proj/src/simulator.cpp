#include "p808/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "p808/error.hpp"
#include "p808/random.hpp"

namespace p808 {

using nlohmann::json;

std::string to_string(RaterKind k) {
  switch (k) {
    case RaterKind::honest: return "honest";
    case RaterKind::spammer: return "spammer";
    case RaterKind::biased: return "biased";
  }
  return "?";
}

RaterKind parse_rater_kind(const std::string& s) {
  if (s == "honest") return RaterKind::honest;
  if (s == "spammer") return RaterKind::spammer;
  if (s == "biased") return RaterKind::biased;
  throw ParseError("unknown rater kind \"" + s + "\"");
}

RaterProfile RaterProfile::honest(std::uint64_t seed, double noise_sd) {
  return {RaterKind::honest, noise_sd, 0.0, 0.0, seed};
}

RaterProfile RaterProfile::spammer(std::uint64_t seed, double trap_fail_prob) {
  return {RaterKind::spammer, 0.0, 0.0, trap_fail_prob, seed};
}

RaterProfile RaterProfile::biased(std::uint64_t seed, double bias,
                                  double noise_sd) {
  return {RaterKind::biased, noise_sd, bias, 0.0, seed};
}

void RaterProfile::validate() const {
  if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) {
    throw InvalidArgument("noise_sd must be finite and >= 0");
  }
  if (!(trap_fail_prob >= 0.0 && trap_fail_prob <= 1.0)) {
    throw InvalidArgument("trap_fail_prob must be in [0, 1]");
  }
  if (!std::isfinite(bias)) throw InvalidArgument("bias must be finite");
}

int simulate_vote(const RaterProfile& profile, const Clip& clip,
                  const GroundTruth& truth, const std::string& salt) {
  profile.validate();
  Rng rng(combine_seed(combine_seed(profile.seed, clip.id), salt));

  if (clip.role == ClipRole::gold || clip.role == ClipRole::trapping) {
    if (!clip.expected_answer) {
      throw InvalidArgument("clip " + clip.id + " has no expected answer");
    }
    const int expected = *clip.expected_answer;
    if (!rng.bernoulli(profile.trap_fail_prob)) return expected;
    const int tol = clip.role == ClipRole::gold ? clip.gold_tolerance.value_or(1) : 0;
    std::vector<int> wrong;
    for (int v = 1; v <= 5; ++v) {
      if (std::abs(v - expected) > tol) wrong.push_back(v);
    }
    return wrong[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(wrong.size()) - 1))];
  }

  if (profile.kind == RaterKind::spammer) {
    return static_cast<int>(rng.uniform_int(1, 5));
  }
  auto it = truth.find(clip.id);
  if (it == truth.end()) {
    throw InvalidArgument("no ground truth for clip " + clip.id);
  }
  const double bias = profile.kind == RaterKind::biased ? profile.bias : 0.0;
  const double raw = it->second + bias + profile.noise_sd * rng.normal();
  return static_cast<int>(std::round(std::clamp(raw, 1.0, 5.0)));
}

namespace {

QualificationResponse passing_qualification(const Campaign& c,
                                            const Session& s) {
  QualificationResponse r;
  r.hearing_ok = true;
  r.fluent = true;
  for (const auto& id : s.clips) {
    const Clip& clip = c.clip(id);
    if (clip.asset == asset::comprehension) {
      r.comprehension += clip.expected_text + " ";
    } else if (clip.asset == asset::bandwidth) {
      r.bandwidth[id] = clip.expected_text;
    }
  }
  return r;
}

SetupResponse passing_setup(const Campaign& c, const Session& s) {
  SetupResponse r;
  r.level_confirmed = true;
  r.comparison = "different";
  for (const auto& id : s.clips) {
    const Clip& clip = c.clip(id);
    if (clip.asset == asset::binaural) r.binaural_digits += clip.expected_text + " ";
  }
  return r;
}

}  // namespace

void complete_phase_session(Campaign& c, const Session& s) {
  switch (s.phase) {
    case Phase::qualification:
      c.submit_qualification(s.id, passing_qualification(c, s));
      break;
    case Phase::setup:
      c.submit_setup(s.id, passing_setup(c, s));
      break;
    case Phase::training: {
      std::vector<Answer> answers;
      for (std::size_t i = 0; i < s.clips.size(); ++i) {
        answers.push_back({static_cast<int>(i),
                           c.clip(s.clips[i]).reference_score.value_or(3)});
      }
      c.submit_answers(s.id, answers,
                       std::vector<double>(s.clips.size(), 1.0));
      break;
    }
    case Phase::rating:
      break;
  }
}

void advance_to_rating(Campaign& campaign, const std::string& worker) {
  while (campaign.next_phase(worker) != Phase::rating) {
    complete_phase_session(campaign, campaign.next_session(worker));
  }
}

int drive_campaign(Campaign& campaign, const GroundTruth& truth,
                   const std::vector<SimWorker>& population,
                   const SimOptions& options) {
  options.rules.validate();
  if (options.max_rounds < 1) throw InvalidArgument("max_rounds must be >= 1");
  for (const auto& id : campaign.clip_ids(ClipRole::rating)) {
    if (!truth.count(id)) throw InvalidArgument("no ground truth for clip " + id);
  }
  for (const auto& w : population) w.profile.validate();

  for (int round = 1; round <= options.max_rounds; ++round) {
    if (campaign.resubmission_pool().empty()) return round - 1;

    std::vector<const SimWorker*> order;
    for (const auto& w : population) order.push_back(&w);
    Rng rng(combine_seed(options.seed, "round:" + std::to_string(round)));
    rng.shuffle(order.begin(), order.end());

    int assembled = 0;
    for (const SimWorker* w : order) {
      try {
        // Phase steps never consume rating work, so a worker clears them
        // before rating in the same turn.
        advance_to_rating(campaign, w->id);
        const Session& s = campaign.next_session(w->id);
        std::vector<Answer> answers;
        for (std::size_t i = 0; i < s.clips.size(); ++i) {
          answers.push_back({static_cast<int>(i),
                             simulate_vote(w->profile, campaign.clip(s.clips[i]),
                                           truth, s.id)});
        }
        const std::string sid = s.id;
        const std::size_t n = s.clips.size();
        campaign.submit_answers(sid, answers, std::vector<double>(n, 1.0));
        ++assembled;
      } catch (const ExcludedError&) {
      } catch (const NoWorkError&) {
      }
    }
    analyze(campaign, options.rules);

    if (campaign.resubmission_pool().empty()) return round;
    if (assembled == 0) break;
  }
  throw IncompleteCampaignError(
      "campaign incomplete: " +
          std::to_string(campaign.resubmission_pool().size()) +
          " clips still short of accepted votes",
      campaign.resubmission_pool());
}

CampaignOutcome make_outcome(const Campaign& campaign, int rounds) {
  CampaignOutcome out{campaign, rounds, {}, std::nullopt, {}, {}};
  out.campaign.set_sink({});
  out.decisions = decision_log(out.campaign);
  try {
    out.acceptance_rate = acceptance_rate(out.campaign);
  } catch (const UndefinedRateError&) {
  }
  out.clip_mos = clip_mos_table(out.campaign);
  out.status = campaign_status(out.campaign);
  return out;
}

CampaignOutcome run_campaign(Campaign campaign, const GroundTruth& truth,
                             const std::vector<SimWorker>& population,
                             const SimOptions& options) {
  const int rounds = drive_campaign(campaign, truth, population, options);
  return make_outcome(campaign, rounds);
}

CampaignOutcome run_campaign(const CampaignConfig& config, const ClipSets& clips,
                             const GroundTruth& truth,
                             const std::vector<SimWorker>& population,
                             const SimOptions& options) {
  std::int64_t tick = 0;
  auto clock = [tick]() mutable { return ++tick; };
  return run_campaign(Campaign::create(config, clips, {}, clock), truth,
                      population, options);
}

RecoveryError recovery_error(const Campaign& campaign, const GroundTruth& truth) {
  if (!campaign.resubmission_pool().empty()) {
    throw InvalidArgument("campaign is incomplete");
  }
  const auto ids = campaign.clip_ids(ClipRole::rating);
  double sq = 0.0;
  RecoveryError err;
  for (const auto& id : ids) {
    auto it = truth.find(id);
    if (it == truth.end()) throw InvalidArgument("no ground truth for clip " + id);
    const double d = clip_mos(campaign, id).mean - it->second;
    sq += d * d;
    err.max_abs = std::max(err.max_abs, std::abs(d));
  }
  err.rmse = ids.empty() ? 0.0 : std::sqrt(sq / static_cast<double>(ids.size()));
  return err;
}

ClipSets synthetic_clip_sets(const std::string& language, int rating_clips) {
  ClipSets sets;
  auto make = [&](std::string id, ClipRole role) {
    Clip c;
    c.path = "audio/" + id + ".wav";
    c.id = std::move(id);
    c.role = role;
    c.language = language;
    return c;
  };
  char buf[32];
  for (int i = 1; i <= rating_clips; ++i) {
    std::snprintf(buf, sizeof buf, "r%04d", i);
    Clip c = make(buf, ClipRole::rating);
    c.model = "sim";
    c.utterance = buf;
    sets.rating.push_back(std::move(c));
  }
  for (int v : {5, 1}) {
    Clip c = make("gold" + std::to_string(v), ClipRole::gold);
    c.expected_answer = v;
    sets.gold.push_back(std::move(c));
  }
  for (int v = 1; v <= 5; ++v) {
    Clip c = make("trap" + std::to_string(v), ClipRole::trapping);
    c.expected_answer = v;
    sets.trapping.push_back(std::move(c));
  }
  for (int v = 1; v <= 5; ++v) {
    Clip c = make("train" + std::to_string(v), ClipRole::training);
    c.reference_score = v;
    sets.training.push_back(std::move(c));
  }
  auto setup = [&](std::string id, const char* asset_name, std::string text) {
    Clip c = make(std::move(id), ClipRole::setup);
    c.asset = asset_name;
    c.expected_text = std::move(text);
    sets.setup.push_back(std::move(c));
  };
  setup("comprehension", asset::comprehension, "river garden seven");
  setup("bw4k", asset::bandwidth, "4000");
  setup("bw16k", asset::bandwidth, "16000");
  setup("level", asset::level, "");
  setup("binaural", asset::binaural, "3 8 5");
  setup("compare-high", asset::comparison, "");
  setup("compare-low", asset::comparison, "");
  return sets;
}

GroundTruth random_truth(const ClipSets& clips, std::uint64_t seed, double low,
                         double high) {
  if (!(low >= 1.0 && high <= 5.0 && low <= high)) {
    throw InvalidArgument("truth range must lie within [1, 5]");
  }
  GroundTruth truth;
  for (const auto& c : clips.rating) {
    Rng rng(combine_seed(seed, c.id));
    truth[c.id] = low + (high - low) * rng.uniform();
  }
  return truth;
}

std::vector<SimWorker> make_population(int honest, int spammers,
                                       std::uint64_t seed, double noise_sd,
                                       double trap_fail_prob) {
  std::vector<SimWorker> out;
  char buf[32];
  for (int i = 1; i <= honest; ++i) {
    std::snprintf(buf, sizeof buf, "honest-%02d", i);
    out.push_back({buf, RaterProfile::honest(combine_seed(seed, buf), noise_sd)});
  }
  for (int i = 1; i <= spammers; ++i) {
    std::snprintf(buf, sizeof buf, "spammer-%02d", i);
    out.push_back(
        {buf, RaterProfile::spammer(combine_seed(seed, buf), trap_fail_prob)});
  }
  return out;
}

Scenario parse_scenario(const json& j) {
  try {
    Scenario sc;
    sc.config = config_from_json(j.value("config", json::object()));
    if (sc.config.language.empty()) sc.config.language = "en";
    sc.config.validate();
    const int n = j.value("rating_clips", 50);
    if (n < 1) throw InvalidArgument("rating_clips must be >= 1");
    sc.clips = synthetic_clip_sets(sc.config.language, n);
    const std::uint64_t seed = j.value("seed", std::uint64_t{0});
    sc.options.seed = seed;
    sc.options.max_rounds = j.value("max_rounds", sc.options.max_rounds);

    const json truth = j.value("truth", json::object());
    if (truth.contains("low") || truth.contains("high") || truth.empty()) {
      sc.truth = random_truth(sc.clips, truth.value("seed", seed),
                              truth.value("low", 1.5), truth.value("high", 4.5));
    } else {
      for (const auto& [id, v] : truth.items()) sc.truth[id] = v.get<double>();
    }

    int index = 0;
    for (const auto& group : j.at("population")) {
      const RaterKind kind = parse_rater_kind(group.at("kind").get<std::string>());
      const int count = group.value("count", 1);
      for (int i = 0; i < count; ++i) {
        char buf[48];
        std::snprintf(buf, sizeof buf, "%s-%02d", to_string(kind).c_str(), ++index);
        RaterProfile p;
        p.kind = kind;
        p.noise_sd = group.value("noise_sd", kind == RaterKind::spammer ? 0.0 : 0.8);
        p.bias = group.value("bias", 0.0);
        p.trap_fail_prob =
            group.value("trap_fail_prob", kind == RaterKind::spammer ? 0.9 : 0.0);
        p.seed = combine_seed(seed, buf);
        p.validate();
        sc.population.push_back({buf, p});
      }
    }
    return sc;
  } catch (const json::exception& e) {
    throw ParseError(std::string("scenario: ") + e.what());
  }
}

json outcome_report(const CampaignOutcome& outcome, const GroundTruth& truth,
                    const std::vector<SimWorker>& population) {
  std::map<std::string, RaterKind> kind_of;
  for (const auto& w : population) kind_of[w.id] = w.profile.kind;
  std::map<std::string, std::pair<int, int>> per_kind;  // decided, rejected
  for (const auto& d : outcome.decisions) {
    auto it = kind_of.find(d.worker);
    const std::string k = it == kind_of.end() ? "unknown" : to_string(it->second);
    auto& [decided, rejected] = per_kind[k];
    ++decided;
    if (!d.accepted) ++rejected;
  }
  json kinds = json::object();
  for (const auto& [k, dr] : per_kind) {
    kinds[k] = {{"sessions_decided", dr.first}, {"sessions_rejected", dr.second}};
  }
  const RecoveryError err = recovery_error(outcome.campaign, truth);
  return {{"status", to_json(outcome.status)},
          {"rounds", outcome.rounds},
          {"recovery", {{"rmse", err.rmse}, {"max_abs", err.max_abs}}},
          {"by_rater_kind", kinds}};
}

}  // namespace p808
