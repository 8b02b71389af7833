#include "p808/service.hpp"

#include <httplib.h>

#include <map>
#include <nlohmann/json.hpp>

#include "p808/error.hpp"
#include "p808/wav.hpp"

namespace p808 {

using nlohmann::json;

namespace {

struct HttpError {
  int status;
  std::string message;
};

int status_for(const Error& e) {
  const std::string kind = e.kind();
  if (kind == "not-found") return 404;
  if (kind == "conflict" || kind == "excluded") return 409;
  if (kind == "no-work") return 204;
  if (kind == "incomplete" || kind == "invalid-argument" || kind == "parse") {
    return 422;
  }
  return 500;
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& kind,
                const std::string& message) {
  if (status == 204) {
    res.status = 204;
    return;
  }
  send_json(res, status, {{"error", kind}, {"message", message}});
}

std::string phase_kind(const Clip& c) {
  const auto dot = c.asset.find('.');
  return dot == std::string::npos ? c.asset : c.asset.substr(dot + 1);
}

std::vector<std::string> phase_strings(Phase p) {
  switch (p) {
    case Phase::qualification:
      return {"qualification.intro", "qualification.hearing_question",
              "qualification.fluency_attestation",
              "qualification.comprehension_instruction",
              "qualification.bandwidth_instruction", "rules.participation"};
    case Phase::setup:
      return {"setup.intro", "setup.level_instruction",
              "setup.binaural_instruction", "setup.comparison_instruction",
              "setup.comparison_same", "setup.comparison_different"};
    case Phase::training:
      return {"training.intro", "rating.question", "rating.submit"};
    case Phase::rating:
      return {"rating.intro", "rating.question", "rating.submit"};
  }
  return {};
}

}  // namespace

std::pair<std::string, int> parse_listen_address(const std::string& addr) {
  const auto colon = addr.rfind(':');
  std::string host = colon == std::string::npos ? "127.0.0.1" : addr.substr(0, colon);
  const std::string port_text =
      colon == std::string::npos ? addr : addr.substr(colon + 1);
  if (host.empty()) host = "0.0.0.0";
  try {
    std::size_t used = 0;
    const int port = std::stoi(port_text, &used);
    if (used != port_text.size() || port < 0 || port > 65535) {
      throw std::out_of_range(port_text);
    }
    return {host, port};
  } catch (const std::exception&) {
    throw InvalidArgument("bad listen address \"" + addr + "\"");
  }
}

struct SessionService::Impl {
  ServiceOptions options;
  httplib::Server server;
  std::map<std::string, std::unique_ptr<CampaignStore>> stores;
  std::string host;
  int port = -1;

  explicit Impl(ServiceOptions o) : options(std::move(o)) {}

  CampaignStore& store(const std::string& id) {
    auto it = stores.find(id);
    if (it == stores.end()) throw HttpError{404, "unknown campaign " + id};
    return *it->second;
  }

  static std::string audio_token(const Campaign& c, const Session& s,
                                 std::size_t pos) {
    return c.id() + "." + s.id + "." + std::to_string(pos);
  }

  json session_document(CampaignStore& st, const Session& s) {
    const Campaign& c = st.campaign();
    json strings = json::object();
    json labels = json::array();
    if (const auto& cat = st.catalog()) {
      for (const auto& key : phase_strings(s.phase)) {
        strings[key] = render_instruction(*cat, key, {});
      }
      if (s.phase == Phase::rating || s.phase == Phase::training) {
        for (int v = 5; v >= 1; --v) {
          labels.push_back({{"value", v}, {"label", category_label(*cat, v).term}});
        }
      }
    }
    json items = json::array();
    for (std::size_t i = 0; i < s.clips.size(); ++i) {
      json item = {{"position", i},
                   {"audio", "/audio/" + audio_token(c, s, i)}};
      const Clip& clip = c.clip(s.clips[i]);
      // Rating items carry nothing that distinguishes gold or trapping clips.
      if (s.phase == Phase::qualification || s.phase == Phase::setup) {
        item["kind"] = phase_kind(clip);
      } else if (s.phase == Phase::training && clip.reference_score) {
        item["reference"] = *clip.reference_score;
      }
      items.push_back(std::move(item));
    }
    return {{"campaign", c.id()},
            {"session", s.id},
            {"worker", s.worker},
            {"phase", to_string(s.phase)},
            {"language", c.config().language},
            {"strings", std::move(strings)},
            {"labels", std::move(labels)},
            {"items", std::move(items)},
            {"required_listen_fraction", options.rules.min_listen_fraction}};
  }

  void next_session(const httplib::Request& req, httplib::Response& res) {
    CampaignStore& st = store(req.path_params.at("id"));
    const std::string worker = req.get_param_value("worker");
    if (worker.empty()) throw HttpError{400, "missing worker parameter"};
    std::lock_guard lock(st.mutex());
    const Session& s = st.campaign().next_session(worker);
    json doc = session_document(st, s);
    st.checkpoint();
    send_json(res, 200, doc);
  }

  std::pair<CampaignStore*, std::string> find_session(const httplib::Request& req,
                                                      const json& body) {
    const std::string sid = req.path_params.at("id");
    std::string campaign = req.get_param_value("campaign");
    if (campaign.empty() && body.contains("campaign")) {
      campaign = body.at("campaign").get<std::string>();
    }
    if (!campaign.empty()) return {&store(campaign), sid};
    CampaignStore* found = nullptr;
    for (auto& [id, st] : stores) {
      std::lock_guard lock(st->mutex());
      if (st->campaign().sessions().count(sid)) {
        if (found) throw HttpError{422, "session id is ambiguous, name the campaign"};
        found = st.get();
      }
    }
    if (!found) throw HttpError{404, "unknown session " + sid};
    return {found, sid};
  }

  void submit(const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception& e) {
      throw HttpError{422, std::string("body is not JSON: ") + e.what()};
    }
    if (!body.is_object()) throw HttpError{422, "body must be a JSON object"};
    auto [st, sid] = find_session(req, body);
    std::lock_guard lock(st->mutex());
    Campaign& c = st->campaign();
    const Session& s = c.session(sid);
    if (body.contains("worker") && body.at("worker").get<std::string>() != s.worker) {
      throw HttpError{403, "session belongs to another worker"};
    }
    json reply = {{"session", sid}};
    try {
      switch (s.phase) {
        case Phase::qualification: {
          if (!body.contains("qualification")) {
            throw HttpError{422, "missing qualification answers"};
          }
          const json& q = body.at("qualification");
          QualificationResponse r;
          r.hearing_ok = q.value("hearing_ok", false);
          r.fluent = q.value("fluent", false);
          r.comprehension = q.value("comprehension", "");
          const json bandwidth = q.value("bandwidth", json::object());
          for (const auto& [pos, answer] : bandwidth.items()) {
            const auto p = std::stoul(pos);
            if (p >= s.clips.size()) throw HttpError{422, "bandwidth position out of range"};
            r.bandwidth[s.clips[p]] = answer.get<std::string>();
          }
          reply["passed"] = c.submit_qualification(sid, r);
          break;
        }
        case Phase::setup: {
          if (!body.contains("setup")) throw HttpError{422, "missing setup answers"};
          const json& q = body.at("setup");
          SetupResponse r;
          r.level_confirmed = q.value("level_confirmed", false);
          r.binaural_digits = q.value("binaural_digits", "");
          r.comparison = q.value("comparison", "");
          reply["passed"] = c.submit_setup(sid, r);
          break;
        }
        case Phase::training:
        case Phase::rating: {
          if (!body.contains("answers") || !body.at("answers").is_array()) {
            throw HttpError{422, "missing answers"};
          }
          std::vector<Answer> answers;
          int pos = 0;
          for (const auto& a : body.at("answers")) {
            if (a.is_object()) {
              answers.push_back({a.at("position").get<int>(), a.at("score").get<int>()});
            } else {
              answers.push_back({pos, a.get<int>()});
            }
            ++pos;
          }
          std::optional<std::vector<double>> playback;
          if (auto it = body.find("playback_fractions");
              it != body.end() && !it->is_null()) {
            playback = it->get<std::vector<double>>();
          }
          reply["telemetry"] = playback ? "present" : "absent";
          c.submit_answers(sid, answers, playback);
          break;
        }
      }
    } catch (const json::exception& e) {
      throw HttpError{422, std::string("malformed answers: ") + e.what()};
    } catch (const std::invalid_argument&) {
      throw HttpError{422, "malformed answer position"};
    }
    reply["status"] = to_string(c.session(sid).status);
    st->checkpoint();
    send_json(res, 200, reply);
  }

  void status(const httplib::Request& req, httplib::Response& res) {
    CampaignStore& st = store(req.path_params.at("id"));
    std::lock_guard lock(st.mutex());
    send_json(res, 200, to_json(campaign_status(st.campaign())));
  }

  void analyze_now(const httplib::Request& req, httplib::Response& res) {
    if (!options.admin_token.empty() &&
        req.get_header_value("Authorization") != "Bearer " + options.admin_token) {
      throw HttpError{401, "admin token required"};
    }
    CampaignStore& st = store(req.path_params.at("id"));
    std::lock_guard lock(st.mutex());
    const auto decisions = analyze(st.campaign(), options.rules);
    st.checkpoint();
    json list = json::array();
    for (const auto& d : decisions) {
      list.push_back({{"session", d.session_id},
                      {"worker", d.worker},
                      {"decision", d.accepted ? "accepted" : "rejected"},
                      {"reasons", d.reasons},
                      {"pass", d.pass}});
    }
    send_json(res, 200,
              {{"decisions", list}, {"status", to_json(campaign_status(st.campaign()))}});
  }

  void audio(const httplib::Request& req, httplib::Response& res) {
    const std::string token = req.path_params.at("token");
    const auto a = token.find('.');
    const auto b = a == std::string::npos ? a : token.find('.', a + 1);
    if (b == std::string::npos) throw HttpError{404, "unknown audio"};
    CampaignStore& st = store(token.substr(0, a));
    const std::string sid = token.substr(a + 1, b - a - 1);
    std::size_t pos = 0;
    try {
      pos = std::stoul(token.substr(b + 1));
    } catch (const std::exception&) {
      throw HttpError{404, "unknown audio"};
    }
    std::filesystem::path file;
    {
      std::lock_guard lock(st.mutex());
      const Campaign& c = st.campaign();
      auto it = c.sessions().find(sid);
      if (it == c.sessions().end() || pos >= it->second.clips.size()) {
        throw HttpError{404, "unknown audio"};
      }
      std::string worker = req.get_param_value("worker");
      if (worker.empty()) worker = req.get_header_value("X-Worker");
      if (worker != it->second.worker) {
        throw HttpError{403, "audio belongs to another worker's session"};
      }
      file = st.resolve(c.clip(it->second.clips[pos]).path);
    }
    std::string bytes;
    try {
      bytes = read_file(file);
    } catch (const IoError&) {
      throw HttpError{404, "audio file missing"};
    }
    // Status left unset so the server answers 206 for Range requests.
    res.set_content(std::move(bytes), "audio/wav");
  }

  template <typename F>
  httplib::Server::Handler guard(F f) {
    return [this, f](const httplib::Request& req, httplib::Response& res) {
      try {
        (this->*f)(req, res);
      } catch (const HttpError& e) {
        send_error(res, e.status, "http", e.message);
      } catch (const Error& e) {
        send_error(res, status_for(e), e.kind(), e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
      }
    };
  }

  void routes() {
    server.Get("/api/campaign/:id/next-session", guard(&Impl::next_session));
    server.Post("/api/session/:id/answers", guard(&Impl::submit));
    server.Get("/api/campaign/:id/status", guard(&Impl::status));
    server.Post("/api/campaign/:id/analyze", guard(&Impl::analyze_now));
    server.Get("/audio/:token", guard(&Impl::audio));
    if (options.static_dir) {
      server.set_mount_point("/", options.static_dir->string());
    }
  }
};

SessionService::SessionService(ServiceOptions options)
    : impl_(std::make_unique<Impl>(std::move(options))) {
  impl_->options.rules.validate();
  impl_->routes();
}

SessionService::~SessionService() { stop(); }

void SessionService::add_campaign(std::unique_ptr<CampaignStore> store) {
  const std::string id = store->campaign().id();
  if (!impl_->stores.emplace(id, std::move(store)).second) {
    throw ConflictError("campaign " + id + " is already served");
  }
}

int SessionService::bind(const std::string& host, int port) {
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port(host);
  } else {
    impl_->port = impl_->server.bind_to_port(host, port) ? port : -1;
  }
  if (impl_->port < 0) {
    throw IoError("cannot listen on " + host + ":" + std::to_string(port));
  }
  impl_->host = host;
  return impl_->port;
}

void SessionService::run() { impl_->server.listen_after_bind(); }

void SessionService::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

bool SessionService::running() const { return impl_->server.is_running(); }

}  // namespace p808
