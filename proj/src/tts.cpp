#include "p808/tts.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numbers>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "p808/error.hpp"
#include "p808/localization.hpp"
#include "p808/random.hpp"
#include "p808/wav.hpp"

namespace p808 {

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void append_tone(std::vector<double>& out, double freq, double seconds,
                 int rate) {
  const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
  const auto fade = static_cast<std::size_t>(0.01 * rate);
  for (std::size_t i = 0; i < n; ++i) {
    double env = 1.0;
    if (i < fade) env = static_cast<double>(i) / fade;
    if (n - i < fade) env = static_cast<double>(n - i) / fade;
    out.push_back(0.3 * env *
                  std::sin(2.0 * std::numbers::pi * freq * i / rate));
  }
}

}  // namespace

StubTtsClient::StubTtsClient(std::set<std::string> languages)
    : languages_(std::move(languages)) {}

AudioBuffer StubTtsClient::synthesize(const TtsRequest& request) {
  if (!languages_.empty() && !languages_.count(request.language)) {
    throw ConfigurationError("stub TTS not configured for " + request.language);
  }
  const std::uint64_t key =
      fnv1a64(request.text, fnv1a64(request.language + '\0'));

  AudioBuffer out;
  out.sample_rate = kStimulusRate;
  std::istringstream words(request.text);
  std::string word;
  std::uint64_t index = 0;
  while (words >> word) {
    const std::uint64_t h = combine_seed(key, fnv1a64(word) + index++);
    const double freq = 150.0 + static_cast<double>(h % 600);
    const double seconds = 0.08 + 0.02 * std::min<std::size_t>(word.size(), 8);
    append_tone(out.samples, freq, seconds, out.sample_rate);
    out.samples.insert(out.samples.end(),
                       static_cast<std::size_t>(0.04 * out.sample_rate), 0.0);
  }
  if (out.samples.empty()) {
    out.samples.assign(static_cast<std::size_t>(0.1 * out.sample_rate), 0.0);
  }
  return out;
}

HttpTtsClient::HttpTtsClient(HttpTtsConfig config) : config_(std::move(config)) {
  const std::string& url = config_.endpoint;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos || url.substr(0, scheme_end) != "http") {
    throw ConfigurationError("TTS endpoint must be an http:// URL, got \"" +
                             url + "\"");
  }
  const auto path_begin = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_begin);
  path_ = path_begin == std::string::npos ? "/" : url.substr(path_begin);
}

HttpTtsClient HttpTtsClient::from_environment() {
  const char* endpoint = std::getenv(kTtsEndpointEnv);
  if (endpoint == nullptr || *endpoint == '\0') {
    throw ConfigurationError(std::string(kTtsEndpointEnv) + " is not set");
  }
  HttpTtsConfig config;
  config.endpoint = endpoint;
  if (const char* cred = std::getenv(kTtsCredentialEnv)) config.credential = cred;
  return HttpTtsClient(std::move(config));
}

std::string HttpTtsClient::backend_id() const {
  return "http-" + hex64(fnv1a64(config_.endpoint)).substr(0, 8);
}

AudioBuffer HttpTtsClient::synthesize(const TtsRequest& request) {
  if (!config_.languages.empty() && !config_.languages.count(request.language)) {
    throw ConfigurationError("TTS backend not configured for " +
                             request.language);
  }
  httplib::Client client(scheme_host_port_);
  const auto secs = config_.timeout.count() / 1000;
  const auto usecs = (config_.timeout.count() % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  httplib::Headers headers;
  if (!config_.credential.empty()) {
    headers.emplace("Authorization", "Bearer " + config_.credential);
  }
  const nlohmann::json body = {{"text", request.text},
                               {"language", request.language},
                               {"voice", request.voice}};
  auto res = client.Post(path_, headers, body.dump(), "application/json");
  if (!res) {
    throw TransportError("TTS endpoint " + config_.endpoint +
                         " unreachable: " + httplib::to_string(res.error()));
  }
  if (res->status >= 500) {
    throw TransportError("TTS endpoint returned " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw ConfigurationError("TTS endpoint rejected request (" +
                             std::to_string(res->status) + "): " + res->body);
  }
  AudioBuffer audio = decode_wav(res->body);
  if (audio.sample_rate != kStimulusRate) {
    throw ConfigurationError("TTS backend returned " +
                             std::to_string(audio.sample_rate) +
                             " Hz audio; 48 kHz required");
  }
  return audio;
}

CachedTtsClient::CachedTtsClient(std::shared_ptr<TtsClient> inner,
                                 std::filesystem::path directory)
    : inner_(std::move(inner)), directory_(std::move(directory)) {
  std::filesystem::create_directories(directory_);
}

std::filesystem::path CachedTtsClient::entry_path(
    const TtsRequest& request) const {
  const auto h = fnv1a64(request.text,
                         fnv1a64(request.voice + '\0' + request.language + '\0'));
  return directory_ / (inner_->backend_id() + "-" + hex64(h) + ".wav");
}

AudioBuffer CachedTtsClient::synthesize(const TtsRequest& request) {
  const auto path = entry_path(request);
  if (std::filesystem::exists(path)) return read_wav(path);
  const std::string bytes =
      encode_wav(inner_->synthesize(request), WavFormat::float32);
  write_file_atomic(path, bytes);
  // Return what a later cache hit would return.
  return decode_wav(bytes);
}

AudioBuffer synthesize(TtsClient& client, const TtsRequest& request) {
  if (request.text.find_first_not_of(" \t\n") == std::string::npos) {
    throw InvalidArgument("TTS request text is empty");
  }
  if (!is_valid_language_tag(request.language)) {
    throw InvalidArgument("invalid language tag \"" + request.language + "\"");
  }
  return client.synthesize(request);
}

TtsRequest make_tts_request(const StringCatalog& catalog,
                            const std::string& key,
                            const std::map<std::string, std::string>& params,
                            std::string voice) {
  return TtsRequest{render_instruction(catalog, key, params),
                    catalog.language(), std::move(voice)};
}

}  // namespace p808
