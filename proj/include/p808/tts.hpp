#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>

#include "p808/audio.hpp"

namespace p808 {

class StringCatalog;

struct TtsRequest {
  std::string text;
  std::string language;
  std::string voice;
};

class TtsClient {
 public:
  virtual ~TtsClient() = default;
  // Identifies the backend in cache keys.
  virtual std::string backend_id() const = 0;
  virtual AudioBuffer synthesize(const TtsRequest& request) = 0;
};

// Offline backend: a tone sequence keyed on a hash of (text, language).
class StubTtsClient final : public TtsClient {
 public:
  explicit StubTtsClient(std::set<std::string> languages = {});
  std::string backend_id() const override { return "stub"; }
  AudioBuffer synthesize(const TtsRequest& request) override;

 private:
  std::set<std::string> languages_;
};

struct HttpTtsConfig {
  // e.g. http://localhost:8080/v1/tts
  std::string endpoint;
  std::string credential;
  // Empty means the server decides.
  std::set<std::string> languages;
  std::chrono::milliseconds timeout{10000};
};

inline constexpr const char* kTtsEndpointEnv = "P808_TTS_ENDPOINT";
inline constexpr const char* kTtsCredentialEnv = "P808_TTS_CREDENTIAL";

// POSTs {"text","language","voice"} as JSON; expects WAV bytes back.
class HttpTtsClient final : public TtsClient {
 public:
  explicit HttpTtsClient(HttpTtsConfig config);
  static HttpTtsClient from_environment();

  std::string backend_id() const override;
  AudioBuffer synthesize(const TtsRequest& request) override;

 private:
  HttpTtsConfig config_;
  std::string scheme_host_port_;
  std::string path_;
};

// Disk cache keyed by (backend, voice, language, text hash). Entries are
// written with write-then-rename so concurrent builders never see partial
// files.
class CachedTtsClient final : public TtsClient {
 public:
  CachedTtsClient(std::shared_ptr<TtsClient> inner,
                  std::filesystem::path directory);
  std::string backend_id() const override { return inner_->backend_id(); }
  AudioBuffer synthesize(const TtsRequest& request) override;

  std::filesystem::path entry_path(const TtsRequest& request) const;

 private:
  std::shared_ptr<TtsClient> inner_;
  std::filesystem::path directory_;
};

// Validates the request, then delegates to the client.
AudioBuffer synthesize(TtsClient& client, const TtsRequest& request);

// Renders `key` from the catalog and wraps it in a request for the
// catalog's own language.
TtsRequest make_tts_request(const StringCatalog& catalog,
                            const std::string& key,
                            const std::map<std::string, std::string>& params,
                            std::string voice);

}  // namespace p808
