#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "p808/analysis.hpp"
#include "p808/store.hpp"

namespace p808 {

struct ServiceOptions {
  ReliabilityRules rules;
  // When set, POST /api/campaign/{id}/analyze requires "Authorization: Bearer".
  std::string admin_token;
  // Static client assets mounted at "/".
  std::optional<std::filesystem::path> static_dir;
};

// HTTP+JSON front end over one or more campaign stores:
//   GET  /api/campaign/{id}/next-session?worker=W
//   POST /api/session/{id}/answers
//   GET  /api/campaign/{id}/status
//   POST /api/campaign/{id}/analyze
//   GET  /audio/{token}?worker=W          (HEAD and Range supported)
// Commands against a campaign are serialized by its store mutex.
class SessionService {
 public:
  explicit SessionService(ServiceOptions options = {});
  ~SessionService();
  SessionService(const SessionService&) = delete;
  SessionService& operator=(const SessionService&) = delete;

  void add_campaign(std::unique_ptr<CampaignStore> store);

  // Returns the bound port (an ephemeral one when `port` is 0).
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void run();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// "host:port" -> pair; a bare port binds 127.0.0.1.
std::pair<std::string, int> parse_listen_address(const std::string& addr);

}  // namespace p808
