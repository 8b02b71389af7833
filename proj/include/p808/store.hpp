#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "p808/campaign.hpp"
#include "p808/localization.hpp"

namespace p808 {

// Campaign directory layout:
//   events.jsonl    append-only event log, one JSON object per line
//   snapshot.json   optional state snapshot (atomic replace)
//   catalog.txt     optional string catalog served to rating clients
//   .lock           held (flock) by the single writer
// Clip paths are resolved relative to the directory.
namespace store_file {
inline constexpr const char* events = "events.jsonl";
inline constexpr const char* snapshot = "snapshot.json";
inline constexpr const char* catalog = "catalog.txt";
inline constexpr const char* lock = ".lock";
}  // namespace store_file

struct EventLog {
  std::vector<EventRecord> events;
  // A trailing line cut short by a crash; dropped from `events`.
  bool torn_tail = false;
  // Byte length of the well-formed prefix.
  std::uintmax_t valid_bytes = 0;
};

// Parses a log. Only the last line may be malformed (a torn write); anything
// else is a ParseError.
EventLog parse_event_log(std::string_view text);
EventLog read_event_log(const std::filesystem::path& path);

// Rebuilds a campaign from the log alone, ignoring snapshots.
Campaign replay_directory(const std::filesystem::path& dir);

struct StoreOptions {
  // Events between snapshots; 0 disables snapshots.
  int snapshot_every = 500;
  // fsync after each append.
  bool durable = true;
  Campaign::Clock clock;
};

// Exclusive owner of one campaign directory. Every event is appended and
// flushed before the campaign applies it.
class CampaignStore {
 public:
  static std::unique_ptr<CampaignStore> create(
      const std::filesystem::path& dir, const CampaignConfig& config,
      const ClipSets& clips, StoreOptions options = {});
  // Throws ConflictError when another process holds the directory.
  static std::unique_ptr<CampaignStore> open(const std::filesystem::path& dir,
                                             StoreOptions options = {});

  ~CampaignStore();
  CampaignStore(const CampaignStore&) = delete;
  CampaignStore& operator=(const CampaignStore&) = delete;

  Campaign& campaign() { return *campaign_; }
  const Campaign& campaign() const { return *campaign_; }
  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path resolve(const std::string& clip_path) const;

  // Loaded from catalog.txt when present.
  const std::optional<StringCatalog>& catalog() const { return catalog_; }

  void write_snapshot();
  // Writes a snapshot when snapshot_every events accumulated since the last.
  void checkpoint();

  // Serializes commands against this campaign.
  std::mutex& mutex() { return mutex_; }

 private:
  CampaignStore(std::filesystem::path dir, StoreOptions options);
  void lock_directory();
  void open_log_for_append(std::uintmax_t valid_bytes);
  void append(const EventRecord& e);
  void load_catalog_if_present();

  std::filesystem::path dir_;
  StoreOptions options_;
  std::optional<Campaign> campaign_;
  std::optional<StringCatalog> catalog_;
  int lock_fd_ = -1;
  int log_fd_ = -1;
  int since_snapshot_ = 0;
  std::mutex mutex_;
};

}  // namespace p808
