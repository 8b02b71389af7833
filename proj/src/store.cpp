#include "p808/store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "p808/error.hpp"
#include "p808/wav.hpp"

namespace p808 {

namespace fs = std::filesystem;

EventLog parse_event_log(std::string_view text) {
  EventLog log;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    ++line_no;
    const auto nl = text.find('\n', pos);
    const bool last = nl == std::string_view::npos;
    const auto line = text.substr(pos, last ? text.size() - pos : nl - pos);
    const auto next = last ? text.size() : nl + 1;
    if (line.empty()) {
      pos = next;
      if (!last) log.valid_bytes = pos;
      continue;
    }
    EventRecord rec;
    try {
      if (last) throw ParseError("unterminated line");
      rec = event_from_json(nlohmann::json::parse(line));
    } catch (const std::exception& e) {
      const bool is_tail = last || text.find_first_not_of("\n", next) ==
                                       std::string_view::npos;
      if (!is_tail) {
        throw ParseError("event log line " + std::to_string(line_no) + ": " +
                         e.what());
      }
      log.torn_tail = true;
      break;
    }
    const std::uint64_t expected =
        log.events.empty() ? 1 : log.events.back().seq + 1;
    if (rec.seq != expected) {
      throw ParseError("event log line " + std::to_string(line_no) +
                       ": sequence gap, expected " + std::to_string(expected) +
                       ", got " + std::to_string(rec.seq));
    }
    log.events.push_back(std::move(rec));
    log.valid_bytes = next;
    pos = next;
  }
  return log;
}

EventLog read_event_log(const fs::path& path) {
  return parse_event_log(read_file(path));
}

Campaign replay_directory(const fs::path& dir) {
  return Campaign::replay(read_event_log(dir / store_file::events).events);
}

CampaignStore::CampaignStore(fs::path dir, StoreOptions options)
    : dir_(std::move(dir)), options_(std::move(options)) {}

CampaignStore::~CampaignStore() {
  if (log_fd_ >= 0) ::close(log_fd_);
  if (lock_fd_ >= 0) ::close(lock_fd_);
}

void CampaignStore::lock_directory() {
  const auto path = dir_ / store_file::lock;
  lock_fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (lock_fd_ < 0) {
    throw IoError("cannot open " + path.string() + ": " + std::strerror(errno));
  }
  if (::flock(lock_fd_, LOCK_EX | LOCK_NB) != 0) {
    throw ConflictError("campaign directory " + dir_.string() +
                        " is in use by another process");
  }
}

void CampaignStore::open_log_for_append(std::uintmax_t valid_bytes) {
  const auto path = dir_ / store_file::events;
  log_fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_CLOEXEC, 0644);
  if (log_fd_ < 0) {
    throw IoError("cannot open " + path.string() + ": " + std::strerror(errno));
  }
  // Drop a torn tail so the next append starts on a clean line.
  if (::ftruncate(log_fd_, static_cast<off_t>(valid_bytes)) != 0 ||
      ::lseek(log_fd_, 0, SEEK_END) < 0) {
    throw IoError("cannot prepare " + path.string() + ": " +
                  std::strerror(errno));
  }
}

void CampaignStore::append(const EventRecord& e) {
  std::string line = to_json(e).dump() + "\n";
  const char* p = line.data();
  std::size_t left = line.size();
  while (left > 0) {
    const ssize_t n = ::write(log_fd_, p, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError(std::string("event log write failed: ") +
                    std::strerror(errno));
    }
    p += n;
    left -= static_cast<std::size_t>(n);
  }
  if (options_.durable && ::fdatasync(log_fd_) != 0) {
    throw IoError(std::string("event log sync failed: ") + std::strerror(errno));
  }
  ++since_snapshot_;
}

void CampaignStore::load_catalog_if_present() {
  const auto path = dir_ / store_file::catalog;
  if (fs::exists(path)) catalog_ = load_catalog(path);
}

fs::path CampaignStore::resolve(const std::string& clip_path) const {
  const fs::path p(clip_path);
  return p.is_absolute() ? p : dir_ / p;
}

void CampaignStore::write_snapshot() {
  write_file_atomic(dir_ / store_file::snapshot, campaign_->snapshot().dump());
  since_snapshot_ = 0;
}

void CampaignStore::checkpoint() {
  if (options_.snapshot_every > 0 && since_snapshot_ >= options_.snapshot_every) {
    write_snapshot();
  }
}

std::unique_ptr<CampaignStore> CampaignStore::create(const fs::path& dir,
                                                     const CampaignConfig& config,
                                                     const ClipSets& clips,
                                                     StoreOptions options) {
  fs::create_directories(dir);
  std::unique_ptr<CampaignStore> s(new CampaignStore(dir, std::move(options)));
  s->lock_directory();
  const auto log_path = dir / store_file::events;
  if (fs::exists(log_path) && fs::file_size(log_path) > 0) {
    throw ConflictError("campaign directory " + dir.string() +
                        " already holds an event log");
  }
  fs::remove(dir / store_file::snapshot);
  s->open_log_for_append(0);
  CampaignStore* self = s.get();
  auto sink = [self](const EventRecord& e) {
    self->append(e);
  };
  s->campaign_.emplace(
      Campaign::create(config, clips, sink, s->options_.clock));
  s->load_catalog_if_present();
  return s;
}

std::unique_ptr<CampaignStore> CampaignStore::open(const fs::path& dir,
                                                   StoreOptions options) {
  if (!fs::exists(dir / store_file::events)) {
    throw NotFoundError("no campaign event log in " + dir.string());
  }
  std::unique_ptr<CampaignStore> s(new CampaignStore(dir, std::move(options)));
  s->lock_directory();
  EventLog log = read_event_log(dir / store_file::events);

  std::optional<Campaign> restored;
  const auto snap_path = dir / store_file::snapshot;
  if (fs::exists(snap_path)) {
    try {
      auto snap = nlohmann::json::parse(read_file(snap_path));
      Campaign c = Campaign::from_snapshot(snap);
      // A snapshot ahead of the log cannot be trusted.
      if (c.last_seq() <= (log.events.empty() ? 0 : log.events.back().seq)) {
        c.catch_up(log.events);
        restored.emplace(std::move(c));
      }
    } catch (const nlohmann::json::exception&) {
    } catch (const ParseError&) {
    }
  }
  if (!restored) restored.emplace(Campaign::replay(log.events));

  s->open_log_for_append(log.valid_bytes);
  CampaignStore* self = s.get();
  restored->set_sink([self](const EventRecord& e) {
    self->append(e);
  });
  restored->set_clock(s->options_.clock);
  s->campaign_.emplace(std::move(*restored));
  s->load_catalog_if_present();
  return s;
}

}  // namespace p808
