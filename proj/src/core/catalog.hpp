#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "core/textcodec.hpp"

namespace freshrec {

enum class EventType { Stream, Like, FavoriteArtistAdd, Display, Click };

const char* event_type_name(EventType t);
std::optional<EventType> event_type_from_name(std::string_view name);

struct UsageEvent {
  EventType type = EventType::Stream;
  std::string user_id;
  std::string subject;  // album id, or artist id for FavoriteArtistAdd
  int64_t ts = 0;
  std::optional<int> position;          // required for Display/Click
  std::optional<std::string> slate_id;  // required for Display/Click

  Record to_record() const;
  // Throws CodecError / std::invalid_argument on schema violations.
  static UsageEvent from_record(const Record& rec);
};

struct AlbumMeta {
  std::string album_id;
  std::vector<std::string> artist_ids;
  std::string label_id;
  std::vector<std::string> genre_ids;
  int64_t release_ts = 0;
  std::string title;

  Record to_record() const;
  static AlbumMeta from_record(const Record& rec);
};

struct IngestResult {
  uint64_t accepted = 0;
  std::vector<std::pair<size_t, std::string>> rejected;  // (line_no, reason)
};

struct CatalogError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Entity store plus the raw usage-event log. Single-writer: all mutation
// happens through add_album/add_event/ingest_* between serving batches;
// const readers may be shared across threads once ingestion is quiescent.
class Catalog {
 public:
  // Albums -----------------------------------------------------------------
  void add_album(AlbumMeta album);  // throws CatalogError on invariant breach
  size_t load_catalog_file(const std::string& path);
  const AlbumMeta* find_album(const std::string& album_id) const;
  const std::map<std::string, AlbumMeta>& albums() const { return albums_; }
  // Album ids of an artist, ordered by (release_ts asc, album_id asc).
  const std::vector<std::string>& albums_by_artist(
      const std::string& artist_id) const;

  // Events -----------------------------------------------------------------
  // Appends one event, deduplicating on
  // (user, type, subject, ts, slate_id, position). Returns false if it was
  // a duplicate. Throws on invariant violations.
  bool add_event(const UsageEvent& ev);
  IngestResult ingest_events(std::istream& source);
  IngestResult ingest_events_file(const std::string& path);

  const std::vector<UsageEvent>& events_for_user(const std::string& user) const;
  // Stream/Like events only, in ingestion order (for matrix building).
  const std::vector<UsageEvent>& stream_like_events() const {
    return stream_like_events_;
  }
  size_t event_count() const { return event_count_; }

  // (streams, likes) for an album with ts in [from, to).
  std::pair<uint64_t, uint64_t> count_usage(const std::string& album_id,
                                            int64_t from, int64_t to) const;

  const std::set<std::string>& favorite_artists(const std::string& user) const;

  // New-release logic --------------------------------------------------------
  // Albums with now - release_ts in [0, 7 days), sorted by id.
  std::vector<std::string> new_release_window(int64_t now) const;
  // Windowed albums by one of the user's favorited artists, ordered by
  // release_ts descending then album_id ascending.
  std::vector<std::string> unmissable_for(
      const std::string& user_id,
      const std::vector<std::string>& window) const;

 private:
  std::map<std::string, AlbumMeta> albums_;
  std::map<std::string, std::vector<std::string>> albums_by_artist_;
  mutable std::vector<std::pair<int64_t, std::string>> release_order_;
  mutable bool release_order_dirty_ = false;

  std::unordered_map<std::string, std::vector<UsageEvent>> events_by_user_;
  // Per-album (ts, type) for Stream/Like, kept ts-sorted.
  std::unordered_map<std::string, std::vector<std::pair<int64_t, EventType>>>
      album_usage_;
  std::vector<UsageEvent> stream_like_events_;
  std::unordered_map<std::string, std::set<std::string>> favorites_;
  std::unordered_set<std::string> dedup_;
  size_t event_count_ = 0;

  void ensure_release_order() const;
};

}  // namespace freshrec
