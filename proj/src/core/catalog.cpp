#include "core/catalog.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "core/util.hpp"

namespace freshrec {

namespace {

std::string join_ids(const std::vector<std::string>& ids) {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(',');
    out += ids[i];
  }
  return out;
}

std::vector<std::string> split_ids(std::string_view s) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (pos <= s.size()) {
    size_t c = s.find(',', pos);
    if (c == std::string_view::npos) c = s.size();
    if (c > pos) out.emplace_back(s.substr(pos, c - pos));
    pos = c + 1;
    if (c == s.size()) break;
  }
  return out;
}

int64_t parse_ts(std::string_view v, const char* what) {
  try {
    size_t idx = 0;
    int64_t ts = std::stoll(std::string(v), &idx);
    if (idx != v.size()) throw std::invalid_argument("trailing");
    return ts;
  } catch (const std::exception&) {
    throw std::invalid_argument(std::string(what) + " must be an integer");
  }
}

const std::vector<std::string> kEmptyIdList;
const std::vector<UsageEvent> kEmptyEventList;
const std::set<std::string> kEmptyIdSet;

}  // namespace

const char* event_type_name(EventType t) {
  switch (t) {
    case EventType::Stream: return "stream";
    case EventType::Like: return "like";
    case EventType::FavoriteArtistAdd: return "favorite_artist_add";
    case EventType::Display: return "display";
    case EventType::Click: return "click";
  }
  return "?";
}

std::optional<EventType> event_type_from_name(std::string_view name) {
  if (name == "stream") return EventType::Stream;
  if (name == "like") return EventType::Like;
  if (name == "favorite_artist_add") return EventType::FavoriteArtistAdd;
  if (name == "display") return EventType::Display;
  if (name == "click") return EventType::Click;
  return std::nullopt;
}

Record UsageEvent::to_record() const {
  Record rec;
  rec.add("type", event_type_name(type));
  rec.add("user", user_id);
  rec.add("subject", subject);
  rec.add("ts", std::to_string(ts));
  if (position) rec.add("position", std::to_string(*position));
  if (slate_id) rec.add("slate", *slate_id);
  return rec;
}

UsageEvent UsageEvent::from_record(const Record& rec) {
  UsageEvent ev;
  auto type = event_type_from_name(rec.require("type"));
  if (!type)
    throw std::invalid_argument("unknown event type '" +
                                std::string(rec.require("type")) + "'");
  ev.type = *type;
  ev.user_id = std::string(rec.require("user"));
  ev.subject = std::string(rec.require("subject"));
  ev.ts = parse_ts(rec.require("ts"), "ts");
  if (ev.user_id.empty()) throw std::invalid_argument("empty user id");
  if (ev.subject.empty()) throw std::invalid_argument("empty subject id");
  if (auto p = rec.get("position")) {
    int64_t pos = parse_ts(*p, "position");
    if (pos < 1) throw std::invalid_argument("position must be >=1");
    ev.position = static_cast<int>(pos);
  }
  if (auto s = rec.get("slate")) ev.slate_id = std::string(*s);
  if (ev.type == EventType::Display || ev.type == EventType::Click) {
    if (!ev.position) throw std::invalid_argument("position must be >=1");
    if (!ev.slate_id) throw std::invalid_argument("display/click requires a slate id");
  }
  return ev;
}

Record AlbumMeta::to_record() const {
  Record rec;
  rec.add("album", album_id);
  rec.add("artists", join_ids(artist_ids));
  rec.add("label", label_id);
  rec.add("genres", join_ids(genre_ids));
  rec.add("release_ts", std::to_string(release_ts));
  rec.add("title", title);
  return rec;
}

AlbumMeta AlbumMeta::from_record(const Record& rec) {
  AlbumMeta a;
  a.album_id = std::string(rec.require("album"));
  a.artist_ids = split_ids(rec.require("artists"));
  a.label_id = std::string(rec.get("label").value_or(""));
  a.genre_ids = split_ids(rec.get("genres").value_or(""));
  a.release_ts = parse_ts(rec.require("release_ts"), "release_ts");
  a.title = std::string(rec.get("title").value_or(""));
  return a;
}

void Catalog::add_album(AlbumMeta album) {
  if (album.album_id.empty()) throw CatalogError("empty album id");
  if (album.artist_ids.empty())
    throw CatalogError("album '" + album.album_id + "': artist_ids empty");
  if (album.release_ts <= 0)
    throw CatalogError("album '" + album.album_id + "': release_ts must be > 0");
  if (albums_.count(album.album_id))
    throw CatalogError("duplicate album id '" + album.album_id + "'");
  for (const auto& artist : album.artist_ids) {
    auto& list = albums_by_artist_[artist];
    list.push_back(album.album_id);
  }
  release_order_.emplace_back(album.release_ts, album.album_id);
  release_order_dirty_ = true;
  const std::string id = album.album_id;
  albums_.emplace(id, std::move(album));
  // Keep per-artist lists ordered by (release_ts, id).
  for (const auto& artist : albums_[id].artist_ids) {
    auto& list = albums_by_artist_[artist];
    std::sort(list.begin(), list.end(),
              [this](const std::string& a, const std::string& b) {
                const auto& ma = albums_.at(a);
                const auto& mb = albums_.at(b);
                if (ma.release_ts != mb.release_ts)
                  return ma.release_ts < mb.release_ts;
                return a < b;
              });
  }
}

size_t Catalog::load_catalog_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CatalogError("cannot open catalog file: " + path);
  std::string line;
  size_t count = 0, line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    try {
      add_album(AlbumMeta::from_record(decode_record(line)));
    } catch (const std::exception& e) {
      throw CatalogError(path + ":" + std::to_string(line_no) + ": " +
                         e.what());
    }
    ++count;
  }
  return count;
}

const AlbumMeta* Catalog::find_album(const std::string& album_id) const {
  auto it = albums_.find(album_id);
  return it == albums_.end() ? nullptr : &it->second;
}

const std::vector<std::string>& Catalog::albums_by_artist(
    const std::string& artist_id) const {
  auto it = albums_by_artist_.find(artist_id);
  return it == albums_by_artist_.end() ? kEmptyIdList : it->second;
}

bool Catalog::add_event(const UsageEvent& ev) {
  if (ev.user_id.empty()) throw CatalogError("empty user id");
  if (ev.subject.empty()) throw CatalogError("empty subject id");
  if (ev.type == EventType::Display || ev.type == EventType::Click) {
    if (!ev.position || *ev.position < 1)
      throw CatalogError("position must be >=1");
    if (!ev.slate_id) throw CatalogError("display/click requires a slate id");
  }
  std::string key = ev.user_id;
  key.push_back('\x1f');
  key += event_type_name(ev.type);
  key.push_back('\x1f');
  key += ev.subject;
  key.push_back('\x1f');
  key += std::to_string(ev.ts);
  key.push_back('\x1f');
  if (ev.slate_id) key += *ev.slate_id;
  key.push_back('\x1f');
  if (ev.position) key += std::to_string(*ev.position);
  if (!dedup_.insert(key).second) return false;

  auto& user_events = events_by_user_[ev.user_id];
  // Maintain per-user timestamp order (stable for equal timestamps).
  auto it = std::upper_bound(
      user_events.begin(), user_events.end(), ev.ts,
      [](int64_t ts, const UsageEvent& e) { return ts < e.ts; });
  user_events.insert(it, ev);

  if (ev.type == EventType::Stream || ev.type == EventType::Like) {
    auto& usage = album_usage_[ev.subject];
    auto uit = std::upper_bound(
        usage.begin(), usage.end(), ev.ts,
        [](int64_t ts, const auto& p) { return ts < p.first; });
    usage.insert(uit, {ev.ts, ev.type});
    stream_like_events_.push_back(ev);
  } else if (ev.type == EventType::FavoriteArtistAdd) {
    favorites_[ev.user_id].insert(ev.subject);
  }
  ++event_count_;
  return true;
}

IngestResult Catalog::ingest_events(std::istream& source) {
  if (!source) throw CatalogError("unreadable event source");
  IngestResult result;
  std::string line;
  size_t line_no = 0;
  while (std::getline(source, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    try {
      add_event(UsageEvent::from_record(decode_record(line)));
      ++result.accepted;
    } catch (const std::exception& e) {
      result.rejected.emplace_back(line_no, e.what());
    }
  }
  return result;
}

IngestResult Catalog::ingest_events_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CatalogError("cannot open event file: " + path);
  return ingest_events(in);
}

const std::vector<UsageEvent>& Catalog::events_for_user(
    const std::string& user) const {
  auto it = events_by_user_.find(user);
  return it == events_by_user_.end() ? kEmptyEventList : it->second;
}

std::pair<uint64_t, uint64_t> Catalog::count_usage(const std::string& album_id,
                                                   int64_t from,
                                                   int64_t to) const {
  auto it = album_usage_.find(album_id);
  if (it == album_usage_.end()) return {0, 0};
  const auto& usage = it->second;
  auto lo = std::lower_bound(
      usage.begin(), usage.end(), from,
      [](const auto& p, int64_t ts) { return p.first < ts; });
  uint64_t streams = 0, likes = 0;
  for (; lo != usage.end() && lo->first < to; ++lo) {
    if (lo->second == EventType::Stream)
      ++streams;
    else
      ++likes;
  }
  return {streams, likes};
}

const std::set<std::string>& Catalog::favorite_artists(
    const std::string& user) const {
  auto it = favorites_.find(user);
  return it == favorites_.end() ? kEmptyIdSet : it->second;
}

void Catalog::ensure_release_order() const {
  if (!release_order_dirty_) return;
  std::sort(release_order_.begin(), release_order_.end());
  release_order_dirty_ = false;
}

std::vector<std::string> Catalog::new_release_window(int64_t now) const {
  ensure_release_order();
  // release_ts in (now - 7d, now]  <=>  now - release_ts in [0, 7d)
  auto lo = std::upper_bound(
      release_order_.begin(), release_order_.end(),
      std::make_pair(now - kNewReleaseWindowSeconds,
                     std::string("\x7f")));
  std::vector<std::string> out;
  for (; lo != release_order_.end() && lo->first <= now; ++lo)
    out.push_back(lo->second);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> Catalog::unmissable_for(
    const std::string& user_id, const std::vector<std::string>& window) const {
  const auto& favs = favorite_artists(user_id);
  if (favs.empty()) return {};
  std::vector<std::string> hits;
  for (const auto& album_id : window) {
    const AlbumMeta* a = find_album(album_id);
    if (!a) continue;
    for (const auto& artist : a->artist_ids) {
      if (favs.count(artist)) {
        hits.push_back(album_id);
        break;
      }
    }
  }
  std::sort(hits.begin(), hits.end(),
            [this](const std::string& x, const std::string& y) {
              const auto& mx = albums_.at(x);
              const auto& my = albums_.at(y);
              if (mx.release_ts != my.release_ts)
                return mx.release_ts > my.release_ts;
              return x < y;
            });
  return hits;
}

}  // namespace freshrec
