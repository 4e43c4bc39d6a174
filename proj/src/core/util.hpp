#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

namespace freshrec {

constexpr int64_t kSecondsPerHour = 3600;
constexpr int64_t kSecondsPerDay = 86400;
constexpr int64_t kNewReleaseWindowSeconds = 7 * kSecondsPerDay;

// SplitMix64: cheap, well-mixed 64-bit hash/stream derivation.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a. Used for label-bucket hashing and per-user RNG streams; must be
// stable across platforms (std::hash is not).
inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ISO-8601 week of a UTC timestamp, e.g. "2023-W09". Used for weekly
// metric aggregation.
struct IsoWeek {
  int year = 0;
  int week = 0;
  std::string label() const;
  friend bool operator<(const IsoWeek& a, const IsoWeek& b) {
    return a.year != b.year ? a.year < b.year : a.week < b.week;
  }
  friend bool operator==(const IsoWeek& a, const IsoWeek& b) {
    return a.year == b.year && a.week == b.week;
  }
};

IsoWeek iso_week(int64_t epoch_seconds);

}  // namespace freshrec
