#include "core/util.hpp"

#include <cstdio>

namespace freshrec {

namespace {

// Civil-date helpers (proleptic Gregorian), days since 1970-01-01.
struct CivilDate {
  int y, m, d;
};

CivilDate civil_from_days(int64_t z) {
  z += 719468;
  const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const int64_t doe = z - era * 146097;
  const int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const int64_t y = yoe + era * 400;
  const int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const int64_t mp = (5 * doy + 2) / 153;
  const int64_t d = doy - (153 * mp + 2) / 5 + 1;
  const int64_t m = mp < 10 ? mp + 3 : mp - 9;
  return {static_cast<int>(y + (m <= 2)), static_cast<int>(m),
          static_cast<int>(d)};
}

int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const int64_t era = (y >= 0 ? y : y - 399) / 400;
  const int64_t yoe = y - era * 400;
  const int64_t doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
  const int64_t doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + doe - 719468;
}

// ISO weekday, Monday=1..Sunday=7. 1970-01-01 was a Thursday.
int iso_weekday(int64_t days) {
  int64_t wd = (days + 3) % 7;
  if (wd < 0) wd += 7;
  return static_cast<int>(wd) + 1;
}

}  // namespace

std::string IsoWeek::label() const {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-W%02d", year, week);
  return buf;
}

IsoWeek iso_week(int64_t epoch_seconds) {
  int64_t days = epoch_seconds / kSecondsPerDay;
  if (epoch_seconds < 0 && epoch_seconds % kSecondsPerDay != 0) --days;
  // The Thursday of the same ISO week determines the ISO year.
  const int64_t thursday = days - iso_weekday(days) + 4;
  const CivilDate cd = civil_from_days(thursday);
  const int64_t jan1 = days_from_civil(cd.y, 1, 1);
  const int week = static_cast<int>((thursday - jan1) / 7) + 1;
  return {cd.y, week};
}

}  // namespace freshrec
