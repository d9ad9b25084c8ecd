#include "c2far/timeutil.hpp"

#include <cstdio>

#include "c2far/common.hpp"

namespace c2far {

namespace {

constexpr std::int64_t kSecondsPerDay = 86400;

// Days since 1970-01-01 for a civil date (proleptic Gregorian).
std::int64_t days_from_civil(std::int64_t y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                       static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, int& m, int& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y += (m <= 2);
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::int64_t floor_mod(std::int64_t a, std::int64_t b) { return a - floor_div(a, b) * b; }

}  // namespace

Freq parse_freq(const std::string& s) {
  if (s == "H" || s == "h" || s == "hourly") return Freq::Hourly;
  if (s == "D" || s == "d" || s == "daily") return Freq::Daily;
  throw InputError("unknown frequency: '" + s + "' (expected \"H\" or \"D\")");
}

std::string freq_to_string(Freq f) { return f == Freq::Hourly ? "H" : "D"; }

Timestamp parse_iso8601(const std::string& s) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  int n = std::sscanf(s.c_str(), "%d-%d-%d%*1[T ]%d:%d:%d", &y, &mo, &d, &h, &mi, &sec);
  if (n != 6) {
    h = mi = sec = 0;
    n = std::sscanf(s.c_str(), "%d-%d-%d", &y, &mo, &d);
    if (n != 3) throw InputError("cannot parse timestamp: '" + s + "'");
  }
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 || mi > 59 ||
      sec < 0 || sec > 60) {
    throw InputError("timestamp fields out of range: '" + s + "'");
  }
  Timestamp ts;
  ts.epoch_seconds = days_from_civil(y, mo, d) * kSecondsPerDay + h * 3600 + mi * 60 + sec;
  return ts;
}

std::string format_iso8601(Timestamp ts) {
  std::int64_t days = floor_div(ts.epoch_seconds, kSecondsPerDay);
  std::int64_t rem = floor_mod(ts.epoch_seconds, kSecondsPerDay);
  std::int64_t y;
  int m, d;
  civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04lld-%02d-%02dT%02lld:%02lld:%02lld",
                static_cast<long long>(y), m, d, static_cast<long long>(rem / 3600),
                static_cast<long long>((rem / 60) % 60), static_cast<long long>(rem % 60));
  return buf;
}

Timestamp advance(Timestamp ts, Freq f, std::int64_t steps) {
  std::int64_t unit = (f == Freq::Hourly) ? 3600 : kSecondsPerDay;
  return Timestamp{ts.epoch_seconds + steps * unit};
}

int hour_of_day(Timestamp ts) {
  return static_cast<int>(floor_mod(ts.epoch_seconds, kSecondsPerDay) / 3600);
}

int weekday_mon0(Timestamp ts) {
  std::int64_t days = floor_div(ts.epoch_seconds, kSecondsPerDay);
  // 1970-01-01 was a Thursday (Monday-based index 3).
  return static_cast<int>(floor_mod(days + 3, 7));
}

int day_of_month(Timestamp ts) {
  std::int64_t days = floor_div(ts.epoch_seconds, kSecondsPerDay);
  std::int64_t y;
  int m, d;
  civil_from_days(days, y, m, d);
  return d;
}

}  // namespace c2far
