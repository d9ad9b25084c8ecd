#pragma once

#include <cstdint>
#include <string>

namespace c2far {

enum class Freq { Hourly, Daily };

Freq parse_freq(const std::string& s);          // "H" | "D"
std::string freq_to_string(Freq f);

// Civil timestamp with second resolution, UTC, no leap seconds.
struct Timestamp {
  std::int64_t epoch_seconds = 0;

  bool operator==(const Timestamp&) const = default;
};

// Accepts "YYYY-MM-DDTHH:MM:SS" or "YYYY-MM-DD HH:MM:SS" or "YYYY-MM-DD".
Timestamp parse_iso8601(const std::string& s);
std::string format_iso8601(Timestamp ts);

Timestamp advance(Timestamp ts, Freq f, std::int64_t steps);

int hour_of_day(Timestamp ts);    // 0..23
int weekday_mon0(Timestamp ts);   // 0 = Monday .. 6 = Sunday
int day_of_month(Timestamp ts);   // 1..31

}  // namespace c2far
