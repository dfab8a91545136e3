// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace skycast {

/// Seconds since 1970-01-01T00:00:00Z.
using Timestamp = std::int64_t;

constexpr Timestamp kSecondsPerDay = 86400;

/// Parses "YYYY-MM-DDTHH:MM:SS" with an optional "Z" or "+HH:MM"/"-HH:MM"
/// suffix (a space may replace the "T"; a bare date means midnight).
/// Throws InvalidArgument on malformed input.
Timestamp parse_iso8601(std::string_view text);

/// "YYYY-MM-DDTHH:MM:SSZ"
std::string format_iso8601(Timestamp t);

/// "YYYY-MM-DD"
std::string format_date(Timestamp t);

struct CivilTime {
  int year;
  unsigned month;
  unsigned day;
  int hour;
  int minute;
  int second;
  unsigned day_of_year;  // 1-based
  unsigned days_in_year;
};

CivilTime to_civil(Timestamp t);
Timestamp from_civil(int year, unsigned month, unsigned day, int hour = 0, int minute = 0, int second = 0);

/// Floor of t / 86400.
std::int64_t day_number(Timestamp t);

/// Clock time of day in [0, 1) at the given UTC offset.
double time_of_day_fraction(Timestamp t, int utc_offset_minutes = 0);

}  // namespace skycast
