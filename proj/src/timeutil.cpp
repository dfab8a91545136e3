// SPDX-License-Identifier: Apache-2.0
#include "skycast/timeutil.hpp"

#include <fmt/format.h>

#include <charconv>
#include <chrono>

#include "skycast/errors.hpp"

namespace skycast {
namespace {

namespace chr = std::chrono;

int read_int(std::string_view text, std::size_t pos, std::size_t len) {
  if (pos + len > text.size()) throw InvalidArgument("truncated timestamp '" + std::string(text) + "'");
  int v = 0;
  const char* first = text.data() + pos;
  const auto [ptr, ec] = std::from_chars(first, first + len, v);
  if (ec != std::errc() || ptr != first + len) {
    throw InvalidArgument("malformed timestamp '" + std::string(text) + "'");
  }
  return v;
}

void expect_char(std::string_view text, std::size_t pos, std::string_view allowed) {
  if (pos >= text.size() || allowed.find(text[pos]) == std::string_view::npos) {
    throw InvalidArgument("malformed timestamp '" + std::string(text) + "'");
  }
}

}  // namespace

Timestamp from_civil(int year, unsigned month, unsigned day, int hour, int minute, int second) {
  const chr::year_month_day ymd{chr::year{year}, chr::month{month}, chr::day{day}};
  if (!ymd.ok()) throw InvalidArgument(fmt::format("invalid date {:04d}-{:02d}-{:02d}", year, month, day));
  const auto days = chr::sys_days{ymd}.time_since_epoch().count();
  return static_cast<Timestamp>(days) * kSecondsPerDay + hour * 3600 + minute * 60 + second;
}

Timestamp parse_iso8601(std::string_view text) {
  while (!text.empty() && (text.back() == ' ' || text.back() == '\r')) text.remove_suffix(1);
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  const int year = read_int(text, 0, 4);
  expect_char(text, 4, "-");
  const int month = read_int(text, 5, 2);
  expect_char(text, 7, "-");
  const int day = read_int(text, 8, 2);
  if (month < 1 || month > 12 || day < 1 || day > 31) {
    throw InvalidArgument("malformed timestamp '" + std::string(text) + "'");
  }
  int hour = 0, minute = 0, second = 0;
  std::size_t pos = 10;
  if (pos < text.size()) {
    expect_char(text, pos, "T ");
    hour = read_int(text, 11, 2);
    expect_char(text, 13, ":");
    minute = read_int(text, 14, 2);
    pos = 16;
    if (pos < text.size() && text[pos] == ':') {
      second = read_int(text, 17, 2);
      pos = 19;
      // Fractional seconds are truncated.
      if (pos < text.size() && text[pos] == '.') {
        ++pos;
        while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
      }
    }
    if (hour > 23 || minute > 59 || second > 60) {
      throw InvalidArgument("malformed timestamp '" + std::string(text) + "'");
    }
  }
  int offset_s = 0;
  if (pos < text.size()) {
    if (text[pos] == 'Z' || text[pos] == 'z') {
      ++pos;
    } else {
      expect_char(text, pos, "+-");
      const int sign = text[pos] == '-' ? -1 : 1;
      const int oh = read_int(text, pos + 1, 2);
      int om = 0;
      pos += 3;
      if (pos < text.size() && text[pos] == ':') {
        om = read_int(text, pos + 1, 2);
        pos += 3;
      } else if (pos + 2 <= text.size()) {
        om = read_int(text, pos, 2);
        pos += 2;
      }
      offset_s = sign * (oh * 3600 + om * 60);
    }
  }
  if (pos != text.size()) throw InvalidArgument("trailing characters in timestamp '" + std::string(text) + "'");
  return from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day), hour, minute, second) -
         offset_s;
}

std::int64_t day_number(Timestamp t) {
  return t >= 0 ? t / kSecondsPerDay : -((-t + kSecondsPerDay - 1) / kSecondsPerDay);
}

CivilTime to_civil(Timestamp t) {
  const std::int64_t days = day_number(t);
  const std::int64_t secs = t - days * kSecondsPerDay;
  const chr::sys_days sd{chr::days{days}};
  const chr::year_month_day ymd{sd};
  const chr::sys_days jan1{ymd.year() / chr::January / 1};
  CivilTime c{};
  c.year = static_cast<int>(ymd.year());
  c.month = static_cast<unsigned>(ymd.month());
  c.day = static_cast<unsigned>(ymd.day());
  c.hour = static_cast<int>(secs / 3600);
  c.minute = static_cast<int>(secs % 3600 / 60);
  c.second = static_cast<int>(secs % 60);
  c.day_of_year = static_cast<unsigned>((sd - jan1).count() + 1);
  c.days_in_year = ymd.year().is_leap() ? 366 : 365;
  return c;
}

std::string format_iso8601(Timestamp t) {
  const CivilTime c = to_civil(t);
  return fmt::format("{:04d}-{:02d}-{:02d}T{:02d}:{:02d}:{:02d}Z", c.year, c.month, c.day, c.hour, c.minute,
                     c.second);
}

std::string format_date(Timestamp t) {
  const CivilTime c = to_civil(t);
  return fmt::format("{:04d}-{:02d}-{:02d}", c.year, c.month, c.day);
}

double time_of_day_fraction(Timestamp t, int utc_offset_minutes) {
  const Timestamp local = t + static_cast<Timestamp>(utc_offset_minutes) * 60;
  const Timestamp secs = local - day_number(local) * kSecondsPerDay;
  return static_cast<double>(secs) / static_cast<double>(kSecondsPerDay);
}

}  // namespace skycast
