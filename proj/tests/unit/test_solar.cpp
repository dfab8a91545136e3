// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "skycast/errors.hpp"
#include "skycast/solar.hpp"

using namespace skycast;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kObliquity = 23.44;

struct Stamped {
  Timestamp timestamp;
};

// Minute of the UTC day with the smallest zenith.
std::pair<Timestamp, double> scan_noon(const GeoLocation& loc, Timestamp day_start) {
  Timestamp best_t = day_start;
  double best_z = 1e9;
  for (Timestamp m = 0; m < 1440; ++m) {
    const double z = solar_position(loc, day_start + m * 60).zenith;
    if (z < best_z) {
      best_z = z;
      best_t = day_start + m * 60;
    }
  }
  return {best_t, best_z};
}

TEST(TimeUtil, Iso8601RoundTrip) {
  EXPECT_EQ(parse_iso8601("1970-01-01T00:00:00Z"), 0);
  EXPECT_EQ(parse_iso8601("2015-03-20T12:30:15Z"), 1426854615);
  EXPECT_EQ(parse_iso8601("2015-03-20 12:30:15"), 1426854615);
  EXPECT_EQ(parse_iso8601("2015-03-20T05:30:15-07:00"), 1426854615);
  EXPECT_EQ(parse_iso8601("2015-03-20"), 1426809600);
  EXPECT_EQ(format_iso8601(1426854615), "2015-03-20T12:30:15Z");
  EXPECT_EQ(format_date(1426854615), "2015-03-20");
  EXPECT_THROW(parse_iso8601("2015-13-01T00:00:00Z"), InvalidArgument);
  EXPECT_THROW(parse_iso8601("2015-02-30T00:00:00Z"), InvalidArgument);
  EXPECT_THROW(parse_iso8601("yesterday"), InvalidArgument);
  EXPECT_THROW(parse_iso8601("2015-03-20T12:30:15Zjunk"), InvalidArgument);
  const CivilTime c = to_civil(parse_iso8601("2016-12-31T23:59:59Z"));
  EXPECT_EQ(c.day_of_year, 366u);
  EXPECT_EQ(c.days_in_year, 366u);
  EXPECT_DOUBLE_EQ(time_of_day_fraction(parse_iso8601("2016-06-01T18:00:00Z")), 0.75);
  EXPECT_DOUBLE_EQ(time_of_day_fraction(parse_iso8601("2016-06-01T18:00:00Z"), -420), 11.0 / 24.0);
}

TEST(ClearSky, Values) {
  EXPECT_NEAR(clearsky_irradiance(0.0), 1034.3, 0.05);
  EXPECT_NEAR(clearsky_irradiance(0.0), 1095.0 * std::exp(-0.057), 1e-9);
  EXPECT_EQ(clearsky_irradiance(90.0), 0.0);
  EXPECT_NEAR(clearsky_irradiance(60.0), 488.5, 0.05);
  EXPECT_NEAR(clearsky_irradiance(60.0), 1095.0 * 0.5 * std::exp(-0.114), 1e-9);
  EXPECT_EQ(clearsky_irradiance(135.0), 0.0);
  EXPECT_EQ(clearsky_irradiance(180.0), 0.0);
}

TEST(ClearSky, MonotoneAndBounded) {
  double prev = clearsky_irradiance(0.0);
  for (int i = 1; i < 9000; ++i) {
    const double v = clearsky_irradiance(i * 0.01);
    EXPECT_LT(v, prev) << "z=" << i * 0.01;
    EXPECT_LE(v, clearsky_peak());
    prev = v;
  }
  for (int i = 9000; i <= 18000; ++i) EXPECT_EQ(clearsky_irradiance(i * 0.01), 0.0);
}

TEST(SolarPosition, EquatorEquinoxNoon) {
  const GeoLocation eq{0.0, 0.0, 0};
  const auto [t, z] = scan_noon(eq, parse_iso8601("2021-03-20T00:00:00Z"));
  EXPECT_LT(z, 1.0);
  // Equation of time is about -7.5 minutes on this date.
  EXPECT_NEAR(static_cast<double>(t - parse_iso8601("2021-03-20T12:07:30Z")), 0.0, 120.0);
}

TEST(SolarPosition, MidnightBelowHorizon) {
  for (const double lat : {-60.0, -20.0, 0.0, 35.0, 55.0}) {
    const GeoLocation loc{lat, 30.0, 120};
    // 00:00 local clock near local solar midnight at 30E with UTC+2.
    EXPECT_GT(solar_position_local(loc, parse_iso8601("2020-06-21T00:00:00Z")).zenith, 90.0) << lat;
    EXPECT_GT(solar_position_local(loc, parse_iso8601("2020-12-21T00:00:00Z")).zenith, 90.0) << lat;
  }
}

TEST(SolarPosition, NoonZenithMatchesDeclination) {
  struct Case {
    const char* day;
    double declination;
  };
  for (const Case c : {Case{"2019-06-21T00:00:00Z", kObliquity}, Case{"2019-12-21T00:00:00Z", -kObliquity},
                       Case{"2019-09-23T00:00:00Z", 0.0}}) {
    for (const double lat : {-35.0, 0.0, 40.0, 33.45}) {
      const GeoLocation loc{lat, 0.0, 0};
      const auto [t, z] = scan_noon(loc, parse_iso8601(c.day));
      EXPECT_NEAR(z, std::abs(lat - c.declination), 0.5) << c.day << " lat " << lat;
      const double az = solar_position(loc, t).azimuth;
      if (lat > c.declination + 1.0) {
        EXPECT_NEAR(az, 180.0, 2.0);
      } else if (lat < c.declination - 1.0) {
        EXPECT_TRUE(az < 2.0 || az > 358.0) << az;
      }
    }
  }
}

TEST(SolarPosition, UnimodalOverTheDay) {
  const GeoLocation boulder{40.0, -105.27, -420};
  // Local solar midnight falls near 07:00 UTC; scan 23 hours between two midnights.
  const Timestamp start = parse_iso8601("2016-05-10T07:30:00Z");
  std::vector<double> z;
  for (Timestamp m = 0; m < 1380; ++m) z.push_back(solar_position(boulder, start + m * 60).zenith);
  const auto min_it = std::min_element(z.begin(), z.end());
  const std::size_t k = static_cast<std::size_t>(min_it - z.begin());
  for (std::size_t i = 1; i <= k; ++i) EXPECT_LE(z[i], z[i - 1]) << i;
  for (std::size_t i = k + 1; i < z.size(); ++i) EXPECT_GE(z[i], z[i - 1]) << i;
  // Solar noon near 12:00 + 105.27 * 4 min - eot (about 3.6 min on May 10).
  const double expected_minutes = 12 * 60 + 105.27 * 4 - 3.6 - 7.5 * 60;
  EXPECT_NEAR(static_cast<double>(k), expected_minutes, 3.0);
  // Morning sun in the east, afternoon in the west.
  EXPECT_LT(solar_position(boulder, start + static_cast<Timestamp>(k - 120) * 60).azimuth, 180.0);
  EXPECT_GT(solar_position(boulder, start + static_cast<Timestamp>(k + 120) * 60).azimuth, 180.0);
}

TEST(SolarPosition, TimezoneConsistent) {
  const Timestamp utc = parse_iso8601("2012-08-03T17:41:00Z");
  const GeoLocation a{36.1, -115.2, 0};
  const double z0 = solar_position(a, utc).zenith;
  for (const int offset : {-480, -420, 0, 330, 600}) {
    GeoLocation b = a;
    b.timezone_offset_minutes = offset;
    const auto p = solar_position_local(b, utc + offset * 60);
    EXPECT_EQ(p.zenith, z0) << offset;
    EXPECT_EQ(p.timestamp, utc);
  }
}

TEST(SolarPosition, Deterministic) {
  const GeoLocation loc{-12.3, 130.8, 570};
  const Timestamp t = parse_iso8601("2030-01-15T03:10:00Z");
  EXPECT_EQ(solar_position(loc, t).zenith, solar_position(loc, t).zenith);
  EXPECT_EQ(solar_position(loc, t).azimuth, solar_position(loc, t).azimuth);
}

TEST(SolarPosition, RejectsBadInput) {
  EXPECT_THROW(solar_position({91.0, 0.0, 0}, 0), InvalidArgument);
  EXPECT_THROW(solar_position({0.0, -181.0, 0}, 0), InvalidArgument);
  EXPECT_THROW(solar_position({0.0, 0.0, 0}, parse_iso8601("1949-12-31T12:00:00Z")), InvalidArgument);
  EXPECT_THROW(solar_position({0.0, 0.0, 0}, parse_iso8601("2101-01-01T12:00:00Z")), InvalidArgument);
  EXPECT_NO_THROW(solar_position({0.0, 0.0, 0}, parse_iso8601("2100-12-31T12:00:00Z")));
}

TEST(DaylightFilter, NoonAndMidnight) {
  const GeoLocation loc{40.0, 0.0, 0};
  std::vector<Stamped> noon, midnight;
  for (int d = 0; d < 30; ++d) {
    noon.push_back({parse_iso8601("2018-04-01T12:00:00Z") + d * kSecondsPerDay});
    midnight.push_back({parse_iso8601("2018-04-01T00:00:00Z") + d * kSecondsPerDay});
  }
  const auto kept = daylight_filter(noon, loc);
  ASSERT_EQ(kept.size(), noon.size());
  for (std::size_t i = 0; i < kept.size(); ++i) EXPECT_EQ(kept[i].timestamp, noon[i].timestamp);
  EXPECT_TRUE(daylight_filter(midnight, loc).empty());
}

TEST(DaylightFilter, JuneDayLengthAt40North) {
  const GeoLocation loc{40.0, 0.0, 0};
  std::vector<Stamped> day;
  const Timestamp start = parse_iso8601("2019-06-21T00:00:00Z");
  for (int i = 0; i < 144; ++i) day.push_back({start + i * 600});
  const double kept = static_cast<double>(daylight_filter(day, loc).size());
  // Geometric day length: cos H0 = -tan(lat) tan(decl).
  const double h0 = std::acos(-std::tan(40.0 * kDeg) * std::tan(kObliquity * kDeg)) / kDeg;
  const double geometric_frames = 2.0 * h0 / 15.0 * 6.0;
  EXPECT_NEAR(kept, geometric_frames, 2.0);
  // Published almanac sunrise-to-sunset (15 h 01 min, refraction included).
  EXPECT_NEAR(kept, (15.0 + 1.0 / 60.0) * 6.0, 2.0);
}

}  // namespace
