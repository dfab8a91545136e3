// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "skycast/timeutil.hpp"

namespace skycast {

struct GeoLocation {
  double latitude = 0.0;   // degrees, north positive
  double longitude = 0.0;  // degrees, east positive
  int timezone_offset_minutes = 0;

  /// Throws InvalidArgument when a coordinate is out of range.
  void validate() const;
};

struct SolarPosition {
  double zenith = 0.0;   // degrees in [0, 180]
  double azimuth = 0.0;  // degrees clockwise from north, [0, 360)
  Timestamp timestamp = 0;

  bool above_horizon() const { return zenith < 90.0; }
};

/// Low-precision ephemeris (Fourier-series declination and equation of
/// time), good to a few tenths of a degree between 1950 and 2100. No
/// refraction correction. Throws InvalidArgument outside that year range or
/// for invalid coordinates.
SolarPosition solar_position(const GeoLocation& loc, Timestamp utc);

/// Same, for a clock reading in the location's own timezone.
SolarPosition solar_position_local(const GeoLocation& loc, Timestamp local_clock);

/// 1095 cos z exp(-0.057 / cos z) in W/m^2, zero once cos z <= 0.
double clearsky_irradiance(double zenith_deg);

/// Upper bound of clearsky_irradiance, reached at z = 0.
double clearsky_peak();

/// Keeps records whose timestamp has the sun above the horizon, in order.
/// Record needs a `timestamp` member.
template <class Record>
std::vector<Record> daylight_filter(const std::vector<Record>& records, const GeoLocation& loc) {
  std::vector<Record> out;
  for (const auto& r : records) {
    if (solar_position(loc, r.timestamp).above_horizon()) out.push_back(r);
  }
  return out;
}

}  // namespace skycast
