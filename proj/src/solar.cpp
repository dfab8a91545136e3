// SPDX-License-Identifier: Apache-2.0
#include "skycast/solar.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "skycast/errors.hpp"

namespace skycast {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double wrap360(double a) {
  a = std::fmod(a, 360.0);
  return a < 0.0 ? a + 360.0 : a;
}

}  // namespace

void GeoLocation::validate() const {
  if (!(latitude >= -90.0 && latitude <= 90.0)) {
    throw InvalidArgument("latitude " + std::to_string(latitude) + " outside [-90, 90]");
  }
  if (!(longitude >= -180.0 && longitude <= 180.0)) {
    throw InvalidArgument("longitude " + std::to_string(longitude) + " outside [-180, 180]");
  }
  if (timezone_offset_minutes < -16 * 60 || timezone_offset_minutes > 16 * 60) {
    throw InvalidArgument("timezone offset " + std::to_string(timezone_offset_minutes) + " min out of range");
  }
}

SolarPosition solar_position(const GeoLocation& loc, Timestamp utc) {
  loc.validate();
  const CivilTime c = to_civil(utc);
  if (c.year < 1950 || c.year > 2100) {
    throw InvalidArgument("timestamp year " + std::to_string(c.year) + " outside 1950-2100");
  }
  const double hours = c.hour + c.minute / 60.0 + c.second / 3600.0;
  // Fractional year in radians.
  const double g = 2.0 * std::numbers::pi / c.days_in_year * (c.day_of_year - 1 + (hours - 12.0) / 24.0);
  const double eqtime = 229.18 * (0.000075 + 0.001868 * std::cos(g) - 0.032077 * std::sin(g) -
                                  0.014615 * std::cos(2 * g) - 0.040849 * std::sin(2 * g));
  const double decl = 0.006918 - 0.399912 * std::cos(g) + 0.070257 * std::sin(g) - 0.006758 * std::cos(2 * g) +
                      0.000907 * std::sin(2 * g) - 0.002697 * std::cos(3 * g) + 0.00148 * std::sin(3 * g);

  const double true_solar_minutes = hours * 60.0 + eqtime + 4.0 * loc.longitude;
  const double hour_angle = (true_solar_minutes / 4.0 - 180.0) * kDeg;
  const double lat = loc.latitude * kDeg;

  double cos_z = std::sin(lat) * std::sin(decl) + std::cos(lat) * std::cos(decl) * std::cos(hour_angle);
  cos_z = std::clamp(cos_z, -1.0, 1.0);

  SolarPosition p;
  p.timestamp = utc;
  p.zenith = std::acos(cos_z) / kDeg;
  const double az = std::atan2(-std::sin(hour_angle) * std::cos(decl),
                               std::sin(decl) * std::cos(lat) - std::cos(decl) * std::sin(lat) * std::cos(hour_angle));
  p.azimuth = wrap360(az / kDeg);
  if (p.azimuth >= 360.0) p.azimuth = 0.0;
  return p;
}

SolarPosition solar_position_local(const GeoLocation& loc, Timestamp local_clock) {
  SolarPosition p =
      solar_position(loc, local_clock - static_cast<Timestamp>(loc.timezone_offset_minutes) * 60);
  p.timestamp = local_clock - static_cast<Timestamp>(loc.timezone_offset_minutes) * 60;
  return p;
}

double clearsky_irradiance(double zenith_deg) {
  const double c = std::cos(zenith_deg * kDeg);
  if (!(c > 0.0) || zenith_deg >= 90.0) return 0.0;
  return 1095.0 * c * std::exp(-0.057 / c);
}

double clearsky_peak() { return 1095.0 * std::exp(-0.057); }

}  // namespace skycast
