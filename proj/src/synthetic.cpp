// SPDX-License-Identifier: Apache-2.0
#include "skycast/synthetic.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <numbers>

#include "skycast/errors.hpp"
#include "skycast/rng.hpp"

namespace skycast {

namespace {

constexpr std::uint64_t kCloudSalt = 0xC10D;
constexpr std::uint64_t kWeatherSalt = 0x3EA7;

double frames_since_start(const SceneConfig& c, Timestamp t) {
  return static_cast<double>(t - c.start) / static_cast<double>(c.cadence_s);
}

double wrap(double v, double size) {
  const double r = std::fmod(v, size);
  return r < 0.0 ? r + size : r;
}

// Mean opacity over a 16x16 grid of the whole image.
double sky_cover(const std::vector<CloudBlob>& clouds, std::size_t size) {
  double s = 0.0;
  const double step = static_cast<double>(size) / 16.0;
  for (int i = 0; i < 16; ++i) {
    for (int j = 0; j < 16; ++j) s += cloud_opacity(clouds, size, (j + 0.5) * step, (i + 0.5) * step);
  }
  return s / 256.0;
}

double sun_occlusion(const SceneConfig& c, const std::vector<CloudBlob>& clouds, double sx, double sy) {
  const double r = c.sun_radius_px;
  double sum = 0.0;
  std::size_t n = 0;
  const int steps = std::max(1, static_cast<int>(std::ceil(r / 0.5)));
  for (int i = -steps; i <= steps; ++i) {
    for (int j = -steps; j <= steps; ++j) {
      const double dx = j * 0.5, dy = i * 0.5;
      if (dx * dx + dy * dy > r * r) continue;
      sum += cloud_opacity(clouds, c.image_size, sx + dx, sy + dy);
      ++n;
    }
  }
  return std::clamp(sum / static_cast<double>(n), 0.0, 1.0);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write '" + path.string() + "'");
}

std::string frame_name(Timestamp t) {
  const CivilTime c = to_civil(t);
  return fmt::format("{:04d}{:02d}{:02d}T{:02d}{:02d}{:02d}Z.png", c.year, c.month, c.day, c.hour, c.minute,
                     c.second);
}

}  // namespace

void SceneConfig::validate() const {
  location.validate();
  if (cadence_s <= 0) throw ConfigError("scene: cadence_s must be positive");
  if (end < start) throw ConfigError("scene: end precedes start");
  if (image_size < 8) throw ConfigError("scene: image_size must be at least 8");
  if (!(horizon_radius_px > 0.0) || !(sun_radius_px > 0.0)) throw ConfigError("scene: radii must be positive");
  if (!(attenuation >= 0.0 && attenuation <= 1.0)) throw ConfigError("scene: attenuation must be in [0, 1]");
  if (!(noise_stddev >= 0.0)) throw ConfigError("scene: noise_stddev must be non-negative");
  if (!(max_zenith_deg > 0.0 && max_zenith_deg <= 90.0)) throw ConfigError("scene: max_zenith_deg must be in (0, 90]");
  if (!(cloud_opacity_min >= 0.0 && cloud_opacity_min <= cloud_opacity_max && cloud_opacity_max <= 1.0)) {
    throw ConfigError("scene: cloud opacity range must lie in [0, 1]");
  }
  if (!(cloud_sigma_min_px > 0.0 && cloud_sigma_min_px <= cloud_sigma_max_px)) {
    throw ConfigError("scene: cloud sigma range is invalid");
  }
  for (const auto& b : clouds) {
    if (!(b.opacity >= 0.0 && b.opacity <= 1.0)) throw ConfigError("scene: cloud opacity must be in [0, 1]");
    if (!(b.sigma_x > 0.0 && b.sigma_y > 0.0)) throw ConfigError("scene: cloud sigma must be positive");
    if (!(std::abs(b.correlation) < 1.0)) throw ConfigError("scene: cloud correlation must be in (-1, 1)");
  }
}

std::vector<CloudBlob> SceneConfig::resolved_clouds() const {
  if (!clouds.empty()) return clouds;
  Rng rng(derive_seed(seed, kCloudSalt));
  const double size = static_cast<double>(image_size);
  const double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
  std::vector<CloudBlob> out(cloud_count);
  for (auto& b : out) {
    b.x = rng.uniform(0.0, size);
    b.y = rng.uniform(0.0, size);
    b.sigma_x = rng.uniform(cloud_sigma_min_px, cloud_sigma_max_px);
    b.sigma_y = rng.uniform(cloud_sigma_min_px, cloud_sigma_max_px);
    b.correlation = rng.uniform(-0.5, 0.5);
    b.opacity = rng.uniform(cloud_opacity_min, cloud_opacity_max);
    const double speed = rng.uniform(0.3, 1.0) * cloud_speed_max_px;
    const double dir = heading + rng.uniform(-0.3, 0.3);
    b.vx = speed * std::cos(dir);
    b.vy = speed * std::sin(dir);
  }
  return out;
}

std::pair<double, double> sky_to_pixel(const SceneConfig& c, double zenith_deg, double azimuth_deg) {
  const double center = static_cast<double>(c.image_size) / 2.0;
  const double r = c.horizon_radius_px * zenith_deg / 90.0;
  const double az = azimuth_deg * std::numbers::pi / 180.0;
  return {center - r * std::sin(az), center - r * std::cos(az)};
}

std::vector<CloudBlob> clouds_at(const SceneConfig& c, Timestamp t) {
  const double f = frames_since_start(c, t);
  const double size = static_cast<double>(c.image_size);
  std::vector<CloudBlob> out = c.resolved_clouds();
  for (auto& b : out) {
    b.x = wrap(b.x + b.vx * f, size);
    b.y = wrap(b.y + b.vy * f, size);
  }
  return out;
}

double cloud_opacity(const std::vector<CloudBlob>& clouds, std::size_t image_size, double x, double y) {
  const double size = static_cast<double>(image_size);
  double o = 0.0;
  for (const auto& b : clouds) {
    // Nearest periodic image of the blob.
    const double dx = std::remainder(x - b.x, size) / b.sigma_x;
    const double dy = std::remainder(y - b.y, size) / b.sigma_y;
    const double rho = b.correlation;
    const double q = (dx * dx - 2.0 * rho * dx * dy + dy * dy) / (1.0 - rho * rho);
    o += b.opacity * std::exp(-0.5 * q);
  }
  return std::clamp(o, 0.0, 1.0);
}

FrameTruth scene_truth(const SceneConfig& c, Timestamp t) {
  FrameTruth f;
  f.timestamp = t;
  const SolarPosition sp = solar_position(c.location, t);
  f.zenith = sp.zenith;
  f.azimuth = sp.azimuth;
  f.clearsky = clearsky_irradiance(sp.zenith);
  std::tie(f.sun_x, f.sun_y) = sky_to_pixel(c, sp.zenith, sp.azimuth);
  const auto clouds = clouds_at(c, t);
  f.occlusion = sp.above_horizon() ? sun_occlusion(c, clouds, f.sun_x, f.sun_y) : 0.0;

  Rng noise(derive_seed(c.seed, static_cast<std::uint64_t>(t)));
  // Truncated at 4 sigma so labels stay within clear-sky + 4 sigma.
  const double e = std::clamp(noise.normal(), -4.0, 4.0) * c.noise_stddev;
  f.irradiance = std::max(0.0, f.clearsky * (1.0 - c.attenuation * f.occlusion) + e);

  const WeatherProcess& w = c.weather;
  Rng wn(derive_seed(c.seed ^ kWeatherSalt, static_cast<std::uint64_t>(t)));
  double mean_speed = 0.0;
  for (const auto& b : clouds) mean_speed += std::hypot(b.vx, b.vy);
  if (!clouds.empty()) mean_speed /= static_cast<double>(clouds.size());
  const double cover = sky_cover(clouds, c.image_size);
  const double phase = 2.0 * std::numbers::pi * static_cast<double>(t) / (w.period_days * kSecondsPerDay);
  const double tod = time_of_day_fraction(t, c.location.timezone_offset_minutes);
  const double nf = w.noise_fraction;
  f.weather.timestamp = t;
  f.weather.wind_speed_ms =
      std::max(0.0, (w.wind_base_ms + w.wind_per_cloud_speed * mean_speed + 0.5 * std::sin(phase)) * (1.0 + nf * wn.normal()));
  f.weather.rel_humidity_pct =
      std::clamp((w.humidity_base_pct + w.humidity_per_cover * cover + 5.0 * std::cos(phase)) * (1.0 + nf * wn.normal()),
                 0.0, 100.0);
  f.weather.pressure_hpa = w.pressure_base_hpa + w.pressure_per_cover * cover + 3.0 * std::sin(phase) + nf * wn.normal();
  f.weather.air_temp_c = w.temperature_base_c +
                         w.temperature_amplitude_c * std::sin(2.0 * std::numbers::pi * (tod - 0.375)) -
                         4.0 * cover + nf * 10.0 * wn.normal();
  f.weather.irradiance_wm2 = f.irradiance;
  return f;
}

Image render_frame(const SceneConfig& c, Timestamp t) {
  const std::size_t n = c.image_size;
  const double center = static_cast<double>(n) / 2.0;
  const FrameTruth truth = scene_truth(c, t);
  const auto clouds = clouds_at(c, t);
  const bool sun_up = truth.zenith < 90.0 && c.render_sun;
  const double glow = 3.0 * c.sun_radius_px;
  Image img(n, n, 0);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      const double r = std::hypot(px - center, py - center);
      if (r > c.horizon_radius_px) continue;
      std::array<double, 3> rgb{};
      const double shade = 0.85 + 0.15 * r / c.horizon_radius_px;
      for (int k = 0; k < 3; ++k) rgb[k] = c.sky_rgb[k] * shade;
      if (sun_up) {
        const double d = std::hypot(px - truth.sun_x, py - truth.sun_y);
        const double halo = 0.6 * std::exp(-0.5 * d * d / (glow * glow));
        for (int k = 0; k < 3; ++k) rgb[k] = d <= c.sun_radius_px ? 1.0 : std::min(1.0, rgb[k] + halo);
      }
      const double o = cloud_opacity(clouds, n, px, py);
      for (int k = 0; k < 3; ++k) {
        const double v = (1.0 - o) * rgb[k] + o * c.cloud_rgb[k];
        img.at(x, y, k) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      }
    }
  }
  return img;
}

std::vector<Timestamp> scene_timestamps(const SceneConfig& c) {
  std::vector<Timestamp> out;
  for (Timestamp t = c.start; t < c.end; t += c.cadence_s) {
    if (solar_position(c.location, t).zenith <= c.max_zenith_deg) out.push_back(t);
  }
  return out;
}

GeneratedScene generate_scene(const SceneConfig& c, const std::filesystem::path& out_dir) {
  c.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "frames", ec);
  if (ec) throw IoError(fmt::format("cannot create '{}': {}", (out_dir / "frames").string(), ec.message()));

  const auto ts = scene_timestamps(c);
  GeneratedScene g;
  g.truth.resize(ts.size());
  std::exception_ptr failure;
  const auto count = static_cast<std::ptrdiff_t>(ts.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      const Timestamp t = ts[static_cast<std::size_t>(i)];
      g.truth[static_cast<std::size_t>(i)] = scene_truth(c, t);
      write_png(out_dir / "frames" / frame_name(t), render_frame(c, t));
    } catch (...) {
#pragma omp critical(skycast_scene_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  std::string manifest = std::string(kFrameHeader) + "\n";
  std::string aux = std::string(kAuxHeader) + "\n";
  for (const auto& f : g.truth) {
    const std::string iso = format_iso8601(f.timestamp);
    manifest += fmt::format("{},frames/{},{}\n", iso, frame_name(f.timestamp), c.station_id);
    const AuxRecord& w = f.weather;
    aux += fmt::format("{},{},{},{},{},{}\n", iso, w.wind_speed_ms, w.rel_humidity_pct, w.pressure_hpa, w.air_temp_c,
                       w.irradiance_wm2);
  }
  g.frames_csv = out_dir / "manifest.csv";
  g.aux_csv = out_dir / "aux.csv";
  write_text(g.frames_csv, manifest);
  write_text(g.aux_csv, aux);
  return g;
}

std::vector<SkySample> scene_samples(const SceneConfig& c, std::size_t side) {
  c.validate();
  const auto ts = scene_timestamps(c);
  std::vector<SkySample> out(ts.size());
  std::exception_ptr failure;
  const auto count = static_cast<std::ptrdiff_t>(ts.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      const Timestamp t = ts[static_cast<std::size_t>(i)];
      const FrameTruth f = scene_truth(c, t);
      SkySample& s = out[static_cast<std::size_t>(i)];
      s.image = normalize_image(render_frame(c, t), side);
      s.aux = make_aux_vector(f.weather, t, c.location);
      s.irradiance = f.irradiance;
      s.timestamp = t;
    } catch (...) {
#pragma omp critical(skycast_scene_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace skycast
