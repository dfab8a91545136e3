// SPDX-License-Identifier: Apache-2.0
//
// Deterministic synthetic sky-video generator. Frames are equidistant
// fisheye renderings of a blue sky with the sun disk and advected Gaussian
// cloud blobs; irradiance labels follow the clear-sky model attenuated by
// the cloud opacity over the sun disk.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "skycast/data.hpp"
#include "skycast/image.hpp"
#include "skycast/solar.hpp"
#include "skycast/timeutil.hpp"

namespace skycast {

/// Gaussian opacity blob. Positions and velocities are in pixels of the
/// rendered image; velocity is per frame (one cadence interval).
struct CloudBlob {
  double x = 0.0;
  double y = 0.0;
  double sigma_x = 10.0;
  double sigma_y = 10.0;
  double correlation = 0.0;  // in (-1, 1)
  double opacity = 0.8;  // peak, in [0, 1]
  double vx = 0.0;
  double vy = 0.0;
};

struct WeatherProcess {
  double wind_base_ms = 2.0;
  /// Wind speed gain per pixel-per-frame of mean cloud speed.
  double wind_per_cloud_speed = 1.5;
  double humidity_base_pct = 35.0;
  /// Humidity rise per unit of whole-sky mean cloud opacity.
  double humidity_per_cover = 120.0;
  double pressure_base_hpa = 835.0;
  double pressure_per_cover = -20.0;
  double temperature_base_c = 12.0;
  double temperature_amplitude_c = 8.0;
  double period_days = 3.0;
  double noise_fraction = 0.02;
};

struct SceneConfig {
  GeoLocation location{39.742, -105.18, -420};
  std::string station_id = "synthetic";
  Timestamp start = 0;  // first frame, UTC
  Timestamp end = 0;  // exclusive
  Timestamp cadence_s = 600;
  /// Only frames with the sun at most this far from zenith are emitted.
  double max_zenith_deg = 85.0;
  std::size_t image_size = 128;
  /// Fisheye radius in pixels that maps to 90 degrees from zenith.
  double horizon_radius_px = 60.0;
  double sun_radius_px = 3.0;
  bool render_sun = true;
  std::array<double, 3> sky_rgb{0.25, 0.45, 0.85};
  std::array<double, 3> cloud_rgb{0.92, 0.92, 0.95};

  /// Explicit clouds. When empty, `cloud_count` blobs are drawn from the seed.
  std::vector<CloudBlob> clouds;
  std::size_t cloud_count = 4;
  double cloud_sigma_min_px = 6.0;
  double cloud_sigma_max_px = 18.0;
  double cloud_opacity_min = 0.5;
  double cloud_opacity_max = 1.0;
  double cloud_speed_max_px = 1.5;

  double attenuation = 0.8;  // alpha in [0, 1]
  double noise_stddev = 5.0;  // W/m^2
  WeatherProcess weather;
  std::uint64_t seed = 1;

  void validate() const;
  /// Explicit clouds, or the seeded draw when none are given.
  std::vector<CloudBlob> resolved_clouds() const;
};

struct FrameTruth {
  Timestamp timestamp = 0;
  double zenith = 0.0;
  double azimuth = 0.0;
  double clearsky = 0.0;
  double occlusion = 0.0;  // in [0, 1]
  double irradiance = 0.0;  // label, >= 0
  double sun_x = 0.0;
  double sun_y = 0.0;
  AuxRecord weather;
};

/// Closed-form ground truth at any time; labels written by generate_scene
/// are produced by this same function.
FrameTruth scene_truth(const SceneConfig& config, Timestamp t);

/// Fisheye pixel coordinates of a sky direction (north up, east left).
std::pair<double, double> sky_to_pixel(const SceneConfig& config, double zenith_deg, double azimuth_deg);

/// Cloud centers at time t (wrapped into the image).
std::vector<CloudBlob> clouds_at(const SceneConfig& config, Timestamp t);

/// Opacity field at a pixel, clipped to [0, 1].
double cloud_opacity(const std::vector<CloudBlob>& clouds, std::size_t image_size, double x, double y);

Image render_frame(const SceneConfig& config, Timestamp t);

/// Frame timestamps start, start + cadence, ... before end with the sun
/// within max_zenith_deg.
std::vector<Timestamp> scene_timestamps(const SceneConfig& config);

struct GeneratedScene {
  std::filesystem::path frames_csv;
  std::filesystem::path aux_csv;
  std::vector<FrameTruth> truth;
};

/// Writes frames/<timestamp>.png, manifest.csv and aux.csv under out_dir.
/// Throws IoError when the directory cannot be written.
GeneratedScene generate_scene(const SceneConfig& config, const std::filesystem::path& out_dir);

/// The samples generate_scene followed by load_samples would yield, built
/// in memory without touching disk.
std::vector<SkySample> scene_samples(const SceneConfig& config, std::size_t side = 64);

}  // namespace skycast
