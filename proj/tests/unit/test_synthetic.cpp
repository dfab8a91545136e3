// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "skycast/data.hpp"
#include "skycast/errors.hpp"
#include "skycast/metrics.hpp"
#include "skycast/synthetic.hpp"
#include "test_util.hpp"

using namespace skycast;
namespace fs = std::filesystem;

namespace {

SceneConfig base_scene() {
  SceneConfig c;
  c.start = parse_iso8601("2016-05-10T13:00:00Z");
  c.end = c.start + 4 * 3600;
  c.cadence_s = 600;
  c.seed = 17;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(Synthetic, NoCloudsNoNoiseGivesClearSky) {
  SceneConfig c = base_scene();
  c.cloud_count = 0;
  c.noise_stddev = 0.0;
  for (const Timestamp t : scene_timestamps(c)) {
    const FrameTruth f = scene_truth(c, t);
    EXPECT_EQ(f.occlusion, 0.0);
    EXPECT_EQ(f.irradiance, clearsky_irradiance(solar_position(c.location, t).zenith));
  }
}

TEST(Synthetic, OpaqueOvercastGivesZeroPlusNoise) {
  SceneConfig c = base_scene();
  c.clouds = {CloudBlob{10, 10, 500, 500, 0, 1.0, 0, 0}, CloudBlob{90, 90, 500, 500, 0, 1.0, 0, 0}};
  c.attenuation = 1.0;
  c.noise_stddev = 0.0;
  for (const Timestamp t : scene_timestamps(c)) {
    EXPECT_EQ(scene_truth(c, t).occlusion, 1.0);
    EXPECT_EQ(scene_truth(c, t).irradiance, 0.0);
  }
  c.noise_stddev = 5.0;
  for (const Timestamp t : scene_timestamps(c)) {
    const double v = scene_truth(c, t).irradiance;
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 20.0);
  }
}

TEST(Synthetic, DipWidthMatchesBlobWidthOverSpeed) {
  SceneConfig c = base_scene();
  c.cadence_s = 30;
  c.start = parse_iso8601("2016-05-10T19:00:00Z");
  c.end = c.start + 60 * 30;
  c.attenuation = 1.0;
  c.noise_stddev = 0.0;
  c.sun_radius_px = 2.0;
  const double sigma = 8.0, speed = 2.0;
  const Timestamp mid = c.start + 30 * 30;
  const auto [sx, sy] = sky_to_pixel(c, solar_position(c.location, mid).zenith,
                                     solar_position(c.location, mid).azimuth);
  c.clouds = {CloudBlob{sx - speed * 30, sy, sigma, sigma, 0.0, 1.0, speed, 0.0}};
  int dipped = 0;
  for (const Timestamp t : scene_timestamps(c)) {
    const FrameTruth f = scene_truth(c, t);
    if (f.irradiance < 0.5 * f.clearsky) ++dipped;
  }
  const double fwhm = 2.0 * std::sqrt(2.0 * std::log(2.0)) * sigma;
  EXPECT_NEAR(dipped, fwhm / speed, 1.0);
}

TEST(Synthetic, LabelBoundsAndOcclusionRange) {
  SceneConfig c = base_scene();
  c.cloud_count = 8;
  c.noise_stddev = 25.0;
  c.end = c.start + 3 * kSecondsPerDay;
  for (const Timestamp t : scene_timestamps(c)) {
    const FrameTruth f = scene_truth(c, t);
    EXPECT_GE(f.occlusion, 0.0);
    EXPECT_LE(f.occlusion, 1.0);
    EXPECT_GE(f.irradiance, 0.0);
    EXPECT_LE(f.irradiance, f.clearsky + 4.0 * c.noise_stddev);
    EXPECT_GE(f.weather.rel_humidity_pct, 0.0);
    EXPECT_LE(f.weather.rel_humidity_pct, 100.0);
  }
}

TEST(Synthetic, SunAzimuthMonotoneAcrossMorning) {
  SceneConfig c = base_scene();
  c.cloud_count = 0;
  c.start = parse_iso8601("2016-05-10T12:30:00Z");  // 06:30 local
  c.end = parse_iso8601("2016-05-10T18:00:00Z");
  const double center = c.image_size / 2.0;
  double prev = -1.0;
  for (const Timestamp t : scene_timestamps(c)) {
    const Image img = render_frame(c, t);
    double mx = 0, my = 0, n = 0;
    for (std::size_t y = 0; y < img.height; ++y) {
      for (std::size_t x = 0; x < img.width; ++x) {
        if (img.at(x, y, 0) == 255 && img.at(x, y, 1) == 255 && img.at(x, y, 2) == 255) {
          mx += x + 0.5;
          my += y + 0.5;
          n += 1;
        }
      }
    }
    ASSERT_GT(n, 0.0);
    mx /= n;
    my /= n;
    // Inverse of the fisheye mapping: north up, east left.
    double az = std::atan2(-(mx - center), -(my - center)) * 180.0 / std::numbers::pi;
    if (az < 0) az += 360.0;
    EXPECT_GT(az, prev);
    EXPECT_NEAR(az, solar_position(c.location, t).azimuth, 10.0);
    prev = az;
  }
}

TEST(Synthetic, GenerateMatchesTruthAndLoads) {
  skycast::testing::TempDir dir("synth");
  SceneConfig c = base_scene();
  const GeneratedScene g = generate_scene(c, dir.path());
  const auto frames = read_frame_manifest(g.frames_csv);
  const auto aux = read_aux_file(g.aux_csv);
  ASSERT_EQ(frames.size(), scene_timestamps(c).size());
  ASSERT_EQ(aux.size(), frames.size());
  for (std::size_t i = 0; i < aux.size(); ++i) {
    const FrameTruth f = scene_truth(c, aux[i].timestamp);
    EXPECT_EQ(aux[i].irradiance_wm2, f.irradiance);
    EXPECT_EQ(aux[i].wind_speed_ms, f.weather.wind_speed_ms);
    EXPECT_EQ(aux[i].pressure_hpa, f.weather.pressure_hpa);
  }
  const auto joined = join_aux(frames, aux, 0, c.location);
  EXPECT_EQ(joined.dropped, 0u);
  const auto samples = load_samples(joined.samples);
  ASSERT_EQ(samples.size(), frames.size());
  EXPECT_EQ(samples[0].image.shape(), (Shape{3, 64, 64}));
  const Image img = decode_image(frames[0].image_path);
  EXPECT_EQ(img.width, 128u);
}

TEST(Synthetic, BitReproducible) {
  skycast::testing::TempDir a("synth_a"), b("synth_b");
  SceneConfig c = base_scene();
  c.cloud_count = 5;
  generate_scene(c, a.path());
  generate_scene(c, b.path());
  EXPECT_EQ(slurp(a.path() / "manifest.csv"), slurp(b.path() / "manifest.csv"));
  EXPECT_EQ(slurp(a.path() / "aux.csv"), slurp(b.path() / "aux.csv"));
  for (const auto& e : fs::directory_iterator(a.path() / "frames")) {
    EXPECT_EQ(slurp(e.path()), slurp(b.path() / "frames" / e.path().filename())) << e.path();
  }
  c.seed = 18;
  EXPECT_NE(scene_truth(c, c.start).irradiance, scene_truth(base_scene(), c.start).irradiance);
}

TEST(Synthetic, OracleForecasterHasZeroError) {
  SceneConfig c = base_scene();
  c.cloud_count = 6;
  c.noise_stddev = 0.0;
  c.end = c.start + 8 * 3600;
  const auto ts = scene_timestamps(c);
  std::vector<double> truth, oracle;
  for (std::size_t i = 0; i + 6 < ts.size(); ++i) {
    // Advance the cloud state by six cadence steps from frame i.
    SceneConfig shifted = c;
    shifted.clouds = clouds_at(c, ts[i]);
    shifted.start = ts[i];
    oracle.push_back(scene_truth(shifted, ts[i + 6]).irradiance);
    truth.push_back(scene_truth(c, ts[i + 6]).irradiance);
  }
  EXPECT_LT(nmap(truth, oracle), 1e-9);
}

TEST(Synthetic, Errors) {
  SceneConfig c = base_scene();
  c.cadence_s = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = base_scene();
  c.clouds = {CloudBlob{0, 0, 5, 5, 0, 1.5, 0, 0}};
  EXPECT_THROW(c.validate(), ConfigError);
  c = base_scene();
  c.attenuation = 1.2;
  EXPECT_THROW(c.validate(), ConfigError);

  skycast::testing::TempDir dir("synth_err");
  std::ofstream(dir.path() / "blocker") << "x";
  EXPECT_THROW(generate_scene(base_scene(), dir.path() / "blocker" / "out"), IoError);
}

}  // namespace
