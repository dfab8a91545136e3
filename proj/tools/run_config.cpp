// SPDX-License-Identifier: Apache-2.0
#include "run_config.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <iterator>

#include "skycast/errors.hpp"
#include "skycast/metrics.hpp"

namespace skycast::cli {

namespace {

using nlohmann::json;

// Key-checked view of one config object.
class Section {
 public:
  Section(const json& j, std::string name, std::initializer_list<const char*> keys) : j_(j), name_(std::move(name)) {
    if (!j.is_object()) throw ConfigError(fmt::format("config section '{}' must be an object", name_));
    for (const auto& [k, v] : j.items()) {
      if (std::find_if(keys.begin(), keys.end(), [&](const char* s) { return k == s; }) == keys.end()) {
        throw ConfigError(fmt::format("unknown config key '{}.{}'", name_, k));
      }
    }
  }

  template <class T>
  void get(const char* key, T& out) const {
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(fmt::format("config key '{}.{}' has the wrong type", name_, key));
    }
  }

  void time(const char* key, Timestamp& out) const {
    std::string s;
    get(key, s);
    if (s.empty()) return;
    try {
      out = parse_iso8601(s);
    } catch (const Error&) {
      throw ConfigError(fmt::format("config key '{}.{}' is not an ISO-8601 time: '{}'", name_, key, s));
    }
  }

  const json& raw() const { return j_; }
  const std::string& name() const { return name_; }

 private:
  const json& j_;
  std::string name_;
};

const json& section_or_empty(const json& j, const char* key) {
  static const json empty = json::object();
  return j.contains(key) ? j.at(key) : empty;
}

json location_json(const GeoLocation& l) {
  return {{"latitude", l.latitude}, {"longitude", l.longitude}, {"timezone_offset_minutes", l.timezone_offset_minutes}};
}

void read_location(const Section& s, GeoLocation& l) {
  s.get("latitude", l.latitude);
  s.get("longitude", l.longitude);
  s.get("timezone_offset_minutes", l.timezone_offset_minutes);
  try {
    l.validate();
  } catch (const Error& e) {
    throw ConfigError(fmt::format("config section '{}': {}", s.name(), e.what()));
  }
}

json windows_to_json(const WindowOptions& w) {
  return {{"cadence_s", w.cadence_s},
          {"lookback", w.lookback},
          {"horizon", w.horizon},
          {"stride_s", w.stride_s},
          {"gap_tolerance_s", w.gap_tolerance_s},
          {"horizon_step_s", w.horizon_step_s},
          {"bridge_nights", w.bridge_nights},
          {"min_bridge_gap_s", w.min_bridge_gap_s},
          {"max_bridge_gap_s", w.max_bridge_gap_s}};
}

WindowOptions windows_from_json(const json& j) {
  WindowOptions w;
  std::string preset;
  if (j.is_object() && j.contains("preset")) {
    preset = j.at("preset").is_string() ? j.at("preset").get<std::string>() : "";
    if (preset == "arizona") {
      w = WindowOptions::arizona();
    } else if (preset != "colorado") {
      throw ConfigError("config key 'windows.preset' must be 'colorado' or 'arizona'");
    }
  }
  const Section s(j, "windows",
                  {"preset", "cadence_s", "lookback", "horizon", "stride_s", "gap_tolerance_s", "horizon_step_s",
                   "bridge_nights", "min_bridge_gap_s", "max_bridge_gap_s"});
  s.get("cadence_s", w.cadence_s);
  s.get("lookback", w.lookback);
  s.get("horizon", w.horizon);
  s.get("stride_s", w.stride_s);
  s.get("gap_tolerance_s", w.gap_tolerance_s);
  s.get("horizon_step_s", w.horizon_step_s);
  s.get("bridge_nights", w.bridge_nights);
  s.get("min_bridge_gap_s", w.min_bridge_gap_s);
  s.get("max_bridge_gap_s", w.max_bridge_gap_s);
  try {
    w.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("config section 'windows': ") + e.what());
  }
  return w;
}

json weather_to_json(const WeatherProcess& w) {
  return {{"wind_base_ms", w.wind_base_ms},
          {"wind_per_cloud_speed", w.wind_per_cloud_speed},
          {"humidity_base_pct", w.humidity_base_pct},
          {"humidity_per_cover", w.humidity_per_cover},
          {"pressure_base_hpa", w.pressure_base_hpa},
          {"pressure_per_cover", w.pressure_per_cover},
          {"temperature_base_c", w.temperature_base_c},
          {"temperature_amplitude_c", w.temperature_amplitude_c},
          {"period_days", w.period_days},
          {"noise_fraction", w.noise_fraction}};
}

json cloud_to_json(const CloudBlob& c) {
  return {{"x", c.x},
          {"y", c.y},
          {"sigma_x", c.sigma_x},
          {"sigma_y", c.sigma_y},
          {"correlation", c.correlation},
          {"opacity", c.opacity},
          {"vx", c.vx},
          {"vy", c.vy}};
}

}  // namespace

std::optional<Timestamp> DataSettings::split_time() const {
  if (split.empty()) return std::nullopt;
  return parse_iso8601(split);
}

unsigned EvalSettings::grouping_mask() const {
  unsigned m = kGroupNone;
  for (const auto& g : groupings) {
    if (g == "hour") {
      m |= kGroupHour;
    } else if (g == "month") {
      m |= kGroupMonth;
    } else if (g == "year") {
      m |= kGroupYear;
    } else if (g == "horizon") {
      m |= kGroupHorizon;
    } else {
      throw ConfigError("config key 'eval.groupings' has unknown grouping '" + g + "'");
    }
  }
  return m;
}

json scene_to_json(const SceneConfig& s) {
  json clouds = json::array();
  for (const auto& c : s.clouds) clouds.push_back(cloud_to_json(c));
  json j = location_json(s.location);
  j.update({{"station_id", s.station_id},
            {"start", format_iso8601(s.start)},
            {"end", format_iso8601(s.end)},
            {"cadence_s", s.cadence_s},
            {"max_zenith_deg", s.max_zenith_deg},
            {"image_size", s.image_size},
            {"horizon_radius_px", s.horizon_radius_px},
            {"sun_radius_px", s.sun_radius_px},
            {"render_sun", s.render_sun},
            {"sky_rgb", s.sky_rgb},
            {"cloud_rgb", s.cloud_rgb},
            {"clouds", clouds},
            {"cloud_count", s.cloud_count},
            {"cloud_sigma_min_px", s.cloud_sigma_min_px},
            {"cloud_sigma_max_px", s.cloud_sigma_max_px},
            {"cloud_opacity_min", s.cloud_opacity_min},
            {"cloud_opacity_max", s.cloud_opacity_max},
            {"cloud_speed_max_px", s.cloud_speed_max_px},
            {"attenuation", s.attenuation},
            {"noise_stddev", s.noise_stddev},
            {"weather", weather_to_json(s.weather)},
            {"seed", s.seed}});
  return j;
}

SceneConfig scene_from_json(const json& j) {
  SceneConfig c = RunConfig::demo().scene;
  const Section s(j, "scene",
                  {"latitude", "longitude", "timezone_offset_minutes", "station_id", "start", "end", "cadence_s",
                   "max_zenith_deg", "image_size", "horizon_radius_px", "sun_radius_px", "render_sun", "sky_rgb",
                   "cloud_rgb", "clouds", "cloud_count", "cloud_sigma_min_px", "cloud_sigma_max_px",
                   "cloud_opacity_min", "cloud_opacity_max", "cloud_speed_max_px", "attenuation", "noise_stddev",
                   "weather", "seed"});
  read_location(s, c.location);
  s.get("station_id", c.station_id);
  s.time("start", c.start);
  c.end = c.start + 3 * kSecondsPerDay;
  s.time("end", c.end);
  s.get("cadence_s", c.cadence_s);
  s.get("max_zenith_deg", c.max_zenith_deg);
  s.get("image_size", c.image_size);
  s.get("horizon_radius_px", c.horizon_radius_px);
  s.get("sun_radius_px", c.sun_radius_px);
  s.get("render_sun", c.render_sun);
  s.get("sky_rgb", c.sky_rgb);
  s.get("cloud_rgb", c.cloud_rgb);
  s.get("cloud_count", c.cloud_count);
  s.get("cloud_sigma_min_px", c.cloud_sigma_min_px);
  s.get("cloud_sigma_max_px", c.cloud_sigma_max_px);
  s.get("cloud_opacity_min", c.cloud_opacity_min);
  s.get("cloud_opacity_max", c.cloud_opacity_max);
  s.get("cloud_speed_max_px", c.cloud_speed_max_px);
  s.get("attenuation", c.attenuation);
  s.get("noise_stddev", c.noise_stddev);
  s.get("seed", c.seed);
  if (j.contains("weather")) {
    const Section w(j.at("weather"), "scene.weather",
                    {"wind_base_ms", "wind_per_cloud_speed", "humidity_base_pct", "humidity_per_cover",
                     "pressure_base_hpa", "pressure_per_cover", "temperature_base_c", "temperature_amplitude_c",
                     "period_days", "noise_fraction"});
    auto& p = c.weather;
    w.get("wind_base_ms", p.wind_base_ms);
    w.get("wind_per_cloud_speed", p.wind_per_cloud_speed);
    w.get("humidity_base_pct", p.humidity_base_pct);
    w.get("humidity_per_cover", p.humidity_per_cover);
    w.get("pressure_base_hpa", p.pressure_base_hpa);
    w.get("pressure_per_cover", p.pressure_per_cover);
    w.get("temperature_base_c", p.temperature_base_c);
    w.get("temperature_amplitude_c", p.temperature_amplitude_c);
    w.get("period_days", p.period_days);
    w.get("noise_fraction", p.noise_fraction);
  }
  if (j.contains("clouds")) {
    if (!j.at("clouds").is_array()) throw ConfigError("config key 'scene.clouds' must be an array");
    c.clouds.clear();
    std::size_t i = 0;
    for (const auto& item : j.at("clouds")) {
      const Section b(item, fmt::format("scene.clouds[{}]", i++),
                      {"x", "y", "sigma_x", "sigma_y", "correlation", "opacity", "vx", "vy"});
      CloudBlob blob;
      b.get("x", blob.x);
      b.get("y", blob.y);
      b.get("sigma_x", blob.sigma_x);
      b.get("sigma_y", blob.sigma_y);
      b.get("correlation", blob.correlation);
      b.get("opacity", blob.opacity);
      b.get("vx", blob.vx);
      b.get("vy", blob.vy);
      c.clouds.push_back(blob);
    }
  }
  c.validate();
  return c;
}

RunConfig RunConfig::demo() {
  RunConfig r;
  r.scene.start = parse_iso8601("2016-05-01T12:00:00Z");
  r.scene.end = r.scene.start + 3 * kSecondsPerDay;
  return r;
}

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  {
    const Section top(j, "config", {"scene", "data", "windows", "nowcast", "forecast", "train", "eval"});
    (void)top;
  }
  RunConfig r = demo();
  r.raw = j;
  if (j.contains("scene")) r.scene = scene_from_json(j.at("scene"));

  const Section d(section_or_empty(j, "data"), "data",
                  {"max_gap_s", "latitude", "longitude", "timezone_offset_minutes", "split",
                   "validation_fraction"});
  d.get("max_gap_s", r.data.max_gap_s);
  read_location(d, r.data.location);
  d.get("split", r.data.split);
  d.get("validation_fraction", r.data.validation_fraction);
  if (!r.data.split.empty()) {
    try {
      (void)r.data.split_time();
    } catch (const Error&) {
      throw ConfigError("config key 'data.split' is not an ISO-8601 time: '" + r.data.split + "'");
    }
  }
  if (!(r.data.validation_fraction >= 0.0 && r.data.validation_fraction < 1.0)) {
    throw ConfigError("config key 'data.validation_fraction' must be in [0, 1)");
  }

  if (j.contains("windows")) r.windows = windows_from_json(j.at("windows"));
  if (j.contains("nowcast")) r.nowcast = NowcastConfig::from_json(j.at("nowcast"));
  if (j.contains("forecast")) r.forecast = ForecastConfig::from_json(j.at("forecast"));

  const Section t(section_or_empty(j, "train"), "train",
                  {"epochs", "batch_size", "window_batch_size", "seed", "learning_rate", "decay", "l2", "loss_m", "patience", "shuffle"});
  t.get("epochs", r.train.epochs);
  t.get("batch_size", r.train.batch_size);
  t.get("window_batch_size", r.train.window_batch_size);
  t.get("seed", r.train.seed);
  t.get("learning_rate", r.train.learning_rate);
  t.get("decay", r.train.decay);
  t.get("l2", r.train.l2);
  t.get("loss_m", r.train.loss_m);
  t.get("patience", r.train.patience);
  t.get("shuffle", r.train.shuffle);
  if (r.train.batch_size == 0) throw ConfigError("config key 'train.batch_size' must be positive");
  if (r.train.window_batch_size == 0) throw ConfigError("config key 'train.window_batch_size' must be positive");
  try {
    r.loss().validate();
    r.adam().validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("config section 'train': ") + e.what());
  }

  const Section e(section_or_empty(j, "eval"), "eval", {"subset", "groupings"});
  e.get("subset", r.eval.subset);
  e.get("groupings", r.eval.groupings);
  if (r.eval.subset != "test" && r.eval.subset != "train" && r.eval.subset != "all") {
    throw ConfigError("config key 'eval.subset' must be 'test', 'train' or 'all'");
  }
  (void)r.eval.grouping_mask();
  return r;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(std::string(std::istreambuf_iterator<char>(f), {}));
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

json RunConfig::to_json() const {
  json d = location_json(data.location);
  d.update({{"max_gap_s", data.max_gap_s},
            {"split", data.split},
            {"validation_fraction", data.validation_fraction}});
  return {{"scene", scene_to_json(scene)},
          {"data", d},
          {"windows", windows_to_json(windows)},
          {"nowcast", nowcast.to_json()},
          {"forecast", forecast.to_json()},
          {"train",
           {{"epochs", train.epochs},
            {"batch_size", train.batch_size},
            {"window_batch_size", train.window_batch_size},
            {"seed", train.seed},
            {"learning_rate", train.learning_rate},
            {"decay", train.decay},
            {"l2", train.l2},
            {"loss_m", train.loss_m},
            {"patience", train.patience},
            {"shuffle", train.shuffle}}},
          {"eval", {{"subset", eval.subset}, {"groupings", eval.groupings}}}};
}

AdamConfig RunConfig::adam() const {
  AdamConfig a;
  a.learning_rate = train.learning_rate;
  a.decay = train.decay;
  return a;
}

TrainOptions RunConfig::options(bool forecast) const {
  TrainOptions o;
  o.epochs = train.epochs;
  o.batch_size = forecast ? train.window_batch_size : train.batch_size;
  o.seed = train.seed;
  o.shuffle = train.shuffle;
  o.patience = train.patience;
  return o;
}

}  // namespace skycast::cli
