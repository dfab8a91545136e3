// SPDX-License-Identifier: Apache-2.0
//
// One structured (JSON) config per run. Sections mirror the module configs:
// scene, data, windows, nowcast, forecast, train, eval. Missing keys take
// defaults; unknown keys are rejected with their dotted name.
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skycast/data.hpp"
#include "skycast/forecast.hpp"
#include "skycast/nowcast.hpp"
#include "skycast/optim.hpp"
#include "skycast/synthetic.hpp"

namespace skycast::cli {

struct DataSettings {
  Timestamp max_gap_s = 300;
  GeoLocation location{39.742, -105.18, -420};
  /// ISO-8601 boundary; samples (or whole windows) before it train, the
  /// rest test. Empty means no split.
  std::string split;
  /// Fraction of the training samples (taken from the end) held out for
  /// early stopping. 0 disables.
  double validation_fraction = 0.0;

  std::optional<Timestamp> split_time() const;
};

struct TrainSettings {
  std::size_t epochs = 100;
  /// Nowcast samples per step.
  std::size_t batch_size = 32;
  /// Forecast windows per step.
  std::size_t window_batch_size = 8;
  std::uint64_t seed = 1;
  double learning_rate = 1e-3;
  double decay = 0.95;
  double l2 = 1e-6;
  double loss_m = 1.0;
  std::size_t patience = 10;
  bool shuffle = true;
};

struct EvalSettings {
  /// "test", "train" or "all". "test" falls back to all when no split is set.
  std::string subset = "test";
  std::vector<std::string> groupings{"hour", "month", "year", "horizon"};

  unsigned grouping_mask() const;
};

struct RunConfig {
  SceneConfig scene;
  DataSettings data;
  WindowOptions windows;
  NowcastConfig nowcast;
  ForecastConfig forecast;
  TrainSettings train;
  EvalSettings eval;
  /// The file as given, kept for the verbatim copy and mismatch checks.
  nlohmann::json raw = nlohmann::json::object();

  /// Three days from 2016-05-01 12:00 UTC at the default site.
  static RunConfig demo();
  /// Throws ConfigError naming any unknown or ill-typed key.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  /// Every setting, defaults included.
  nlohmann::json to_json() const;

  LossConfig loss() const { return {train.loss_m, train.l2}; }
  AdamConfig adam() const;
  TrainOptions options(bool forecast) const;
};

nlohmann::json scene_to_json(const SceneConfig& s);
SceneConfig scene_from_json(const nlohmann::json& j);

}  // namespace skycast::cli
