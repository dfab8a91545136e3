// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "plot.hpp"
#include "run_config.hpp"
#include "skycast/checkpoint.hpp"
#include "skycast/errors.hpp"
#include "skycast/forecast.hpp"
#include "skycast/image.hpp"
#include "skycast/metrics.hpp"
#include "skycast/nowcast.hpp"
#include "skycast/synthetic.hpp"

namespace skycast::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const Rgb kTruthColor{20, 20, 20};
const Rgb kModelColor{200, 40, 40};
const Rgb kBaselineColor{150, 150, 150};

struct Args {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string mode = "nowcast";
  std::string data;
  std::string checkpoint;
  std::string encoder;
  std::string resume;
  std::size_t limit = 0;
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f << text;
  if (!f) throw IoError("cannot write '" + p.string() + "'");
}

void make_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError(fmt::format("cannot create '{}': {}", p.string(), ec.message()));
}

std::string compact_time(Timestamp t) {
  std::string s = format_iso8601(t);
  s.erase(std::remove_if(s.begin(), s.end(), [](char c) { return c == '-' || c == ':'; }), s.end());
  return s;
}

RunConfig load_config(const Args& a) {
  RunConfig cfg = a.config.empty() ? RunConfig::demo() : RunConfig::load(a.config);
  if (a.seed) {
    cfg.scene.seed = *a.seed;
    cfg.train.seed = *a.seed;
  }
  return cfg;
}

// Output directory with the verbatim config and the fully resolved one.
void prepare_out(const Args& a, const RunConfig& cfg) {
  make_dir(a.out);
  if (!a.config.empty()) {
    std::error_code ec;
    fs::copy_file(a.config, fs::path(a.out) / "config.json", fs::copy_options::overwrite_existing, ec);
    if (ec) throw IoError(fmt::format("cannot copy config into '{}': {}", a.out, ec.message()));
  }
  write_text(fs::path(a.out) / "resolved_config.json", cfg.to_json().dump(2) + "\n");
}

std::string require(const std::string& value, const char* flag) {
  if (value.empty()) throw InvalidArgument(fmt::format("missing required flag {}", flag));
  return value;
}

std::vector<SkySample> load_data(const std::string& dir, const RunConfig& cfg, std::size_t side) {
  const fs::path d(dir);
  const Manifest m = load_manifest(d / "manifest.csv", d / "aux.csv");
  for (const CsvReport* r : {&m.frame_report, &m.aux_report}) {
    for (const auto& p : r->problems) spdlog::warn("{}", p);
  }
  const JoinResult j = join_aux(m.frames, m.aux, cfg.data.max_gap_s, cfg.data.location);
  if (j.dropped > 0) spdlog::warn("{} frames without an aux record within {} s were dropped", j.dropped, cfg.data.max_gap_s);
  if (j.samples.empty()) throw DataError("no usable samples in '" + dir + "'");
  std::vector<SkySample> s = load_samples(j.samples, side);
  spdlog::info("loaded {} samples from {}", s.size(), dir);
  return s;
}

// Every key the user wrote in a model section must equal the checkpoint's.
void check_config_match(const RunConfig& cfg, const char* section, const json& checkpoint_cfg) {
  if (!cfg.raw.contains(section)) return;
  for (const auto& [k, v] : cfg.raw.at(section).items()) {
    if (!checkpoint_cfg.contains(k) || checkpoint_cfg.at(k) != v) {
      throw ConfigError(fmt::format("config field '{}.{}' is {} but the checkpoint has {}", section, k, v.dump(),
                                    checkpoint_cfg.contains(k) ? checkpoint_cfg.at(k).dump() : "nothing"));
    }
  }
}

std::string checkpoint_kind(const std::string& path) {
  return read_checkpoint(path).header.value("kind", "");
}

std::vector<SkySample> select_samples(const std::vector<SkySample>& all, const RunConfig& cfg,
                                      const std::string& subset) {
  const auto split = cfg.data.split_time();
  if (!split || subset == "all") return all;
  auto [train, test] = split_by_date(all, *split);
  return subset == "train" ? train : test;
}

WindowOptions window_options(const RunConfig& cfg) {
  WindowOptions w = cfg.windows;
  w.validate();
  return w;
}

// Forecast look-back and horizon follow the windows section unless the
// forecast section states them, in which case they must agree.
ForecastConfig forecast_config(const RunConfig& cfg) {
  ForecastConfig f = cfg.forecast;
  const json raw = cfg.raw.value("forecast", json::object());
  for (const auto& [key, value] : {std::pair{"lookback", cfg.windows.lookback}, {"horizon", cfg.windows.horizon}}) {
    if (raw.contains(key) && raw.at(key).get<std::size_t>() != value) {
      throw ConfigError(fmt::format("config field 'forecast.{}' ({}) does not match 'windows.{}' ({})", key,
                                    raw.at(key).get<std::size_t>(), key, value));
    }
  }
  f.lookback = cfg.windows.lookback;
  f.horizon = cfg.windows.horizon;
  f.validate();
  return f;
}

void log_windows_per_day(const std::vector<ForecastWindow>& windows, const RunConfig& cfg) {
  std::set<std::int64_t> days;
  for (const auto& w : windows) days.insert(day_number(w.start + cfg.data.location.timezone_offset_minutes * 60));
  const double per_day = days.empty() ? 0.0 : static_cast<double>(windows.size()) / static_cast<double>(days.size());
  spdlog::info("windows per day: {} ({} windows over {} days)", per_day, windows.size(), days.size());
}

std::string history_csv(const TrainHistory& h, std::size_t first_epoch) {
  std::string out = "epoch,loss,validation_nmap\n";
  for (std::size_t i = 0; i < h.epoch_loss.size(); ++i) {
    out += fmt::format("{},{},{}\n", first_epoch + i, h.epoch_loss[i],
                       i < h.validation_nmap.size() ? fmt::format("{}", h.validation_nmap[i]) : "");
  }
  return out;
}

TrainOptions logging_options(const RunConfig& cfg, bool forecast) {
  TrainOptions o = cfg.options(forecast);
  o.on_epoch = [](std::size_t epoch, double loss) { spdlog::info("epoch {} loss {}", epoch, loss); };
  return o;
}

int cmd_synth(const Args& a) {
  const RunConfig cfg = load_config(a);
  require(a.out, "--out");
  prepare_out(a, cfg);
  const GeneratedScene g = generate_scene(cfg.scene, a.out);
  spdlog::info("wrote {} frames to {}", g.truth.size(), a.out);
  return kExitOk;
}

int train_nowcast_cmd(const Args& a, RunConfig cfg) {
  TrainState state;
  NowcastModel model = a.resume.empty() ? NowcastModel::build(cfg.nowcast, cfg.train.seed)
                                        : load_nowcast(a.resume, &state);
  if (!a.resume.empty()) {
    check_config_match(cfg, "nowcast", model.config().to_json());
    cfg.nowcast = model.config();
  }
  prepare_out(a, cfg);
  const auto all = load_data(a.data, cfg, model.config().input_side);
  std::vector<SkySample> train = select_samples(all, cfg, "train");
  if (train.empty()) throw DataError("no training samples before the split");
  std::vector<SkySample> val;
  if (cfg.data.validation_fraction > 0.0) {
    const auto n_val = static_cast<std::size_t>(std::floor(cfg.data.validation_fraction * static_cast<double>(train.size())));
    val.assign(train.end() - static_cast<std::ptrdiff_t>(n_val), train.end());
    train.resize(train.size() - n_val);
  }
  spdlog::info("nowcast: {} parameters, {} training samples, {} validation", model.parameter_count(), train.size(),
               val.size());
  const std::size_t first = state.epochs_done;
  const TrainHistory h =
      train_nowcast(model, train, cfg.loss(), cfg.adam(), logging_options(cfg, false), &state, val.empty() ? nullptr : &val);
  write_text(fs::path(a.out) / "history.csv", history_csv(h, first));
  save_nowcast(fs::path(a.out) / "model.ckpt", model, &state);
  std::vector<double> truth;
  for (const auto& s : train) truth.push_back(s.irradiance);
  spdlog::info("training nMAP {:.3f}%", nmap(truth, predict_nowcast(model, train)));
  return kExitOk;
}

int train_forecast_cmd(const Args& a, RunConfig cfg) {
  TrainState state;
  std::optional<ForecastModel> model;
  if (!a.resume.empty()) {
    model = load_forecast(a.resume, &state);
    check_config_match(cfg, "forecast", model->config().to_json());
    cfg.forecast = model->config();
  } else {
    const NowcastModel enc = load_nowcast(require(a.encoder, "--encoder"));
    model = ForecastModel::build(forecast_config(cfg), enc, cfg.train.seed);
  }
  if (model->encoder() == nullptr) throw ConfigError("forecast checkpoint has no encoder");
  prepare_out(a, cfg);
  const auto samples = load_data(a.data, cfg, model->encoder()->config().input_side);
  const auto ts = timestamps_of(samples);
  const auto windows = build_forecast_windows(ts, window_options(cfg));
  log_windows_per_day(windows, cfg);
  std::vector<ForecastWindow> train = windows;
  if (const auto split = cfg.data.split_time()) {
    WindowSplit ws = split_windows(windows, ts, *split);
    spdlog::info("split: {} train, {} test, {} straddling dropped", ws.train.size(), ws.test.size(), ws.straddling);
    train = std::move(ws.train);
  }
  if (train.empty()) throw DataError("no training windows");
  spdlog::info("forecast: {} trainable parameters, {} training windows", model->parameter_count(), train.size());
  const std::size_t first = state.epochs_done;
  TrainOptions o = logging_options(cfg, true);
  o.patience = 0;
  const TrainHistory h = train_forecast(*model, samples, train, cfg.loss(), cfg.adam(), o, &state);
  write_text(fs::path(a.out) / "history.csv", history_csv(h, first));
  save_forecast(fs::path(a.out) / "model.ckpt", *model, &state);
  return kExitOk;
}

int cmd_train(const Args& a) {
  RunConfig cfg = load_config(a);
  require(a.out, "--out");
  require(a.data, "--data");
  if (a.mode == "nowcast") return train_nowcast_cmd(a, std::move(cfg));
  return train_forecast_cmd(a, std::move(cfg));
}

void write_report(const fs::path& dir, const std::string& stem, const EvalReport& r) {
  write_text(dir / (stem + ".csv"), r.to_csv());
  write_text(dir / (stem + ".txt"), r.to_table());
}

int eval_nowcast(const Args& a, const RunConfig& cfg) {
  const NowcastModel model = load_nowcast(a.checkpoint);
  check_config_match(cfg, "nowcast", model.config().to_json());
  const auto samples = select_samples(load_data(a.data, cfg, model.config().input_side), cfg, cfg.eval.subset);
  if (samples.empty()) throw DataError("no samples to evaluate");
  const auto pred = predict_nowcast(model, samples);
  std::vector<ScoredPoint> points;
  Series truth{{}, kTruthColor}, model_series{{}, kModelColor};
  for (std::size_t i = 0; i < samples.size(); ++i) {
    points.push_back({samples[i].timestamp, samples[i].irradiance, pred[i], 0});
    truth.values.push_back(samples[i].irradiance);
    model_series.values.push_back(pred[i]);
  }
  EvalReport r = evaluate(points, cfg.eval.grouping_mask() & ~unsigned{kGroupHorizon},
                          cfg.data.location.timezone_offset_minutes);
  r.reference_points = colorado_reference_points();
  write_report(a.out, "report", r);
  write_png(fs::path(a.out) / "plot.png", line_plot({truth, model_series}));
  if (r.overall.nmap) fmt::print("overall nMAP {:.4f}% over {} samples\n", *r.overall.nmap, r.overall.count);
  return kExitOk;
}

int eval_forecast(const Args& a, const RunConfig& cfg) {
  const ForecastModel model = load_forecast(a.checkpoint);
  check_config_match(cfg, "forecast", model.config().to_json());
  if (model.encoder() == nullptr) throw ConfigError("forecast checkpoint has no encoder");
  const auto samples = load_data(a.data, cfg, model.encoder()->config().input_side);
  const auto ts = timestamps_of(samples);
  WindowOptions wo = window_options(cfg);
  wo.lookback = model.config().lookback;
  wo.horizon = model.config().horizon;
  std::vector<ForecastWindow> windows = build_forecast_windows(ts, wo);
  if (const auto split = cfg.data.split_time(); split && cfg.eval.subset != "all") {
    WindowSplit ws = split_windows(windows, ts, *split);
    windows = cfg.eval.subset == "train" ? ws.train : ws.test;
  }
  if (windows.empty()) throw DataError("no windows to evaluate");
  const EmbeddingCache cache = EmbeddingCache::build(*model.encoder(), samples);
  const auto pred = forecast_windows(model, samples, windows, cache);
  const std::size_t h = model.config().horizon;
  std::vector<ScoredPoint> points, baseline;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const double last = samples[windows[w].lookback.back()].irradiance;
    for (std::size_t k = 0; k < h; ++k) {
      const SkySample& target = samples[windows[w].horizon[k]];
      points.push_back({target.timestamp, target.irradiance, pred[w][k], k + 1});
      baseline.push_back({target.timestamp, target.irradiance, last, k + 1});
    }
  }
  const unsigned mask = cfg.eval.grouping_mask() | kGroupHorizon;
  const int tz = cfg.data.location.timezone_offset_minutes;
  const EvalReport r = evaluate(points, mask, tz, h);
  const EvalReport p = evaluate(baseline, mask, tz, h);
  write_report(a.out, "report", r);
  write_report(a.out, "persistence_report", p);
  Series ms{{}, kModelColor}, ps{{}, kBaselineColor};
  for (std::size_t k = 1; k <= h; ++k) {
    ms.values.push_back(r.by_horizon.at(k).nmap.value_or(NAN));
    ps.values.push_back(p.by_horizon.at(k).nmap.value_or(NAN));
  }
  write_png(fs::path(a.out) / "plot.png", bar_plot({ms, ps}));
  if (r.overall.nmap && p.overall.nmap) {
    fmt::print("overall nMAP {:.4f}% (persistence {:.4f}%) over {} windows\n", *r.overall.nmap, *p.overall.nmap,
               windows.size());
  }
  return kExitOk;
}

int cmd_eval(const Args& a) {
  const RunConfig cfg = load_config(a);
  require(a.out, "--out");
  require(a.data, "--data");
  const std::string kind = checkpoint_kind(require(a.checkpoint, "--checkpoint"));
  prepare_out(a, cfg);
  if (kind == "nowcast") return eval_nowcast(a, cfg);
  if (kind == "forecast") return eval_forecast(a, cfg);
  throw ConfigError("checkpoint '" + a.checkpoint + "' has unknown kind '" + kind + "'");
}

int cmd_predict(const Args& a) {
  const RunConfig cfg = load_config(a);
  require(a.out, "--out");
  require(a.data, "--data");
  const std::string kind = checkpoint_kind(require(a.checkpoint, "--checkpoint"));
  prepare_out(a, cfg);
  std::string csv;
  if (kind == "nowcast") {
    const NowcastModel model = load_nowcast(a.checkpoint);
    check_config_match(cfg, "nowcast", model.config().to_json());
    const auto samples = load_data(a.data, cfg, model.config().input_side);
    const auto pred = predict_nowcast(model, samples);
    csv = "timestamp,prediction_wm2\n";
    for (std::size_t i = 0; i < samples.size(); ++i) {
      csv += fmt::format("{},{}\n", format_iso8601(samples[i].timestamp), pred[i]);
    }
  } else if (kind == "forecast") {
    const ForecastModel model = load_forecast(a.checkpoint);
    check_config_match(cfg, "forecast", model.config().to_json());
    if (model.encoder() == nullptr) throw ConfigError("forecast checkpoint has no encoder");
    const auto samples = load_data(a.data, cfg, model.encoder()->config().input_side);
    WindowOptions wo = window_options(cfg);
    wo.lookback = model.config().lookback;
    wo.horizon = model.config().horizon;
    const auto windows = build_forecast_windows(timestamps_of(samples), wo);
    const auto pred = forecast_windows(model, samples, windows, EmbeddingCache::build(*model.encoder(), samples));
    csv = "window_start,horizon_step,valid_time,prediction_wm2\n";
    for (std::size_t w = 0; w < windows.size(); ++w) {
      for (std::size_t k = 0; k < pred[w].size(); ++k) {
        csv += fmt::format("{},{},{},{}\n", format_iso8601(windows[w].start), k + 1,
                           format_iso8601(samples[windows[w].horizon[k]].timestamp), pred[w][k]);
      }
    }
  } else {
    throw ConfigError("checkpoint '" + a.checkpoint + "' has unknown kind '" + kind + "'");
  }
  write_text(fs::path(a.out) / "predictions.csv", csv);
  return kExitOk;
}

int cmd_heatmap(const Args& a) {
  const RunConfig cfg = load_config(a);
  require(a.out, "--out");
  require(a.data, "--data");
  const std::string kind = checkpoint_kind(require(a.checkpoint, "--checkpoint"));
  std::optional<NowcastModel> model;
  if (kind == "nowcast") {
    model = load_nowcast(a.checkpoint);
  } else if (kind == "forecast") {
    const ForecastModel f = load_forecast(a.checkpoint);
    if (f.encoder() == nullptr) throw ConfigError("forecast checkpoint has no encoder");
    model = *f.encoder();
  } else {
    throw ConfigError("checkpoint '" + a.checkpoint + "' has unknown kind '" + kind + "'");
  }
  check_config_match(cfg, "nowcast", model->config().to_json());
  prepare_out(a, cfg);
  auto samples = load_data(a.data, cfg, model->config().input_side);
  if (a.limit > 0 && samples.size() > a.limit) samples.resize(a.limit);
  const fs::path dir = fs::path(a.out) / "heatmaps";
  make_dir(dir);
  std::vector<Tensor> maps(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    maps[i] = hypercolumn_heatmap(*model, samples[i].image);
    write_png(dir / (compact_time(samples[i].timestamp) + ".png"), heatmap_image(maps[i]));
  }
  // Strip: frames, heatmaps and overlays for up to eight evenly spaced frames.
  const std::size_t k = std::min<std::size_t>(8, samples.size());
  std::vector<Image> frames, heats, overlays;
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t i = k > 1 ? j * (samples.size() - 1) / (k - 1) : 0;
    const Image frame = tensor_to_image(samples[i].image);
    frames.push_back(frame);
    heats.push_back(heatmap_image(maps[i]));
    overlays.push_back(overlay(frame, maps[i]));
  }
  std::vector<Image> all = frames;
  all.insert(all.end(), heats.begin(), heats.end());
  all.insert(all.end(), overlays.begin(), overlays.end());
  write_png(fs::path(a.out) / "strip.png", tile(all, k));
  spdlog::info("wrote {} heatmaps to {}", samples.size(), dir.string());
  return kExitOk;
}

int exit_code_for(const Error& e) {
  if (dynamic_cast<const ConfigError*>(&e) != nullptr || dynamic_cast<const InvalidArgument*>(&e) != nullptr) {
    return kExitUsage;
  }
  if (dynamic_cast<const NumericError*>(&e) != nullptr) return kExitNumeric;
  return kExitData;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"skycast: sky-camera irradiance nowcasting and forecasting"};
  app.require_subcommand(1);
  Args a;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", a.config, "JSON run config")->check(CLI::ExistingFile);
    sub->add_option("--out", a.out, "Output directory");
    sub->add_option("--seed", a.seed, "Overrides scene.seed and train.seed");
  };
  auto data_opts = [&](CLI::App* sub) { sub->add_option("--data", a.data, "Scene directory with manifest.csv and aux.csv"); };
  auto ckpt_opts = [&](CLI::App* sub) { sub->add_option("--checkpoint", a.checkpoint, "Model checkpoint"); };

  CLI::App* synth = app.add_subcommand("synth", "Render a synthetic sky scene");
  common(synth);
  CLI::App* train = app.add_subcommand("train", "Train a nowcast or forecast model");
  common(train);
  data_opts(train);
  train->add_option("--mode", a.mode, "nowcast or forecast")->check(CLI::IsMember({"nowcast", "forecast"}));
  train->add_option("--encoder", a.encoder, "Nowcast checkpoint whose encoder the forecaster reuses");
  train->add_option("--resume", a.resume, "Checkpoint to continue training from");
  CLI::App* eval = app.add_subcommand("eval", "Score a checkpoint and write the nMAP report");
  common(eval);
  data_opts(eval);
  ckpt_opts(eval);
  CLI::App* predict = app.add_subcommand("predict", "Write predictions for every sample or window");
  common(predict);
  data_opts(predict);
  ckpt_opts(predict);
  CLI::App* heatmap = app.add_subcommand("heatmap", "Write hypercolumn heatmaps");
  common(heatmap);
  data_opts(heatmap);
  ckpt_opts(heatmap);
  heatmap->add_option("--limit", a.limit, "At most this many frames (0 = all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(a);
    if (train->parsed()) return cmd_train(a);
    if (eval->parsed()) return cmd_eval(a);
    if (predict->parsed()) return cmd_predict(a);
    if (heatmap->parsed()) return cmd_heatmap(a);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace skycast::cli
