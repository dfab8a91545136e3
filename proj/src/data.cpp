// SPDX-License-Identifier: Apache-2.0
#include "skycast/data.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <tuple>

#include "skycast/errors.hpp"
#include "skycast/image.hpp"

namespace skycast {
namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Comma-separated fields; a field may be double-quoted with "" as an escape.
std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        fields.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.emplace_back();
    } else {
      fields.back() += ch;
    }
  }
  for (auto& f : fields) f = std::string(trim(f));
  return fields;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw InvalidArgument("not a finite number: '" + s + "'");
  }
  return v;
}

// Reads a CSV with a fixed header and calls `row` for each data line.
// `row` throws InvalidArgument for a malformed row.
template <class RowFn>
void read_csv(const fs::path& path, std::string_view header, CsvReport& report, RowFn row) {
  if (!fs::exists(path)) throw IoError("file not found: " + path.string());
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (!saw_header) {
      std::string_view h = trim(line);
      if (h.size() >= 3 && static_cast<unsigned char>(h[0]) == 0xEF) h.remove_prefix(3);  // UTF-8 BOM
      if (h != header) {
        throw DataError(fmt::format("{}:{}: expected header '{}', got '{}'", path.string(), line_no, header, h));
      }
      saw_header = true;
      continue;
    }
    ++report.rows;
    try {
      row(split_csv(line));
    } catch (const InvalidArgument& e) {
      ++report.malformed;
      report.problems.push_back(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
  }
  for (const auto& p : report.problems) spdlog::warn("malformed row {}", p);
  if (report.rows > 0 &&
      static_cast<double>(report.malformed) > kMaxMalformedFraction * static_cast<double>(report.rows)) {
    throw DataError(fmt::format("{}: {} of {} rows malformed (limit {:.0f}%); first: {}", path.string(),
                                report.malformed, report.rows, kMaxMalformedFraction * 100.0,
                                report.problems.front()));
  }
}

void require_fields(const std::vector<std::string>& f, std::size_t n) {
  if (f.size() != n) throw InvalidArgument(fmt::format("expected {} fields, got {}", n, f.size()));
}

}  // namespace

const std::array<std::string_view, kAuxDim>& aux_names() {
  static const std::array<std::string_view, kAuxDim> names{
      "wind_speed_ms", "rel_humidity_pct", "pressure_hpa", "air_temp_c",
      "solar_zenith_deg", "clearsky_wm2", "time_of_day"};
  return names;
}

std::vector<FrameRecord> read_frame_manifest(const fs::path& path, CsvReport* report) {
  CsvReport local;
  CsvReport& rep = report ? *report : local;
  std::vector<FrameRecord> out;
  const fs::path base = path.parent_path();
  read_csv(path, kFrameHeader, rep, [&](const std::vector<std::string>& f) {
    require_fields(f, 3);
    if (f[1].empty()) throw InvalidArgument("empty image path");
    FrameRecord r;
    r.timestamp = parse_iso8601(f[0]);
    r.image_path = fs::path(f[1]).is_absolute() ? fs::path(f[1]) : base / f[1];
    r.station_id = f[2];
    out.push_back(std::move(r));
  });
  std::stable_sort(out.begin(), out.end(), [](const FrameRecord& a, const FrameRecord& b) {
    return std::tie(a.timestamp, a.station_id) < std::tie(b.timestamp, b.station_id);
  });
  const auto last = std::unique(out.begin(), out.end(), [](const FrameRecord& a, const FrameRecord& b) {
    return a.timestamp == b.timestamp && a.station_id == b.station_id;
  });
  rep.duplicates += static_cast<std::size_t>(out.end() - last);
  out.erase(last, out.end());
  return out;
}

std::vector<AuxRecord> read_aux_file(const fs::path& path, CsvReport* report) {
  CsvReport local;
  CsvReport& rep = report ? *report : local;
  std::vector<AuxRecord> out;
  read_csv(path, kAuxHeader, rep, [&](const std::vector<std::string>& f) {
    require_fields(f, 6);
    AuxRecord r;
    r.timestamp = parse_iso8601(f[0]);
    r.wind_speed_ms = parse_double(f[1]);
    r.rel_humidity_pct = parse_double(f[2]);
    r.pressure_hpa = parse_double(f[3]);
    r.air_temp_c = parse_double(f[4]);
    r.irradiance_wm2 = parse_double(f[5]);
    if (r.irradiance_wm2 < 0.0) throw InvalidArgument("negative irradiance");
    out.push_back(r);
  });
  std::stable_sort(out.begin(), out.end(),
                   [](const AuxRecord& a, const AuxRecord& b) { return a.timestamp < b.timestamp; });
  const auto last = std::unique(out.begin(), out.end(),
                                [](const AuxRecord& a, const AuxRecord& b) { return a.timestamp == b.timestamp; });
  rep.duplicates += static_cast<std::size_t>(out.end() - last);
  out.erase(last, out.end());
  return out;
}

Manifest load_manifest(const fs::path& frames_csv, const fs::path& aux_csv) {
  Manifest m;
  m.frames = read_frame_manifest(frames_csv, &m.frame_report);
  m.aux = read_aux_file(aux_csv, &m.aux_report);
  return m;
}

AuxVector make_aux_vector(const AuxRecord& weather, Timestamp t, const GeoLocation& loc, const AuxOptions& opt) {
  const double zenith = solar_position(loc, t).zenith;
  AuxVector v{};
  v[kAuxWindSpeed] = weather.wind_speed_ms;
  v[kAuxHumidity] = weather.rel_humidity_pct;
  v[kAuxPressure] = weather.pressure_hpa;
  v[kAuxAirTemp] = weather.air_temp_c;
  v[kAuxZenith] = zenith;
  v[kAuxClearSky] = clearsky_irradiance(zenith);
  v[kAuxTimeOfDay] = opt.time_of_day ? time_of_day_fraction(t, loc.timezone_offset_minutes) : 0.0;
  return v;
}

JoinResult join_aux(const std::vector<FrameRecord>& frames, const std::vector<AuxRecord>& aux,
                    Timestamp max_gap_s, const GeoLocation& loc, const AuxOptions& opt) {
  JoinResult out;
  std::size_t j = 0;
  for (const auto& f : frames) {
    // Advance to the last record at or before the frame.
    while (j + 1 < aux.size() && aux[j + 1].timestamp <= f.timestamp) ++j;
    const AuxRecord* best = nullptr;
    Timestamp best_gap = 0;
    for (std::size_t k = j; k < std::min(aux.size(), j + 2); ++k) {
      const Timestamp gap = aux[k].timestamp > f.timestamp ? aux[k].timestamp - f.timestamp
                                                           : f.timestamp - aux[k].timestamp;
      if (gap <= max_gap_s && (best == nullptr || gap < best_gap)) {
        best = &aux[k];
        best_gap = gap;
      }
    }
    if (best == nullptr) {
      ++out.dropped;
      continue;
    }
    SamplePrecursor s;
    s.timestamp = f.timestamp;
    s.image_path = f.image_path;
    s.station_id = f.station_id;
    s.aux = make_aux_vector(*best, f.timestamp, loc, opt);
    s.irradiance = best->irradiance_wm2;
    out.samples.push_back(std::move(s));
  }
  return out;
}

std::vector<SkySample> load_samples(const std::vector<SamplePrecursor>& precursors, std::size_t side) {
  std::vector<SkySample> out(precursors.size());
  std::exception_ptr first_error;
  std::mutex error_mutex;
  const auto n = static_cast<std::ptrdiff_t>(precursors.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& p = precursors[static_cast<std::size_t>(i)];
    try {
      auto& s = out[static_cast<std::size_t>(i)];
      s.image = decode_and_normalize(p.image_path, side);
      s.aux = p.aux;
      s.irradiance = p.irradiance;
      s.timestamp = p.timestamp;
    } catch (...) {
      const std::lock_guard lock(error_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

WindowOptions WindowOptions::colorado() { return WindowOptions{}; }

WindowOptions WindowOptions::arizona() {
  WindowOptions o;
  o.cadence_s = 30;
  o.lookback = 480;
  o.horizon = 8;
  o.stride_s = 1800;
  o.gap_tolerance_s = 45;
  o.horizon_step_s = 1800;
  return o;
}

void WindowOptions::validate() const {
  if (cadence_s <= 0) throw InvalidArgument("window cadence must be positive");
  if (lookback < 1 || horizon < 1) throw InvalidArgument("look-back and horizon must be at least 1");
  if (stride_s <= 0 || stride_s % cadence_s != 0) {
    throw InvalidArgument(fmt::format("stride {} s is not a positive multiple of cadence {} s", stride_s, cadence_s));
  }
  if (horizon_step_s < 0 || (horizon_step_s > 0 && horizon_step_s % cadence_s != 0)) {
    throw InvalidArgument(fmt::format("horizon step {} s is not a multiple of cadence {} s", horizon_step_s, cadence_s));
  }
  if (gap_tolerance_s < cadence_s) throw InvalidArgument("gap tolerance must be at least the cadence");
}

std::size_t WindowOptions::horizon_stride() const {
  return horizon_step_s == 0 ? 1 : static_cast<std::size_t>(horizon_step_s / cadence_s);
}

std::size_t expected_window_count(std::size_t frames, std::size_t lookback, std::size_t horizon, std::size_t stride) {
  if (stride == 0) throw InvalidArgument("stride must be positive");
  if (frames < lookback + horizon) return 0;
  return (frames - lookback - horizon) / stride + 1;
}

std::vector<std::pair<std::size_t, std::size_t>> contiguous_runs(const std::vector<Timestamp>& ts,
                                                                 Timestamp gap_tolerance_s) {
  std::vector<std::pair<std::size_t, std::size_t>> runs;
  std::size_t begin = 0;
  for (std::size_t i = 1; i <= ts.size(); ++i) {
    if (i == ts.size() || ts[i] - ts[i - 1] > gap_tolerance_s || ts[i] <= ts[i - 1]) {
      if (i > begin) runs.emplace_back(begin, i);
      begin = i;
    }
  }
  return runs;
}

std::vector<ForecastWindow> build_forecast_windows(const std::vector<Timestamp>& ts, const WindowOptions& opt) {
  opt.validate();
  for (std::size_t i = 1; i < ts.size(); ++i) {
    if (ts[i] <= ts[i - 1]) throw InvalidArgument("build_forecast_windows: timestamps must be strictly increasing");
  }
  auto runs = contiguous_runs(ts, opt.gap_tolerance_s);

  // Optionally merge runs across a single overnight gap, remembering where.
  std::vector<std::vector<std::size_t>> joins(runs.size());
  if (opt.bridge_nights && !runs.empty()) {
    std::vector<std::pair<std::size_t, std::size_t>> merged{runs.front()};
    std::vector<std::vector<std::size_t>> merged_joins(1);
    for (std::size_t r = 1; r < runs.size(); ++r) {
      const Timestamp gap = ts[runs[r].first] - ts[runs[r].first - 1];
      if (gap >= opt.min_bridge_gap_s && gap <= opt.max_bridge_gap_s) {
        merged.back().second = runs[r].second;
        merged_joins.back().push_back(runs[r].first);
      } else {
        merged.push_back(runs[r]);
        merged_joins.emplace_back();
      }
    }
    runs = std::move(merged);
    joins = std::move(merged_joins);
  }

  const std::size_t stride = static_cast<std::size_t>(opt.stride_s / opt.cadence_s);
  const std::size_t hs = opt.horizon_stride();
  const std::size_t span = opt.span();
  std::vector<ForecastWindow> out;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const auto [begin, end] = runs[r];
    const std::size_t count = expected_window_count(end - begin, opt.lookback, opt.horizon * hs, stride);
    for (std::size_t w = 0; w < count; ++w) {
      const std::size_t s = begin + w * stride;
      ForecastWindow win;
      win.start = ts[s];
      for (std::size_t i = 0; i < opt.lookback; ++i) win.lookback.push_back(s + i);
      for (std::size_t h = 1; h <= opt.horizon; ++h) win.horizon.push_back(s + opt.lookback - 1 + h * hs);
      for (const std::size_t j : joins[r]) win.bridged = win.bridged || (j > s && j < s + span);
      out.push_back(std::move(win));
    }
  }
  return out;
}

WindowSplit split_windows(const std::vector<ForecastWindow>& windows, const std::vector<Timestamp>& ts,
                          Timestamp boundary) {
  WindowSplit out;
  for (const auto& w : windows) {
    bool all_before = true, all_after = true;
    auto visit = [&](std::size_t i) {
      all_before = all_before && ts.at(i) < boundary;
      all_after = all_after && ts.at(i) >= boundary;
    };
    for (const auto i : w.lookback) visit(i);
    for (const auto i : w.horizon) visit(i);
    if (all_before) {
      out.train.push_back(w);
    } else if (all_after) {
      out.test.push_back(w);
    } else {
      ++out.straddling;
    }
  }
  return out;
}

AuxNormalizer AuxNormalizer::fit(const std::vector<AuxVector>& train) {
  if (train.empty()) throw InvalidArgument("aux normalization needs a non-empty training set");
  AuxNormalizer n;
  n.fitted_ = true;
  const double count = static_cast<double>(train.size());
  for (std::size_t c = 0; c < kAuxDim; ++c) {
    double mean = 0.0;
    for (const auto& v : train) mean += v[c];
    mean /= count;
    double var = 0.0;
    for (const auto& v : train) var += (v[c] - mean) * (v[c] - mean);
    var /= count;
    n.mean_[c] = mean;
    const double sd = std::sqrt(var);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
      n.stddev_[c] = 1.0;
      n.warnings_.push_back(fmt::format("aux component '{}' has zero variance; stddev clamped to 1", aux_names()[c]));
      spdlog::warn("{}", n.warnings_.back());
    } else {
      n.stddev_[c] = sd;
    }
  }
  return n;
}

AuxVector AuxNormalizer::transform(const AuxVector& v) const {
  AuxVector out{};
  for (std::size_t c = 0; c < kAuxDim; ++c) out[c] = (v[c] - mean_[c]) / stddev_[c];
  return out;
}

Tensor AuxNormalizer::transform_tensor(const AuxVector& v) const {
  const AuxVector t = transform(v);
  return Tensor({kAuxDim}, std::vector<double>(t.begin(), t.end()));
}

}  // namespace skycast
