// SPDX-License-Identifier: Apache-2.0
//
// Frame manifests, auxiliary weather records, nowcast samples and forecast
// windows.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "skycast/solar.hpp"
#include "skycast/tensor.hpp"
#include "skycast/timeutil.hpp"

namespace skycast {

constexpr std::size_t kAuxDim = 7;
using AuxVector = std::array<double, kAuxDim>;

// Component order of AuxVector.
enum AuxIndex : std::size_t {
  kAuxWindSpeed = 0,
  kAuxHumidity,
  kAuxPressure,
  kAuxAirTemp,
  kAuxZenith,
  kAuxClearSky,
  kAuxTimeOfDay,
};

const std::array<std::string_view, kAuxDim>& aux_names();

struct FrameRecord {
  Timestamp timestamp = 0;
  std::filesystem::path image_path;
  std::string station_id;
};

struct AuxRecord {
  Timestamp timestamp = 0;
  double wind_speed_ms = 0.0;
  double rel_humidity_pct = 0.0;
  double pressure_hpa = 0.0;
  double air_temp_c = 0.0;
  double irradiance_wm2 = 0.0;  // ground-truth label
};

struct CsvReport {
  std::size_t rows = 0;
  std::size_t malformed = 0;
  std::size_t duplicates = 0;
  std::vector<std::string> problems;  // "file:line: reason"
};

/// More than this fraction of malformed rows is fatal.
constexpr double kMaxMalformedFraction = 0.01;

inline constexpr std::string_view kFrameHeader = "timestamp,image_path,station_id";
inline constexpr std::string_view kAuxHeader =
    "timestamp,wind_speed_ms,rel_humidity_pct,pressure_hpa,air_temp_c,irradiance_wm2";

/// Relative image paths are resolved against the manifest's directory.
/// Result is sorted by time, deduplicated per (station, timestamp).
/// Throws IoError if the file is missing and DataError on a bad header or
/// too many malformed rows.
std::vector<FrameRecord> read_frame_manifest(const std::filesystem::path& path, CsvReport* report = nullptr);
std::vector<AuxRecord> read_aux_file(const std::filesystem::path& path, CsvReport* report = nullptr);

struct Manifest {
  std::vector<FrameRecord> frames;
  std::vector<AuxRecord> aux;
  CsvReport frame_report;
  CsvReport aux_report;
};

Manifest load_manifest(const std::filesystem::path& frames_csv, const std::filesystem::path& aux_csv);

struct AuxOptions {
  /// When false the seventh component is held at 0.
  bool time_of_day = true;
};

/// A frame paired with its weather record; the image is not yet decoded.
struct SamplePrecursor {
  Timestamp timestamp = 0;
  std::filesystem::path image_path;
  std::string station_id;
  AuxVector aux{};
  double irradiance = 0.0;
};

struct JoinResult {
  std::vector<SamplePrecursor> samples;
  std::size_t dropped = 0;
};

/// Pairs each frame with the nearest aux record at most max_gap_s away
/// (ties go to the earlier record). Zenith, clear-sky irradiance and time
/// of day are computed from `loc`, never read from the file.
JoinResult join_aux(const std::vector<FrameRecord>& frames, const std::vector<AuxRecord>& aux,
                    Timestamp max_gap_s, const GeoLocation& loc, const AuxOptions& opt = {});

AuxVector make_aux_vector(const AuxRecord& weather, Timestamp t, const GeoLocation& loc, const AuxOptions& opt = {});

struct SkySample {
  Tensor image;  // [3, side, side] in [0, 1]
  AuxVector aux{};
  double irradiance = 0.0;
  Timestamp timestamp = 0;
};

/// Decodes every image (in parallel). The first decode failure is rethrown.
std::vector<SkySample> load_samples(const std::vector<SamplePrecursor>& precursors, std::size_t side = 64);

struct WindowOptions {
  Timestamp cadence_s = 600;
  std::size_t lookback = 36;
  std::size_t horizon = 24;
  Timestamp stride_s = 3600;
  Timestamp gap_tolerance_s = 900;
  /// Spacing of horizon targets; 0 means the cadence.
  Timestamp horizon_step_s = 0;
  /// Join consecutive runs separated by an overnight-sized gap (between
  /// min_bridge_gap_s and max_bridge_gap_s). Windows crossing the join are
  /// flagged. Shorter gaps still split runs.
  bool bridge_nights = false;
  Timestamp min_bridge_gap_s = 4 * 3600;
  Timestamp max_bridge_gap_s = 18 * 3600;

  /// Look-back 36, horizon 24 at 10 minutes, one window per hour.
  static WindowOptions colorado();
  /// Look-back 480 at 30 seconds, horizon 8 at 30 minutes, one window per half hour.
  static WindowOptions arizona();
  void validate() const;
  /// Frames between consecutive horizon targets.
  std::size_t horizon_stride() const;
  /// Frames covered by one window.
  std::size_t span() const { return lookback + horizon * horizon_stride(); }
};

/// Indices into the sample sequence the window was built from.
struct ForecastWindow {
  std::vector<std::size_t> lookback;
  std::vector<std::size_t> horizon;
  Timestamp start = 0;
  bool bridged = false;
};

/// floor((F - L - H) / S) + 1 for F >= L + H, else 0.
std::size_t expected_window_count(std::size_t frames, std::size_t lookback, std::size_t horizon, std::size_t stride);

/// Splits sorted timestamps into maximal runs whose consecutive gaps are
/// within tolerance. Returns [begin, end) index pairs.
std::vector<std::pair<std::size_t, std::size_t>> contiguous_runs(const std::vector<Timestamp>& ts,
                                                                 Timestamp gap_tolerance_s);

/// Windows over strictly increasing timestamps. Within each contiguous run
/// the look-back starts at frame offsets 0, S, 2S, ... and the horizon
/// follows immediately, every horizon_stride() frames. Throws
/// InvalidArgument on invalid options.
std::vector<ForecastWindow> build_forecast_windows(const std::vector<Timestamp>& ts, const WindowOptions& opt);

template <class Sample>
std::vector<Timestamp> timestamps_of(const std::vector<Sample>& samples) {
  std::vector<Timestamp> ts;
  ts.reserve(samples.size());
  for (const auto& s : samples) ts.push_back(s.timestamp);
  return ts;
}

/// Keeps the first record in each cadence slot (used to bring a faster
/// archive down to a uniform cadence).
template <class Record>
std::vector<Record> subsample_to_cadence(const std::vector<Record>& records, Timestamp cadence_s) {
  std::vector<Record> out;
  bool have = false;
  Timestamp last_slot = 0;
  for (const auto& r : records) {
    const Timestamp slot = r.timestamp >= 0 ? r.timestamp / cadence_s : -((-r.timestamp + cadence_s - 1) / cadence_s);
    if (!have || slot != last_slot) out.push_back(r);
    have = true;
    last_slot = slot;
  }
  return out;
}

/// Strict partition: timestamp < boundary goes to train, the rest to test.
template <class Sample>
std::pair<std::vector<Sample>, std::vector<Sample>> split_by_date(const std::vector<Sample>& samples,
                                                                  Timestamp boundary) {
  std::pair<std::vector<Sample>, std::vector<Sample>> out;
  for (const auto& s : samples) (s.timestamp < boundary ? out.first : out.second).push_back(s);
  return out;
}

struct WindowSplit {
  std::vector<ForecastWindow> train;
  std::vector<ForecastWindow> test;
  std::size_t straddling = 0;  // dropped, neither side
};

/// A window is train if every look-back and horizon timestamp is before the
/// boundary, test if every one is at or after it, and dropped otherwise.
WindowSplit split_windows(const std::vector<ForecastWindow>& windows, const std::vector<Timestamp>& ts,
                          Timestamp boundary);

/// Per-component z-score fitted on training data.
class AuxNormalizer {
 public:
  AuxNormalizer() = default;
  AuxNormalizer(AuxVector mean, AuxVector stddev) : mean_(mean), stddev_(stddev), fitted_(true) {}

  /// Population statistics. Zero-variance components get stddev 1 and a
  /// warning. Throws InvalidArgument on an empty set.
  static AuxNormalizer fit(const std::vector<AuxVector>& train);

  AuxVector transform(const AuxVector& v) const;
  Tensor transform_tensor(const AuxVector& v) const;

  const AuxVector& mean() const { return mean_; }
  const AuxVector& stddev() const { return stddev_; }
  bool fitted() const { return fitted_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  AuxVector mean_{};
  AuxVector stddev_{1, 1, 1, 1, 1, 1, 1};
  bool fitted_ = false;
  std::vector<std::string> warnings_;
};

}  // namespace skycast
