// SPDX-License-Identifier: Apache-2.0
//
// nMAP error, grouped evaluation reports and the two reference baselines
// (persistence and auxiliary-only least squares).
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "skycast/data.hpp"
#include "skycast/timeutil.hpp"

namespace skycast {

/// 100 * mean|r - r_hat| / mean(r). Throws InvalidShape on a length
/// mismatch or empty input, UndefinedMetric when mean(r) <= 0.
double nmap(const std::vector<double>& truth, const std::vector<double>& prediction);

/// One scored prediction. horizon_step is 1-based; 0 marks a nowcast.
struct ScoredPoint {
  Timestamp timestamp = 0;
  double truth = 0.0;
  double prediction = 0.0;
  std::size_t horizon_step = 0;
};

struct EvalCell {
  std::size_t count = 0;
  /// Absent when the cell is empty or its mean truth is not positive.
  std::optional<double> nmap;
};

enum Grouping : unsigned {
  kGroupNone = 0,
  kGroupHour = 1u << 0,  // local hour of day
  kGroupMonth = 1u << 1,
  kGroupYear = 1u << 2,
  kGroupHorizon = 1u << 3,
};

struct EvalReport {
  EvalCell overall;
  std::map<int, EvalCell> by_hour;  // 0..23, every hour present
  std::map<std::string, EvalCell> by_month;  // "YYYY-MM"
  std::map<std::string, EvalCell> by_year;
  std::map<std::size_t, EvalCell> by_horizon;  // 1..H
  std::map<std::string, double> reference_points;

  /// Header "grouping,key,nmap,count"; absent values leave the nmap field empty.
  std::string to_csv() const;
  std::string to_table() const;
};

/// Published nowcast nMAP for the Colorado test years, carried as report
/// metadata for comparison only.
std::map<std::string, double> colorado_reference_points();

/// Overall nMAP is computed once over all points, never averaged from groups.
/// Hour grouping uses local time at `timezone_offset_minutes`.
EvalReport evaluate(const std::vector<ScoredPoint>& points, unsigned groupings, int timezone_offset_minutes = 0,
                    std::size_t horizon = 0);

/// Repeats the last observed value over `horizon` steps. Throws
/// InvalidArgument on an empty look-back.
std::vector<double> persistence_baseline(const std::vector<double>& lookback, std::size_t horizon);

/// Ordinary least squares with intercept solved through ridge-damped
/// (1e-8) normal equations on standardized columns. Coefficients are
/// reported in the original units.
class LinearRegression {
 public:
  static constexpr double kRidge = 1e-8;

  /// rows[i] is one feature vector; targets[i] holds one value per output.
  /// Throws DataError with fewer than two rows or fewer rows than features.
  static LinearRegression fit(const std::vector<std::vector<double>>& rows,
                              const std::vector<std::vector<double>>& targets);
  static LinearRegression fit(const std::vector<std::vector<double>>& rows, const std::vector<double>& targets);

  std::vector<double> predict(const std::vector<double>& features) const;
  double predict_scalar(const std::vector<double>& features) const { return predict(features).front(); }

  std::size_t features() const { return features_; }
  std::size_t outputs() const { return outputs_; }
  /// coefficients()[output][feature]
  const std::vector<std::vector<double>>& coefficients() const { return coef_; }
  const std::vector<double>& intercepts() const { return intercept_; }

 private:
  std::size_t features_ = 0;
  std::size_t outputs_ = 0;
  std::vector<std::vector<double>> coef_;
  std::vector<double> intercept_;
};

/// Coefficient of determination of predictions against truth.
double r_squared(const std::vector<double>& truth, const std::vector<double>& prediction);

/// Nowcast baseline: irradiance regressed on the raw auxiliary vector.
LinearRegression fit_nowcast_regression(const std::vector<AuxVector>& aux, const std::vector<double>& irradiance);

/// Forecast features: mean over the trailing hour of the look-back and the
/// last value of each auxiliary component (14 values).
std::vector<double> forecast_regression_features(const std::vector<AuxVector>& lookback_aux,
                                                 const std::vector<Timestamp>& lookback_ts);

/// One output per horizon step.
LinearRegression fit_forecast_regression(const std::vector<std::vector<double>>& features,
                                         const std::vector<std::vector<double>>& horizon_targets);

}  // namespace skycast
