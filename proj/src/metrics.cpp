// SPDX-License-Identifier: Apache-2.0
#include "skycast/metrics.hpp"

#include <fmt/format.h>

#include <Eigen/Dense>
#include <cmath>

#include "skycast/errors.hpp"

namespace skycast {

double nmap(const std::vector<double>& truth, const std::vector<double>& prediction) {
  if (truth.empty() || truth.size() != prediction.size()) {
    throw InvalidShape(fmt::format("nmap: need equal non-zero lengths, got {} and {}", truth.size(),
                                   prediction.size()));
  }
  double abs_err = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    abs_err += std::abs(truth[i] - prediction[i]);
    total += truth[i];
  }
  if (!(total > 0.0)) throw UndefinedMetric("nmap: mean truth is not positive");
  return abs_err / total * 100.0;
}

namespace {

struct Accumulator {
  std::size_t count = 0;
  double abs_err = 0.0;
  double total = 0.0;

  void add(const ScoredPoint& p) {
    ++count;
    abs_err += std::abs(p.truth - p.prediction);
    total += p.truth;
  }
  EvalCell cell() const {
    EvalCell c;
    c.count = count;
    if (count > 0 && total > 0.0) c.nmap = abs_err / total * 100.0;
    return c;
  }
};

template <class Key>
std::map<Key, EvalCell> cells(const std::map<Key, Accumulator>& acc) {
  std::map<Key, EvalCell> out;
  for (const auto& [k, a] : acc) out[k] = a.cell();
  return out;
}

std::string cell_value(const EvalCell& c) { return c.nmap ? fmt::format("{:.6f}", *c.nmap) : std::string(); }

}  // namespace

std::map<std::string, double> colorado_reference_points() {
  return {{"colorado_2015_nowcast_nmap", 14.6}, {"colorado_2016_nowcast_nmap", 15.7}};
}

EvalReport evaluate(const std::vector<ScoredPoint>& points, unsigned groupings, int timezone_offset_minutes,
                    std::size_t horizon) {
  Accumulator all;
  std::map<int, Accumulator> hour;
  std::map<std::string, Accumulator> month, year;
  std::map<std::size_t, Accumulator> step;
  if (groupings & kGroupHour) {
    for (int h = 0; h < 24; ++h) hour[h];
  }
  if (groupings & kGroupHorizon) {
    for (std::size_t h = 1; h <= horizon; ++h) step[h];
  }
  for (const auto& p : points) {
    all.add(p);
    const CivilTime c = to_civil(p.timestamp + static_cast<Timestamp>(timezone_offset_minutes) * 60);
    if (groupings & kGroupHour) hour[c.hour].add(p);
    if (groupings & kGroupMonth) month[fmt::format("{:04d}-{:02d}", c.year, c.month)].add(p);
    if (groupings & kGroupYear) year[fmt::format("{:04d}", c.year)].add(p);
    if (groupings & kGroupHorizon) step[p.horizon_step].add(p);
  }
  EvalReport r;
  r.overall = all.cell();
  r.by_hour = cells(hour);
  r.by_month = cells(month);
  r.by_year = cells(year);
  r.by_horizon = cells(step);
  r.reference_points = colorado_reference_points();
  return r;
}

std::string EvalReport::to_csv() const {
  std::string out = "grouping,key,nmap,count\n";
  out += fmt::format("overall,all,{},{}\n", cell_value(overall), overall.count);
  for (const auto& [k, c] : by_hour) out += fmt::format("hour,{:02d},{},{}\n", k, cell_value(c), c.count);
  for (const auto& [k, c] : by_month) out += fmt::format("month,{},{},{}\n", k, cell_value(c), c.count);
  for (const auto& [k, c] : by_year) out += fmt::format("year,{},{},{}\n", k, cell_value(c), c.count);
  for (const auto& [k, c] : by_horizon) out += fmt::format("horizon,{},{},{}\n", k, cell_value(c), c.count);
  return out;
}

std::string EvalReport::to_table() const {
  auto row = [](const std::string& group, const std::string& key, const EvalCell& c) {
    return fmt::format("{:<8} {:>8} {:>10} {:>8}\n", group, key, c.nmap ? fmt::format("{:.2f}", *c.nmap) : "-",
                       c.count);
  };
  std::string out = fmt::format("{:<8} {:>8} {:>10} {:>8}\n", "group", "key", "nMAP %", "count");
  out += row("overall", "all", overall);
  for (const auto& [k, c] : by_hour) {
    if (c.count > 0) out += row("hour", fmt::format("{:02d}", k), c);
  }
  for (const auto& [k, c] : by_month) out += row("month", k, c);
  for (const auto& [k, c] : by_year) out += row("year", k, c);
  for (const auto& [k, c] : by_horizon) out += row("horizon", std::to_string(k), c);
  for (const auto& [k, v] : reference_points) out += fmt::format("reference {} = {:.1f}\n", k, v);
  return out;
}

std::vector<double> persistence_baseline(const std::vector<double>& lookback, std::size_t horizon) {
  if (lookback.empty()) throw InvalidArgument("persistence_baseline: empty look-back");
  return std::vector<double>(horizon, lookback.back());
}

LinearRegression LinearRegression::fit(const std::vector<std::vector<double>>& rows,
                                       const std::vector<std::vector<double>>& targets) {
  const std::size_t n = rows.size();
  if (n < 2) throw DataError(fmt::format("regression fit: need at least 2 rows, got {}", n));
  if (targets.size() != n) {
    throw InvalidShape(fmt::format("regression fit: {} rows but {} targets", n, targets.size()));
  }
  const std::size_t p = rows.front().size();
  const std::size_t q = targets.front().size();
  if (q == 0) throw InvalidShape("regression fit: targets have no outputs");
  if (n < p) throw DataError(fmt::format("regression fit: {} rows for {} features", n, p));

  Eigen::MatrixXd x(n, p);
  Eigen::MatrixXd y(n, q);
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i].size() != p || targets[i].size() != q) {
      throw InvalidShape(fmt::format("regression fit: row {} has inconsistent width", i));
    }
    for (std::size_t j = 0; j < p; ++j) x(i, j) = rows[i][j];
    for (std::size_t j = 0; j < q; ++j) y(i, j) = targets[i][j];
  }
  // Centering absorbs the intercept; scaling keeps the damping relative.
  const Eigen::RowVectorXd mu = x.colwise().mean();
  const Eigen::RowVectorXd ymu = y.colwise().mean();
  x.rowwise() -= mu;
  Eigen::RowVectorXd sd = (x.colwise().squaredNorm() / static_cast<double>(n)).cwiseSqrt();
  for (Eigen::Index j = 0; j < sd.size(); ++j) {
    if (sd(j) == 0.0) sd(j) = 1.0;
  }
  x = x.array().rowwise() / sd.array();
  y.rowwise() -= ymu;

  Eigen::MatrixXd gram = x.transpose() * x;
  gram.diagonal().array() += kRidge;
  const Eigen::MatrixXd beta = gram.ldlt().solve(x.transpose() * y);
  if (!beta.allFinite()) throw NumericError("regression fit: non-finite solution");

  LinearRegression m;
  m.features_ = p;
  m.outputs_ = q;
  m.coef_.assign(q, std::vector<double>(p));
  m.intercept_.assign(q, 0.0);
  for (std::size_t k = 0; k < q; ++k) {
    double b0 = ymu(static_cast<Eigen::Index>(k));
    for (std::size_t j = 0; j < p; ++j) {
      const double c = beta(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) / sd(static_cast<Eigen::Index>(j));
      m.coef_[k][j] = c;
      b0 -= c * mu(static_cast<Eigen::Index>(j));
    }
    m.intercept_[k] = b0;
  }
  return m;
}

LinearRegression LinearRegression::fit(const std::vector<std::vector<double>>& rows,
                                       const std::vector<double>& targets) {
  std::vector<std::vector<double>> t;
  t.reserve(targets.size());
  for (double v : targets) t.push_back({v});
  return fit(rows, t);
}

std::vector<double> LinearRegression::predict(const std::vector<double>& features) const {
  if (features.size() != features_) {
    throw InvalidShape(fmt::format("regression predict: expected {} features, got {}", features_, features.size()));
  }
  std::vector<double> out(outputs_);
  for (std::size_t k = 0; k < outputs_; ++k) {
    double v = intercept_[k];
    for (std::size_t j = 0; j < features_; ++j) v += coef_[k][j] * features[j];
    out[k] = v;
  }
  return out;
}

double r_squared(const std::vector<double>& truth, const std::vector<double>& prediction) {
  if (truth.empty() || truth.size() != prediction.size()) throw InvalidShape("r_squared: length mismatch");
  double mean = 0.0;
  for (double v : truth) mean += v;
  mean /= static_cast<double>(truth.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_res += (truth[i] - prediction[i]) * (truth[i] - prediction[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  return ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 0.0;
}

LinearRegression fit_nowcast_regression(const std::vector<AuxVector>& aux, const std::vector<double>& irradiance) {
  std::vector<std::vector<double>> rows;
  rows.reserve(aux.size());
  for (const auto& a : aux) rows.emplace_back(a.begin(), a.end());
  return LinearRegression::fit(rows, irradiance);
}

std::vector<double> forecast_regression_features(const std::vector<AuxVector>& lookback_aux,
                                                 const std::vector<Timestamp>& lookback_ts) {
  if (lookback_aux.empty() || lookback_aux.size() != lookback_ts.size()) {
    throw InvalidArgument("forecast_regression_features: empty or mismatched look-back");
  }
  const Timestamp last = lookback_ts.back();
  std::vector<double> out(2 * kAuxDim, 0.0);
  std::size_t n = 0;
  for (std::size_t i = 0; i < lookback_aux.size(); ++i) {
    if (last - lookback_ts[i] >= 3600) continue;
    for (std::size_t j = 0; j < kAuxDim; ++j) out[j] += lookback_aux[i][j];
    ++n;
  }
  for (std::size_t j = 0; j < kAuxDim; ++j) {
    out[j] /= static_cast<double>(n);
    out[kAuxDim + j] = lookback_aux.back()[j];
  }
  return out;
}

LinearRegression fit_forecast_regression(const std::vector<std::vector<double>>& features,
                                         const std::vector<std::vector<double>>& horizon_targets) {
  return LinearRegression::fit(features, horizon_targets);
}

}  // namespace skycast
