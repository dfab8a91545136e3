// SPDX-License-Identifier: Apache-2.0
//
// Stage-2 forecaster: a frame track LSTM over full-sky embeddings and a
// weather track LSTM over auxiliary vectors, merged by a third LSTM whose
// final state feeds a dropout + dense head emitting all horizon steps.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <vector>

#include "skycast/nowcast.hpp"

namespace skycast {

enum class MergeMode {
  kSequence,  // merge LSTM over the per-step concatenation of both tracks
  kFinalState,  // merge LSTM over a single step of both final states
};

struct ForecastConfig {
  std::size_t lookback = 36;
  std::size_t horizon = 24;
  std::size_t embedding_size = 512;
  std::size_t aux_size = kAuxDim;
  std::size_t frame_hidden = 128;
  std::size_t weather_hidden = 4;
  std::size_t merge_hidden = 64;
  MergeMode merge = MergeMode::kSequence;
  double dropout = 0.3;
  double target_scale = 1000.0;
  /// Enforce a 512-d frame track input. Off only for small test configurations.
  bool reference_dims = true;

  /// Throws ConfigError.
  void validate() const;
  /// Look-back 36, horizon 24 (ten-minute steps).
  static ForecastConfig colorado();
  nlohmann::json to_json() const;
  static ForecastConfig from_json(const nlohmann::json& j);
};

/// Per-dimension z-score of frame embeddings (zero-variance dims get 1).
struct EmbeddingStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  bool fitted() const { return !mean.empty(); }
  static EmbeddingStats fit(const std::vector<const FullSkyRepr*>& rows);
  std::vector<double> transform(const FullSkyRepr& e) const;
};

/// Frozen-encoder embeddings keyed by frame timestamp.
class EmbeddingCache {
 public:
  /// Encodes every sample once (in parallel across frames).
  static EmbeddingCache build(const NowcastModel& encoder, const std::vector<SkySample>& samples);
  const FullSkyRepr& at(Timestamp t) const;
  bool contains(Timestamp t) const { return map_.count(t) > 0; }
  std::size_t size() const { return map_.size(); }
  void insert(Timestamp t, FullSkyRepr e) { map_[t] = std::move(e); }

 private:
  std::map<Timestamp, FullSkyRepr> map_;
};

struct ForecastTrace {
  Tensor frame_final;  // [N, frame_hidden]
  Tensor weather_final;  // [N, weather_hidden]
  Tensor merge_final;  // [N, merge_hidden]
};

class ForecastModel {
 public:
  /// Copies and freezes the encoder. Throws ConfigError when the encoder's
  /// embedding size differs from the config's.
  static ForecastModel build(const ForecastConfig& config, const NowcastModel& encoder, std::uint64_t seed);
  /// Recurrent part only; inputs must be supplied as embeddings.
  static ForecastModel build(const ForecastConfig& config, std::uint64_t seed);

  const ForecastConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  const NowcastModel* encoder() const { return encoder_ ? &*encoder_ : nullptr; }

  /// Trainable (recurrent and head) parameters.
  std::vector<Parameter> parameters() const;
  std::size_t parameter_count() const;
  const LSTMLayer& frame_track() const { return frame_; }
  const LSTMLayer& weather_track() const { return weather_; }
  const LSTMLayer& merge_track() const { return merge_; }

  /// L embeddings [N,E] (standardized) and L aux vectors [N,aux]
  /// (normalized) -> [N,H] in W/m^2, unclamped. Throws InvalidArgument when
  /// the sequence length differs from the look-back.
  Tensor forward(const std::vector<Tensor>& embeddings, const std::vector<Tensor>& aux, bool training, Rng* rng,
                 ForecastTrace* trace = nullptr) const;

  const AuxNormalizer& aux_normalizer() const { return aux_norm_; }
  void set_aux_normalizer(AuxNormalizer n) { aux_norm_ = std::move(n); }
  const EmbeddingStats& embedding_stats() const { return embed_stats_; }
  void set_embedding_stats(EmbeddingStats s) { embed_stats_ = std::move(s); }

 private:
  ForecastConfig cfg_;
  std::uint64_t seed_ = 0;
  std::optional<NowcastModel> encoder_;
  LSTMLayer frame_;
  LSTMLayer weather_;
  LSTMLayer merge_;
  DenseLayer head_;
  AuxNormalizer aux_norm_;
  EmbeddingStats embed_stats_;
};

/// Forecast from raw look-back samples (length L); clamped at 0.
std::vector<double> forecast(const ForecastModel& model, const std::vector<SkySample>& lookback);

/// Forecasts for many windows over `samples`, using cached embeddings.
std::vector<std::vector<double>> forecast_windows(const ForecastModel& model, const std::vector<SkySample>& samples,
                                                  const std::vector<ForecastWindow>& windows,
                                                  const EmbeddingCache& cache, std::size_t batch_size = 64);

/// Mean log-cosh over horizon steps plus L2 on recurrent/head weights.
/// Statistics are fitted on the windows' look-back frames when unset.
TrainHistory train_forecast(ForecastModel& model, const std::vector<SkySample>& samples,
                            const std::vector<ForecastWindow>& windows, const LossConfig& loss, const AdamConfig& adam,
                            const TrainOptions& opt, TrainState* state = nullptr,
                            const EmbeddingCache* cache = nullptr);

void save_forecast(const std::filesystem::path& path, const ForecastModel& model, const TrainState* state = nullptr);
ForecastModel load_forecast(const std::filesystem::path& path, TrainState* state = nullptr);

}  // namespace skycast
