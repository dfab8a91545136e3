// SPDX-License-Identifier: Apache-2.0
//
// Stage-1 nowcast network: dilated-convolution sky encoder, flatten + dense
// embedding, fusion with the auxiliary vector and a linear irradiance head.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skycast/data.hpp"
#include "skycast/layers.hpp"
#include "skycast/optim.hpp"

namespace skycast {

struct NowcastConfig {
  std::size_t input_channels = 3;
  std::size_t input_side = 64;
  std::size_t stem_filters = 128;
  std::size_t stem_kernel = 7;
  std::size_t stem_dilation = 4;
  std::size_t block2_filters = 64;
  std::size_t block3_filters = 128;
  std::size_t block4_filters = 256;
  /// Conv layers followed by a 2x2 max pool. Layer names: stem, b2, b3a,
  /// b3b, b4a, b4b, b4c.
  std::vector<std::string> pool_after{"b2", "b3b", "b4a", "b4b", "b4c"};
  std::size_t embedding_size = 512;
  std::size_t aux_size = kAuxDim;
  double dropout = 0.3;
  std::size_t head_outputs = 1;
  /// The head's output is multiplied by this to give W/m^2.
  double target_scale = 1000.0;
  /// When false the auxiliary input is held at zero (image-only ablation).
  bool use_aux = true;
  /// Enforce the reference fused width (512 + 7 = 519). Off only for
  /// small test configurations.
  bool reference_dims = true;

  /// Throws ConfigError.
  void validate() const;
  std::size_t encoder_output_side() const;
  std::size_t flatten_size() const;
  std::size_t fused_size() const { return embedding_size + aux_size; }

  /// Same topology with every conv width divided by `divisor`.
  static NowcastConfig reduced(std::size_t divisor);

  nlohmann::json to_json() const;
  /// Unknown keys raise ConfigError naming the key; missing keys keep defaults.
  static NowcastConfig from_json(const nlohmann::json& j);
};

struct ConvStage {
  std::string name;
  Conv2DLayer layer;
  bool pool = false;
};

/// 512-component embedding of one frame.
using FullSkyRepr = std::vector<double>;

class NowcastModel {
 public:
  /// Deterministic for a fixed seed. Throws ConfigError on an invalid config.
  static NowcastModel build(const NowcastConfig& config, std::uint64_t seed);

  const NowcastConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }

  /// Encoder then head, in a stable order with dotted names.
  std::vector<Parameter> parameters() const;
  std::vector<Parameter> encoder_parameters() const;
  std::size_t parameter_count() const;

  /// [C,S,S] -> [E] or [N,C,S,S] -> [N,E]. Throws InvalidShape.
  Tensor encode(const Tensor& images) const;
  /// Post-activation output of every conv layer for one [C,S,S] image.
  std::vector<Tensor> conv_activations(const Tensor& image) const;
  /// Normalized aux [N,aux] (ignored when use_aux is false). Returns [N,1]
  /// in W/m^2, unclamped.
  Tensor forward(const Tensor& images, const Tensor& aux, bool training, Rng* rng) const;

  const AuxNormalizer& aux_normalizer() const { return norm_; }
  void set_aux_normalizer(AuxNormalizer n) { norm_ = std::move(n); }

  /// Deep copy with independent parameter storage.
  NowcastModel clone() const;

  const std::vector<ConvStage>& conv_stages() const { return convs_; }

 private:
  NowcastConfig cfg_;
  std::uint64_t seed_ = 0;
  std::vector<ConvStage> convs_;
  DenseLayer embed_;
  DenseLayer head_;
  AuxNormalizer norm_;
};

/// Inference-mode embedding of one [C,S,S] image.
FullSkyRepr encode_frame(const NowcastModel& model, const Tensor& image);

/// Raw aux is normalized with the model's statistics; result clamped at 0.
/// Throws NumericError on a non-finite output.
double predict_nowcast(const NowcastModel& model, const Tensor& image, const AuxVector& raw_aux);
std::vector<double> predict_nowcast(const NowcastModel& model, const std::vector<SkySample>& samples,
                                    std::size_t batch_size = 32);

struct TrainOptions {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  bool shuffle = true;
  /// Early stopping on validation nMAP; 0 disables.
  std::size_t patience = 0;
  /// Called after every epoch with (epoch, mean loss).
  std::function<void(std::size_t, double)> on_epoch;
};

/// Optimizer state carried across a save/resume boundary.
struct TrainState {
  std::uint64_t adam_steps = 0;
  std::map<std::string, Adam::Moments> moments;
  std::size_t epochs_done = 0;
};

struct TrainHistory {
  std::vector<double> epoch_loss;  // mean training loss (log-cosh + L2) per epoch
  std::vector<double> validation_nmap;
  std::optional<std::size_t> best_epoch;
};

/// Fits the aux normalizer on `train` unless one is already fitted, then
/// runs mini-batch Adam. Throws NumericError naming the epoch and batch on
/// a non-finite loss and InvalidArgument on an empty training set.
TrainHistory train_nowcast(NowcastModel& model, const std::vector<SkySample>& train, const LossConfig& loss,
                           const AdamConfig& adam, const TrainOptions& opt, TrainState* state = nullptr,
                           const std::vector<SkySample>* validation = nullptr);

/// Channel-mean of every conv activation, bilinearly resized to the input
/// side and averaged over layers.
Tensor hypercolumn_map(const NowcastModel& model, const Tensor& image);
/// hypercolumn_map min-max normalized to [0, 1] (all zeros when flat).
Tensor hypercolumn_heatmap(const NowcastModel& model, const Tensor& image);

/// Bilinear resize of a [H,W] map (half-pixel centers, edge clamped).
Tensor resize_bilinear(const Tensor& map, std::size_t out_h, std::size_t out_w);

void save_nowcast(const std::filesystem::path& path, const NowcastModel& model, const TrainState* state = nullptr);
NowcastModel load_nowcast(const std::filesystem::path& path, TrainState* state = nullptr);

}  // namespace skycast
