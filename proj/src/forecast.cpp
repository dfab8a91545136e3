// SPDX-License-Identifier: Apache-2.0
#include "skycast/forecast.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <set>

#include "skycast/checkpoint.hpp"
#include "skycast/errors.hpp"
#include "skycast/rng.hpp"

namespace skycast {

namespace {

constexpr std::uint64_t kDropoutSalt = 0xF0D9;
constexpr std::uint64_t kShuffleSalt = 0xF05E;

template <class T>
void read_key(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

const char* merge_name(MergeMode m) { return m == MergeMode::kSequence ? "sequence" : "final_state"; }

MergeMode parse_merge(const std::string& s) {
  if (s == "sequence") return MergeMode::kSequence;
  if (s == "final_state") return MergeMode::kFinalState;
  throw ConfigError("forecast: merge must be 'sequence' or 'final_state', got '" + s + "'");
}

// Standardized embeddings and normalized aux for every sample a window set
// touches, indexed like `samples`.
struct PreparedInputs {
  std::vector<std::vector<double>> embeddings;
  std::vector<AuxVector> aux;
};

std::set<std::size_t> lookback_indices(const std::vector<ForecastWindow>& windows, std::size_t n_samples) {
  std::set<std::size_t> idx;
  for (const auto& w : windows) {
    for (auto i : w.lookback) {
      if (i >= n_samples) throw InvalidArgument("forecast: window index out of range");
      idx.insert(i);
    }
    for (auto i : w.horizon) {
      if (i >= n_samples) throw InvalidArgument("forecast: window index out of range");
    }
  }
  return idx;
}

PreparedInputs prepare(const ForecastModel& model, const std::vector<SkySample>& samples,
                       const std::set<std::size_t>& used, const EmbeddingCache& cache) {
  PreparedInputs p;
  p.embeddings.resize(samples.size());
  p.aux.resize(samples.size());
  for (auto i : used) {
    p.embeddings[i] = model.embedding_stats().transform(cache.at(samples[i].timestamp));
    p.aux[i] = model.aux_normalizer().transform(samples[i].aux);
  }
  return p;
}

void fill_inputs(const ForecastModel& model, const PreparedInputs& p, const std::vector<ForecastWindow>& windows,
                 const std::vector<std::size_t>& order, std::size_t begin, std::size_t end,
                 std::vector<Tensor>& emb, std::vector<Tensor>& aux) {
  const auto& c = model.config();
  const std::size_t b = end - begin;
  emb.assign(c.lookback, Tensor());
  aux.assign(c.lookback, Tensor());
  for (std::size_t t = 0; t < c.lookback; ++t) {
    emb[t] = Tensor({b, c.embedding_size});
    aux[t] = Tensor({b, c.aux_size});
    auto e = emb[t].mutable_data();
    auto a = aux[t].mutable_data();
    for (std::size_t i = 0; i < b; ++i) {
      const ForecastWindow& w = windows[order[begin + i]];
      if (w.lookback.size() != c.lookback) {
        throw InvalidArgument(fmt::format("forecast: window has look-back {}, model expects {}", w.lookback.size(),
                                          c.lookback));
      }
      const std::size_t k = w.lookback[t];
      const auto& src = p.embeddings[k];
      if (src.size() != c.embedding_size) throw InvalidShape("forecast: embedding size mismatch");
      std::copy(src.begin(), src.end(), e.begin() + static_cast<std::ptrdiff_t>(i * c.embedding_size));
      std::copy(p.aux[k].begin(), p.aux[k].end(), a.begin() + static_cast<std::ptrdiff_t>(i * c.aux_size));
    }
  }
}

Tensor fill_targets(const ForecastModel& model, const std::vector<SkySample>& samples,
                    const std::vector<ForecastWindow>& windows, const std::vector<std::size_t>& order,
                    std::size_t begin, std::size_t end) {
  const std::size_t h = model.config().horizon;
  Tensor out({end - begin, h});
  auto d = out.mutable_data();
  for (std::size_t i = begin; i < end; ++i) {
    const ForecastWindow& w = windows[order[i]];
    if (w.horizon.size() != h) {
      throw InvalidArgument(fmt::format("forecast: window has horizon {}, model expects {}", w.horizon.size(), h));
    }
    for (std::size_t k = 0; k < h; ++k) d[(i - begin) * h + k] = samples[w.horizon[k]].irradiance;
  }
  return out;
}

double clamp_prediction(double v) {
  if (!std::isfinite(v)) throw NumericError("forecast: non-finite prediction");
  return std::max(0.0, v);
}

void check_embedding(const FullSkyRepr& e, std::size_t dim) {
  if (e.size() != dim) throw InvalidShape(fmt::format("forecast: embedding has {} components, expected {}", e.size(), dim));
}

}  // namespace

void ForecastConfig::validate() const {
  if (lookback == 0 || horizon == 0 || embedding_size == 0 || frame_hidden == 0 || weather_hidden == 0 ||
      merge_hidden == 0) {
    throw ConfigError("forecast: sizes must be positive");
  }
  if (aux_size != kAuxDim) throw ConfigError(fmt::format("forecast: aux_size must be {}, got {}", kAuxDim, aux_size));
  if (reference_dims && embedding_size != 512) {
    throw ConfigError(fmt::format("forecast: frame track input must be 512, got {}", embedding_size));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("forecast: dropout must be in [0, 1)");
  if (!(target_scale > 0.0)) throw ConfigError("forecast: target_scale must be positive");
}

ForecastConfig ForecastConfig::colorado() { return ForecastConfig{}; }

nlohmann::json ForecastConfig::to_json() const {
  return {{"lookback", lookback},         {"horizon", horizon},
          {"embedding_size", embedding_size}, {"aux_size", aux_size},
          {"frame_hidden", frame_hidden}, {"weather_hidden", weather_hidden},
          {"merge_hidden", merge_hidden}, {"merge", merge_name(merge)},
          {"dropout", dropout},           {"target_scale", target_scale},
          {"reference_dims", reference_dims}};
}

ForecastConfig ForecastConfig::from_json(const nlohmann::json& j) {
  ForecastConfig c;
  if (!j.is_object()) throw ConfigError("forecast: config must be an object");
  const nlohmann::json known = c.to_json();
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) throw ConfigError("unknown config key 'forecast." + k + "'");
  }
  try {
    read_key(j, "lookback", c.lookback);
    read_key(j, "horizon", c.horizon);
    read_key(j, "embedding_size", c.embedding_size);
    read_key(j, "aux_size", c.aux_size);
    read_key(j, "frame_hidden", c.frame_hidden);
    read_key(j, "weather_hidden", c.weather_hidden);
    read_key(j, "merge_hidden", c.merge_hidden);
    if (j.contains("merge")) c.merge = parse_merge(j.at("merge").get<std::string>());
    read_key(j, "dropout", c.dropout);
    read_key(j, "target_scale", c.target_scale);
    read_key(j, "reference_dims", c.reference_dims);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("forecast: bad value: ") + e.what());
  }
  c.validate();
  return c;
}

EmbeddingStats EmbeddingStats::fit(const std::vector<const FullSkyRepr*>& rows) {
  if (rows.empty()) throw InvalidArgument("embedding statistics: empty set");
  const std::size_t d = rows.front()->size();
  EmbeddingStats s;
  s.mean.assign(d, 0.0);
  s.stddev.assign(d, 0.0);
  for (const auto* r : rows) {
    check_embedding(*r, d);
    for (std::size_t i = 0; i < d; ++i) s.mean[i] += (*r)[i];
  }
  const double n = static_cast<double>(rows.size());
  for (auto& m : s.mean) m /= n;
  for (const auto* r : rows) {
    for (std::size_t i = 0; i < d; ++i) s.stddev[i] += ((*r)[i] - s.mean[i]) * ((*r)[i] - s.mean[i]);
  }
  for (auto& v : s.stddev) {
    v = std::sqrt(v / n);
    if (!(v > 1e-12)) v = 1.0;
  }
  return s;
}

std::vector<double> EmbeddingStats::transform(const FullSkyRepr& e) const {
  if (!fitted()) return e;
  check_embedding(e, mean.size());
  std::vector<double> out(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) out[i] = (e[i] - mean[i]) / stddev[i];
  return out;
}

EmbeddingCache EmbeddingCache::build(const NowcastModel& encoder, const std::vector<SkySample>& samples) {
  std::vector<FullSkyRepr> out(samples.size());
  std::exception_ptr first;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < samples.size(); ++i) {
    try {
      out[i] = encode_frame(encoder, samples[i].image);
    } catch (...) {
#pragma omp critical(skycast_embed_error)
      if (!first) first = std::current_exception();
    }
  }
  if (first) std::rethrow_exception(first);
  EmbeddingCache c;
  for (std::size_t i = 0; i < samples.size(); ++i) c.map_[samples[i].timestamp] = std::move(out[i]);
  return c;
}

const FullSkyRepr& EmbeddingCache::at(Timestamp t) const {
  const auto it = map_.find(t);
  if (it == map_.end()) throw DataError("embedding cache: no frame at " + format_iso8601(t));
  return it->second;
}

ForecastModel ForecastModel::build(const ForecastConfig& config, std::uint64_t seed) {
  config.validate();
  ForecastModel m;
  m.cfg_ = config;
  m.seed_ = seed;
  const auto& c = config;
  m.frame_ = LSTMLayer::create(c.embedding_size, c.frame_hidden, derive_seed(seed, 200));
  m.weather_ = LSTMLayer::create(c.aux_size, c.weather_hidden, derive_seed(seed, 201));
  m.merge_ = LSTMLayer::create(c.frame_hidden + c.weather_hidden, c.merge_hidden, derive_seed(seed, 202));
  m.head_ = DenseLayer::create(c.merge_hidden, c.horizon, derive_seed(seed, 203));
  for (const auto& p : m.parameters()) p.tensor.set_requires_grad(true);
  return m;
}

ForecastModel ForecastModel::build(const ForecastConfig& config, const NowcastModel& encoder, std::uint64_t seed) {
  if (encoder.config().embedding_size != config.embedding_size) {
    throw ConfigError(fmt::format("forecast: encoder emits {}-d embeddings, frame track expects {}",
                                  encoder.config().embedding_size, config.embedding_size));
  }
  ForecastModel m = build(config, seed);
  m.encoder_ = encoder.clone();
  for (const auto& p : m.encoder_->parameters()) p.tensor.set_requires_grad(false);
  return m;
}

std::vector<Parameter> ForecastModel::parameters() const {
  std::vector<Parameter> out;
  frame_.append_parameters("forecast.frame", out);
  weather_.append_parameters("forecast.weather", out);
  merge_.append_parameters("forecast.merge", out);
  head_.append_parameters("forecast.head", out);
  return out;
}

std::size_t ForecastModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

Tensor ForecastModel::forward(const std::vector<Tensor>& embeddings, const std::vector<Tensor>& aux, bool training,
                              Rng* rng, ForecastTrace* trace) const {
  if (embeddings.size() != cfg_.lookback || aux.size() != cfg_.lookback) {
    throw InvalidArgument(fmt::format("forecast: expected {} look-back steps, got {} embeddings and {} aux",
                                      cfg_.lookback, embeddings.size(), aux.size()));
  }
  const LSTMOutput frame = lstm_sequence(embeddings, frame_);
  const LSTMOutput weather = lstm_sequence(aux, weather_);
  std::vector<Tensor> merged_in;
  if (cfg_.merge == MergeMode::kSequence) {
    merged_in.reserve(cfg_.lookback);
    for (std::size_t t = 0; t < cfg_.lookback; ++t) {
      merged_in.push_back(ops::concat({frame.hidden_states[t], weather.hidden_states[t]}, 1));
    }
  } else {
    merged_in.push_back(ops::concat({frame.final_hidden, weather.final_hidden}, 1));
  }
  const LSTMOutput merged = lstm_sequence(merged_in, merge_);
  if (trace != nullptr) *trace = {frame.final_hidden, weather.final_hidden, merged.final_hidden};
  Tensor h = merged.final_hidden;
  if (training && cfg_.dropout > 0.0) {
    if (rng == nullptr) throw InvalidArgument("forecast: training forward needs an rng");
    h = dropout(h, DropoutLayer{cfg_.dropout, DropoutLayer::Mode::kTraining}, *rng);
  }
  return ops::scale(dense(h, head_), cfg_.target_scale);
}

std::vector<double> forecast(const ForecastModel& model, const std::vector<SkySample>& lookback) {
  const auto& c = model.config();
  if (model.encoder() == nullptr) throw InvalidArgument("forecast: model has no encoder");
  if (lookback.size() != c.lookback) {
    throw InvalidArgument(fmt::format("forecast: expected {} look-back frames, got {}", c.lookback, lookback.size()));
  }
  TapeScope inference(nullptr);
  std::vector<Tensor> emb, aux;
  for (const auto& s : lookback) {
    const auto e = model.embedding_stats().transform(encode_frame(*model.encoder(), s.image));
    emb.push_back(Tensor({1, c.embedding_size}, e));
    const AuxVector a = model.aux_normalizer().transform(s.aux);
    aux.push_back(Tensor({1, c.aux_size}, std::vector<double>(a.begin(), a.end())));
  }
  const Tensor out = model.forward(emb, aux, false, nullptr);
  std::vector<double> r(out.data().begin(), out.data().end());
  for (auto& v : r) v = clamp_prediction(v);
  return r;
}

std::vector<std::vector<double>> forecast_windows(const ForecastModel& model, const std::vector<SkySample>& samples,
                                                  const std::vector<ForecastWindow>& windows,
                                                  const EmbeddingCache& cache, std::size_t batch_size) {
  const PreparedInputs p = prepare(model, samples, lookback_indices(windows, samples.size()), cache);
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::vector<double>> out;
  out.reserve(windows.size());
  batch_size = std::max<std::size_t>(1, batch_size);
  const std::size_t h = model.config().horizon;
  TapeScope inference(nullptr);
  for (std::size_t b = 0; b < windows.size(); b += batch_size) {
    const std::size_t e = std::min(windows.size(), b + batch_size);
    std::vector<Tensor> emb, aux;
    fill_inputs(model, p, windows, order, b, e, emb, aux);
    const Tensor pred = model.forward(emb, aux, false, nullptr);
    const auto d = pred.data();
    for (std::size_t i = 0; i < e - b; ++i) {
      std::vector<double> row(d.begin() + static_cast<std::ptrdiff_t>(i * h),
                              d.begin() + static_cast<std::ptrdiff_t>((i + 1) * h));
      for (auto& v : row) v = clamp_prediction(v);
      out.push_back(std::move(row));
    }
  }
  return out;
}

TrainHistory train_forecast(ForecastModel& model, const std::vector<SkySample>& samples,
                            const std::vector<ForecastWindow>& windows, const LossConfig& loss,
                            const AdamConfig& adam_cfg, const TrainOptions& opt, TrainState* state,
                            const EmbeddingCache* cache) {
  if (windows.empty()) throw InvalidArgument("train_forecast: no training windows");
  loss.validate();
  adam_cfg.validate();
  EmbeddingCache own;
  if (cache == nullptr) {
    if (model.encoder() == nullptr) throw InvalidArgument("train_forecast: model has no encoder and no cache was given");
    own = EmbeddingCache::build(*model.encoder(), samples);
    cache = &own;
  }
  const std::set<std::size_t> used = lookback_indices(windows, samples.size());
  if (!model.aux_normalizer().fitted()) {
    std::vector<AuxVector> raw;
    for (auto i : used) raw.push_back(samples[i].aux);
    model.set_aux_normalizer(AuxNormalizer::fit(raw));
  }
  if (!model.embedding_stats().fitted()) {
    std::vector<const FullSkyRepr*> rows;
    for (auto i : used) rows.push_back(&cache->at(samples[i].timestamp));
    model.set_embedding_stats(EmbeddingStats::fit(rows));
  }
  const PreparedInputs p = prepare(model, samples, used, *cache);

  const std::vector<Parameter> params = model.parameters();
  Adam adam(params, adam_cfg);
  std::size_t first_epoch = 0;
  if (state != nullptr) {
    if (state->adam_steps > 0) adam.restore(state->adam_steps, state->moments);
    first_epoch = state->epochs_done;
  }
  const std::size_t batch = std::max<std::size_t>(1, opt.batch_size);
  TrainHistory hist;
  std::vector<std::size_t> order(windows.size());
  for (std::size_t epoch = first_epoch; epoch < first_epoch + opt.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    if (opt.shuffle) {
      Rng shuffle(derive_seed(opt.seed ^ kShuffleSalt, epoch));
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    }
    Rng drop(derive_seed(opt.seed ^ kDropoutSalt, epoch));
    double total = 0.0;
    for (std::size_t b = 0, bi = 0; b < windows.size(); b += batch, ++bi) {
      const std::size_t e = std::min(windows.size(), b + batch);
      std::vector<Tensor> emb, aux;
      fill_inputs(model, p, windows, order, b, e, emb, aux);
      const Tensor truth = fill_targets(model, samples, windows, order, b, e);
      Tape tape;
      Tensor l;
      {
        TapeScope scope(tape);
        const Tensor pred = model.forward(emb, aux, true, &drop);
        l = ops::add(logcosh_loss(truth, pred, loss), l2_penalty(params, loss.l2_coefficient));
      }
      const double v = l.item();
      if (!std::isfinite(v)) {
        throw NumericError(fmt::format("forecast training: non-finite loss at epoch {} batch {}", epoch, bi));
      }
      adam.step(backward(tape, l, params), epoch);
      total += v * static_cast<double>(e - b);
    }
    const double mean_loss = total / static_cast<double>(windows.size());
    hist.epoch_loss.push_back(mean_loss);
    if (opt.on_epoch) opt.on_epoch(epoch, mean_loss);
  }
  if (state != nullptr) {
    state->adam_steps = adam.step_count();
    state->moments = adam.moments();
    state->epochs_done = first_epoch + hist.epoch_loss.size();
  }
  return hist;
}

void save_forecast(const std::filesystem::path& path, const ForecastModel& model, const TrainState* state) {
  Checkpoint ck;
  ck.header = {{"kind", "forecast"},
               {"version", 1},
               {"seed", model.seed()},
               {"config", model.config().to_json()},
               {"aux_fitted", model.aux_normalizer().fitted()},
               {"embedding_fitted", model.embedding_stats().fitted()}};
  if (const NowcastModel* enc = model.encoder()) {
    ck.header["encoder"] = {{"seed", enc->seed()}, {"config", enc->config().to_json()}};
    for (const auto& p : enc->encoder_parameters()) ck.add(p.name, p.tensor);
  }
  for (const auto& p : model.parameters()) ck.add(p.name, p.tensor);
  const auto& n = model.aux_normalizer();
  ck.add("aux.mean", {kAuxDim}, {n.mean().begin(), n.mean().end()});
  ck.add("aux.stddev", {kAuxDim}, {n.stddev().begin(), n.stddev().end()});
  if (model.embedding_stats().fitted()) {
    const auto& s = model.embedding_stats();
    ck.add("embedding.mean", {s.mean.size()}, s.mean);
    ck.add("embedding.stddev", {s.stddev.size()}, s.stddev);
  }
  if (state != nullptr) {
    ck.header["train_state"] = {{"adam_steps", state->adam_steps}, {"epochs_done", state->epochs_done}};
    for (const auto& [name, m] : state->moments) {
      ck.add("adam.m." + name, {m.first.size()}, m.first);
      ck.add("adam.v." + name, {m.second.size()}, m.second);
    }
  }
  write_checkpoint(path, ck);
}

ForecastModel load_forecast(const std::filesystem::path& path, TrainState* state) {
  const Checkpoint ck = read_checkpoint(path);
  if (ck.header.value("kind", "") != "forecast") {
    throw ConfigError("checkpoint '" + path.string() + "' field 'kind' is not 'forecast'");
  }
  const ForecastConfig cfg = ForecastConfig::from_json(ck.header.at("config"));
  const auto seed = ck.header.at("seed").get<std::uint64_t>();
  ForecastModel m;
  if (ck.header.contains("encoder")) {
    const auto& e = ck.header["encoder"];
    NowcastModel enc =
        NowcastModel::build(NowcastConfig::from_json(e.at("config")), e.at("seed").get<std::uint64_t>());
    for (const auto& p : enc.encoder_parameters()) load_into(ck, p.name, p.tensor);
    m = ForecastModel::build(cfg, enc, seed);
  } else {
    m = ForecastModel::build(cfg, seed);
  }
  for (const auto& p : m.parameters()) load_into(ck, p.name, p.tensor);
  if (ck.header.value("aux_fitted", false)) {
    AuxVector mean{}, sd{};
    const auto& am = ck.array("aux.mean").data;
    const auto& as = ck.array("aux.stddev").data;
    if (am.size() != kAuxDim || as.size() != kAuxDim) throw ConfigError("checkpoint: aux statistics have wrong size");
    std::copy(am.begin(), am.end(), mean.begin());
    std::copy(as.begin(), as.end(), sd.begin());
    m.set_aux_normalizer(AuxNormalizer(mean, sd));
  }
  if (ck.header.value("embedding_fitted", false)) {
    EmbeddingStats s{ck.array("embedding.mean").data, ck.array("embedding.stddev").data};
    if (s.mean.size() != cfg.embedding_size || s.stddev.size() != cfg.embedding_size) {
      throw ConfigError("checkpoint: embedding statistics have wrong size");
    }
    m.set_embedding_stats(std::move(s));
  }
  if (state != nullptr) {
    *state = TrainState{};
    if (ck.header.contains("train_state")) {
      state->adam_steps = ck.header["train_state"].at("adam_steps").get<std::uint64_t>();
      state->epochs_done = ck.header["train_state"].at("epochs_done").get<std::size_t>();
      for (const auto& p : m.parameters()) {
        if (!ck.has("adam.m." + p.name)) continue;
        state->moments[p.name] = {ck.array("adam.m." + p.name).data, ck.array("adam.v." + p.name).data};
      }
    }
  }
  return m;
}

}  // namespace skycast
