// SPDX-License-Identifier: Apache-2.0
#include "skycast/nowcast.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <set>

#include "skycast/checkpoint.hpp"
#include "skycast/errors.hpp"
#include "skycast/metrics.hpp"
#include "skycast/rng.hpp"

namespace skycast {

namespace {

double clamp_prediction(double v) {
  if (!std::isfinite(v)) throw NumericError("nowcast: non-finite prediction");
  return std::max(0.0, v);
}

const std::vector<std::string>& layer_names() {
  static const std::vector<std::string> names{"stem", "b2", "b3a", "b3b", "b4a", "b4b", "b4c"};
  return names;
}

constexpr std::uint64_t kDropoutSalt = 0xD809;
constexpr std::uint64_t kShuffleSalt = 0x5F1E;

template <class T>
void read_key(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

// Copies samples[order[begin..end)] into batched tensors.
void fill_batch(const std::vector<SkySample>& samples, const std::vector<AuxVector>& aux,
                const std::vector<std::size_t>& order, std::size_t begin, std::size_t end, Tensor& images,
                Tensor& aux_t, Tensor& truth) {
  const std::size_t b = end - begin;
  const Shape& img_shape = samples[order[begin]].image.shape();
  const std::size_t per = shape_numel(img_shape);
  images = Tensor({b, img_shape[0], img_shape[1], img_shape[2]});
  aux_t = Tensor({b, kAuxDim});
  truth = Tensor({b, 1});
  auto img = images.mutable_data();
  auto a = aux_t.mutable_data();
  auto t = truth.mutable_data();
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t k = order[begin + i];
    const auto src = samples[k].image.data();
    if (src.size() != per) throw InvalidShape("nowcast batch: samples have different image shapes");
    std::copy(src.begin(), src.end(), img.begin() + static_cast<std::ptrdiff_t>(i * per));
    std::copy(aux[k].begin(), aux[k].end(), a.begin() + static_cast<std::ptrdiff_t>(i * kAuxDim));
    t[i] = samples[k].irradiance;
  }
}

std::vector<std::vector<double>> snapshot(const std::vector<Parameter>& params) {
  std::vector<std::vector<double>> out;
  for (const auto& p : params) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

void restore(const std::vector<Parameter>& params, const std::vector<std::vector<double>>& snap) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::copy(snap[i].begin(), snap[i].end(), params[i].tensor.mutable_data().begin());
  }
}

}  // namespace

void NowcastConfig::validate() const {
  if (input_channels == 0 || input_side == 0 || stem_filters == 0 || stem_kernel == 0 || stem_dilation == 0 ||
      block2_filters == 0 || block3_filters == 0 || block4_filters == 0 || embedding_size == 0 || head_outputs == 0) {
    throw ConfigError("nowcast: layer sizes must be positive");
  }
  if (aux_size != kAuxDim) throw ConfigError(fmt::format("nowcast: aux_size must be {}, got {}", kAuxDim, aux_size));
  if (reference_dims && (embedding_size != 512 || embedding_size + aux_size != 519)) {
    throw ConfigError(fmt::format("nowcast: fused vector must be 512 + 7 = 519, got {} + {}", embedding_size,
                                  aux_size));
  }
  std::set<std::string> seen;
  for (const auto& p : pool_after) {
    if (std::find(layer_names().begin(), layer_names().end(), p) == layer_names().end()) {
      throw ConfigError("nowcast: pool_after names unknown layer '" + p + "'");
    }
    if (!seen.insert(p).second) throw ConfigError("nowcast: pool_after repeats layer '" + p + "'");
  }
  const std::size_t div = std::size_t{1} << pool_after.size();
  if (input_side % div != 0) {
    throw ConfigError(fmt::format("nowcast: input_side {} is not divisible by 2^{} pools", input_side,
                                  pool_after.size()));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("nowcast: dropout must be in [0, 1)");
  if (!(target_scale > 0.0)) throw ConfigError("nowcast: target_scale must be positive");
}

std::size_t NowcastConfig::encoder_output_side() const { return input_side >> pool_after.size(); }

std::size_t NowcastConfig::flatten_size() const {
  const std::size_t s = encoder_output_side();
  return block4_filters * s * s;
}

NowcastConfig NowcastConfig::reduced(std::size_t divisor) {
  if (divisor == 0) throw ConfigError("nowcast: width divisor must be positive");
  NowcastConfig c;
  c.stem_filters = std::max<std::size_t>(1, c.stem_filters / divisor);
  c.block2_filters = std::max<std::size_t>(1, c.block2_filters / divisor);
  c.block3_filters = std::max<std::size_t>(1, c.block3_filters / divisor);
  c.block4_filters = std::max<std::size_t>(1, c.block4_filters / divisor);
  return c;
}

nlohmann::json NowcastConfig::to_json() const {
  return {{"input_channels", input_channels}, {"input_side", input_side},     {"stem_filters", stem_filters},
          {"stem_kernel", stem_kernel},       {"stem_dilation", stem_dilation}, {"block2_filters", block2_filters},
          {"block3_filters", block3_filters}, {"block4_filters", block4_filters}, {"pool_after", pool_after},
          {"embedding_size", embedding_size}, {"aux_size", aux_size},         {"dropout", dropout},
          {"head_outputs", head_outputs},     {"target_scale", target_scale}, {"use_aux", use_aux},
          {"reference_dims", reference_dims}};
}

NowcastConfig NowcastConfig::from_json(const nlohmann::json& j) {
  NowcastConfig c;
  if (!j.is_object()) throw ConfigError("nowcast: config must be an object");
  const nlohmann::json known = c.to_json();
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) throw ConfigError("unknown config key 'nowcast." + k + "'");
  }
  try {
    read_key(j, "input_channels", c.input_channels);
    read_key(j, "input_side", c.input_side);
    read_key(j, "stem_filters", c.stem_filters);
    read_key(j, "stem_kernel", c.stem_kernel);
    read_key(j, "stem_dilation", c.stem_dilation);
    read_key(j, "block2_filters", c.block2_filters);
    read_key(j, "block3_filters", c.block3_filters);
    read_key(j, "block4_filters", c.block4_filters);
    read_key(j, "pool_after", c.pool_after);
    read_key(j, "embedding_size", c.embedding_size);
    read_key(j, "aux_size", c.aux_size);
    read_key(j, "dropout", c.dropout);
    read_key(j, "head_outputs", c.head_outputs);
    read_key(j, "target_scale", c.target_scale);
    read_key(j, "use_aux", c.use_aux);
    read_key(j, "reference_dims", c.reference_dims);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("nowcast: bad value: ") + e.what());
  }
  c.validate();
  return c;
}

NowcastModel NowcastModel::build(const NowcastConfig& config, std::uint64_t seed) {
  config.validate();
  NowcastModel m;
  m.cfg_ = config;
  m.seed_ = seed;
  struct Spec {
    std::size_t in, out, k, dil;
  };
  const auto& c = config;
  const std::vector<Spec> specs{{c.input_channels, c.stem_filters, c.stem_kernel, c.stem_dilation},
                                {c.stem_filters, c.block2_filters, 3, 1},
                                {c.block2_filters, c.block3_filters, 3, 1},
                                {c.block3_filters, c.block3_filters, 3, 1},
                                {c.block3_filters, c.block4_filters, 3, 1},
                                {c.block4_filters, c.block4_filters, 3, 1},
                                {c.block4_filters, c.block4_filters, 3, 1}};
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    const std::string& name = layer_names()[i];
    const bool pool = std::find(c.pool_after.begin(), c.pool_after.end(), name) != c.pool_after.end();
    m.convs_.push_back({name, Conv2DLayer::create(s.in, s.out, s.k, s.dil, ops::Padding::kSame, derive_seed(seed, i)),
                        pool});
  }
  m.embed_ = DenseLayer::create(c.flatten_size(), c.embedding_size, derive_seed(seed, 100));
  m.head_ = DenseLayer::create(c.fused_size(), c.head_outputs, derive_seed(seed, 101));
  for (const auto& p : m.parameters()) p.tensor.set_requires_grad(true);
  return m;
}

std::vector<Parameter> NowcastModel::encoder_parameters() const {
  std::vector<Parameter> out;
  for (const auto& s : convs_) s.layer.append_parameters("encoder." + s.name, out);
  embed_.append_parameters("encoder.embed", out);
  return out;
}

std::vector<Parameter> NowcastModel::parameters() const {
  std::vector<Parameter> out = encoder_parameters();
  head_.append_parameters("head", out);
  return out;
}

std::size_t NowcastModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

Tensor NowcastModel::encode(const Tensor& images) const {
  const bool single = images.rank() == 3;
  const Shape want{cfg_.input_channels, cfg_.input_side, cfg_.input_side};
  const bool ok = single ? images.shape() == want
                         : images.rank() == 4 && Shape(images.shape().begin() + 1, images.shape().end()) == want;
  if (!ok) {
    throw InvalidShape("nowcast encoder: expected " + shape_string(want) + " images, got " +
                       shape_string(images.shape()));
  }
  Tensor x = single ? ops::reshape(images, {1, want[0], want[1], want[2]}) : images;
  for (const auto& s : convs_) {
    x = ops::relu(conv2d(x, s.layer));
    if (s.pool) x = maxpool2d(x);
  }
  const std::size_t n = x.dim(0);
  x = ops::relu(dense(ops::reshape(x, {n, cfg_.flatten_size()}), embed_));
  return single ? ops::reshape(x, {cfg_.embedding_size}) : x;
}

std::vector<Tensor> NowcastModel::conv_activations(const Tensor& image) const {
  const Shape want{cfg_.input_channels, cfg_.input_side, cfg_.input_side};
  if (image.shape() != want) {
    throw InvalidShape("nowcast encoder: expected " + shape_string(want) + ", got " + shape_string(image.shape()));
  }
  std::vector<Tensor> out;
  Tensor x = image;
  for (const auto& s : convs_) {
    x = ops::relu(conv2d(x, s.layer));
    out.push_back(x);
    if (s.pool) x = maxpool2d(x);
  }
  return out;
}

Tensor NowcastModel::forward(const Tensor& images, const Tensor& aux, bool training, Rng* rng) const {
  Tensor e = encode(images);
  if (e.rank() == 1) e = ops::reshape(e, {1, cfg_.embedding_size});
  const std::size_t n = e.dim(0);
  if (aux.shape() != Shape{n, cfg_.aux_size}) {
    throw InvalidShape(fmt::format("nowcast: aux must be [{}, {}], got {}", n, cfg_.aux_size,
                                   shape_string(aux.shape())));
  }
  const Tensor a = cfg_.use_aux ? aux : Tensor({n, cfg_.aux_size});
  Tensor fused = ops::concat({e, a}, 1);
  if (training && cfg_.dropout > 0.0) {
    if (rng == nullptr) throw InvalidArgument("nowcast: training forward needs an rng");
    fused = dropout(fused, DropoutLayer{cfg_.dropout, DropoutLayer::Mode::kTraining}, *rng);
  }
  return ops::scale(dense(fused, head_), cfg_.target_scale);
}

NowcastModel NowcastModel::clone() const {
  NowcastModel m = *this;
  for (auto& s : m.convs_) {
    s.layer.kernel = s.layer.kernel.detach();
    s.layer.bias = s.layer.bias.detach();
  }
  m.embed_ = {embed_.weight.detach(), embed_.bias.detach()};
  m.head_ = {head_.weight.detach(), head_.bias.detach()};
  for (const auto& p : m.parameters()) p.tensor.set_requires_grad(true);
  return m;
}

FullSkyRepr encode_frame(const NowcastModel& model, const Tensor& image) {
  if (image.rank() != 3) throw InvalidShape("encode_frame: expected one [C,S,S] image");
  TapeScope inference(nullptr);
  const Tensor e = model.encode(image);
  FullSkyRepr out(e.data().begin(), e.data().end());
  for (double v : out) {
    if (!std::isfinite(v)) throw NumericError("encode_frame: non-finite embedding");
  }
  return out;
}

double predict_nowcast(const NowcastModel& model, const Tensor& image, const AuxVector& raw_aux) {
  if (image.rank() != 3) throw InvalidShape("predict_nowcast: expected one [C,S,S] image");
  TapeScope inference(nullptr);
  const Tensor aux = ops::reshape(model.aux_normalizer().transform_tensor(raw_aux), {1, kAuxDim});
  const Tensor out = model.forward(image, aux, false, nullptr);
  return clamp_prediction(out.at(0));
}

std::vector<double> predict_nowcast(const NowcastModel& model, const std::vector<SkySample>& samples,
                                    std::size_t batch_size) {
  TapeScope inference(nullptr);
  std::vector<AuxVector> aux;
  aux.reserve(samples.size());
  for (const auto& s : samples) aux.push_back(model.aux_normalizer().transform(s.aux));
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> out(samples.size());
  batch_size = std::max<std::size_t>(1, batch_size);
  for (std::size_t b = 0; b < samples.size(); b += batch_size) {
    const std::size_t e = std::min(samples.size(), b + batch_size);
    Tensor images, a, truth;
    fill_batch(samples, aux, order, b, e, images, a, truth);
    const Tensor pred = model.forward(images, a, false, nullptr);
    for (std::size_t i = b; i < e; ++i) out[i] = clamp_prediction(pred.at(i - b));
  }
  return out;
}

TrainHistory train_nowcast(NowcastModel& model, const std::vector<SkySample>& train, const LossConfig& loss,
                           const AdamConfig& adam_cfg, const TrainOptions& opt, TrainState* state,
                           const std::vector<SkySample>* validation) {
  if (train.empty()) throw InvalidArgument("train_nowcast: empty training set");
  loss.validate();
  adam_cfg.validate();
  if (!model.aux_normalizer().fitted()) {
    std::vector<AuxVector> raw;
    raw.reserve(train.size());
    for (const auto& s : train) raw.push_back(s.aux);
    model.set_aux_normalizer(AuxNormalizer::fit(raw));
  }
  std::vector<AuxVector> aux;
  aux.reserve(train.size());
  for (const auto& s : train) aux.push_back(model.aux_normalizer().transform(s.aux));

  const std::vector<Parameter> params = model.parameters();
  Adam adam(params, adam_cfg);
  std::size_t first_epoch = 0;
  if (state != nullptr) {
    if (state->adam_steps > 0) adam.restore(state->adam_steps, state->moments);
    first_epoch = state->epochs_done;
  }
  const std::size_t batch = std::max<std::size_t>(1, opt.batch_size);

  TrainHistory hist;
  std::vector<std::vector<double>> best;
  double best_nmap = 0.0;
  std::size_t since_best = 0;
  std::vector<std::size_t> order(train.size());
  for (std::size_t epoch = first_epoch; epoch < first_epoch + opt.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    if (opt.shuffle) {
      Rng shuffle(derive_seed(opt.seed ^ kShuffleSalt, epoch));
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    }
    Rng drop(derive_seed(opt.seed ^ kDropoutSalt, epoch));
    double total = 0.0;
    for (std::size_t b = 0, bi = 0; b < train.size(); b += batch, ++bi) {
      const std::size_t e = std::min(train.size(), b + batch);
      Tensor images, a, truth;
      fill_batch(train, aux, order, b, e, images, a, truth);
      Tape tape;
      Tensor l;
      {
        TapeScope scope(tape);
        const Tensor pred = model.forward(images, a, true, &drop);
        l = ops::add(logcosh_loss(truth, pred, loss), l2_penalty(params, loss.l2_coefficient));
      }
      const double v = l.item();
      if (!std::isfinite(v)) {
        throw NumericError(fmt::format("nowcast training: non-finite loss at epoch {} batch {}", epoch, bi));
      }
      adam.step(backward(tape, l, params), epoch);
      total += v * static_cast<double>(e - b);
    }
    const double mean_loss = total / static_cast<double>(train.size());
    hist.epoch_loss.push_back(mean_loss);
    if (validation != nullptr && !validation->empty()) {
      std::vector<double> truth;
      for (const auto& s : *validation) truth.push_back(s.irradiance);
      const double v = nmap(truth, predict_nowcast(model, *validation));
      hist.validation_nmap.push_back(v);
      if (!hist.best_epoch || v < best_nmap) {
        best_nmap = v;
        hist.best_epoch = epoch;
        since_best = 0;
        if (opt.patience > 0) best = snapshot(params);
      } else if (opt.patience > 0 && ++since_best >= opt.patience) {
        spdlog::info("early stop at epoch {} (best {} at epoch {})", epoch, best_nmap, *hist.best_epoch);
        if (opt.on_epoch) opt.on_epoch(epoch, mean_loss);
        break;
      }
    }
    if (opt.on_epoch) opt.on_epoch(epoch, mean_loss);
  }
  if (!best.empty()) restore(params, best);
  if (state != nullptr) {
    state->adam_steps = adam.step_count();
    state->moments = adam.moments();
    state->epochs_done = first_epoch + hist.epoch_loss.size();
  }
  return hist;
}

Tensor resize_bilinear(const Tensor& map, std::size_t out_h, std::size_t out_w) {
  if (map.rank() != 2) throw InvalidShape("resize_bilinear: expected [H,W], got " + shape_string(map.shape()));
  const std::size_t ih = map.dim(0), iw = map.dim(1);
  Tensor out({out_h, out_w});
  auto o = out.mutable_data();
  const auto in = map.data();
  auto axis = [](std::size_t dst, std::size_t in_n, std::size_t out_n, std::size_t& i0, std::size_t& i1, double& w) {
    double s = (static_cast<double>(dst) + 0.5) * static_cast<double>(in_n) / static_cast<double>(out_n) - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in_n - 1));
    i0 = static_cast<std::size_t>(s);
    i1 = std::min(i0 + 1, in_n - 1);
    w = s - static_cast<double>(i0);
  };
  for (std::size_t y = 0; y < out_h; ++y) {
    std::size_t y0, y1;
    double wy;
    axis(y, ih, out_h, y0, y1, wy);
    for (std::size_t x = 0; x < out_w; ++x) {
      std::size_t x0, x1;
      double wx;
      axis(x, iw, out_w, x0, x1, wx);
      const double top = in[y0 * iw + x0] + wx * (in[y0 * iw + x1] - in[y0 * iw + x0]);
      const double bot = in[y1 * iw + x0] + wx * (in[y1 * iw + x1] - in[y1 * iw + x0]);
      o[y * out_w + x] = top + wy * (bot - top);
    }
  }
  return out;
}

Tensor hypercolumn_map(const NowcastModel& model, const Tensor& image) {
  TapeScope inference(nullptr);
  const std::size_t side = model.config().input_side;
  const auto acts = model.conv_activations(image);
  Tensor acc({side, side});
  auto a = acc.mutable_data();
  for (const auto& act : acts) {
    const std::size_t c = act.dim(0), h = act.dim(1), w = act.dim(2);
    Tensor mean({h, w});
    auto m = mean.mutable_data();
    const auto d = act.data();
    for (std::size_t k = 0; k < c; ++k) {
      for (std::size_t i = 0; i < h * w; ++i) m[i] += d[k * h * w + i];
    }
    for (auto& v : m) v /= static_cast<double>(c);
    const Tensor up = resize_bilinear(mean, side, side);
    const auto u = up.data();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += u[i];
  }
  for (auto& v : a) v /= static_cast<double>(acts.size());
  return acc;
}

Tensor hypercolumn_heatmap(const NowcastModel& model, const Tensor& image) {
  Tensor map = hypercolumn_map(model, image);
  auto d = map.mutable_data();
  const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
  const double min = *lo, range = *hi - *lo;
  for (auto& v : d) v = range > 0.0 ? std::clamp((v - min) / range, 0.0, 1.0) : 0.0;
  return map;
}

void save_nowcast(const std::filesystem::path& path, const NowcastModel& model, const TrainState* state) {
  Checkpoint ck;
  ck.header = {{"kind", "nowcast"},
               {"version", 1},
               {"seed", model.seed()},
               {"config", model.config().to_json()},
               {"aux_fitted", model.aux_normalizer().fitted()}};
  for (const auto& p : model.parameters()) ck.add(p.name, p.tensor);
  const auto& n = model.aux_normalizer();
  ck.add("aux.mean", {kAuxDim}, {n.mean().begin(), n.mean().end()});
  ck.add("aux.stddev", {kAuxDim}, {n.stddev().begin(), n.stddev().end()});
  if (state != nullptr) {
    ck.header["train_state"] = {{"adam_steps", state->adam_steps}, {"epochs_done", state->epochs_done}};
    for (const auto& [name, m] : state->moments) {
      ck.add("adam.m." + name, {m.first.size()}, m.first);
      ck.add("adam.v." + name, {m.second.size()}, m.second);
    }
  }
  write_checkpoint(path, ck);
}

NowcastModel load_nowcast(const std::filesystem::path& path, TrainState* state) {
  const Checkpoint ck = read_checkpoint(path);
  if (ck.header.value("kind", "") != "nowcast") {
    throw ConfigError("checkpoint '" + path.string() + "' field 'kind' is not 'nowcast'");
  }
  NowcastModel m = NowcastModel::build(NowcastConfig::from_json(ck.header.at("config")),
                                       ck.header.at("seed").get<std::uint64_t>());
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
