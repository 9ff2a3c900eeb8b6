#include "gridcal/models.hpp"

#include "gridcal/error.hpp"
#include "gridcal/random.hpp"

#include <algorithm>
#include <cmath>

namespace gridcal {

namespace {

constexpr double kScale = 255.0;

void check_frames(std::span<const GridTensor> inputs, std::size_t history, std::size_t channels,
                  const char* who) {
  if (inputs.size() != history) {
    throw ShapeError(std::string(who) + ": expected " + std::to_string(history) + " input frames, got " +
                     std::to_string(inputs.size()));
  }
  const Shape& s = inputs.front().shape();
  if (s.channels != channels) {
    throw ShapeError(std::string(who) + ": expected " + std::to_string(channels) + " channels, got " +
                     std::to_string(s.channels));
  }
  for (const auto& f : inputs) {
    if (f.shape() != s) throw ShapeError(std::string(who) + ": input frames differ in shape");
  }
}

float to_traffic(double normalized) {
  return static_cast<float>(std::clamp(normalized * kScale, 0.0, 255.0));
}

std::size_t config_value(const std::map<std::string, std::string>& config, const std::string& key,
                         std::size_t fallback) {
  auto it = config.find(key);
  return it == config.end() ? fallback : static_cast<std::size_t>(std::stoull(it->second));
}

} // namespace

std::unique_ptr<Predictor> PersistencePredictor::clone() const {
  return std::make_unique<PersistencePredictor>(*this);
}

GridTensor PersistencePredictor::forward(std::span<const GridTensor> inputs) const {
  if (inputs.empty()) throw ShapeError("persistence: no input frames");
  for (const auto& f : inputs) require_same_shape(f, inputs.front(), "persistence");
  GridTensor out = inputs.back();
  for (float& v : out.values()) v = std::clamp(v, kTrafficMin, kTrafficMax);
  return out;
}

LinearPredictor::LinearPredictor(std::size_t history, std::size_t channels)
    : history_(history),
      channels_(channels),
      weight_("linear.weight", {channels, history}),
      bias_("linear.bias", {channels}) {
  if (history == 0 || channels == 0) throw InvalidArgument("linear predictor needs history and channels");
}

std::unique_ptr<Predictor> LinearPredictor::clone() const { return std::make_unique<LinearPredictor>(*this); }

void LinearPredictor::check_inputs(std::span<const GridTensor> inputs) const {
  check_frames(inputs, history_, channels_, "linear predictor");
}

GridTensor LinearPredictor::forward(std::span<const GridTensor> inputs) const {
  check_inputs(inputs);
  const Shape s = inputs.front().shape();
  GridTensor out(s);
  const std::size_t pixels = s.height * s.width;
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t c = 0; c < channels_; ++c) {
      double y = bias_.value[c];
      for (std::size_t t = 0; t < history_; ++t) {
        y += weight_.value[c * history_ + t] * inputs[t].values()[p * channels_ + c] / kScale;
      }
      out.values()[p * channels_ + c] = to_traffic(y);
    }
  }
  return out;
}

void LinearPredictor::initialize(std::uint64_t seed) {
  Rng rng(seed);
  const double bound = std::sqrt(1.0 / static_cast<double>(history_));
  for (double& w : weight_.value) w = rng.uniform(-bound, bound);
  for (double& b : bias_.value) b = rng.uniform(-bound, bound);
}

double LinearPredictor::loss_and_gradient(std::span<const SampleSequence* const> batch, std::size_t horizon,
                                          bool) {
  weight_.zero_grad();
  bias_.zero_grad();
  double sse = 0.0;
  std::size_t n = 0;
  for (const SampleSequence* s : batch) {
    check_inputs(s->inputs);
    const GridTensor& y = s->targets.at(horizon);
    require_same_shape(y, s->inputs.front(), "linear predictor target");
    const std::size_t pixels = y.height() * y.width();
    for (std::size_t p = 0; p < pixels; ++p) {
      for (std::size_t c = 0; c < channels_; ++c) {
        const std::size_t cell = p * channels_ + c;
        double pred = bias_.value[c];
        for (std::size_t t = 0; t < history_; ++t) {
          pred += weight_.value[c * history_ + t] * s->inputs[t].values()[cell] / kScale;
        }
        const double r = pred - y.values()[cell] / kScale;
        sse += r * r;
        bias_.grad[c] += 2.0 * r;
        for (std::size_t t = 0; t < history_; ++t) {
          weight_.grad[c * history_ + t] += 2.0 * r * s->inputs[t].values()[cell] / kScale;
        }
      }
    }
    n += y.size();
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (double& g : weight_.grad) g *= inv;
  for (double& g : bias_.grad) g *= inv;
  return sse * inv;
}

std::map<std::string, std::string> LinearPredictor::config() const {
  return {{"history", std::to_string(history_)}, {"channels", std::to_string(channels_)}};
}

ConvBnPredictor::ConvBnPredictor(ConvNetConfig cfg)
    : cfg_(cfg),
      conv1_("conv1", 3, cfg.history * cfg.channels, cfg.hidden),
      bn1_("bn1", cfg.hidden, cfg.bn_epsilon, cfg.bn_momentum),
      conv2_("conv2", 3, cfg.hidden, cfg.hidden),
      bn2_("bn2", cfg.hidden, cfg.bn_epsilon, cfg.bn_momentum),
      conv3_("conv3", 1, cfg.hidden, cfg.channels) {
  if (cfg.stochastic_layers > 2) throw InvalidArgument("conv-bn model has only two BN layers");
}

std::unique_ptr<Predictor> ConvBnPredictor::clone() const { return std::make_unique<ConvBnPredictor>(*this); }

std::vector<Parameter*> ConvBnPredictor::parameters() {
  return {&conv1_.weight, &conv1_.bias, &bn1_.gamma, &bn1_.beta, &conv2_.weight,
          &conv2_.bias,   &bn2_.gamma,  &bn2_.beta,  &conv3_.weight, &conv3_.bias};
}

std::vector<Parameter*> ConvBnPredictor::buffers() {
  return {&bn1_.running_mean, &bn1_.running_var, &bn2_.running_mean, &bn2_.running_var};
}

void ConvBnPredictor::initialize(std::uint64_t seed) {
  Rng rng(seed);
  auto u = [&rng] { return rng.uniform(); };
  conv1_.initialize(u);
  conv2_.initialize(u);
  conv3_.initialize(u);
  if (cfg_.residual) {
    // Start exactly at persistence; the correction grows from zero.
    std::fill(conv3_.weight.value.begin(), conv3_.weight.value.end(), 0.0);
    std::fill(conv3_.bias.value.begin(), conv3_.bias.value.end(), 0.0);
  }
  bn1_ = BatchNormLayer("bn1", cfg_.hidden, cfg_.bn_epsilon, cfg_.bn_momentum);
  bn2_ = BatchNormLayer("bn2", cfg_.hidden, cfg_.bn_epsilon, cfg_.bn_momentum);
}

std::map<std::string, std::string> ConvBnPredictor::config() const {
  return {{"history", std::to_string(cfg_.history)},
          {"channels", std::to_string(cfg_.channels)},
          {"hidden", std::to_string(cfg_.hidden)},
          {"stochastic_layers", std::to_string(cfg_.stochastic_layers)},
          {"residual", cfg_.residual ? "1" : "0"},
          {"training_batch_size", std::to_string(training_batch_size_)}};
}

Matrix ConvBnPredictor::stack_inputs(std::span<const InputFrames> samples, std::size_t& height,
                                     std::size_t& width) const {
  if (samples.empty()) throw InvalidArgument("conv-bn: empty batch");
  check_frames(samples.front(), cfg_.history, cfg_.channels, "conv-bn");
  height = samples.front().front().height();
  width = samples.front().front().width();
  const std::size_t pixels = height * width;
  const std::size_t features = cfg_.history * cfg_.channels;
  Matrix x(static_cast<Eigen::Index>(samples.size() * pixels), static_cast<Eigen::Index>(features));
  for (std::size_t n = 0; n < samples.size(); ++n) {
    check_frames(samples[n], cfg_.history, cfg_.channels, "conv-bn");
    if (samples[n].front().height() != height || samples[n].front().width() != width) {
      throw ShapeError("conv-bn: batch members differ in spatial size");
    }
    for (std::size_t t = 0; t < cfg_.history; ++t) {
      const auto vals = samples[n][t].values();
      for (std::size_t p = 0; p < pixels; ++p) {
        for (std::size_t c = 0; c < cfg_.channels; ++c) {
          x(static_cast<Eigen::Index>(n * pixels + p), static_cast<Eigen::Index>(t * cfg_.channels + c)) =
              vals[p * cfg_.channels + c] / kScale;
        }
      }
    }
  }
  return x;
}

Matrix ConvBnPredictor::infer(const Matrix& x, std::size_t batch, std::size_t height, std::size_t width,
                              const BatchStatistics* stats1, const BatchStatistics* stats2) const {
  Matrix a = conv1_.forward(x, batch, height, width);
  a = stats1 ? bn1_.forward(a, BnMode::TestStochastic, stats1) : bn1_.forward(a, BnMode::TestRunning);
  relu_inplace(a);
  a = conv2_.forward(a, batch, height, width);
  a = stats2 ? bn2_.forward(a, BnMode::TestStochastic, stats2) : bn2_.forward(a, BnMode::TestRunning);
  relu_inplace(a);
  Matrix out = conv3_.forward(a, batch, height, width);
  add_skip(out, x);
  return out;
}

void ConvBnPredictor::add_skip(Matrix& out, const Matrix& x) const {
  if (!cfg_.residual) return;
  const auto first = static_cast<Eigen::Index>((cfg_.history - 1) * cfg_.channels);
  out += x.middleCols(first, static_cast<Eigen::Index>(cfg_.channels));
}

GridTensor ConvBnPredictor::to_frame(const Matrix& out, std::size_t row0, std::size_t height,
                                     std::size_t width) const {
  GridTensor frame(height, width, cfg_.channels);
  const std::size_t pixels = height * width;
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t c = 0; c < cfg_.channels; ++c) {
      frame.values()[p * cfg_.channels + c] =
          to_traffic(out(static_cast<Eigen::Index>(row0 + p), static_cast<Eigen::Index>(c)));
    }
  }
  return frame;
}

GridTensor ConvBnPredictor::forward(std::span<const GridTensor> inputs) const {
  const InputFrames frames(inputs.begin(), inputs.end());
  std::size_t h = 0, w = 0;
  const Matrix x = stack_inputs(std::span<const InputFrames>(&frames, 1), h, w);
  return to_frame(infer(x, 1, h, w, nullptr, nullptr), 0, h, w);
}

std::vector<BatchStatistics> ConvBnPredictor::reference_statistics(
    std::span<const InputFrames> reference_batch) const {
  if (reference_batch.size() != training_batch_size_) {
    throw InvalidArgument("reference batch has " + std::to_string(reference_batch.size()) +
                          " samples; the model was trained with batch size " +
                          std::to_string(training_batch_size_));
  }
  std::size_t h = 0, w = 0;
  const Matrix x = stack_inputs(reference_batch, h, w);
  std::vector<BatchStatistics> stats;
  Matrix a = conv1_.forward(x, reference_batch.size(), h, w);
  if (cfg_.stochastic_layers == 0) return stats;
  stats.push_back(BatchNormLayer::statistics(a));
  a = bn1_.forward(a, BnMode::TestStochastic, &stats[0]);
  relu_inplace(a);
  if (cfg_.stochastic_layers == 1) return stats;
  a = conv2_.forward(a, reference_batch.size(), h, w);
  stats.push_back(BatchNormLayer::statistics(a));
  return stats;
}

GridTensor ConvBnPredictor::forward_with_statistics(std::span<const GridTensor> inputs,
                                                    std::span<const BatchStatistics> shallow_stats) const {
  if (shallow_stats.size() != cfg_.stochastic_layers) {
    throw InvalidArgument("expected statistics for " + std::to_string(cfg_.stochastic_layers) +
                          " batch norm layers");
  }
  const InputFrames frames(inputs.begin(), inputs.end());
  std::size_t h = 0, w = 0;
  const Matrix x = stack_inputs(std::span<const InputFrames>(&frames, 1), h, w);
  const BatchStatistics* s1 = shallow_stats.size() > 0 ? &shallow_stats[0] : nullptr;
  const BatchStatistics* s2 = shallow_stats.size() > 1 ? &shallow_stats[1] : nullptr;
  return to_frame(infer(x, 1, h, w, s1, s2), 0, h, w);
}

GridTensor ConvBnPredictor::forward_stochastic_bn(std::span<const GridTensor> inputs,
                                                  std::span<const InputFrames> reference_batch) const {
  const auto stats = reference_statistics(reference_batch);
  return forward_with_statistics(inputs, stats);
}

double ConvBnPredictor::loss_and_gradient(std::span<const SampleSequence* const> batch, std::size_t horizon,
                                          bool update_buffers) {
  for (Parameter* p : parameters()) p->zero_grad();
  std::vector<InputFrames> inputs;
  inputs.reserve(batch.size());
  for (const SampleSequence* s : batch) inputs.push_back(s->inputs);
  std::size_t h = 0, w = 0;
  const Matrix x = stack_inputs(inputs, h, w);
  const std::size_t n = batch.size();
  const std::size_t pixels = h * w;

  const Matrix z1 = conv1_.forward(x, n, h, w);
  const Matrix b1 = bn1_.forward_train(z1, update_buffers);
  Matrix a1 = b1;
  relu_inplace(a1);
  const Matrix z2 = conv2_.forward(a1, n, h, w);
  const Matrix b2 = bn2_.forward_train(z2, update_buffers);
  Matrix a2 = b2;
  relu_inplace(a2);
  Matrix out = conv3_.forward(a2, n, h, w);
  add_skip(out, x);

  Matrix dout(out.rows(), out.cols());
  double sse = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const GridTensor& y = batch[k]->targets.at(horizon);
    if (y.height() != h || y.width() != w || y.channels() != cfg_.channels) {
      throw ShapeError("conv-bn: target shape does not match inputs");
    }
    for (std::size_t p = 0; p < pixels; ++p) {
      for (std::size_t c = 0; c < cfg_.channels; ++c) {
        const auto row = static_cast<Eigen::Index>(k * pixels + p);
        const double r = out(row, static_cast<Eigen::Index>(c)) - y.values()[p * cfg_.channels + c] / kScale;
        sse += r * r;
        dout(row, static_cast<Eigen::Index>(c)) = r;
      }
    }
  }
  const double count = static_cast<double>(out.size());
  dout *= 2.0 / count;

  Matrix d = conv3_.backward(a2, dout, n, h, w, true);
  relu_backward_inplace(d, b2);
  d = bn2_.backward(d);
  d = conv2_.backward(a1, d, n, h, w, true);
  relu_backward_inplace(d, b1);
  d = bn1_.backward(d);
  conv1_.backward(x, d, n, h, w, false);
  return sse / count;
}

std::unique_ptr<Predictor> make_predictor(const std::string& kind, const std::map<std::string, std::string>& config) {
  if (kind == "persistence") return std::make_unique<PersistencePredictor>();
  if (kind == "linear") {
    return std::make_unique<LinearPredictor>(config_value(config, "history", kInputFrames),
                                             config_value(config, "channels", 8));
  }
  if (kind == "conv-bn") {
    ConvNetConfig cfg;
    cfg.history = config_value(config, "history", cfg.history);
    cfg.channels = config_value(config, "channels", cfg.channels);
    cfg.hidden = config_value(config, "hidden", cfg.hidden);
    cfg.stochastic_layers = config_value(config, "stochastic_layers", cfg.stochastic_layers);
    cfg.residual = config_value(config, "residual", 1) != 0;
    auto model = std::make_unique<ConvBnPredictor>(cfg);
    model->set_training_batch_size(config_value(config, "training_batch_size", 12));
    return model;
  }
  throw InvalidArgument("unknown predictor kind '" + kind + "'");
}

} // namespace gridcal
