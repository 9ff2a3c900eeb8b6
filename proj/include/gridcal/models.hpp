#pragma once

#include "gridcal/predictor.hpp"

#include <map>
#include <memory>
#include <string>

namespace gridcal {

/// Predicts the last input frame.
class PersistencePredictor final : public Predictor {
public:
  std::string kind() const override { return "persistence"; }
  std::unique_ptr<Predictor> clone() const override;
  GridTensor forward(std::span<const GridTensor> inputs) const override;
};

/// Per-cell linear map over the input history, with coefficients shared by
/// every pixel of a channel:
///   y(h,w,c) / 255 = bias[c] + sum_t weight[c,t] * x_t(h,w,c) / 255
class LinearPredictor final : public Predictor {
public:
  explicit LinearPredictor(std::size_t history = kInputFrames, std::size_t channels = 8);

  std::string kind() const override { return "linear"; }
  std::unique_ptr<Predictor> clone() const override;
  GridTensor forward(std::span<const GridTensor> inputs) const override;
  void initialize(std::uint64_t seed) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  double loss_and_gradient(std::span<const SampleSequence* const> batch, std::size_t horizon,
                           bool update_buffers) override;
  std::map<std::string, std::string> config() const override;

  std::size_t history() const { return history_; }
  std::size_t channels() const { return channels_; }
  double weight(std::size_t channel, std::size_t t) const { return weight_.value[channel * history_ + t]; }
  double bias(std::size_t channel) const { return bias_.value[channel]; }

private:
  void check_inputs(std::span<const GridTensor> inputs) const;

  std::size_t history_;
  std::size_t channels_;
  Parameter weight_;  // (channels, history)
  Parameter bias_;    // (channels)
};

struct ConvNetConfig {
  std::size_t history = kInputFrames;
  std::size_t channels = 8;
  std::size_t hidden = 16;
  // BN layers that use reference-batch statistics in stochastic mode.
  std::size_t stochastic_layers = 2;
  double bn_epsilon = 1e-5;
  double bn_momentum = 0.1;
  // Adds the last input frame to the network output, so the convolutions
  // learn a correction to persistence.
  bool residual = true;
};

/// conv3x3(history*channels -> hidden) -> BN -> ReLU -> conv3x3(hidden -> hidden)
/// -> BN -> ReLU -> conv1x1(hidden -> channels). Input frames are stacked along
/// the feature axis and scaled by 1/255; the output is scaled back by 255.
/// With `residual` the last input frame is added before rescaling. Fully
/// convolutional, so any spatial size is accepted.
class ConvBnPredictor final : public Predictor {
public:
  explicit ConvBnPredictor(ConvNetConfig cfg = {});

  std::string kind() const override { return "conv-bn"; }
  std::unique_ptr<Predictor> clone() const override;
  GridTensor forward(std::span<const GridTensor> inputs) const override;
  bool has_batch_norm() const override { return true; }
  void initialize(std::uint64_t seed) override;
  std::vector<Parameter*> parameters() override;
  std::vector<Parameter*> buffers() override;
  double loss_and_gradient(std::span<const SampleSequence* const> batch, std::size_t horizon,
                           bool update_buffers) override;
  std::map<std::string, std::string> config() const override;
  void set_training_batch_size(std::size_t n) override { training_batch_size_ = n; }

  GridTensor forward_stochastic_bn(std::span<const GridTensor> inputs,
                                   std::span<const InputFrames> reference_batch) const override;

  /// Statistics the stochastic BN layers compute on `reference_batch`; the
  /// k-th entry feeds BN layer k.
  std::vector<BatchStatistics> reference_statistics(std::span<const InputFrames> reference_batch) const;
  GridTensor forward_with_statistics(std::span<const GridTensor> inputs,
                                     std::span<const BatchStatistics> shallow_stats) const;

  const ConvNetConfig& net_config() const { return cfg_; }
  std::size_t training_batch_size() const { return training_batch_size_; }
  BatchNormLayer& batch_norm(std::size_t i) { return i == 0 ? bn1_ : bn2_; }
  const BatchNormLayer& batch_norm(std::size_t i) const { return i == 0 ? bn1_ : bn2_; }
  Conv2d& conv(std::size_t i) { return i == 0 ? conv1_ : (i == 1 ? conv2_ : conv3_); }

private:
  Matrix stack_inputs(std::span<const InputFrames> samples, std::size_t& height, std::size_t& width) const;
  // Inference; a null entry in `stats` means "use running statistics".
  Matrix infer(const Matrix& x, std::size_t batch, std::size_t height, std::size_t width,
               const BatchStatistics* stats1, const BatchStatistics* stats2) const;
  void add_skip(Matrix& out, const Matrix& x) const;
  GridTensor to_frame(const Matrix& out, std::size_t row0, std::size_t height, std::size_t width) const;

  ConvNetConfig cfg_;
  std::size_t training_batch_size_ = 12;
  Conv2d conv1_;
  BatchNormLayer bn1_;
  Conv2d conv2_;
  BatchNormLayer bn2_;
  Conv2d conv3_;
};

/// Rebuilds an (uninitialized) predictor of the given kind from config().
std::unique_ptr<Predictor> make_predictor(const std::string& kind,
                                          const std::map<std::string, std::string>& config = {});

} // namespace gridcal
