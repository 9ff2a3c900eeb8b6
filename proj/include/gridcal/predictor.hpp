#pragma once

#include "gridcal/grid_tensor.hpp"
#include "gridcal/layers.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gridcal {

/// Read-only collection of training/evaluation samples. Implementations must
/// allow concurrent calls to sample().
class SampleSource {
public:
  virtual ~SampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual SampleSequence sample(std::size_t i) const = 0;
};

class VectorSource final : public SampleSource {
public:
  explicit VectorSource(std::span<const SampleSequence> samples) : samples_(samples) {}
  std::size_t size() const override { return samples_.size(); }
  SampleSequence sample(std::size_t i) const override { return samples_[i]; }

private:
  std::span<const SampleSequence> samples_;
};

using InputFrames = std::vector<GridTensor>;

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t batch_size = 12;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  bool shuffle = true;
  // Index into SampleSequence::targets; 5 is the 60-minute frame.
  std::size_t horizon = kTargetFrames - 1;
};

struct TrainResult {
  // Sample-weighted mean batch loss per epoch, in normalized (value / 255) units.
  std::vector<double> loss_trace;
};

/// A model mapping the stacked input frames of one sample to a single frame
/// of the same shape. forward() output is clamped to the traffic range.
class Predictor {
public:
  virtual ~Predictor() = default;

  virtual std::string kind() const = 0;
  virtual std::unique_ptr<Predictor> clone() const = 0;

  virtual GridTensor forward(std::span<const GridTensor> inputs) const = 0;

  virtual bool has_batch_norm() const { return false; }
  virtual bool is_deterministic() const { return true; }

  // Reinitializes trainable parameters from `seed`.
  virtual void initialize(std::uint64_t seed) { (void)seed; }

  virtual std::vector<Parameter*> parameters() { return {}; }
  std::vector<const Parameter*> parameters() const;
  // Non-trainable persistent state (normalization statistics).
  virtual std::vector<Parameter*> buffers() { return {}; }
  std::vector<const Parameter*> buffers() const;

  /// Training-mode MSE of `batch` against target frame `horizon`, in
  /// normalized units. Zeroes and then fills the parameter gradients.
  virtual double loss_and_gradient(std::span<const SampleSequence* const> batch, std::size_t horizon,
                                   bool update_buffers);

  // Architecture settings needed to rebuild the model from a checkpoint.
  virtual std::map<std::string, std::string> config() const { return {}; }

  // Called by train(); BN models remember it as the required MC batch size.
  virtual void set_training_batch_size(std::size_t n) { (void)n; }

  /// Forward pass whose shallow BN layers use statistics of `reference_batch`.
  virtual GridTensor forward_stochastic_bn(std::span<const GridTensor> inputs,
                                           std::span<const InputFrames> reference_batch) const;
};

/// Applies `cfg.epochs` epochs of mini-batch SGD on the MSE loss. Does not
/// reinitialize the model. Throws TrainingError on a non-finite loss.
TrainResult train(Predictor& model, const SampleSource& data, const TrainConfig& cfg);

using PredictorFactory = std::function<std::unique_ptr<Predictor>()>;

struct EnsembleModel {
  std::vector<std::unique_ptr<Predictor>> members;
  std::vector<std::uint64_t> member_seeds;

  std::size_t size() const { return members.size(); }
  EnsembleModel clone() const;
};

inline constexpr std::size_t kDefaultEnsembleSize = 5;

/// Trains M members that differ only in seed (initialization and shuffle
/// order). Member m uses derive_seed(cfg.seed, m).
EnsembleModel train_ensemble(const PredictorFactory& factory, const SampleSource& data,
                             const TrainConfig& cfg, std::size_t members = kDefaultEnsembleSize,
                             std::vector<TrainResult>* traces = nullptr);

GridTensor forward(const Predictor& model, std::span<const GridTensor> inputs);
GridTensor forward_stochastic_bn(const Predictor& model, std::span<const GridTensor> inputs,
                                 std::span<const InputFrames> reference_batch);

} // namespace gridcal
