#include "gridcal/predictor.hpp"

#include "gridcal/error.hpp"
#include "gridcal/parallel.hpp"
#include "gridcal/random.hpp"

#include <cmath>
#include <numeric>

namespace gridcal {

std::vector<const Parameter*> Predictor::parameters() const {
  auto mutable_params = const_cast<Predictor*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

std::vector<const Parameter*> Predictor::buffers() const {
  auto mutable_buffers = const_cast<Predictor*>(this)->buffers();
  return {mutable_buffers.begin(), mutable_buffers.end()};
}

double Predictor::loss_and_gradient(std::span<const SampleSequence* const> batch, std::size_t horizon,
                                    bool) {
  // Parameter-free models: report the loss, nothing to differentiate.
  double sse = 0.0;
  std::size_t n = 0;
  for (const SampleSequence* s : batch) {
    const GridTensor pred = forward(s->inputs);
    const GridTensor& y = s->targets.at(horizon);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double r = (pred.values()[i] - y.values()[i]) / 255.0;
      sse += r * r;
    }
    n += y.size();
  }
  return n ? sse / static_cast<double>(n) : 0.0;
}

GridTensor Predictor::forward_stochastic_bn(std::span<const GridTensor>, std::span<const InputFrames>) const {
  throw CapabilityError(kind() + " predictor has no batch normalization layers");
}

TrainResult train(Predictor& model, const SampleSource& data, const TrainConfig& cfg) {
  if (data.size() == 0) throw InvalidArgument("train: empty training data");
  if (cfg.batch_size == 0) throw InvalidArgument("train: batch size must be positive");
  if (!(cfg.learning_rate > 0.0)) throw InvalidArgument("train: learning rate must be positive");
  if (cfg.horizon >= kTargetFrames) throw InvalidArgument("train: horizon index out of range");

  model.set_training_batch_size(cfg.batch_size);
  TrainResult result;
  auto params = model.parameters();
  if (params.empty() || cfg.epochs == 0) {
    return result;
  }

  Rng rng(derive_seed(cfg.seed, 0x5348u));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<SampleSequence> samples;
      samples.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) samples.push_back(data.sample(order[i]));
      std::vector<const SampleSequence*> batch;
      for (const auto& s : samples) batch.push_back(&s);

      const double loss = model.loss_and_gradient(batch, cfg.horizon, true);
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                            std::to_string(start) + " (learning rate " +
                            std::to_string(cfg.learning_rate) + " may be too large)");
      }
      for (Parameter* p : params) {
        for (std::size_t i = 0; i < p->size(); ++i) p->value[i] -= cfg.learning_rate * p->grad[i];
      }
      epoch_loss += loss * static_cast<double>(stop - start);
    }
    result.loss_trace.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  return result;
}

EnsembleModel EnsembleModel::clone() const {
  EnsembleModel copy;
  copy.member_seeds = member_seeds;
  for (const auto& m : members) copy.members.push_back(m->clone());
  return copy;
}

EnsembleModel train_ensemble(const PredictorFactory& factory, const SampleSource& data,
                             const TrainConfig& cfg, std::size_t members,
                             std::vector<TrainResult>* traces) {
  if (members == 0) throw InvalidArgument("train_ensemble: ensemble size must be at least 1");
  EnsembleModel ens;
  ens.members.resize(members);
  ens.member_seeds.resize(members);
  std::vector<TrainResult> results(members);
  for (std::size_t m = 0; m < members; ++m) ens.member_seeds[m] = derive_seed(cfg.seed, m);

  parallel_for(members, [&](std::size_t m) {
    auto model = factory();
    model->initialize(ens.member_seeds[m]);
    TrainConfig member_cfg = cfg;
    member_cfg.seed = ens.member_seeds[m];
    results[m] = train(*model, data, member_cfg);
    ens.members[m] = std::move(model);
  });
  if (traces) *traces = std::move(results);
  return ens;
}

GridTensor forward(const Predictor& model, std::span<const GridTensor> inputs) {
  return model.forward(inputs);
}

GridTensor forward_stochastic_bn(const Predictor& model, std::span<const GridTensor> inputs,
                                 std::span<const InputFrames> reference_batch) {
  return model.forward_stochastic_bn(inputs, reference_batch);
}

} // namespace gridcal
