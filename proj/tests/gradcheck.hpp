#pragma once

#include "gridcal/models.hpp"
#include "gridcal/random.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace gridcal::testing {

// Small random training batch for gradient checks.
inline std::vector<SampleSequence> random_batch(Rng& rng, std::size_t n, std::size_t h, std::size_t w) {
  std::vector<SampleSequence> batch(n);
  for (auto& s : batch) {
    for (std::size_t t = 0; t < kInputFrames; ++t) {
      GridTensor f(h, w, 8);
      for (float& v : f.values()) v = static_cast<float>(rng.uniform(0.0, 255.0));
      s.inputs.push_back(f);
    }
    for (std::size_t t = 0; t < kTargetFrames; ++t) {
      GridTensor f(h, w, 8);
      for (float& v : f.values()) v = static_cast<float>(rng.uniform(0.0, 255.0));
      s.targets.push_back(f);
    }
  }
  return batch;
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Compares the analytic gradient with central differences on `per_param`
/// random coordinates of every parameter. The relative error of a coordinate
/// is |a - n| / max(|a|, |n|, floor). The floor matters for conv biases feeding
/// BN: their true gradient is 0 and the difference quotient is ~1e-11 roundoff.
inline GradCheck check_gradients(Predictor& model, const std::vector<SampleSequence>& batch, Rng& rng,
                                 std::size_t per_param = 6, double step = 1e-5, double floor = 1e-6) {
  std::vector<const SampleSequence*> ptrs;
  for (const auto& s : batch) ptrs.push_back(&s);
  const std::size_t horizon = kTargetFrames - 1;
  model.loss_and_gradient(ptrs, horizon, false);
  std::vector<std::vector<double>> analytic;
  for (Parameter* p : model.parameters()) analytic.push_back(p->grad);

  GradCheck out;
  const auto params = model.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter* p = params[k];
    for (std::size_t trial = 0; trial < std::min(per_param, p->size()); ++trial) {
      const std::size_t i = static_cast<std::size_t>(rng.index(p->size()));
      const double saved = p->value[i];
      p->value[i] = saved + step;
      const double up = model.loss_and_gradient(ptrs, horizon, false);
      p->value[i] = saved - step;
      const double down = model.loss_and_gradient(ptrs, horizon, false);
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      out.max_rel_error = std::max(out.max_rel_error, rel);
      ++out.checked;
    }
  }
  return out;
}

// A conv-bn model whose every parameter, including the output layer and the
// BN affine terms, is random (the default init zeroes the output layer).
inline ConvBnPredictor random_conv_model(std::uint64_t seed, ConvNetConfig cfg = {}) {
  cfg.hidden = std::min<std::size_t>(cfg.hidden, 6);
  ConvBnPredictor m(cfg);
  m.initialize(seed);
  Rng rng(seed ^ 0x5bd1e995ULL);
  for (Parameter* p : m.parameters()) {
    if (p->name.find("conv3") != std::string::npos || p->name.find("gamma") != std::string::npos ||
        p->name.find("beta") != std::string::npos) {
      for (double& v : p->value) v = rng.uniform(-0.5, 0.5) + (p->name.find("gamma") != std::string::npos ? 1.0 : 0.0);
    }
  }
  return m;
}

} // namespace gridcal::testing
