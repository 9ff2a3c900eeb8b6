#include "gridcal/estimators.hpp"

#include "gridcal/error.hpp"
#include "gridcal/parallel.hpp"
#include "gridcal/random.hpp"
#include "gridcal/tensor_io.hpp"
#include "gridcal/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gridcal {

namespace {

InputFrames transform_frames(std::span<const GridTensor> inputs, const TransformSpec& spec, std::size_t side) {
  InputFrames out;
  out.reserve(inputs.size());
  for (const auto& f : inputs) out.push_back(apply_transform(pad_to_square(f, side), spec));
  return out;
}

GridTensor crop(const GridTensor& t, std::size_t row, std::size_t col, std::size_t d) {
  GridTensor out(d, d, t.channels());
  const std::size_t c = t.channels();
  for (std::size_t r = 0; r < d; ++r) {
    const float* src = t.values().data() + t.index(row + r, col, 0);
    std::copy(src, src + d * c, out.values().data() + out.index(r, 0, 0));
  }
  return out;
}

void check_inputs(std::span<const GridTensor> inputs) {
  if (inputs.empty()) throw ShapeError("estimator: no input frames");
  for (const auto& f : inputs) require_same_shape(f, inputs.front(), "estimator inputs");
}

const ConvBnPredictor& as_mcbn_model(const Predictor& model) {
  if (!model.has_batch_norm()) {
    throw CapabilityError(model.kind() + " predictor has no batch normalization layers");
  }
  const auto* bn = dynamic_cast<const ConvBnPredictor*>(&model);
  if (!bn) throw CapabilityError("MC batch normalization is not implemented for " + model.kind());
  return *bn;
}

PredictiveParts combine_parts(UQEstimate epi, UQEstimate alea) {
  PredictiveParts parts;
  parts.predictive = combine_predictive(epi, alea);
  parts.epistemic = std::move(epi);
  parts.aleatoric = std::move(alea);
  return parts;
}

// Member-mean of per-member aleatoric sigmas.
GridTensor average_sigma(std::span<const UQEstimate> per_member) {
  GridTensor out(per_member.front().sigma.shape());
  const double inv = 1.0 / static_cast<double>(per_member.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double acc = 0.0;
    for (const auto& e : per_member) acc += e.sigma.values()[i];
    out.values()[i] = static_cast<float>(acc * inv);
  }
  return out;
}

} // namespace

std::string to_string(UncertaintyKind kind) {
  switch (kind) {
  case UncertaintyKind::Epistemic: return "epistemic";
  case UncertaintyKind::Aleatoric: return "aleatoric";
  case UncertaintyKind::Predictive: return "predictive";
  }
  return "unknown";
}

UncertaintyKind parse_uncertainty_kind(const std::string& text) {
  if (text == "epistemic") return UncertaintyKind::Epistemic;
  if (text == "aleatoric") return UncertaintyKind::Aleatoric;
  if (text == "predictive") return UncertaintyKind::Predictive;
  throw FormatError("unknown uncertainty kind '" + text + "'");
}

void UQEstimate::validate() const {
  require_same_shape(mu, sigma, "estimate mu/sigma");
  for (float v : sigma.values()) {
    if (!std::isfinite(v) || v < 0.0f) throw InvalidArgument("estimate sigma must be finite and >= 0");
  }
  if (!pixel_counts.empty() && pixel_counts.size() != mu.height() * mu.width()) {
    throw ShapeError("per-pixel sample counts do not match the grid");
  }
}

void sample_moments(std::span<const GridTensor> samples, GridTensor& mean, GridTensor& stddev) {
  if (samples.empty()) throw InvalidArgument("sample_moments: no samples");
  for (const auto& s : samples) require_same_shape(s, samples.front(), "sample_moments");
  const Shape shape = samples.front().shape();
  mean = GridTensor(shape);
  stddev = GridTensor(shape);
  const double inv = 1.0 / static_cast<double>(samples.size());
  for (std::size_t i = 0; i < mean.size(); ++i) {
    double m = 0.0;
    for (const auto& s : samples) m += s.values()[i];
    m *= inv;
    double v = 0.0;
    for (const auto& s : samples) {
      const double r = s.values()[i] - m;
      v += r * r;
    }
    mean.values()[i] = static_cast<float>(m);
    stddev.values()[i] = static_cast<float>(std::sqrt(v * inv));
  }
}

UQEstimate ensemble_estimate(const EnsembleModel& ens, std::span<const GridTensor> inputs) {
  if (ens.size() == 0) throw InvalidArgument("ensemble has no members");
  check_inputs(inputs);
  std::vector<GridTensor> preds(ens.size());
  parallel_for(ens.size(), [&](std::size_t m) { preds[m] = ens.members[m]->forward(inputs); });
  UQEstimate est;
  sample_moments(preds, est.mu, est.sigma);
  est.kind = UncertaintyKind::Epistemic;
  est.method = "ens";
  est.sample_count = ens.size();
  return est;
}

std::vector<std::vector<BatchStatistics>> draw_mcbn_statistics(const Predictor& model,
                                                               const SampleSource& train_data,
                                                               const McbnConfig& cfg) {
  const ConvBnPredictor& net = as_mcbn_model(model);
  if (cfg.passes == 0) throw InvalidArgument("MCBN needs at least one pass");
  const std::size_t batch = cfg.batch_size ? cfg.batch_size : net.training_batch_size();
  if (train_data.size() < batch) {
    throw InvalidArgument("MCBN batch size " + std::to_string(batch) + " exceeds the " +
                          std::to_string(train_data.size()) + " training samples");
  }
  std::vector<std::vector<BatchStatistics>> stats(cfg.passes);
  parallel_for(cfg.passes, [&](std::size_t m) {
    Rng rng(derive_seed(cfg.seed, m));
    std::vector<InputFrames> reference;
    for (std::size_t i : rng.sample_without_replacement(train_data.size(), batch)) {
      reference.push_back(train_data.sample(i).inputs);
    }
    stats[m] = net.reference_statistics(reference);
  });
  return stats;
}

UQEstimate mcbn_estimate(const Predictor& model, std::span<const GridTensor> inputs,
                         std::span<const std::vector<BatchStatistics>> pass_statistics) {
  const ConvBnPredictor& net = as_mcbn_model(model);
  check_inputs(inputs);
  if (pass_statistics.empty()) throw InvalidArgument("MCBN needs at least one pass");
  std::vector<GridTensor> preds(pass_statistics.size());
  parallel_for(preds.size(), [&](std::size_t m) {
    preds[m] = net.forward_with_statistics(inputs, pass_statistics[m]);
  });
  UQEstimate est;
  sample_moments(preds, est.mu, est.sigma);
  est.kind = UncertaintyKind::Epistemic;
  est.method = "mcbn";
  est.sample_count = preds.size();
  return est;
}

UQEstimate mcbn_estimate(const Predictor& model, std::span<const GridTensor> inputs,
                         const SampleSource& train_data, const McbnConfig& cfg) {
  const auto stats = draw_mcbn_statistics(model, train_data, cfg);
  return mcbn_estimate(model, inputs, stats);
}

std::vector<GridTensor> tta_predictions(const Predictor& model, std::span<const GridTensor> inputs) {
  check_inputs(inputs);
  const std::size_t h = inputs.front().height();
  const std::size_t w = inputs.front().width();
  const std::size_t side = std::max(h, w);
  const auto& group = canonical_transforms();
  std::vector<GridTensor> preds(group.size());
  parallel_for(group.size(), [&](std::size_t k) {
    const InputFrames frames = transform_frames(inputs, group[k], side);
    preds[k] = unpad(invert_transform(model.forward(frames), group[k]), h, w);
  });
  return preds;
}

UQEstimate tta_estimate(const Predictor& model, std::span<const GridTensor> inputs) {
  std::vector<GridTensor> preds = tta_predictions(model, inputs);
  UQEstimate est;
  GridTensor mean;
  sample_moments(preds, mean, est.sigma);
  est.mu = std::move(preds.front());
  est.kind = UncertaintyKind::Aleatoric;
  est.method = "tta";
  est.sample_count = preds.size();
  return est;
}

void PatchConfig::validate(std::size_t height, std::size_t width) const {
  if (s < 1 || s > d || d > std::min(height, width)) {
    throw InvalidArgument("patch config d=" + std::to_string(d) + " s=" + std::to_string(s) +
                          " needs 1 <= s <= d <= " + std::to_string(std::min(height, width)));
  }
}

std::vector<std::size_t> window_starts(std::size_t n, std::size_t d, std::size_t s) {
  std::vector<std::size_t> starts;
  for (std::size_t start = 0; start + d <= n; start += s) starts.push_back(start);
  if (starts.empty() || starts.back() != n - d) starts.push_back(n - d);
  return starts;
}

std::vector<std::uint32_t> patch_coverage(std::size_t height, std::size_t width, const PatchConfig& cfg) {
  cfg.validate(height, width);
  std::vector<std::uint32_t> rows(height, 0), cols(width, 0);
  for (std::size_t r : window_starts(height, cfg.d, cfg.s)) {
    for (std::size_t i = r; i < r + cfg.d; ++i) ++rows[i];
  }
  for (std::size_t c : window_starts(width, cfg.d, cfg.s)) {
    for (std::size_t j = c; j < c + cfg.d; ++j) ++cols[j];
  }
  std::vector<std::uint32_t> counts(height * width);
  for (std::size_t i = 0; i < height; ++i) {
    for (std::size_t j = 0; j < width; ++j) counts[i * width + j] = rows[i] * cols[j];
  }
  return counts;
}

UQEstimate patch_estimate(const Predictor& model, std::span<const GridTensor> inputs, const PatchConfig& cfg) {
  check_inputs(inputs);
  const Shape shape = inputs.front().shape();
  cfg.validate(shape.height, shape.width);
  const std::size_t d = cfg.d;
  const std::size_t channels = shape.channels;

  struct Window {
    std::size_t row, col;
  };
  std::vector<Window> windows;
  for (std::size_t r : window_starts(shape.height, d, cfg.s)) {
    for (std::size_t c : window_starts(shape.width, d, cfg.s)) windows.push_back({r, c});
  }

  // Welford accumulators per cell, fed in window order.
  std::vector<double> mean(shape.size(), 0.0), m2(shape.size(), 0.0);
  std::vector<std::uint32_t> counts(shape.height * shape.width, 0);
  constexpr std::size_t kChunk = 64;
  std::vector<GridTensor> preds;
  for (std::size_t first = 0; first < windows.size(); first += kChunk) {
    const std::size_t n = std::min(kChunk, windows.size() - first);
    preds.assign(n, GridTensor());
    parallel_for(n, [&](std::size_t k) {
      const Window& win = windows[first + k];
      InputFrames frames;
      frames.reserve(inputs.size());
      for (const auto& f : inputs) frames.push_back(crop(f, win.row, win.col, d));
      preds[k] = model.forward(frames);
    });
    for (std::size_t k = 0; k < n; ++k) {
      const Window& win = windows[first + k];
      for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
          const std::size_t pixel = (win.row + r) * shape.width + (win.col + c);
          const double count = ++counts[pixel];
          for (std::size_t ch = 0; ch < channels; ++ch) {
            const std::size_t cell = pixel * channels + ch;
            const double x = preds[k](r, c, ch);
            const double delta = x - mean[cell];
            mean[cell] += delta / count;
            m2[cell] += delta * (x - mean[cell]);
          }
        }
      }
    }
  }

  UQEstimate est;
  est.mu = GridTensor(shape);
  est.sigma = GridTensor(shape);
  for (std::size_t cell = 0; cell < shape.size(); ++cell) {
    const double count = counts[cell / channels];
    est.mu.values()[cell] = static_cast<float>(mean[cell]);
    est.sigma.values()[cell] = static_cast<float>(std::sqrt(std::max(0.0, m2[cell] / count)));
  }
  est.kind = UncertaintyKind::Aleatoric;
  est.method = "patches";
  est.sample_count = 0;
  est.pixel_counts = std::move(counts);
  return est;
}

std::size_t expected_patch_count(std::size_t i, std::size_t j, std::size_t height, std::size_t width,
                                 std::size_t d, std::size_t s) {
  if (i < 1 || i > height || j < 1 || j > width) {
    throw InvalidArgument("pixel (" + std::to_string(i) + ", " + std::to_string(j) + ") outside " +
                          std::to_string(height) + "x" + std::to_string(width) + " (1-based)");
  }
  if (s == 0 || d == 0) throw InvalidArgument("patch size and stride must be positive");
  auto hops = [&](std::size_t pos, std::size_t n) {
    const std::size_t dist = std::min(std::min(pos - 1, n - pos) + 1, d);
    const double x = static_cast<double>(dist) / static_cast<double>(s);
    return static_cast<std::size_t>(x >= 1.0 ? std::floor(x) : std::ceil(x));
  };
  return hops(i, height) * hops(j, width);
}

UQEstimate combine_predictive(const UQEstimate& epi, const UQEstimate& alea) {
  if (epi.kind != UncertaintyKind::Epistemic || alea.kind != UncertaintyKind::Aleatoric) {
    throw InvalidArgument("combine_predictive needs an epistemic and an aleatoric estimate, got " +
                          to_string(epi.kind) + " and " + to_string(alea.kind));
  }
  require_same_shape(epi.sigma, alea.sigma, "combine_predictive");
  UQEstimate out;
  out.mu = epi.mu;
  out.sigma = GridTensor(epi.sigma.shape());
  for (std::size_t i = 0; i < out.sigma.size(); ++i) {
    out.sigma.values()[i] = epi.sigma.values()[i] + alea.sigma.values()[i];
  }
  out.kind = UncertaintyKind::Predictive;
  out.method = alea.method + "-" + epi.method;
  out.sample_count = epi.sample_count;
  out.pixel_counts = alea.pixel_counts;
  return out;
}

PredictiveParts tta_ens_parts(const EnsembleModel& ens, std::span<const GridTensor> inputs) {
  if (ens.size() == 0) throw InvalidArgument("ensemble has no members");
  std::vector<UQEstimate> per_member;
  for (const auto& m : ens.members) per_member.push_back(tta_estimate(*m, inputs));

  std::vector<GridTensor> unaugmented;
  for (const auto& e : per_member) unaugmented.push_back(e.mu);
  UQEstimate epi;
  sample_moments(unaugmented, epi.mu, epi.sigma);
  epi.kind = UncertaintyKind::Epistemic;
  epi.method = "ens";
  epi.sample_count = ens.size();

  UQEstimate alea;
  alea.mu = epi.mu;
  alea.sigma = average_sigma(per_member);
  alea.kind = UncertaintyKind::Aleatoric;
  alea.method = "tta";
  alea.sample_count = per_member.front().sample_count;
  return combine_parts(std::move(epi), std::move(alea));
}

UQEstimate tta_ens_estimate(const EnsembleModel& ens, std::span<const GridTensor> inputs) {
  return tta_ens_parts(ens, inputs).predictive;
}

PredictiveParts patches_ens_parts(const EnsembleModel& ens, std::span<const GridTensor> inputs,
                                  const PatchConfig& cfg) {
  UQEstimate epi = ensemble_estimate(ens, inputs);
  std::vector<UQEstimate> per_member;
  for (const auto& m : ens.members) per_member.push_back(patch_estimate(*m, inputs, cfg));
  UQEstimate alea;
  alea.mu = epi.mu;
  alea.sigma = average_sigma(per_member);
  alea.kind = UncertaintyKind::Aleatoric;
  alea.method = "patches";
  alea.pixel_counts = per_member.front().pixel_counts;
  return combine_parts(std::move(epi), std::move(alea));
}

UQEstimate patches_ens_estimate(const EnsembleModel& ens, std::span<const GridTensor> inputs,
                                const PatchConfig& cfg) {
  return patches_ens_parts(ens, inputs, cfg).predictive;
}

GridTensor cub_sigma(std::span<const GridTensor> test_predictions) {
  if (test_predictions.size() < 2) throw InvalidArgument("CUB needs at least two test predictions");
  GridTensor mean, sigma;
  sample_moments(test_predictions, mean, sigma);
  return sigma;
}

std::vector<UQEstimate> cub_estimate(std::span<const GridTensor> test_predictions) {
  const GridTensor sigma = cub_sigma(test_predictions);
  std::vector<UQEstimate> out;
  out.reserve(test_predictions.size());
  for (const auto& p : test_predictions) {
    UQEstimate est;
    est.mu = p;
    est.sigma = sigma;
    est.kind = UncertaintyKind::Aleatoric;
    est.method = "cub";
    est.sample_count = test_predictions.size();
    out.push_back(std::move(est));
  }
  return out;
}

namespace {

std::filesystem::path sibling(const std::filesystem::path& stem, const std::string& suffix) {
  auto p = stem;
  p += suffix;
  return p;
}

} // namespace

void write_estimate(const UQEstimate& est, const std::filesystem::path& stem,
                    const std::map<std::string, std::string>& extra) {
  est.validate();
  write_tensor(est.mu, sibling(stem, "_mu.grt"));
  write_tensor(est.sigma, sibling(stem, "_sigma.grt"));
  std::ostringstream meta;
  meta << "method = " << est.method << '\n'
       << "kind = " << to_string(est.kind) << '\n'
       << "samples = " << est.sample_count << '\n';
  if (!est.pixel_counts.empty()) {
    GridTensor counts(est.mu.height(), est.mu.width(), 1);
    for (std::size_t i = 0; i < est.pixel_counts.size(); ++i) {
      counts.values()[i] = static_cast<float>(est.pixel_counts[i]);
    }
    write_tensor(counts, sibling(stem, "_counts.grt"));
    meta << "counts = per-pixel\n";
  }
  for (const auto& [key, value] : extra) meta << key << " = " << value << '\n';
  write_text_file(sibling(stem, ".meta"), meta.str());
}

UQEstimate read_estimate(const std::filesystem::path& stem) {
  UQEstimate est;
  est.mu = read_tensor(sibling(stem, "_mu.grt"));
  est.sigma = read_tensor(sibling(stem, "_sigma.grt"));
  std::istringstream meta(read_text_file(sibling(stem, ".meta")));
  std::string line;
  while (std::getline(meta, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 3);
    if (key == "method") est.method = value;
    if (key == "kind") est.kind = parse_uncertainty_kind(value);
    if (key == "samples") est.sample_count = std::stoull(value);
    if (key == "counts") {
      const GridTensor counts = read_tensor(sibling(stem, "_counts.grt"));
      for (float v : counts.values()) est.pixel_counts.push_back(static_cast<std::uint32_t>(v));
    }
  }
  est.validate();
  return est;
}

} // namespace gridcal
