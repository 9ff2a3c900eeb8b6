#pragma once

#include "gridcal/models.hpp"
#include "gridcal/predictor.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace gridcal {

enum class UncertaintyKind { Epistemic, Aleatoric, Predictive };

std::string to_string(UncertaintyKind kind);
UncertaintyKind parse_uncertainty_kind(const std::string& text);

struct UQEstimate {
  GridTensor mu;
  GridTensor sigma;
  UncertaintyKind kind = UncertaintyKind::Epistemic;
  std::string method;
  // Number of Monte Carlo samples behind every cell; 0 when it varies per
  // pixel (patches), in which case pixel_counts holds height * width counts.
  std::size_t sample_count = 0;
  std::vector<std::uint32_t> pixel_counts;

  // Throws unless mu and sigma share a shape and sigma is finite and >= 0.
  void validate() const;
};

/// Per-cell mean and population standard deviation over equally shaped grids.
/// Accumulates in double with a fixed summation order.
void sample_moments(std::span<const GridTensor> samples, GridTensor& mean, GridTensor& stddev);

UQEstimate ensemble_estimate(const EnsembleModel& ens, std::span<const GridTensor> inputs);

struct McbnConfig {
  std::size_t passes = 10;
  // 0 means "the batch size the model was trained with".
  std::size_t batch_size = 0;
  std::uint64_t seed = 0;
};

/// Shallow-layer BN statistics for each of the M passes. Pass m normalizes
/// with a batch of distinct training samples drawn with derive_seed(seed, m).
/// Drawing them once lets many test inputs share the same M batches.
std::vector<std::vector<BatchStatistics>> draw_mcbn_statistics(const Predictor& model,
                                                               const SampleSource& train_data,
                                                               const McbnConfig& cfg);

UQEstimate mcbn_estimate(const Predictor& model, std::span<const GridTensor> inputs,
                         std::span<const std::vector<BatchStatistics>> pass_statistics);
UQEstimate mcbn_estimate(const Predictor& model, std::span<const GridTensor> inputs,
                         const SampleSource& train_data, const McbnConfig& cfg = {});

/// Predictions for the eight canonical transforms, each mapped back onto the
/// original grid. Non-square inputs are zero-padded to a square first and the
/// predictions cropped back. Entry 0 is the untransformed prediction.
std::vector<GridTensor> tta_predictions(const Predictor& model, std::span<const GridTensor> inputs);

UQEstimate tta_estimate(const Predictor& model, std::span<const GridTensor> inputs);

struct PatchConfig {
  std::size_t d = 100;
  std::size_t s = 10;

  // Throws InvalidArgument unless 1 <= s <= d <= min(height, width).
  void validate(std::size_t height, std::size_t width) const;
};

/// Window offsets 0, s, 2s, ... that fit in n, plus n - d when the regular
/// grid misses the far edge.
std::vector<std::size_t> window_starts(std::size_t n, std::size_t d, std::size_t s);

/// Number of windows covering each pixel, row-major (height, width).
std::vector<std::uint32_t> patch_coverage(std::size_t height, std::size_t width, const PatchConfig& cfg);

UQEstimate patch_estimate(const Predictor& model, std::span<const GridTensor> inputs, const PatchConfig& cfg);

/// Closed-form count for 1-based pixel (i, j) on the ideal sliding window:
///   M = f(d_v / s) * f(d_h / s),  f(x) = floor(x) if x >= 1 else ceil(x),
///   d_v = min(i - 1, H - i) + 1 capped at d, d_h likewise.
std::size_t expected_patch_count(std::size_t i, std::size_t j, std::size_t height, std::size_t width,
                                 std::size_t d, std::size_t s);

/// sigma_pred = sigma_epi + sigma_alea; mu from the epistemic estimate.
UQEstimate combine_predictive(const UQEstimate& epi, const UQEstimate& alea);

struct PredictiveParts {
  UQEstimate epistemic;
  UQEstimate aleatoric;  // member-averaged aleatoric sigma
  UQEstimate predictive;
};

/// Ensemble spread of the unaugmented member predictions (epistemic) plus the
/// mean over members of each member's TTA sigma (aleatoric).
PredictiveParts tta_ens_parts(const EnsembleModel& ens, std::span<const GridTensor> inputs);
UQEstimate tta_ens_estimate(const EnsembleModel& ens, std::span<const GridTensor> inputs);

/// As tta_ens_parts with the patch estimator providing the aleatoric part.
PredictiveParts patches_ens_parts(const EnsembleModel& ens, std::span<const GridTensor> inputs,
                                  const PatchConfig& cfg);
UQEstimate patches_ens_estimate(const EnsembleModel& ens, std::span<const GridTensor> inputs,
                                const PatchConfig& cfg);

/// Per-cell population std of the point predictions across test samples.
GridTensor cub_sigma(std::span<const GridTensor> test_predictions);
/// One estimate per test sample: mu is that sample's prediction, sigma the
/// shared cub_sigma.
std::vector<UQEstimate> cub_estimate(std::span<const GridTensor> test_predictions);

/// `<stem>_mu.grt`, `<stem>_sigma.grt`, optional `<stem>_counts.grt` and a
/// `<stem>.meta` sidecar of "key = value" lines (method, kind, M, plus `extra`).
void write_estimate(const UQEstimate& est, const std::filesystem::path& stem,
                    const std::map<std::string, std::string>& extra = {});
UQEstimate read_estimate(const std::filesystem::path& stem);

} // namespace gridcal
