#pragma once

#include "gridcal/conformal.hpp"
#include "gridcal/grid_tensor.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gridcal {

// All metrics take an optional activity mask; nullptr selects every cell.
// An empty selection throws InvalidArgument.

double mse(const GridTensor& pred, const GridTensor& truth, const ActivityMask* mask = nullptr);

/// mean(|sigma - |pred - truth|| / sigma) with sigma floored.
double ence(const GridTensor& sigma, const GridTensor& pred, const GridTensor& truth,
            const ActivityMask* mask = nullptr);

/// Mean interval width.
double mpiw(const PredictionInterval& interval, const ActivityMask* mask = nullptr);

/// 1-based ranks; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

/// Pearson correlation of the average ranks. Empty when either side has no
/// rank variance (all values tied). Throws for fewer than two pairs.
std::optional<double> spearman_rho(std::span<const double> errors, std::span<const double> sigmas);

struct MetricReport {
  std::string dataset;
  std::string method;
  bool masked = false;
  double mse = 0.0;
  double mean_sigma = 0.0;
  // Std across test samples of each sample's mean sigma.
  double sigma_spread = 0.0;
  double mpiw = 0.0;
  double ence = 0.0;
  // Per-cell rank correlation over the test samples, averaged over cells with
  // a defined value.
  std::optional<double> spearman;
  // Rank correlation over all selected (cell, sample) pairs at once.
  std::optional<double> spearman_pooled;
  std::size_t n_cells = 0;
  std::size_t n_samples = 0;
};

/// Table-level metrics over T test samples. `intervals` may be empty, in
/// which case mpiw is reported as 0.
MetricReport evaluate_metrics(std::span<const GridTensor> mu, std::span<const GridTensor> sigma,
                              std::span<const GridTensor> truth, std::span<const PredictionInterval> intervals,
                              const ActivityMask* mask = nullptr);

std::string metric_csv_header();
std::string metric_csv_row(const MetricReport& report);

} // namespace gridcal
