#pragma once

#include "gridcal/grid_tensor.hpp"
#include "gridcal/random.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gridcal {

// Sigmas below this are raised to it before scoring or building intervals.
inline constexpr double kSigmaFloor = 1e-6;

GridTensor floor_sigma(const GridTensor& sigma);

/// |y - mu| / max(sigma, floor), per cell.
GridTensor conformity_scores(const GridTensor& y, const GridTensor& mu, const GridTensor& sigma);

/// Scores of C calibration samples for every cell of one grid shape.
class CalibrationSet {
public:
  CalibrationSet() = default;
  explicit CalibrationSet(Shape shape) : shape_(shape) {}

  void add(const GridTensor& scores);
  std::size_t size() const { return samples_.size(); }
  const Shape& shape() const { return shape_; }
  const std::vector<GridTensor>& samples() const { return samples_; }

private:
  Shape shape_;
  std::vector<GridTensor> samples_;
};

/// ceil((1 - alpha)(n + 1)): the 1-based order statistic used as qhat.
std::size_t conformal_rank(std::size_t n, double alpha);

/// The rank-th smallest of `scores` (stable sort, 1-based), or +inf when the
/// rank exceeds the number of scores.
double order_statistic(std::vector<double> scores, std::size_t rank);

struct QuantileGrid {
  GridTensor qhat;
  double alpha = 0.1;
  std::size_t rank = 0;
  bool pooled = false;
  // True when rank > number of scores; qhat is then +inf everywhere.
  bool vacuous = false;
};

/// One qhat per cell from that cell's C scores, or a single qhat from all
/// cells' scores when `pooled`.
QuantileGrid calibrate_qhat(const CalibrationSet& cal, double alpha, bool pooled = false);

struct PredictionInterval {
  GridTensor lower;
  GridTensor upper;
  GridTensor qhat;
  double alpha = 0.1;
};

/// [mu - sigma * qhat, mu + sigma * qhat] with sigma floored.
PredictionInterval build_interval(const GridTensor& mu, const GridTensor& sigma, const GridTensor& qhat,
                                  double alpha);

/// Fraction of cells (optionally only active ones) whose truth lies inside
/// the interval.
double empirical_coverage(const PredictionInterval& interval, const GridTensor& truth,
                          const ActivityMask* mask = nullptr);

struct GroupCoverage {
  double all = 0.0;
  std::optional<double> volume;  // empty when the group has no selected cells
  std::optional<double> speed;
};

GroupCoverage group_coverage(const PredictionInterval& interval, const GridTensor& truth,
                             const ChannelLayout& layout, const ActivityMask* mask = nullptr);

struct BetaLaw {
  double a = 0.0;
  double b = 0.0;
  double mean = 0.0;
  // l = 0: the interval is unbounded and coverage is 1 with certainty.
  bool degenerate = false;
};

/// Beta(C + 1 - l, l) with l = floor((C + 1) alpha): the law of the coverage
/// of a test set conditional on the calibration draw.
BetaLaw nominal_coverage_law(std::size_t calibration_size, double alpha);

/// One exchangeable split of a cell's scores: a random C form the
/// calibration set, the rest are scored against the resulting qhat. Returns
/// the covered fraction of the held-out scores.
double split_coverage(std::span<const double> scores, std::size_t calibration_size, double alpha, Rng& rng);

struct CoverageRow {
  std::size_t sample = 0;
  std::string group;
  double coverage = 0.0;
};

std::string coverage_csv(std::span<const CoverageRow> rows);

} // namespace gridcal
