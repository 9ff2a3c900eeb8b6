#pragma once

#include "gridcal/grid_tensor.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gridcal {

inline constexpr double kBandwidthFloor = 1e-6;
inline constexpr double kPValueFloor = 1e-300;

/// Gaussian kernel density: an equal-weight mixture of N(sample, h^2).
struct CellDensity {
  std::vector<double> samples;
  double bandwidth = 0.0;

  double pdf(double x) const;
  double mean() const;
};

/// 0.9 * min(std, IQR / 1.34) * N^(-1/5), using std alone when the IQR is 0.
/// Not floored.
double silverman_bandwidth(std::span<const double> samples);

/// Throws InvalidArgument for fewer than two or non-finite samples. A
/// bandwidth below the floor is raised to it; `floored` reports that instead
/// of a warning when non-null.
CellDensity fit_kde(std::span<const double> samples, std::optional<double> bandwidth = std::nullopt,
                    bool* floored = nullptr);

/// Upper-tail mass of the density beyond sigma_star.
double tail_pvalue(const CellDensity& density, double sigma_star);

/// Regularized upper incomplete gamma function Q(a, x) = Gamma(a, x) / Gamma(a).
double gamma_q(double a, double x);

/// Fisher's method: P(chi2_{2k} >= -2 sum log p_j). Inputs below 1e-300 are
/// raised to it; `floored` counts them when non-null (otherwise a warning).
double fisher_aggregate(std::span<const double> pvals, std::size_t* floored = nullptr);

enum class OutlierRule {
  PValueAtMost,   // flag iff p <= epsilon (low p-value = surprising)
  PValueAtLeast,  // flag iff p >= epsilon (the literal alternative reading)
};

struct OutlierConfig {
  double epsilon = 0.001;
  OutlierRule rule = OutlierRule::PValueAtMost;
};

/// Labels for one test sample. Per-pixel arrays are row-major (height, width).
struct OutlierReport {
  std::size_t sample = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  double epsilon = 0.001;
  std::vector<double> p_vol;
  std::vector<double> p_speed;
  std::vector<std::uint8_t> out_vol;
  std::vector<std::uint8_t> out_speed;
  std::vector<std::uint8_t> out_pixel;
  // Channels at the pixel whose training sigmas were unusable (< 2 finite
  // values). Those channels are left out of the aggregation; a group with
  // no usable channel gets p = 1 and is never flagged.
  std::vector<std::uint8_t> skipped_channels;
};

bool is_flagged(double p, const OutlierConfig& cfg);

/// Fits one density per cell on the training sigmas and scores every test
/// sample. Training and test grids must share one shape.
std::vector<OutlierReport> detect_outliers(std::span<const GridTensor> train_sigmas,
                                           std::span<const GridTensor> test_sigmas, const ChannelLayout& layout,
                                           const OutlierConfig& cfg = {});

struct OutlierShares {
  // Fraction of pixels flagged, one entry per test sample.
  std::vector<double> temporal_pixel;
  std::vector<double> temporal_vol;
  std::vector<double> temporal_speed;
  // Fraction of test samples flagged, per pixel (height, width, 1).
  GridTensor spatial_pixel;
};

OutlierShares outlier_share(std::span<const OutlierReport> reports);

/// sample,row,col,p_vol,p_speed,out_vol,out_speed,out_pixel
std::string outlier_csv(std::span<const OutlierReport> reports);

} // namespace gridcal
