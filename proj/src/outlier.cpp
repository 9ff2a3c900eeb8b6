#include "gridcal/outlier.hpp"

#include "gridcal/error.hpp"
#include "gridcal/log.hpp"
#include "gridcal/parallel.hpp"
#include "gridcal/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace gridcal {

namespace {

// P(a, x) by its power series; converges quickly for x < a + 1.
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int n = 1; n < 1000; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-17) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Q(a, x) by its continued fraction (modified Lentz), for x >= a + 1.
double gamma_q_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 1000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

} // namespace

double CellDensity::pdf(double x) const {
  const double norm = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * bandwidth * static_cast<double>(samples.size()));
  double acc = 0.0;
  for (double s : samples) {
    const double z = (x - s) / bandwidth;
    acc += std::exp(-0.5 * z * z);
  }
  return acc * norm;
}

double CellDensity::mean() const { return stats::mean(samples); }

double silverman_bandwidth(std::span<const double> samples) {
  const double sd = stats::sample_std(samples);
  const std::vector<double> copy(samples.begin(), samples.end());
  const double iqr = stats::quantile(copy, 0.75) - stats::quantile(copy, 0.25);
  const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  return 0.9 * spread * std::pow(static_cast<double>(samples.size()), -0.2);
}

CellDensity fit_kde(std::span<const double> samples, std::optional<double> bandwidth, bool* floored) {
  if (samples.size() < 2) throw InvalidArgument("KDE needs at least two samples");
  for (double s : samples) {
    if (!std::isfinite(s)) throw InvalidArgument("KDE samples must be finite");
  }
  CellDensity d;
  d.samples.assign(samples.begin(), samples.end());
  d.bandwidth = bandwidth ? *bandwidth : silverman_bandwidth(samples);
  const bool low = !(d.bandwidth >= kBandwidthFloor);
  if (low) {
    d.bandwidth = kBandwidthFloor;
    if (!floored) warn("KDE bandwidth below 1e-6 (samples nearly identical); using 1e-6");
  }
  if (floored) *floored = low;
  return d;
}

double tail_pvalue(const CellDensity& density, double sigma_star) {
  double acc = 0.0;
  for (double s : density.samples) acc += stats::normal_survival((sigma_star - s) / density.bandwidth);
  return std::clamp(acc / static_cast<double>(density.samples.size()), 0.0, 1.0);
}

double gamma_q(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0)) throw InvalidArgument("gamma_q needs a > 0 and x >= 0");
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return std::clamp(1.0 - gamma_p_series(a, x), 0.0, 1.0);
  return std::clamp(gamma_q_fraction(a, x), 0.0, 1.0);
}

double fisher_aggregate(std::span<const double> pvals, std::size_t* floored) {
  if (pvals.empty()) throw InvalidArgument("Fisher aggregation needs at least one p-value");
  double x2 = 0.0;
  std::size_t low = 0;
  for (double p : pvals) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("p-values must lie in [0, 1]");
    if (p < kPValueFloor) {
      ++low;
      p = kPValueFloor;
    }
    x2 -= 2.0 * std::log(p);
  }
  if (floored) {
    *floored += low;
  } else if (low) {
    warn(std::to_string(low) + " p-value(s) below 1e-300 raised to 1e-300 before aggregation");
  }
  // chi2 with 2k degrees of freedom: survival = Q(k, X^2 / 2).
  return gamma_q(static_cast<double>(pvals.size()), 0.5 * x2);
}

bool is_flagged(double p, const OutlierConfig& cfg) {
  return cfg.rule == OutlierRule::PValueAtMost ? p <= cfg.epsilon : p >= cfg.epsilon;
}

std::vector<OutlierReport> detect_outliers(std::span<const GridTensor> train_sigmas,
                                           std::span<const GridTensor> test_sigmas, const ChannelLayout& layout,
                                           const OutlierConfig& cfg) {
  if (train_sigmas.empty() || test_sigmas.empty()) throw InvalidArgument("outliers: empty sigma stack");
  if (!(cfg.epsilon > 0.0 && cfg.epsilon < 1.0)) throw InvalidArgument("epsilon must lie in (0, 1)");
  const Shape shape = train_sigmas.front().shape();
  for (const auto& t : train_sigmas) require_same_shape(t, train_sigmas.front(), "outliers (training sigmas)");
  for (const auto& t : test_sigmas) require_same_shape(t, train_sigmas.front(), "outliers (test sigmas)");
  layout.validate(shape.channels);

  const std::size_t pixels = shape.height * shape.width;
  const std::size_t n_test = test_sigmas.size();
  // p-values per (cell, test sample); NaN marks a skipped cell.
  std::vector<double> pvals(shape.size() * n_test);
  std::vector<std::uint8_t> floored_bw(shape.size(), 0);
  parallel_for(shape.size(), [&](std::size_t cell) {
    std::vector<double> train;
    train.reserve(train_sigmas.size());
    for (const auto& t : train_sigmas) {
      const double v = t.values()[cell];
      if (std::isfinite(v)) train.push_back(v);
    }
    double* out = pvals.data() + cell * n_test;
    if (train.size() < 2) {
      std::fill(out, out + n_test, std::numeric_limits<double>::quiet_NaN());
      return;
    }
    bool low = false;
    const CellDensity density = fit_kde(train, std::nullopt, &low);
    floored_bw[cell] = low;
    for (std::size_t t = 0; t < n_test; ++t) out[t] = tail_pvalue(density, test_sigmas[t].values()[cell]);
  });
  const auto n_floored = std::count(floored_bw.begin(), floored_bw.end(), std::uint8_t{1});
  if (n_floored) {
    warn(std::to_string(n_floored) + " cell(s) had near-identical training sigmas; KDE bandwidth floored at 1e-6");
  }

  std::size_t floored_p = 0;
  std::vector<OutlierReport> reports(n_test);
  std::vector<double> group;
  for (std::size_t t = 0; t < n_test; ++t) {
    OutlierReport& r = reports[t];
    r.sample = t;
    r.height = shape.height;
    r.width = shape.width;
    r.epsilon = cfg.epsilon;
    r.p_vol.resize(pixels);
    r.p_speed.resize(pixels);
    r.out_vol.resize(pixels);
    r.out_speed.resize(pixels);
    r.out_pixel.resize(pixels);
    r.skipped_channels.resize(pixels);
    for (std::size_t p = 0; p < pixels; ++p) {
      std::uint8_t skipped = 0;
      auto aggregate = [&](const std::vector<std::size_t>& channels, double& p_out, std::uint8_t& flag) {
        group.clear();
        for (std::size_t c : channels) {
          const double v = pvals[(p * shape.channels + c) * n_test + t];
          if (std::isnan(v)) {
            ++skipped;
          } else {
            group.push_back(v);
          }
        }
        if (group.empty()) {
          p_out = 1.0;
          flag = 0;
          return;
        }
        p_out = fisher_aggregate(group, &floored_p);
        flag = is_flagged(p_out, cfg) ? 1 : 0;
      };
      aggregate(layout.volume, r.p_vol[p], r.out_vol[p]);
      aggregate(layout.speed, r.p_speed[p], r.out_speed[p]);
      r.out_pixel[p] = r.out_vol[p] | r.out_speed[p];
      r.skipped_channels[p] = skipped;
    }
  }
  if (floored_p) warn(std::to_string(floored_p) + " p-value(s) below 1e-300 raised to 1e-300 before aggregation");
  return reports;
}

OutlierShares outlier_share(std::span<const OutlierReport> reports) {
  if (reports.empty()) throw InvalidArgument("outlier_share: no reports");
  const std::size_t h = reports.front().height;
  const std::size_t w = reports.front().width;
  const std::size_t pixels = h * w;
  OutlierShares s;
  s.spatial_pixel = GridTensor(h, w, 1);
  std::vector<std::size_t> per_pixel(pixels, 0);
  for (const auto& r : reports) {
    if (r.height != h || r.width != w) throw ShapeError("outlier reports differ in grid size");
    std::size_t vol = 0, speed = 0, any = 0;
    for (std::size_t p = 0; p < pixels; ++p) {
      vol += r.out_vol[p];
      speed += r.out_speed[p];
      any += r.out_pixel[p];
      per_pixel[p] += r.out_pixel[p];
    }
    const double n = static_cast<double>(pixels);
    s.temporal_vol.push_back(static_cast<double>(vol) / n);
    s.temporal_speed.push_back(static_cast<double>(speed) / n);
    s.temporal_pixel.push_back(static_cast<double>(any) / n);
  }
  for (std::size_t p = 0; p < pixels; ++p) {
    s.spatial_pixel.values()[p] =
        static_cast<float>(static_cast<double>(per_pixel[p]) / static_cast<double>(reports.size()));
  }
  return s;
}

std::string outlier_csv(std::span<const OutlierReport> reports) {
  std::ostringstream out;
  out.precision(10);
  out << "sample,row,col,p_vol,p_speed,out_vol,out_speed,out_pixel\n";
  for (const auto& r : reports) {
    for (std::size_t p = 0; p < r.height * r.width; ++p) {
      out << r.sample << ',' << p / r.width << ',' << p % r.width << ',' << r.p_vol[p] << ',' << r.p_speed[p] << ','
          << int(r.out_vol[p]) << ',' << int(r.out_speed[p]) << ',' << int(r.out_pixel[p]) << '\n';
    }
  }
  return out.str();
}

} // namespace gridcal
