#include "gridcal/conformal.hpp"

#include "gridcal/error.hpp"
#include "gridcal/log.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace gridcal {

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
}

bool selected(const ActivityMask* mask, std::size_t cell) { return !mask || mask->active(cell); }

} // namespace

GridTensor floor_sigma(const GridTensor& sigma) {
  GridTensor out = sigma;
  for (float& v : out.values()) {
    if (!std::isfinite(v)) throw InvalidArgument("sigma is not finite");
    v = std::max(v, static_cast<float>(kSigmaFloor));
  }
  return out;
}

GridTensor conformity_scores(const GridTensor& y, const GridTensor& mu, const GridTensor& sigma) {
  require_same_shape(y, mu, "conformity scores (truth vs mu)");
  require_same_shape(y, sigma, "conformity scores (truth vs sigma)");
  if (!y.all_finite() || !mu.all_finite()) throw InvalidArgument("conformity scores: non-finite input");
  const GridTensor s = floor_sigma(sigma);
  GridTensor out(y.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double r = std::abs(static_cast<double>(y.values()[i]) - mu.values()[i]);
    out.values()[i] = static_cast<float>(r / s.values()[i]);
  }
  return out;
}

void CalibrationSet::add(const GridTensor& scores) {
  if (samples_.empty() && shape_.size() == 0) shape_ = scores.shape();
  if (scores.shape() != shape_) {
    throw ShapeError("calibration scores " + to_string(scores.shape()) + " do not match " + to_string(shape_));
  }
  for (float v : scores.values()) {
    if (!std::isfinite(v) || v < 0.0f) throw InvalidArgument("calibration scores must be finite and >= 0");
  }
  samples_.push_back(scores);
}

std::size_t conformal_rank(std::size_t n, double alpha) {
  check_alpha(alpha);
  // The small offset keeps exact products such as 0.9 * 10 = 9.000000000000002
  // from rounding up a whole rank.
  return static_cast<std::size_t>(std::ceil((1.0 - alpha) * static_cast<double>(n + 1) - 1e-9));
}

double order_statistic(std::vector<double> scores, std::size_t rank) {
  if (rank == 0) throw InvalidArgument("order statistic rank is 1-based");
  if (rank > scores.size()) return std::numeric_limits<double>::infinity();
  std::stable_sort(scores.begin(), scores.end());
  return scores[rank - 1];
}

QuantileGrid calibrate_qhat(const CalibrationSet& cal, double alpha, bool pooled) {
  check_alpha(alpha);
  const std::size_t c = cal.size();
  if (c == 0) throw InvalidArgument("calibration set is empty");
  QuantileGrid out;
  out.alpha = alpha;
  out.pooled = pooled;
  out.qhat = GridTensor(cal.shape());
  const std::size_t cells = cal.shape().size();
  const std::size_t n = pooled ? c * cells : c;
  out.rank = conformal_rank(n, alpha);
  if (out.rank > n) {
    out.vacuous = true;
    warn("calibration rank " + std::to_string(out.rank) + " exceeds the " + std::to_string(n) +
         " scores; qhat is infinite and intervals are unbounded");
    for (float& v : out.qhat.values()) v = std::numeric_limits<float>::infinity();
    return out;
  }
  if (pooled) {
    std::vector<double> all;
    all.reserve(n);
    for (const auto& s : cal.samples()) all.insert(all.end(), s.values().begin(), s.values().end());
    const float q = static_cast<float>(order_statistic(std::move(all), out.rank));
    for (float& v : out.qhat.values()) v = q;
    return out;
  }
  std::vector<double> scores(c);
  for (std::size_t cell = 0; cell < cells; ++cell) {
    for (std::size_t k = 0; k < c; ++k) scores[k] = cal.samples()[k].values()[cell];
    out.qhat.values()[cell] = static_cast<float>(order_statistic(scores, out.rank));
  }
  return out;
}

PredictionInterval build_interval(const GridTensor& mu, const GridTensor& sigma, const GridTensor& qhat,
                                  double alpha) {
  check_alpha(alpha);
  require_same_shape(mu, sigma, "interval (mu vs sigma)");
  require_same_shape(mu, qhat, "interval (mu vs qhat)");
  const GridTensor s = floor_sigma(sigma);
  PredictionInterval out;
  out.lower = GridTensor(mu.shape());
  out.upper = GridTensor(mu.shape());
  out.qhat = qhat;
  out.alpha = alpha;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double q = qhat.values()[i];
    if (!(q >= 0.0)) throw InvalidArgument("qhat must be non-negative");
    const double half = static_cast<double>(s.values()[i]) * q;
    out.lower.values()[i] = static_cast<float>(mu.values()[i] - half);
    out.upper.values()[i] = static_cast<float>(mu.values()[i] + half);
  }
  return out;
}

double empirical_coverage(const PredictionInterval& interval, const GridTensor& truth, const ActivityMask* mask) {
  require_same_shape(interval.lower, truth, "coverage");
  if (mask && mask->shape() != truth.shape()) throw ShapeError("coverage mask does not match the grid");
  std::size_t hit = 0, n = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!selected(mask, i)) continue;
    ++n;
    const float y = truth.values()[i];
    if (y >= interval.lower.values()[i] && y <= interval.upper.values()[i]) ++hit;
  }
  if (n == 0) throw InvalidArgument("coverage: mask selects no cells");
  return static_cast<double>(hit) / static_cast<double>(n);
}

GroupCoverage group_coverage(const PredictionInterval& interval, const GridTensor& truth,
                             const ChannelLayout& layout, const ActivityMask* mask) {
  layout.validate(truth.channels());
  GroupCoverage out;
  out.all = empirical_coverage(interval, truth, mask);
  auto group = [&](const std::vector<std::size_t>& channels) -> std::optional<double> {
    std::size_t hit = 0, n = 0;
    const std::size_t pixels = truth.height() * truth.width();
    for (std::size_t p = 0; p < pixels; ++p) {
      for (std::size_t c : channels) {
        const std::size_t i = p * truth.channels() + c;
        if (!selected(mask, i)) continue;
        ++n;
        const float y = truth.values()[i];
        if (y >= interval.lower.values()[i] && y <= interval.upper.values()[i]) ++hit;
      }
    }
    if (n == 0) return std::nullopt;
    return static_cast<double>(hit) / static_cast<double>(n);
  };
  out.volume = group(layout.volume);
  out.speed = group(layout.speed);
  return out;
}

BetaLaw nominal_coverage_law(std::size_t calibration_size, double alpha) {
  check_alpha(alpha);
  if (calibration_size == 0) throw InvalidArgument("calibration size must be at least 1");
  const auto l = static_cast<std::size_t>(std::floor(static_cast<double>(calibration_size + 1) * alpha + 1e-9));
  BetaLaw law;
  if (l == 0) {
    law.degenerate = true;
    law.mean = 1.0;
    return law;
  }
  law.a = static_cast<double>(calibration_size + 1 - l);
  law.b = static_cast<double>(l);
  law.mean = law.a / (law.a + law.b);
  return law;
}

double split_coverage(std::span<const double> scores, std::size_t calibration_size, double alpha, Rng& rng) {
  if (calibration_size == 0 || calibration_size >= scores.size()) {
    throw InvalidArgument("split needs 0 < C < number of scores");
  }
  std::vector<double> shuffled(scores.begin(), scores.end());
  rng.shuffle(shuffled);
  const std::vector<double> cal(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(calibration_size));
  const double q = order_statistic(cal, conformal_rank(calibration_size, alpha));
  std::size_t hit = 0;
  for (std::size_t i = calibration_size; i < shuffled.size(); ++i) {
    if (shuffled[i] <= q) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(shuffled.size() - calibration_size);
}

std::string coverage_csv(std::span<const CoverageRow> rows) {
  std::ostringstream out;
  out.precision(10);
  out << "sample,group,coverage\n";
  for (const auto& r : rows) out << r.sample << ',' << r.group << ',' << r.coverage << '\n';
  return out.str();
}

} // namespace gridcal
