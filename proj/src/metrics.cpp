#include "gridcal/metrics.hpp"

#include "gridcal/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace gridcal {

namespace {

void check_mask(const ActivityMask* mask, const Shape& shape) {
  if (mask && mask->shape() != shape) throw ShapeError("mask does not match the grid");
}

bool selected(const ActivityMask* mask, std::size_t cell) { return !mask || mask->active(cell); }

double floored(float sigma) { return std::max(static_cast<double>(sigma), kSigmaFloor); }

std::string format_number(double v) {
  std::ostringstream out;
  out.precision(10);
  out << v;
  return out.str();
}

} // namespace

double mse(const GridTensor& pred, const GridTensor& truth, const ActivityMask* mask) {
  require_same_shape(pred, truth, "mse");
  check_mask(mask, truth.shape());
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!selected(mask, i)) continue;
    const double r = static_cast<double>(pred.values()[i]) - truth.values()[i];
    acc += r * r;
    ++n;
  }
  if (n == 0) throw InvalidArgument("mse: no cells selected");
  return acc / static_cast<double>(n);
}

double ence(const GridTensor& sigma, const GridTensor& pred, const GridTensor& truth, const ActivityMask* mask) {
  require_same_shape(pred, truth, "ence");
  require_same_shape(sigma, truth, "ence");
  check_mask(mask, truth.shape());
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!selected(mask, i)) continue;
    const double s = floored(sigma.values()[i]);
    const double r = std::abs(static_cast<double>(pred.values()[i]) - truth.values()[i]);
    acc += std::abs(s - r) / s;
    ++n;
  }
  if (n == 0) throw InvalidArgument("ence: no cells selected");
  return acc / static_cast<double>(n);
}

double mpiw(const PredictionInterval& interval, const ActivityMask* mask) {
  require_same_shape(interval.lower, interval.upper, "mpiw");
  check_mask(mask, interval.lower.shape());
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < interval.lower.size(); ++i) {
    if (!selected(mask, i)) continue;
    acc += static_cast<double>(interval.upper.values()[i]) - interval.lower.values()[i];
    ++n;
  }
  if (n == 0) throw InvalidArgument("mpiw: no cells selected");
  return acc / static_cast<double>(n);
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i + 1;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of positions i+1 .. j
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

std::optional<double> spearman_rho(std::span<const double> errors, std::span<const double> sigmas) {
  if (errors.size() != sigmas.size()) throw ShapeError("spearman: inputs differ in length");
  if (errors.size() < 2) throw InvalidArgument("spearman: need at least two pairs");
  const auto re = average_ranks(errors);
  const auto rs = average_ranks(sigmas);
  const double n = static_cast<double>(re.size());
  const double mean_rank = (n + 1.0) / 2.0;
  double cov = 0.0, ve = 0.0, vs = 0.0;
  for (std::size_t i = 0; i < re.size(); ++i) {
    const double a = re[i] - mean_rank;
    const double b = rs[i] - mean_rank;
    cov += a * b;
    ve += a * a;
    vs += b * b;
  }
  if (ve <= 0.0 || vs <= 0.0) return std::nullopt;
  return std::clamp(cov / std::sqrt(ve * vs), -1.0, 1.0);
}

MetricReport evaluate_metrics(std::span<const GridTensor> mu, std::span<const GridTensor> sigma,
                              std::span<const GridTensor> truth, std::span<const PredictionInterval> intervals,
                              const ActivityMask* mask) {
  const std::size_t t_count = truth.size();
  if (t_count == 0) throw InvalidArgument("evaluate: no test samples");
  if (mu.size() != t_count || sigma.size() != t_count || (!intervals.empty() && intervals.size() != t_count)) {
    throw ShapeError("evaluate: mu, sigma, truth and interval counts differ");
  }
  const Shape shape = truth.front().shape();
  check_mask(mask, shape);
  std::vector<std::size_t> cells;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (selected(mask, i)) cells.push_back(i);
  }
  if (cells.empty()) throw InvalidArgument("evaluate: mask selects no cells");

  MetricReport r;
  r.masked = mask != nullptr;
  r.n_cells = cells.size();
  r.n_samples = t_count;
  std::vector<double> sample_sigma(t_count);
  std::vector<double> all_err, all_sig;
  all_err.reserve(t_count * cells.size());
  all_sig.reserve(t_count * cells.size());
  double sse = 0.0, ence_acc = 0.0, width = 0.0;
  for (std::size_t t = 0; t < t_count; ++t) {
    require_same_shape(mu[t], truth[t], "evaluate (mu vs truth)");
    require_same_shape(sigma[t], truth[t], "evaluate (sigma vs truth)");
    double sig = 0.0;
    for (std::size_t i : cells) {
      const double e = std::abs(static_cast<double>(mu[t].values()[i]) - truth[t].values()[i]);
      const double s = sigma[t].values()[i];
      sse += e * e;
      ence_acc += std::abs(floored(sigma[t].values()[i]) - e) / floored(sigma[t].values()[i]);
      sig += s;
      all_err.push_back(e);
      all_sig.push_back(s);
      if (!intervals.empty()) {
        width += static_cast<double>(intervals[t].upper.values()[i]) - intervals[t].lower.values()[i];
      }
    }
    sample_sigma[t] = sig / static_cast<double>(cells.size());
  }
  const double total = static_cast<double>(t_count * cells.size());
  r.mse = sse / total;
  r.ence = ence_acc / total;
  r.mpiw = intervals.empty() ? 0.0 : width / total;
  r.mean_sigma = std::accumulate(sample_sigma.begin(), sample_sigma.end(), 0.0) / static_cast<double>(t_count);
  double spread = 0.0;
  for (double s : sample_sigma) spread += (s - r.mean_sigma) * (s - r.mean_sigma);
  r.sigma_spread = std::sqrt(spread / static_cast<double>(t_count));

  if (t_count >= 2) {
    double acc = 0.0;
    std::size_t defined = 0;
    std::vector<double> e(t_count), s(t_count);
    for (std::size_t k = 0; k < cells.size(); ++k) {
      for (std::size_t t = 0; t < t_count; ++t) {
        e[t] = all_err[t * cells.size() + k];
        s[t] = all_sig[t * cells.size() + k];
      }
      if (auto rho = spearman_rho(e, s)) {
        acc += *rho;
        ++defined;
      }
    }
    if (defined) r.spearman = acc / static_cast<double>(defined);
  }
  if (all_err.size() >= 2) r.spearman_pooled = spearman_rho(all_err, all_sig);
  return r;
}

std::string metric_csv_header() {
  return "dataset,method,masked,mse,mean_sigma,sigma_spread,mpiw,ence,spearman,spearman_pooled\n";
}

std::string metric_csv_row(const MetricReport& r) {
  std::ostringstream out;
  out << r.dataset << ',' << r.method << ',' << (r.masked ? "zero-mask" : "none") << ',' << format_number(r.mse)
      << ',' << format_number(r.mean_sigma) << ',' << format_number(r.sigma_spread) << ','
      << format_number(r.mpiw) << ',' << format_number(r.ence) << ','
      << (r.spearman ? format_number(*r.spearman) : "undefined") << ','
      << (r.spearman_pooled ? format_number(*r.spearman_pooled) : "undefined") << '\n';
  return out.str();
}

} // namespace gridcal
