#include "support.hpp"

#include "gridcal/conformal.hpp"
#include "gridcal/error.hpp"
#include "gridcal/log.hpp"
#include "gridcal/metrics.hpp"
#include "gridcal/stats.hpp"

#include <boost/math/distributions/beta.hpp>
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

using namespace gridcal;
using namespace gridcal::testing;

namespace {

CalibrationSet random_calibration(Rng& rng, std::size_t c, Shape shape) {
  CalibrationSet cal(shape);
  for (std::size_t i = 0; i < c; ++i) {
    GridTensor s(shape);
    for (float& v : s.values()) v = static_cast<float>(rng.uniform(0.0, 5.0));
    cal.add(s);
  }
  return cal;
}

struct CaptureWarnings {
  std::vector<std::string> messages;
  WarningHandler previous;
  CaptureWarnings() {
    previous = set_warning_handler([this](const std::string& m) { messages.push_back(m); });
  }
  ~CaptureWarnings() { set_warning_handler(previous); }
};

} // namespace

TEST_CASE("conformity scores") {
  const GridTensor y(1, 1, 1, 10.0f), mu(1, 1, 1, 8.0f), sigma(1, 1, 1, 2.0f);
  CHECK(conformity_scores(y, mu, sigma).values()[0] == 1.0f);
  CHECK(conformity_scores(mu, mu, sigma).values()[0] == 0.0f);

  Rng rng(1);
  const GridTensor ry = random_grid(rng, 4, 4, 8), rm = random_grid(rng, 4, 4, 8);
  GridTensor rs = random_grid(rng, 4, 4, 8, 0.0, 3.0);
  rs.values()[5] = 0.0f;
  const GridTensor scores = conformity_scores(ry, rm, rs);
  for (std::size_t i = 0; i < ry.size(); ++i) {
    const double s = std::max<double>(rs.values()[i], kSigmaFloor);
    CHECK(scores.values()[i] == doctest::Approx(std::abs(ry.values()[i] - rm.values()[i]) / s).epsilon(1e-6));
  }
  GridTensor nan = ry;
  nan.values()[0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(conformity_scores(nan, rm, rs), InvalidArgument);
}

TEST_CASE("conformal rank arithmetic") {
  CHECK(conformal_rank(100, 0.1) == 91);
  CHECK(conformal_rank(9, 0.1) == 9);
  CHECK(conformal_rank(19, 0.05) == 19);
  CHECK(conformal_rank(8, 0.1) == 9);
  CHECK(conformal_rank(1, 0.5) == 1);
  CHECK_THROWS_AS(conformal_rank(10, 1.0), InvalidArgument);
}

TEST_CASE("qhat is the rank-th order statistic per cell") {
  Rng rng(2);
  const CalibrationSet cal = random_calibration(rng, 100, {2, 3, 2});
  const QuantileGrid q = calibrate_qhat(cal, 0.1);
  CHECK(q.rank == 91);
  CHECK_FALSE(q.vacuous);
  for (std::size_t cell = 0; cell < 12; ++cell) {
    std::vector<float> v;
    for (const auto& s : cal.samples()) v.push_back(s.values()[cell]);
    std::sort(v.begin(), v.end());
    CHECK(q.qhat.values()[cell] == v[90]);
  }

  const CalibrationSet nine = random_calibration(rng, 9, {1, 2, 1});
  const QuantileGrid q9 = calibrate_qhat(nine, 0.1);
  for (std::size_t cell = 0; cell < 2; ++cell) {
    float mx = 0.0f;
    for (const auto& s : nine.samples()) mx = std::max(mx, s.values()[cell]);
    CHECK(q9.qhat.values()[cell] == mx);
  }
}

TEST_CASE("constant scores give that constant") {
  CalibrationSet cal({2, 2, 1});
  for (int i = 0; i < 30; ++i) cal.add(GridTensor(2, 2, 1, 1.75f));
  for (double alpha : {0.05, 0.1, 0.3, 0.5}) {
    const GridTensor q = calibrate_qhat(cal, alpha).qhat;
    for (float v : q.values()) CHECK(v == 1.75f);
  }
}

TEST_CASE("too few calibration samples give an infinite qhat and a warning") {
  CaptureWarnings w;
  CalibrationSet cal({1, 1, 1});
  for (int i = 0; i < 8; ++i) cal.add(GridTensor(1, 1, 1, 1.0f));
  const QuantileGrid q = calibrate_qhat(cal, 0.1);
  CHECK(q.vacuous);
  CHECK(std::isinf(q.qhat.values()[0]));
  CHECK(w.messages.size() == 1);
  CHECK_THROWS_AS(calibrate_qhat(CalibrationSet({1, 1, 1}), 0.1), InvalidArgument);
}

TEST_CASE("pooled qhat") {
  Rng rng(3);
  const CalibrationSet cal = random_calibration(rng, 20, {2, 2, 2});
  const QuantileGrid q = calibrate_qhat(cal, 0.1, true);
  std::vector<double> all;
  for (const auto& s : cal.samples())
    for (float v : s.values()) all.push_back(v);
  CHECK(q.pooled);
  CHECK(q.rank == conformal_rank(all.size(), 0.1));
  const double expect = order_statistic(all, q.rank);
  for (float v : q.qhat.values()) CHECK(v == static_cast<float>(expect));
}

TEST_CASE("order statistics") {
  CHECK(order_statistic({3.0, 1.0, 2.0}, 1) == 1.0);
  CHECK(order_statistic({3.0, 1.0, 2.0}, 3) == 3.0);
  CHECK(std::isinf(order_statistic({3.0, 1.0}, 3)));
  CHECK_THROWS_AS(order_statistic({1.0}, 0), InvalidArgument);
}

TEST_CASE("qhat monotonicity and scaling") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    CalibrationSet cal = random_calibration(rng, 30, {1, 3, 1});
    const GridTensor q = calibrate_qhat(cal, 0.2).qhat;

    CalibrationSet bigger = cal;
    GridTensor extra(1, 3, 1);
    for (std::size_t i = 0; i < 3; ++i) extra.values()[i] = q.values()[i] + static_cast<float>(rng.uniform(0.0, 2.0));
    bigger.add(extra);
    const GridTensor q2 = calibrate_qhat(bigger, 0.2).qhat;
    for (std::size_t i = 0; i < 3; ++i) CHECK(q2.values()[i] >= q.values()[i]);

    CalibrationSet scaled({1, 3, 1});
    for (const auto& s : cal.samples()) {
      GridTensor t = s;
      for (float& v : t.values()) v *= 4.0f;
      scaled.add(t);
    }
    const GridTensor q4 = calibrate_qhat(scaled, 0.2).qhat;
    for (std::size_t i = 0; i < 3; ++i) CHECK(q4.values()[i] == 4.0f * q.values()[i]);
  }
}

TEST_CASE("prediction intervals") {
  const GridTensor mu(3, 3, 2, 10.0f), sigma(3, 3, 2, 1.0f), q2(3, 3, 2, 2.0f);
  const PredictionInterval iv = build_interval(mu, sigma, q2, 0.1);
  for (std::size_t i = 0; i < mu.size(); ++i) CHECK(iv.upper.values()[i] - iv.lower.values()[i] == 4.0f);
  CHECK(mpiw(iv) == 4.0);

  const PredictionInterval point = build_interval(mu, sigma, GridTensor(3, 3, 2, 0.0f), 0.1);
  CHECK(point.lower == mu);
  CHECK(point.upper == mu);
  CHECK_THROWS_AS(build_interval(mu, sigma, GridTensor(3, 3, 2, -1.0f), 0.1), InvalidArgument);
  CHECK_THROWS_AS(build_interval(mu, GridTensor(3, 3, 1, 1.0f), q2, 0.1), ShapeError);

  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const GridTensor m = random_grid(rng, 4, 5, 8), s = random_grid(rng, 4, 5, 8, 0.0, 4.0),
                     q = random_grid(rng, 4, 5, 8, 0.0, 3.0);
    const PredictionInterval r = build_interval(m, s, q, 0.1);
    GridTensor shifted = m;
    for (float& v : shifted.values()) v += 17.0f;
    const PredictionInterval rs = build_interval(shifted, s, q, 0.1);
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double width = 2.0 * std::max<double>(s.values()[i], kSigmaFloor) * q.values()[i];
      CHECK(std::abs(r.upper.values()[i] - r.lower.values()[i] - width) < 1e-4 * (1.0 + std::abs(m.values()[i])));
      CHECK(r.lower.values()[i] <= r.upper.values()[i]);
      CHECK(rs.upper.values()[i] - rs.lower.values()[i] ==
            doctest::Approx(r.upper.values()[i] - r.lower.values()[i]).epsilon(1e-3).scale(1e2));
    }
  }
}

TEST_CASE("empirical coverage") {
  Rng rng(6);
  const GridTensor mu = random_grid(rng, 3, 4, 8), sigma = random_grid(rng, 3, 4, 8, 0.1, 2.0);
  const PredictionInterval iv = build_interval(mu, sigma, GridTensor(3, 4, 8, 1.0f), 0.1);
  CHECK(empirical_coverage(iv, mu) == 1.0);
  GridTensor outside = iv.upper;
  for (float& v : outside.values()) v += 1.0f;
  CHECK(empirical_coverage(iv, outside) == 0.0);

  for (int trial = 0; trial < 10; ++trial) {
    const GridTensor truth = random_grid(rng, 3, 4, 8);
    std::size_t in = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      in += truth.values()[i] >= iv.lower.values()[i] && truth.values()[i] <= iv.upper.values()[i];
    }
    CHECK(empirical_coverage(iv, truth) == doctest::Approx(static_cast<double>(in) / truth.size()));
  }

  const ActivityMask none(mu.shape(), false);
  CHECK_THROWS_AS(empirical_coverage(iv, mu, &none), InvalidArgument);
  ActivityMask one(mu.shape(), false);
  one.set(0, 0, 0, true);
  CHECK(empirical_coverage(iv, outside, &one) == 0.0);
}

TEST_CASE("group coverage") {
  const GridTensor mu(1, 1, 8, 0.0f);
  const PredictionInterval iv = build_interval(mu, GridTensor(1, 1, 8, 1.0f), GridTensor(1, 1, 8, 1.0f), 0.1);
  GridTensor truth(1, 1, 8, 0.0f);
  for (std::size_t c : {1, 3, 5, 7}) truth.values()[c] = 5.0f;  // speed cells miss
  const GroupCoverage g = group_coverage(iv, truth, ChannelLayout::interleaved());
  CHECK(g.all == 0.5);
  CHECK(*g.volume == 1.0);
  CHECK(*g.speed == 0.0);
}

TEST_CASE("coverage is invariant under a joint rescaling of sigma") {
  Rng rng(7);
  const Shape shape{3, 3, 2};
  std::vector<GridTensor> cal_mu, cal_sigma, cal_y;
  CalibrationSet cal(shape), cal_scaled(shape);
  for (int i = 0; i < 40; ++i) {
    const GridTensor m = random_grid(rng, 3, 3, 2), s = random_grid(rng, 3, 3, 2, 1.0, 5.0),
                     y = random_grid(rng, 3, 3, 2);
    GridTensor s3 = s;
    for (float& v : s3.values()) v *= 3.0f;
    cal.add(conformity_scores(y, m, s));
    cal_scaled.add(conformity_scores(y, m, s3));
  }
  const GridTensor q = calibrate_qhat(cal, 0.1).qhat;
  const GridTensor q3 = calibrate_qhat(cal_scaled, 0.1).qhat;
  for (int t = 0; t < 20; ++t) {
    const GridTensor m = random_grid(rng, 3, 3, 2), s = random_grid(rng, 3, 3, 2, 1.0, 5.0),
                     y = random_grid(rng, 3, 3, 2);
    GridTensor s3 = s;
    for (float& v : s3.values()) v *= 3.0f;
    CHECK(empirical_coverage(build_interval(m, s, q, 0.1), y) ==
          doctest::Approx(empirical_coverage(build_interval(m, s3, q3, 0.1), y)));
  }
}

TEST_CASE("nominal coverage law") {
  const BetaLaw a = nominal_coverage_law(100, 0.1);
  CHECK(a.a == 91.0);
  CHECK(a.b == 10.0);
  CHECK(a.mean == doctest::Approx(91.0 / 101.0));
  CHECK_FALSE(a.degenerate);

  const BetaLaw b = nominal_coverage_law(19, 0.05);
  CHECK(b.a == 19.0);
  CHECK(b.b == 1.0);

  CHECK(nominal_coverage_law(5, 0.1).degenerate);

  // Central 99% of Beta(91, 10) is roughly 0.90 +- 0.08 (lower tail reaches 0.811).
  const boost::math::beta_distribution<> law(91.0, 10.0);
  CHECK(boost::math::quantile(law, 0.005) > 0.80);
  CHECK(boost::math::quantile(law, 0.995) < 0.98);
  CHECK(stats::beta_cdf(0.80, 91.0, 10.0) < 0.005);
  CHECK(stats::beta_cdf(0.85, 91.0, 10.0) == doctest::Approx(boost::math::cdf(law, 0.85)).epsilon(1e-10));
  CHECK(1.0 - stats::beta_cdf(0.98, 91.0, 10.0) < 0.005);
}

TEST_CASE("split coverage follows the Beta law on average") {
  Rng rng(8);
  std::vector<double> scores(1100);
  for (double& s : scores) s = std::abs(rng.normal());
  double total = 0.0;
  const int splits = 300;
  for (int i = 0; i < splits; ++i) total += split_coverage(scores, 100, 0.1, rng);
  CHECK(total / splits == doctest::Approx(91.0 / 101.0).epsilon(0.01));
  CHECK_THROWS_AS(split_coverage(scores, 1100, 0.1, rng), InvalidArgument);
}

TEST_CASE("coverage csv") {
  const std::vector<CoverageRow> rows{{0, "all", 0.5}, {0, "volume", 1.0}};
  CHECK(coverage_csv(rows) == "sample,group,coverage\n0,all,0.5\n0,volume,1\n");
}
