#include "gradcheck.hpp"
#include "support.hpp"

#include "gridcal/error.hpp"
#include "gridcal/estimators.hpp"
#include "gridcal/synth.hpp"
#include "gridcal/transforms.hpp"

#include <doctest.h>

#include <cmath>

using namespace gridcal;
using namespace gridcal::testing;

namespace {

class ConstantPredictor final : public Predictor {
public:
  explicit ConstantPredictor(float value) : value_(value) {}
  std::string kind() const override { return "constant"; }
  std::unique_ptr<Predictor> clone() const override { return std::make_unique<ConstantPredictor>(*this); }
  GridTensor forward(std::span<const GridTensor> inputs) const override {
    return GridTensor(inputs.front().shape(), value_);
  }

private:
  float value_;
};

EnsembleModel constant_ensemble(std::initializer_list<float> values) {
  EnsembleModel ens;
  std::uint64_t seed = 0;
  for (float v : values) {
    ens.members.push_back(std::make_unique<ConstantPredictor>(v));
    ens.member_seeds.push_back(seed++);
  }
  return ens;
}

EnsembleModel random_linear_ensemble(std::size_t m, std::uint64_t seed) {
  EnsembleModel ens;
  for (std::size_t i = 0; i < m; ++i) {
    auto p = std::make_unique<LinearPredictor>();
    p->initialize(seed + i);
    ens.members.push_back(std::move(p));
    ens.member_seeds.push_back(seed + i);
  }
  return ens;
}

EnsembleModel random_conv_ensemble(std::size_t m, std::uint64_t seed) {
  EnsembleModel ens;
  for (std::size_t i = 0; i < m; ++i) {
    ens.members.push_back(std::make_unique<ConvBnPredictor>(random_conv_model(seed + i)));
    ens.member_seeds.push_back(seed + i);
  }
  return ens;
}

// Per-cell population mean and std in plain loops.
void loop_moments(const std::vector<GridTensor>& xs, std::vector<double>& mean, std::vector<double>& sd) {
  const std::size_t n = xs.front().size();
  mean.assign(n, 0.0);
  sd.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (const auto& x : xs) s += x.values()[i];
    mean[i] = s / static_cast<double>(xs.size());
    double v = 0.0;
    for (const auto& x : xs) v += (x.values()[i] - mean[i]) * (x.values()[i] - mean[i]);
    sd[i] = std::sqrt(v / static_cast<double>(xs.size()));
  }
}

void check_close(const GridTensor& t, const std::vector<double>& ref, double tol) {
  REQUIRE(t.size() == ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(t.values()[i] - ref[i]) <= tol * (1.0 + std::abs(ref[i])));
}

std::vector<GridTensor> transform_all(std::span<const GridTensor> frames, const TransformSpec& spec) {
  std::vector<GridTensor> out;
  for (const auto& f : frames) out.push_back(apply_transform(f, spec));
  return out;
}

} // namespace

TEST_CASE("sample moments") {
  std::vector<GridTensor> xs{GridTensor(1, 1, 1, 2.0f), GridTensor(1, 1, 1, 4.0f)};
  GridTensor mean, sd;
  sample_moments(xs, mean, sd);
  CHECK(mean.values()[0] == 3.0f);
  CHECK(sd.values()[0] == 1.0f);

  std::vector<GridTensor> eight;
  for (float v : {0.f, 0.f, 0.f, 0.f, 2.f, 2.f, 2.f, 2.f}) eight.push_back(GridTensor(1, 1, 1, v));
  sample_moments(eight, mean, sd);
  CHECK(sd.values()[0] == 1.0f);
  CHECK_THROWS_AS(sample_moments({}, mean, sd), InvalidArgument);
}

TEST_CASE("ensemble estimates") {
  Rng rng(1);
  const auto inputs = random_inputs(rng, 3, 3);

  const UQEstimate same = ensemble_estimate(constant_ensemble({7, 7, 7}), inputs);
  for (float s : same.sigma.values()) CHECK(s == 0.0f);
  for (float m : same.mu.values()) CHECK(m == 7.0f);

  const UQEstimate two = ensemble_estimate(constant_ensemble({2, 4}), inputs);
  for (float m : two.mu.values()) CHECK(m == 3.0f);
  for (float s : two.sigma.values()) CHECK(s == 1.0f);
  CHECK(two.kind == UncertaintyKind::Epistemic);
  CHECK(two.sample_count == 2);

  const EnsembleModel ens = random_linear_ensemble(5, 10);
  const UQEstimate est = ensemble_estimate(ens, inputs);
  std::vector<GridTensor> preds;
  for (const auto& m : ens.members) preds.push_back(m->forward(inputs));
  std::vector<double> mean, sd;
  loop_moments(preds, mean, sd);
  check_close(est.mu, mean, 1e-6);
  check_close(est.sigma, sd, 1e-5);
  CHECK_THROWS_AS(ensemble_estimate(EnsembleModel{}, inputs), InvalidArgument);
}

TEST_CASE("TTA of an equivariant predictor has zero sigma") {
  Rng rng(2);
  const auto inputs = random_inputs(rng, 5, 3);
  const UQEstimate est = tta_estimate(PersistencePredictor(), inputs);
  CHECK(est.mu == inputs.back());
  for (float s : est.sigma.values()) CHECK(s == 0.0f);
  CHECK(est.kind == UncertaintyKind::Aleatoric);
  CHECK(est.sample_count == 8);
}

TEST_CASE("TTA matches direct enumeration of the transforms") {
  Rng rng(3);
  const ConvBnPredictor model = random_conv_model(4);
  const auto inputs = random_inputs(rng, 6, 6);
  const auto preds = tta_predictions(model, inputs);
  REQUIRE(preds.size() == 8);

  std::vector<GridTensor> oracle;
  for (const auto& spec : canonical_transforms()) {
    const auto moved = transform_all(inputs, spec);
    oracle.push_back(invert_transform(model.forward(moved), spec));
  }
  for (std::size_t k = 0; k < 8; ++k) CHECK(preds[k] == oracle[k]);
  CHECK(preds[0] == model.forward(inputs));

  const UQEstimate est = tta_estimate(model, inputs);
  std::vector<double> mean, sd;
  loop_moments(oracle, mean, sd);
  check_close(est.sigma, sd, 1e-5);
  CHECK(est.mu == model.forward(inputs));
}

TEST_CASE("TTA pads non-square inputs") {
  Rng rng(5);
  const ConvBnPredictor model = random_conv_model(6);
  const auto inputs = random_inputs(rng, 4, 6);
  const auto preds = tta_predictions(model, inputs);
  std::vector<GridTensor> padded;
  for (const auto& f : inputs) padded.push_back(pad_to_square(f, 6));
  for (std::size_t k = 0; k < 8; ++k) {
    const auto& spec = canonical_transforms()[k];
    const GridTensor expect = unpad(invert_transform(model.forward(transform_all(padded, spec)), spec), 4, 6);
    CHECK(preds[k] == expect);
  }
}

TEST_CASE("MCBN defaults") {
  const McbnConfig cfg;
  CHECK(cfg.passes == 10);
  CHECK(cfg.batch_size == 0);
  CHECK(ConvBnPredictor().training_batch_size() == 12);
}

TEST_CASE("MCBN with identical batch statistics gives zero sigma") {
  Rng rng(7);
  ConvBnPredictor model = random_conv_model(8);
  model.set_training_batch_size(3);
  const auto one = random_batch(rng, 1, 4, 4);
  const std::vector<SampleSequence> copies(6, one.front());
  VectorSource source(copies);
  McbnConfig cfg;
  cfg.passes = 5;
  const UQEstimate est = mcbn_estimate(model, random_inputs(rng, 4, 4), source, cfg);
  for (float s : est.sigma.values()) CHECK(s == 0.0f);
  CHECK(est.sample_count == 5);

  cfg.batch_size = 7;
  CHECK_THROWS_AS(mcbn_estimate(model, random_inputs(rng, 4, 4), source, cfg), InvalidArgument);
  CHECK_THROWS_AS(mcbn_estimate(LinearPredictor(), random_inputs(rng, 4, 4), source), CapabilityError);
}

TEST_CASE("MCBN on a trained model spreads on active cells") {
  CityConfig city;
  city.height = 8;
  city.width = 8;
  city.n_arterials = 1;
  city.n_side_roads = 2;
  const SynthDataset data = generate(city, 3);
  const DataSplit split = train_val_test_split(3, {1, 1, 1});
  WindowSource train_src(data.days, subsample(split.train, 4));
  ConvNetConfig nc;
  nc.hidden = 6;
  ConvBnPredictor model(nc);
  model.initialize(1);
  TrainConfig tc;
  tc.epochs = 2;
  tc.learning_rate = 2.0;
  train(model, train_src, tc);

  const auto test_refs = subsample(split.test, 40, 90);
  std::size_t trials = 0, spread = 0;
  for (const auto& ref : test_refs) {
    const SampleSequence s = make_window(data.days, ref);
    const ActivityMask mask = activity_mask(s.inputs, data.layout());
    if (mask.count() == 0) continue;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      McbnConfig cfg;
      cfg.seed = seed;
      const UQEstimate est = mcbn_estimate(model, s.inputs, train_src, cfg);
      double total = 0.0;
      for (std::size_t i = 0; i < est.sigma.size(); ++i) {
        if (mask.active(i)) total += est.sigma.values()[i];
      }
      ++trials;
      spread += total > 0.0;
    }
  }
  REQUIRE(trials > 0);
  CHECK(static_cast<double>(spread) >= 0.99 * static_cast<double>(trials));
}

TEST_CASE("MCBN statistics are reproducible") {
  Rng rng(9);
  ConvBnPredictor model = random_conv_model(10);
  model.set_training_batch_size(2);
  const auto data = random_batch(rng, 8, 3, 3);
  VectorSource source(data);
  McbnConfig cfg;
  cfg.passes = 3;
  cfg.seed = 4;
  const auto inputs = random_inputs(rng, 3, 3);
  const UQEstimate a = mcbn_estimate(model, inputs, source, cfg);
  const UQEstimate b = mcbn_estimate(model, inputs, draw_mcbn_statistics(model, source, cfg));
  CHECK(a.mu == b.mu);
  CHECK(a.sigma == b.sigma);
}

TEST_CASE("patch windows") {
  CHECK(window_starts(9, 5, 1) == std::vector<std::size_t>{0, 1, 2, 3, 4});
  CHECK(window_starts(10, 4, 3) == std::vector<std::size_t>{0, 3, 6});
  CHECK(window_starts(11, 4, 3) == std::vector<std::size_t>{0, 3, 6, 7});
  CHECK(window_starts(5, 5, 2) == std::vector<std::size_t>{0});
  CHECK_THROWS_AS(PatchConfig({6, 2}).validate(5, 9), InvalidArgument);
  CHECK_THROWS_AS(PatchConfig({3, 4}).validate(9, 9), InvalidArgument);
  CHECK_THROWS_AS(PatchConfig({3, 0}).validate(9, 9), InvalidArgument);
}

TEST_CASE("patch count worked examples") {
  CHECK(expected_patch_count(5, 5, 9, 9, 5, 1) == 25);
  CHECK(expected_patch_count(2, 1, 9, 9, 5, 1) == 2);
  const auto cov = patch_coverage(9, 9, {5, 1});
  CHECK(cov[4 * 9 + 4] == 25);
  CHECK(cov[1 * 9 + 0] == 2);
  // With s = 1 every window fits, so the closed form is exact everywhere.
  for (std::size_t i = 1; i <= 9; ++i)
    for (std::size_t j = 1; j <= 9; ++j) CHECK(cov[(i - 1) * 9 + (j - 1)] == expected_patch_count(i, j, 9, 9, 5, 1));
}

TEST_CASE("patch coverage matches a window-counting loop") {
  for (auto [h, w, d, s] : {std::array<std::size_t, 4>{17, 13, 6, 4}, {20, 20, 10, 3}, {12, 30, 12, 5}}) {
    const auto cov = patch_coverage(h, w, {d, s});
    const auto rows = window_starts(h, d, s);
    const auto cols = window_starts(w, d, s);
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) {
        std::uint32_t n = 0;
        for (std::size_t r0 : rows)
          for (std::size_t c0 : cols) n += (r >= r0 && r < r0 + d && c >= c0 && c < c0 + d);
        CHECK(cov[r * w + c] == n);
      }
  }
}

TEST_CASE("patch estimate of a constant model") {
  Rng rng(11);
  const auto inputs = random_inputs(rng, 9, 9);
  const UQEstimate est = patch_estimate(ConstantPredictor(42.0f), inputs, {5, 2});
  for (float m : est.mu.values()) CHECK(m == 42.0f);
  for (float s : est.sigma.values()) CHECK(s == 0.0f);
  CHECK(est.sample_count == 0);
  CHECK(est.pixel_counts == patch_coverage(9, 9, {5, 2}));
}

TEST_CASE("patch estimate matches brute-force windows") {
  Rng rng(12);
  const ConvBnPredictor model = random_conv_model(13);
  const auto inputs = random_inputs(rng, 8, 7);
  const PatchConfig cfg{4, 3};
  const UQEstimate est = patch_estimate(model, inputs, cfg);

  const std::size_t h = 8, w = 7, ch = 8;
  std::vector<std::vector<double>> per_cell(h * w * ch);
  for (std::size_t r0 : window_starts(h, cfg.d, cfg.s))
    for (std::size_t c0 : window_starts(w, cfg.d, cfg.s)) {
      std::vector<GridTensor> crop;
      for (const auto& f : inputs) {
        GridTensor g(cfg.d, cfg.d, ch);
        for (std::size_t r = 0; r < cfg.d; ++r)
          for (std::size_t c = 0; c < cfg.d; ++c)
            for (std::size_t k = 0; k < ch; ++k) g(r, c, k) = f(r0 + r, c0 + c, k);
        crop.push_back(g);
      }
      const GridTensor y = model.forward(crop);
      for (std::size_t r = 0; r < cfg.d; ++r)
        for (std::size_t c = 0; c < cfg.d; ++c)
          for (std::size_t k = 0; k < ch; ++k) per_cell[((r0 + r) * w + c0 + c) * ch + k].push_back(y(r, c, k));
    }
  for (std::size_t i = 0; i < per_cell.size(); ++i) {
    const auto& v = per_cell[i];
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - m) * (x - m);
    const double sd = std::sqrt(var / static_cast<double>(v.size()));
    CHECK(std::abs(est.mu.values()[i] - m) < 1e-3);
    CHECK(std::abs(est.sigma.values()[i] - sd) < 1e-3);
  }
}

TEST_CASE("combining aleatoric and epistemic sigma") {
  UQEstimate epi{GridTensor(2, 2, 1, 5.0f), GridTensor(2, 2, 1, 0.3f), UncertaintyKind::Epistemic, "ens", 5, {}};
  UQEstimate alea{GridTensor(2, 2, 1, 6.0f), GridTensor(2, 2, 1, 0.5f), UncertaintyKind::Aleatoric, "tta", 8, {}};
  const UQEstimate pred = combine_predictive(epi, alea);
  for (float s : pred.sigma.values()) CHECK(s == doctest::Approx(0.8));
  for (float m : pred.mu.values()) CHECK(m == 5.0f);
  CHECK(pred.kind == UncertaintyKind::Predictive);

  UQEstimate zero = alea;
  zero.sigma = GridTensor(2, 2, 1, 0.0f);
  CHECK(combine_predictive(epi, zero).sigma == epi.sigma);
  UQEstimate zero_epi = epi;
  zero_epi.sigma = GridTensor(2, 2, 1, 0.0f);
  CHECK(combine_predictive(zero_epi, alea).sigma == alea.sigma);

  CHECK_THROWS_AS(combine_predictive(alea, epi), InvalidArgument);
  UQEstimate small = alea;
  small.sigma = GridTensor(1, 2, 1, 0.5f);
  small.mu = GridTensor(1, 2, 1, 0.5f);
  CHECK_THROWS_AS(combine_predictive(epi, small), ShapeError);
}

TEST_CASE("TTA+Ens parts") {
  Rng rng(14);
  const EnsembleModel ens = random_conv_ensemble(5, 20);
  const auto inputs = random_inputs(rng, 5, 5);
  const PredictiveParts parts = tta_ens_parts(ens, inputs);

  std::vector<double> alea(parts.aleatoric.sigma.size(), 0.0);
  std::vector<GridTensor> plain;
  for (const auto& m : ens.members) {
    const auto preds = tta_predictions(*m, inputs);
    std::vector<double> mean, sd;
    loop_moments(preds, mean, sd);
    for (std::size_t i = 0; i < alea.size(); ++i) alea[i] += sd[i] / static_cast<double>(ens.size());
    plain.push_back(m->forward(inputs));
  }
  check_close(parts.aleatoric.sigma, alea, 1e-5);
  std::vector<double> mean, sd;
  loop_moments(plain, mean, sd);
  check_close(parts.epistemic.sigma, sd, 1e-5);
  check_close(parts.predictive.mu, mean, 1e-6);
  for (std::size_t i = 0; i < alea.size(); ++i) {
    CHECK(parts.predictive.sigma.values()[i] == parts.aleatoric.sigma.values()[i] + parts.epistemic.sigma.values()[i]);
  }
  CHECK(tta_ens_estimate(ens, inputs).sigma == parts.predictive.sigma);
}

TEST_CASE("Patches+Ens parts") {
  Rng rng(15);
  const EnsembleModel ens = random_conv_ensemble(3, 30);
  const auto inputs = random_inputs(rng, 6, 6);
  const PatchConfig cfg{4, 2};
  const PredictiveParts parts = patches_ens_parts(ens, inputs, cfg);
  std::vector<double> alea(parts.aleatoric.sigma.size(), 0.0);
  for (const auto& m : ens.members) {
    const UQEstimate p = patch_estimate(*m, inputs, cfg);
    for (std::size_t i = 0; i < alea.size(); ++i) alea[i] += p.sigma.values()[i] / 3.0;
  }
  check_close(parts.aleatoric.sigma, alea, 1e-5);
  for (std::size_t i = 0; i < alea.size(); ++i) {
    CHECK(parts.predictive.sigma.values()[i] == parts.aleatoric.sigma.values()[i] + parts.epistemic.sigma.values()[i]);
  }
}

TEST_CASE("CUB") {
  std::vector<GridTensor> same(4, GridTensor(2, 2, 1, 3.0f));
  const GridTensor flat = cub_sigma(same);
  for (float s : flat.values()) CHECK(s == 0.0f);
  std::vector<GridTensor> two{GridTensor(1, 1, 1, 1.0f), GridTensor(1, 1, 1, 3.0f)};
  CHECK(cub_sigma(two).values()[0] == 1.0f);

  Rng rng(16);
  std::vector<GridTensor> stack;
  for (int i = 0; i < 7; ++i) stack.push_back(random_grid(rng, 3, 4, 8));
  std::vector<double> mean, sd;
  loop_moments(stack, mean, sd);
  check_close(cub_sigma(stack), sd, 1e-5);
  const auto est = cub_estimate(stack);
  REQUIRE(est.size() == 7);
  CHECK(est[3].mu == stack[3]);
  CHECK(est[3].sigma == est[0].sigma);
  CHECK_THROWS_AS(cub_sigma(std::vector<GridTensor>(1, stack[0])), InvalidArgument);
}

TEST_CASE("estimate files round trip") {
  const auto dir = scratch_dir("estimate_io");
  Rng rng(17);
  const UQEstimate est = patch_estimate(random_conv_model(3), random_inputs(rng, 6, 6), {4, 2});
  write_estimate(est, dir / "e", {{"horizon_minutes", "60"}});
  const UQEstimate back = read_estimate(dir / "e");
  CHECK(back.mu == est.mu);
  CHECK(back.sigma == est.sigma);
  CHECK(back.kind == est.kind);
  CHECK(back.method == est.method);
  CHECK(back.pixel_counts == est.pixel_counts);

  UQEstimate bad = est;
  bad.sigma.values()[0] = -1.0f;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  CHECK(parse_uncertainty_kind(to_string(UncertaintyKind::Predictive)) == UncertaintyKind::Predictive);
  CHECK_THROWS_AS(parse_uncertainty_kind("total"), FormatError);
}
