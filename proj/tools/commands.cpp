#include "commands.hpp"

#include "svg.hpp"

#include "gridcal/checkpoint.hpp"
#include "gridcal/conformal.hpp"
#include "gridcal/error.hpp"
#include "gridcal/estimators.hpp"
#include "gridcal/metrics.hpp"
#include "gridcal/models.hpp"
#include "gridcal/outlier.hpp"
#include "gridcal/stats.hpp"
#include "gridcal/synth.hpp"
#include "gridcal/tensor_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

namespace fs = std::filesystem;

namespace gridcal::cli {

namespace {

using KeyValues = std::map<std::string, std::string>;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

KeyValues read_key_values(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing input file " + path.string());
  KeyValues kv;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(path.string() + ": expected 'key = value', got '" + line + "'");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::string key_values_text(const std::vector<std::pair<std::string, std::string>>& entries) {
  std::string out;
  for (const auto& [k, v] : entries) out += k + " = " + v + "\n";
  return out;
}

const std::string& need(const KeyValues& kv, const std::string& key, const fs::path& source) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw FormatError(source.string() + ": missing key '" + key + "'");
  return it->second;
}

std::size_t to_size(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(text, &used);
    if (used != text.size() || text.find('-') != std::string::npos) throw std::invalid_argument(text);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw FormatError("bad " + what + " '" + text + "'");
  }
}

double to_double(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw FormatError("bad " + what + " '" + text + "'");
  }
}

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) parts.push_back(trim(item));
  return parts;
}

// Shortest text that reads back to the same double.
std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void require_dir(const std::string& path, const std::string& what) {
  if (path.empty()) throw InvalidArgument("--" + what + " is required");
  if (!fs::is_directory(path)) throw IoError(what + " directory '" + path + "' does not exist");
}

void prepare_out(const std::string& out) {
  if (out.empty()) throw InvalidArgument("--out is required");
  fs::create_directories(out);
}

std::size_t horizon_index(std::size_t minutes) {
  for (std::size_t i = 0; i < kTargetFrames; ++i) {
    if (kTargetOffsets[i] * 5 == minutes) return i;
  }
  throw InvalidArgument("horizon must be one of 5, 10, 15, 30, 45, 60 minutes, got " + std::to_string(minutes));
}

SplitScheme parse_split(const std::string& text) {
  const auto parts = split_list(text, ',');
  if (parts.size() != 3) throw InvalidArgument("--split expects 'train,val,test' day counts, got '" + text + "'");
  return {to_size(parts[0], "train days"), to_size(parts[1], "val days"), to_size(parts[2], "test days")};
}

ShiftSpec parse_shift(const std::string& text) {
  const auto parts = split_list(text, ',');
  if (parts.size() != 7) {
    throw InvalidArgument("--shift expects 'kind,row,col,height,width,onset_day,magnitude', got '" + text + "'");
  }
  ShiftSpec s;
  s.kind = parse_shift_kind(parts[0]);
  s.region = {to_size(parts[1], "shift row"), to_size(parts[2], "shift col"), to_size(parts[3], "shift height"),
              to_size(parts[4], "shift width")};
  s.onset_day = to_size(parts[5], "shift onset");
  s.magnitude = to_double(parts[6], "shift magnitude");
  return s;
}

// What train leaves next to the checkpoints so later commands agree on the
// split and horizon.
struct TrainingInfo {
  SplitScheme split;
  std::size_t horizon_minutes = 60;
  std::size_t horizon = kTargetFrames - 1;
};

constexpr const char* kTrainingFile = "training.txt";

TrainingInfo read_training_info(const fs::path& model_dir) {
  const fs::path path = model_dir / kTrainingFile;
  const KeyValues kv = read_key_values(path);
  TrainingInfo info;
  info.split = parse_split(need(kv, "split", path));
  info.horizon_minutes = to_size(need(kv, "horizon_minutes", path), "horizon");
  info.horizon = horizon_index(info.horizon_minutes);
  return info;
}

SynthDataset load_data(const std::string& dir) {
  require_dir(dir, "data");
  return read_dataset(dir);
}

EnsembleModel load_members(const std::string& dir, std::size_t keep) {
  require_dir(dir, "model");
  EnsembleModel ens = load_ensemble(dir);
  if (keep > 0) {
    if (keep > ens.size()) {
      throw InvalidArgument("--members " + std::to_string(keep) + " exceeds the " + std::to_string(ens.size()) +
                            " trained members");
    }
    ens.members.resize(keep);
    ens.member_seeds.resize(keep);
  }
  return ens;
}

std::vector<WindowRef> part_windows(const DataSplit& split, const std::string& part) {
  if (part == "train") return split.train;
  if (part == "val") return split.val;
  if (part == "test") return split.test;
  throw InvalidArgument("unknown split part '" + part + "' (expected train, val or test)");
}

const std::vector<std::string> kMethods = {"ens", "mcbn", "tta", "patches", "tta-ens", "patches-ens", "cub"};

void check_method(const std::string& method) {
  if (std::find(kMethods.begin(), kMethods.end(), method) == kMethods.end()) {
    throw InvalidArgument("unknown method '" + method + "' (expected ens|mcbn|tta|patches|tta-ens|patches-ens|cub)");
  }
}

// Runs one UQ method over a list of samples.
struct MethodRunner {
  std::string method;
  const EnsembleModel* ens = nullptr;
  PatchConfig patch;
  std::vector<std::vector<BatchStatistics>> mcbn_stats;

  struct Output {
    std::vector<UQEstimate> estimates;
    // Components of the combined methods; empty otherwise.
    std::vector<GridTensor> alea;
    std::vector<GridTensor> epi;
  };

  const Predictor& first() const { return *ens->members.front(); }

  Output run(const std::vector<std::vector<GridTensor>>& inputs) const {
    Output out;
    if (method == "cub") {
      std::vector<GridTensor> preds;
      for (const auto& in : inputs) preds.push_back(forward(first(), in));
      out.estimates = cub_estimate(preds);
      return out;
    }
    for (const auto& in : inputs) {
      if (method == "ens") {
        out.estimates.push_back(ensemble_estimate(*ens, in));
      } else if (method == "mcbn") {
        out.estimates.push_back(mcbn_estimate(first(), in, mcbn_stats));
      } else if (method == "tta") {
        out.estimates.push_back(tta_estimate(first(), in));
      } else if (method == "patches") {
        out.estimates.push_back(patch_estimate(first(), in, patch));
      } else {
        PredictiveParts parts = method == "tta-ens" ? tta_ens_parts(*ens, in) : patches_ens_parts(*ens, in, patch);
        out.alea.push_back(parts.aleatoric.sigma);
        out.epi.push_back(parts.epistemic.sigma);
        out.estimates.push_back(std::move(parts.predictive));
      }
    }
    return out;
  }
};

MethodRunner make_runner(const std::string& method, const EnsembleModel& ens, const SynthDataset& data,
                         const DataSplit& split, std::size_t patch_size, std::size_t stride, std::size_t passes,
                         std::uint64_t seed) {
  check_method(method);
  MethodRunner r;
  r.method = method;
  r.ens = &ens;
  r.patch = {patch_size, stride};
  if (method == "patches" || method == "patches-ens") {
    const Shape shape = data.days.front().frame_shape();
    r.patch.validate(shape.height, shape.width);
  }
  if (method == "mcbn") {
    WindowSource train(data.days, split.train);
    McbnConfig cfg;
    cfg.passes = passes;
    cfg.seed = seed;
    r.mcbn_stats = draw_mcbn_statistics(*ens.members.front(), train, cfg);
  }
  return r;
}

void write_csv_text(const fs::path& path, const std::string& text) { write_text_file(path, text); }

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing input file " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(split_list(line, ','));
  }
  if (rows.empty()) throw FormatError(path.string() + ": empty CSV");
  return rows;
}

std::size_t column(const std::vector<std::string>& header, const std::string& name, const fs::path& path) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw FormatError(path.string() + ": no column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

struct EstimateStacks {
  std::vector<GridTensor> mu, sigma, truth;
  KeyValues meta;
};

EstimateStacks read_part(const fs::path& dir, const std::string& part) {
  EstimateStacks s;
  s.meta = read_key_values(dir / (part + ".meta"));
  for (const char* name : {"mu", "sigma", "truth"}) {
    const fs::path path = dir / (part + "_" + name + ".grt");
    if (!fs::exists(path)) throw IoError("missing input file " + path.string());
  }
  s.mu = read_stack(dir / (part + "_mu.grt"));
  s.sigma = read_stack(dir / (part + "_sigma.grt"));
  s.truth = read_stack(dir / (part + "_truth.grt"));
  if (s.mu.size() != s.sigma.size() || s.mu.size() != s.truth.size()) {
    throw ShapeError(part + " stacks hold different sample counts");
  }
  if (s.mu.empty()) throw InvalidArgument(part + " estimates are empty");
  for (std::size_t i = 0; i < s.mu.size(); ++i) {
    require_same_shape(s.mu[i], s.sigma[i], "estimate sigma");
    require_same_shape(s.mu[i], s.truth[i], "estimate truth");
  }
  return s;
}

enum class MaskMode { None, Zero, Both };

MaskMode parse_mask(const std::string& text, bool allow_both) {
  if (text == "none") return MaskMode::None;
  if (text == "zero") return MaskMode::Zero;
  if (allow_both && text == "both") return MaskMode::Both;
  throw InvalidArgument("--mask must be zero" + std::string(allow_both ? ", none or both" : " or none") + ", got '" +
                        text + "'");
}

} // namespace

void cmd_synth(const SynthOptions& o) {
  prepare_out(o.out);
  CityConfig cfg;
  cfg.height = o.height;
  cfg.width = o.width;
  cfg.n_arterials = o.arterials;
  cfg.n_side_roads = o.side_roads;
  cfg.weekday_weekend_ratio = o.weekend_ratio;
  cfg.seed = o.seed;
  std::vector<ShiftSpec> shifts;
  for (const auto& s : o.shifts) shifts.push_back(parse_shift(s));
  if (o.days == 0) throw InvalidArgument("--days must be positive");
  const SynthDataset data = generate(cfg, o.days, shifts);
  write_dataset(data, o.out);
}

void cmd_train(const TrainOptions& o) {
  const SynthDataset data = load_data(o.data);
  prepare_out(o.out);
  const SplitScheme scheme = parse_split(o.split);
  const DataSplit split = train_val_test_split(data.n_days(), scheme);
  if (o.every == 0) throw InvalidArgument("--every must be positive");
  WindowSource train_data(data.days, subsample(split.train, o.every));

  std::map<std::string, std::string> model_cfg;
  if (o.model == "conv-bn") model_cfg["hidden"] = std::to_string(o.hidden);
  make_predictor(o.model, model_cfg);  // validates the kind before training

  TrainConfig tc;
  tc.epochs = o.epochs;
  tc.batch_size = o.batch_size;
  tc.seed = o.seed;
  tc.horizon = horizon_index(o.horizon);
  tc.learning_rate = o.learning_rate > 0.0 ? o.learning_rate : (o.model == "conv-bn" ? 2.0 : 0.5);
  std::vector<TrainResult> traces;
  EnsembleModel ens = train_ensemble([&] { return make_predictor(o.model, model_cfg); }, train_data, tc, o.members,
                                     &traces);
  save_ensemble(ens, o.out);

  std::ostringstream loss;
  loss.precision(10);
  loss << "member,epoch,loss\n";
  for (std::size_t m = 0; m < traces.size(); ++m) {
    for (std::size_t e = 0; e < traces[m].loss_trace.size(); ++e) {
      loss << m << ',' << e << ',' << traces[m].loss_trace[e] << '\n';
    }
  }
  write_csv_text(fs::path(o.out) / "loss.csv", loss.str());
  write_text_file(fs::path(o.out) / kTrainingFile,
                  key_values_text({{"model", o.model},
                                   {"members", std::to_string(o.members)},
                                   {"split", o.split},
                                   {"horizon_minutes", std::to_string(o.horizon)},
                                   {"learning_rate", fmt(tc.learning_rate)},
                                   {"training_windows", std::to_string(train_data.size())}}));
}

void cmd_estimate(const EstimateOptions& o) {
  const SynthDataset data = load_data(o.data);
  const EnsembleModel ens = load_members(o.model, o.members);
  const TrainingInfo info = read_training_info(o.model);
  check_method(o.method);
  if (o.every == 0) throw InvalidArgument("--every must be positive");
  const std::vector<std::string> parts = split_list(o.parts, ',');
  if (parts.empty()) throw InvalidArgument("--parts needs at least one of val, test");
  prepare_out(o.out);
  const DataSplit split = train_val_test_split(data.n_days(), info.split);
  const MethodRunner runner = make_runner(o.method, ens, data, split, o.patch_size, o.stride, o.passes, o.seed);

  for (const auto& part : parts) {
    const std::vector<WindowRef> refs = subsample(part_windows(split, part), o.every);
    if (refs.empty()) throw InvalidArgument("no " + part + " windows left after --every");
    WindowSource source(data.days, refs);
    std::vector<std::vector<GridTensor>> inputs;
    std::vector<GridTensor> truth;
    std::ostringstream windows;
    windows << "sample,day,start\n";
    for (std::size_t i = 0; i < source.size(); ++i) {
      SampleSequence s = source.sample(i);
      truth.push_back(s.targets[info.horizon]);
      inputs.push_back(std::move(s.inputs));
      windows << i << ',' << refs[i].day << ',' << refs[i].start << '\n';
    }
    const MethodRunner::Output est = runner.run(inputs);
    std::vector<GridTensor> mu, sigma;
    for (const auto& e : est.estimates) {
      e.validate();
      mu.push_back(e.mu);
      sigma.push_back(e.sigma);
    }
    const fs::path stem = fs::path(o.out) / part;
    write_stack(mu, stem.string() + "_mu.grt");
    write_stack(sigma, stem.string() + "_sigma.grt");
    write_stack(truth, stem.string() + "_truth.grt");
    if (!est.alea.empty()) {
      write_stack(est.alea, stem.string() + "_sigma_alea.grt");
      write_stack(est.epi, stem.string() + "_sigma_epi.grt");
    }
    write_csv_text(stem.string() + "_windows.csv", windows.str());
    const UQEstimate& first = est.estimates.front();
    write_text_file(stem.string() + ".meta",
                    key_values_text({{"method", o.method},
                                     {"kind", to_string(first.kind)},
                                     {"members", std::to_string(ens.size())},
                                     {"sample_count", std::to_string(first.sample_count)},
                                     {"samples", std::to_string(mu.size())},
                                     {"horizon_minutes", std::to_string(info.horizon_minutes)},
                                     {"part", part}}));
  }
}

void cmd_calibrate(const CalibrateOptions& o) {
  require_dir(o.estimates, "estimates");
  const MaskMode mode = parse_mask(o.mask, false);
  const EstimateStacks val = read_part(o.estimates, "val");
  const EstimateStacks test = read_part(o.estimates, "test");
  require_same_shape(val.mu.front(), test.mu.front(), "calibration vs test grid");
  prepare_out(o.out);

  CalibrationSet cal(val.mu.front().shape());
  for (std::size_t i = 0; i < val.mu.size(); ++i) cal.add(conformity_scores(val.truth[i], val.mu[i], val.sigma[i]));
  const QuantileGrid q = calibrate_qhat(cal, o.alpha, o.pooled);
  const BetaLaw law = nominal_coverage_law(cal.size(), o.alpha);

  ActivityMask mask;
  if (mode == MaskMode::Zero) mask = activity_mask(test.truth, ChannelLayout::interleaved());
  const ActivityMask* mp = mode == MaskMode::Zero ? &mask : nullptr;

  std::vector<GridTensor> lower, upper;
  std::vector<CoverageRow> rows;
  double total = 0.0;
  for (std::size_t i = 0; i < test.mu.size(); ++i) {
    const PredictionInterval iv = build_interval(test.mu[i], test.sigma[i], q.qhat, o.alpha);
    const GroupCoverage g = group_coverage(iv, test.truth[i], ChannelLayout::interleaved(), mp);
    rows.push_back({i, "all", g.all});
    if (g.volume) rows.push_back({i, "volume", *g.volume});
    if (g.speed) rows.push_back({i, "speed", *g.speed});
    total += g.all;
    lower.push_back(iv.lower);
    upper.push_back(iv.upper);
  }
  const fs::path out(o.out);
  write_tensor(q.qhat, out / "qhat.grt");
  write_stack(lower, out / "test_lower.grt");
  write_stack(upper, out / "test_upper.grt");
  write_csv_text(out / "coverage.csv", coverage_csv(rows));
  write_text_file(out / "calibration.meta",
                  key_values_text({{"alpha", fmt(o.alpha)},
                                   {"calibration_size", std::to_string(cal.size())},
                                   {"rank", std::to_string(q.rank)},
                                   {"pooled", q.pooled ? "true" : "false"},
                                   {"vacuous", q.vacuous ? "true" : "false"},
                                   {"mask", o.mask},
                                   {"beta_a", fmt(law.a)},
                                   {"beta_b", fmt(law.b)},
                                   {"beta_mean", fmt(law.mean)},
                                   {"degenerate", law.degenerate ? "true" : "false"},
                                   {"mean_coverage", fmt(total / static_cast<double>(test.mu.size()))},
                                   {"method", test.meta.count("method") ? test.meta.at("method") : "unknown"}}));
}

void cmd_evaluate(const EvaluateOptions& o) {
  require_dir(o.estimates, "estimates");
  const MaskMode mode = parse_mask(o.mask, true);
  const EstimateStacks test = read_part(o.estimates, "test");
  std::vector<PredictionInterval> intervals;
  if (!o.calibration.empty()) {
    require_dir(o.calibration, "calibration");
    const auto lower = read_stack(fs::path(o.calibration) / "test_lower.grt");
    const auto upper = read_stack(fs::path(o.calibration) / "test_upper.grt");
    if (lower.size() != test.mu.size() || upper.size() != test.mu.size()) {
      throw ShapeError("calibrated intervals do not match the test estimates");
    }
    for (std::size_t i = 0; i < lower.size(); ++i) {
      require_same_shape(lower[i], test.mu[i], "interval lower bound");
      require_same_shape(upper[i], test.mu[i], "interval upper bound");
      intervals.push_back({lower[i], upper[i], GridTensor(), 0.0});
    }
  }
  prepare_out(o.out);
  const std::string method = need(test.meta, "method", fs::path(o.estimates) / "test.meta");
  std::string csv = metric_csv_header();
  auto row = [&](const ActivityMask* mask) {
    MetricReport r = evaluate_metrics(test.mu, test.sigma, test.truth, intervals, mask);
    r.dataset = o.dataset;
    r.method = method;
    csv += metric_csv_row(r);
  };
  if (mode != MaskMode::Zero) row(nullptr);
  if (mode != MaskMode::None) {
    const ActivityMask mask = activity_mask(test.truth, ChannelLayout::interleaved());
    row(&mask);
  }
  write_csv_text(fs::path(o.out) / "metrics.csv", csv);
  std::cout << csv;
}

void cmd_outliers(const OutlierOptions& o) {
  const SynthDataset data = load_data(o.data);
  const EnsembleModel ens = load_members(o.model, o.members);
  const TrainingInfo info = read_training_info(o.model);
  if (o.method == "cub") throw InvalidArgument("cub shares one sigma across samples; pick another method");
  if (o.tau >= kFramesPerDay) throw InvalidArgument("--tau must be a frame index below 288");
  OutlierConfig cfg;
  cfg.epsilon = o.epsilon;
  if (o.rule == "at-most") {
    cfg.rule = OutlierRule::PValueAtMost;
  } else if (o.rule == "at-least") {
    cfg.rule = OutlierRule::PValueAtLeast;
  } else {
    throw InvalidArgument("--rule must be at-most or at-least, got '" + o.rule + "'");
  }
  prepare_out(o.out);
  const DataSplit split = train_val_test_split(data.n_days(), info.split);
  const MethodRunner runner = make_runner(o.method, ens, data, split, o.patch_size, o.stride, o.passes, o.seed);

  // Windows whose target (at the trained horizon) lands within tau_window
  // frames of tau, for the training days and for every later day.
  const std::size_t lead = kInputFrames - 1 + kTargetOffsets[info.horizon];
  auto collect = [&](std::size_t first_day, std::size_t n_days) {
    std::vector<WindowRef> refs;
    for (std::size_t day = first_day; day < first_day + n_days; ++day) {
      const std::size_t lo = o.tau >= o.tau_window ? o.tau - o.tau_window : 0;
      for (std::size_t t = lo; t <= o.tau + o.tau_window; ++t) {
        if (t < lead || t - lead >= kWindowsPerDay) continue;
        refs.push_back({day, t - lead});
      }
    }
    return refs;
  };
  const std::size_t n_train = info.split.train_days;
  const std::vector<WindowRef> train_refs = collect(0, n_train);
  const std::vector<WindowRef> test_refs = collect(n_train, data.n_days() - n_train);
  if (train_refs.size() < 2) throw InvalidArgument("outliers need at least two training windows at tau");
  if (test_refs.empty()) throw InvalidArgument("no test windows at tau");

  auto sigmas = [&](const std::vector<WindowRef>& refs) {
    WindowSource source(data.days, refs);
    std::vector<std::vector<GridTensor>> inputs;
    for (std::size_t i = 0; i < source.size(); ++i) inputs.push_back(source.sample(i).inputs);
    std::vector<GridTensor> out;
    for (auto& e : runner.run(inputs).estimates) out.push_back(std::move(e.sigma));
    return out;
  };
  const std::vector<GridTensor> train_sigma = sigmas(train_refs);
  const std::vector<GridTensor> test_sigma = sigmas(test_refs);
  const std::vector<OutlierReport> reports = detect_outliers(train_sigma, test_sigma, data.layout(), cfg);
  const OutlierShares shares = outlier_share(reports);

  const fs::path out(o.out);
  write_csv_text(out / "outliers.csv", outlier_csv(reports));
  const std::size_t pixels = reports.front().height * reports.front().width;
  std::ostringstream temporal;
  temporal.precision(10);
  temporal << "sample,day,start,share_pixel,share_volume,share_speed,shifted_flagged,shifted_pixels\n";
  for (std::size_t t = 0; t < reports.size(); ++t) {
    std::size_t flagged = 0, shifted = 0;
    for (std::size_t p = 0; p < pixels; ++p) {
      if (data.meta.shift_mask[p] == 0) continue;
      const ShiftSpec& spec = data.shifts[data.meta.shift_mask[p] - 1];
      if (test_refs[t].day < spec.onset_day) continue;
      ++shifted;
      flagged += reports[t].out_pixel[p];
    }
    temporal << t << ',' << test_refs[t].day << ',' << test_refs[t].start << ',' << shares.temporal_pixel[t] << ','
             << shares.temporal_vol[t] << ',' << shares.temporal_speed[t] << ',' << flagged << ',' << shifted << '\n';
  }
  write_csv_text(out / "out_temporal.csv", temporal.str());
  std::ostringstream spatial;
  spatial.precision(10);
  spatial << "row,col,share\n";
  std::vector<double> share_map(pixels);
  for (std::size_t p = 0; p < pixels; ++p) {
    share_map[p] = shares.spatial_pixel.values()[p];
    spatial << p / reports.front().width << ',' << p % reports.front().width << ',' << share_map[p] << '\n';
  }
  write_csv_text(out / "out_spatial.csv", spatial.str());
  write_tensor(shares.spatial_pixel, out / "out_spatial.grt");

  Series px{"pixel", {}, shares.temporal_pixel}, vol{"volume", {}, shares.temporal_vol},
      spd{"speed", {}, shares.temporal_speed};
  for (std::size_t t = 0; t < reports.size(); ++t) {
    const double x = static_cast<double>(t);
    px.x.push_back(x);
    vol.x.push_back(x);
    spd.x.push_back(x);
  }
  write_text_file(out / "out-temporal.svg",
                  svg_lines("Outlier share per test sample", "test sample", "share flagged", {px, vol, spd}));
  write_text_file(out / "out-spatial.svg", svg_heatmap("Outlier share per pixel", share_map, reports.front().height,
                                                       reports.front().width, 0.0, 1.0));
}

void cmd_report(const ReportOptions& o) {
  if (o.input.empty()) throw InvalidArgument("--input is required");
  if (o.bins == 0) throw InvalidArgument("--bins must be positive");
  const fs::path in(o.input);
  if (o.kind == "coverage") {
    require_dir(o.input, "input");
    const KeyValues meta = read_key_values(in / "calibration.meta");
    const auto rows = read_csv(in / "coverage.csv");
    const std::size_t gcol = column(rows.front(), "group", in / "coverage.csv");
    const std::size_t ccol = column(rows.front(), "coverage", in / "coverage.csv");
    std::vector<double> cov;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].at(gcol) == "all") cov.push_back(to_double(rows[i].at(ccol), "coverage"));
    }
    if (cov.empty()) throw InvalidArgument("coverage.csv has no 'all' rows");
    const double a = to_double(need(meta, "beta_a", in / "calibration.meta"), "beta_a");
    const double b = to_double(need(meta, "beta_b", in / "calibration.meta"), "beta_b");
    const bool degenerate = need(meta, "degenerate", in / "calibration.meta") == "true";
    prepare_out(o.out);

    // Bins span the observed coverages and the bulk of the Beta law.
    double lo = *std::min_element(cov.begin(), cov.end());
    double hi = *std::max_element(cov.begin(), cov.end());
    if (!degenerate) {
      const double mean = a / (a + b);
      const double sd = std::sqrt(a * b / ((a + b) * (a + b) * (a + b + 1.0)));
      lo = std::min(lo, mean - 4.0 * sd);
      hi = std::max(hi, mean + 4.0 * sd);
    }
    lo = std::max(0.0, lo);
    hi = std::min(1.0, hi);
    if (hi <= lo) {
      lo = std::max(0.0, lo - 0.05);
      hi = std::min(1.0, hi + 0.05);
    }
    const double width = (hi - lo) / static_cast<double>(o.bins);
    Bars bars;
    std::vector<std::size_t> counts(o.bins, 0);
    for (double c : cov) {
      const auto k = std::min<std::size_t>(o.bins - 1, static_cast<std::size_t>(std::max(0.0, (c - lo) / width)));
      ++counts[k];
    }
    std::ostringstream csv;
    csv.precision(10);
    csv << "bin_lo,bin_hi,count,density,beta_density\n";
    for (std::size_t k = 0; k <= o.bins; ++k) bars.edges.push_back(lo + width * static_cast<double>(k));
    for (std::size_t k = 0; k < o.bins; ++k) {
      const double density = static_cast<double>(counts[k]) / (static_cast<double>(cov.size()) * width);
      bars.height.push_back(density);
      const double mid = lo + width * (static_cast<double>(k) + 0.5);
      const double beta = degenerate ? 0.0 : stats::beta_pdf(mid, a, b);
      csv << bars.edges[k] << ',' << bars.edges[k + 1] << ',' << counts[k] << ',' << density << ',' << beta << '\n';
    }
    std::vector<Series> overlay;
    if (!degenerate) {
      Series curve{"Beta(" + fmt(a) + ", " + fmt(b) + ")", {}, {}};
      for (int i = 0; i <= 200; ++i) {
        const double x = lo + (hi - lo) * i / 200.0;
        curve.x.push_back(x);
        curve.y.push_back(x > 0.0 && x < 1.0 ? stats::beta_pdf(x, a, b) : 0.0);
      }
      overlay.push_back(curve);
    }
    write_csv_text(fs::path(o.out) / "coverage_hist.csv", csv.str());
    write_text_file(fs::path(o.out) / "coverage.svg",
                    svg_histogram("Empirical coverage per test sample", "coverage", bars, overlay));
  } else if (o.kind == "metrics") {
    const fs::path file = fs::is_directory(in) ? in / "metrics.csv" : in;
    const auto rows = read_csv(file);
    prepare_out(o.out);
    const auto& header = rows.front();
    const std::size_t mcol = column(header, "method", file);
    const std::size_t kcol = column(header, "masked", file);
    std::ostringstream svg;
    for (const char* metric : {"mse", "mean_sigma", "mpiw", "ence", "spearman", "spearman_pooled"}) {
      const std::size_t col = column(header, metric, file);
      std::vector<std::string> labels;
      std::vector<double> values;
      for (std::size_t i = 1; i < rows.size(); ++i) {
        labels.push_back(rows[i].at(mcol) + " (" + rows[i].at(kcol) + ")");
        const std::string& v = rows[i].at(col);
        values.push_back(v == "undefined" ? std::nan("") : to_double(v, metric));
      }
      write_text_file(fs::path(o.out) / ("metrics_" + std::string(metric) + ".svg"),
                      svg_bar_chart(metric, labels, values));
    }
  } else {
    throw InvalidArgument("report kind must be coverage or metrics, got '" + o.kind + "'");
  }
}

} // namespace gridcal::cli
