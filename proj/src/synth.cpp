#include "gridcal/synth.hpp"

#include "gridcal/error.hpp"
#include "gridcal/parallel.hpp"
#include "gridcal/random.hpp"
#include "gridcal/tensor_io.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>

namespace gridcal {

namespace {

constexpr std::size_t kDirections = 4;
constexpr std::size_t kChannels = 2 * kDirections;
constexpr double kNoiseMemory = 0.8;  // AR(1) coefficient of the log-noise

// Headings used by roads of each orientation (two opposite headings each).
constexpr std::size_t kHorizontalHeadings[2] = {0, 2};
constexpr std::size_t kVerticalHeadings[2] = {1, 3};

struct Lane {
  std::size_t pixel = 0;
  std::size_t heading = 0;
  RoadClass road = RoadClass::None;
  double base_volume = 0.0;
  double free_flow = 0.0;
  double morning_weight = 1.0;
  double evening_weight = 1.0;
  double log_sd = 0.0;
  double speed_sd = 0.0;
};

struct City {
  std::vector<RoadClass> road_class;
  std::vector<Lane> lanes;
};

// Poisson(rate) quantile at u by sequential search; one uniform per draw
// keeps the random stream independent of the rate.
std::uint32_t poisson_inverse(double rate, double u) {
  if (rate <= 0.0) return 0;
  if (rate > 200.0) return static_cast<std::uint32_t>(std::lround(rate));
  double p = std::exp(-rate);
  double cdf = p;
  std::uint32_t k = 0;
  while (u > cdf && k < 1000) {
    ++k;
    p *= rate / k;
    cdf += p;
    if (p == 0.0 && cdf < u) break;
  }
  return k;
}

double bump(double hour, double centre, double width) {
  const double x = (hour - centre) / width;
  return std::exp(-0.5 * x * x);
}

double daily_profile(double hour, const Lane& lane, const CityConfig& cfg) {
  const double background = 0.03 + 0.5 * 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * (hour - 4.0) / 24.0));
  return background + lane.morning_weight * bump(hour, cfg.morning_peak, 1.0) +
         lane.evening_weight * bump(hour, cfg.evening_peak, 1.3);
}

City build_city(const CityConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, 1));
  const std::size_t h = cfg.height, w = cfg.width;
  std::vector<RoadClass> road(h * w, RoadClass::None);
  // Heading bitmask per pixel.
  std::vector<std::uint8_t> headings(h * w, 0);

  auto paint = [&](bool horizontal, std::size_t line, std::size_t from, std::size_t to, RoadClass cls) {
    const auto* hs = horizontal ? kHorizontalHeadings : kVerticalHeadings;
    for (std::size_t k = from; k < to; ++k) {
      const std::size_t p = horizontal ? line * w + k : k * w + line;
      road[p] = std::max(road[p], cls);
      headings[p] |= static_cast<std::uint8_t>((1u << hs[0]) | (1u << hs[1]));
    }
  };
  for (std::size_t a = 0; a < cfg.n_arterials; ++a) {
    const bool horizontal = a % 2 == 0;
    const std::size_t n = horizontal ? h : w;
    const std::size_t line = 1 + static_cast<std::size_t>(rng.index(n - 2));
    paint(horizontal, line, 0, horizontal ? w : h, RoadClass::Arterial);
  }
  for (std::size_t s = 0; s < cfg.n_side_roads; ++s) {
    const bool horizontal = rng.index(2) == 0;
    const std::size_t n = horizontal ? h : w;
    const std::size_t along = horizontal ? w : h;
    const std::size_t line = static_cast<std::size_t>(rng.index(n));
    const std::size_t len = std::max<std::size_t>(2, along / 4 + static_cast<std::size_t>(rng.index(along / 4 + 1)));
    const std::size_t from = static_cast<std::size_t>(rng.index(along - std::min(len, along) + 1));
    paint(horizontal, line, from, std::min(along, from + len), RoadClass::Side);
  }

  City city;
  city.road_class = road;
  for (std::size_t p = 0; p < h * w; ++p) {
    for (std::size_t d = 0; d < kDirections; ++d) {
      if (!(headings[p] & (1u << d))) continue;
      Lane lane;
      lane.pixel = p;
      lane.heading = d;
      lane.road = road[p];
      const bool arterial = road[p] == RoadClass::Arterial;
      lane.base_volume = arterial ? rng.uniform(15.0, 30.0) : rng.uniform(2.0, 6.0);
      lane.free_flow = arterial ? rng.uniform(170.0, 210.0) : rng.uniform(90.0, 130.0);
      lane.morning_weight = rng.uniform(0.5, 1.5);
      lane.evening_weight = rng.uniform(0.5, 1.5);
      const double spread = rng.uniform(0.6, 1.4);
      lane.log_sd = (arterial ? cfg.arterial_noise : cfg.side_noise) * spread;
      lane.speed_sd = (arterial ? 15.0 : 20.0) * spread;
      city.lanes.push_back(lane);
    }
  }
  return city;
}

void validate_shifts(const CityConfig& cfg, std::size_t n_days, std::span<const ShiftSpec> shifts) {
  for (std::size_t i = 0; i < shifts.size(); ++i) {
    const ShiftSpec& s = shifts[i];
    if (s.region.height == 0 || s.region.width == 0 || s.region.row + s.region.height > cfg.height ||
        s.region.col + s.region.width > cfg.width) {
      throw InvalidArgument("shift " + std::to_string(i) + ": region outside the grid");
    }
    if (s.onset_day >= n_days) throw InvalidArgument("shift " + std::to_string(i) + ": onset after the last day");
    const bool bounded = s.kind != ShiftKind::VarianceIncrease;
    if (!(s.magnitude >= 0.0) || (bounded && s.magnitude > 1.0)) {
      throw InvalidArgument("shift " + std::to_string(i) + ": magnitude out of range");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (shifts[j].kind == s.kind && shifts[j].region.overlaps(s.region)) {
        throw InvalidArgument("shifts " + std::to_string(j) + " and " + std::to_string(i) + " (" + to_string(s.kind) +
                              ") overlap");
      }
    }
  }
}

FrameStack generate_day(const CityConfig& cfg, const City& city, std::size_t day, std::span<const ShiftSpec> shifts) {
  const Shape shape{cfg.height, cfg.width, kChannels};
  FrameStack stack(kFramesPerDay, shape);
  if (city.lanes.empty()) return stack;

  struct LaneDay {
    double drop = 1.0, regularize = 0.0, noise_scale = 1.0, profile_mean = 0.0;
  };
  std::vector<LaneDay> adj(city.lanes.size());
  for (std::size_t i = 0; i < city.lanes.size(); ++i) {
    const Lane& lane = city.lanes[i];
    const std::size_t r = lane.pixel / cfg.width, c = lane.pixel % cfg.width;
    for (const auto& s : shifts) {
      if (day < s.onset_day || !s.region.contains(r, c)) continue;
      switch (s.kind) {
      case ShiftKind::VolumeDrop: adj[i].drop = 1.0 - s.magnitude; break;
      case ShiftKind::PatternRegularization: adj[i].regularize = s.magnitude; break;
      case ShiftKind::VarianceIncrease: adj[i].noise_scale = 1.0 + s.magnitude; break;
      }
    }
    double m = 0.0;
    for (std::size_t t = 0; t < kFramesPerDay; ++t) m += daily_profile(frame_hour(t), lane, cfg);
    adj[i].profile_mean = m / static_cast<double>(kFramesPerDay);
  }

  const double day_factor = is_weekend(day) ? 1.0 / cfg.weekday_weekend_ratio : 1.0;
  Rng rng(derive_seed(cfg.seed, 1000 + day));
  std::vector<double> z(city.lanes.size());
  for (double& v : z) v = rng.normal();
  const double innovation = std::sqrt(1.0 - kNoiseMemory * kNoiseMemory);
  for (std::size_t t = 0; t < kFramesPerDay; ++t) {
    auto bytes = stack.frame_bytes(t);
    const double hour = frame_hour(t);
    for (std::size_t i = 0; i < city.lanes.size(); ++i) {
      const Lane& lane = city.lanes[i];
      const LaneDay& a = adj[i];
      // Every draw is made for every lane and frame so shifts never alter
      // the random stream.
      z[i] = kNoiseMemory * z[i] + innovation * rng.normal();
      const double speed_noise = rng.normal();

      const double profile = (1.0 - a.regularize) * daily_profile(hour, lane, cfg) + a.regularize * a.profile_mean;
      const double rush = std::max(bump(hour, cfg.morning_peak, 1.0), bump(hour, cfg.evening_peak, 1.3));
      const double sd = lane.log_sd * a.noise_scale * (0.4 + 1.6 * rush);
      const double rate = lane.base_volume * profile * day_factor * a.drop * std::exp(sd * z[i] - 0.5 * sd * sd);
      const double v = std::min(static_cast<double>(poisson_inverse(rate, rng.uniform())), 255.0);
      double s = 0.0;
      if (v > 0.0) {
        // Mean speed of v probe vehicles.
        const double congestion = std::min(rate / 60.0, 1.0);
        s = std::clamp(std::round(lane.free_flow * (1.0 - 0.45 * congestion) + lane.speed_sd * speed_noise / std::sqrt(v)),
                       1.0, 255.0);
      }
      const std::size_t base = lane.pixel * kChannels + 2 * lane.heading;
      bytes[base] = static_cast<std::uint8_t>(v);
      bytes[base + 1] = static_cast<std::uint8_t>(s);
    }
  }
  return stack;
}

std::string format_double(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

} // namespace

void CityConfig::validate() const {
  if (height < 3 || width < 3) throw InvalidArgument("city grid must be at least 3x3");
  if (!(weekday_weekend_ratio > 1.0)) throw InvalidArgument("weekday/weekend ratio must exceed 1");
  if (!(arterial_noise > 0.0) || !(side_noise > 0.0)) throw InvalidArgument("noise scales must be positive");
  if (!(morning_peak >= 0.0 && morning_peak < 24.0 && evening_peak >= 0.0 && evening_peak < 24.0)) {
    throw InvalidArgument("rush-hour peaks must be hours in [0, 24)");
  }
}

std::string to_string(ShiftKind kind) {
  switch (kind) {
  case ShiftKind::VolumeDrop: return "volume-drop";
  case ShiftKind::PatternRegularization: return "pattern-regularization";
  case ShiftKind::VarianceIncrease: return "variance-increase";
  }
  return "unknown";
}

ShiftKind parse_shift_kind(const std::string& text) {
  if (text == "volume-drop") return ShiftKind::VolumeDrop;
  if (text == "pattern-regularization") return ShiftKind::PatternRegularization;
  if (text == "variance-increase") return ShiftKind::VarianceIncrease;
  throw InvalidArgument("unknown shift kind '" + text + "'");
}

bool PixelRect::overlaps(const PixelRect& o) const {
  return row < o.row + o.height && o.row < row + height && col < o.col + o.width && o.col < col + width;
}

double frame_hour(std::size_t t) { return 24.0 * static_cast<double>(t) / static_cast<double>(kFramesPerDay); }

// Day 0 is a Monday.
bool is_weekend(std::size_t day) { return day % 7 >= 5; }

SynthDataset generate(const CityConfig& config, std::size_t n_days, std::span<const ShiftSpec> shifts) {
  config.validate();
  if (n_days == 0) throw InvalidArgument("generate: n_days must be at least 1");
  validate_shifts(config, n_days, shifts);

  const City city = build_city(config);
  SynthDataset data;
  data.config = config;
  data.shifts.assign(shifts.begin(), shifts.end());
  data.days.resize(n_days);
  parallel_for(n_days, [&](std::size_t d) { data.days[d] = generate_day(config, city, d, shifts); });

  const std::size_t pixels = config.height * config.width;
  data.meta.road_class = city.road_class;
  data.meta.shift_mask.assign(pixels, 0);
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t i = 0; i < shifts.size(); ++i) {
      if (shifts[i].region.contains(p / config.width, p % config.width)) {
        data.meta.shift_mask[p] = static_cast<std::uint8_t>(std::min<std::size_t>(i + 1, 255));
        break;
      }
    }
  }
  data.meta.noise_level = GridTensor(config.height, config.width, kChannels);
  for (const Lane& lane : city.lanes) {
    data.meta.noise_level.values()[lane.pixel * kChannels + 2 * lane.heading] = static_cast<float>(lane.log_sd);
    data.meta.noise_level.values()[lane.pixel * kChannels + 2 * lane.heading + 1] = static_cast<float>(lane.speed_sd);
  }
  return data;
}

SampleSequence make_window(std::span<const FrameStack> days, const WindowRef& ref) {
  if (ref.day >= days.size()) throw InvalidArgument("window day " + std::to_string(ref.day) + " out of range");
  if (ref.start >= kWindowsPerDay) throw InvalidArgument("window start " + std::to_string(ref.start) + " out of range");
  const FrameStack& day = days[ref.day];
  SampleSequence s;
  s.inputs.reserve(kInputFrames);
  for (std::size_t t = 0; t < kInputFrames; ++t) s.inputs.push_back(day.frame(ref.start + t));
  s.targets.reserve(kTargetFrames);
  for (std::size_t k = 0; k < kTargetFrames; ++k) {
    s.targets.push_back(day.frame(ref.start + kInputFrames - 1 + kTargetOffsets[k]));
  }
  return s;
}

WindowSource::WindowSource(std::span<const FrameStack> days, std::vector<WindowRef> refs)
    : days_(days), refs_(std::move(refs)) {
  for (const auto& r : refs_) {
    if (r.day >= days_.size() || r.start >= kWindowsPerDay) throw InvalidArgument("window reference out of range");
  }
}

DataSplit train_val_test_split(std::size_t n_days, const SplitScheme& scheme) {
  if (scheme.train_days == 0 || scheme.val_days == 0 || scheme.test_days == 0) {
    throw InvalidArgument("every split needs at least one day");
  }
  const std::size_t needed = scheme.train_days + scheme.val_days + scheme.test_days;
  if (needed > n_days) {
    throw InvalidArgument("split needs " + std::to_string(needed) + " days, dataset has " + std::to_string(n_days));
  }
  DataSplit split;
  auto fill = [](std::vector<WindowRef>& out, std::size_t first, std::size_t count) {
    for (std::size_t d = first; d < first + count; ++d) {
      for (std::size_t s = 0; s < kWindowsPerDay; ++s) out.push_back({d, s});
    }
  };
  fill(split.train, 0, scheme.train_days);
  fill(split.val, scheme.train_days, scheme.val_days);
  fill(split.test, scheme.train_days + scheme.val_days, scheme.test_days);
  return split;
}

std::vector<WindowRef> subsample(std::span<const WindowRef> refs, std::size_t step, std::size_t offset) {
  if (step == 0) throw InvalidArgument("subsample step must be positive");
  std::vector<WindowRef> out;
  for (std::size_t i = offset; i < refs.size(); i += step) out.push_back(refs[i]);
  return out;
}

std::vector<WindowRef> windows_at_frame(std::size_t first_day, std::size_t n_days, std::size_t tau) {
  if (tau + 1 < kWindowSpan || tau >= kFramesPerDay) {
    throw InvalidArgument("frame " + std::to_string(tau) + " cannot be a 60-minute target within one day");
  }
  std::vector<WindowRef> out;
  for (std::size_t d = first_day; d < first_day + n_days; ++d) out.push_back({d, tau + 1 - kWindowSpan});
  return out;
}

std::string manifest_text(const SynthDataset& data) {
  const CityConfig& c = data.config;
  std::ostringstream out;
  out << "# synthetic city\n"
      << "height = " << c.height << '\n'
      << "width = " << c.width << '\n'
      << "n_arterials = " << c.n_arterials << '\n'
      << "n_side_roads = " << c.n_side_roads << '\n'
      << "morning_peak = " << format_double(c.morning_peak) << '\n'
      << "evening_peak = " << format_double(c.evening_peak) << '\n'
      << "weekday_weekend_ratio = " << format_double(c.weekday_weekend_ratio) << '\n'
      << "arterial_noise = " << format_double(c.arterial_noise) << '\n'
      << "side_noise = " << format_double(c.side_noise) << '\n'
      << "seed = " << c.seed << '\n'
      << "n_days = " << data.days.size() << '\n';
  for (const auto& s : data.shifts) {
    out << "shift = " << to_string(s.kind) << ' ' << s.region.row << ' ' << s.region.col << ' ' << s.region.height
        << ' ' << s.region.width << ' ' << s.onset_day << ' ' << format_double(s.magnitude) << '\n';
  }
  return out.str();
}

void write_dataset(const SynthDataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t d = 0; d < data.days.size(); ++d) {
    std::ostringstream name;
    name << "day_" << std::setw(3) << std::setfill('0') << d << ".grt";
    write_frame_stack(data.days[d], dir / name.str());
  }
  const std::size_t h = data.config.height, w = data.config.width;
  GridTensor road(h, w, 1), shift(h, w, 1);
  for (std::size_t p = 0; p < h * w; ++p) {
    road.values()[p] = static_cast<float>(data.meta.road_class[p]);
    shift.values()[p] = static_cast<float>(data.meta.shift_mask[p]);
  }
  write_tensor(road, dir / "road_class.grt", DType::U8);
  write_tensor(shift, dir / "shift_mask.grt", DType::U8);
  write_tensor(data.meta.noise_level, dir / "noise_level.grt");
  write_text_file(dir / "manifest.txt", manifest_text(data));
}

SynthDataset read_dataset(const std::filesystem::path& dir) {
  std::istringstream in(read_text_file(dir / "manifest.txt"));
  std::map<std::string, std::string> kv;
  SynthDataset data;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw FormatError("manifest line without '=': " + line);
    const std::string key = line.substr(0, eq), value = line.substr(eq + 3);
    if (key == "shift") {
      std::istringstream ss(value);
      std::string kind;
      ShiftSpec s;
      if (!(ss >> kind >> s.region.row >> s.region.col >> s.region.height >> s.region.width >> s.onset_day >>
            s.magnitude)) {
        throw FormatError("malformed shift line: " + line);
      }
      s.kind = parse_shift_kind(kind);
      data.shifts.push_back(s);
    } else {
      kv[key] = value;
    }
  }
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(std::string("manifest is missing '") + key + "'");
    return it->second;
  };
  CityConfig& c = data.config;
  c.height = std::stoull(get("height"));
  c.width = std::stoull(get("width"));
  c.n_arterials = std::stoull(get("n_arterials"));
  c.n_side_roads = std::stoull(get("n_side_roads"));
  c.morning_peak = std::stod(get("morning_peak"));
  c.evening_peak = std::stod(get("evening_peak"));
  c.weekday_weekend_ratio = std::stod(get("weekday_weekend_ratio"));
  c.arterial_noise = std::stod(get("arterial_noise"));
  c.side_noise = std::stod(get("side_noise"));
  c.seed = std::stoull(get("seed"));
  const std::size_t n_days = std::stoull(get("n_days"));

  const Shape frame{c.height, c.width, kChannels};
  for (std::size_t d = 0; d < n_days; ++d) {
    std::ostringstream name;
    name << "day_" << std::setw(3) << std::setfill('0') << d << ".grt";
    FrameStack day = read_frame_stack(dir / name.str());
    if (day.frames() != kFramesPerDay || day.frame_shape() != frame) {
      throw ShapeError(name.str() + ": expected " + std::to_string(kFramesPerDay) + " frames of " + to_string(frame));
    }
    data.days.push_back(std::move(day));
  }
  const GridTensor road = read_tensor(dir / "road_class.grt");
  const GridTensor shift = read_tensor(dir / "shift_mask.grt");
  for (float v : road.values()) data.meta.road_class.push_back(static_cast<RoadClass>(static_cast<int>(v)));
  for (float v : shift.values()) data.meta.shift_mask.push_back(static_cast<std::uint8_t>(v));
  data.meta.noise_level = read_tensor(dir / "noise_level.grt");
  return data;
}

} // namespace gridcal
