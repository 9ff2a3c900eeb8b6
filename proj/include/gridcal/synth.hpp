#pragma once

#include "gridcal/grid_tensor.hpp"
#include "gridcal/predictor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gridcal {

struct CityConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t n_arterials = 3;
  std::size_t n_side_roads = 8;
  // Hours of the two rush-hour peaks.
  double morning_peak = 8.0;
  double evening_peak = 17.5;
  // Mean weekday volume over mean weekend volume.
  double weekday_weekend_ratio = 1.5;
  // Log-scale sd of the multiplicative volume noise per road class.
  double arterial_noise = 0.30;
  double side_noise = 0.45;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class ShiftKind { VolumeDrop, PatternRegularization, VarianceIncrease };

std::string to_string(ShiftKind kind);
ShiftKind parse_shift_kind(const std::string& text);

struct PixelRect {
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  bool contains(std::size_t r, std::size_t c) const {
    return r >= row && r < row + height && c >= col && c < col + width;
  }
  bool overlaps(const PixelRect& o) const;
};

/// A regime change applied to every frame of day >= onset_day inside region.
///   volume-drop:             volume scaled by (1 - magnitude), magnitude in [0, 1]
///   pattern-regularization:  daily profile blended towards its mean by magnitude in [0, 1]
///   variance-increase:       log-noise sd scaled by (1 + magnitude)
struct ShiftSpec {
  PixelRect region;
  std::size_t onset_day = 0;
  ShiftKind kind = ShiftKind::VolumeDrop;
  double magnitude = 0.0;
};

enum class RoadClass : std::uint8_t { None = 0, Side = 1, Arterial = 2 };

struct CityMetadata {
  // Per pixel, row-major.
  std::vector<RoadClass> road_class;
  // Per pixel: 1 + index of the first shift covering it, 0 when unshifted.
  std::vector<std::uint8_t> shift_mask;
  // Per cell: log-scale volume noise sd (volume channels) and speed noise sd
  // in traffic units (speed channels), before any shift.
  GridTensor noise_level;
};

struct SynthDataset {
  CityConfig config;
  std::vector<ShiftSpec> shifts;
  std::vector<FrameStack> days;  // 288 x H x W x 8 each
  CityMetadata meta;

  ChannelLayout layout() const { return ChannelLayout::interleaved(4); }
  std::size_t n_days() const { return days.size(); }
};

/// Deterministic in (config, n_days, shifts). Shift kinds that overlap in
/// space are rejected.
SynthDataset generate(const CityConfig& config, std::size_t n_days, std::span<const ShiftSpec> shifts = {});

/// Hour of day (0..24) of frame t.
double frame_hour(std::size_t t);
bool is_weekend(std::size_t day);

// A window starts at frame `start` of `day`: inputs are frames start..start+11,
// targets start + 11 + {1, 2, 3, 6, 9, 12}. Windows never cross midnight.
struct WindowRef {
  std::size_t day = 0;
  std::size_t start = 0;
  bool operator==(const WindowRef&) const = default;
};

inline constexpr std::size_t kWindowSpan = kInputFrames + 12;
inline constexpr std::size_t kWindowsPerDay = kFramesPerDay - kWindowSpan + 1;

SampleSequence make_window(std::span<const FrameStack> days, const WindowRef& ref);

/// Lazily materialized windows over a set of day stacks.
class WindowSource final : public SampleSource {
public:
  WindowSource(std::span<const FrameStack> days, std::vector<WindowRef> refs);
  std::size_t size() const override { return refs_.size(); }
  SampleSequence sample(std::size_t i) const override { return make_window(days_, refs_[i]); }
  const std::vector<WindowRef>& refs() const { return refs_; }

private:
  std::span<const FrameStack> days_;
  std::vector<WindowRef> refs_;
};

struct SplitScheme {
  std::size_t train_days = 6;
  std::size_t val_days = 2;
  std::size_t test_days = 2;
};

struct DataSplit {
  std::vector<WindowRef> train;
  std::vector<WindowRef> val;  // feeds conformal calibration
  std::vector<WindowRef> test;
};

/// Consecutive day blocks in time order; every window of a day goes to the
/// split owning that day.
DataSplit train_val_test_split(std::size_t n_days, const SplitScheme& scheme);

/// Keeps every `step`-th window of `refs` starting at `offset`.
std::vector<WindowRef> subsample(std::span<const WindowRef> refs, std::size_t step, std::size_t offset = 0);

/// Windows of the given days whose 60-minute target falls on frame `tau`.
std::vector<WindowRef> windows_at_frame(std::size_t first_day, std::size_t n_days, std::size_t tau);

/// Directory layout: day_NNN.grt per day, road_class.grt, shift_mask.grt,
/// noise_level.grt and manifest.txt.
void write_dataset(const SynthDataset& data, const std::filesystem::path& dir);
SynthDataset read_dataset(const std::filesystem::path& dir);

std::string manifest_text(const SynthDataset& data);

} // namespace gridcal
