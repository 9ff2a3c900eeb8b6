#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gridcal {

inline constexpr float kTrafficMin = 0.0f;
inline constexpr float kTrafficMax = 255.0f;

struct Shape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::size_t size() const { return height * width * channels; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& shape);

/// Dense (height, width, channels) grid stored row-major with channels
/// innermost. Values are traffic quantities for data frames; estimates and
/// interval bounds reuse the same container and may leave [0, 255].
class GridTensor {
public:
  GridTensor() = default;
  GridTensor(std::size_t height, std::size_t width, std::size_t channels, float fill = 0.0f);
  GridTensor(std::size_t height, std::size_t width, std::size_t channels, std::vector<float> data);
  explicit GridTensor(Shape shape, float fill = 0.0f)
      : GridTensor(shape.height, shape.width, shape.channels, fill) {}

  std::size_t height() const { return shape_.height; }
  std::size_t width() const { return shape_.width; }
  std::size_t channels() const { return shape_.channels; }
  std::size_t size() const { return data_.size(); }
  const Shape& shape() const { return shape_; }
  bool empty() const { return data_.empty(); }

  std::size_t index(std::size_t h, std::size_t w, std::size_t c) const {
    return (h * shape_.width + w) * shape_.channels + c;
  }

  float& operator()(std::size_t h, std::size_t w, std::size_t c) { return data_[index(h, w, c)]; }
  float operator()(std::size_t h, std::size_t w, std::size_t c) const { return data_[index(h, w, c)]; }

  // Bounds-checked access.
  float at(std::size_t h, std::size_t w, std::size_t c) const;

  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }
  const std::vector<float>& data() const { return data_; }

  bool all_finite() const;
  // True when every value is finite and inside [0, 255].
  bool in_traffic_range() const;

  bool operator==(const GridTensor&) const = default;

private:
  Shape shape_;
  std::vector<float> data_;
};

void require_same_shape(const GridTensor& a, const GridTensor& b, const char* context);

/// Which channels carry volume and which carry speed. Index i of both lists
/// refers to the same heading.
struct ChannelLayout {
  std::vector<std::size_t> volume;
  std::vector<std::size_t> speed;

  // Interleaved volume/speed pairs for `n_directions` headings:
  // [vol_0, speed_0, vol_1, speed_1, ...].
  static ChannelLayout interleaved(std::size_t n_directions = 4);

  std::size_t n_directions() const { return volume.size(); }
  std::size_t channels() const { return volume.size() + speed.size(); }

  // Throws InvalidArgument when the lists overlap, differ in length, or do
  // not cover [0, channels).
  void validate(std::size_t channels) const;
};

class ActivityMask {
public:
  ActivityMask() = default;
  explicit ActivityMask(Shape shape, bool fill = false);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return mask_.size(); }
  bool operator()(std::size_t h, std::size_t w, std::size_t c) const {
    return mask_[(h * shape_.width + w) * shape_.channels + c] != 0;
  }
  bool active(std::size_t flat) const { return mask_[flat] != 0; }
  void set(std::size_t h, std::size_t w, std::size_t c, bool value) {
    mask_[(h * shape_.width + w) * shape_.channels + c] = value ? 1 : 0;
  }
  std::size_t count() const;

  bool operator==(const ActivityMask&) const = default;

private:
  Shape shape_;
  std::vector<std::uint8_t> mask_;
};

/// A volume cell is active iff it is nonzero in at least one frame; speed cells
/// inherit the state of the paired volume channel at the same pixel.
ActivityMask activity_mask(std::span<const GridTensor> frames, const ChannelLayout& layout);

inline constexpr std::size_t kInputFrames = 12;
inline constexpr std::size_t kTargetFrames = 6;
// Target offsets in 5-minute steps after the last input frame: 5, 10, 15, 30, 45, 60 min.
inline constexpr std::size_t kTargetOffsets[kTargetFrames] = {1, 2, 3, 6, 9, 12};
inline constexpr std::size_t kFramesPerDay = 288;

struct SampleSequence {
  std::vector<GridTensor> inputs;
  std::vector<GridTensor> targets;

  // Throws ShapeError unless there are 12 inputs, 6 targets and one shape.
  void validate() const;
  const Shape& shape() const { return inputs.front().shape(); }
};

/// Rank-4 (frames, height, width, channels) block of 8-bit traffic values.
/// One synthetic day is stored this way.
class FrameStack {
public:
  FrameStack() = default;
  FrameStack(std::size_t frames, Shape frame_shape);
  FrameStack(std::size_t frames, Shape frame_shape, std::vector<std::uint8_t> data);

  std::size_t frames() const { return frames_; }
  const Shape& frame_shape() const { return shape_; }
  std::span<const std::uint8_t> raw() const { return data_; }

  GridTensor frame(std::size_t t) const;
  std::span<const std::uint8_t> frame_bytes(std::size_t t) const;
  std::span<std::uint8_t> frame_bytes(std::size_t t);
  // Rounds to nearest and clamps to [0, 255].
  void set_frame(std::size_t t, const GridTensor& frame);

  bool operator==(const FrameStack&) const = default;

private:
  std::size_t frames_ = 0;
  Shape shape_;
  std::vector<std::uint8_t> data_;
};

} // namespace gridcal
