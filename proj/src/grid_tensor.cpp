#include "gridcal/grid_tensor.hpp"

#include "gridcal/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace gridcal {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << shape.height << "x" << shape.width << "x" << shape.channels;
  return os.str();
}

GridTensor::GridTensor(std::size_t height, std::size_t width, std::size_t channels, float fill)
    : shape_{height, width, channels}, data_(height * width * channels, fill) {}

GridTensor::GridTensor(std::size_t height, std::size_t width, std::size_t channels,
                       std::vector<float> data)
    : shape_{height, width, channels}, data_(std::move(data)) {
  if (data_.size() != shape_.size()) {
    throw ShapeError("grid tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + to_string(shape_));
  }
}

float GridTensor::at(std::size_t h, std::size_t w, std::size_t c) const {
  if (h >= shape_.height || w >= shape_.width || c >= shape_.channels) {
    throw ShapeError("grid tensor index out of range");
  }
  return data_[index(h, w, c)];
}

bool GridTensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

bool GridTensor::in_traffic_range() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) {
    return std::isfinite(v) && v >= kTrafficMin && v <= kTrafficMax;
  });
}

void require_same_shape(const GridTensor& a, const GridTensor& b, const char* context) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(context) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

ChannelLayout ChannelLayout::interleaved(std::size_t n_directions) {
  ChannelLayout layout;
  for (std::size_t d = 0; d < n_directions; ++d) {
    layout.volume.push_back(2 * d);
    layout.speed.push_back(2 * d + 1);
  }
  return layout;
}

void ChannelLayout::validate(std::size_t channels) const {
  if (volume.size() != speed.size()) {
    throw InvalidArgument("channel layout: volume and speed lists differ in length");
  }
  if (volume.size() + speed.size() != channels) {
    throw InvalidArgument("channel layout covers " + std::to_string(volume.size() + speed.size()) +
                          " channels, tensor has " + std::to_string(channels));
  }
  std::vector<int> seen(channels, 0);
  for (auto list : {&volume, &speed}) {
    for (std::size_t c : *list) {
      if (c >= channels || seen[c]++) {
        throw InvalidArgument("channel layout: index lists overlap or leave range");
      }
    }
  }
}

ActivityMask::ActivityMask(Shape shape, bool fill)
    : shape_(shape), mask_(shape.size(), fill ? 1 : 0) {}

std::size_t ActivityMask::count() const {
  return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), std::uint8_t{1}));
}

ActivityMask activity_mask(std::span<const GridTensor> frames, const ChannelLayout& layout) {
  if (frames.empty()) {
    throw InvalidArgument("activity_mask: empty frame list");
  }
  const Shape shape = frames.front().shape();
  layout.validate(shape.channels);
  for (const auto& f : frames) {
    if (f.shape() != shape) {
      throw ShapeError("activity_mask: frames differ in shape");
    }
  }
  ActivityMask mask(shape);
  for (std::size_t h = 0; h < shape.height; ++h) {
    for (std::size_t w = 0; w < shape.width; ++w) {
      for (std::size_t d = 0; d < layout.n_directions(); ++d) {
        const std::size_t vc = layout.volume[d];
        const bool active = std::any_of(frames.begin(), frames.end(),
                                        [&](const GridTensor& f) { return f(h, w, vc) != 0.0f; });
        mask.set(h, w, vc, active);
        mask.set(h, w, layout.speed[d], active);
      }
    }
  }
  return mask;
}

void SampleSequence::validate() const {
  if (inputs.size() != kInputFrames) {
    throw ShapeError("sample sequence needs " + std::to_string(kInputFrames) + " inputs, got " +
                     std::to_string(inputs.size()));
  }
  if (targets.size() != kTargetFrames) {
    throw ShapeError("sample sequence needs " + std::to_string(kTargetFrames) + " targets, got " +
                     std::to_string(targets.size()));
  }
  const Shape& s = inputs.front().shape();
  for (const auto& f : inputs) {
    if (f.shape() != s) throw ShapeError("sample sequence: input frames differ in shape");
  }
  for (const auto& f : targets) {
    if (f.shape() != s) throw ShapeError("sample sequence: target frames differ in shape");
  }
}

FrameStack::FrameStack(std::size_t frames, Shape frame_shape)
    : frames_(frames), shape_(frame_shape), data_(frames * frame_shape.size(), 0) {}

FrameStack::FrameStack(std::size_t frames, Shape frame_shape, std::vector<std::uint8_t> data)
    : frames_(frames), shape_(frame_shape), data_(std::move(data)) {
  if (data_.size() != frames * frame_shape.size()) {
    throw ShapeError("frame stack data length does not match its dimensions");
  }
}

std::span<const std::uint8_t> FrameStack::frame_bytes(std::size_t t) const {
  if (t >= frames_) throw ShapeError("frame index out of range");
  return std::span<const std::uint8_t>(data_).subspan(t * shape_.size(), shape_.size());
}

std::span<std::uint8_t> FrameStack::frame_bytes(std::size_t t) {
  if (t >= frames_) throw ShapeError("frame index out of range");
  return std::span<std::uint8_t>(data_).subspan(t * shape_.size(), shape_.size());
}

GridTensor FrameStack::frame(std::size_t t) const {
  auto bytes = frame_bytes(t);
  std::vector<float> values(bytes.begin(), bytes.end());
  return GridTensor(shape_.height, shape_.width, shape_.channels, std::move(values));
}

void FrameStack::set_frame(std::size_t t, const GridTensor& frame) {
  if (frame.shape() != shape_) throw ShapeError("frame stack: frame shape mismatch");
  auto out = frame_bytes(t);
  auto in = frame.values();
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (!std::isfinite(in[i])) throw InvalidArgument("frame stack: non-finite value");
    const float v = std::clamp(std::nearbyint(in[i]), kTrafficMin, kTrafficMax);
    out[i] = static_cast<std::uint8_t>(v);
  }
}

} // namespace gridcal
