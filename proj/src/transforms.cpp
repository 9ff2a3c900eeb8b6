#include "gridcal/transforms.hpp"

#include "gridcal/error.hpp"

#include <algorithm>

namespace gridcal {

namespace {

GridTensor flip_columns(const GridTensor& t) {
  GridTensor out(t.shape());
  const std::size_t W = t.width(), C = t.channels();
  for (std::size_t h = 0; h < t.height(); ++h) {
    for (std::size_t w = 0; w < W; ++w) {
      std::copy_n(&t.values()[t.index(h, W - 1 - w, 0)], C, &out.values()[out.index(h, w, 0)]);
    }
  }
  return out;
}

GridTensor flip_rows(const GridTensor& t) {
  GridTensor out(t.shape());
  const std::size_t H = t.height(), row = t.width() * t.channels();
  for (std::size_t h = 0; h < H; ++h) {
    std::copy_n(&t.values()[(H - 1 - h) * row], row, &out.values()[h * row]);
  }
  return out;
}

// Counter-clockwise quarter turn: out(r, c) = in(c, n - 1 - r).
GridTensor rotate_quarter(const GridTensor& t) {
  const std::size_t n = t.height(), C = t.channels();
  GridTensor out(t.shape());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      std::copy_n(&t.values()[t.index(c, n - 1 - r, 0)], C, &out.values()[out.index(r, c, 0)]);
    }
  }
  return out;
}

GridTensor rotate_ccw(GridTensor t, int quarter_turns) {
  quarter_turns = ((quarter_turns % 4) + 4) % 4;
  if (quarter_turns == 2) {
    return flip_rows(flip_columns(t));
  }
  for (int i = 0; i < quarter_turns; ++i) t = rotate_quarter(t);
  return t;
}

int quarter_turns(Rotation r) { return (static_cast<int>(r) / 90) % 4; }

void check_square(const GridTensor& t, const TransformSpec& spec) {
  if (spec.needs_square() && t.height() != t.width()) {
    throw ShapeError("quarter-turn rotation needs a square tensor, got " + to_string(t.shape()) +
                     " (pad first)");
  }
}

// 3x3 probe with distinct values; the action of a group element on it is a
// faithful signature of that element.
GridTensor probe() {
  GridTensor p(3, 3, 1);
  for (std::size_t i = 0; i < 9; ++i) p.values()[i] = static_cast<float>(i);
  return p;
}

TransformSpec identify(const GridTensor& image) {
  const GridTensor p = probe();
  for (const auto& g : canonical_transforms()) {
    if (apply_transform(p, g) == image) return g;
  }
  throw Error("E_INTERNAL", "transform signature not in the dihedral group");
}

} // namespace

std::string to_string(const TransformSpec& spec) {
  std::string s;
  if (spec.flip_h) s += "hflip+";
  if (spec.flip_v) s += "vflip+";
  s += "rot" + std::to_string(static_cast<int>(spec.rotation));
  return s;
}

const std::array<TransformSpec, 8>& canonical_transforms() {
  static const std::array<TransformSpec, 8> elements = {{
      {false, false, Rotation::R360},
      {true, false, Rotation::R360},
      {false, true, Rotation::R360},
      {false, false, Rotation::R90},
      {false, false, Rotation::R180},
      {false, false, Rotation::R270},
      {false, true, Rotation::R90},
      {false, true, Rotation::R270},
  }};
  return elements;
}

GridTensor apply_transform(const GridTensor& t, const TransformSpec& spec) {
  check_square(t, spec);
  GridTensor out = t;
  if (spec.flip_h) out = flip_columns(out);
  if (spec.flip_v) out = flip_rows(out);
  return rotate_ccw(std::move(out), quarter_turns(spec.rotation));
}

GridTensor invert_transform(const GridTensor& t, const TransformSpec& spec) {
  check_square(t, spec);
  GridTensor out = rotate_ccw(t, -quarter_turns(spec.rotation));
  if (spec.flip_v) out = flip_rows(out);
  if (spec.flip_h) out = flip_columns(out);
  return out;
}

TransformSpec canonicalize(const TransformSpec& spec) { return identify(apply_transform(probe(), spec)); }

TransformSpec compose(const TransformSpec& first, const TransformSpec& second) {
  return identify(apply_transform(apply_transform(probe(), first), second));
}

TransformSpec inverse(const TransformSpec& spec) { return identify(invert_transform(probe(), spec)); }

GridTensor pad_to_square(const GridTensor& t, std::size_t target) {
  if (target < t.height() || target < t.width()) {
    throw InvalidArgument("pad_to_square: target " + std::to_string(target) +
                          " smaller than tensor " + to_string(t.shape()));
  }
  if (target == t.height() && target == t.width()) return t;
  GridTensor out(target, target, t.channels(), 0.0f);
  const std::size_t row = t.width() * t.channels();
  for (std::size_t h = 0; h < t.height(); ++h) {
    std::copy_n(&t.values()[h * row], row, &out.values()[out.index(h, 0, 0)]);
  }
  return out;
}

GridTensor unpad(const GridTensor& t, std::size_t height, std::size_t width) {
  if (height > t.height() || width > t.width()) {
    throw InvalidArgument("unpad: crop " + std::to_string(height) + "x" + std::to_string(width) +
                          " exceeds tensor " + to_string(t.shape()));
  }
  if (height == t.height() && width == t.width()) return t;
  GridTensor out(height, width, t.channels());
  const std::size_t row = width * t.channels();
  for (std::size_t h = 0; h < height; ++h) {
    std::copy_n(&t.values()[t.index(h, 0, 0)], row, &out.values()[h * row]);
  }
  return out;
}

} // namespace gridcal
