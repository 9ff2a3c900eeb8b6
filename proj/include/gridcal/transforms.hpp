#pragma once

#include "gridcal/grid_tensor.hpp"

#include <array>
#include <string>

namespace gridcal {

enum class Rotation { R90 = 90, R180 = 180, R270 = 270, R360 = 360 };

/// A spatially reversible augmentation: optional horizontal flip (mirror
/// columns), optional vertical flip (mirror rows), then a counter-clockwise
/// quarter-turn rotation. Channels are never permuted.
struct TransformSpec {
  bool flip_h = false;
  bool flip_v = false;
  Rotation rotation = Rotation::R360;

  static TransformSpec identity() { return {}; }
  bool is_identity() const { return !flip_h && !flip_v && rotation == Rotation::R360; }
  bool needs_square() const { return rotation == Rotation::R90 || rotation == Rotation::R270; }

  bool operator==(const TransformSpec&) const = default;
};

std::string to_string(const TransformSpec& spec);

/// The eight dihedral group elements in enumeration order: identity, h-flip,
/// v-flip, rot90, rot180, rot270, v-flip+rot90, v-flip+rot270.
const std::array<TransformSpec, 8>& canonical_transforms();

/// Maps any (flip_h, flip_v, rotation) triple to the canonical element that
/// acts identically on square tensors.
TransformSpec canonicalize(const TransformSpec& spec);

/// Canonical element equal to applying `first` and then `second`.
TransformSpec compose(const TransformSpec& first, const TransformSpec& second);

/// Canonical element g with invert_transform(t, spec) == apply_transform(t, g).
TransformSpec inverse(const TransformSpec& spec);

GridTensor apply_transform(const GridTensor& t, const TransformSpec& spec);
GridTensor invert_transform(const GridTensor& t, const TransformSpec& spec);

/// Zero-pads into the top-left corner of a target x target grid.
GridTensor pad_to_square(const GridTensor& t, std::size_t target);
/// Crops the top-left height x width block; the inverse of pad_to_square.
GridTensor unpad(const GridTensor& t, std::size_t height, std::size_t width);

} // namespace gridcal
