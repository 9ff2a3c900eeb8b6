#include "support.hpp"

#include "gridcal/error.hpp"
#include "gridcal/tensor_io.hpp"
#include "gridcal/transforms.hpp"

#include <doctest.h>

#include <fstream>

using namespace gridcal;
using gridcal::testing::random_grid;
using gridcal::testing::scratch_dir;

namespace {

GridTensor grid2x2(float a, float b, float c, float d) { return GridTensor(2, 2, 1, {a, b, c, d}); }

// Reference transform written independently: destination pixel (r, c) of the
// result reads source pixel src(r, c).
GridTensor naive_transform(const GridTensor& t, const TransformSpec& spec) {
  GridTensor cur = t;
  if (spec.flip_h) {
    GridTensor o(cur.shape());
    for (std::size_t r = 0; r < cur.height(); ++r)
      for (std::size_t c = 0; c < cur.width(); ++c)
        for (std::size_t k = 0; k < cur.channels(); ++k) o(r, c, k) = cur(r, cur.width() - 1 - c, k);
    cur = o;
  }
  if (spec.flip_v) {
    GridTensor o(cur.shape());
    for (std::size_t r = 0; r < cur.height(); ++r)
      for (std::size_t c = 0; c < cur.width(); ++c)
        for (std::size_t k = 0; k < cur.channels(); ++k) o(r, c, k) = cur(cur.height() - 1 - r, c, k);
    cur = o;
  }
  const int turns = static_cast<int>(spec.rotation) / 90 % 4;
  for (int q = 0; q < turns; ++q) {
    // Counter-clockwise: new(r, c) = old(c, W - 1 - r).
    GridTensor o(cur.width(), cur.height(), cur.channels());
    for (std::size_t r = 0; r < o.height(); ++r)
      for (std::size_t c = 0; c < o.width(); ++c)
        for (std::size_t k = 0; k < cur.channels(); ++k) o(r, c, k) = cur(c, cur.width() - 1 - r, k);
    cur = o;
  }
  return cur;
}

} // namespace

TEST_CASE("grid tensor basics") {
  GridTensor t(2, 3, 4, 1.5f);
  CHECK(t.size() == 24);
  CHECK(t.index(1, 2, 3) == 23);
  t(1, 0, 2) = 300.0f;
  CHECK_FALSE(t.in_traffic_range());
  CHECK(t.all_finite());
  CHECK_THROWS_AS(t.at(2, 0, 0), ShapeError);
  CHECK_THROWS_AS(GridTensor(2, 2, 1, std::vector<float>(3)), ShapeError);
}

TEST_CASE("identity transform leaves the tensor unchanged") {
  Rng rng(1);
  const GridTensor t = random_grid(rng, 4, 5, 3);
  CHECK(apply_transform(t, TransformSpec::identity()) == t);
  CHECK(invert_transform(t, TransformSpec::identity()) == t);
}

TEST_CASE("horizontal flip of a 2x2 grid") {
  const GridTensor t = grid2x2(1, 2, 3, 4);
  CHECK(apply_transform(t, {true, false, Rotation::R360}) == grid2x2(2, 1, 4, 3));
  CHECK(apply_transform(t, {false, true, Rotation::R360}) == grid2x2(3, 4, 1, 2));
}

TEST_CASE("rotation is counter-clockwise") {
  const GridTensor t = grid2x2(1, 2, 3, 4);
  CHECK(apply_transform(t, {false, false, Rotation::R90}) == grid2x2(2, 4, 1, 3));
}

TEST_CASE("four quarter turns give the original") {
  Rng rng(2);
  const GridTensor t = random_grid(rng, 3, 3, 2);
  GridTensor cur = t;
  for (int i = 0; i < 4; ++i) cur = apply_transform(cur, {false, false, Rotation::R90});
  CHECK(cur == t);
}

TEST_CASE("transforms match a naive implementation") {
  Rng rng(3);
  for (const auto& spec : canonical_transforms()) {
    const GridTensor t = random_grid(rng, 5, 5, 2);
    CHECK(apply_transform(t, spec) == naive_transform(t, spec));
  }
  // Non-canonical triples too.
  const GridTensor t = random_grid(rng, 4, 4, 1);
  const TransformSpec both{true, true, Rotation::R270};
  CHECK(apply_transform(t, both) == naive_transform(t, both));
}

TEST_CASE("round trips over the group") {
  Rng rng(4);
  const GridTensor t4 = random_grid(rng, 4, 4, 1);
  const TransformSpec hr{true, false, Rotation::R90};
  CHECK(invert_transform(apply_transform(t4, hr), hr) == t4);
  for (int trial = 0; trial < 20; ++trial) {
    const GridTensor t = random_grid(rng, 5, 5, 2);
    for (const auto& spec : canonical_transforms()) {
      CHECK(invert_transform(apply_transform(t, spec), spec) == t);
      CHECK(apply_transform(t, inverse(spec)) == invert_transform(t, spec));
    }
  }
  // Rotation by 180 and flips work on non-square grids.
  const GridTensor r = random_grid(rng, 3, 5, 2);
  for (const auto& spec : canonical_transforms()) {
    if (spec.needs_square()) {
      CHECK_THROWS_AS(apply_transform(r, spec), ShapeError);
    } else {
      CHECK(invert_transform(apply_transform(r, spec), spec) == r);
    }
  }
}

TEST_CASE("canonical transforms are distinct and closed under composition") {
  Rng rng(5);
  const GridTensor t = random_grid(rng, 4, 4, 1);
  const auto& g = canonical_transforms();
  CHECK(g[0].is_identity());
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t j = i + 1; j < g.size(); ++j) CHECK_FALSE(apply_transform(t, g[i]) == apply_transform(t, g[j]));
  }
  for (const auto& a : g) {
    for (const auto& b : g) {
      const TransformSpec ab = compose(a, b);
      CHECK(std::find(g.begin(), g.end(), ab) != g.end());
      CHECK(apply_transform(apply_transform(t, a), b) == apply_transform(t, ab));
    }
    CHECK(canonicalize(a) == a);
  }
}

TEST_CASE("pad to square") {
  GridTensor t(495, 436, 1, 7.0f);
  const GridTensor p = pad_to_square(t, 496);
  CHECK(p.height() == 496);
  CHECK(p.width() == 496);
  CHECK(p(494, 435, 0) == 7.0f);
  CHECK(p(495, 0, 0) == 0.0f);
  CHECK(p(0, 436, 0) == 0.0f);
  CHECK(p(0, 495, 0) == 0.0f);
  CHECK(unpad(p, 495, 436) == t);

  Rng rng(6);
  const GridTensor sq = random_grid(rng, 4, 4, 2);
  CHECK(pad_to_square(sq, 4) == sq);
  const GridTensor small = random_grid(rng, 3, 2, 2);
  CHECK(unpad(pad_to_square(small, 3), 3, 2) == small);
  CHECK_THROWS(pad_to_square(small, 2));
}

TEST_CASE("activity mask") {
  const ChannelLayout layout = ChannelLayout::interleaved(4);
  std::vector<GridTensor> frames(3, GridTensor(3, 3, 8));
  CHECK(activity_mask(frames, layout).count() == 0);

  frames[1](0, 0, layout.volume[0]) = 5.0f;
  const ActivityMask one = activity_mask(frames, layout);
  CHECK(one.count() == 2);
  CHECK(one(0, 0, layout.volume[0]));
  CHECK(one(0, 0, layout.speed[0]));

  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<GridTensor> fr;
    for (int i = 0; i < 4; ++i) {
      GridTensor g(5, 4, 8);
      for (float& v : g.values()) v = rng.uniform() < 0.1 ? static_cast<float>(1 + rng.index(50)) : 0.0f;
      fr.push_back(g);
    }
    const ActivityMask m = activity_mask(fr, layout);
    for (std::size_t r = 0; r < 5; ++r)
      for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t d = 0; d < 4; ++d) {
          bool any = false;
          for (const auto& g : fr) any = any || g(r, c, layout.volume[d]) != 0.0f;
          CHECK(m(r, c, layout.volume[d]) == any);
          CHECK(m(r, c, layout.speed[d]) == any);
        }
  }
}

TEST_CASE("channel layout validation") {
  ChannelLayout ok = ChannelLayout::interleaved(4);
  CHECK(ok.volume == std::vector<std::size_t>{0, 2, 4, 6});
  CHECK(ok.speed == std::vector<std::size_t>{1, 3, 5, 7});
  CHECK_NOTHROW(ok.validate(8));
  CHECK_THROWS_AS(ok.validate(10), InvalidArgument);
  ChannelLayout bad{{0, 1}, {1, 2}};
  CHECK_THROWS_AS(bad.validate(4), InvalidArgument);
}

TEST_CASE("tensor file round trip") {
  const auto dir = scratch_dir("tensor_io");
  Rng rng(8);
  const GridTensor t = random_grid(rng, 8, 8, 8, -10.0, 10.0);
  write_tensor(t, dir / "t.grt");
  CHECK(read_tensor(dir / "t.grt") == t);

  GridTensor bytes(3, 2, 8);
  for (float& v : bytes.values()) v = static_cast<float>(rng.index(256));
  write_tensor(bytes, dir / "u8.grt", DType::U8);
  CHECK(read_tensor(dir / "u8.grt") == bytes);
  CHECK(read_raw_tensor(dir / "u8.grt").dtype == DType::U8);

  std::vector<GridTensor> stack{random_grid(rng, 2, 3, 8), random_grid(rng, 2, 3, 8)};
  write_stack(stack, dir / "s.grt");
  CHECK(read_stack(dir / "s.grt") == stack);
}

TEST_CASE("tensor header layout") {
  RawTensor raw;
  raw.dtype = DType::U8;
  raw.dims = {2, 1};
  raw.u8 = {9, 10};
  std::vector<std::uint8_t> bytes;
  encode_tensor(raw, bytes);
  const std::vector<std::uint8_t> expected{'G', 'R', 'T', '1', 1, 0, 0, 2, 2, 0, 0, 0, 1, 0, 0, 0, 9, 10};
  CHECK(bytes == expected);
  CHECK(encoded_size(raw) == expected.size());
  std::size_t used = 0;
  CHECK(decode_tensor(bytes, used) == raw);
  CHECK(used == expected.size());
}

TEST_CASE("corrupt tensor files are rejected") {
  Rng rng(9);
  std::vector<std::uint8_t> bytes;
  encode_tensor(to_raw(random_grid(rng, 2, 2, 2)), bytes);
  std::size_t used = 0;

  auto wrong_magic = bytes;
  wrong_magic[0] = 'X';
  CHECK_THROWS_AS(decode_tensor(wrong_magic, used), FormatError);

  auto short_payload = bytes;
  short_payload.resize(bytes.size() - 3);
  CHECK_THROWS_AS(decode_tensor(short_payload, used), TruncationError);

  auto bad_dtype = bytes;
  bad_dtype[6] = 7;
  CHECK_THROWS_AS(decode_tensor(bad_dtype, used), FormatError);

  auto bad_version = bytes;
  bad_version[4] = 2;
  CHECK_THROWS_AS(decode_tensor(bad_version, used), FormatError);

  CHECK_THROWS_AS(read_tensor(std::filesystem::path("/nonexistent/x.grt")), IoError);
}

TEST_CASE("frame stack round trip") {
  const auto dir = scratch_dir("frame_stack");
  Rng rng(10);
  FrameStack s(5, Shape{3, 4, 8});
  for (std::size_t t = 0; t < 5; ++t) s.set_frame(t, random_grid(rng, 3, 4, 8, -20.0, 300.0));
  CHECK(s.frame(2).in_traffic_range());
  write_frame_stack(s, dir / "d.grt");
  CHECK(read_frame_stack(dir / "d.grt") == s);
}
