#include "gridcal/tensor_io.hpp"

#include "gridcal/error.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace gridcal {

namespace {

constexpr std::size_t kFixedHeader = 4 + 2 + 1 + 1;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::size_t element_size(DType d) { return d == DType::U8 ? 1 : 4; }

// Product of dims, or throws when it cannot be represented.
std::size_t checked_count(std::span<const std::uint32_t> dims) {
  std::size_t n = 1;
  for (std::uint32_t d : dims) {
    if (d != 0 && n > std::numeric_limits<std::size_t>::max() / 4 / d) {
      throw FormatError("tensor dimensions overflow");
    }
    n *= d;
  }
  return n;
}

std::uint32_t narrow_dim(std::size_t d) {
  if (d > std::numeric_limits<std::uint32_t>::max()) throw FormatError("dimension exceeds u32");
  return static_cast<std::uint32_t>(d);
}

} // namespace

std::size_t RawTensor::element_count() const { return checked_count(dims); }

std::size_t encoded_size(const RawTensor& t) {
  return kFixedHeader + 4 * t.dims.size() + t.element_count() * element_size(t.dtype);
}

void encode_tensor(const RawTensor& t, std::vector<std::uint8_t>& out) {
  if (t.dims.size() > 255) throw FormatError("tensor rank exceeds 255");
  const std::size_t n = t.element_count();
  const std::size_t have = t.dtype == DType::U8 ? t.u8.size() : t.f32.size();
  if (have != n) throw ShapeError("raw tensor payload does not match its dims");

  out.reserve(out.size() + encoded_size(t));
  out.insert(out.end(), std::begin(kTensorMagic), std::end(kTensorMagic));
  put_u16(out, kTensorVersion);
  out.push_back(static_cast<std::uint8_t>(t.dtype));
  out.push_back(static_cast<std::uint8_t>(t.dims.size()));
  for (std::uint32_t d : t.dims) put_u32(out, d);
  if (t.dtype == DType::U8) {
    out.insert(out.end(), t.u8.begin(), t.u8.end());
  } else {
    for (float v : t.f32) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
}

RawTensor decode_tensor(std::span<const std::uint8_t> bytes, std::size_t& consumed) {
  if (bytes.size() < kFixedHeader) throw TruncationError("tensor header truncated");
  if (std::memcmp(bytes.data(), kTensorMagic, 4) != 0) throw FormatError("bad magic bytes");
  const std::uint16_t version = get_u16(bytes.data() + 4);
  if (version != kTensorVersion) {
    throw FormatError("unsupported tensor format version " + std::to_string(version));
  }
  RawTensor t;
  const std::uint8_t dtype = bytes[6];
  if (dtype > 1) throw FormatError("unknown dtype code " + std::to_string(dtype));
  t.dtype = static_cast<DType>(dtype);
  const std::size_t rank = bytes[7];
  std::size_t pos = kFixedHeader;
  if (bytes.size() < pos + 4 * rank) throw TruncationError("tensor dims truncated");
  t.dims.resize(rank);
  for (std::size_t i = 0; i < rank; ++i, pos += 4) t.dims[i] = get_u32(bytes.data() + pos);

  const std::size_t n = checked_count(t.dims);
  const std::size_t payload = n * element_size(t.dtype);
  if (bytes.size() - pos < payload) {
    throw TruncationError("tensor payload truncated: header promises " + std::to_string(payload) +
                          " bytes, " + std::to_string(bytes.size() - pos) + " present");
  }
  if (t.dtype == DType::U8) {
    t.u8.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                bytes.begin() + static_cast<std::ptrdiff_t>(pos + payload));
  } else {
    t.f32.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      t.f32[i] = std::bit_cast<float>(get_u32(bytes.data() + pos + 4 * i));
    }
  }
  consumed = pos + payload;
  return t;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_text_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()),
                                                       text.size()));
}

RawTensor read_raw_tensor(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  std::size_t consumed = 0;
  RawTensor t = decode_tensor(bytes, consumed);
  if (consumed != bytes.size()) {
    throw FormatError(path.string() + ": " + std::to_string(bytes.size() - consumed) +
                      " trailing bytes after tensor payload");
  }
  return t;
}

void write_raw_tensor(const RawTensor& t, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  encode_tensor(t, bytes);
  write_file_bytes(path, bytes);
}

RawTensor to_raw(const GridTensor& t, DType dtype) {
  RawTensor raw;
  raw.dtype = dtype;
  raw.dims = {narrow_dim(t.height()), narrow_dim(t.width()), narrow_dim(t.channels())};
  if (dtype == DType::F32) {
    raw.f32 = t.data();
  } else {
    raw.u8.reserve(t.size());
    for (float v : t.values()) {
      if (!(v >= 0.0f && v <= 255.0f) || v != std::floor(v)) {
        throw InvalidArgument("value " + std::to_string(v) + " is not representable as u8");
      }
      raw.u8.push_back(static_cast<std::uint8_t>(v));
    }
  }
  return raw;
}

GridTensor grid_from_raw(const RawTensor& raw) {
  if (raw.dims.size() != 3) {
    throw ShapeError("expected a rank-3 grid tensor, got rank " + std::to_string(raw.dims.size()));
  }
  std::vector<float> data = raw.dtype == DType::F32 ? raw.f32
                                                    : std::vector<float>(raw.u8.begin(), raw.u8.end());
  return GridTensor(raw.dims[0], raw.dims[1], raw.dims[2], std::move(data));
}

GridTensor read_tensor(const std::filesystem::path& path) { return grid_from_raw(read_raw_tensor(path)); }

void write_tensor(const GridTensor& t, const std::filesystem::path& path, DType dtype) {
  write_raw_tensor(to_raw(t, dtype), path);
}

std::vector<GridTensor> read_stack(const std::filesystem::path& path) {
  const RawTensor raw = read_raw_tensor(path);
  if (raw.dims.size() != 4) {
    throw ShapeError(path.string() + ": expected a rank-4 stack, got rank " +
                     std::to_string(raw.dims.size()));
  }
  const std::size_t n = raw.dims[0];
  const Shape shape{raw.dims[1], raw.dims[2], raw.dims[3]};
  std::vector<GridTensor> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<float> data(shape.size());
    const std::size_t off = i * shape.size();
    if (raw.dtype == DType::F32) {
      std::copy_n(raw.f32.begin() + static_cast<std::ptrdiff_t>(off), shape.size(), data.begin());
    } else {
      std::copy_n(raw.u8.begin() + static_cast<std::ptrdiff_t>(off), shape.size(), data.begin());
    }
    out.emplace_back(shape.height, shape.width, shape.channels, std::move(data));
  }
  return out;
}

void write_stack(std::span<const GridTensor> frames, const std::filesystem::path& path, DType dtype) {
  if (frames.empty()) throw InvalidArgument("write_stack: no frames");
  const Shape shape = frames.front().shape();
  RawTensor raw;
  raw.dtype = dtype;
  raw.dims = {narrow_dim(frames.size()), narrow_dim(shape.height), narrow_dim(shape.width),
              narrow_dim(shape.channels)};
  for (const auto& f : frames) {
    if (f.shape() != shape) throw ShapeError("write_stack: frames differ in shape");
    RawTensor one = to_raw(f, dtype);
    if (dtype == DType::F32) {
      raw.f32.insert(raw.f32.end(), one.f32.begin(), one.f32.end());
    } else {
      raw.u8.insert(raw.u8.end(), one.u8.begin(), one.u8.end());
    }
  }
  write_raw_tensor(raw, path);
}

FrameStack read_frame_stack(const std::filesystem::path& path) {
  RawTensor raw = read_raw_tensor(path);
  if (raw.dims.size() != 4 || raw.dtype != DType::U8) {
    throw ShapeError(path.string() + ": expected a rank-4 u8 frame stack");
  }
  return FrameStack(raw.dims[0], Shape{raw.dims[1], raw.dims[2], raw.dims[3]}, std::move(raw.u8));
}

void write_frame_stack(const FrameStack& stack, const std::filesystem::path& path) {
  RawTensor raw;
  raw.dtype = DType::U8;
  const Shape& s = stack.frame_shape();
  raw.dims = {narrow_dim(stack.frames()), narrow_dim(s.height), narrow_dim(s.width),
              narrow_dim(s.channels)};
  raw.u8.assign(stack.raw().begin(), stack.raw().end());
  write_raw_tensor(raw, path);
}

} // namespace gridcal
