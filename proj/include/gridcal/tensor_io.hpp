#pragma once

#include "gridcal/grid_tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gridcal {

// On-disk layout, little-endian, no padding:
//   "GRT1" | u16 version (=1) | u8 dtype | u8 rank | rank x u32 dims | payload
inline constexpr char kTensorMagic[4] = {'G', 'R', 'T', '1'};
inline constexpr std::uint16_t kTensorVersion = 1;

enum class DType : std::uint8_t { U8 = 0, F32 = 1 };

/// A tensor of any rank exactly as stored on disk. Only the vector matching
/// `dtype` is populated.
struct RawTensor {
  DType dtype = DType::F32;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> u8;
  std::vector<float> f32;

  std::size_t element_count() const;
  bool operator==(const RawTensor&) const = default;
};

std::size_t encoded_size(const RawTensor& t);
void encode_tensor(const RawTensor& t, std::vector<std::uint8_t>& out);
// Decodes one tensor from the front of `bytes`; `consumed` receives its length.
RawTensor decode_tensor(std::span<const std::uint8_t> bytes, std::size_t& consumed);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
// Writes through a temporary sibling file and renames it into place.
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

RawTensor read_raw_tensor(const std::filesystem::path& path);
void write_raw_tensor(const RawTensor& t, const std::filesystem::path& path);

RawTensor to_raw(const GridTensor& t, DType dtype = DType::F32);
GridTensor grid_from_raw(const RawTensor& raw);

GridTensor read_tensor(const std::filesystem::path& path);
void write_tensor(const GridTensor& t, const std::filesystem::path& path, DType dtype = DType::F32);

/// Rank-4 (n, height, width, channels) stacks of equally shaped grids.
std::vector<GridTensor> read_stack(const std::filesystem::path& path);
void write_stack(std::span<const GridTensor> frames, const std::filesystem::path& path,
                 DType dtype = DType::F32);

FrameStack read_frame_stack(const std::filesystem::path& path);
void write_frame_stack(const FrameStack& stack, const std::filesystem::path& path);

} // namespace gridcal
