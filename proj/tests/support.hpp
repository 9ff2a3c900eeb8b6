#pragma once

#include "gridcal/grid_tensor.hpp"
#include "gridcal/random.hpp"

#include <filesystem>
#include <string>

namespace gridcal::testing {

inline GridTensor random_grid(Rng& rng, std::size_t h, std::size_t w, std::size_t c, double lo = 0.0,
                              double hi = 255.0) {
  GridTensor t(h, w, c);
  for (float& v : t.values()) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

inline GridTensor constant_grid(std::size_t h, std::size_t w, std::size_t c, float v) { return GridTensor(h, w, c, v); }

inline std::vector<GridTensor> random_inputs(Rng& rng, std::size_t h, std::size_t w, std::size_t c = 8) {
  std::vector<GridTensor> frames;
  for (std::size_t t = 0; t < kInputFrames; ++t) frames.push_back(random_grid(rng, h, w, c));
  return frames;
}

// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("gridcal_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

} // namespace gridcal::testing
