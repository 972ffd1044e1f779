#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>

#include "univid/rng.hpp"
#include "univid/tensor.hpp"

namespace testutil {

inline double max_abs_diff(const univid::Tensor& a, const univid::Tensor& b) {
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

inline univid::Tensor random_tensor(const univid::Shape& shape, uint64_t seed, float stddev = 1.0f) {
  univid::Rng rng(seed);
  return rng.normal_tensor(shape, stddev);
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("univid-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testutil
