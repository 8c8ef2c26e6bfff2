// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

namespace dynasr {

// Row-major float matrix. The workhorse container for features and
// classifier activations; nothing fancier than the pipeline needs.
struct Mat {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<float> data;

  Mat() = default;
  Mat(size_t r, size_t c, float fill = 0.0f) : rows(r), cols(c), data(r * c, fill) {}

  float* row(size_t r) { return data.data() + r * cols; }
  const float* row(size_t r) const { return data.data() + r * cols; }
  float& at(size_t r, size_t c) { return data[r * cols + c]; }
  float at(size_t r, size_t c) const { return data[r * cols + c]; }
};

}  // namespace dynasr
