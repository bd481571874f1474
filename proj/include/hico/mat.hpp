#pragma once

#include <cstddef>
#include <vector>

namespace hico {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles. Used both for token sequences
// (rows = positions, cols = feature width) and for 2-D parameters.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}

  double* row(std::size_t i) { return v.data() + i * cols; }
  const double* row(std::size_t i) const { return v.data() + i * cols; }
  double& at(std::size_t i, std::size_t j) { return v[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
  std::size_t size() const { return v.size(); }
  void fill(double x) { v.assign(rows * cols, x); }
};

// Token sequences are plain matrices: length x width.
using TokenSequence = Mat;

}  // namespace hico
