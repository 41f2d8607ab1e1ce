#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "frz/errors.hpp"

namespace frz {

using Shape = std::vector<int>;

inline std::int64_t elem_count(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

// Dense float32 tensor, row-major. Small by design; all desk-scale math in
// this project runs through plain contiguous vectors.
struct Tensor {
  std::vector<float> v;
  Shape shape;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)) { v.assign(std::size_t(elem_count(shape)), 0.0f); }

  std::int64_t size() const { return std::int64_t(v.size()); }
  bool empty() const { return v.empty(); }
  float* data() { return v.data(); }
  const float* data() const { return v.data(); }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
};

// C (m x n) += A (m x k) * B (k x n). The j-inner loop keeps accumulation
// order fixed per output element, so results are deterministic and the loop
// still vectorizes.
inline void matmul_acc(const float* a, const float* b, float* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const float* arow = a + std::size_t(i) * k;
    float* crow = c + std::size_t(i) * n;
    for (int l = 0; l < k; ++l) {
      const float al = arow[l];
      const float* brow = b + std::size_t(l) * n;
      for (int j = 0; j < n; ++j) crow[j] += al * brow[j];
    }
  }
}

inline void transpose(const float* a, float* at, int rows, int cols) {
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) at[std::size_t(j) * rows + i] = a[std::size_t(i) * cols + j];
}

inline bool all_finite(const float* p, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) {
    float x = p[i];
    if (!(x - x == 0.0f)) return false;  // catches NaN and +-inf
  }
  return true;
}

}  // namespace frz
