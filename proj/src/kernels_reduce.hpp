#pragma once

#include <cstddef>
#include <cstring>
#include <vector>

namespace g2flow::kernels::detail {

// Combine leaf values pairwise, level by level, carrying the odd element.
// This order is part of the reduction contract shared by all backends.
inline double combine_leaves(double* leaf, std::size_t m) {
  if (m == 0) return 0.0;
  while (m > 1) {
    const std::size_t half = m / 2;
    for (std::size_t i = 0; i < half; ++i) leaf[i] = leaf[2 * i] + leaf[2 * i + 1];
    if (m & 1) {
      leaf[half] = leaf[m - 1];
      m = half + 1;
    } else {
      m = half;
    }
  }
  return leaf[0];
}

// Drive a reduction over ceil(n/8) leaves. LeafFn(i) must return the value of
// the 8-element leaf starting at 8*i, zero-padding past n.
template <class LeafFn>
double reduce8(std::size_t n, LeafFn&& leaf_fn) {
  const std::size_t m = (n + 7) / 8;
  if (m == 0) return 0.0;
  if (m <= 512) {
    double buf[512];
    for (std::size_t i = 0; i < m; ++i) buf[i] = leaf_fn(i);
    return combine_leaves(buf, m);
  }
  std::vector<double> buf(m);
  for (std::size_t i = 0; i < m; ++i) buf[i] = leaf_fn(i);
  return combine_leaves(buf.data(), m);
}

// Scalar 8-element leaf: ((x0+x1)+(x2+x3)) + ((x4+x5)+(x6+x7)).
inline double leaf8(const double* p) {
  return ((p[0] + p[1]) + (p[2] + p[3])) + ((p[4] + p[5]) + (p[6] + p[7]));
}

// Zero-padded tail leaf from r < 8 remaining elements.
inline double leaf8_tail(const double* p, std::size_t r) {
  double t[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::memcpy(t, p, r * sizeof(double));
  return leaf8(t);
}

}  // namespace g2flow::kernels::detail
