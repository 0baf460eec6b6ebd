#pragma once

#include <array>
#include <cmath>

namespace g2flow::linalg {

// Dense 7x7 helpers, row-major storage. Everything here is allocation-free
// and deterministic (fixed loop order, no pivoting: SPD only).

// L (lower, row-major) with M = L L^T. Returns false if a pivot is <= 0 or
// not finite, i.e. M is not numerically SPD.
inline bool cholesky7(const double* m, double* L) {
  for (int i = 0; i < 49; ++i) L[i] = 0.0;
  for (int j = 0; j < 7; ++j) {
    double d = m[j * 7 + j];
    for (int k = 0; k < j; ++k) d -= L[j * 7 + k] * L[j * 7 + k];
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    const double root = std::sqrt(d);
    L[j * 7 + j] = root;
    for (int i = j + 1; i < 7; ++i) {
      double s = m[i * 7 + j];
      for (int k = 0; k < j; ++k) s -= L[i * 7 + k] * L[j * 7 + k];
      L[i * 7 + j] = s / root;
    }
  }
  return true;
}

inline double det_from_cholesky7(const double* L) {
  double d = 1.0;
  for (int j = 0; j < 7; ++j) d *= L[j * 7 + j] * L[j * 7 + j];
  return d;
}

// Solve (L L^T) x = b in place.
inline void cholesky7_solve(const double* L, double* x) {
  for (int i = 0; i < 7; ++i) {
    double s = x[i];
    for (int k = 0; k < i; ++k) s -= L[i * 7 + k] * x[k];
    x[i] = s / L[i * 7 + i];
  }
  for (int i = 6; i >= 0; --i) {
    double s = x[i];
    for (int k = i + 1; k < 7; ++k) s -= L[k * 7 + i] * x[k];
    x[i] = s / L[i * 7 + i];
  }
}

inline void invert_spd7(const double* L, double* inv) {
  for (int c = 0; c < 7; ++c) {
    double col[7] = {0, 0, 0, 0, 0, 0, 0};
    col[c] = 1.0;
    cholesky7_solve(L, col);
    for (int r = 0; r < 7; ++r) inv[r * 7 + c] = col[r];
  }
}

inline void matvec7(const double* m, const double* x, double* y) {
  for (int i = 0; i < 7; ++i) {
    double s = 0.0;
    for (int j = 0; j < 7; ++j) s += m[i * 7 + j] * x[j];
    y[i] = s;
  }
}

// Max row sum of absolute values (the infinity operator norm).
inline double inf_norm7(const double* m) {
  double best = 0.0;
  for (int i = 0; i < 7; ++i) {
    double s = 0.0;
    for (int j = 0; j < 7; ++j) s += std::fabs(m[i * 7 + j]);
    if (s > best) best = s;
  }
  return best;
}

}  // namespace g2flow::linalg
