#include "g2flow/kernels.hpp"

#include "kernels_reduce.hpp"

namespace g2flow::kernels {
namespace {

void axpy(double* y, double a, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void add_scaled(double* y, const double* x, double a, const double* k,
                std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + a * k[i];
}

void amul(double* y, double a, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a * x[i];
}

void scale(double* y, double a, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] *= a;
}

void mul(double* z, const double* x, const double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) z[i] = x[i] * y[i];
}

void fmadd(double* z, double c, const double* x, const double* y,
           std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) z[i] += (c * x[i]) * y[i];
}

void det2_fmadd(double* z, const double* const m[4], const double* x,
                std::size_t n) {
  const double *m0 = m[0], *m1 = m[1], *m2 = m[2], *m3 = m[3];
  for (std::size_t i = 0; i < n; ++i) {
    const double det = m0[i] * m3[i] - m1[i] * m2[i];
    z[i] += det * x[i];
  }
}

void det3_fmadd(double* z, const double* const m[9], const double* x,
                std::size_t n) {
  const double *m0 = m[0], *m1 = m[1], *m2 = m[2];
  const double *m3 = m[3], *m4 = m[4], *m5 = m[5];
  const double *m6 = m[6], *m7 = m[7], *m8 = m[8];
  for (std::size_t i = 0; i < n; ++i) {
    const double t0 = m4[i] * m8[i] - m5[i] * m7[i];
    const double t1 = m3[i] * m8[i] - m5[i] * m6[i];
    const double t2 = m3[i] * m7[i] - m4[i] * m6[i];
    const double det = (m0[i] * t0 - m1[i] * t1) + m2[i] * t2;
    z[i] += det * x[i];
  }
}

double sum(const double* x, std::size_t n) {
  return detail::reduce8(n, [&](std::size_t i) {
    const std::size_t b = 8 * i;
    if (b + 8 <= n) return detail::leaf8(x + b);
    return detail::leaf8_tail(x + b, n - b);
  });
}

double dot(const double* x, const double* y, std::size_t n) {
  return detail::reduce8(n, [&](std::size_t i) {
    const std::size_t b = 8 * i;
    double p[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    const std::size_t r = (b + 8 <= n) ? 8 : n - b;
    for (std::size_t j = 0; j < r; ++j) p[j] = x[b + j] * y[b + j];
    return detail::leaf8(p);
  });
}

double dot3(const double* w, const double* x, const double* y, std::size_t n) {
  return detail::reduce8(n, [&](std::size_t i) {
    const std::size_t b = 8 * i;
    double p[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    const std::size_t r = (b + 8 <= n) ? 8 : n - b;
    for (std::size_t j = 0; j < r; ++j) p[j] = (w[b + j] * x[b + j]) * y[b + j];
    return detail::leaf8(p);
  });
}

}  // namespace

const Backend& scalar_backend() {
  static const Backend b = {
      "scalar", axpy,       add_scaled, amul, scale, mul,
      fmadd,    det2_fmadd, det3_fmadd, sum,  dot,   dot3,
  };
  return b;
}

}  // namespace g2flow::kernels
