#include "g2flow/kernels.hpp"

#if G2FLOW_HAVE_AVX2

#include <immintrin.h>

#include "kernels_reduce.hpp"

namespace g2flow::kernels {
namespace {

// No *_fmadd_pd anywhere: lanes must match the scalar path bit for bit.

void axpy(double* y, double a, const double* x, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vy = _mm256_loadu_pd(y + i);
    const __m256d vx = _mm256_loadu_pd(x + i);
    _mm256_storeu_pd(y + i, _mm256_add_pd(vy, _mm256_mul_pd(va, vx)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void add_scaled(double* y, const double* x, double a, const double* k,
                std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vx = _mm256_loadu_pd(x + i);
    const __m256d vk = _mm256_loadu_pd(k + i);
    _mm256_storeu_pd(y + i, _mm256_add_pd(vx, _mm256_mul_pd(va, vk)));
  }
  for (; i < n; ++i) y[i] = x[i] + a * k[i];
}

void amul(double* y, double a, const double* x, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = a * x[i];
}

void scale(double* y, double a, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_loadu_pd(y + i), va));
  for (; i < n; ++i) y[i] *= a;
}

void mul(double* z, const double* x, const double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(
        z + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) z[i] = x[i] * y[i];
}

void fmadd(double* z, double c, const double* x, const double* y,
           std::size_t n) {
  const __m256d vc = _mm256_set1_pd(c);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vx = _mm256_loadu_pd(x + i);
    const __m256d vy = _mm256_loadu_pd(y + i);
    const __m256d vz = _mm256_loadu_pd(z + i);
    _mm256_storeu_pd(
        z + i, _mm256_add_pd(vz, _mm256_mul_pd(_mm256_mul_pd(vc, vx), vy)));
  }
  for (; i < n; ++i) z[i] += (c * x[i]) * y[i];
}

void det2_fmadd(double* z, const double* const m[4], const double* x,
                std::size_t n) {
  const double *m0 = m[0], *m1 = m[1], *m2 = m[2], *m3 = m[3];
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d det = _mm256_sub_pd(
        _mm256_mul_pd(_mm256_loadu_pd(m0 + i), _mm256_loadu_pd(m3 + i)),
        _mm256_mul_pd(_mm256_loadu_pd(m1 + i), _mm256_loadu_pd(m2 + i)));
    const __m256d vz = _mm256_loadu_pd(z + i);
    _mm256_storeu_pd(
        z + i, _mm256_add_pd(vz, _mm256_mul_pd(det, _mm256_loadu_pd(x + i))));
  }
  for (; i < n; ++i) {
    const double det = m0[i] * m3[i] - m1[i] * m2[i];
    z[i] += det * x[i];
  }
}

void det3_fmadd(double* z, const double* const m[9], const double* x,
                std::size_t n) {
  const double *m0 = m[0], *m1 = m[1], *m2 = m[2];
  const double *m3 = m[3], *m4 = m[4], *m5 = m[5];
  const double *m6 = m[6], *m7 = m[7], *m8 = m[8];
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v3 = _mm256_loadu_pd(m3 + i);
    const __m256d v4 = _mm256_loadu_pd(m4 + i);
    const __m256d v5 = _mm256_loadu_pd(m5 + i);
    const __m256d v6 = _mm256_loadu_pd(m6 + i);
    const __m256d v7 = _mm256_loadu_pd(m7 + i);
    const __m256d v8 = _mm256_loadu_pd(m8 + i);
    const __m256d t0 = _mm256_sub_pd(_mm256_mul_pd(v4, v8), _mm256_mul_pd(v5, v7));
    const __m256d t1 = _mm256_sub_pd(_mm256_mul_pd(v3, v8), _mm256_mul_pd(v5, v6));
    const __m256d t2 = _mm256_sub_pd(_mm256_mul_pd(v3, v7), _mm256_mul_pd(v4, v6));
    const __m256d det = _mm256_add_pd(
        _mm256_sub_pd(_mm256_mul_pd(_mm256_loadu_pd(m0 + i), t0),
                      _mm256_mul_pd(_mm256_loadu_pd(m1 + i), t1)),
        _mm256_mul_pd(_mm256_loadu_pd(m2 + i), t2));
    const __m256d vz = _mm256_loadu_pd(z + i);
    _mm256_storeu_pd(
        z + i, _mm256_add_pd(vz, _mm256_mul_pd(det, _mm256_loadu_pd(x + i))));
  }
  for (; i < n; ++i) {
    const double t0 = m4[i] * m8[i] - m5[i] * m7[i];
    const double t1 = m3[i] * m8[i] - m5[i] * m6[i];
    const double t2 = m3[i] * m7[i] - m4[i] * m6[i];
    const double det = (m0[i] * t0 - m1[i] * t1) + m2[i] * t2;
    z[i] += det * x[i];
  }
}

// In-register version of the shared 8-element leaf. hadd gives
// [x0+x1, x4+x5, x2+x3, x6+x7]; adding the 128-bit halves then the two lanes
// reproduces ((x0+x1)+(x2+x3)) + ((x4+x5)+(x6+x7)) with identical operands.
inline double leaf8_vec(__m256d v0, __m256d v1) {
  const __m256d h = _mm256_hadd_pd(v0, v1);
  const __m128d lo = _mm256_castpd256_pd128(h);
  const __m128d hi = _mm256_extractf128_pd(h, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double sum(const double* x, std::size_t n) {
  return detail::reduce8(n, [&](std::size_t i) {
    const std::size_t b = 8 * i;
    if (b + 8 <= n)
      return leaf8_vec(_mm256_loadu_pd(x + b), _mm256_loadu_pd(x + b + 4));
    return detail::leaf8_tail(x + b, n - b);
  });
}

double dot(const double* x, const double* y, std::size_t n) {
  return detail::reduce8(n, [&](std::size_t i) {
    const std::size_t b = 8 * i;
    if (b + 8 <= n) {
      const __m256d p0 =
          _mm256_mul_pd(_mm256_loadu_pd(x + b), _mm256_loadu_pd(y + b));
      const __m256d p1 =
          _mm256_mul_pd(_mm256_loadu_pd(x + b + 4), _mm256_loadu_pd(y + b + 4));
      return leaf8_vec(p0, p1);
    }
    double p[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    for (std::size_t j = 0; b + j < n; ++j) p[j] = x[b + j] * y[b + j];
    return detail::leaf8(p);
  });
}

double dot3(const double* w, const double* x, const double* y, std::size_t n) {
  return detail::reduce8(n, [&](std::size_t i) {
    const std::size_t b = 8 * i;
    if (b + 8 <= n) {
      const __m256d p0 = _mm256_mul_pd(
          _mm256_mul_pd(_mm256_loadu_pd(w + b), _mm256_loadu_pd(x + b)),
          _mm256_loadu_pd(y + b));
      const __m256d p1 = _mm256_mul_pd(
          _mm256_mul_pd(_mm256_loadu_pd(w + b + 4), _mm256_loadu_pd(x + b + 4)),
          _mm256_loadu_pd(y + b + 4));
      return leaf8_vec(p0, p1);
    }
    double p[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    for (std::size_t j = 0; b + j < n; ++j)
      p[j] = (w[b + j] * x[b + j]) * y[b + j];
    return detail::leaf8(p);
  });
}

}  // namespace

const Backend& avx2_backend() {
  static const Backend b = {
      "avx2", axpy,       add_scaled, amul, scale, mul,
      fmadd,  det2_fmadd, det3_fmadd, sum,  dot,   dot3,
  };
  return b;
}

}  // namespace g2flow::kernels

#endif  // G2FLOW_HAVE_AVX2
