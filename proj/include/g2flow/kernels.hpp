#pragma once

#include <cstddef>

namespace g2flow::kernels {

// Flat array kernels used by the field layer. Two implementations exist
// (scalar reference, AVX2) and they must produce bitwise-identical results:
// no FMA, fixed association per element, and reductions share one pairwise
// tree (8-element leaves, level-by-level combine). Equivalence is enforced
// by tests, so any new kernel needs both paths plus a test row.
struct Backend {
  const char* name;

  // y[i] += a * x[i]
  void (*axpy)(double* y, double a, const double* x, std::size_t n);
  // y[i] = x[i] + a * k[i]
  void (*add_scaled)(double* y, const double* x, double a, const double* k,
                     std::size_t n);
  // y[i] = a * x[i]
  void (*amul)(double* y, double a, const double* x, std::size_t n);
  // y[i] *= a
  void (*scale)(double* y, double a, std::size_t n);
  // z[i] = x[i] * y[i]
  void (*mul)(double* z, const double* x, const double* y, std::size_t n);
  // z[i] += c * x[i] * y[i]   (association: z += (c*x)*y)
  void (*fmadd)(double* z, double c, const double* x, const double* y,
                std::size_t n);
  // z[i] += det2(m, i) * x[i] with det2 = m0*m3 - m1*m2
  void (*det2_fmadd)(double* z, const double* const m[4], const double* x,
                     std::size_t n);
  // z[i] += det3(m, i) * x[i] with the fixed association
  //   t0 = m4*m8 - m5*m7; t1 = m3*m8 - m5*m6; t2 = m3*m7 - m4*m6;
  //   det = (m0*t0 - m1*t1) + m2*t2
  void (*det3_fmadd)(double* z, const double* const m[9], const double* x,
                     std::size_t n);

  // Pairwise-tree reductions.
  double (*sum)(const double* x, std::size_t n);
  double (*dot)(const double* x, const double* y, std::size_t n);
  // sum of (w[i]*x[i])*y[i]
  double (*dot3)(const double* w, const double* x, const double* y,
                 std::size_t n);
};

const Backend& scalar_backend();
#if G2FLOW_HAVE_AVX2
const Backend& avx2_backend();
#endif

// Backend selected at first use: G2FLOW_KERNELS=scalar|avx2 overrides the
// CPU-feature default. Selection is not thread-safe; it happens at startup.
const Backend& active();

// Force a backend by name ("scalar", "avx2"); false if unavailable.
bool force(const char* name);

}  // namespace g2flow::kernels
