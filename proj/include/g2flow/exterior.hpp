#pragma once

#include <array>
#include <cstdint>

namespace g2flow::exterior {

inline constexpr int kDim = 7;
inline constexpr int kMaxComp = 35;

// Components of Lambda^k on a 7-dimensional space.
constexpr int comp_count(int k) {
  constexpr int c[8] = {1, 7, 21, 35, 35, 21, 7, 1};
  return (k >= 0 && k <= 7) ? c[k] : 0;
}

// Multi-indices are bitmasks: bit a (0-based) set <=> axis a+1 present.
// Components of a degree are ordered lexicographically by the increasing
// axis tuple: (1,2) < (1,3) < ... < (1,7) < (2,3) < ...
std::uint8_t mask_of(int degree, int comp);
int index_of_mask(std::uint8_t mask);  // position within its degree

// Sign of e_A ^ e_B relative to e_{A u B} (0 when A and B overlap).
int wedge_sign(std::uint8_t a, std::uint8_t b);
// Sign of e_I ^ e_{I^c} relative to e_{1...7}.
int comp_sign(std::uint8_t mask);
// Axes of a mask as 0-based ints, ascending; returns the count.
int axes_of(std::uint8_t mask, int out[7]);

// Alternating form with constant coefficients in the fixed basis. The first
// comp_count(degree) entries of c are meaningful; the rest stay zero.
struct AltForm {
  int degree = 0;
  std::array<double, kMaxComp> c{};

  double& operator[](int i) { return c[i]; }
  const double& operator[](int i) const { return c[i]; }
  int size() const { return comp_count(degree); }
};

AltForm make_form(int degree);

// Degree overflow (sum > 7) throws std::invalid_argument.
AltForm wedge(const AltForm& a, const AltForm& b);
// Interior product v .| a; degree 0 throws std::invalid_argument.
AltForm interior(const double v[kDim], const AltForm& a);
// Coefficient of e^{1...7}; requires degree 7.
double top_coefficient(const AltForm& a);

struct Metric {
  std::array<double, 49> g{};      // row-major
  std::array<double, 49> g_inv{};
  double det = 1.0;
  double vol_scale = 1.0;          // sqrt(det)
};

Metric euclidean_metric();
// Inverse + determinant via Cholesky; throws std::invalid_argument if the
// matrix is not symmetric positive definite.
Metric metric_from_matrix(const double g[49]);

// out = Lambda^k(M) in, the k-th compound (Gram) matrix applied to the
// component vector: out_I = sum_J det(M[I,J]) in_J. With use_inverse the
// matrix is g^{-1} (the Gram matrix of the e^I basis, used for form inner
// products); otherwise g itself. Degrees >= 4 go through complementary
// minors of the other matrix, so no determinant larger than 3x3 is formed.
void apply_compound(int degree, const Metric& m, bool use_inverse,
                    const double* in, double* out);

// <a, b> with respect to the metric (pointwise, no volume weight).
double form_inner(const AltForm& a, const AltForm& b, const Metric& m);
double form_norm2(const AltForm& a, const Metric& m);

// Hodge star for the orientation e^{1...7} > 0.
AltForm hodge_star(const AltForm& a, const Metric& m);

// 1-form/vector conversions.
void flat(const Metric& m, const double v[kDim], double out[kDim]);   // g v
void sharp(const Metric& m, const double a[kDim], double out[kDim]);  // g^{-1} a

}  // namespace g2flow::exterior
