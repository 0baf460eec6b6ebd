#include "g2flow/exterior.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

#include "g2flow/linalg7.hpp"

namespace g2flow::exterior {
namespace {

struct Tables {
  std::array<std::array<std::uint8_t, kMaxComp>, 8> mask_of{};
  std::array<std::int8_t, 128> index_of{};
  std::array<std::int8_t, 128> comp_sign{};
  std::array<std::array<std::int8_t, 7>, 128> axes{};
  std::array<std::int8_t, 128> axis_count{};

  Tables() {
    std::array<int, 8> next{};
    // Lexicographic enumeration of increasing axis tuples per degree.
    for (int mask = 0; mask < 128; ++mask) index_of[mask] = -1;
    for (int k = 0; k <= 7; ++k) emit(k, 0, 0, next);
    for (int mask = 0; mask < 128; ++mask) {
      int cnt = 0;
      for (int a = 0; a < 7; ++a)
        if (mask & (1 << a)) axes[mask][cnt++] = static_cast<std::int8_t>(a);
      axis_count[mask] = static_cast<std::int8_t>(cnt);
      comp_sign[mask] = static_cast<std::int8_t>(
          sign_of(static_cast<std::uint8_t>(mask),
                  static_cast<std::uint8_t>(127 ^ mask)));
    }
  }

  static int sign_of(std::uint8_t a, std::uint8_t b) {
    if (a & b) return 0;
    int inv = 0;
    for (int i = 0; i < 7; ++i)
      if (a & (1 << i)) inv += std::popcount(static_cast<unsigned>(b & ((1u << i) - 1u)));
    return (inv & 1) ? -1 : 1;
  }

 private:
  void emit(int k, int depth, std::uint8_t cur, std::array<int, 8>& next,
            int start = 0) {
    if (depth == k) {
      mask_of[k][next[k]] = cur;
      index_of[cur] = static_cast<std::int8_t>(next[k]);
      ++next[k];
      return;
    }
    for (int a = start; a < 7; ++a)
      emit(k, depth + 1, static_cast<std::uint8_t>(cur | (1 << a)), next, a + 1);
  }
};

const Tables& tables() {
  static const Tables t;
  return t;
}

double det_sub(const double* m, const int* rows, const int* cols, int k) {
  switch (k) {
    case 0:
      return 1.0;
    case 1:
      return m[rows[0] * 7 + cols[0]];
    case 2:
      return m[rows[0] * 7 + cols[0]] * m[rows[1] * 7 + cols[1]] -
             m[rows[0] * 7 + cols[1]] * m[rows[1] * 7 + cols[0]];
    default: {
      const double m0 = m[rows[0] * 7 + cols[0]], m1 = m[rows[0] * 7 + cols[1]],
                   m2 = m[rows[0] * 7 + cols[2]];
      const double m3 = m[rows[1] * 7 + cols[0]], m4 = m[rows[1] * 7 + cols[1]],
                   m5 = m[rows[1] * 7 + cols[2]];
      const double m6 = m[rows[2] * 7 + cols[0]], m7 = m[rows[2] * 7 + cols[1]],
                   m8 = m[rows[2] * 7 + cols[2]];
      const double t0 = m4 * m8 - m5 * m7;
      const double t1 = m3 * m8 - m5 * m6;
      const double t2 = m3 * m7 - m4 * m6;
      return (m0 * t0 - m1 * t1) + m2 * t2;
    }
  }
}

// Direct compound application for degree <= 3.
void apply_minors(int k, const double* m, const double* in, double* out) {
  const Tables& t = tables();
  const int n = comp_count(k);
  for (int i = 0; i < n; ++i) {
    int rows[7];
    axes_of(t.mask_of[k][i], rows);
    double acc = 0.0;
    for (int j = 0; j < n; ++j) {
      int cols[7];
      axes_of(t.mask_of[k][j], cols);
      acc += det_sub(m, rows, cols, k) * in[j];
    }
    out[i] = acc;
  }
}

}  // namespace

std::uint8_t mask_of(int degree, int comp) { return tables().mask_of[degree][comp]; }

int index_of_mask(std::uint8_t mask) { return tables().index_of[mask]; }

int wedge_sign(std::uint8_t a, std::uint8_t b) { return Tables::sign_of(a, b); }

int comp_sign(std::uint8_t mask) { return tables().comp_sign[mask]; }

int axes_of(std::uint8_t mask, int out[7]) {
  const Tables& t = tables();
  const int n = t.axis_count[mask];
  for (int i = 0; i < n; ++i) out[i] = t.axes[mask][i];
  return n;
}

AltForm make_form(int degree) {
  if (degree < 0 || degree > 7)
    throw std::invalid_argument("form degree out of range [0,7]");
  AltForm f;
  f.degree = degree;
  return f;
}

AltForm wedge(const AltForm& a, const AltForm& b) {
  if (a.degree + b.degree > 7)
    throw std::invalid_argument("wedge degree overflow: " +
                                std::to_string(a.degree) + " + " +
                                std::to_string(b.degree) + " > 7");
  const Tables& t = tables();
  AltForm out = make_form(a.degree + b.degree);
  const int na = comp_count(a.degree), nb = comp_count(b.degree);
  for (int i = 0; i < na; ++i) {
    const std::uint8_t ma = t.mask_of[a.degree][i];
    if (a.c[i] == 0.0) continue;
    for (int j = 0; j < nb; ++j) {
      const std::uint8_t mb = t.mask_of[b.degree][j];
      const int s = Tables::sign_of(ma, mb);
      if (s) out.c[t.index_of[ma | mb]] += (s > 0 ? a.c[i] : -a.c[i]) * b.c[j];
    }
  }
  return out;
}

AltForm interior(const double v[kDim], const AltForm& a) {
  if (a.degree == 0)
    throw std::invalid_argument("interior product of a 0-form");
  const Tables& t = tables();
  AltForm out = make_form(a.degree - 1);
  const int n = comp_count(a.degree);
  for (int i = 0; i < n; ++i) {
    const std::uint8_t mi = t.mask_of[a.degree][i];
    if (a.c[i] == 0.0) continue;
    for (int p = 0; p < t.axis_count[mi]; ++p) {
      const int axis = t.axes[mi][p];
      const double s = (p & 1) ? -1.0 : 1.0;  // (-1)^{position}
      out.c[t.index_of[mi ^ (1 << axis)]] += s * v[axis] * a.c[i];
    }
  }
  return out;
}

double top_coefficient(const AltForm& a) {
  if (a.degree != 7)
    throw std::invalid_argument("top_coefficient requires a 7-form");
  return a.c[0];
}

Metric euclidean_metric() {
  Metric m;
  for (int i = 0; i < 7; ++i) m.g[i * 7 + i] = m.g_inv[i * 7 + i] = 1.0;
  return m;
}

Metric metric_from_matrix(const double g[49]) {
  Metric m;
  for (int i = 0; i < 49; ++i) m.g[i] = g[i];
  double L[49];
  if (!linalg::cholesky7(g, L))
    throw std::invalid_argument("metric matrix is not positive definite");
  m.det = linalg::det_from_cholesky7(L);
  m.vol_scale = std::sqrt(m.det);
  linalg::invert_spd7(L, m.g_inv.data());
  return m;
}

void apply_compound(int degree, const Metric& m, bool use_inverse,
                    const double* in, double* out) {
  const Tables& t = tables();
  const int n = comp_count(degree);
  if (degree == 0) {
    out[0] = in[0];
    return;
  }
  const double* mat = use_inverse ? m.g_inv.data() : m.g.data();
  if (degree <= 3) {
    apply_minors(degree, mat, in, out);
    return;
  }
  // Complementary minors: det(M[I,J]) = eps_I eps_J det(M) det(M^{-1}[I^c,J^c]).
  const double* other = use_inverse ? m.g.data() : m.g_inv.data();
  const double det_m = use_inverse ? 1.0 / m.det : m.det;
  const int kc = 7 - degree;
  double tmp[kMaxComp], s[kMaxComp];
  for (int j = 0; j < n; ++j) {
    const std::uint8_t mj = t.mask_of[degree][j];
    const int cj = t.index_of[127 ^ mj];
    tmp[cj] = (t.comp_sign[mj] > 0 ? in[j] : -in[j]);
  }
  apply_minors(kc, other, tmp, s);
  for (int i = 0; i < n; ++i) {
    const std::uint8_t mi = t.mask_of[degree][i];
    const double v = det_m * s[t.index_of[127 ^ mi]];
    out[i] = (t.comp_sign[mi] > 0 ? v : -v);
  }
}

double form_inner(const AltForm& a, const AltForm& b, const Metric& m) {
  if (a.degree != b.degree)
    throw std::invalid_argument("form_inner: degree mismatch");
  double gb[kMaxComp];
  apply_compound(a.degree, m, /*use_inverse=*/true, b.c.data(), gb);
  const int n = comp_count(a.degree);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += a.c[i] * gb[i];
  return acc;
}

double form_norm2(const AltForm& a, const Metric& m) {
  return form_inner(a, a, m);
}

AltForm hodge_star(const AltForm& a, const Metric& m) {
  const Tables& t = tables();
  AltForm out = make_form(7 - a.degree);
  double ga[kMaxComp];
  apply_compound(a.degree, m, /*use_inverse=*/true, a.c.data(), ga);
  const int n = comp_count(a.degree);
  for (int j = 0; j < n; ++j) {
    const std::uint8_t mj = t.mask_of[a.degree][j];
    const double v = m.vol_scale * ga[j];
    out.c[t.index_of[127 ^ mj]] += (t.comp_sign[mj] > 0 ? v : -v);
  }
  return out;
}

void flat(const Metric& m, const double v[kDim], double out[kDim]) {
  linalg::matvec7(m.g.data(), v, out);
}

void sharp(const Metric& m, const double a[kDim], double out[kDim]) {
  linalg::matvec7(m.g_inv.data(), a, out);
}

}  // namespace g2flow::exterior
