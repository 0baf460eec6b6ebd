#include "g2flow/lattice.hpp"

#include <cmath>
#include <complex>
#include <cstring>
#include <stdexcept>
#include <string>

#include "g2flow/kernels.hpp"
#include "g2flow/parallel.hpp"

namespace g2flow::lattice {

using exterior::comp_count;
using exterior::comp_sign;
using exterior::index_of_mask;
using exterior::mask_of;
using exterior::wedge_sign;

namespace {

constexpr std::size_t kChunk = 8192;  // sites per parallel chunk

void check_layout(const LatticeField& a, const LatticeField& b,
                  const char* what) {
  if (!a.grid || !b.grid || !a.grid->same_layout(*b.grid))
    throw std::invalid_argument(std::string(what) + ": grid layout mismatch");
}

void check_metric(const LatticeField& a, const MetricField& m,
                  const char* what) {
  if (!a.grid || !m.grid || !a.grid->same_layout(*m.grid))
    throw std::invalid_argument(std::string(what) +
                                ": metric lives on a different grid");
}

// y = D x along one line of a spectral axis. D is circulant with first
// column r, applied by distance: y[j] = sum_m r[m] * x[(j - m) mod N].
// `x2` holds the line twice (x2[i] = x[i mod N] for i in [0, 2N)) so the
// wrap needs no per-term modulo. Iterating by distance in a fixed order
// makes the result exactly equivariant under whole-lattice shifts: every
// output site accumulates the same addends in the same sequence.
inline void line_matvec(const double* r, int N, const double* x2, double* y) {
  for (int j = 0; j < N; ++j) {
    const double* xs = x2 + j + N;
    double acc = 0.0;
    for (int m = 0; m < N; ++m) acc += r[m] * xs[-m];
    y[j] = acc;
  }
}

// One (input comp -> output comp) derivative pass along `axis`, scatter-add
// with `sign` (already includes the transpose negation when requested).
void apply_axis_deriv(const Grid& g, int axis, double sign, const double* in,
                      double* out) {
  const int N = static_cast<int>(g.extents[axis]);
  const std::size_t st = g.strides[axis];
  const auto& bases = g.line_bases[axis];
  const bool spectral = g.scheme == Scheme::spectral;
  const double* D = g.deriv[axis].data();
  const double half_inv_h = 0.5 / g.spacings[axis];

  g2flow::par::parallel_for(
      bases.size(), 8, [&](std::size_t b0, std::size_t b1) {
        std::vector<double> xbuf(2 * static_cast<std::size_t>(N)), ybuf(N);
        double* x = xbuf.data();
        double* y = ybuf.data();
        for (std::size_t li = b0; li < b1; ++li) {
          const std::size_t base = bases[li];
          for (int j = 0; j < N; ++j) x[j] = x[j + N] = in[base + j * st];
          if (spectral) {
            line_matvec(D, N, x, y);
          } else {
            for (int j = 0; j < N; ++j) {
              const int jp = (j + 1 == N) ? 0 : j + 1;
              const int jm = (j == 0) ? N - 1 : j - 1;
              y[j] = (x[jp] - x[jm]) * half_inv_h;
            }
          }
          for (int j = 0; j < N; ++j) out[base + j * st] += sign * y[j];
        }
      });
}

// Exterior derivative. Each output component is filled by a single pass
// with a fixed axis order, so results are thread-count independent.
LatticeField d_raise(const LatticeField& a) {
  if (a.degree >= 7)
    throw std::invalid_argument("d: degree overflow (7-form has no d)");
  LatticeField out = make_field(a.grid, a.degree + 1);
  const Grid& g = *a.grid;

  for (int ko = 0; ko < out.ncomp(); ++ko) {
    const std::uint8_t K = mask_of(a.degree + 1, ko);
    double* oc = out.comp(ko);
    for (int axis = 0; axis < 7; ++axis) {
      if (!(K & (1u << axis)) || g.degenerate[axis]) continue;
      const std::uint8_t J = static_cast<std::uint8_t>(K ^ (1u << axis));
      const double sign =
          wedge_sign(static_cast<std::uint8_t>(1u << axis), J);
      apply_axis_deriv(g, axis, sign, a.comp(index_of_mask(J)), oc);
    }
  }
  return out;
}

// Transpose of d as a matrix on component vectors: degree k -> k - 1, with
// the per-axis derivative transposed (both stencils are exactly
// antisymmetric, so D^T = -D).
LatticeField d_lower(const LatticeField& b) {
  if (b.degree == 0)
    throw std::invalid_argument("d^T: degree underflow (0-form)");
  LatticeField out = make_field(b.grid, b.degree - 1);
  const Grid& g = *b.grid;

  for (int jo = 0; jo < out.ncomp(); ++jo) {
    const std::uint8_t J = mask_of(b.degree - 1, jo);
    double* oc = out.comp(jo);
    for (int axis = 0; axis < 7; ++axis) {
      if ((J & (1u << axis)) || g.degenerate[axis]) continue;
      const std::uint8_t K = static_cast<std::uint8_t>(J | (1u << axis));
      const double sign =
          -wedge_sign(static_cast<std::uint8_t>(1u << axis), J);
      apply_axis_deriv(g, axis, sign, b.comp(index_of_mask(K)), oc);
    }
  }
  return out;
}

// Packed-minor determinant streams for degree <= 3 compound application.
void apply_minors_field(int k, const MetricField& m, bool use_inverse,
                        const LatticeField& in, LatticeField& out,
                        std::size_t b, std::size_t len) {
  const auto& kern = kernels::active();
  const int n = comp_count(k);
  auto mat = [&](int i, int j) {
    const int c = sym_index(i, j);
    return (use_inverse ? m.ginv_comp(c) : m.g_comp(c)) + b;
  };
  for (int oi = 0; oi < n; ++oi) {
    int rows[7];
    exterior::axes_of(mask_of(k, oi), rows);
    double* oc = out.comp(oi) + b;
    for (int ij = 0; ij < n; ++ij) {
      int cols[7];
      exterior::axes_of(mask_of(k, ij), cols);
      const double* ic = in.comp(ij) + b;
      if (k == 0) {  // empty minor: determinant 1
        kern.axpy(oc, 1.0, ic, len);
      } else if (k == 1) {
        kern.fmadd(oc, 1.0, mat(rows[0], cols[0]), ic, len);
      } else if (k == 2) {
        const double* sub[4] = {mat(rows[0], cols[0]), mat(rows[0], cols[1]),
                                mat(rows[1], cols[0]), mat(rows[1], cols[1])};
        kern.det2_fmadd(oc, sub, ic, len);
      } else {
        const double* sub[9] = {mat(rows[0], cols[0]), mat(rows[0], cols[1]),
                                mat(rows[0], cols[2]), mat(rows[1], cols[0]),
                                mat(rows[1], cols[1]), mat(rows[1], cols[2]),
                                mat(rows[2], cols[0]), mat(rows[2], cols[1]),
                                mat(rows[2], cols[2])};
        kern.det3_fmadd(oc, sub, ic, len);
      }
    }
  }
}

}  // namespace

bool Grid::same_layout(const Grid& o) const {
  return extents == o.extents && spacings == o.spacings && scheme == o.scheme;
}

GridPtr make_grid(const std::array<std::int64_t, 7>& extents,
                  const std::array<double, 7>& spacings, Scheme scheme) {
  auto g = std::make_shared<Grid>();
  g->extents = extents;
  g->spacings = spacings;
  g->scheme = scheme;

  std::size_t ns = 1;
  double cell = 1.0;
  for (int a = 0; a < 7; ++a) {
    if (extents[a] < 1)
      throw std::invalid_argument("grid extent must be >= 1");
    if (extents[a] > 4096)
      throw std::invalid_argument("grid extent above the supported 4096");
    if (!(spacings[a] > 0.0) || !std::isfinite(spacings[a]))
      throw std::invalid_argument("grid spacing must be positive and finite");
    if (scheme == Scheme::spectral && extents[a] == 2)
      throw std::invalid_argument(
          "spectral axes need extent 1 or >= 4 (extent 2 is all Nyquist)");
    if (scheme == Scheme::spectral && extents[a] == 3)
      throw std::invalid_argument(
          "spectral axes need extent 1 or >= 4");
    if (extents[a] > 64 && scheme == Scheme::spectral)
      throw std::invalid_argument("spectral extents above 64 unsupported");
    g->degenerate[a] = extents[a] == 1;
    ns *= static_cast<std::size_t>(extents[a]);
    cell *= spacings[a];
    if (ns > (std::size_t{1} << 27))
      throw std::invalid_argument("grid has too many sites");
  }
  g->nsites = ns;
  g->cell_volume = cell;

  g->strides[6] = 1;
  for (int a = 5; a >= 0; --a)
    g->strides[a] = g->strides[a + 1] * static_cast<std::size_t>(extents[a + 1]);

  for (int a = 0; a < 7; ++a) {
    if (g->degenerate[a]) continue;
    const int N = static_cast<int>(extents[a]);

    if (scheme == Scheme::spectral) {
      // First row of the circulant: r[d] = -(1/N) sum_m k_m sin(2 pi m d / N),
      // with the Nyquist multiplier zeroed, then exact antisymmetrization.
      std::vector<double> r(N, 0.0);
      const double L = N * spacings[a];
      for (int dd = 1; dd < N; ++dd) {
        double acc = 0.0;
        for (int mm = 1; mm < N; ++mm) {
          int ms = mm;
          if (2 * mm == N)
            ms = 0;  // Nyquist
          else if (2 * mm > N)
            ms = mm - N;
          const double km = 2.0 * M_PI * ms / L;
          acc += km * std::sin(2.0 * M_PI * mm * dd / N);
        }
        r[dd] = -acc / N;
      }
      r[0] = 0.0;
      for (int dd = 1; 2 * dd < N; ++dd) {
        const double v = 0.5 * (r[dd] - r[N - dd]);
        r[dd] = v;
        r[N - dd] = -v;
      }
      if (N % 2 == 0) r[N / 2] = 0.0;

      g->deriv[a] = std::move(r);
    }

    auto& bases = g->line_bases[a];
    bases.reserve(ns / static_cast<std::size_t>(N));
    for (std::size_t s = 0; s < ns; ++s)
      if ((s / g->strides[a]) % static_cast<std::size_t>(N) == 0)
        bases.push_back(static_cast<std::uint32_t>(s));
  }
  return g;
}

LatticeField make_field(GridPtr grid, int degree) {
  if (!grid) throw std::invalid_argument("make_field: null grid");
  if (degree < 0 || degree > 7)
    throw std::invalid_argument("make_field: degree out of range");
  LatticeField f;
  f.grid = std::move(grid);
  f.degree = degree;
  f.data.assign(static_cast<std::size_t>(comp_count(degree)) * f.grid->nsites,
                0.0);
  return f;
}

MetricField identity_metric_field(GridPtr grid) {
  MetricField m;
  m.grid = std::move(grid);
  m.uniform_identity = true;
  return m;
}

LatticeField d(const LatticeField& a) { return d_raise(a); }

void apply_compound_field(const MetricField& m, bool use_inverse,
                          const LatticeField& in, LatticeField& out) {
  check_metric(in, m, "apply_compound_field");
  const int k = in.degree;
  out = make_field(in.grid, k);
  if (m.uniform_identity || k == 0) {
    out.data = in.data;
    return;
  }
  const std::size_t ns = in.nsites();

  if (k <= 3) {
    g2flow::par::parallel_for(ns, kChunk, [&](std::size_t b, std::size_t e) {
      apply_minors_field(k, m, use_inverse, in, out, b, e - b);
    });
    return;
  }

  // Complementary-minor route (see exterior::apply_compound).
  const int kc = 7 - k;
  const int n = comp_count(k);
  LatticeField tmp = make_field(in.grid, kc), s = make_field(in.grid, kc);
  const auto& kern = kernels::active();

  g2flow::par::parallel_for(ns, kChunk, [&](std::size_t b, std::size_t e) {
    const std::size_t len = e - b;
    for (int j = 0; j < n; ++j) {
      const std::uint8_t mj = mask_of(k, j);
      kern.amul(tmp.comp(index_of_mask(127 ^ mj)) + b,
                comp_sign(mj) > 0 ? 1.0 : -1.0, in.comp(j) + b, len);
    }
    apply_minors_field(kc, m, !use_inverse, tmp, s, b, len);
    const double* detarr = (use_inverse ? m.inv_det.data() : m.det.data()) + b;
    for (int i = 0; i < n; ++i) {
      const std::uint8_t mi = mask_of(k, i);
      kern.fmadd(out.comp(i) + b, comp_sign(mi) > 0 ? 1.0 : -1.0,
                 s.comp(index_of_mask(127 ^ mi)) + b, detarr, len);
    }
  });
}

LatticeField codiff(const LatticeField& b, const MetricField& m) {
  if (b.degree == 0)
    throw std::invalid_argument("codiff: degree underflow (0-form)");
  check_metric(b, m, "codiff");

  if (m.uniform_identity) return d_lower(b);

  const std::size_t ns = b.nsites();

  LatticeField u;
  apply_compound_field(m, true, b, u);
  g2flow::par::parallel_for(ns, kChunk, [&](std::size_t s0, std::size_t s1) {
    for (int i = 0; i < u.ncomp(); ++i) {
      double* uc = u.comp(i) + s0;
      const double* v = m.vol.data() + s0;
      for (std::size_t t = 0; t < s1 - s0; ++t) uc[t] *= v[t];
    }
  });

  const LatticeField v = d_lower(u);
  LatticeField w;
  apply_compound_field(m, false, v, w);
  g2flow::par::parallel_for(ns, kChunk, [&](std::size_t s0, std::size_t s1) {
    for (int i = 0; i < w.ncomp(); ++i) {
      double* wc = w.comp(i) + s0;
      const double* iv = m.inv_vol.data() + s0;
      for (std::size_t t = 0; t < s1 - s0; ++t) wc[t] *= iv[t];
    }
  });
  return w;
}

LatticeField hodge_laplacian(const LatticeField& a, const MetricField& m) {
  check_metric(a, m, "hodge_laplacian");
  if (a.degree == 0) return codiff(d(a), m);
  if (a.degree == 7) return d(codiff(a, m));
  LatticeField out = d(codiff(a, m));
  const LatticeField cd = codiff(d(a), m);
  field_axpy(out, 1.0, cd);
  return out;
}

double l2_inner(const LatticeField& a, const LatticeField& b,
                const MetricField& m) {
  check_layout(a, b, "l2_inner");
  check_metric(a, m, "l2_inner");
  if (a.degree != b.degree)
    throw std::invalid_argument("l2_inner: degree mismatch");
  const auto& kern = kernels::active();
  const std::size_t ns = a.nsites();
  const double cell = a.grid->cell_volume;

  double acc = 0.0;
  if (m.uniform_identity) {
    for (int i = 0; i < a.ncomp(); ++i)
      acc += kern.dot(a.comp(i), b.comp(i), ns);
    return cell * acc;
  }
  LatticeField u;
  apply_compound_field(m, true, b, u);
  for (int i = 0; i < a.ncomp(); ++i)
    acc += kern.dot3(m.vol.data(), a.comp(i), u.comp(i), ns);
  return cell * acc;
}

double l2_norm(const LatticeField& a, const MetricField& m) {
  return std::sqrt(std::max(0.0, l2_inner(a, a, m)));
}

Periods periods(const LatticeField& a) {
  const auto& kern = kernels::active();
  Periods p;
  p.degree = a.degree;
  p.values.resize(a.ncomp());
  const Grid& g = *a.grid;
  for (int i = 0; i < a.ncomp(); ++i) {
    const std::uint8_t mi = mask_of(a.degree, i);
    double cycle_area = 1.0;
    double transverse = 1.0;
    for (int ax = 0; ax < 7; ++ax) {
      if (mi & (1u << ax))
        cycle_area *= g.spacings[ax];
      else
        transverse *= static_cast<double>(g.extents[ax]);
    }
    p.values[i] =
        kern.sum(a.comp(i), a.nsites()) * cycle_area / transverse;
  }
  if (a.degree < 7) {
    const LatticeField da = d(a);
    double sup = 0.0;
    for (double v : da.data) sup = std::max(sup, std::fabs(v));
    p.d_residual = sup;
  }
  return p;
}

double integrate_top(const LatticeField& a) {
  if (a.degree != 7)
    throw std::invalid_argument("integrate_top requires a 7-form field");
  return a.grid->cell_volume * kernels::active().sum(a.comp(0), a.nsites());
}

LatticeField wedge_fields(const LatticeField& a, const LatticeField& b) {
  check_layout(a, b, "wedge_fields");
  if (a.degree + b.degree > 7)
    throw std::invalid_argument("wedge_fields: degree overflow");
  LatticeField out = make_field(a.grid, a.degree + b.degree);
  const auto& kern = kernels::active();
  const std::size_t ns = a.nsites();

  g2flow::par::parallel_for(ns, kChunk, [&](std::size_t s0, std::size_t s1) {
    const std::size_t len = s1 - s0;
    for (int i = 0; i < a.ncomp(); ++i) {
      const std::uint8_t mi = mask_of(a.degree, i);
      for (int j = 0; j < b.ncomp(); ++j) {
        const std::uint8_t mj = mask_of(b.degree, j);
        const int s = wedge_sign(mi, mj);
        if (!s) continue;
        kern.fmadd(out.comp(index_of_mask(mi | mj)) + s0,
                   static_cast<double>(s), a.comp(i) + s0, b.comp(j) + s0,
                   len);
      }
    }
  });
  return out;
}

LatticeField hodge_star_field(const LatticeField& a, const MetricField& m) {
  check_metric(a, m, "hodge_star_field");
  LatticeField out = make_field(a.grid, 7 - a.degree);
  const auto& kern = kernels::active();
  const std::size_t ns = a.nsites();

  LatticeField u;
  apply_compound_field(m, true, a, u);
  g2flow::par::parallel_for(ns, kChunk, [&](std::size_t s0, std::size_t s1) {
    const std::size_t len = s1 - s0;
    for (int j = 0; j < a.ncomp(); ++j) {
      const std::uint8_t mj = mask_of(a.degree, j);
      const double sgn = comp_sign(mj) > 0 ? 1.0 : -1.0;
      double* oc = out.comp(index_of_mask(127 ^ mj)) + s0;
      if (m.uniform_identity)
        kern.amul(oc, sgn, u.comp(j) + s0, len);
      else
        kern.fmadd(oc, sgn, u.comp(j) + s0, m.vol.data() + s0, len);
    }
  });
  return out;
}

void field_axpy(LatticeField& y, double s, const LatticeField& x) {
  check_layout(y, x, "field_axpy");
  if (y.degree != x.degree)
    throw std::invalid_argument("field_axpy: degree mismatch");
  const auto& kern = kernels::active();
  g2flow::par::parallel_for(
      y.data.size(), 1 << 16, [&](std::size_t b, std::size_t e) {
        kern.axpy(y.data.data() + b, s, x.data.data() + b, e - b);
      });
}

LatticeField field_scaled(const LatticeField& x, double s) {
  LatticeField out = x;
  const auto& kern = kernels::active();
  g2flow::par::parallel_for(
      out.data.size(), 1 << 16, [&](std::size_t b, std::size_t e) {
        kern.scale(out.data.data() + b, s, e - b);
      });
  return out;
}

double highest_frequency_fraction(const LatticeField& a) {
  const Grid& g = *a.grid;
  bool any_even = false;
  for (int ax = 0; ax < 7; ++ax)
    if (!g.degenerate[ax] && g.extents[ax] % 2 == 0) any_even = true;
  if (!any_even) return 0.0;

  const std::size_t ns = g.nsites;
  std::vector<std::complex<double>> buf(ns), line;
  double total = 0.0, nyq = 0.0, dc_energy = 0.0;

  for (int c = 0; c < a.ncomp(); ++c) {
    const double* src = a.comp(c);
    for (std::size_t s = 0; s < ns; ++s) buf[s] = src[s];

    for (int ax = 0; ax < 7; ++ax) {
      if (g.degenerate[ax]) continue;
      const int N = static_cast<int>(g.extents[ax]);
      const std::size_t st = g.strides[ax];
      line.resize(N);
      for (const std::uint32_t base : g.line_bases[ax]) {
        for (int j = 0; j < N; ++j) line[j] = buf[base + j * st];
        for (int mm = 0; mm < N; ++mm) {
          std::complex<double> acc = 0.0;
          for (int j = 0; j < N; ++j) {
            const double th = -2.0 * M_PI * mm * j / N;
            acc += line[j] * std::complex<double>(std::cos(th), std::sin(th));
          }
          buf[base + mm * st] = acc / static_cast<double>(N);
        }
      }
    }

    for (std::size_t s = 0; s < ns; ++s) {
      bool dc = true, hit = false;
      std::size_t rem = s;
      for (int ax = 0; ax < 7; ++ax) {
        const std::size_t m = (rem / g.strides[ax]) % g.extents[ax];
        rem %= g.strides[ax];
        if (m != 0) dc = false;
        if (!g.degenerate[ax] && g.extents[ax] % 2 == 0 &&
            m == static_cast<std::size_t>(g.extents[ax] / 2))
          hit = true;
      }
      const double e = std::norm(buf[s]);
      if (dc) {
        dc_energy += e;
        continue;
      }
      total += e;
      if (hit) nyq += e;
    }
  }
  // A constant field only has roundoff outside the DC bin; report 0 rather
  // than a ratio of noise.
  if (total <= 1e-24 * (total + dc_energy)) return 0.0;
  return nyq / total;
}

}  // namespace g2flow::lattice
