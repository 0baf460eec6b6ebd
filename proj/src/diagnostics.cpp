#include "g2flow/diagnostics.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "g2flow/exterior.hpp"
#include "g2flow/g2.hpp"
#include "g2flow/io.hpp"
#include "g2flow/parallel.hpp"

namespace g2flow::diag {

namespace ext = g2flow::exterior;
namespace g2 = g2flow::g2;
using lattice::Grid;
using lattice::GridPtr;
using lattice::LatticeField;
using lattice::MetricField;
using lattice::Scheme;
using lattice::sym_index;

namespace {

constexpr std::size_t kSiteChunk = 512;

// --- Exact accumulation -----------------------------------------------------
// Fixed-point accumulator holding the running sum exactly in base-2^32 limbs
// that span the whole double range. The accumulated state -- and therefore
// the rounded result -- does not depend on the order in which addends
// arrive, which is what makes the functionals bit-identical under
// whole-lattice translations (a translation only permutes the per-site
// integrand values). Carries are deferred; each addition moves a limb by
// less than 2^32, so up to 2^31 additions are safe, far above the admitted
// site counts.
class ExactSum {
 public:
  void add(double x) {
    if (x == 0.0) return;
    if (!std::isfinite(x)) {
      nonfinite_ = true;
      return;
    }
    int e = 0;
    const double m = std::frexp(x, &e);    // x = m * 2^e, |m| in [0.5, 1)
    const double ms = std::ldexp(m, 53);   // integer-valued, |ms| < 2^53
    const auto iv = static_cast<std::int64_t>(ms);
    const std::uint64_t mag =
        static_cast<std::uint64_t>(iv < 0 ? -iv : iv);
    const int p = e - 53 + kBias;  // bit offset of the mantissa LSB, >= 0
    const int q = p >> 5;
    const int s = p & 31;
    const unsigned __int128 w = static_cast<unsigned __int128>(mag) << s;
    const std::int64_t sign = iv < 0 ? -1 : 1;
    limb_[q] += sign * static_cast<std::int64_t>(
                           static_cast<std::uint64_t>(w) & 0xffffffffu);
    limb_[q + 1] += sign * static_cast<std::int64_t>(
                               static_cast<std::uint64_t>(w >> 32) &
                               0xffffffffu);
    limb_[q + 2] +=
        sign * static_cast<std::int64_t>(static_cast<std::uint64_t>(w >> 64));
  }

  double value() const {
    if (nonfinite_) return std::numeric_limits<double>::quiet_NaN();
    std::array<std::int64_t, kLimbs> v = limb_;
    std::int64_t carry = 0;
    for (std::size_t k = 0; k < kLimbs; ++k) {
      const std::int64_t t = v[k] + carry;
      carry = t >> 32;  // arithmetic shift = floor division by 2^32
      v[k] = t - (carry << 32);
    }
    long double acc = static_cast<long double>(carry);
    for (std::size_t k = kLimbs; k-- > 0;)
      acc = acc * 4294967296.0L + static_cast<long double>(v[k]);
    return static_cast<double>(std::ldexp(acc, -kBias));
  }

 private:
  // Mantissa LSB offset p = e - 53 + kBias stays >= 0 down to the smallest
  // subnormal (e = -1073) and tops out at 2123 < 32 * (kLimbs - 2).
  static constexpr int kBias = 1152;
  static constexpr std::size_t kLimbs = 70;
  std::array<std::int64_t, kLimbs> limb_{};
  bool nonfinite_ = false;
};

double exact_sum(const std::vector<double>& values) {
  ExactSum s;
  for (double v : values) s.add(v);
  return s.value();
}

// --- Per-site metric access --------------------------------------------------
ext::Metric metric_at(const MetricField& m, std::size_t site) {
  ext::Metric out;
  if (m.uniform_identity) return ext::euclidean_metric();
  const std::size_t ns = m.grid->nsites;
  for (int i = 0; i < 7; ++i)
    for (int j = i; j < 7; ++j) {
      const double gv = m.gsym[static_cast<std::size_t>(sym_index(i, j)) * ns + site];
      const double iv = m.ginv[static_cast<std::size_t>(sym_index(i, j)) * ns + site];
      out.g[i * 7 + j] = out.g[j * 7 + i] = gv;
      out.g_inv[i * 7 + j] = out.g_inv[j * 7 + i] = iv;
    }
  out.det = m.det[site];
  out.vol_scale = m.vol[site];
  return out;
}

double vol_at(const MetricField& m, std::size_t site) {
  return m.uniform_identity ? 1.0 : m.vol[site];
}

ext::AltForm site_form(const LatticeField& f, std::size_t s) {
  ext::AltForm a = ext::make_form(f.degree);
  for (int c = 0; c < f.ncomp(); ++c) a[c] = f.comp(c)[s];
  return a;
}

double sup_abs(const LatticeField& f) {
  double m = 0.0;
  for (double v : f.data) m = std::max(m, std::fabs(v));
  return m;
}

void check_same_grid(const GridPtr& a, const GridPtr& b, const char* what) {
  if (!a || !b || !a->same_layout(*b))
    throw std::invalid_argument(std::string(what) +
                                ": fields live on different grids");
}

// --- Central-difference stream derivative ------------------------------------
// Always the two-point stencil, regardless of the grid scheme: the curvature
// oracle and the covariant derivative stay independent of spectral
// machinery (Christoffel terms are products and not band-limited).
void stream_central_diff(const Grid& g, int axis, const double* in,
                         double* out) {
  const std::size_t ns = g.nsites;
  if (g.degenerate[axis]) {
    std::fill(out, out + ns, 0.0);
    return;
  }
  const int N = static_cast<int>(g.extents[axis]);
  const std::size_t st = g.strides[axis];
  const double half_inv_h = 0.5 / g.spacings[axis];
  const auto& bases = g.line_bases[axis];
  g2flow::par::parallel_for(bases.size(), 8, [&](std::size_t b0, std::size_t b1) {
    std::vector<double> x(N);
    for (std::size_t li = b0; li < b1; ++li) {
      const std::size_t base = bases[li];
      for (int j = 0; j < N; ++j) x[j] = in[base + j * st];
      for (int j = 0; j < N; ++j) {
        const int jp = (j + 1 == N) ? 0 : j + 1;
        const int jm = (j == 0) ? N - 1 : j - 1;
        out[base + j * st] = (x[jp] - x[jm]) * half_inv_h;
      }
    }
  });
}

// --- Christoffel symbols ------------------------------------------------------
// gamma[(k * 28 + sym(i,j)) * ns + site] = Gamma^k_{ij} of the metric field,
// from central differences of the packed metric streams.
std::vector<double> christoffels(const MetricField& mf) {
  const std::size_t ns = mf.grid->nsites;
  std::vector<double> gamma(static_cast<std::size_t>(196) * ns, 0.0);
  if (mf.uniform_identity) return gamma;

  std::vector<double> dg(static_cast<std::size_t>(196) * ns);
  for (int a = 0; a < 7; ++a)
    for (int s = 0; s < 28; ++s)
      stream_central_diff(*mf.grid, a,
                          mf.gsym.data() + static_cast<std::size_t>(s) * ns,
                          dg.data() + (static_cast<std::size_t>(a) * 28 + s) * ns);

  g2flow::par::parallel_for(ns, kSiteChunk, [&](std::size_t s0, std::size_t s1) {
    for (std::size_t s = s0; s < s1; ++s) {
      double ginv[49];
      for (int i = 0; i < 7; ++i)
        for (int j = i; j < 7; ++j) {
          const double v =
              mf.ginv[static_cast<std::size_t>(sym_index(i, j)) * ns + s];
          ginv[i * 7 + j] = ginv[j * 7 + i] = v;
        }
      auto dgv = [&](int a, int i, int j) {
        return dg[(static_cast<std::size_t>(a) * 28 + sym_index(i, j)) * ns + s];
      };
      for (int i = 0; i < 7; ++i)
        for (int j = i; j < 7; ++j)
          for (int k = 0; k < 7; ++k) {
            double acc = 0.0;
            for (int l = 0; l < 7; ++l)
              acc += ginv[k * 7 + l] * (dgv(i, j, l) + dgv(j, i, l) - dgv(l, i, j));
            gamma[(static_cast<std::size_t>(k) * 28 + sym_index(i, j)) * ns + s] =
                0.5 * acc;
          }
    }
  });
  return gamma;
}

}  // namespace

SymTensorField make_sym_field(GridPtr grid) {
  SymTensorField f;
  f.grid = std::move(grid);
  f.data.assign(static_cast<std::size_t>(28) * f.grid->nsites, 0.0);
  return f;
}

SymTensorField sym_from_metric(const MetricField& m) {
  SymTensorField f = make_sym_field(m.grid);
  const std::size_t ns = m.grid->nsites;
  if (m.uniform_identity) {
    for (int i = 0; i < 7; ++i)
      std::fill_n(f.comp(sym_index(i, i)), ns, 1.0);
  } else {
    std::copy(m.gsym.begin(), m.gsym.end(), f.data.begin());
  }
  return f;
}

SymTensorField ricci_oracle(const MetricField& mf) {
  SymTensorField ric = make_sym_field(mf.grid);
  if (mf.uniform_identity) return ric;
  const Grid& g = *mf.grid;
  const std::size_t ns = g.nsites;

  const std::vector<double> gamma = christoffels(mf);

  // S_j = Gamma^k_{kj}.
  std::vector<double> S(static_cast<std::size_t>(7) * ns, 0.0);
  g2flow::par::parallel_for(ns, 1 << 14, [&](std::size_t s0, std::size_t s1) {
    for (std::size_t s = s0; s < s1; ++s)
      for (int j = 0; j < 7; ++j) {
        double acc = 0.0;
        for (int k = 0; k < 7; ++k)
          acc += gamma[(static_cast<std::size_t>(k) * 28 + sym_index(k, j)) * ns + s];
        S[static_cast<std::size_t>(j) * ns + s] = acc;
      }
  });

  // T1_ij = sum_k d_k Gamma^k_{ij};  T2_ij = (d_i S_j + d_j S_i) / 2.
  // T2 is symmetrized explicitly: the continuum term is a second derivative
  // of log sqrt(det g) and symmetric, but the discrete product form is not.
  std::vector<double> T1(static_cast<std::size_t>(28) * ns, 0.0);
  std::vector<double> T2(static_cast<std::size_t>(28) * ns, 0.0);
  std::vector<double> scratch(ns);
  for (int i = 0; i < 7; ++i)
    for (int j = i; j < 7; ++j) {
      const std::size_t sidx = static_cast<std::size_t>(sym_index(i, j));
      double* t1 = T1.data() + sidx * ns;
      for (int k = 0; k < 7; ++k) {
        stream_central_diff(
            g, k, gamma.data() + (static_cast<std::size_t>(k) * 28 + sidx) * ns,
            scratch.data());
        for (std::size_t s = 0; s < ns; ++s) t1[s] += scratch[s];
      }
      double* t2 = T2.data() + sidx * ns;
      stream_central_diff(g, i, S.data() + static_cast<std::size_t>(j) * ns,
                          scratch.data());
      for (std::size_t s = 0; s < ns; ++s) t2[s] = 0.5 * scratch[s];
      stream_central_diff(g, j, S.data() + static_cast<std::size_t>(i) * ns,
                          scratch.data());
      for (std::size_t s = 0; s < ns; ++s) t2[s] += 0.5 * scratch[s];
    }

  // Ric_ij = T1 - T2 + S_l Gamma^l_{ij} - Gamma^k_{il} Gamma^l_{kj}.
  g2flow::par::parallel_for(ns, kSiteChunk, [&](std::size_t s0, std::size_t s1) {
    for (std::size_t s = s0; s < s1; ++s) {
      auto G = [&](int k, int i, int j) {
        return gamma[(static_cast<std::size_t>(k) * 28 + sym_index(i, j)) * ns + s];
      };
      for (int i = 0; i < 7; ++i)
        for (int j = i; j < 7; ++j) {
          double q1 = 0.0, q2 = 0.0;
          for (int l = 0; l < 7; ++l) {
            q1 += S[static_cast<std::size_t>(l) * ns + s] * G(l, i, j);
            for (int k = 0; k < 7; ++k) q2 += G(k, i, l) * G(l, k, j);
          }
          const std::size_t sidx = static_cast<std::size_t>(sym_index(i, j));
          ric.comp(static_cast<int>(sidx))[s] =
              T1[sidx * ns + s] - T2[sidx * ns + s] + q1 - q2;
        }
    }
  });
  return ric;
}

std::vector<double> scalar_curvature(const MetricField& mf) {
  const std::size_t ns = mf.grid->nsites;
  std::vector<double> R(ns, 0.0);
  if (mf.uniform_identity) return R;
  const SymTensorField ric = ricci_oracle(mf);
  g2flow::par::parallel_for(ns, 1 << 14, [&](std::size_t s0, std::size_t s1) {
    for (std::size_t s = s0; s < s1; ++s) {
      double acc = 0.0;
      for (int i = 0; i < 7; ++i)
        for (int j = i; j < 7; ++j) {
          const double w = (i == j) ? 1.0 : 2.0;
          acc += w * mf.ginv[static_cast<std::size_t>(sym_index(i, j)) * ns + s] *
                 ric.comp(sym_index(i, j))[s];
        }
      R[s] = acc;
    }
  });
  return R;
}

double scalar_curvature_integral(const MetricField& mf) {
  if (mf.uniform_identity) return 0.0;
  const std::size_t ns = mf.grid->nsites;
  const std::vector<double> R = scalar_curvature(mf);
  std::vector<double> integrand(ns);
  for (std::size_t s = 0; s < ns; ++s) integrand[s] = R[s] * mf.vol[s];
  return exact_sum(integrand) * mf.grid->cell_volume;
}

double volume_functional(const field::StructureField& s,
                         double* mutual_rel_discrepancy) {
  const std::size_t ns = s.phi.nsites();
  std::vector<double> density(ns), tops(ns);
  // Fixed complementary-pair table for the top coefficient of phi ^ psi.
  static const auto pairs = [] {
    std::array<std::array<int, 2>, 35> t{};
    for (int i = 0; i < 35; ++i) {
      const std::uint8_t mi = ext::mask_of(3, i);
      const std::uint8_t mc = static_cast<std::uint8_t>(0x7f ^ mi);
      t[i] = {ext::index_of_mask(mc), ext::wedge_sign(mi, mc)};
    }
    return t;
  }();

  g2flow::par::parallel_for(ns, 1 << 13, [&](std::size_t s0, std::size_t s1) {
    for (std::size_t st = s0; st < s1; ++st) {
      density[st] = vol_at(s.metric, st);
      double top = 0.0;
      for (int i = 0; i < 35; ++i)
        top += pairs[i][1] * s.phi.comp(i)[st] * s.psi.comp(pairs[i][0])[st];
      tops[st] = top;
    }
  });

  const double r1 = exact_sum(density) * s.phi.grid->cell_volume;
  const double r2 = exact_sum(tops) * s.phi.grid->cell_volume / 7.0;
  if (mutual_rel_discrepancy) {
    const double scale = std::max({std::fabs(r1), std::fabs(r2), 1e-300});
    *mutual_rel_discrepancy = std::fabs(r1 - r2) / scale;
  }
  return r1;
}

double dirichlet_D(const field::StructureField& s) {
  const std::size_t ns = s.phi.nsites();
  const LatticeField dphi = lattice::d(s.phi);
  const LatticeField dpsi = lattice::d(s.psi);
  std::vector<double> integrand(ns);
  g2flow::par::parallel_for(ns, kSiteChunk, [&](std::size_t s0, std::size_t s1) {
    for (std::size_t st = s0; st < s1; ++st) {
      const ext::Metric m = metric_at(s.metric, st);
      const double n4 = ext::form_norm2(site_form(dphi, st), m);
      const double n5 = ext::form_norm2(site_form(dpsi, st), m);
      integrand[st] = 0.5 * (n4 + n5) * m.vol_scale;
    }
  });
  return exact_sum(integrand) * s.phi.grid->cell_volume;
}

namespace {

// Exact-summed integrals of |tau_i|^2 against vol_g.
std::array<double, 4> torsion_energy_integrals(const field::StructureField& s,
                                               const field::TorsionFields& tf) {
  const std::size_t ns = s.phi.nsites();
  std::array<std::vector<double>, 4> integrand;
  for (auto& v : integrand) v.resize(ns);
  g2flow::par::parallel_for(ns, kSiteChunk, [&](std::size_t s0, std::size_t s1) {
    for (std::size_t st = s0; st < s1; ++st) {
      const ext::Metric m = metric_at(s.metric, st);
      const double w = m.vol_scale;
      const double t0 = tf.tau0.comp(0)[st];
      integrand[0][st] = t0 * t0 * w;
      integrand[1][st] = ext::form_norm2(site_form(tf.tau1, st), m) * w;
      integrand[2][st] = ext::form_norm2(site_form(tf.tau2, st), m) * w;
      integrand[3][st] = ext::form_norm2(site_form(tf.tau3, st), m) * w;
    }
  });
  std::array<double, 4> out{};
  for (int i = 0; i < 4; ++i)
    out[i] = exact_sum(integrand[i]) * s.phi.grid->cell_volume;
  return out;
}

}  // namespace

std::array<double, 4> torsion_l2_norms(const field::StructureField& s) {
  const field::TorsionFields tf = field::torsion_fields(s);
  std::array<double, 4> e = torsion_energy_integrals(s, tf);
  for (double& v : e) v = std::sqrt(std::max(v, 0.0));
  return e;
}

double dirichlet_Dnu(const field::StructureField& s,
                     const std::array<double, 4>& nu) {
  const field::TorsionFields tf = field::torsion_fields(s);
  const std::array<double, 4> e = torsion_energy_integrals(s, tf);
  double acc = 0.0;
  for (int i = 0; i < 4; ++i) acc += 0.5 * nu[i] * e[i];
  return acc;
}

double dirichlet_C(const field::StructureField& s) {
  const Grid& g = *s.phi.grid;
  const std::size_t ns = g.nsites;
  const std::vector<double> gamma = christoffels(s.metric);

  // Central-difference streams of all 35 coefficients along all axes.
  std::vector<double> dphi(static_cast<std::size_t>(7) * 35 * ns);
  for (int a = 0; a < 7; ++a)
    for (int c = 0; c < 35; ++c)
      stream_central_diff(g, a, s.phi.comp(c),
                          dphi.data() + (static_cast<std::size_t>(a) * 35 + c) * ns);

  // Connection action on a 3-form coefficient array: for each component J,
  // each axis position, and each replacement index c, the target component
  // and permutation sign. Entries with a repeated index are dropped.
  struct Term {
    std::uint8_t src, upper, lower, dst;
    std::int8_t sign;
  };
  static const auto terms = [] {
    std::vector<Term> t;
    for (int ci = 0; ci < 35; ++ci) {
      const std::uint8_t mask = ext::mask_of(3, ci);
      int axes[7];
      ext::axes_of(mask, axes);
      for (int p = 0; p < 3; ++p)
        for (int c = 0; c < 7; ++c) {
          if (c == axes[p]) {
            t.push_back({static_cast<std::uint8_t>(ci),
                         static_cast<std::uint8_t>(axes[p]),
                         static_cast<std::uint8_t>(c),
                         static_cast<std::uint8_t>(ci), 1});
            continue;
          }
          if (mask & (1u << c)) continue;  // repeated index
          const std::uint8_t stripped =
              static_cast<std::uint8_t>(mask ^ (1u << axes[p]));
          const int sgn = ext::wedge_sign(static_cast<std::uint8_t>(1u << c),
                                          stripped);
          // Reinsert in sorted position: sign of moving e^c past the
          // remaining factors, times the sign of extracting e^{axes[p]}.
          const int ext_sgn = ext::wedge_sign(
              static_cast<std::uint8_t>(1u << axes[p]), stripped);
          t.push_back({static_cast<std::uint8_t>(ci),
                       static_cast<std::uint8_t>(axes[p]),
                       static_cast<std::uint8_t>(c),
                       static_cast<std::uint8_t>(
                           ext::index_of_mask(stripped | (1u << c))),
                       static_cast<std::int8_t>(sgn * ext_sgn)});
        }
    }
    return t;
  }();

  std::vector<double> integrand(ns);
  g2flow::par::parallel_for(ns, kSiteChunk, [&](std::size_t s0, std::size_t s1) {
    double grad[7][35];
    double w[7][35];
    for (std::size_t st = s0; st < s1; ++st) {
      const ext::Metric m = metric_at(s.metric, st);
      auto G = [&](int k, int i, int j) {
        return gamma[(static_cast<std::size_t>(k) * 28 + sym_index(i, j)) * ns + st];
      };
      for (int a = 0; a < 7; ++a) {
        for (int c = 0; c < 35; ++c)
          grad[a][c] = dphi[(static_cast<std::size_t>(a) * 35 + c) * ns + st];
        for (const Term& t : terms)
          grad[a][t.dst] -=
              t.sign * G(t.upper, a, t.lower) * s.phi.comp(t.src)[st];
      }
      for (int a = 0; a < 7; ++a)
        ext::apply_compound(3, m, true, grad[a], w[a]);
      double total = 0.0;
      for (int a = 0; a < 7; ++a)
        for (int b = 0; b < 7; ++b) {
          double dot = 0.0;
          for (int c = 0; c < 35; ++c) dot += grad[a][c] * w[b][c];
          total += m.g_inv[a * 7 + b] * dot;
        }
      integrand[st] = 0.5 * total * m.vol_scale;
    }
  });
  return exact_sum(integrand) * g.cell_volume;
}

SymTensorField ricci_from_laplacian(const field::StructureField& s) {
  const LatticeField dphi = lattice::d(s.phi);
  const double dres = sup_abs(dphi);
  if (!(dres < 1e-8))
    throw std::invalid_argument(
        "ricci_from_laplacian: structure is not closed (sup |d phi| = " +
        io::format_double(dres) + ")");

  const std::size_t ns = s.phi.nsites();
  const LatticeField lap = lattice::hodge_laplacian(s.phi, s.metric);
  const field::TorsionFields tf = field::torsion_fields(s);
  const double a_const = g2::ji_constants().a;

  SymTensorField ric = make_sym_field(s.phi.grid);
  g2flow::par::parallel_for(ns, kSiteChunk, [&](std::size_t s0, std::size_t s1) {
    for (std::size_t st = s0; st < s1; ++st) {
      const g2::G2Frame fr = g2::make_frame(site_form(s.phi, st));
      const ext::AltForm lap_site = site_form(lap, st);

      // Invert i on the Laplacian: traceless part through j/a, trace part
      // from <Lap phi, phi> = 6 tr A.
      const double trA =
          ext::form_inner(lap_site, fr.phi, fr.metric) / 6.0;
      const ext::AltForm g27 = g2::project3(fr, lap_site, 27);
      double A[49];
      g2::j_map(fr, g27, A);
      for (double& v : A) v /= a_const;
      for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 7; ++j) A[i * 7 + j] += (trA / 7.0) * fr.metric.g[i * 7 + j];

      const ext::AltForm tau2 = site_form(tf.tau2, st);
      const double t2n = ext::form_norm2(tau2, fr.metric);
      const ext::AltForm sigma =
          ext::hodge_star(ext::wedge(tau2, tau2), fr.metric);
      double jsig[49];
      g2::j_map(fr, sigma, jsig);

      for (int i = 0; i < 7; ++i)
        for (int j = i; j < 7; ++j)
          ric.comp(sym_index(i, j))[st] =
              2.0 * (-A[i * 7 + j] +
                     kRicciTau2GCoeff * t2n * fr.metric.g[i * 7 + j] +
                     kRicciTau2JCoeff * jsig[i * 7 + j]);
    }
  });
  return ric;
}

SymTensorField gravitational_tensor(const SymTensorField& k,
                                    const MetricField& h) {
  check_same_grid(k.grid, h.grid, "gravitational_tensor");
  const std::size_t ns = k.nsites();
  SymTensorField out = make_sym_field(k.grid);
  g2flow::par::parallel_for(ns, 1 << 13, [&](std::size_t s0, std::size_t s1) {
    for (std::size_t st = s0; st < s1; ++st) {
      const ext::Metric m = metric_at(h, st);
      double trk = 0.0;
      for (int i = 0; i < 7; ++i)
        for (int j = i; j < 7; ++j) {
          const double w = (i == j) ? 1.0 : 2.0;
          trk += w * m.g_inv[i * 7 + j] * k.comp(sym_index(i, j))[st];
        }
      for (int c = 0; c < 28; ++c) out.comp(c)[st] = k.comp(c)[st];
      for (int i = 0; i < 7; ++i)
        for (int j = i; j < 7; ++j)
          out.comp(sym_index(i, j))[st] -= 0.5 * trk * m.g[i * 7 + j];
    }
  });
  return out;
}

LatticeField divergence_oneform(const SymTensorField& k,
                                const MetricField& h) {
  check_same_grid(k.grid, h.grid, "divergence_oneform");
  const Grid& g = *k.grid;
  const std::size_t ns = g.nsites;
  const std::vector<double> gamma = christoffels(h);

  std::vector<double> dk(static_cast<std::size_t>(7) * 28 * ns);
  for (int a = 0; a < 7; ++a)
    for (int c = 0; c < 28; ++c)
      stream_central_diff(g, a, k.comp(c),
                          dk.data() + (static_cast<std::size_t>(a) * 28 + c) * ns);

  LatticeField out = lattice::make_field(k.grid, 1);
  g2flow::par::parallel_for(ns, kSiteChunk, [&](std::size_t s0, std::size_t s1) {
    for (std::size_t st = s0; st < s1; ++st) {
      const ext::Metric m = metric_at(h, st);
      auto G = [&](int kk, int i, int j) {
        return gamma[(static_cast<std::size_t>(kk) * 28 + sym_index(i, j)) * ns + st];
      };
      auto K = [&](int i, int j) { return k.comp(sym_index(i, j))[st]; };
      auto DK = [&](int l, int i, int j) {
        return dk[(static_cast<std::size_t>(l) * 28 + sym_index(i, j)) * ns + st];
      };
      for (int j = 0; j < 7; ++j) {
        double acc = 0.0;
        for (int i = 0; i < 7; ++i)
          for (int l = 0; l < 7; ++l) {
            double cov = DK(l, i, j);
            for (int mm = 0; mm < 7; ++mm)
              cov -= G(mm, l, i) * K(mm, j) + G(mm, l, j) * K(i, mm);
            acc += m.g_inv[i * 7 + l] * cov;
          }
        out.comp(j)[st] = -acc;
      }
    }
  });
  return out;
}

LatticeField deturck_vector(const MetricField& h, const MetricField& k) {
  check_same_grid(h.grid, k.grid, "deturck_vector");
  const std::size_t ns = h.grid->nsites;
  const SymTensorField kt = sym_from_metric(k);
  const SymTensorField Gk = gravitational_tensor(kt, h);
  const LatticeField omega = divergence_oneform(Gk, h);

  LatticeField out = lattice::make_field(h.grid, 1);
  std::atomic<bool> singular{false};
  g2flow::par::parallel_for(ns, 1 << 12, [&](std::size_t s0, std::size_t s1) {
    for (std::size_t st = s0; st < s1; ++st) {
      const ext::Metric mh = metric_at(h, st);
      const ext::Metric mk = metric_at(k, st);
      // khat acting on 1-forms: (khat a)_i = k_ij h^{jl} a_l.
      double M[49];
      double scale = 0.0;
      for (int i = 0; i < 7; ++i)
        for (int l = 0; l < 7; ++l) {
          double acc = 0.0;
          for (int j = 0; j < 7; ++j)
            acc += mk.g[i * 7 + j] * mh.g_inv[j * 7 + l];
          M[i * 7 + l] = acc;
          scale = std::max(scale, std::fabs(acc));
        }
      double rhs[7];
      for (int i = 0; i < 7; ++i) rhs[i] = omega.comp(i)[st];

      // Gaussian elimination with partial pivoting.
      int piv[7];
      for (int i = 0; i < 7; ++i) piv[i] = i;
      bool bad = false;
      for (int col = 0; col < 7 && !bad; ++col) {
        int best = col;
        for (int r = col + 1; r < 7; ++r)
          if (std::fabs(M[piv[r] * 7 + col]) > std::fabs(M[piv[best] * 7 + col]))
            best = r;
        std::swap(piv[col], piv[best]);
        const double p = M[piv[col] * 7 + col];
        if (std::fabs(p) <= 1e-12 * std::max(scale, 1e-300)) {
          bad = true;
          break;
        }
        for (int r = col + 1; r < 7; ++r) {
          const double f = M[piv[r] * 7 + col] / p;
          for (int cc = col; cc < 7; ++cc)
            M[piv[r] * 7 + cc] -= f * M[piv[col] * 7 + cc];
          rhs[piv[r]] -= f * rhs[piv[col]];
        }
      }
      if (bad) {
        singular.store(true, std::memory_order_relaxed);
        continue;
      }
      double alpha[7];
      for (int col = 6; col >= 0; --col) {
        double v = rhs[piv[col]];
        for (int cc = col + 1; cc < 7; ++cc)
          v -= M[piv[col] * 7 + cc] * alpha[cc];
        alpha[col] = v / M[piv[col] * 7 + col];
      }
      for (int i = 0; i < 7; ++i) {
        double acc = 0.0;
        for (int j = 0; j < 7; ++j) acc += mh.g_inv[i * 7 + j] * alpha[j];
        out.comp(i)[st] = acc;
      }
    }
  });
  if (singular.load())
    throw std::invalid_argument(
        "deturck_vector: background is not invertible on 1-forms");
  return out;
}

LatticeField spectral_heat_reference(const LatticeField& initial,
                                     const MetricField& m, double t) {
  check_same_grid(initial.grid, m.grid, "spectral_heat_reference");
  if (!m.uniform_identity)
    throw std::invalid_argument(
        "spectral_heat_reference: flat identity metric required");
  if (!std::isfinite(t))
    throw std::invalid_argument("spectral_heat_reference: non-finite time");

  const Grid& g = *initial.grid;
  const std::size_t ns = g.nsites;

  // Per-axis eigenvalue tables of the discrete Laplacian symbol.
  std::array<std::vector<double>, 7> mu;
  for (int a = 0; a < 7; ++a) {
    const int N = static_cast<int>(g.extents[a]);
    mu[a].assign(N, 0.0);
    if (g.degenerate[a]) continue;
    const double L = N * g.spacings[a];
    for (int mm = 0; mm < N; ++mm) {
      if (g.scheme == Scheme::spectral) {
        int ms = mm;
        if (2 * mm == N)
          ms = 0;  // Nyquist multiplier is zeroed in the derivative
        else if (2 * mm > N)
          ms = mm - N;
        const double kv = 2.0 * M_PI * ms / L;
        mu[a][mm] = kv * kv;
      } else {
        const double sv = std::sin(2.0 * M_PI * mm / N) / g.spacings[a];
        mu[a][mm] = sv * sv;
      }
    }
  }

  LatticeField out = lattice::make_field(initial.grid, initial.degree);
  std::vector<std::complex<double>> buf(ns), tmp(ns);

  double norm = 1.0;
  for (int a = 0; a < 7; ++a)
    if (!g.degenerate[a]) norm /= static_cast<double>(g.extents[a]);

  for (int c = 0; c < initial.ncomp(); ++c) {
    const double* in = initial.comp(c);
    for (std::size_t s = 0; s < ns; ++s) buf[s] = in[s];

    // Forward transforms, axis by axis.
    for (int a = 0; a < 7; ++a) {
      if (g.degenerate[a]) continue;
      const int N = static_cast<int>(g.extents[a]);
      const std::size_t st = g.strides[a];
      const auto& bases = g.line_bases[a];
      g2flow::par::parallel_for(bases.size(), 4, [&](std::size_t b0, std::size_t b1) {
        std::vector<std::complex<double>> line(N);
        for (std::size_t li = b0; li < b1; ++li) {
          const std::size_t base = bases[li];
          for (int j = 0; j < N; ++j) line[j] = buf[base + j * st];
          for (int kmode = 0; kmode < N; ++kmode) {
            std::complex<double> acc = 0.0;
            for (int j = 0; j < N; ++j) {
              const double ang = -2.0 * M_PI * j * kmode / N;
              acc += line[j] * std::complex<double>(std::cos(ang), std::sin(ang));
            }
            tmp[base + kmode * st] = acc;
          }
        }
      });
      std::swap(buf, tmp);
    }

    // Decay factors.
    g2flow::par::parallel_for(ns, 1 << 14, [&](std::size_t s0, std::size_t s1) {
      for (std::size_t s = s0; s < s1; ++s) {
        double lambda = 0.0;
        for (int a = 0; a < 7; ++a) {
          const std::size_t ma =
              (s / g.strides[a]) % static_cast<std::size_t>(g.extents[a]);
          lambda += mu[a][ma];
        }
        buf[s] *= std::exp(-lambda * t) * norm;
      }
    });

    // Inverse transforms.
    for (int a = 0; a < 7; ++a) {
      if (g.degenerate[a]) continue;
      const int N = static_cast<int>(g.extents[a]);
      const std::size_t st = g.strides[a];
      const auto& bases = g.line_bases[a];
      g2flow::par::parallel_for(bases.size(), 4, [&](std::size_t b0, std::size_t b1) {
        std::vector<std::complex<double>> line(N);
        for (std::size_t li = b0; li < b1; ++li) {
          const std::size_t base = bases[li];
          for (int kmode = 0; kmode < N; ++kmode) line[kmode] = buf[base + kmode * st];
          for (int j = 0; j < N; ++j) {
            std::complex<double> acc = 0.0;
            for (int kmode = 0; kmode < N; ++kmode) {
              const double ang = 2.0 * M_PI * j * kmode / N;
              acc += line[kmode] * std::complex<double>(std::cos(ang), std::sin(ang));
            }
            tmp[base + j * st] = acc;
          }
        }
      });
      std::swap(buf, tmp);
    }

    double* oc = out.comp(c);
    for (std::size_t s = 0; s < ns; ++s) oc[s] = buf[s].real();
  }
  return out;
}

LatticeField dirichlet_gradient_field(const LatticeField& phi,
                                      const std::array<double, 4>& nu) {
  if (phi.degree != 3)
    throw std::invalid_argument("dirichlet_gradient_field: 3-form expected");
  const std::size_t ns = phi.nsites();
  const std::size_t dof = static_cast<std::size_t>(35) * ns;
  if (dof > kGradientDofLimit)
    throw std::invalid_argument(
        "dirichlet_gradient_field: " + std::to_string(dof) +
        " coefficients exceed the " + std::to_string(kGradientDofLimit) +
        "-DOF limit for numerical differentiation");

  double sup = 0.0;
  for (double v : phi.data) sup = std::max(sup, std::fabs(v));
  const double step = 1e-6 * (sup > 0.0 ? sup : 1.0);

  LatticeField out = lattice::make_field(phi.grid, 3);
  g2flow::par::parallel_for(dof, 4, [&](std::size_t d0, std::size_t d1) {
    LatticeField work = phi;
    for (std::size_t dd = d0; dd < d1; ++dd) {
      const double saved = work.data[dd];
      work.data[dd] = saved + step;
      const double ep = dirichlet_Dnu(field::analyze_structure(work), nu);
      work.data[dd] = saved - step;
      const double em = dirichlet_Dnu(field::analyze_structure(work), nu);
      work.data[dd] = saved;
      out.data[dd] = -(ep - em) / (2.0 * step);
    }
  });
  return out;
}

DiagnosticsRecord analyze(const field::StructureField& s, double t) {
  DiagnosticsRecord r;
  r.t = t;
  r.vol = volume_functional(s);
  r.energy_C = dirichlet_C(s);
  r.energy_D = dirichlet_D(s);

  const field::TorsionFields tf = field::torsion_fields(s);
  const std::array<double, 4> e = torsion_energy_integrals(s, tf);
  r.energy_Dnu = 0.0;
  for (int i = 0; i < 4; ++i) {
    r.energy_Dnu += 0.5 * kTorsionWeightsForD[i] * e[i];
    r.torsion_norms[i] = std::sqrt(std::max(e[i], 0.0));
  }
  r.scalar_curvature_integral = scalar_curvature_integral(s.metric);
  r.d_residual = sup_abs(lattice::d(s.phi));
  r.dstar_residual = sup_abs(lattice::d(s.psi));
  r.period_drift = 0.0;

  // Scalar part of the closed-structure Laplacian bookkeeping:
  // sup | <Lap phi, phi> - |tau2|^2 | / 21.
  const LatticeField lap = lattice::hodge_laplacian(s.phi, s.metric);
  const std::size_t ns = s.phi.nsites();
  std::vector<double> resid(ns);
  g2flow::par::parallel_for(ns, kSiteChunk, [&](std::size_t s0, std::size_t s1) {
    for (std::size_t st = s0; st < s1; ++st) {
      const ext::Metric m = metric_at(s.metric, st);
      const double ip = ext::form_inner(site_form(lap, st), site_form(s.phi, st), m);
      const double t2 = ext::form_norm2(site_form(tf.tau2, st), m);
      resid[st] = std::fabs(ip - t2) / 21.0;
    }
  });
  r.f0_identity_residual = 0.0;
  for (double v : resid) r.f0_identity_residual = std::max(r.f0_identity_residual, v);

  r.highest_frequency_fraction = lattice::highest_frequency_fraction(s.phi);
  return r;
}

std::string csv_header() {
  return "t,vol,energy_C,energy_D,energy_Dnu,tau0_l2,tau1_l2,tau2_l2,tau3_l2,"
         "scalar_curvature_integral,d_residual,dstar_residual,period_drift,"
         "f0_identity_residual,highest_frequency_fraction";
}

std::string csv_row(const DiagnosticsRecord& r) {
  const double cols[15] = {r.t,
                           r.vol,
                           r.energy_C,
                           r.energy_D,
                           r.energy_Dnu,
                           r.torsion_norms[0],
                           r.torsion_norms[1],
                           r.torsion_norms[2],
                           r.torsion_norms[3],
                           r.scalar_curvature_integral,
                           r.d_residual,
                           r.dstar_residual,
                           r.period_drift,
                           r.f0_identity_residual,
                           r.highest_frequency_fraction};
  std::string out;
  for (int i = 0; i < 15; ++i) {
    if (i) out.push_back(',');
    out += io::format_double(cols[i]);
  }
  return out;
}

}  // namespace g2flow::diag
