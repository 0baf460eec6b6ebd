// Empirical calibration of the pointwise constants used by the curvature
// extraction, against the metric-only finite-difference oracle. Run once per
// toolchain change; the pinned values live in g2flow/diagnostics.hpp.
//
// Reported:
//   1. the j(i(.)) constants (a, b) and the a + 7b = 36 check;
//   2. the scalar bookkeeping <Lap phi, phi> / |tau2|^2 on closed fields
//      (expected -> 1 under grid refinement);
//   3. the least-squares fit (c, x, y) of
//         i^{-1}(Lap phi) = -c Ric + x |tau2|^2 g + y j(*(tau2 ^ tau2))
//      over all tensor components and sites, Richardson-extrapolated in h,
//      with the nearest small rationals and the trace constraint
//      c/2 + 7x - 6y = 1/6 evaluated for the extrapolated values.

#include <array>
#include <cmath>
#include <cstdio>
#include <vector>

#include "g2flow/diagnostics.hpp"
#include "g2flow/exterior.hpp"
#include "g2flow/g2.hpp"
#include "g2flow/g2field.hpp"
#include "g2flow/lattice.hpp"

namespace ext = g2flow::exterior;
namespace g2 = g2flow::g2;
namespace lat = g2flow::lattice;
namespace fld = g2flow::field;
namespace diag = g2flow::diag;

namespace {

struct FitResult {
  double c = 0.0, x = 0.0, y = 0.0;  // free 3-parameter fit
  double xf = 0.0, yf = 0.0;         // 2-parameter fit, Ricci coefficient frozen at 1/2
  double f0_ratio = 0.0;             // <Lap phi, phi> / |tau2|^2, site-averaged
  double h = 0.0;
};

// Solve the 3x3 normal equations  (M)(c x y)^T = rhs.
void solve3(const double M[9], const double rhs[3], double out[3]) {
  double a[12] = {M[0], M[1], M[2], rhs[0], M[3], M[4],
                  M[5], rhs[1], M[6], M[7], M[8], rhs[2]};
  for (int col = 0; col < 3; ++col) {
    int best = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::fabs(a[r * 4 + col]) > std::fabs(a[best * 4 + col])) best = r;
    for (int c2 = 0; c2 < 4; ++c2) std::swap(a[col * 4 + c2], a[best * 4 + c2]);
    for (int r = 0; r < 3; ++r) {
      if (r == col) continue;
      const double f = a[r * 4 + col] / a[col * 4 + col];
      for (int c2 = col; c2 < 4; ++c2) a[r * 4 + c2] -= f * a[col * 4 + c2];
    }
  }
  for (int i = 0; i < 3; ++i) out[i] = a[i * 4 + 3] / a[i * 4 + i];
}

ext::AltForm site_form(const lat::LatticeField& f, std::size_t s) {
  ext::AltForm a = ext::make_form(f.degree);
  for (int c = 0; c < f.ncomp(); ++c) a[c] = f.comp(c)[s];
  return a;
}

FitResult fit_at(int n, double eps) {
  const double L = 3.1;
  lat::GridPtr g = lat::make_grid({n, n, n, 1, 1, 1, 1},
                                  {L / n, L / n, L / n, 1, 1, 1, 1},
                                  lat::Scheme::spectral);
  const lat::LatticeField base = fld::uniform_standard_phi(g);
  const lat::LatticeField eta =
      fld::band_limited_field(g, 2, 424243, 1, 2, 1.0, 0.0);
  const fld::ClosedPerturbation cp = fld::make_closed_perturbation(base, eta, eps);
  const fld::StructureField s = fld::analyze_structure(cp.phi);

  const lat::LatticeField lap = lat::hodge_laplacian(s.phi, s.metric);
  const fld::TorsionFields tf = fld::torsion_fields(s);
  const diag::SymTensorField ric = diag::ricci_oracle(s.metric);
  const double a_const = g2::ji_constants().a;

  const std::size_t ns = g->nsites;
  double M[9] = {};
  double rhs[3] = {};
  double ratio_num = 0.0, ratio_den = 0.0;
  for (std::size_t st = 0; st < ns; ++st) {
    const g2::G2Frame fr = g2::make_frame(site_form(s.phi, st));
    const ext::AltForm lap_site = site_form(lap, st);
    const double iplap = ext::form_inner(lap_site, fr.phi, fr.metric);
    const double trA = iplap / 6.0;
    const ext::AltForm g27 = g2::project3(fr, lap_site, 27);
    double A[49];
    g2::j_map(fr, g27, A);
    for (double& v : A) v /= a_const;
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 7; ++j)
        A[i * 7 + j] += (trA / 7.0) * fr.metric.g[i * 7 + j];

    const ext::AltForm tau2 = site_form(tf.tau2, st);
    const double t2n = ext::form_norm2(tau2, fr.metric);
    const ext::AltForm sigma = ext::hodge_star(ext::wedge(tau2, tau2), fr.metric);
    double jsig[49];
    g2::j_map(fr, sigma, jsig);

    ratio_num += iplap;
    ratio_den += t2n;

    for (int i = 0; i < 7; ++i)
      for (int j = i; j < 7; ++j) {
        const double w = (i == j) ? 1.0 : 2.0;  // Frobenius weight
        const double b = A[i * 7 + j];
        const double col[3] = {-ric.comp(lat::sym_index(i, j))[st],
                               t2n * fr.metric.g[i * 7 + j], jsig[i * 7 + j]};
        for (int p = 0; p < 3; ++p) {
          rhs[p] += w * col[p] * b;
          for (int q2 = 0; q2 < 3; ++q2) M[p * 3 + q2] += w * col[p] * col[q2];
        }
      }
  }
  double sol[3];
  solve3(M, rhs, sol);
  FitResult r;
  r.c = sol[0];
  r.x = sol[1];
  r.y = sol[2];
  // Frozen-c fit: move 0.5*col0 to the left-hand side and solve the 2x2
  // normal equations in (x, y). The quadratic columns are then matched
  // against a residual of their own order, which removes the collinearity
  // bias the free fit picks up from the O(eps) Ricci column.
  {
    const double a11 = M[4], a12 = M[5], a21 = M[7], a22 = M[8];
    const double b1 = rhs[1] - 0.5 * M[3];
    const double b2 = rhs[2] - 0.5 * M[6];
    const double det = a11 * a22 - a12 * a21;
    r.xf = (a22 * b1 - a12 * b2) / det;
    r.yf = (-a21 * b1 + a11 * b2) / det;
  }
  r.f0_ratio = ratio_num / ratio_den;
  r.h = L / n;
  return r;
}

// Feasibility bound for the perturbation family, probed on a mid-size grid.
double fit_probe_max_epsilon() {
  const int n = 16;
  const double L = 3.1;
  lat::GridPtr g = lat::make_grid({n, n, n, 1, 1, 1, 1},
                                  {L / n, L / n, L / n, 1, 1, 1, 1},
                                  lat::Scheme::spectral);
  const lat::LatticeField base = fld::uniform_standard_phi(g);
  const lat::LatticeField eta =
      fld::band_limited_field(g, 2, 424243, 1, 2, 1.0, 0.0);
  return fld::make_closed_perturbation(base, eta, 1e-4).max_epsilon;
}

// Fit v(h) = v0 + p h^2 + q h^4 through three samples and return v0.
double richardson3(const FitResult* r, double FitResult::* f) {
  double M[9], rhs[3], sol[3];
  for (int i = 0; i < 3; ++i) {
    const double h2 = r[i].h * r[i].h;
    M[i * 3 + 0] = 1.0;
    M[i * 3 + 1] = h2;
    M[i * 3 + 2] = h2 * h2;
    rhs[i] = r[i].*f;
  }
  solve3(M, rhs, sol);
  return sol[0];
}

void print_rational_hint(const char* name, double v) {
  double best = 1e9;
  int bp = 0, bq = 1;
  for (int q = 1; q <= 128; ++q) {
    const int p = static_cast<int>(std::lround(v * q));
    const double err = std::fabs(v - static_cast<double>(p) / q);
    if (err < best * 0.999) {
      best = err;
      bp = p;
      bq = q;
    }
  }
  std::printf("  %s ~ %d/%d (err %.3e)\n", name, bp, bq, best);
}

}  // namespace

int main() {
  const g2::JiConstants& ji = g2::ji_constants();
  std::printf("j(i(.)) constants: a = %.15g  b = %.15g  a+7b = %.15g\n", ji.a,
              ji.b, ji.a + 7.0 * ji.b);

  // Campaign 1: small perturbation, free 3-parameter fit. The Ricci column
  // dominates here, so this pins c; x and y carry an O(eps) collinearity bias.
  const double eps1 = 0.02;
  std::printf("-- free fit, eps=%.3f --\n", eps1);
  const int ns1[3] = {12, 16, 24};
  FitResult r1[3];
  for (int i = 0; i < 3; ++i) {
    r1[i] = fit_at(ns1[i], eps1);
    std::printf(
        "N=%2d  h=%.4f  c=%.12f  x=%.12f  y=%.12f  <lap,phi>/|tau2|^2=%.12f\n",
        ns1[i], r1[i].h, r1[i].c, r1[i].x, r1[i].y, r1[i].f0_ratio);
  }
  const double cs = richardson3(r1, &FitResult::c);
  const double fs = richardson3(r1, &FitResult::f0_ratio);
  std::printf("extrapolated: c=%.12f  ratio=%.12f\n", cs, fs);
  print_rational_hint("c", cs);
  print_rational_hint("ratio", fs);

  // Campaign 2: larger perturbation, Ricci coefficient frozen at 1/2. The
  // quadratic columns are now well conditioned; three grids eliminate the
  // h^2 and h^4 discretization errors exactly.
  const double eps2 = 0.35 * fit_probe_max_epsilon();
  std::printf("-- frozen fit (c = 1/2), eps=%.6f --\n", eps2);
  const int ns2[3] = {16, 24, 32};
  FitResult r2[3];
  for (int i = 0; i < 3; ++i) {
    r2[i] = fit_at(ns2[i], eps2);
    std::printf("N=%2d  h=%.4f  x=%.12f  y=%.12f  <lap,phi>/|tau2|^2=%.12f\n",
                ns2[i], r2[i].h, r2[i].xf, r2[i].yf, r2[i].f0_ratio);
  }
  const double xs = richardson3(r2, &FitResult::xf);
  const double ys = richardson3(r2, &FitResult::yf);
  std::printf("extrapolated: x=%.12f  y=%.12f\n", xs, ys);
  std::printf("trace check 1/4+7x-6y = %.12f (constraint: 1/6 = %.12f)\n",
              0.25 + 7.0 * xs - 6.0 * ys, 1.0 / 6.0);
  print_rational_hint("x", xs);
  print_rational_hint("y", ys);
  return 0;
}
