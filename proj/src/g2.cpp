#include "g2flow/g2.hpp"

#include <cmath>

#include "g2flow/linalg7.hpp"

namespace g2flow::g2 {

using exterior::apply_compound;
using exterior::comp_sign;
using exterior::form_inner;
using exterior::form_norm2;
using exterior::hodge_star;
using exterior::index_of_mask;
using exterior::interior;
using exterior::make_form;
using exterior::mask_of;
using exterior::top_coefficient;
using exterior::wedge;

namespace {

void add_comp(AltForm& f, std::uint8_t mask, double v) {
  f.c[index_of_mask(mask)] += v;
}

constexpr std::uint8_t bits(int a, int b, int c, int d = 0) {
  return static_cast<std::uint8_t>((1u << (a - 1)) | (1u << (b - 1)) |
                                   (1u << (c - 1)) | (d ? 1u << (d - 1) : 0u));
}

AltForm basis_one_form(int axis) {
  AltForm f = make_form(1);
  f.c[axis] = 1.0;
  return f;
}

double norm(const AltForm& a, const Metric& m) {
  return std::sqrt(std::max(0.0, form_norm2(a, m)));
}

}  // namespace

AltForm standard_phi() {
  AltForm f = make_form(3);
  add_comp(f, bits(1, 2, 3), 1);
  add_comp(f, bits(1, 4, 5), 1);
  add_comp(f, bits(1, 6, 7), 1);
  add_comp(f, bits(2, 4, 6), 1);
  add_comp(f, bits(2, 5, 7), -1);
  add_comp(f, bits(3, 4, 7), -1);
  add_comp(f, bits(3, 5, 6), -1);
  return f;
}

AltForm standard_psi() {
  AltForm f = make_form(4);
  add_comp(f, bits(4, 5, 6, 7), 1);
  add_comp(f, bits(2, 3, 6, 7), 1);
  add_comp(f, bits(2, 3, 4, 5), 1);
  add_comp(f, bits(1, 3, 5, 7), 1);
  add_comp(f, bits(1, 3, 4, 6), -1);
  add_comp(f, bits(1, 2, 5, 6), -1);
  add_comp(f, bits(1, 2, 4, 7), -1);
  return f;
}

namespace detail {

bool metric_from_phi_raw(const double* phi, double* g, double* g_inv,
                         double* det, double* vol, const char** why) {
  AltForm p = make_form(3);
  for (int i = 0; i < 35; ++i) p.c[i] = phi[i];

  AltForm u[7];
  for (int a = 0; a < 7; ++a) {
    double e[7] = {0, 0, 0, 0, 0, 0, 0};
    e[a] = 1.0;
    u[a] = interior(e, p);
  }

  // B_pq = top coefficient of u_p ^ u_q ^ phi; cubic in phi, symmetric.
  double B[49];
  for (int pq = 0; pq < 7; ++pq)
    for (int q = pq; q < 7; ++q) {
      const AltForm w = wedge(u[pq], u[q]);
      double acc = 0.0;
      for (int i = 0; i < 35; ++i) {
        const std::uint8_t mi = mask_of(4, i);
        const int s = comp_sign(mi);
        acc += (s > 0 ? w.c[i] : -w.c[i]) * p.c[index_of_mask(127 ^ mi)];
      }
      B[pq * 7 + q] = acc;
      B[q * 7 + pq] = acc;
    }

  double L[49];
  if (!linalg::cholesky7(B, L)) {
    *why = "candidate metric is not positive definite";
    return false;
  }
  const double detB = linalg::det_from_cholesky7(L);
  const double c = std::pow(36.0 * detB, -1.0 / 9.0);
  if (!std::isfinite(c) || c <= 0.0) {
    *why = "candidate metric normalization is not finite";
    return false;
  }
  for (int i = 0; i < 49; ++i) g[i] = c * B[i];
  const double c2 = c * c, c4 = c2 * c2;
  *det = (c4 * c2 * c) * detB;
  *vol = std::sqrt(*det);

  double Binv[49];
  linalg::invert_spd7(L, Binv);
  const double cinv = 1.0 / c;
  for (int i = 0; i < 49; ++i) g_inv[i] = cinv * Binv[i];

  if (linalg::inf_norm7(g) * linalg::inf_norm7(g_inv) > kConditionLimit) {
    *why = "candidate metric is too ill-conditioned to trust";
    return false;
  }
  return true;
}

}  // namespace detail

Metric metric_from_phi(const AltForm& phi) {
  if (phi.degree != 3)
    throw std::invalid_argument("metric_from_phi requires a 3-form");
  Metric m;
  const char* why = nullptr;
  if (!detail::metric_from_phi_raw(phi.c.data(), m.g.data(), m.g_inv.data(),
                                   &m.det, &m.vol_scale, &why)) {
    const bool conditioned = std::string(why).find("ill-conditioned") !=
                             std::string::npos;
    throw PositivityError(conditioned
                              ? PositivityError::Reason::ill_conditioned
                              : PositivityError::Reason::not_positive,
                          why);
  }
  return m;
}

G2Frame make_frame(const AltForm& phi) {
  G2Frame f;
  f.phi = phi;
  f.metric = metric_from_phi(phi);
  f.psi = hodge_star(phi, f.metric);
  for (int a = 0; a < 7; ++a) {
    double e[7] = {0, 0, 0, 0, 0, 0, 0};
    e[a] = 1.0;
    f.u[a] = interior(e, phi);
    f.k[a] = interior(e, f.psi);
  }
  return f;
}

AltForm i_map(const G2Frame& f, const double h[49]) {
  // *(e^q ^ psi) = (e^q)# .| phi = sum_c g^{qc} u_c
  AltForm out = make_form(3);
  for (int q = 0; q < 7; ++q) {
    AltForm wq = make_form(2);
    for (int c = 0; c < 7; ++c) {
      const double gqc = f.metric.g_inv[q * 7 + c];
      if (gqc == 0.0) continue;
      for (int i = 0; i < 21; ++i) wq.c[i] += gqc * f.u[c].c[i];
    }
    AltForm alpha = make_form(1);
    for (int p = 0; p < 7; ++p) alpha.c[p] = h[p * 7 + q];
    const AltForm term = wedge(alpha, wq);
    for (int i = 0; i < 35; ++i) out.c[i] += 2.0 * term.c[i];
  }
  return out;
}

void j_map(const G2Frame& f, const AltForm& gamma, double out[49]) {
  if (gamma.degree != 3)
    throw std::invalid_argument("j_map requires a 3-form");
  const double inv_vol = 1.0 / f.metric.vol_scale;
  for (int p = 0; p < 7; ++p)
    for (int q = p; q < 7; ++q) {
      const double v =
          inv_vol * top_coefficient(wedge(wedge(f.u[p], f.u[q]), gamma));
      out[p * 7 + q] = v;
      out[q * 7 + p] = v;
    }
}

const JiConstants& ji_constants() {
  static const JiConstants ji = [] {
    const G2Frame f = make_frame(standard_phi());

    // Traceless probe e^1 o e^1 - e^2 o e^2.
    double h[49] = {0};
    h[0] = 1.0;
    h[8] = -1.0;
    double jh[49];
    j_map(f, i_map(f, h), jh);
    const double a = (jh[0] - jh[8]) / 2.0;

    // Off-diagonal probe must see the same eigenvalue.
    double h2[49] = {0};
    h2[1] = h2[7] = 1.0;
    double jh2[49];
    j_map(f, i_map(f, h2), jh2);
    const double a2 = (jh2[1] + jh2[7]) / 2.0;

    // Identity probe: j(i(g)) = (a + 7b) g.
    double id[49] = {0};
    for (int i = 0; i < 7; ++i) id[i * 7 + i] = 1.0;
    double jid[49];
    j_map(f, i_map(f, id), jid);
    double s = 0.0;
    for (int i = 0; i < 7; ++i) s += jid[i * 7 + i];
    s /= 7.0;

    if (std::fabs(a2 - a) > 1e-9 || std::fabs(s - 36.0) > 1e-9)
      throw std::logic_error("j o i calibration failed the 36-trace identity");
    return JiConstants{a, (s - a) / 7.0};
  }();
  return ji;
}

AltForm project2(const G2Frame& f, const AltForm& beta, int part) {
  if (beta.degree != 2)
    throw std::invalid_argument("project2 requires a 2-form");
  if (part != 7 && part != 14)
    throw std::invalid_argument("project2 part must be 7 or 14");
  // T = *(beta ^ phi) has eigenvalue 2 on the 7 part, -1 on the 14 part.
  const AltForm T = hodge_star(wedge(beta, f.phi), f.metric);
  AltForm out = make_form(2);
  for (int i = 0; i < 21; ++i)
    out.c[i] = (part == 7) ? (T.c[i] + beta.c[i]) / 3.0
                           : (2.0 * beta.c[i] - T.c[i]) / 3.0;
  return out;
}

AltForm project3(const G2Frame& f, const AltForm& gamma, int part) {
  if (gamma.degree != 3)
    throw std::invalid_argument("project3 requires a 3-form");
  if (part != 1 && part != 7 && part != 27)
    throw std::invalid_argument("project3 part must be 1, 7 or 27");
  if (part == 1) {
    const double c = form_inner(gamma, f.phi, f.metric) / 7.0;
    AltForm out = make_form(3);
    for (int i = 0; i < 35; ++i) out.c[i] = c * f.phi.c[i];
    return out;
  }
  // <e_a .| psi, e_b .| psi> = 4 g_ab, so the 7-part is X .| psi with
  // X = g^{-1} r / 4, r_a = <k_a, gamma>.
  double r[7], X[7];
  for (int a = 0; a < 7; ++a) r[a] = form_inner(f.k[a], gamma, f.metric);
  exterior::sharp(f.metric, r, X);
  AltForm p7 = make_form(3);
  for (int a = 0; a < 7; ++a)
    for (int i = 0; i < 35; ++i) p7.c[i] += 0.25 * X[a] * f.k[a].c[i];
  if (part == 7) return p7;
  const AltForm p1 = project3(f, gamma, 1);
  AltForm out = make_form(3);
  for (int i = 0; i < 35; ++i) out.c[i] = gamma.c[i] - p1.c[i] - p7.c[i];
  return out;
}

TorsionForms torsion_from_derivatives(const G2Frame& f, const AltForm& dphi,
                                      const AltForm& dpsi) {
  if (dphi.degree != 4 || dpsi.degree != 5)
    throw std::invalid_argument(
        "torsion_from_derivatives requires (4-form, 5-form)");
  const Metric& m = f.metric;

  TorsionForms t;
  t.tau1 = make_form(1);

  // tau0 from the Lambda^4_1 component.
  t.tau0 = form_inner(dphi, f.psi, m) / 7.0;

  // tau1 from <e^a ^ phi, dphi> = 12 g^{ab} tau1_b and
  //           <e^a ^ psi, dpsi> = 12 g^{ab} tau1_b (joint average).
  double csum[7];
  for (int a = 0; a < 7; ++a) {
    const AltForm ea = basis_one_form(a);
    csum[a] = form_inner(wedge(ea, f.phi), dphi, m) +
              form_inner(wedge(ea, f.psi), dpsi, m);
  }
  double t1[7];
  exterior::flat(m, csum, t1);
  for (int a = 0; a < 7; ++a) t.tau1.c[a] = t1[a] / 24.0;

  // tau3 = P27 * (dphi - tau0 psi - 3 tau1 ^ phi)
  AltForm rem = dphi;
  for (int i = 0; i < 35; ++i) rem.c[i] -= t.tau0 * f.psi.c[i];
  const AltForm t1phi = wedge(t.tau1, f.phi);
  for (int i = 0; i < 35; ++i) rem.c[i] -= 3.0 * t1phi.c[i];
  t.tau3 = project3(f, hodge_star(rem, m), 27);

  // tau2 = -P14 * (dpsi - 4 tau1 ^ psi)
  AltForm rho = dpsi;
  const AltForm t1psi = wedge(t.tau1, f.psi);
  for (int i = 0; i < 21; ++i) rho.c[i] -= 4.0 * t1psi.c[i];
  const AltForm srho = hodge_star(rho, m);
  t.tau2 = project2(f, srho, 14);
  for (int i = 0; i < 21; ++i) t.tau2.c[i] = -t.tau2.c[i];

  // Reassembly residuals.
  AltForm rphi = dphi;
  const AltForm st3 = hodge_star(t.tau3, m);
  for (int i = 0; i < 35; ++i)
    rphi.c[i] -= t.tau0 * f.psi.c[i] + 3.0 * t1phi.c[i] + st3.c[i];
  t.resid_phi = norm(rphi, m);

  AltForm rpsi = dpsi;
  const AltForm t2phi = wedge(t.tau2, f.phi);
  for (int i = 0; i < 21; ++i)
    rpsi.c[i] -= 4.0 * t1psi.c[i] + t2phi.c[i];
  t.resid_psi = norm(rpsi, m);

  return t;
}

FlowDecomposition decompose_variation(const G2Frame& f,
                                      const AltForm& dot_phi) {
  if (dot_phi.degree != 3)
    throw std::invalid_argument("decompose_variation requires a 3-form");
  const Metric& m = f.metric;

  FlowDecomposition d;
  d.f1 = make_form(1);
  d.f0 = form_inner(dot_phi, f.phi, m) / 21.0;

  double r[7];
  for (int a = 0; a < 7; ++a) r[a] = form_inner(f.k[a], dot_phi, m);
  exterior::sharp(m, r, d.X.data());
  for (int a = 0; a < 7; ++a) {
    d.X[a] *= 0.25;
    d.f1.c[a] = -0.25 * r[a];  // *(f1 ^ phi) = X .| psi
  }

  AltForm gamma7 = make_form(3);
  for (int a = 0; a < 7; ++a)
    for (int i = 0; i < 35; ++i) gamma7.c[i] += d.X[a] * f.k[a].c[i];

  d.f3 = make_form(3);
  for (int i = 0; i < 35; ++i)
    d.f3.c[i] = dot_phi.c[i] - 3.0 * d.f0 * f.phi.c[i] - gamma7.c[i];

  // Metric half-rate h = f0 g + kJ j(f3).
  double jf3[49];
  j_map(f, d.f3, jf3);
  for (int i = 0; i < 49; ++i)
    d.h[i] = d.f0 * m.g[i] + kMetricVariationJCoeff * jf3[i];

  // Residuals of both reassembly routes.
  const AltForm sf1phi = hodge_star(wedge(d.f1, f.phi), m);
  AltForm r1 = dot_phi;
  for (int i = 0; i < 35; ++i)
    r1.c[i] -= 3.0 * d.f0 * f.phi.c[i] + sf1phi.c[i] + d.f3.c[i];

  const JiConstants& ji = ji_constants();
  double ht[49];
  for (int i = 0; i < 49; ++i)
    ht[i] = 0.5 * d.f0 * m.g[i] + jf3[i] / ji.a;
  AltForm r2 = i_map(f, ht);
  for (int a = 0; a < 7; ++a)
    for (int i = 0; i < 35; ++i) r2.c[i] += d.X[a] * f.k[a].c[i];
  for (int i = 0; i < 35; ++i) r2.c[i] = dot_phi.c[i] - r2.c[i];

  d.resid = std::max(norm(r1, m), norm(r2, m));
  return d;
}

double nearly_parallel_coflow_coefficient(double tau0, double c) {
  return tau0 * (c - 2.5 * tau0);
}

}  // namespace g2flow::g2
