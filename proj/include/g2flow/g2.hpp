#pragma once

#include <array>
#include <stdexcept>
#include <string>

#include "g2flow/exterior.hpp"

namespace g2flow::g2 {

using exterior::AltForm;
using exterior::Metric;

// A 3-form fails to define a G2 structure either because its candidate
// metric is not positive definite or because it is too close to the
// degenerate boundary to trust numerically.
class PositivityError : public std::runtime_error {
 public:
  enum class Reason { not_positive, ill_conditioned };

  PositivityError(Reason r, const std::string& msg)
      : std::runtime_error(msg), reason_(r) {}
  Reason reason() const { return reason_; }

 private:
  Reason reason_;
};

// Condition-number gate (inf-norm estimate) applied by metric_from_phi.
inline constexpr double kConditionLimit = 1e8;

// Coefficient of j(f3) in the metric half-rate h: dg/dt = 2 f0 g + 2 kJ j(f3)
// for a variation with vanishing Lambda^3_7 part. Verified against finite
// differences of the induced metric by tests and the calibration tool.
inline constexpr double kMetricVariationJCoeff = 0.25;

AltForm standard_phi();
AltForm standard_psi();

// Induced metric of a positive 3-form: B_pq = coefficient of e^{1..7} in
// (e_p .| phi) ^ (e_q .| phi) ^ phi, then g = (36 det B)^{-1/9} B.
// Normalization fixed by standard_phi() -> identity. Throws PositivityError.
Metric metric_from_phi(const AltForm& phi);

// Everything torsion extraction needs at one point, built once.
struct G2Frame {
  AltForm phi;              // degree 3
  AltForm psi;              // *phi, degree 4
  Metric metric;
  std::array<AltForm, 7> u;  // u[a] = e_a .| phi  (2-forms)
  std::array<AltForm, 7> k;  // k[a] = e_a .| psi  (3-forms)
};

G2Frame make_frame(const AltForm& phi);

// i(h) = 2 h_pq e^p ^ *(e^q ^ psi) for symmetric h (row-major 49).
// i(g) = 6 phi.
AltForm i_map(const G2Frame& f, const double h[49]);

// j(gamma)_pq = *(u_p ^ u_q ^ gamma); j(phi) = 6 g, tr_g j = 6 <gamma,phi>.
void j_map(const G2Frame& f, const AltForm& gamma, double out[49]);

// Constants of j(i(h)) = a h + b tr_g(h) g, calibrated once at startup from
// the standard frame; a + 7b = 36 is asserted.
struct JiConstants {
  double a, b;
};
const JiConstants& ji_constants();

// Orthogonal type projections. part: 7 or 14 for 2-forms; 1, 7 or 27 for
// 3-forms. Invalid part throws std::invalid_argument.
AltForm project2(const G2Frame& f, const AltForm& beta, int part);
AltForm project3(const G2Frame& f, const AltForm& gamma, int part);

struct TorsionForms {
  double tau0 = 0.0;
  AltForm tau1;  // degree 1
  AltForm tau2;  // degree 2, Lambda^2_14
  AltForm tau3;  // degree 3, Lambda^3_27
  // Reassembly residuals |dphi - (tau0 psi + 3 tau1^phi + *tau3)| and
  // |dpsi - (4 tau1^psi + tau2^phi)| in the frame metric.
  double resid_phi = 0.0;
  double resid_psi = 0.0;
};

// Extract torsion components from the exterior derivatives at a point.
TorsionForms torsion_from_derivatives(const G2Frame& f, const AltForm& dphi,
                                      const AltForm& dpsi);

// Decomposition of a 3-form variation dot = 3 f0 phi + *(f1 ^ phi) + f3,
// f3 in Lambda^3_27, plus the induced metric half-rate h (dg/dt = 2h) and
// the vector X with dot = i(h_tilde) + X .| psi on the symmetric route.
struct FlowDecomposition {
  double f0 = 0.0;
  AltForm f1;                  // degree 1
  AltForm f3;                  // degree 3
  std::array<double, 49> h{};  // symmetric, row-major
  std::array<double, 7> X{};
  double resid = 0.0;          // reassembly residual in the frame metric
};

FlowDecomposition decompose_variation(const G2Frame& f, const AltForm& dot_phi);

// Torsion coefficient tau0 (c - (5/2) tau0) of the modified coflow on a
// nearly parallel structure; zero exactly when c = (5/2) tau0.
double nearly_parallel_coflow_coefficient(double tau0, double c);

namespace detail {
// Raw-array core of metric_from_phi for the field layer: fills g, g_inv
// (49 each), det(g) and vol = sqrt(det). On failure returns false and sets
// *why to a static string.
bool metric_from_phi_raw(const double* phi, double* g, double* g_inv,
                         double* det, double* vol, const char** why);
}  // namespace detail

}  // namespace g2flow::g2
