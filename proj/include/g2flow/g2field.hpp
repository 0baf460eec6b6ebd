#pragma once

#include <cstdint>

#include "g2flow/g2.hpp"
#include "g2flow/lattice.hpp"

namespace g2flow::field {

// Per-site analysis of a positive 3-form field: the induced metric field
// and the pointwise Hodge dual. Throws g2::PositivityError when any site
// fails the positivity or conditioning gate.
struct StructureField {
  lattice::LatticeField phi;  // degree 3
  lattice::LatticeField psi;  // degree 4
  lattice::MetricField metric;
};

StructureField analyze_structure(const lattice::LatticeField& phi);

// True iff every site admits the induced metric (no throw).
bool field_positive(const lattice::LatticeField& phi);

// Pointwise torsion of a structure field.
struct TorsionFields {
  lattice::LatticeField tau0;  // degree 0
  lattice::LatticeField tau1;  // degree 1
  lattice::LatticeField tau2;  // degree 2
  lattice::LatticeField tau3;  // degree 3
  double resid_phi = 0.0;      // sup over sites of reassembly residuals
  double resid_psi = 0.0;
};

TorsionFields torsion_fields(const StructureField& s);

// The standard parallel structure at every site.
lattice::LatticeField uniform_standard_phi(lattice::GridPtr grid);

// Band-limited random field: every component gets an independent sum over
// integer modes m on the non-degenerate axes with smin <= |m|^2 <= smax,
// Gaussian amplitudes scaled by `amplitude` and uniform phases, plus `mean`.
// Modes touching a Nyquist plane are skipped, so the result is fully
// resolved. Deterministic in `seed` (engine and sampling are pinned here,
// not delegated to library distributions).
lattice::LatticeField band_limited_field(lattice::GridPtr grid, int degree,
                                         std::uint64_t seed, int smin,
                                         int smax, double amplitude,
                                         double mean);

// phi = base + epsilon d(eta) for a 2-form field eta: exactly closed
// whenever the base is. Scans positivity; a failing epsilon throws
// std::invalid_argument. max_epsilon estimates (by doubling + bisection)
// the largest feasible epsilon for this base and eta.
struct ClosedPerturbation {
  lattice::LatticeField phi;
  double max_epsilon = 0.0;
};

ClosedPerturbation make_closed_perturbation(const lattice::LatticeField& base,
                                            const lattice::LatticeField& eta,
                                            double epsilon);

}  // namespace g2flow::field
