#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "g2flow/exterior.hpp"

namespace g2flow::lattice {

enum class Scheme { central, spectral };

// Periodic 7-torus product grid. Axes with extent 1 are degenerate: fields
// are constant along them and their derivative vanishes identically.
// Spectral axes must have extent 1 or >= 4 (an even extent keeps a Nyquist
// mode whose derivative multiplier is zeroed). A central axis of extent 2
// has an identically zero derivative (the +1 and -1 neighbours coincide);
// it is legal but flagged by the checkerboard monitor downstream.
struct Grid {
  std::array<std::int64_t, 7> extents{};
  std::array<double, 7> spacings{};
  Scheme scheme = Scheme::central;

  std::size_t nsites = 0;
  std::array<std::size_t, 7> strides{};  // axis 6 fastest (stride 1)
  std::array<bool, 7> degenerate{};
  double cell_volume = 1.0;

  // Spectral derivative per non-degenerate axis, stored as the length-N
  // first column r of the (exactly antisymmetric) circulant:
  //   (D x)[j] = sum_m r[m] * x[(j - m) mod N].
  // Applying it by distance makes derivatives bit-for-bit equivariant
  // under whole-lattice shifts. Central axes use the two-point stencil
  // directly and keep this empty.
  std::array<std::vector<double>, 7> deriv;
  // Site indices with coordinate 0 along the axis (line start points).
  std::array<std::vector<std::uint32_t>, 7> line_bases;

  bool same_layout(const Grid& o) const;
};

using GridPtr = std::shared_ptr<const Grid>;

// Validates and precomputes; throws std::invalid_argument on bad input.
GridPtr make_grid(const std::array<std::int64_t, 7>& extents,
                  const std::array<double, 7>& spacings, Scheme scheme);

// Degree-k form field, component-major: data[c * nsites + s]. Site order is
// lexicographic in coordinates with the last axis fastest.
struct LatticeField {
  GridPtr grid;
  int degree = 0;
  std::vector<double> data;

  std::size_t nsites() const { return grid->nsites; }
  int ncomp() const { return exterior::comp_count(degree); }
  double* comp(int c) { return data.data() + static_cast<std::size_t>(c) * nsites(); }
  const double* comp(int c) const {
    return data.data() + static_cast<std::size_t>(c) * nsites();
  }
};

LatticeField make_field(GridPtr grid, int degree);

// Per-site metric data in packed symmetric storage (28 components,
// sym_index(i,j) below), plus determinant/volume streams. A uniform
// identity metric keeps the vectors empty and short-circuits everything.
struct MetricField {
  GridPtr grid;
  bool uniform_identity = false;
  std::vector<double> gsym, ginv;             // 28 * nsites each
  std::vector<double> det, inv_det, vol, inv_vol;  // nsites each

  const double* g_comp(int c) const { return gsym.data() + static_cast<std::size_t>(c) * grid->nsites; }
  const double* ginv_comp(int c) const { return ginv.data() + static_cast<std::size_t>(c) * grid->nsites; }
};

MetricField identity_metric_field(GridPtr grid);

// Packed index of the symmetric pair (i, j), i <= j after swap; 0..27.
constexpr int sym_index(int i, int j) {
  if (i > j) {
    const int t = i;
    i = j;
    j = t;
  }
  return i * 7 - i * (i - 1) / 2 + (j - i);
}

// Exterior derivative; degree 7 throws std::invalid_argument.
LatticeField d(const LatticeField& a);

// out = Lambda^k(m) applied per site (see exterior::apply_compound).
void apply_compound_field(const MetricField& m, bool use_inverse,
                          const LatticeField& in, LatticeField& out);

// Codifferential, defined as the exact formal adjoint of d with respect to
// l2_inner: codiff b = (1/vol) Lambda^{k-1}(g) [d^T (vol Lambda^k(g^{-1}) b)],
// where d^T uses the transposed (= negated) derivative stencils. Degree 0
// throws std::invalid_argument.
LatticeField codiff(const LatticeField& b, const MetricField& m);

// d codiff + codiff d (degree edge cases drop the undefined half).
LatticeField hodge_laplacian(const LatticeField& a, const MetricField& m);

// integral of <a, b> vol over the torus; layouts and degrees must match.
double l2_inner(const LatticeField& a, const LatticeField& b,
                const MetricField& m);
double l2_norm(const LatticeField& a, const MetricField& m);

struct Periods {
  int degree = 0;
  std::vector<double> values;  // one per component, cycle-averaged
  double d_residual = 0.0;     // sup norm of d(field); 0 for degree 7
};

Periods periods(const LatticeField& a);

// integral of a 7-form; other degrees throw std::invalid_argument.
double integrate_top(const LatticeField& a);

// Pointwise algebra lifted to fields (fixed site loops, parallelized).
LatticeField wedge_fields(const LatticeField& a, const LatticeField& b);
// Hodge star of every site with the per-site metric.
LatticeField hodge_star_field(const LatticeField& a, const MetricField& m);

// Elementwise helpers on matching fields.
void field_axpy(LatticeField& y, double s, const LatticeField& x);  // y += s x
LatticeField field_scaled(const LatticeField& x, double s);

// Fraction of non-constant spectral energy carried by Nyquist planes
// (axes with even extent >= 2), in [0, 1]; 0 when no such axis exists.
// Serial, sample-cadence diagnostic.
double highest_frequency_fraction(const LatticeField& a);

}  // namespace g2flow::lattice
