#include "g2flow/g2field.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <random>
#include <stdexcept>
#include <vector>

#include "g2flow/io.hpp"
#include "g2flow/parallel.hpp"

namespace g2flow::field {

namespace ext = g2flow::exterior;
using g2flow::lattice::GridPtr;
using g2flow::lattice::LatticeField;
using g2flow::lattice::MetricField;
using g2flow::lattice::sym_index;

namespace {

constexpr std::size_t kChunk = 256;  // sites per task for per-site frames

ext::AltForm gather(const LatticeField& f, std::size_t s) {
  ext::AltForm a = ext::make_form(f.degree);
  for (int c = 0; c < f.ncomp(); ++c) a[c] = f.comp(c)[s];
  return a;
}

void scatter(LatticeField& f, std::size_t s, const ext::AltForm& a) {
  for (int c = 0; c < f.ncomp(); ++c) f.comp(c)[s] = a[c];
}

ext::Metric metric_from_raw(const double* g, const double* gi, double det,
                            double vol) {
  ext::Metric m;
  std::memcpy(m.g.data(), g, 49 * sizeof(double));
  std::memcpy(m.g_inv.data(), gi, 49 * sizeof(double));
  m.det = det;
  m.vol_scale = vol;
  return m;
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0, 1)
}

}  // namespace

StructureField analyze_structure(const LatticeField& phi) {
  if (phi.degree != 3)
    throw std::invalid_argument("analyze_structure expects a 3-form field");
  StructureField out;
  out.phi = phi;
  out.psi = lattice::make_field(phi.grid, 4);

  const std::size_t ns = phi.nsites();
  MetricField& m = out.metric;
  m.grid = phi.grid;
  m.uniform_identity = false;
  m.gsym.assign(28 * ns, 0.0);
  m.ginv.assign(28 * ns, 0.0);
  m.det.assign(ns, 0.0);
  m.inv_det.assign(ns, 0.0);
  m.vol.assign(ns, 0.0);
  m.inv_vol.assign(ns, 0.0);

  g2flow::par::parallel_for(ns, kChunk, [&](std::size_t s0, std::size_t s1) {
    double phv[35], g[49], gi[49], det, vol;
    const char* why = nullptr;
    for (std::size_t s = s0; s < s1; ++s) {
      for (int c = 0; c < 35; ++c) phv[c] = phi.comp(c)[s];
      if (!g2::detail::metric_from_phi_raw(phv, g, gi, &det, &vol, &why)) {
        const bool cond = why && std::strstr(why, "ill-conditioned");
        throw g2::PositivityError(
            cond ? g2::PositivityError::Reason::ill_conditioned
                 : g2::PositivityError::Reason::not_positive,
            why ? why : "induced metric rejected");
      }
      for (int i = 0; i < 7; ++i)
        for (int j = i; j < 7; ++j) {
          m.gsym[static_cast<std::size_t>(sym_index(i, j)) * ns + s] =
              g[i * 7 + j];
          m.ginv[static_cast<std::size_t>(sym_index(i, j)) * ns + s] =
              gi[i * 7 + j];
        }
      m.det[s] = det;
      m.inv_det[s] = 1.0 / det;
      m.vol[s] = vol;
      m.inv_vol[s] = 1.0 / vol;

      const ext::AltForm psi =
          ext::hodge_star(gather(phi, s), metric_from_raw(g, gi, det, vol));
      scatter(out.psi, s, psi);
    }
  });
  return out;
}

bool field_positive(const LatticeField& phi) {
  if (phi.degree != 3) return false;
  const std::size_t ns = phi.nsites();
  std::atomic<bool> ok{true};
  g2flow::par::parallel_for(ns, kChunk, [&](std::size_t s0, std::size_t s1) {
    double phv[35], g[49], gi[49], det, vol;
    const char* why = nullptr;
    for (std::size_t s = s0; s < s1 && ok.load(std::memory_order_relaxed);
         ++s) {
      for (int c = 0; c < 35; ++c) phv[c] = phi.comp(c)[s];
      if (!g2::detail::metric_from_phi_raw(phv, g, gi, &det, &vol, &why))
        ok.store(false, std::memory_order_relaxed);
    }
  });
  return ok.load();
}

TorsionFields torsion_fields(const StructureField& s) {
  const GridPtr grid = s.phi.grid;
  const std::size_t ns = grid->nsites;
  const LatticeField dphi = lattice::d(s.phi);
  const LatticeField dpsi = lattice::d(s.psi);

  TorsionFields t;
  t.tau0 = lattice::make_field(grid, 0);
  t.tau1 = lattice::make_field(grid, 1);
  t.tau2 = lattice::make_field(grid, 2);
  t.tau3 = lattice::make_field(grid, 3);
  std::vector<double> rphi(ns), rpsi(ns);

  g2flow::par::parallel_for(ns, kChunk, [&](std::size_t s0, std::size_t s1) {
    for (std::size_t site = s0; site < s1; ++site) {
      const g2::G2Frame fr = g2::make_frame(gather(s.phi, site));
      const g2::TorsionForms tf = g2::torsion_from_derivatives(
          fr, gather(dphi, site), gather(dpsi, site));
      t.tau0.comp(0)[site] = tf.tau0;
      scatter(t.tau1, site, tf.tau1);
      scatter(t.tau2, site, tf.tau2);
      scatter(t.tau3, site, tf.tau3);
      rphi[site] = tf.resid_phi;
      rpsi[site] = tf.resid_psi;
    }
  });
  for (std::size_t i = 0; i < ns; ++i) {
    t.resid_phi = std::max(t.resid_phi, rphi[i]);
    t.resid_psi = std::max(t.resid_psi, rpsi[i]);
  }
  return t;
}

LatticeField uniform_standard_phi(GridPtr grid) {
  LatticeField f = lattice::make_field(std::move(grid), 3);
  const ext::AltForm phi0 = g2::standard_phi();
  for (int c = 0; c < f.ncomp(); ++c) {
    double* fc = f.comp(c);
    const double v = phi0[c];
    for (std::size_t s = 0; s < f.nsites(); ++s) fc[s] = v;
  }
  return f;
}

LatticeField band_limited_field(GridPtr grid, int degree, std::uint64_t seed,
                                int smin, int smax, double amplitude,
                                double mean) {
  if (smin < 1 || smax < smin)
    throw std::invalid_argument("band_limited_field: need 1 <= smin <= smax");
  if (!(amplitude >= 0.0) || !std::isfinite(amplitude) || !std::isfinite(mean))
    throw std::invalid_argument("band_limited_field: bad amplitude or mean");
  LatticeField f = lattice::make_field(grid, degree);
  const lattice::Grid& g = *f.grid;

  int active[7], nact = 0;
  for (int a = 0; a < 7; ++a)
    if (!g.degenerate[a]) active[nact++] = a;

  // Enumerate resolvable modes in the shell band once (amplitudes and
  // phases are drawn per component later, in this fixed order).
  struct Mode {
    double k[7];  // angular frequency per axis
  };
  std::vector<Mode> modes;
  const int mcap = static_cast<int>(std::sqrt(static_cast<double>(smax))) + 1;
  std::vector<int> mv(static_cast<std::size_t>(std::max(nact, 1)), 0);
  const std::size_t kModeLimit = 20000;

  auto emit = [&](const auto& self, int pos, int norm2) -> void {
    if (pos == nact) {
      if (norm2 < smin || norm2 > smax) return;
      Mode mo{};
      for (int i = 0; i < nact; ++i) {
        const int a = active[i];
        mo.k[a] = 2.0 * M_PI * mv[i] /
                  (static_cast<double>(g.extents[a]) * g.spacings[a]);
      }
      modes.push_back(mo);
      if (modes.size() > kModeLimit)
        throw std::invalid_argument(
            "band_limited_field: mode band too large");
      return;
    }
    const int a = active[pos];
    for (int m = -mcap; m <= mcap; ++m) {
      const int n2 = norm2 + m * m;
      if (n2 > smax) continue;
      // Modes on or beyond the Nyquist plane are not resolvable.
      if (2 * std::abs(m) >= g.extents[a]) continue;
      mv[pos] = m;
      self(self, pos + 1, n2);
    }
  };
  if (nact > 0) emit(emit, 0, 0);

  std::mt19937_64 rng(seed);
  std::vector<double> amp, phase;
  for (int c = 0; c < f.ncomp(); ++c) {
    amp.resize(modes.size());
    phase.resize(modes.size());
    for (std::size_t i = 0; i < modes.size(); ++i) {
      const double u1 = uniform01(rng), u2 = uniform01(rng);
      amp[i] = amplitude * std::sqrt(-2.0 * std::log(1.0 - u1)) *
               std::cos(2.0 * M_PI * u2);
      phase[i] = 2.0 * M_PI * uniform01(rng);
    }
    double* fc = f.comp(c);
    g2flow::par::parallel_for(
        f.nsites(), 1024, [&](std::size_t s0, std::size_t s1) {
          for (std::size_t s = s0; s < s1; ++s) {
            double x[7];
            for (int a = 0; a < 7; ++a)
              x[a] = static_cast<double>((s / g.strides[a]) %
                                         static_cast<std::size_t>(
                                             g.extents[a])) *
                     g.spacings[a];
            double acc = mean;
            for (std::size_t i = 0; i < modes.size(); ++i) {
              double th = phase[i];
              for (int j = 0; j < nact; ++j)
                th += modes[i].k[active[j]] * x[active[j]];
              acc += amp[i] * std::cos(th);
            }
            fc[s] = acc;
          }
        });
  }
  return f;
}

ClosedPerturbation make_closed_perturbation(const LatticeField& base,
                                            const LatticeField& eta,
                                            double epsilon) {
  if (base.degree != 3)
    throw std::invalid_argument("make_closed_perturbation: base must be a 3-form");
  if (eta.degree != 2)
    throw std::invalid_argument("make_closed_perturbation: eta must be a 2-form");
  if (!base.grid->same_layout(*eta.grid))
    throw std::invalid_argument("make_closed_perturbation: grid mismatch");
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon))
    throw std::invalid_argument("make_closed_perturbation: bad epsilon");

  const LatticeField deta = lattice::d(eta);
  auto positive_at = [&](double e) {
    LatticeField trial = base;
    lattice::field_axpy(trial, e, deta);
    return field_positive(trial);
  };

  if (epsilon > 0.0 && !positive_at(epsilon)) {
    // Report an estimate of what would have worked.
    double lo = 0.0, hi = epsilon;
    for (int i = 0; i < 24; ++i) {
      const double mid = 0.5 * (lo + hi);
      (positive_at(mid) ? lo : hi) = mid;
    }
    throw std::invalid_argument(
        "perturbation loses positivity at the requested strength; largest "
        "feasible epsilon is about " +
        g2flow::io::format_double(lo));
  }

  ClosedPerturbation out;
  out.phi = base;
  lattice::field_axpy(out.phi, epsilon, deta);

  // Estimate the positivity margin: double until failure, then bisect.
  double lo = epsilon > 0.0 ? epsilon : 1e-6;
  if (!positive_at(lo)) {
    out.max_epsilon = 0.0;
    return out;
  }
  double hi = lo;
  bool found_bad = false;
  for (int i = 0; i < 16; ++i) {
    hi *= 2.0;
    if (!positive_at(hi)) {
      found_bad = true;
      break;
    }
    lo = hi;
  }
  if (found_bad) {
    for (int i = 0; i < 12; ++i) {
      const double mid = 0.5 * (lo + hi);
      (positive_at(mid) ? lo : hi) = mid;
    }
  }
  out.max_epsilon = lo;
  return out;
}

}  // namespace g2flow::field
