#include "g2flow/flows.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include "g2flow/exterior.hpp"
#include "g2flow/g2.hpp"
#include "g2flow/io.hpp"
#include "g2flow/parallel.hpp"

namespace g2flow::flows {

namespace ext = g2flow::exterior;
namespace lat = g2flow::lattice;
namespace fld = g2flow::field;

using lat::LatticeField;
using lat::MetricField;

namespace {

constexpr std::size_t kSiteChunk = 1 << 12;

const char* const kKindNames[] = {
    "heat",   "heat_modified",   "laplacian",          "laplacian_deturck",
    "coflow", "modified_coflow", "dirichlet_gradient",
};
const char* const kStepperNames[] = {"rk4", "euler"};
const char* const kTerminationNames[] = {"reached_T", "positivity_lost",
                                         "cfl_collapse", "diverged"};

ext::AltForm site_form(const LatticeField& f, std::size_t s) {
  ext::AltForm a = ext::make_form(f.degree);
  for (int c = 0; c < f.ncomp(); ++c) a[c] = f.comp(c)[s];
  return a;
}

void scatter(LatticeField& f, std::size_t s, const ext::AltForm& a) {
  for (int c = 0; c < f.ncomp(); ++c) f.comp(c)[s] = a[c];
}

ext::Metric metric_at(const MetricField& m, std::size_t s) {
  if (m.uniform_identity) return ext::euclidean_metric();
  ext::Metric em;
  const std::size_t ns = m.grid->nsites;
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) {
      const std::size_t c = static_cast<std::size_t>(lat::sym_index(i, j));
      em.g[i * 7 + j] = m.gsym[c * ns + s];
      em.g_inv[i * 7 + j] = m.ginv[c * ns + s];
    }
  em.det = m.det[s];
  em.vol_scale = m.vol[s];
  return em;
}

double sup_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

bool is_heat_kind(FlowKind k) {
  return k == FlowKind::heat || k == FlowKind::heat_modified;
}

bool is_coflow_kind(FlowKind k) {
  return k == FlowKind::coflow || k == FlowKind::modified_coflow;
}

}  // namespace

const char* kind_name(FlowKind k) { return kKindNames[static_cast<int>(k)]; }

FlowKind kind_from_name(const std::string& s) {
  for (int i = 0; i < 7; ++i)
    if (s == kKindNames[i]) return static_cast<FlowKind>(i);
  throw std::invalid_argument("unknown flow kind: " + s);
}

const char* stepper_name(Stepper s) { return kStepperNames[static_cast<int>(s)]; }

Stepper stepper_from_name(const std::string& s) {
  for (int i = 0; i < 2; ++i)
    if (s == kStepperNames[i]) return static_cast<Stepper>(i);
  throw std::invalid_argument("unknown stepper: " + s);
}

const char* termination_name(Termination t) {
  return kTerminationNames[static_cast<int>(t)];
}

void validate_spec(const FlowSpec& spec, int field_degree) {
  if (!(spec.dt > 0.0) || !std::isfinite(spec.dt))
    throw std::invalid_argument("dt must be positive and finite");
  if (!(spec.safety > 0.0) || spec.safety > 1.0)
    throw std::invalid_argument("CFL safety factor must lie in (0, 1]");
  switch (spec.kind) {
    case FlowKind::heat:
      if (field_degree < 0 || field_degree > 7)
        throw std::invalid_argument("heat flow needs a form field");
      break;
    case FlowKind::heat_modified:
      if (field_degree != 0)
        throw std::invalid_argument("modified heat flow is defined for scalars");
      if (!std::isfinite(spec.lambda1))
        throw std::invalid_argument("lambda1 must be finite");
      break;
    case FlowKind::modified_coflow:
      if (!std::isfinite(spec.c))
        throw std::invalid_argument("modified coflow coefficient must be finite");
      [[fallthrough]];
    case FlowKind::laplacian:
    case FlowKind::laplacian_deturck:
    case FlowKind::coflow:
      if (field_degree != 3)
        throw std::invalid_argument("G2 flows evolve degree-3 fields");
      break;
    case FlowKind::dirichlet_gradient: {
      if (field_degree != 3)
        throw std::invalid_argument("G2 flows evolve degree-3 fields");
      double total = 0.0;
      for (double w : spec.nu) {
        if (!std::isfinite(w) || w < 0.0)
          throw std::invalid_argument("energy weights must be finite and >= 0");
        total += w;
      }
      if (total == 0.0)
        throw std::invalid_argument("at least one energy weight must be nonzero");
      break;
    }
  }
}

FlowState make_state(LatticeField initial, double t) {
  FlowState st;
  st.t = t;
  st.phi = std::move(initial);
  if (st.phi.degree == 3) rebuild_frame(st);
  return st;
}

void rebuild_frame(FlowState& st) {
  st.frame = fld::analyze_structure(st.phi);
  st.has_frame = true;
}

double frame_rebuild_residual(const FlowState& st) {
  if (!st.has_frame || st.phi.data.size() != st.frame.phi.data.size())
    return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < st.phi.data.size(); ++i)
    m = std::max(m, std::fabs(st.phi.data[i] - st.frame.phi.data[i]));
  return m;
}

// --- Right-hand sides --------------------------------------------------------

LatticeField rhs_heat(const LatticeField& f, const MetricField& mf) {
  if (!mf.uniform_identity)
    throw std::invalid_argument("heat flow requires the flat uniform metric");
  LatticeField rate = lat::hodge_laplacian(f, mf);
  for (double& x : rate.data) x = -x;
  return rate;
}

LatticeField rhs_heat_modified(const LatticeField& f, double lambda1) {
  if (f.degree != 0)
    throw std::invalid_argument("modified heat flow is defined for scalars");
  double mean = 0.0;
  for (double x : f.data) mean += x;
  mean /= static_cast<double>(f.nsites());
  if (std::fabs(mean) > 1e-12 * (1.0 + sup_abs(f.data)))
    throw std::invalid_argument("modified heat flow needs a mean-zero scalar");
  const MetricField id = lat::identity_metric_field(f.grid);
  LatticeField rate = lat::hodge_laplacian(f, id);
  for (std::size_t i = 0; i < rate.data.size(); ++i)
    rate.data[i] = -rate.data[i] + lambda1 * f.data[i];
  return rate;
}

LatticeField rhs_laplacian(FlowState& st) {
  if (!st.has_frame) rebuild_frame(st);
  return lat::d(lat::codiff(st.phi, st.frame.metric));
}

LatticeField rhs_laplacian_deturck(FlowState& st, const MetricField& background) {
  LatticeField rate = rhs_laplacian(st);
  const LatticeField x = diag::deturck_vector(st.frame.metric, background);
  LatticeField xphi = lat::make_field(st.phi.grid, 2);
  const std::size_t ns = st.phi.nsites();
  g2flow::par::parallel_for(ns, kSiteChunk, [&](std::size_t s0, std::size_t s1) {
    for (std::size_t s = s0; s < s1; ++s) {
      double xv[7];
      for (int c = 0; c < 7; ++c) xv[c] = x.comp(c)[s];
      scatter(xphi, s, ext::interior(xv, site_form(st.phi, s)));
    }
  });
  lat::field_axpy(rate, 1.0, lat::d(xphi));
  return rate;
}

namespace {

// Split the exact 4-form rate against dpsi = 4 f0 psi + f1 ^ phi - *f3 and
// return the matching 3-form rate 3 f0 phi + *(f1 ^ phi) + f3.
LatticeField invert_coflow_rate(FlowState& st, const LatticeField& rate4,
                                double* reconstruction_residual) {
  const std::size_t ns = st.phi.nsites();
  LatticeField rate = lat::make_field(st.phi.grid, 3);
  std::vector<double> site_resid(ns, 0.0);
  g2flow::par::parallel_for(ns, kSiteChunk, [&](std::size_t s0, std::size_t s1) {
    for (std::size_t s = s0; s < s1; ++s) {
      const ext::AltForm phi = site_form(st.phi, s);
      const g2::G2Frame fr = g2::make_frame(phi);
      const ext::AltForm r = site_form(rate4, s);

      const double f0 = ext::form_inner(r, fr.psi, fr.metric) / 28.0;

      // f1 from the Lambda^4_7 pairing <e^a ^ phi, e^b ^ phi> = 4 g^{ab}.
      double v[7];
      for (int b = 0; b < 7; ++b) {
        ext::AltForm eb = ext::make_form(1);
        eb[b] = 1.0;
        v[b] = ext::form_inner(r, ext::wedge(eb, fr.phi), fr.metric);
      }
      ext::AltForm f1 = ext::make_form(1);
      for (int a = 0; a < 7; ++a) {
        double acc = 0.0;
        for (int b = 0; b < 7; ++b) acc += fr.metric.g[a * 7 + b] * v[b];
        f1[a] = 0.25 * acc;
      }

      const ext::AltForm f1phi = ext::wedge(f1, fr.phi);
      ext::AltForm rem = r;
      for (int c = 0; c < 35; ++c) rem[c] -= 4.0 * f0 * fr.psi[c] + f1phi[c];
      ext::AltForm f3 = ext::hodge_star(rem, fr.metric);
      for (int c = 0; c < 35; ++c) f3[c] = -f3[c];
      f3 = g2::project3(fr, f3, 27);

      // Reconstruction check of the type split.
      const ext::AltForm sf3 = ext::hodge_star(f3, fr.metric);
      double resid = 0.0;
      for (int c = 0; c < 35; ++c) {
        const double rhat = 4.0 * f0 * fr.psi[c] + f1phi[c] - sf3[c];
        resid = std::max(resid, std::fabs(rhat - r[c]));
      }
      site_resid[s] = resid;

      ext::AltForm out = ext::hodge_star(f1phi, fr.metric);
      for (int c = 0; c < 35; ++c) out[c] += 3.0 * f0 * fr.phi[c] + f3[c];
      scatter(rate, s, out);
    }
  });
  if (reconstruction_residual) {
    const double scale = sup_abs(rate4.data);
    *reconstruction_residual =
        sup_abs(site_resid) / (scale > 0.0 ? scale : 1.0);
  }
  return rate;
}

}  // namespace

LatticeField rhs_coflow(FlowState& st, double* reconstruction_residual) {
  if (!st.has_frame) rebuild_frame(st);
  // Full Hodge Laplacian of psi; its codiff(d psi) half vanishes on the
  // coclosed structures the flow is meant for, leaving the exact form
  // d(codiff psi) there.
  const LatticeField rate4 =
      lat::hodge_laplacian(st.frame.psi, st.frame.metric);
  return invert_coflow_rate(st, rate4, reconstruction_residual);
}

LatticeField rhs_modified_coflow(FlowState& st, double c,
                                 double* reconstruction_residual) {
  if (!st.has_frame) rebuild_frame(st);
  LatticeField rate4 = lat::hodge_laplacian(st.frame.psi, st.frame.metric);

  // Extra exact term d((c - (7/2) tau0) phi), tau0 = <d phi, psi> / 7.
  const LatticeField dphi = lat::d(st.phi);
  LatticeField mphi = lat::make_field(st.phi.grid, 3);
  const std::size_t ns = st.phi.nsites();
  g2flow::par::parallel_for(ns, kSiteChunk, [&](std::size_t s0, std::size_t s1) {
    for (std::size_t s = s0; s < s1; ++s) {
      const ext::Metric em = metric_at(st.frame.metric, s);
      const double tau0 =
          ext::form_inner(site_form(dphi, s), site_form(st.frame.psi, s), em) /
          7.0;
      const double m = c - 3.5 * tau0;
      for (int comp = 0; comp < 35; ++comp)
        mphi.comp(comp)[s] = m * st.phi.comp(comp)[s];
    }
  });
  lat::field_axpy(rate4, 1.0, lat::d(mphi));
  return invert_coflow_rate(st, rate4, reconstruction_residual);
}

LatticeField rhs_dirichlet_gradient(FlowState& st,
                                    const std::array<double, 4>& nu) {
  // dirichlet_gradient_field already carries the descent sign.
  return diag::dirichlet_gradient_field(st.phi, nu);
}

// --- Stability ---------------------------------------------------------------

double lambda1_flat(const lat::Grid& g) {
  double best = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 7; ++a) {
    const std::int64_t n = g.extents[a];
    if (n <= 1) continue;
    const double h = g.spacings[a];
    const double L = h * static_cast<double>(n);
    const double lam = (g.scheme == lat::Scheme::spectral)
                           ? std::pow(2.0 * M_PI / L, 2)
                           : std::pow(std::sin(2.0 * M_PI / n) / h, 2);
    best = std::min(best, lam);
  }
  if (!std::isfinite(best))
    throw std::invalid_argument("grid has no non-degenerate axis");
  return best;
}

namespace {

double metric_gershgorin_max(const MetricField& m) {
  if (m.uniform_identity) return 1.0;
  const std::size_t ns = m.grid->nsites;
  double worst = 0.0;
  for (std::size_t s = 0; s < ns; ++s) {
    for (int i = 0; i < 7; ++i) {
      double row = 0.0;
      for (int j = 0; j < 7; ++j)
        row += std::fabs(
            m.ginv[static_cast<std::size_t>(lat::sym_index(i, j)) * ns + s]);
      worst = std::max(worst, row);
    }
  }
  return worst;
}

double stepper_stability(Stepper s) {
  return s == Stepper::rk4 ? 2.785 : 2.0;
}

}  // namespace

double cfl_max_dt(const FlowState& st, const FlowSpec& spec) {
  const lat::Grid& g = *st.phi.grid;
  double lap = 0.0;
  for (int a = 0; a < 7; ++a) {
    if (g.extents[a] <= 1) continue;
    const double kappa =
        (g.scheme == lat::Scheme::spectral) ? M_PI * M_PI : 1.0;
    lap += kappa / (g.spacings[a] * g.spacings[a]);
  }
  double gersh = 1.0;
  if (!is_heat_kind(spec.kind) && st.has_frame)
    gersh = metric_gershgorin_max(st.frame.metric);
  const double lambda_hat = gersh * lap;
  return spec.safety * stepper_stability(spec.stepper) / lambda_hat;
}

// --- Time stepping -----------------------------------------------------------

namespace {

LatticeField assemble_rate(const LatticeField& y, const FlowSpec& spec,
                           const MetricField* background,
                           const MetricField& flat_id) {
  switch (spec.kind) {
    case FlowKind::heat:
      return rhs_heat(y, flat_id);
    case FlowKind::heat_modified: {
      const double l1 =
          spec.lambda1 > 0.0 ? spec.lambda1 : lambda1_flat(*y.grid);
      return rhs_heat_modified(y, l1);
    }
    default:
      break;
  }
  FlowState tmp = make_state(y, 0.0);  // rebuilds the frame for this stage
  switch (spec.kind) {
    case FlowKind::laplacian:
      return rhs_laplacian(tmp);
    case FlowKind::laplacian_deturck: {
      if (background) return rhs_laplacian_deturck(tmp, *background);
      const MetricField def = lat::identity_metric_field(y.grid);
      return rhs_laplacian_deturck(tmp, def);
    }
    case FlowKind::coflow:
      return rhs_coflow(tmp);
    case FlowKind::modified_coflow:
      return rhs_modified_coflow(tmp, spec.c);
    case FlowKind::dirichlet_gradient:
      return rhs_dirichlet_gradient(tmp, spec.nu);
    default:
      throw std::logic_error("unhandled flow kind");
  }
}

LatticeField advance(const LatticeField& y, const FlowSpec& spec, double dt,
                     const MetricField* background, const MetricField& flat_id) {
  const LatticeField k1 = assemble_rate(y, spec, background, flat_id);
  if (spec.stepper == Stepper::euler) {
    LatticeField out = y;
    lat::field_axpy(out, dt, k1);
    return out;
  }
  LatticeField y2 = y;
  lat::field_axpy(y2, 0.5 * dt, k1);
  const LatticeField k2 = assemble_rate(y2, spec, background, flat_id);
  LatticeField y3 = y;
  lat::field_axpy(y3, 0.5 * dt, k2);
  const LatticeField k3 = assemble_rate(y3, spec, background, flat_id);
  LatticeField y4 = y;
  lat::field_axpy(y4, dt, k3);
  const LatticeField k4 = assemble_rate(y4, spec, background, flat_id);

  LatticeField out = y;
  lat::field_axpy(out, dt / 6.0, k1);
  lat::field_axpy(out, dt / 3.0, k2);
  lat::field_axpy(out, dt / 3.0, k3);
  lat::field_axpy(out, dt / 6.0, k4);
  return out;
}

}  // namespace

Termination step(FlowState& st, const FlowSpec& spec, double dt,
                 const MetricField* background) {
  const MetricField flat_id = lat::identity_metric_field(st.phi.grid);
  LatticeField ynew;
  try {
    ynew = advance(st.phi, spec, dt, background, flat_id);
  } catch (const g2::PositivityError&) {
    return Termination::positivity_lost;  // state left at the last good step
  }
  if (!all_finite(ynew.data)) return Termination::diverged;

  field::StructureField frame_new;
  if (!is_heat_kind(spec.kind)) {
    try {
      frame_new = fld::analyze_structure(ynew);
    } catch (const g2::PositivityError&) {
      return Termination::positivity_lost;
    }
  }

  st.phi = std::move(ynew);
  if (!is_heat_kind(spec.kind)) {
    st.frame = std::move(frame_new);
    st.has_frame = true;
  }
  st.t += dt;
  ++st.step_count;

  if (is_coflow_kind(spec.kind) &&
      lat::highest_frequency_fraction(st.phi) > 0.5)
    return Termination::diverged;
  return Termination::reached_T;
}

std::vector<double> tracked_periods(const FlowState& st, FlowKind kind) {
  if (is_coflow_kind(kind) && st.has_frame)
    return lat::periods(st.frame.psi).values;
  return lat::periods(st.phi).values;
}

namespace {

HeatRecord heat_record(const FlowState& st, const MetricField& flat_id) {
  HeatRecord r;
  r.t = st.t;
  const LatticeField& f = st.phi;
  r.l2_norm = lat::l2_norm(f, flat_id);
  LatticeField centered = f;
  const std::size_t ns = f.nsites();
  for (int c = 0; c < f.ncomp(); ++c) {
    double mean = 0.0;
    const double* src = f.comp(c);
    for (std::size_t s = 0; s < ns; ++s) mean += src[s];
    mean /= static_cast<double>(ns);
    double* dst = centered.comp(c);
    for (std::size_t s = 0; s < ns; ++s) dst[s] -= mean;
  }
  r.l2_dist_to_mean = lat::l2_norm(centered, flat_id);
  r.d_residual = (f.degree < 7) ? sup_abs(lat::d(f).data) : 0.0;
  r.dstar_residual = (f.degree > 0) ? sup_abs(lat::codiff(f, flat_id).data) : 0.0;
  r.highest_frequency_fraction = lat::highest_frequency_fraction(f);
  return r;
}

}  // namespace

std::string heat_csv_header() {
  return "t,l2_norm,l2_dist_to_mean,d_residual,dstar_residual,"
         "highest_frequency_fraction";
}

std::string heat_csv_row(const HeatRecord& r) {
  const double cols[6] = {r.t,          r.l2_norm,        r.l2_dist_to_mean,
                          r.d_residual, r.dstar_residual, r.highest_frequency_fraction};
  std::string out;
  for (int i = 0; i < 6; ++i) {
    if (i) out.push_back(',');
    out += io::format_double(cols[i]);
  }
  return out;
}

Trajectory run(FlowState st, const FlowSpec& spec, double T,
               std::uint64_t sample_every, const MetricField* background,
               std::vector<double> reference_periods, const RunHooks& hooks) {
  validate_spec(spec, st.phi.degree);
  if (sample_every == 0) sample_every = 1;
  if (st.phi.degree == 3 && !st.has_frame) rebuild_frame(st);
  if (reference_periods.empty())
    reference_periods = tracked_periods(st, spec.kind);
  const MetricField flat_id = lat::identity_metric_field(st.phi.grid);

  Trajectory out;
  out.sample_every = sample_every;

  std::uint64_t last_sampled = ~std::uint64_t{0};
  auto sample = [&]() {
    if (st.step_count == last_sampled) return;
    last_sampled = st.step_count;
    if (is_heat_kind(spec.kind)) {
      const HeatRecord r = heat_record(st, flat_id);
      out.heat_records.push_back(r);
      if (hooks.on_sample) hooks.on_sample(st, nullptr, &r);
      out.samples.push_back(st);
    } else {
      diag::DiagnosticsRecord rec = diag::analyze(st.frame, st.t);
      const std::vector<double> now = tracked_periods(st, spec.kind);
      double drift = 0.0;
      for (std::size_t i = 0;
           i < now.size() && i < reference_periods.size(); ++i)
        drift = std::max(drift, std::fabs(now[i] - reference_periods[i]));
      rec.period_drift = drift;
      st.diagnostics.push_back(rec);
      if (hooks.on_sample) hooks.on_sample(st, &rec, nullptr);
      out.samples.push_back(st);
    }
  };

  // A resumed state was checkpointed after its due records were emitted, so
  // it must not be re-sampled (in particular not by the terminal sample when
  // the stored horizon was already reached).
  if (st.step_count == 0)
    sample();
  else
    last_sampled = st.step_count;

  const double t_tol = 1e-12 * std::max(1.0, std::fabs(T));
  out.termination = Termination::reached_T;
  while (st.t < T - t_tol) {
    const double dt_cfl = cfl_max_dt(st, spec);
    if (dt_cfl < std::max(1e-14, 1e-6 * spec.dt)) {
      out.termination = Termination::cfl_collapse;
      break;
    }
    const double dt_step = std::min({spec.dt, dt_cfl, T - st.t});
    const Termination r = step(st, spec, dt_step, background);
    if (r != Termination::reached_T) {
      out.termination = r;
      sample();  // last good (or committed diverging) state
      break;
    }
    // Sample before the after-step hook so a checkpoint written there
    // captures a state whose due records have all been emitted; a resume
    // then continues the record stream without a gap or a duplicate.
    if (st.step_count % sample_every == 0) sample();
    if (hooks.after_step) hooks.after_step(st);
  }
  if (out.termination == Termination::reached_T) sample();
  out.final_state = st;
  return out;
}

// --- Checkpointing -----------------------------------------------------------

namespace {

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out.push_back(',');
    out += io::format_double(v[i]);
  }
  return out;
}

std::vector<double> split_doubles(const std::string& s) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t next = s.find(',', pos);
    if (next == std::string::npos) next = s.size();
    const std::string tok = s.substr(pos, next - pos);
    if (!tok.empty()) out.push_back(std::strtod(tok.c_str(), nullptr));
    pos = next + 1;
  }
  return out;
}

}  // namespace

void write_checkpoint(const std::string& prefix, const CheckpointData& c) {
  io::write_snapshot(prefix + ".g2f1", c.phi);
  std::string s;
  s += "g2flow-checkpoint 1\n";
  s += std::string("kind=") + kind_name(c.spec.kind) + "\n";
  s += std::string("stepper=") + stepper_name(c.spec.stepper) + "\n";
  s += "dt=" + io::format_double(c.spec.dt) + "\n";
  s += "safety=" + io::format_double(c.spec.safety) + "\n";
  s += "lambda1=" + io::format_double(c.spec.lambda1) + "\n";
  s += "c=" + io::format_double(c.spec.c) + "\n";
  s += "nu=" + join_doubles({c.spec.nu[0], c.spec.nu[1], c.spec.nu[2],
                             c.spec.nu[3]}) + "\n";
  s += "t=" + io::format_double(c.t) + "\n";
  s += "step_count=" + std::to_string(c.step_count) + "\n";
  s += "seed=" + std::to_string(c.seed) + "\n";
  s += "T=" + io::format_double(c.T) + "\n";
  s += "sample_every=" + std::to_string(c.sample_every) + "\n";
  s += "csv=" + c.csv_path + "\n";
  s += "ref_periods=" + join_doubles(c.reference_periods) + "\n";
  io::write_text_file(prefix + ".ckpt", s);
}

CheckpointData read_checkpoint(const std::string& prefix) {
  const std::string text = io::read_text_file(prefix + ".ckpt");
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "g2flow-checkpoint 1")
    throw std::runtime_error("not a recognized checkpoint sidecar: " + prefix);
  CheckpointData c;
  bool have_kind = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("malformed checkpoint line: " + line);
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "kind") {
      c.spec.kind = kind_from_name(val);
      have_kind = true;
    } else if (key == "stepper") {
      c.spec.stepper = stepper_from_name(val);
    } else if (key == "dt") {
      c.spec.dt = std::strtod(val.c_str(), nullptr);
    } else if (key == "safety") {
      c.spec.safety = std::strtod(val.c_str(), nullptr);
    } else if (key == "lambda1") {
      c.spec.lambda1 = std::strtod(val.c_str(), nullptr);
    } else if (key == "c") {
      c.spec.c = std::strtod(val.c_str(), nullptr);
    } else if (key == "nu") {
      const std::vector<double> w = split_doubles(val);
      if (w.size() != 4)
        throw std::runtime_error("checkpoint nu must have 4 entries");
      for (int i = 0; i < 4; ++i) c.spec.nu[i] = w[i];
    } else if (key == "t") {
      c.t = std::strtod(val.c_str(), nullptr);
    } else if (key == "step_count") {
      c.step_count = std::stoull(val);
    } else if (key == "seed") {
      c.seed = std::stoull(val);
    } else if (key == "T") {
      c.T = std::strtod(val.c_str(), nullptr);
    } else if (key == "sample_every") {
      c.sample_every = std::stoull(val);
    } else if (key == "csv") {
      c.csv_path = val;
    } else if (key == "ref_periods") {
      c.reference_periods = split_doubles(val);
    } else {
      throw std::runtime_error("unknown checkpoint key: " + key);
    }
  }
  if (!have_kind) throw std::runtime_error("checkpoint sidecar missing kind");
  c.phi = io::read_snapshot(prefix + ".g2f1");
  return c;
}

}  // namespace g2flow::flows
