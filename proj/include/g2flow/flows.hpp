#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "g2flow/diagnostics.hpp"
#include "g2flow/g2field.hpp"
#include "g2flow/lattice.hpp"

namespace g2flow::flows {

enum class FlowKind {
  heat,
  heat_modified,
  laplacian,
  laplacian_deturck,
  coflow,
  modified_coflow,
  dirichlet_gradient,
};
enum class Stepper { rk4, euler };
enum class Termination { reached_T, positivity_lost, cfl_collapse, diverged };

const char* kind_name(FlowKind k);
FlowKind kind_from_name(const std::string& s);  // throws std::invalid_argument
const char* stepper_name(Stepper s);
Stepper stepper_from_name(const std::string& s);
const char* termination_name(Termination t);

struct FlowSpec {
  FlowKind kind = FlowKind::laplacian;
  // heat_modified spectral shift; <= 0 means "compute from the flat grid
  // spectrum" (the minimal nonzero eigenvalue of the scheme's Laplacian).
  double lambda1 = 0.0;
  double c = 0.0;                          // modified_coflow coefficient
  std::array<double, 4> nu{1, 1, 1, 1};    // dirichlet_gradient weights
  Stepper stepper = Stepper::rk4;
  double dt = 0.0;
  double safety = 0.9;                     // CFL safety factor in (0, 1]
};

// Kind/degree compatibility, dt > 0, safety in (0,1], finite parameters.
void validate_spec(const FlowSpec& spec, int field_degree);

struct FlowState {
  double t = 0.0;
  std::uint64_t step_count = 0;
  lattice::LatticeField phi;        // degree 3, or any form field for heat kinds
  field::StructureField frame;      // cached per-site structure, valid iff has_frame
  bool has_frame = false;
  std::vector<diag::DiagnosticsRecord> diagnostics;
};

// Builds the frame cache for degree-3 fields (throws g2::PositivityError).
FlowState make_state(lattice::LatticeField initial, double t = 0.0);
void rebuild_frame(FlowState& st);
// sup |phi - frame.phi|: zero when the cache is consistent.
double frame_rebuild_residual(const FlowState& st);

// Reduced per-sample record for heat-kind runs (the full DiagnosticsRecord
// is G2-specific and undefined off degree-3 structure fields).
struct HeatRecord {
  double t = 0.0;
  double l2_norm = 0.0;
  double l2_dist_to_mean = 0.0;
  double d_residual = 0.0;      // 0 for degree-7 fields
  double dstar_residual = 0.0;  // 0 for degree-0 fields
  double highest_frequency_fraction = 0.0;
};
std::string heat_csv_header();
std::string heat_csv_row(const HeatRecord& r);

struct Trajectory {
  std::vector<FlowState> samples;        // G2 kinds: record appended per sample
  std::vector<HeatRecord> heat_records;  // heat kinds
  std::uint64_t sample_every = 1;
  Termination termination = Termination::reached_T;
  FlowState final_state;  // state at loop exit, sampled or not
};

// --- Right-hand sides --------------------------------------------------------
// Heat flow of any form field on the flat background: rate = -Lap f.
lattice::LatticeField rhs_heat(const lattice::LatticeField& f,
                               const lattice::MetricField& mf);
// Spectrally shifted heat flow of a mean-zero scalar: rate = -Lap f + lambda1 f.
lattice::LatticeField rhs_heat_modified(const lattice::LatticeField& f,
                                        double lambda1);
// Laplacian flow rate, assembled as the exact form d(codiff phi).
lattice::LatticeField rhs_laplacian(FlowState& st);
// Laplacian flow with the DeTurck correction d(X .| phi) for the given
// background; still exact.
lattice::LatticeField rhs_laplacian_deturck(FlowState& st,
                                            const lattice::MetricField& background);
// Coflow: 4-form rate Lap psi (which reduces to the exact form d(codiff psi)
// on the coclosed structures the flow preserves), split per site into
// (f0, f1, f3) against dpsi = 4 f0 psi + f1 ^ phi - *f3, returned as the
// 3-form rate 3 f0 phi + *(f1 ^ phi) + f3. The sup-norm reconstruction
// residual of the split (relative to sup |rate4|) is written to
// *reconstruction_residual when non-null.
lattice::LatticeField rhs_coflow(FlowState& st,
                                 double* reconstruction_residual = nullptr);
// Coflow with the extra exact term d((c - (7/2) tau0) phi) in the 4-form rate.
lattice::LatticeField rhs_modified_coflow(FlowState& st, double c,
                                          double* reconstruction_residual = nullptr);
// Descent direction of the weighted torsion energy: the negative numerical
// gradient in coefficient space.
lattice::LatticeField rhs_dirichlet_gradient(FlowState& st,
                                             const std::array<double, 4>& nu);

// Minimal nonzero eigenvalue of the scheme's flat Laplacian on this grid.
double lambda1_flat(const lattice::Grid& g);

// Largest stable dt for the spec's stepper: safety * stab / lambda_hat with
// lambda_hat = (max Gershgorin row sum of g_inv) * sum_axes kappa_a / h_a^2,
// kappa = pi^2 on the spectral scheme and 1 on the central scheme;
// stab(euler) = 2, stab(rk4) = 2.785.
double cfl_max_dt(const FlowState& st, const FlowSpec& spec);

// One integrator step of size dt (positivity and finiteness checked; the
// frame is rebuilt after the update and at every internal stage).
// Returns reached_T when the step completed normally.
Termination step(FlowState& st, const FlowSpec& spec, double dt,
                 const lattice::MetricField* background = nullptr);

struct RunHooks {
  // Called at every sample point, with exactly one of the two records set.
  std::function<void(const FlowState&, const diag::DiagnosticsRecord*,
                     const HeatRecord*)> on_sample;
  // Called after every completed step (checkpoint cadence lives here).
  std::function<void(const FlowState&)> after_step;
};

// Fixed-dt run to time T (dt capped by the CFL bound each step, final step
// clipped to land on T). Samples at absolute step counts divisible by
// sample_every, plus the terminal state. reference_periods (the tracked
// field's periods at the start of the original run) feed the period_drift
// column; empty means "measure at the initial state".
Trajectory run(FlowState initial, const FlowSpec& spec, double T,
               std::uint64_t sample_every,
               const lattice::MetricField* background = nullptr,
               std::vector<double> reference_periods = {},
               const RunHooks& hooks = {});

// Periods of the cohomology class each kind conserves: [psi] for the coflow
// kinds, [phi] (or the evolving field itself) otherwise.
std::vector<double> tracked_periods(const FlowState& st, FlowKind kind);

// --- Checkpointing -----------------------------------------------------------
// A checkpoint is the field snapshot (<prefix>.g2f1, module lattice format)
// plus a sidecar text record (<prefix>.ckpt) holding the flow kind and
// parameters, t, step count, RNG seed, run horizon, sample cadence, the CSV
// path, and the reference periods. All numbers round-trip bit-exactly.
struct CheckpointData {
  FlowSpec spec;
  double t = 0.0;
  std::uint64_t step_count = 0;
  std::uint64_t seed = 0;
  double T = 0.0;
  std::uint64_t sample_every = 1;
  std::string csv_path;
  std::vector<double> reference_periods;
  lattice::LatticeField phi;
};

void write_checkpoint(const std::string& prefix, const CheckpointData& c);
CheckpointData read_checkpoint(const std::string& prefix);

}  // namespace g2flow::flows
