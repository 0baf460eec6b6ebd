// Command-line driver: identity validation, configured flow runs with
// checkpoint/resume, and single-snapshot diagnostics.
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "g2flow/diagnostics.hpp"
#include "g2flow/exterior.hpp"
#include "g2flow/flows.hpp"
#include "g2flow/g2.hpp"
#include "g2flow/g2field.hpp"
#include "g2flow/io.hpp"
#include "g2flow/lattice.hpp"

namespace ext = g2flow::exterior;
namespace g2 = g2flow::g2;
namespace lat = g2flow::lattice;
namespace fld = g2flow::field;
namespace dg = g2flow::diag;
namespace fl = g2flow::flows;
namespace io = g2flow::io;

using nlohmann::json;

namespace {

// Process exit codes, one per failure class.
constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitPositivity = 3;
constexpr int kExitDiverged = 4;
constexpr int kExitCflCollapse = 5;
constexpr int kExitConfig = 6;
constexpr int kExitIo = 7;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- Strict JSON access ------------------------------------------------------

void check_keys(const json& o, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!o.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& item : o.items()) {
    bool ok = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw ConfigError(where + ": unknown key \"" + item.key() + "\"");
  }
}

const json& need(const json& o, const std::string& where, const char* key) {
  const auto it = o.find(key);
  if (it == o.end())
    throw ConfigError(where + ": missing required key \"" + key + "\"");
  return *it;
}

double as_number(const json& v, const std::string& where) {
  if (!v.is_number()) throw ConfigError(where + ": expected a number");
  return v.get<double>();
}

std::uint64_t as_count(const json& v, const std::string& where) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
    throw ConfigError(where + ": expected a non-negative integer");
  return v.get<std::uint64_t>();
}

std::string as_string(const json& v, const std::string& where) {
  if (!v.is_string()) throw ConfigError(where + ": expected a string");
  return v.get<std::string>();
}

// --- Run configuration -------------------------------------------------------

struct CliConfig {
  lat::GridPtr grid;
  std::string ic_kind;
  double ic_epsilon = 0.0;
  int ic_shell_min = 1;
  int ic_shell_max = 3;  // lowest three Fourier shells by default
  double ic_amplitude = 1.0;
  std::string ic_path;
  fl::FlowSpec spec;
  double T = 0.0;
  std::uint64_t sample_every = 1;
  std::string csv_path;
  std::string snapshot_path;
  std::string checkpoint_prefix;
  std::uint64_t checkpoint_every = 0;
  std::uint64_t seed = 0;
};

std::string resolve_output(const std::string& path) {
  if (path.empty()) return path;
  const char* outdir = std::getenv("G2FLOW_OUTDIR");
  std::filesystem::path p(path);
  if (outdir && *outdir && p.is_relative())
    p = std::filesystem::path(outdir) / p;
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  return p.string();
}

lat::GridPtr parse_grid(const json& jg) {
  check_keys(jg, "grid", {"extents", "spacings", "scheme"});
  const json& je = need(jg, "grid", "extents");
  const json& js = need(jg, "grid", "spacings");
  if (!je.is_array() || je.empty() || je.size() > 7)
    throw ConfigError("grid.extents: expected an array of 1..7 entries");
  if (!js.is_array() || js.size() != je.size())
    throw ConfigError("grid.spacings: expected an array matching extents");
  std::array<std::int64_t, 7> extents{1, 1, 1, 1, 1, 1, 1};
  std::array<double, 7> spacings{1, 1, 1, 1, 1, 1, 1};
  for (std::size_t i = 0; i < je.size(); ++i) {
    if (!je[i].is_number_integer() || je[i].get<std::int64_t>() < 1)
      throw ConfigError("grid.extents: entries must be integers >= 1");
    extents[i] = je[i].get<std::int64_t>();
    const double h = as_number(js[i], "grid.spacings");
    if (!(h > 0.0)) throw ConfigError("grid.spacings: entries must be > 0");
    spacings[i] = h;
  }
  const std::string scheme = as_string(need(jg, "grid", "scheme"), "grid.scheme");
  lat::Scheme sc;
  if (scheme == "central")
    sc = lat::Scheme::central;
  else if (scheme == "spectral")
    sc = lat::Scheme::spectral;
  else
    throw ConfigError("grid.scheme: expected \"central\" or \"spectral\"");
  return lat::make_grid(extents, spacings, sc);
}

CliConfig parse_config(const std::string& path) {
  std::string text;
  try {
    text = io::read_text_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("cannot read config: ") + e.what());
  }
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }

  check_keys(root, "config",
             {"version", "grid", "initial", "flow", "time", "output", "seed"});
  const json& jv = need(root, "config", "version");
  if (!jv.is_number_integer() || jv.get<int>() != 1)
    throw ConfigError("config.version: this build reads version 1");

  CliConfig cfg;
  cfg.grid = parse_grid(need(root, "config", "grid"));

  const json& ji = need(root, "config", "initial");
  cfg.ic_kind = as_string(need(ji, "initial", "kind"), "initial.kind");
  if (cfg.ic_kind == "uniform_standard") {
    check_keys(ji, "initial", {"kind"});
  } else if (cfg.ic_kind == "closed_perturbation") {
    check_keys(ji, "initial",
               {"kind", "epsilon", "shell_min", "shell_max", "amplitude"});
    cfg.ic_epsilon = as_number(need(ji, "initial", "epsilon"), "initial.epsilon");
    if (!(cfg.ic_epsilon > 0.0))
      throw ConfigError("initial.epsilon: expected > 0");
    if (ji.contains("shell_min"))
      cfg.ic_shell_min = static_cast<int>(as_count(ji["shell_min"], "initial.shell_min"));
    if (ji.contains("shell_max"))
      cfg.ic_shell_max = static_cast<int>(as_count(ji["shell_max"], "initial.shell_max"));
    if (cfg.ic_shell_min < 1 || cfg.ic_shell_max < cfg.ic_shell_min)
      throw ConfigError("initial: need 1 <= shell_min <= shell_max");
    if (ji.contains("amplitude"))
      cfg.ic_amplitude = as_number(ji["amplitude"], "initial.amplitude");
  } else if (cfg.ic_kind == "from_snapshot") {
    check_keys(ji, "initial", {"kind", "path"});
    cfg.ic_path = as_string(need(ji, "initial", "path"), "initial.path");
  } else {
    throw ConfigError("initial.kind: expected uniform_standard, "
                      "closed_perturbation or from_snapshot");
  }

  const json& jf = need(root, "config", "flow");
  check_keys(jf, "flow",
             {"kind", "stepper", "dt", "safety", "lambda1", "c", "nu"});
  try {
    cfg.spec.kind = fl::kind_from_name(as_string(need(jf, "flow", "kind"), "flow.kind"));
    if (jf.contains("stepper"))
      cfg.spec.stepper = fl::stepper_from_name(as_string(jf["stepper"], "flow.stepper"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("flow: ") + e.what());
  }
  cfg.spec.dt = as_number(need(jf, "flow", "dt"), "flow.dt");
  if (jf.contains("safety")) cfg.spec.safety = as_number(jf["safety"], "flow.safety");
  if (jf.contains("lambda1")) cfg.spec.lambda1 = as_number(jf["lambda1"], "flow.lambda1");
  if (jf.contains("c")) cfg.spec.c = as_number(jf["c"], "flow.c");
  if (jf.contains("nu")) {
    const json& jn = jf["nu"];
    if (!jn.is_array() || jn.size() != 4)
      throw ConfigError("flow.nu: expected an array of 4 weights");
    for (int i = 0; i < 4; ++i) cfg.spec.nu[i] = as_number(jn[i], "flow.nu");
  }

  const json& jt = need(root, "config", "time");
  check_keys(jt, "time", {"T", "sample_every"});
  cfg.T = as_number(need(jt, "time", "T"), "time.T");
  if (!(cfg.T >= 0.0)) throw ConfigError("time.T: expected >= 0");
  if (jt.contains("sample_every")) {
    cfg.sample_every = as_count(jt["sample_every"], "time.sample_every");
    if (cfg.sample_every == 0)
      throw ConfigError("time.sample_every: expected >= 1");
  }

  if (root.contains("output")) {
    const json& jo = root["output"];
    check_keys(jo, "output",
               {"csv", "snapshot", "checkpoint_prefix", "checkpoint_every"});
    if (jo.contains("csv")) cfg.csv_path = as_string(jo["csv"], "output.csv");
    if (jo.contains("snapshot"))
      cfg.snapshot_path = as_string(jo["snapshot"], "output.snapshot");
    if (jo.contains("checkpoint_prefix"))
      cfg.checkpoint_prefix =
          as_string(jo["checkpoint_prefix"], "output.checkpoint_prefix");
    if (jo.contains("checkpoint_every"))
      cfg.checkpoint_every =
          as_count(jo["checkpoint_every"], "output.checkpoint_every");
    if (cfg.checkpoint_every > 0 && cfg.checkpoint_prefix.empty())
      throw ConfigError("output: checkpoint_every needs a checkpoint_prefix");
  }
  if (root.contains("seed")) cfg.seed = as_count(root["seed"], "seed");
  return cfg;
}

lat::LatticeField build_initial(const CliConfig& cfg) {
  if (cfg.ic_kind == "uniform_standard")
    return fld::uniform_standard_phi(cfg.grid);
  if (cfg.ic_kind == "closed_perturbation") {
    lat::LatticeField base = fld::uniform_standard_phi(cfg.grid);
    lat::LatticeField eta =
        fld::band_limited_field(cfg.grid, 2, cfg.seed, cfg.ic_shell_min,
                                cfg.ic_shell_max, cfg.ic_amplitude, 0.0);
    try {
      return fld::make_closed_perturbation(base, eta, cfg.ic_epsilon).phi;
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("initial.epsilon check failed: ") + e.what());
    }
  }
  lat::LatticeField f = io::read_snapshot(cfg.ic_path);
  if (f.grid->extents != cfg.grid->extents ||
      f.grid->spacings != cfg.grid->spacings ||
      f.grid->scheme != cfg.grid->scheme)
    throw ConfigError("initial snapshot grid does not match config grid");
  return f;
}

int exit_for(fl::Termination t) {
  switch (t) {
    case fl::Termination::reached_T: return kExitOk;
    case fl::Termination::positivity_lost: return kExitPositivity;
    case fl::Termination::cfl_collapse: return kExitCflCollapse;
    case fl::Termination::diverged: return kExitDiverged;
  }
  return kExitIo;
}

bool is_heat_lane(fl::FlowKind k) {
  return k == fl::FlowKind::heat || k == fl::FlowKind::heat_modified;
}

// --- validate ---------------------------------------------------------------

struct CheckResult {
  std::string name;
  double residual;
  double tol;
  std::string note;
};

ext::AltForm random_form(std::mt19937_64& rng, int degree, double amp) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ext::AltForm a = ext::make_form(degree);
  for (int c = 0; c < a.size(); ++c) a[c] = amp * u(rng);
  return a;
}

ext::AltForm random_positive_phi(std::mt19937_64& rng) {
  ext::AltForm phi = g2::standard_phi();
  const ext::AltForm d = random_form(rng, 3, 0.05);
  for (int c = 0; c < 35; ++c) phi[c] += d[c];
  return phi;
}

std::vector<CheckResult> run_identity_suite(bool inject_sign_fault) {
  std::vector<CheckResult> out;
  std::mt19937_64 rng(20260818ull);

  {  // Standard structure: norms, duality, induced metric.
    const ext::AltForm phi = g2::standard_phi();
    const ext::AltForm psi = g2::standard_psi();
    const ext::Metric id = ext::euclidean_metric();
    double r = std::fabs(ext::form_inner(phi, phi, id) - 7.0);
    r = std::max(r, std::fabs(ext::form_inner(psi, psi, id) - 7.0));
    const ext::AltForm sp = ext::hodge_star(phi, id);
    for (int c = 0; c < 35; ++c) r = std::max(r, std::fabs(sp[c] - psi[c]));
    const ext::Metric m = g2::metric_from_phi(phi);
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 7; ++j)
        r = std::max(r, std::fabs(m.g[i * 7 + j] - (i == j ? 1.0 : 0.0)));
    out.push_back({"standard_structure", r, 1e-12, ""});
  }

  {  // Star involution ** = id, across degrees, at a non-flat metric.
    double r = 0.0;
    for (int rep = 0; rep < 4; ++rep) {
      const ext::Metric m = g2::metric_from_phi(random_positive_phi(rng));
      for (int deg = 1; deg <= 6; ++deg) {
        const ext::AltForm a = random_form(rng, deg, 1.0);
        ext::AltForm ss = ext::hodge_star(ext::hodge_star(a, m), m);
        if (inject_sign_fault) ss[0] = -ss[0];  // simulated sign-table fault
        for (int c = 0; c < a.size(); ++c)
          r = std::max(r, std::fabs(ss[c] - a[c]));
      }
    }
    out.push_back({"star_involution", r, 1e-10,
                   inject_sign_fault ? "sign fault injected" : ""});
  }

  {  // Gram contractions of the frame forms against the induced metric.
    double r = 0.0;
    for (int rep = 0; rep < 3; ++rep) {
      const g2::G2Frame fr = g2::make_frame(random_positive_phi(rng));
      for (int a = 0; a < 7; ++a)
        for (int b = 0; b < 7; ++b) {
          r = std::max(r, std::fabs(ext::form_inner(fr.k[a], fr.k[b], fr.metric) -
                                    4.0 * fr.metric.g[a * 7 + b]));
          ext::AltForm ea = ext::make_form(1), eb = ext::make_form(1);
          ea[a] = 1.0;
          eb[b] = 1.0;
          r = std::max(r, std::fabs(ext::form_inner(ext::wedge(ea, fr.phi),
                                                    ext::wedge(eb, fr.phi),
                                                    fr.metric) -
                                    4.0 * fr.metric.g_inv[a * 7 + b]));
          r = std::max(r, std::fabs(ext::form_inner(ext::wedge(ea, fr.psi),
                                                    ext::wedge(eb, fr.psi),
                                                    fr.metric) -
                                    3.0 * fr.metric.g_inv[a * 7 + b]));
        }
    }
    out.push_back({"gram_contractions", r, 1e-10, ""});
  }

  {  // Type projections: completeness, idempotence, orthogonality.
    double r = 0.0;
    for (int rep = 0; rep < 3; ++rep) {
      const g2::G2Frame fr = g2::make_frame(random_positive_phi(rng));
      const ext::AltForm gamma = random_form(rng, 3, 1.0);
      const ext::AltForm p1 = g2::project3(fr, gamma, 1);
      const ext::AltForm p7 = g2::project3(fr, gamma, 7);
      const ext::AltForm p27 = g2::project3(fr, gamma, 27);
      for (int c = 0; c < 35; ++c)
        r = std::max(r, std::fabs(p1[c] + p7[c] + p27[c] - gamma[c]));
      const ext::AltForm pp = g2::project3(fr, p7, 7);
      for (int c = 0; c < 35; ++c) r = std::max(r, std::fabs(pp[c] - p7[c]));
      r = std::max(r, std::fabs(ext::form_inner(p1, p7, fr.metric)));
      r = std::max(r, std::fabs(ext::form_inner(p7, p27, fr.metric)));
      r = std::max(r, std::fabs(ext::form_inner(p1, p27, fr.metric)));
      const ext::AltForm beta = random_form(rng, 2, 1.0);
      const ext::AltForm b7 = g2::project2(fr, beta, 7);
      const ext::AltForm b14 = g2::project2(fr, beta, 14);
      for (int c = 0; c < 21; ++c)
        r = std::max(r, std::fabs(b7[c] + b14[c] - beta[c]));
      r = std::max(r, std::fabs(ext::form_inner(b7, b14, fr.metric)));
    }
    out.push_back({"type_projectors", r, 1e-10, ""});
  }

  {  // j(i(h)) = a h + b tr(h) g with a + 7b = 36.
    const g2::JiConstants ji = g2::ji_constants();
    double r = std::fabs(ji.a + 7.0 * ji.b - 36.0);
    for (int rep = 0; rep < 3; ++rep) {
      const g2::G2Frame fr = g2::make_frame(random_positive_phi(rng));
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      double h[49], jih[49];
      for (int i = 0; i < 7; ++i)
        for (int j = i; j < 7; ++j) h[i * 7 + j] = h[j * 7 + i] = u(rng);
      g2::j_map(fr, g2::i_map(fr, h), jih);
      double tr = 0.0;
      for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 7; ++j) tr += fr.metric.g_inv[i * 7 + j] * h[i * 7 + j];
      for (int i = 0; i < 49; ++i)
        r = std::max(r, std::fabs(jih[i] - ji.a * h[i] -
                                  ji.b * tr * fr.metric.g[i / 7 * 7 + i % 7]));
    }
    char note[64];
    std::snprintf(note, sizeof note, "(a, b) = (%.12g, %.12g), a + 7b = %.12g",
                  ji.a, ji.b, ji.a + 7.0 * ji.b);
    out.push_back({"ji_composition", r, 1e-8, note});
  }

  {  // Scaling covariance: phi -> lambda^3 phi gives g -> lambda^2 g.
    const double lam = 1.3;
    ext::AltForm phi = g2::standard_phi();
    for (int c = 0; c < 35; ++c) phi[c] *= lam * lam * lam;
    const ext::Metric m = g2::metric_from_phi(phi);
    double r = 0.0;
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 7; ++j)
        r = std::max(r, std::fabs(m.g[i * 7 + j] -
                                  (i == j ? lam * lam : 0.0)));
    r = std::max(r, std::fabs(m.vol_scale - std::pow(lam, 7.0)));
    out.push_back({"scaling_covariance", r, 1e-10, ""});
  }

  {  // Variation split reassembly.
    double r = 0.0;
    for (int rep = 0; rep < 4; ++rep) {
      const g2::G2Frame fr = g2::make_frame(random_positive_phi(rng));
      const g2::FlowDecomposition dec =
          g2::decompose_variation(fr, random_form(rng, 3, 1.0));
      r = std::max(r, dec.resid);
    }
    out.push_back({"variation_split", r, 1e-9, ""});
  }

  return out;
}

int cmd_validate(bool inject_sign_fault) {
  const std::vector<CheckResult> checks = run_identity_suite(inject_sign_fault);
  int failures = 0;
  for (const CheckResult& c : checks) {
    const bool ok = c.residual <= c.tol;
    if (!ok) ++failures;
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << c.name
              << "  residual=" << io::format_double(c.residual)
              << "  tol=" << io::format_double(c.tol);
    if (!c.note.empty()) std::cout << "  " << c.note;
    std::cout << "\n";
  }
  std::cout << "validation: " << (checks.size() - failures) << "/"
            << checks.size() << " checks passed\n";
  return failures == 0 ? kExitOk : kExitValidation;
}

// --- run / resume -------------------------------------------------------------

struct CsvSink {
  std::ofstream stream;
  bool enabled = false;

  void open(const std::string& path, bool fresh, const std::string& header) {
    if (path.empty()) return;
    stream.open(path, fresh ? std::ios::out | std::ios::trunc
                            : std::ios::out | std::ios::app);
    if (!stream) throw std::runtime_error("cannot open CSV output: " + path);
    enabled = true;
    if (fresh) stream << header << "\n";
  }

  void row(const std::string& r) {
    if (enabled) stream << r << "\n";
  }
};

void print_run_summary(const fl::Trajectory& tr) {
  const fl::FlowState& fin = tr.final_state;
  const std::size_t samples =
      std::max(tr.samples.size(), tr.heat_records.size());
  std::cout << "termination: " << fl::termination_name(tr.termination) << "\n"
            << "t: " << io::format_double(fin.t) << "\n"
            << "steps: " << fin.step_count << "\n"
            << "samples: " << samples << "\n";
}

int cmd_run(const std::string& config_path) {
  const CliConfig cfg = parse_config(config_path);
  lat::LatticeField init = build_initial(cfg);
  fl::validate_spec(cfg.spec, init.degree);

  fl::FlowState st = fl::make_state(std::move(init));
  const std::vector<double> refs = fl::tracked_periods(st, cfg.spec.kind);
  const bool heat = is_heat_lane(cfg.spec.kind);

  const std::string csv = resolve_output(cfg.csv_path);
  const std::string snapshot = resolve_output(cfg.snapshot_path);
  const std::string ckpt = resolve_output(cfg.checkpoint_prefix);

  CsvSink sink;
  sink.open(csv, /*fresh=*/true, heat ? fl::heat_csv_header() : dg::csv_header());

  fl::RunHooks hooks;
  hooks.on_sample = [&](const fl::FlowState&, const dg::DiagnosticsRecord* rec,
                        const fl::HeatRecord* hr) {
    sink.row(rec ? dg::csv_row(*rec) : fl::heat_csv_row(*hr));
  };
  auto checkpoint_state = [&](const fl::FlowState& s) {
    fl::CheckpointData c;
    c.spec = cfg.spec;
    c.t = s.t;
    c.step_count = s.step_count;
    c.seed = cfg.seed;
    c.T = cfg.T;
    c.sample_every = cfg.sample_every;
    c.csv_path = csv;
    c.reference_periods = refs;
    c.phi = s.phi;
    fl::write_checkpoint(ckpt, c);
  };
  if (!ckpt.empty() && cfg.checkpoint_every > 0)
    hooks.after_step = [&](const fl::FlowState& s) {
      if (s.step_count % cfg.checkpoint_every == 0) checkpoint_state(s);
    };

  fl::Trajectory tr = fl::run(std::move(st), cfg.spec, cfg.T, cfg.sample_every,
                              nullptr, refs, hooks);

  if (!snapshot.empty()) io::write_snapshot(snapshot, tr.final_state.phi);
  if (!ckpt.empty()) checkpoint_state(tr.final_state);
  print_run_summary(tr);
  return exit_for(tr.termination);
}

int cmd_resume(const std::string& prefix) {
  const fl::CheckpointData c = fl::read_checkpoint(prefix);
  fl::FlowState st = fl::make_state(c.phi, c.t);
  st.step_count = c.step_count;

  CsvSink sink;
  sink.open(c.csv_path, /*fresh=*/false, "");

  fl::RunHooks hooks;
  hooks.on_sample = [&](const fl::FlowState&, const dg::DiagnosticsRecord* rec,
                        const fl::HeatRecord* hr) {
    sink.row(rec ? dg::csv_row(*rec) : fl::heat_csv_row(*hr));
  };

  fl::Trajectory tr = fl::run(std::move(st), c.spec, c.T, c.sample_every,
                              nullptr, c.reference_periods, hooks);

  // Roll the checkpoint forward to the final state.
  fl::CheckpointData next = c;
  next.t = tr.final_state.t;
  next.step_count = tr.final_state.step_count;
  next.phi = tr.final_state.phi;
  fl::write_checkpoint(prefix, next);
  print_run_summary(tr);
  return exit_for(tr.termination);
}

// --- diagnose -----------------------------------------------------------------

int cmd_diagnose(const std::string& snapshot_path) {
  const lat::LatticeField phi = io::read_snapshot(snapshot_path);
  if (phi.degree != 3)
    throw ConfigError("diagnose expects a degree-3 snapshot, got degree " +
                      std::to_string(phi.degree));
  const fld::StructureField s = fld::analyze_structure(phi);
  const dg::DiagnosticsRecord r = dg::analyze(s, 0.0);

  double vol_disc = 0.0;
  const double vol = dg::volume_functional(s, &vol_disc);

  auto line = [](const char* name, double v) {
    std::cout << name << " = " << io::format_double(v) << "\n";
  };
  line("volume", vol);
  line("volume_route_discrepancy", vol_disc);
  line("energy_C", r.energy_C);
  line("energy_D", r.energy_D);
  line("energy_Dnu", r.energy_Dnu);
  line("tau0_l2", r.torsion_norms[0]);
  line("tau1_l2", r.torsion_norms[1]);
  line("tau2_l2", r.torsion_norms[2]);
  line("tau3_l2", r.torsion_norms[3]);
  line("scalar_curvature_integral", r.scalar_curvature_integral);
  line("d_residual", r.d_residual);
  line("dstar_residual", r.dstar_residual);
  line("f0_identity_residual", r.f0_identity_residual);
  line("highest_frequency_fraction", r.highest_frequency_fraction);

  // Three independent routes to the integrated scalar curvature: the
  // curvature oracle, the energy gap D - C, and (closed structures) -D.
  const double r_oracle = r.scalar_curvature_integral;
  const double r_energy = r.energy_D - r.energy_C;
  const double r_torsion = -r.energy_D;
  std::cout << "curvature_integral_oracle = " << io::format_double(r_oracle)
            << "\n"
            << "curvature_integral_energy_gap = " << io::format_double(r_energy)
            << "\n"
            << "curvature_integral_closed_torsion = "
            << io::format_double(r_torsion) << "\n"
            << "curvature_route_deviation_oracle_energy = "
            << io::format_double(std::fabs(r_oracle - r_energy)) << "\n"
            << "curvature_route_deviation_oracle_torsion = "
            << io::format_double(std::fabs(r_oracle - r_torsion)) << "\n"
            << "curvature_route_deviation_energy_torsion = "
            << io::format_double(std::fabs(r_energy - r_torsion)) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discrete flows of G2 structures on periodic lattices"};
  app.require_subcommand(1);

  CLI::App* sub_validate =
      app.add_subcommand("validate", "Run the pointwise identity suite");
  bool inject_sign_fault = false;
  sub_validate->add_flag("--inject-sign-fault", inject_sign_fault)->group("");

  std::string config_path;
  CLI::App* sub_run = app.add_subcommand("run", "Run a configured flow");
  sub_run->add_option("config", config_path, "JSON run configuration")
      ->required();

  std::string ckpt_prefix;
  CLI::App* sub_resume =
      app.add_subcommand("resume", "Continue a run from its checkpoint");
  sub_resume->add_option("checkpoint", ckpt_prefix, "checkpoint path prefix")
      ->required();

  std::string snapshot_path;
  CLI::App* sub_diagnose =
      app.add_subcommand("diagnose", "Analyze a structure snapshot");
  sub_diagnose->add_option("snapshot", snapshot_path, "snapshot file")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (sub_validate->parsed()) return cmd_validate(inject_sign_fault);
    if (sub_run->parsed()) return cmd_run(config_path);
    if (sub_resume->parsed()) return cmd_resume(ckpt_prefix);
    return cmd_diagnose(snapshot_path);
  } catch (const g2::PositivityError& e) {
    std::cerr << "error: structure lost positivity: " << e.what() << "\n";
    return kExitPositivity;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
}
