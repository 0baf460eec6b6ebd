#pragma once

#include <string>

#include "g2flow/lattice.hpp"

namespace g2flow::io {

// Binary snapshot of a single form field.
//
//   magic   "G2F1"          4 bytes
//   scheme  u32 LE          0 = central, 1 = spectral
//   degree  u32 LE
//   extents u64 LE x 7
//   spacings f64 LE x 7
//   data    f64 LE, site-major (all components of site 0, then site 1, ...)
//
// In-memory fields are component-major; the transpose happens here and only
// here. Throws std::runtime_error on I/O failure or malformed content.
void write_snapshot(const std::string& path, const lattice::LatticeField& f);
lattice::LatticeField read_snapshot(const std::string& path);

// Round-trip-exact decimal rendering (17 significant digits) used for every
// number that lands in CSV or checkpoint text, so output is byte-stable
// across runs and thread counts.
std::string format_double(double v);

// Whole-file text helpers (used by checkpoints and the CLI).
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace g2flow::io
