#include "g2flow/io.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

static_assert(std::endian::native == std::endian::little,
              "snapshot I/O assumes a little-endian host");

namespace g2flow::io {

namespace {

constexpr char kMagic[4] = {'G', '2', 'F', '1'};
constexpr std::size_t kSiteChunk = 4096;

void put(std::ofstream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void get(std::ifstream& in, void* p, std::size_t n, const char* what) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    throw std::runtime_error(std::string("snapshot truncated reading ") +
                             what);
}

}  // namespace

void write_snapshot(const std::string& path, const lattice::LatticeField& f) {
  if (!f.grid) throw std::runtime_error("write_snapshot: field has no grid");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);

  put(out, kMagic, 4);
  const std::uint32_t scheme =
      f.grid->scheme == lattice::Scheme::spectral ? 1u : 0u;
  const std::uint32_t degree = static_cast<std::uint32_t>(f.degree);
  put(out, &scheme, 4);
  put(out, &degree, 4);
  for (int a = 0; a < 7; ++a) {
    const std::uint64_t e = static_cast<std::uint64_t>(f.grid->extents[a]);
    put(out, &e, 8);
  }
  for (int a = 0; a < 7; ++a) put(out, &f.grid->spacings[a], 8);

  const std::size_t ns = f.nsites();
  const int nc = f.ncomp();
  std::vector<double> buf(kSiteChunk * static_cast<std::size_t>(nc));
  for (std::size_t s0 = 0; s0 < ns; s0 += kSiteChunk) {
    const std::size_t n = std::min(kSiteChunk, ns - s0);
    for (std::size_t s = 0; s < n; ++s)
      for (int c = 0; c < nc; ++c)
        buf[s * nc + c] = f.comp(c)[s0 + s];
    put(out, buf.data(), n * nc * 8);
  }
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path);
}

lattice::LatticeField read_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);

  char magic[4];
  get(in, magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a snapshot file (bad magic): " + path);

  std::uint32_t scheme_raw = 0, degree_raw = 0;
  get(in, &scheme_raw, 4, "scheme");
  get(in, &degree_raw, 4, "degree");
  if (scheme_raw > 1)
    throw std::runtime_error("snapshot has unknown scheme code");
  if (degree_raw > 7)
    throw std::runtime_error("snapshot has out-of-range form degree");

  std::array<std::int64_t, 7> extents{};
  std::array<double, 7> spacings{};
  for (int a = 0; a < 7; ++a) {
    std::uint64_t e = 0;
    get(in, &e, 8, "extents");
    if (e == 0 || e > (1u << 20))
      throw std::runtime_error("snapshot has implausible extent");
    extents[a] = static_cast<std::int64_t>(e);
  }
  for (int a = 0; a < 7; ++a) get(in, &spacings[a], 8, "spacings");

  lattice::GridPtr grid;
  try {
    grid = lattice::make_grid(
        extents, spacings,
        scheme_raw ? lattice::Scheme::spectral : lattice::Scheme::central);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("snapshot header invalid: ") +
                             e.what());
  }

  lattice::LatticeField f = lattice::make_field(grid, static_cast<int>(degree_raw));
  const std::size_t ns = f.nsites();
  const int nc = f.ncomp();
  std::vector<double> buf(kSiteChunk * static_cast<std::size_t>(nc));
  for (std::size_t s0 = 0; s0 < ns; s0 += kSiteChunk) {
    const std::size_t n = std::min(kSiteChunk, ns - s0);
    get(in, buf.data(), n * nc * 8, "data");
    for (std::size_t s = 0; s < n; ++s)
      for (int c = 0; c < nc; ++c)
        f.comp(c)[s0 + s] = buf[s * nc + c];
  }
  char extra;
  in.read(&extra, 1);
  if (in.gcount() != 0)
    throw std::runtime_error("snapshot has trailing bytes: " + path);
  return f;
}

std::string format_double(double v) {
  char buf[64];
  const auto res =
      std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (!in.good() && !in.eof())
    throw std::runtime_error("read failed: " + path);
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace g2flow::io
