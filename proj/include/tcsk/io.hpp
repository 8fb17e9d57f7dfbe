#pragma once

// Field persistence and atomic artifact output. Field records use a fixed
// little-endian layout (magic "TCSK", version, grid shape, raw samples) so
// archives are portable across hosts; round trips are bit-exact. All writes
// go through a temp-file-then-rename so readers never observe partial files.

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"

namespace tcsk {

inline constexpr char field_magic[4] = {'T', 'C', 'S', 'K'};
inline constexpr std::uint32_t field_version = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline void put_f64(std::string& out, double x) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[i]) << (8 * i);
  return v;
}

inline double get_f64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

} // namespace detail

/** Write bytes atomically: temp file in the target directory, then rename. */
inline void write_bytes_atomic(const std::filesystem::path& path,
                               const std::string& bytes) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("write: cannot open " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw io_error("write: short write to " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec)
    throw io_error("write: rename to " + path.string() + " failed: " + ec.message());
}

inline void write_text_atomic(const std::filesystem::path& path,
                              const std::string& text) {
  write_bytes_atomic(path, text);
}

/** Serialize f: magic, version, n, 2n axis sizes (u32), then every sample as a
 *  little-endian double in storage order (row-major, last axis fastest). */
inline void write_field(const std::filesystem::path& path, const ScalarField& f) {
  std::string buf;
  buf.reserve(16 + 16 * static_cast<std::size_t>(f.grid.axes()) + 8 * f.size());
  buf.append(field_magic, 4);
  detail::put_u32(buf, field_version);
  detail::put_u32(buf, static_cast<std::uint32_t>(f.grid.n));
  for (int d = 0; d < f.grid.axes(); ++d)
    detail::put_u32(buf, static_cast<std::uint32_t>(f.grid.size[d]));
  for (double x : f.v) detail::put_f64(buf, x);
  write_bytes_atomic(path, buf);
}

inline ScalarField read_field(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("read_field: cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());

  if (bytes.size() < 12 || std::memcmp(bytes.data(), field_magic, 4) != 0)
    throw io_error("read_field: " + path.string() + " is not a TCSK field record");
  const std::uint32_t version = detail::get_u32(p + 4);
  if (version != field_version)
    throw io_error("read_field: unsupported version " + std::to_string(version) +
                   " in " + path.string());
  const std::uint32_t n = detail::get_u32(p + 8);
  if (n != 1 && n != 2)
    throw io_error("read_field: dimension " + std::to_string(n) +
                   " out of range in " + path.string());

  const std::size_t header = 12 + 4 * (2 * static_cast<std::size_t>(n));
  if (bytes.size() < header)
    throw io_error("read_field: truncated header in " + path.string());
  std::array<int, 4> sizes{};
  for (std::uint32_t d = 0; d < 2 * n; ++d) {
    const std::uint32_t s = detail::get_u32(p + 12 + 4 * d);
    if (s < 8 || s > (1u << 24) || (s & (s - 1)) != 0)
      throw io_error("read_field: axis size " + std::to_string(s) +
                     " invalid in " + path.string());
    sizes[d] = static_cast<int>(s);
  }
  const TorusGrid g(static_cast<int>(n), sizes);

  const std::size_t expect = header + 8 * g.points();
  if (bytes.size() != expect)
    throw io_error("read_field: payload size mismatch in " + path.string() +
                   " (" + std::to_string(bytes.size()) + " bytes, expected " +
                   std::to_string(expect) + ")");
  ScalarField f(g);
  for (std::size_t i = 0; i < f.size(); ++i)
    f[i] = detail::get_f64(p + header + 8 * i);
  return f;
}

// ---------------------------------------------------------------------------
// Run-log CSV: one fixed column set shared by every driver so downstream
// plotting never special-cases the command.

struct TrajectoryLog {
  struct Row {
    long step = 0;
    double t_or_time = 0.0;
    double residual_sup = 0.0;
    double j_chi = 0.0;
    double k_energy = 0.0;
    double twisted = 0.0;
    double dt_or_step_halvings = 0.0;
  };
  std::vector<Row> rows;

  void add(long step, double t_or_time, double residual_sup, double j_chi,
           double k_energy, double twisted, double dt_or_step_halvings) {
    rows.push_back({step, t_or_time, residual_sup, j_chi, k_energy, twisted,
                    dt_or_step_halvings});
  }

  std::string render() const {
    std::string out =
        "step,t_or_time,residual_sup,j_chi,k_energy,twisted,dt_or_step_halvings\n";
    char buf[512];
    for (const Row& r : rows) {
      std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                    r.step, r.t_or_time, r.residual_sup, r.j_chi, r.k_energy,
                    r.twisted, r.dt_or_step_halvings);
      out += buf;
    }
    return out;
  }

  void write(const std::filesystem::path& path) const {
    write_text_atomic(path, render());
  }
};

} // namespace tcsk
