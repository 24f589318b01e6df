#pragma once

// Text cache for SpectralData.
//
//   lpids-spectrum 1
//   tool_version <v>
//   depth <m>
//   epsilon <eps, 17 significant digits>
//   size <N>
//   boundary dirichlet|periodic
//   offset <t>
//   variant schroedinger|diagonal-only|free
//   method <solver name>
//   eigenvalues <N>
//   <one value per line, %.17g>
//   eigenvectors <N or 0>
//   <center first count v_0 ... v_{count-1}>   (one line per eigenvalue)
//   end

#include <lpids/error.hpp>
#include <lpids/spectral.hpp>

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>

namespace lpids {

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct SpectrumKey {
  int depth = 1;
  double epsilon = 1.0;
  std::size_t size = 0;
  Boundary boundary = Boundary::dirichlet;
  std::int64_t offset = 0;
  OperatorVariant variant = OperatorVariant::schroedinger;

  [[nodiscard]] std::string canonical() const {
    std::ostringstream os;
    os << "v=" << tool_version << ";m=" << depth << ";eps=" << format_double(epsilon)
       << ";N=" << size << ";bc=" << to_string(boundary) << ";off=" << offset
       << ";var=" << to_string(variant);
    return os.str();
  }

  /// FNV-1a of the canonical string, as 16 hex digits.
  [[nodiscard]] std::string hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canonical()) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

  [[nodiscard]] std::string filename() const { return "spectrum-" + hash() + ".txt"; }
};

inline void write_spectrum(std::ostream& os, const SpectrumKey& key,
                           const SpectralData& data) {
  os << "lpids-spectrum 1\n"
     << "tool_version " << tool_version << '\n'
     << "depth " << key.depth << '\n'
     << "epsilon " << format_double(key.epsilon) << '\n'
     << "size " << key.size << '\n'
     << "boundary " << to_string(key.boundary) << '\n'
     << "offset " << key.offset << '\n'
     << "variant " << to_string(key.variant) << '\n'
     << "method " << data.method << '\n'
     << "eigenvalues " << data.eigenvalues.size() << '\n';
  for (double e : data.eigenvalues) os << format_double(e) << '\n';
  const bool vectors = data.has_vectors() && data.centers.size() == data.size();
  os << "eigenvectors " << (vectors ? data.size() : 0) << '\n';
  if (vectors) {
    for (std::size_t k = 0; k < data.size(); ++k) {
      const auto& v = data.eigenvectors[k];
      os << data.centers[k] << ' ' << v.first << ' ' << v.values.size();
      for (double x : v.values) os << ' ' << format_double(x);
      os << '\n';
    }
  }
  os << "end\n";
}

namespace detail {

template <class T>
T read_field(std::istream& is, const char* name) {
  std::string tag;
  T value{};
  if (!(is >> tag) || tag != name || !(is >> value))
    throw PreconditionError(std::string("spectrum file: expected field '") + name + "'");
  return value;
}

inline double read_double(std::istream& is) {
  std::string tok;
  if (!(is >> tok)) throw PreconditionError("spectrum file: truncated");
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size())
    throw PreconditionError("spectrum file: bad number '" + tok + "'");
  return v;
}

}  // namespace detail

/// Parses a spectrum file; returns nothing if its header differs from `key`.
inline std::optional<SpectralData> read_spectrum(std::istream& is,
                                                 const SpectrumKey& key) {
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != "lpids-spectrum" || version != 1)
    throw PreconditionError("spectrum file: bad magic line");
  const auto ver = detail::read_field<std::string>(is, "tool_version");
  const auto depth = detail::read_field<int>(is, "depth");
  std::string tag;
  if (!(is >> tag) || tag != "epsilon")
    throw PreconditionError("spectrum file: expected field 'epsilon'");
  const double eps = detail::read_double(is);
  const auto size = detail::read_field<std::size_t>(is, "size");
  const auto bc = detail::read_field<std::string>(is, "boundary");
  const auto offset = detail::read_field<std::int64_t>(is, "offset");
  const auto variant = detail::read_field<std::string>(is, "variant");
  SpectralData data;
  data.method = detail::read_field<std::string>(is, "method");
  if (ver != tool_version || depth != key.depth || eps != key.epsilon ||
      size != key.size || bc != to_string(key.boundary) || offset != key.offset ||
      variant != to_string(key.variant))
    return std::nullopt;

  const auto count = detail::read_field<std::size_t>(is, "eigenvalues");
  if (count != size) throw PreconditionError("spectrum file: eigenvalue count mismatch");
  data.eigenvalues.resize(count);
  for (auto& e : data.eigenvalues) e = detail::read_double(is);
  const auto nvec = detail::read_field<std::size_t>(is, "eigenvectors");
  if (nvec != 0 && nvec != count)
    throw PreconditionError("spectrum file: eigenvector count mismatch");
  for (std::size_t k = 0; k < nvec; ++k) {
    std::size_t center = 0, first = 0, len = 0;
    if (!(is >> center >> first >> len) || first + len > size || center >= size)
      throw PreconditionError("spectrum file: bad eigenvector record");
    LocalizedVector v;
    v.size = size;
    v.first = first;
    v.values.resize(len);
    for (auto& x : v.values) x = detail::read_double(is);
    data.centers.push_back(center);
    data.eigenvectors.push_back(std::move(v));
  }
  if (!(is >> tag) || tag != "end") throw PreconditionError("spectrum file: missing 'end'");
  return data;
}

/// Cache directory: explicit argument, else $LPIDS_CACHE_DIR, else none.
inline std::optional<std::filesystem::path> cache_directory(
    const std::string& explicit_dir = {}) {
  if (!explicit_dir.empty()) return std::filesystem::path(explicit_dir);
  if (const char* env = std::getenv("LPIDS_CACHE_DIR"); env && *env)
    return std::filesystem::path(env);
  return std::nullopt;
}

inline std::optional<SpectralData> load_cached(const std::filesystem::path& dir,
                                               const SpectrumKey& key) {
  const auto path = dir / key.filename();
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    return read_spectrum(in, key);
  } catch (const PreconditionError& e) {
    warn("ignoring unreadable cache file " + path.string() + ": " + e.what());
    return std::nullopt;
  }
}

/// Writes through a temporary file and renames it into place.
inline void store_cached(const std::filesystem::path& dir, const SpectrumKey& key,
                         const SpectralData& data) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const auto path = dir / key.filename();
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) {
      warn("cannot write cache file " + tmp.string());
      return;
    }
    write_spectrum(out, key, data);
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) warn("cannot move cache file into place: " + ec.message());
}

}  // namespace lpids
