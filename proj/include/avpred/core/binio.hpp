#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "avpred/core/error.hpp"

namespace avpred::io {

namespace detail {
template <typename U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    U r = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) r = (r << 8) | ((v >> (8 * i)) & 0xff);
    return r;
  }
  return v;
}

template <typename F>
using UintOf = std::conditional_t<sizeof(F) == 4, std::uint32_t, std::uint64_t>;
}  // namespace detail

/// Writes `values` converted to F (float or double), little-endian, row-major.
template <typename F>
void write_raw(const std::filesystem::path& path, std::span<const double> values) {
  std::vector<char> bytes(values.size() * sizeof(F));
  for (std::size_t i = 0; i < values.size(); ++i) {
    const F f = static_cast<F>(values[i]);
    auto u = detail::to_little(std::bit_cast<detail::UintOf<F>>(f));
    std::memcpy(bytes.data() + i * sizeof(F), &u, sizeof(F));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw FormatError("write failed: " + path.string());
}

/// Reads exactly `count` F values; the file size must match.
template <typename F>
std::vector<double> read_raw(const std::filesystem::path& path, std::size_t count) {
  if (!std::filesystem::exists(path)) throw FormatError("missing file: " + path.string());
  const auto size = std::filesystem::file_size(path);
  if (size != count * sizeof(F))
    throw FormatError("byte-length mismatch in " + path.string() + ": expected " +
                      std::to_string(count * sizeof(F)) + ", found " + std::to_string(size));
  std::vector<char> bytes(size);
  std::ifstream in(path, std::ios::binary);
  in.read(bytes.data(), std::streamsize(size));
  if (!in) throw FormatError("read failed: " + path.string());
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    detail::UintOf<F> u;
    std::memcpy(&u, bytes.data() + i * sizeof(F), sizeof(F));
    out[i] = static_cast<double>(std::bit_cast<F>(detail::to_little(u)));
  }
  return out;
}

inline std::string read_text(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw FormatError("missing file: " + path.string());
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
}

}  // namespace avpred::io
