#pragma once

// "AIV1" little-endian float containers shared by the corpus, feature and
// embedding caches.
//
//   waveform: "AIV1" | u32 rate | u64 length | f32[length]
//   matrix:   "AIV1" | u32 rate | u64 frames | u32 dims | f32[frames*dims] (row-major)

#include "artinv/common.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <vector>

namespace artinv::binio {

namespace fs = std::filesystem;

inline constexpr std::array<char, 4> kMagic = {'A', 'I', 'V', '1'};

namespace detail {

template <class T>
T byteswap_if_needed(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
}

template <class T>
void put(std::ostream& os, T v) {
  v = byteswap_if_needed(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const fs::path& path, const char* field) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (is.gcount() != static_cast<std::streamsize>(sizeof(T))) {
    throw FormatError(path.string() + ": truncated header field '" + field + "'");
  }
  return byteswap_if_needed(v);
}

inline void put_floats(std::ostream& os, const float* data, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
  } else {
    for (std::size_t i = 0; i < n; ++i) put(os, data[i]);
  }
}

inline void get_floats(std::istream& is, float* data, std::size_t n, const fs::path& path) {
  is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
  if (is.gcount() != static_cast<std::streamsize>(n * sizeof(float))) {
    throw FormatError(path.string() + ": truncated payload field 'data' (expected " +
                      std::to_string(n) + " floats)");
  }
  if constexpr (std::endian::native != std::endian::little) {
    for (std::size_t i = 0; i < n; ++i) data[i] = byteswap_if_needed(data[i]);
  }
}

inline std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open for writing: " + path.string());
  return os;
}

inline std::ifstream open_in(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingArtifactError("cannot open: " + path.string());
  return is;
}

inline void check_magic(std::istream& is, const fs::path& path) {
  std::array<char, 4> magic{};
  is.read(magic.data(), 4);
  if (is.gcount() != 4 || magic != kMagic) {
    throw FormatError(path.string() + ": bad header field 'magic' (expected AIV1)");
  }
}

inline void check_end(std::istream& is, const fs::path& path) {
  if (is.peek() != std::char_traits<char>::eof()) {
    throw FormatError(path.string() + ": trailing bytes after field 'data'");
  }
}

}  // namespace detail

struct Waveform {
  std::uint32_t rate = 0;
  std::vector<float> samples;
};

struct FloatMatrix {
  std::uint32_t rate = 0;
  MatF data;
};

inline void write_waveform(const fs::path& path, std::uint32_t rate, std::span<const float> samples) {
  auto os = detail::open_out(path);
  os.write(kMagic.data(), 4);
  detail::put<std::uint32_t>(os, rate);
  detail::put<std::uint64_t>(os, samples.size());
  detail::put_floats(os, samples.data(), samples.size());
  if (!os) throw Error("write failed: " + path.string());
}

inline Waveform read_waveform(const fs::path& path) {
  auto is = detail::open_in(path);
  detail::check_magic(is, path);
  Waveform w;
  w.rate = detail::get<std::uint32_t>(is, path, "rate");
  const auto n = detail::get<std::uint64_t>(is, path, "length");
  if (n > (std::uint64_t{1} << 34)) throw FormatError(path.string() + ": implausible field 'length'");
  w.samples.resize(n);
  detail::get_floats(is, w.samples.data(), n, path);
  detail::check_end(is, path);
  return w;
}

inline void write_matrix(const fs::path& path, std::uint32_t rate, const MatF& m) {
  auto os = detail::open_out(path);
  os.write(kMagic.data(), 4);
  detail::put<std::uint32_t>(os, rate);
  detail::put<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(m.cols()));
  detail::put_floats(os, m.data(), static_cast<std::size_t>(m.size()));
  if (!os) throw Error("write failed: " + path.string());
}

/// Reads a matrix file. `expected_dims` of 0 accepts any width.
inline FloatMatrix read_matrix(const fs::path& path, std::uint32_t expected_dims = 0) {
  auto is = detail::open_in(path);
  detail::check_magic(is, path);
  FloatMatrix out;
  out.rate = detail::get<std::uint32_t>(is, path, "rate");
  const auto frames = detail::get<std::uint64_t>(is, path, "frames");
  const auto dims = detail::get<std::uint32_t>(is, path, "dims");
  if (expected_dims != 0 && dims != expected_dims) {
    throw FormatError(path.string() + ": field 'dims' is " + std::to_string(dims) + ", expected " +
                      std::to_string(expected_dims));
  }
  if (dims == 0 || frames > (std::uint64_t{1} << 30)) {
    throw FormatError(path.string() + ": implausible shape in fields 'frames'/'dims'");
  }
  out.data.resize(static_cast<Eigen::Index>(frames), dims);
  detail::get_floats(is, out.data.data(), frames * dims, path);
  detail::check_end(is, path);
  return out;
}

}  // namespace artinv::binio
