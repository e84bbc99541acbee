#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace artinv {

// Error hierarchy. The CLI maps these onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid sizes, rates or other arguments.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Corrupt or inconsistent on-disk data.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf or divergence during computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An upstream pipeline artifact does not exist yet.
class MissingArtifactError : public Error {
 public:
  using Error::Error;
};

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using MatD = Mat<double>;
using MatF = Mat<float>;

inline constexpr double kPi = 3.14159265358979323846;

inline constexpr int kNumArticulators = 12;
inline constexpr std::string_view kArticulatorNames[kNumArticulators] = {
    "ULx", "ULy", "LLx", "LLy", "Jawx", "Jawy", "TTx", "TTy", "TBx", "TBy", "TDx", "TDy"};

// SplitMix64 finalizer; used to derive independent streams from tuples of ids.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed) { return mix64(seed); }

template <class... Rest>
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t next, Rest... rest) {
  return derive_seed(mix64(seed) ^ next, static_cast<std::uint64_t>(rest)...);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

template <class... Ids>
Rng make_rng(std::uint64_t seed, Ids... ids) {
  return Rng(derive_seed(seed, static_cast<std::uint64_t>(ids)...));
}

// Uniform in [lo, hi). std::uniform_real_distribution output differs across
// standard libraries; this keeps generated data identical everywhere.
inline double uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

// Box-Muller, one value per call.
inline double gaussian(Rng& rng) {
  double u1 = uniform(rng);
  while (u1 <= 0.0) u1 = uniform(rng);
  const double u2 = uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <class Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace artinv
