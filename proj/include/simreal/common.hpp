#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace simreal {

using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Rng = std::mt19937_64;

// Error hierarchy. Every failure surfaced to callers derives from Error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};
class IoError : public Error {
 public:
  using Error::Error;
};
class FormatError : public Error {
 public:
  using Error::Error;
};
class VersionError : public Error {
 public:
  using Error::Error;
};
class TruncatedError : public Error {
 public:
  using Error::Error;
};
class ContractError : public Error {
 public:
  using Error::Error;
};
class SamplingError : public Error {
 public:
  using Error::Error;
};
class DivergenceError : public Error {
 public:
  using Error::Error;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view bytes);

// Seed splitting: seed xor a stable tag hash, or seed mixed with an index,
// finalized through splitmix64.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

// Runs fn(i) for i in [0, n). Work items must write to disjoint outputs;
// results are then independent of the thread count.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

// Keeps freed heap memory mapped. Training frees and reallocates megabytes of
// activations every step; with default glibc trimming each step page-faults
// them back in. Call once at program start; a no-op off glibc.
void retain_heap_memory();

}  // namespace simreal
