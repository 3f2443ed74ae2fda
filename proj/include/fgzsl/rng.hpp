#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "fgzsl/tensor.hpp"

namespace fgzsl {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed of the named sub-stream `name` (optionally indexed, e.g. by class id)
// under a run seed. FNV-1a keeps the mapping stable across standard libraries.
inline std::uint64_t stream_seed(std::uint64_t seed, std::string_view name, std::uint64_t index = 0) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(seed ^ h) + index);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0)
      : engine_(stream_seed(seed, stream, index)) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  // Uniform integer in [0, n).
  std::size_t below(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

  template <typename T>
  Tensor<T> normal_matrix(std::size_t rows, std::size_t cols, double stddev = 1.0) {
    Tensor<T> t = Tensor<T>::matrix(rows, cols);
    for (auto& v : t.values()) v = static_cast<T>(stddev * normal());
    return t;
  }

  template <typename T>
  Tensor<T> uniform_matrix(std::size_t rows, std::size_t cols) {
    Tensor<T> t = Tensor<T>::matrix(rows, cols);
    for (auto& v : t.values()) v = static_cast<T>(uniform());
    return t;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace fgzsl
