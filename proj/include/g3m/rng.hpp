// Deterministic, splittable random number generation.
//
// Every dataset draws from its own xoshiro256++ stream derived from
// (master seed, stream index) through a splitmix64 chain, so parallel
// generation is order-independent and a rerun of the same config is
// bit-identical. The normal sampler is our own Box-Muller rather than
// std::normal_distribution, whose output is implementation-defined.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>

namespace g3m {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64(sm);
  }

  // Seed of the independent stream for (master seed, index); recorded in
  // dataset manifests.
  static std::uint64_t derive_stream_seed(std::uint64_t master_seed,
                                          std::uint64_t index) {
    std::uint64_t sm = master_seed;
    splitmix64(sm);  // decorrelate master from stream 0
    sm ^= 0xD1B54A32D192ED03ULL * (index + 1);
    return splitmix64(sm);
  }

  // Independent stream for (master seed, index); one stream per dataset.
  static Rng stream(std::uint64_t master_seed, std::uint64_t index) {
    return Rng(derive_stream_seed(master_seed, index));
  }

  // xoshiro256++
  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, bound).
  std::uint64_t next_below(std::uint64_t bound) { return next_u64() % bound; }

  // Standard normal via Box-Muller; the spare value is cached.
  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1] keeps the log finite
    const double u1 =
        (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Row-major fill order (fixed so files and tests are reproducible).
  Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) {
        m(i, j) = next_gaussian();
      }
    }
    return m;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4] = {};
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace g3m
