#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <random>

#include <Eigen/Core>

namespace regretlab {

// Philox4x32-10 block function (Salmon et al., Random123).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

// Counter-based generator keyed by a 64-bit seed and a 64-bit stream id.
// Satisfies UniformRandomBitGenerator; the n-th output depends only on
// (seed, stream, n).
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }
  result_type operator()();

  double uniform();
  double normal();
  Eigen::VectorXd normal_vector(Eigen::Index n, double stddev = 1.0);
  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols,
                                double stddev = 1.0);
  bool bernoulli(double p);
  std::uint64_t uniform_index(std::uint64_t n);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

// seed_i = base XOR i, the trial-seed rule used by the experiment runner.
inline std::uint64_t trial_seed(std::uint64_t base, std::uint64_t index) {
  return base ^ index;
}

}  // namespace regretlab
