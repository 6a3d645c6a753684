#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace fedheads {

// Deterministic sampling on top of mt19937_64. std::*_distribution output is
// implementation-defined, so every draw here is done by hand; runs reproduce
// bit-for-bit across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // uniform in [0, n), rejection-sampled, no modulo bias
  std::uint64_t bounded(std::uint64_t n);
  // uniform in [0, 1) with 53 random bits
  double uniform();
  double normal(double mean = 0.0, double stddev = 1.0);
  // Marsaglia-Tsang; shape > 0, unit scale
  double gamma(double shape);
  std::vector<double> dirichlet(const std::vector<double>& alpha);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[bounded(i)]);
    }
  }

  // k distinct indices from [0, n), in draw order
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Stable stream derivation so that clients, rounds, and subsystems draw from
// independent deterministic streams of one master seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t a = 0,
                          std::uint64_t b = 0);

namespace seed_stream {
inline constexpr std::uint64_t kBackbone = 1;
inline constexpr std::uint64_t kAdapter = 2;
inline constexpr std::uint64_t kTrainData = 3;
inline constexpr std::uint64_t kValData = 4;
inline constexpr std::uint64_t kPartition = 5;
inline constexpr std::uint64_t kSelect = 6;
inline constexpr std::uint64_t kShuffle = 7;
inline constexpr std::uint64_t kMask = 8;
}  // namespace seed_stream

}  // namespace fedheads
