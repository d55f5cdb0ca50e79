#pragma once

#include <cstdint>
#include <random>

namespace dapair {

/// Sub-streams split off a run's master seed. Each consumer owns one, so changing
/// how often one component draws never perturbs another.
enum class Stream : std::uint64_t {
  data = 1,
  init = 2,
  batching = 3,
  da = 4,
  mixup = 5,
};

/// SplitMix64 finalizer; used to derive independent seeds from (seed, stream).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Deterministic generator: std::mt19937_64 seeded through mix_seed. Uniform
/// doubles use the top 53 bits of one draw, normals use Box-Muller, so the
/// sequences are reproducible wherever mt19937_64 is.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);
  Rng(std::uint64_t seed, Stream stream) : Rng(seed, static_cast<std::uint64_t>(stream)) {}

  /// Uniform on [0, 1).
  double uniform();
  /// Standard normal.
  double normal();
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  /// Beta(a, b) as X / (X + Y) with X ~ Gamma(a), Y ~ Gamma(b).
  double beta(double a, double b);

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dapair
