#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace contregime {

/// What a draw is used for. Part of the counter, so every role gets an
/// independent stream at each (subject, grid index).
enum class DrawRole : std::uint32_t {
  baseline = 0,
  treatment = 1,
  transition = 2,
  censoring = 3,
  terminal = 4,
  regime = 5,
};

/// Uniform and standard-normal variates from one counter block. Treatment
/// laws sample by inverse transform from these, so regimes that transform the
/// natural draw reuse exactly the observed-world randomness.
struct TreatmentDraw {
  double u = 0.5;
  double z = 0.0;
};

/// Philox4x32-10 keyed by the seed; the counter is
/// (subject low, subject high, grid index, role). Stateless, so results do
/// not depend on how subjects are scheduled across threads.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  std::array<std::uint32_t, 4> block(std::uint64_t subject, std::uint32_t index,
                                     DrawRole role) const noexcept {
    std::array<std::uint32_t, 4> ctr{static_cast<std::uint32_t>(subject),
                                     static_cast<std::uint32_t>(subject >> 32), index,
                                     static_cast<std::uint32_t>(role)};
    std::array<std::uint32_t, 2> key = key_;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    return ctr;
  }

  /// Two uniforms in the open interval (0, 1), 53-bit resolution each.
  std::array<double, 2> uniforms(std::uint64_t subject, std::uint32_t index,
                                 DrawRole role) const noexcept {
    const auto b = block(subject, index, role);
    const std::uint64_t x = (std::uint64_t{b[0]} << 32) | b[1];
    const std::uint64_t y = (std::uint64_t{b[2]} << 32) | b[3];
    return {to_open_unit(x), to_open_unit(y)};
  }

  double uniform(std::uint64_t subject, std::uint32_t index, DrawRole role) const noexcept {
    return uniforms(subject, index, role)[0];
  }

  /// Box-Muller on the block's two uniforms; u is the first of them.
  TreatmentDraw draw(std::uint64_t subject, std::uint32_t index, DrawRole role) const noexcept {
    const auto [u1, u2] = uniforms(subject, index, role);
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    return {u1, z};
  }

  double normal(std::uint64_t subject, std::uint32_t index, DrawRole role) const noexcept {
    return draw(subject, index, role).z;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static double to_open_unit(std::uint64_t x) noexcept {
    return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
  }

  std::array<std::uint32_t, 2> key_;
};

/// SplitMix64 finalizer over (seed, stream): independent seeds for
/// replications and oracle runs.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace contregime
