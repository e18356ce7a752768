#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace biasforge {

using Rng = std::mt19937_64;

// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

// Stable per-stage seed: mix64(master ^ fnv1a64(stage)).
std::uint64_t derive_seed(std::uint64_t master, std::string_view stage) noexcept;

std::string rng_state(const Rng& rng);
void restore_rng_state(Rng& rng, const std::string& state);

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }
inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}
inline double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

}  // namespace biasforge
