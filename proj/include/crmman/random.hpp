#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace crmman {

using Rng = std::mt19937_64;

/// Mixes a root seed with a stream tag and index into an independent
/// sub-seed. Every random draw in the library goes through this so one
/// root seed determines a whole run.
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag,
                          std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t root, std::string_view tag,
                    std::uint64_t index = 0) {
  return Rng(derive_seed(root, tag, index));
}

/// FNV-1a, 64 bit.
std::uint64_t fnv1a(std::string_view text);

/// Uniform double in [0, 1) from 53 random bits. Used instead of
/// std::uniform_real_distribution so draws do not depend on the standard
/// library implementation.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n) by rejection sampling.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

/// Standard normal via Box-Muller.
double standard_normal(Rng& rng);

}  // namespace crmman
