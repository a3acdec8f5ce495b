#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace audio_audit {

/// 64-bit FNV-1a. Stable across platforms, used for stream derivation and
/// provenance hashes (not for security).
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

/// Seed for an independent stream keyed by (seed, key).
std::uint64_t derive_stream(std::uint64_t seed, std::string_view key) noexcept;

/// Seeded generator with platform-independent draws: every value is derived
/// from raw std::mt19937_64 bits, never from std:: distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n); n > 0. Unbiased (rejection).
    std::uint64_t below(std::uint64_t n);

    /// Standard normal via Box-Muller.
    double normal();

private:
    std::mt19937_64 engine_;
};

}  // namespace audio_audit
