#pragma once

#include <cstdint>
#include <random>

namespace msq {

// Deterministic random stream keyed by (seed, stream_id).
//
// Uniform, normal and exponential variates are produced by explicit
// transforms of the raw 64-bit engine output instead of <random>
// distributions, whose algorithms are implementation-defined. Draw
// sequences are therefore identical across standard libraries.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id);

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }

    std::uint64_t next_u64() { return engine_(); }
    // Uniform on the open interval (0, 1) with 53 bits of resolution.
    double uniform();
    // Standard normal via the Marsaglia polar method.
    double normal();
    // Standard exponential.
    double exponential();

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::mt19937_64 engine_;
    double cached_normal_ = 0.0;
    bool has_cached_ = false;
};

// Mixes two 64-bit keys into one (splitmix64 finalizer). Used to derive
// per-replication seeds and reserved stream ids.
std::uint64_t mix64(std::uint64_t a, std::uint64_t b);

// Reserved stream ids for internal Monte Carlo tasks. Replicate r of the
// simulated statistic uses stream id r, so these live far above any
// realistic replicate count.
namespace streams {
inline constexpr std::uint64_t eta = 0xE7A0000000000001ULL;
inline constexpr std::uint64_t restarts = 0xE7A0000000000002ULL;
inline constexpr std::uint64_t folds = 0xE7A0000000000003ULL;
inline constexpr std::uint64_t risk_marginal = 0xE7A0000000000004ULL;
inline constexpr std::uint64_t risk_joint = 0xE7A0000000000005ULL;
inline constexpr std::uint64_t data = 0xE7A0000000000006ULL;
}  // namespace streams

}  // namespace msq
