#pragma once

#include <cmath>
#include <cstdint>

namespace calidrop {

namespace detail {
// splitmix64 finalizer; full-avalanche 64-bit mix.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
}  // namespace detail

// Counter-based stream: the state is fully determined by (master_seed, stream_id),
// so the same pair reproduces the same sequence on any platform, and distinct
// stream ids give statistically independent sequences. Only integer arithmetic
// and exact binary-to-double conversion are used; no libc distribution objects.
class RngStream {
  public:
    RngStream(std::uint64_t master_seed, std::uint64_t stream_id)
        : state_(detail::mix64(detail::mix64(master_seed) ^ stream_id)) {
        // Two warm-up mixes decorrelate nearby (seed, id) pairs.
        state_ = detail::mix64(state_ ^ 0xd6e8feb86659fd93ULL);
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random mantissa bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p_true) { return uniform() < p_true; }

    // Unbiased integer in [0, n) by rejection.
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) return 0;
        std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller; one value per call (the sine branch is
    // discarded so the draw count per call is fixed).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

  private:
    std::uint64_t state_;
};

// Stream-id composition so that (site, purpose, index) tuples never collide:
// purpose separates mask draws, init draws, shuffles etc.
inline std::uint64_t stream_id(std::uint64_t purpose, std::uint64_t site, std::uint64_t index) {
    return detail::mix64((purpose << 56) ^ (site << 32) ^ index);
}

namespace stream_purpose {
constexpr std::uint64_t kInit = 1;
constexpr std::uint64_t kMaskTrain = 2;
constexpr std::uint64_t kMaskMc = 3;
constexpr std::uint64_t kShuffle = 4;
constexpr std::uint64_t kAugment = 5;
constexpr std::uint64_t kBootstrap = 6;
constexpr std::uint64_t kSynthetic = 7;
constexpr std::uint64_t kSplit = 8;
constexpr std::uint64_t kAcquire = 9;
constexpr std::uint64_t kGate = 10;
}  // namespace stream_purpose

}  // namespace calidrop
