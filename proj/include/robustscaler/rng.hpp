#pragma once

// Counter-based random numbers (Philox4x32-10, Salmon et al. 2011).
//
// Every draw is a pure function of (seed, domain, a, b): a sampler that
// needs the uniform for row r and index i asks for exactly that counter.
// Changing the number of rows or columns therefore never perturbs other
// draws, and independent rows can be generated in any order.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace robustscaler::rng {

using Block = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

namespace detail {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

constexpr Block round(const Block& ctr, const Key& key) {
    const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    return {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
}

}  // namespace detail

/// One Philox4x32 block with 10 rounds.
constexpr Block philox4x32(Block ctr, Key key) {
    for (int r = 0; r < 10; ++r) {
        if (r > 0) {
            key[0] += detail::kWeyl0;
            key[1] += detail::kWeyl1;
        }
        ctr = detail::round(ctr, key);
    }
    return ctr;
}

/// SplitMix64 finalizer; used to fold structured ids into seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
    return mix64(seed ^ mix64(tag));
}

/// Maps 64 random bits onto the open interval (0, 1).
constexpr double to_open_unit(std::uint64_t bits) {
    return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

/// Stream domains keep unrelated consumers of one seed apart.
enum class Domain : std::uint32_t {
    trace_arrivals = 1,
    trace_processing = 2,
    sample_arrivals = 3,
    sample_pending = 4,
    sim_pending = 5,
    sim_processing = 6,
    kappa = 7,
    perturb = 8,
    generic = 9,
};

/// A keyed, stateless source of uniforms addressed by (domain, a, b).
class CounterStream {
public:
    constexpr explicit CounterStream(std::uint64_t seed)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

    /// Two independent uniforms in (0, 1) for the address (domain, a, b).
    /// `b` must fit in 48 bits.
    std::array<double, 2> uniform2(Domain domain, std::uint64_t a, std::uint64_t b) const {
        const Block ctr{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                        static_cast<std::uint32_t>(b),
                        (static_cast<std::uint32_t>(domain) << 16) ^
                            static_cast<std::uint32_t>((b >> 32) & 0xFFFFu)};
        const Block out = philox4x32(ctr, key_);
        const std::uint64_t u0 = (std::uint64_t{out[0]} << 32) | out[1];
        const std::uint64_t u1 = (std::uint64_t{out[2]} << 32) | out[3];
        return {to_open_unit(u0), to_open_unit(u1)};
    }

    double uniform(Domain domain, std::uint64_t a, std::uint64_t b) const {
        return uniform2(domain, a, b)[0];
    }

    /// Unit-rate exponential.
    double exponential(Domain domain, std::uint64_t a, std::uint64_t b) const {
        return -std::log(uniform(domain, a, b));
    }

private:
    Key key_;
};

/// Sequential engine over a counter stream; satisfies
/// UniformRandomBitGenerator for use with <algorithm> shuffles.
class PhiloxEngine {
public:
    using result_type = std::uint64_t;

    PhiloxEngine(std::uint64_t seed, std::uint64_t stream)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_(stream) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        if (cached_ == 0) {
            const Block ctr{static_cast<std::uint32_t>(counter_),
                            static_cast<std::uint32_t>(counter_ >> 32),
                            static_cast<std::uint32_t>(stream_),
                            static_cast<std::uint32_t>(stream_ >> 32)};
            block_ = philox4x32(ctr, key_);
            ++counter_;
            cached_ = 2;
        }
        --cached_;
        const std::size_t o = cached_ == 1 ? 0 : 2;
        return (std::uint64_t{block_[o]} << 32) | block_[o + 1];
    }

    double uniform() { return to_open_unit((*this)()); }

private:
    Key key_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
    Block block_{};
    int cached_ = 0;
};

}  // namespace robustscaler::rng
