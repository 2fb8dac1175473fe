#pragma once
// Counter-based random numbers.
//
// Everything in this library that needs randomness derives it from a
// (key, counter) pair through philox4x32-10.  There is no mutable engine
// state to share or seed: a draw is a pure function of its key, so values
// are reproducible bit-for-bit regardless of evaluation order or thread
// scheduling.  splitmix64 is used to fold seeds/coordinates into keys.

#include <cmath>
#include <cstdint>

namespace pam {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Mix two words into one; order-sensitive, used to build hierarchical keys.
inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ (splitmix64(b) + 0x9e3779b97f4a7c15ULL));
}

struct Philox4x32 {
    // One block of philox4x32-10: counter (c0..c3), key (k0,k1) -> 4x32 bits.
    std::uint32_t x0, x1, x2, x3;

    Philox4x32(std::uint64_t ctr_lo, std::uint64_t ctr_hi, std::uint64_t key) {
        std::uint32_t c0 = static_cast<std::uint32_t>(ctr_lo);
        std::uint32_t c1 = static_cast<std::uint32_t>(ctr_lo >> 32);
        std::uint32_t c2 = static_cast<std::uint32_t>(ctr_hi);
        std::uint32_t c3 = static_cast<std::uint32_t>(ctr_hi >> 32);
        std::uint32_t k0 = static_cast<std::uint32_t>(key);
        std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
        for (int round = 0; round < 10; ++round) {
            std::uint64_t p0 = 0xD2511F53ULL * c0;
            std::uint64_t p1 = 0xCD9E8D57ULL * c2;
            std::uint32_t h0 = static_cast<std::uint32_t>(p0 >> 32);
            std::uint32_t l0 = static_cast<std::uint32_t>(p0);
            std::uint32_t h1 = static_cast<std::uint32_t>(p1 >> 32);
            std::uint32_t l1 = static_cast<std::uint32_t>(p1);
            std::uint32_t n0 = h1 ^ c1 ^ k0;
            std::uint32_t n1 = l1;
            std::uint32_t n2 = h0 ^ c3 ^ k1;
            std::uint32_t n3 = l0;
            c0 = n0; c1 = n1; c2 = n2; c3 = n3;
            k0 += 0x9E3779B9u;
            k1 += 0xBB67AE85u;
        }
        x0 = c0; x1 = c1; x2 = c2; x3 = c3;
    }

    std::uint64_t lo() const { return (static_cast<std::uint64_t>(x1) << 32) | x0; }
    std::uint64_t hi() const { return (static_cast<std::uint64_t>(x3) << 32) | x2; }
};

// Uniform in (0,1): 53 mantissa bits, offset half an ulp so 0 is excluded.
inline double u01(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

// One standard normal from (key, counter) via Box-Muller (exact transform,
// no rational approximation; bit-stable across platforms with IEEE doubles).
inline double keyed_normal(std::uint64_t key, std::uint64_t ctr_lo, std::uint64_t ctr_hi = 0) {
    Philox4x32 blk(ctr_lo, ctr_hi, key);
    double u1 = u01(blk.lo());
    double u2 = u01(blk.hi());
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

inline double keyed_u01(std::uint64_t key, std::uint64_t ctr_lo, std::uint64_t ctr_hi = 0) {
    return u01(Philox4x32(ctr_lo, ctr_hi, key).lo());
}

// Sequential stream for consumers that just need an ordinary generator
// (walk sampling etc.).  Deterministic given the key; cheap to construct.
class RngStream {
public:
    explicit RngStream(std::uint64_t key) : key_(key), ctr_(0) {}

    std::uint64_t next_u64() { return Philox4x32(ctr_++, 0, key_).lo(); }
    double next_u01() { return u01(next_u64()); }
    double next_normal() {
        Philox4x32 blk(ctr_++, 0, key_);
        return std::sqrt(-2.0 * std::log(u01(blk.lo()))) *
               std::cos(6.283185307179586476925286766559 * u01(blk.hi()));
    }
    // Exponential with given rate (mean 1/rate).
    double next_exponential(double rate) { return -std::log(next_u01()) / rate; }
    // Uniform integer in [0, n).
    std::uint32_t next_below(std::uint32_t n) {
        return static_cast<std::uint32_t>(next_u64() % n);
    }

private:
    std::uint64_t key_;
    std::uint64_t ctr_;
};

// Seed derivation for replicas/purposes: deterministic, collision-resistant
// enough for simulation work, independent of thread scheduling.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t purpose, std::uint64_t index) {
    return mix64(mix64(master, purpose), index);
}

} // namespace pam
