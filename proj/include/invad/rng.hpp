#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>

namespace invad {

/// Counter-based generator: Philox4x32-10 (Salmon et al., SC'11).
///
/// key      = (seed lo32, seed hi32)
/// counter  = (block lo32, block hi32, stream lo32, stream hi32)
///
/// Each block yields four 32-bit words, consumed in order as two 64-bit
/// values (word0 | word1 << 32, word2 | word3 << 32). uniform() takes the top
/// 53 bits of a 64-bit value. gaussian() is the Marsaglia polar method on
/// uniform() pairs mapped to (-1, 1); the second variate of an accepted pair
/// is cached and returned by the next call.
///
/// The output stream is a pure function of (seed, stream_id), so independent
/// work items take independent streams instead of sharing one generator.
class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t stream_id) : seed_(seed), stream_(stream_id) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_; }
    std::uint64_t counter() const noexcept { return counter_; }

    std::uint64_t next_u64();
    double uniform();                      // [0, 1)
    double uniform(double lo, double hi);  // [lo, hi)
    std::uint64_t below(std::uint64_t n);  // [0, n), unbiased
    double gaussian();

    static std::array<std::uint32_t, 4> philox_block(std::uint64_t seed, std::uint64_t block,
                                                     std::uint64_t stream);

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
    std::array<std::uint64_t, 2> buffer_{};
    int buffered_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Mixes tags into a 64-bit stream id (splitmix64 finalizer chain).
std::uint64_t derive_stream(std::initializer_list<std::uint64_t> tags);

}  // namespace invad
