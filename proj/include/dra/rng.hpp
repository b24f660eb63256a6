#ifndef DRA_RNG_HPP
#define DRA_RNG_HPP

#include <cstdint>

namespace dra {

// Normal quantile function, Wichura's AS 241 (PPND16), double precision.
double inverse_normal_cdf(double p);

// Counter-based generator: Philox4x32-10 (Salmon et al., "Parallel random
// numbers: as easy as 1, 2, 3").  A generator is addressed by a 64-bit seed
// (the Philox key) and a 64-bit stream id placed in the upper half of the
// 128-bit counter; the lower half counts blocks.  Draws therefore depend only
// on (seed, stream, draw index), never on thread scheduling, which is what
// makes serial and parallel simulation runs bit-identical.
//
// Stream ids are namespaced via make_stream(purpose, index) so that e.g. the
// allocation shuffle, per-run noise, truth-sample draws and bootstrap
// resamples can never collide.
class Philox {
public:
    Philox(std::uint64_t seed, std::uint64_t stream)
        : key0_(static_cast<std::uint32_t>(seed)),
          key1_(static_cast<std::uint32_t>(seed >> 32)),
          stream_(stream) {}

    std::uint64_t next_u64();

    // Uniform on [0,1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal via the inverse CDF. The uniform argument is kept
    // strictly inside (0,1).
    double normal() {
        double u = (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
        return inverse_normal_cdf(u);
    }

private:
    std::uint32_t key0_, key1_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    std::uint64_t cached_ = 0;
    bool has_cached_ = false;
};

enum class StreamPurpose : std::uint64_t {
    allocation = 0,
    subject_noise = 1,
    truth = 2,
    dataset = 3,
    bootstrap = 4,
};

inline std::uint64_t make_stream(StreamPurpose purpose, std::uint64_t index) {
    return (static_cast<std::uint64_t>(purpose) << 32) | (index & 0xffffffffULL);
}

}  // namespace dra

#endif
