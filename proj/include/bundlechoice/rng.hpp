#ifndef BUNDLECHOICE_RNG_HPP
#define BUNDLECHOICE_RNG_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace bundlechoice {

/// Philox4x32-10 block function (Salmon et al., Random123). Pure: maps a
/// 128-bit counter and a 64-bit key to 128 random bits.
inline std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                                  std::array<std::uint32_t, 2> key) noexcept {
    constexpr std::uint32_t m0 = 0xD2511F53u;
    constexpr std::uint32_t m1 = 0xCD9E8D57u;
    constexpr std::uint32_t w0 = 0x9E3779B9u;
    constexpr std::uint32_t w1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += w0;
            key[1] += w1;
        }
        const std::uint64_t p0 = std::uint64_t{m0} * ctr[0];
        const std::uint64_t p1 = std::uint64_t{m1} * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

/// Counter-based random stream. The 128-bit counter is laid out as
/// (block, sub_a, sub_b, stream_id); `substream(a, b)` selects a disjoint
/// region of counter space, so draws for (sweep, individual) pairs do not
/// depend on which worker thread produces them.
///
/// Satisfies UniformRandomBitGenerator.
class RngStream {
public:
    using result_type = std::uint64_t;

    RngStream() = default;
    RngStream(std::uint64_t seed, std::uint32_t stream_id) noexcept
        : seed_{seed}, stream_id_{stream_id} {}

    [[nodiscard]] RngStream substream(std::uint32_t a, std::uint32_t b) const noexcept {
        RngStream s{seed_, stream_id_};
        s.sub_a_ = a;
        s.sub_b_ = b;
        return s;
    }

    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
    [[nodiscard]] std::uint32_t stream_id() const noexcept { return stream_id_; }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept { return next_u64(); }

    std::uint64_t next_u64() noexcept {
        if (pos_ == 2) refill();
        return buffer_[pos_++];
    }

    /// Uniform on the open interval (0, 1) with 53 bits of resolution.
    double uniform() noexcept {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; the second variate of each pair is cached.
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    /// Exponential(1).
    double exponential() noexcept { return -std::log(uniform()); }

    /// Uniform integer in [lo, hi], by rejection so every value is equally likely.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) noexcept {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1u;
        if (span == 0) return static_cast<std::int64_t>(next_u64());
        const std::uint64_t limit = max() - max() % span;
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return lo + static_cast<std::int64_t>(x % span);
    }

private:
    void refill() noexcept {
        const std::array<std::uint32_t, 4> ctr{block_, sub_a_, sub_b_, stream_id_};
        const std::array<std::uint32_t, 2> key{static_cast<std::uint32_t>(seed_),
                                               static_cast<std::uint32_t>(seed_ >> 32)};
        const auto out = philox4x32_10(ctr, key);
        buffer_[0] = (std::uint64_t{out[0]} << 32) | out[1];
        buffer_[1] = (std::uint64_t{out[2]} << 32) | out[3];
        ++block_;
        pos_ = 0;
    }

    std::uint64_t seed_ = 0;
    std::uint32_t stream_id_ = 0;
    std::uint32_t sub_a_ = 0;
    std::uint32_t sub_b_ = 0;
    std::uint32_t block_ = 0;
    std::array<std::uint64_t, 2> buffer_{};
    int pos_ = 2;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Named stream identifiers. Trial-level streams add the trial index.
namespace streams {
inline constexpr std::uint32_t dgp = 0x01000000u;
inline constexpr std::uint32_t chain = 0x02000000u;
inline constexpr std::uint32_t predict = 0x03000000u;
inline constexpr std::uint32_t truth = 0x04000000u;
inline constexpr std::uint32_t test = 0x7F000000u;

[[nodiscard]] constexpr std::uint32_t for_trial(std::uint32_t base, std::uint32_t trial) noexcept {
    return base + (trial & 0x00FFFFFFu);
}
} // namespace streams

} // namespace bundlechoice

#endif // BUNDLECHOICE_RNG_HPP
